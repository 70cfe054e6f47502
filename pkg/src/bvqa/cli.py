"""Command-line orchestration.

Commands: extract | pool | select | train | predict | benchmark | calibrate
| diversity. Options may come from a flat key=value config file (--config);
command-line flags override file keys. Every artifact embeds the config hash
and seed; a timestamp field is excluded from the hash.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import evaluation, learning, media_io, pipeline, pooling
from .errors import BvqaError
from .registry import REGISTRY


def _config_hash(config: dict) -> str:
    clean = {k: v for k, v in config.items() if k != "timestamp"}
    return hashlib.sha256(json.dumps(clean, sort_keys=True).encode()).hexdigest()[:16]


def _load_config_file(path: str) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise BvqaError(f"{path}:{line_no}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _merge_config(args: argparse.Namespace, parser_keys: set) -> dict:
    config = {}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        unknown = set(file_cfg) - parser_keys
        if unknown:
            raise BvqaError(f"unknown config keys: {sorted(unknown)}")
        config.update(file_cfg)
    for key in parser_keys:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _write_json(path: str, payload: dict) -> None:
    payload = dict(payload)
    payload["config_hash"] = _config_hash(payload.get("config", {}))
    payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)


def _read_features_csv(path: str):
    if not os.path.exists(path):
        raise BvqaError(f"feature file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return ids, header[1:], np.array(rows)


def _write_features_csv(path: str, ids, names, matrix) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", *names])
        for vid, row in zip(ids, matrix):
            writer.writerow([vid, *(repr(float(v)) for v in row)])


def _labels_for(manifest: media_io.DatasetManifest, ids) -> np.ndarray:
    by_id = {r.id: r.mos for r in manifest.records}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise BvqaError(f"ids missing from manifest: {missing[:5]}")
    return np.array([by_id[i] for i in ids])


def cmd_extract(config: dict) -> int:
    manifest = media_io.load_manifest(config["manifest"])
    if not manifest.records:
        raise BvqaError("manifest has no records")
    families = tuple(config.get("features", ",".join(pipeline.ALL_FAMILIES)).split(","))
    out_dir = config.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)
    threads = int(config.get("threads", 1))

    def _one(record: media_io.VideoRecord):
        frames = media_io.read_video(record)
        return pipeline.extract_video_features(
            frames, record.fps, families, bt709=manifest.bt709
        )

    results, failures = {}, {}
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool_exec:
        futures = {r.id: pool_exec.submit(_one, r) for r in manifest.records}
        for vid, fut in futures.items():
            try:
                results[vid] = fut.result()
            except (BvqaError, OSError, ValueError) as exc:
                failures[vid] = str(exc)

    if results:
        ids = [r.id for r in manifest.records if r.id in results]
        names = results[ids[0]][0].names
        matrix = np.stack([results[v][0].values for v in ids])
        _write_features_csv(os.path.join(out_dir, "features.csv"), ids, names, matrix)
        if config.get("keep_chunks"):
            chunk_path = os.path.join(out_dir, "chunk_features.csv")
            with open(chunk_path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                chunk_names = results[ids[0]][1][0].names if results[ids[0]][1] else names
                writer.writerow(["video_id", "chunk_idx", *chunk_names])
                for vid in ids:
                    for idx, vec in enumerate(results[vid][1]):
                        writer.writerow([vid, idx, *(repr(float(x)) for x in vec.values)])
    with open(os.path.join(out_dir, "registry.json"), "w", encoding="utf-8") as fh:
        fh.write(REGISTRY.to_json())
    _write_json(
        os.path.join(out_dir, "extract_summary.json"),
        {
            "config": config,
            "n_ok": len(results),
            "n_failed": len(failures),
            "failures": failures,
        },
    )
    for vid, msg in failures.items():
        print(f"FAILED {vid}: {msg}", file=sys.stderr)
    return 0 if not failures else 1


def cmd_pool(config: dict) -> int:
    method = pooling.PoolingMethod.parse(config.get("pooling", "mean"))
    series_by_video: dict[str, list[tuple[int, float]]] = {}
    with open(config["scores"], "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            series_by_video.setdefault(row["video_id"], []).append(
                (int(row["chunk_idx"]), float(row["score"]))
            )
    out = config.get("out", "pooled.csv")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "method", "score"])
        for vid, chunks in series_by_video.items():
            scores = [s for _, s in sorted(chunks)]
            value = pooling.pool(pooling.ScoreSeries(np.array(scores)), method)
            writer.writerow([vid, method.kind, repr(value)])
    return 0


def cmd_select(config: dict) -> int:
    ids, names, X = _read_features_csv(config["features"])
    manifest = media_io.load_manifest(config["manifest"])
    y = _labels_for(manifest, ids)
    seed = int(config["seed"])
    out_dir = config.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)
    method = config.get("select_method", "two_step")
    if method == "two_step":
        k_grid = [int(k) for k in config.get("k_grid", "10,20,40,60").split(",")]
        report = learning.two_step_selection(
            X, y, k_grid, iters1=int(config.get("iters", 10)), seed=seed
        )
    else:
        report = learning.select_features(X, y, method, int(config["k"]), seed=seed)
    with open(os.path.join(out_dir, "selection.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    if report.frequency is not None:
        with open(os.path.join(out_dir, "frequency.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "name", "frequency"])
            for i, count in enumerate(report.frequency):
                writer.writerow([i, names[i], int(count)])
    _write_json(
        os.path.join(out_dir, "select_summary.json"),
        {"config": config, "method": report.method, "k": report.k},
    )
    return 0


def cmd_train(config: dict) -> int:
    ids, _, X = _read_features_csv(config["features"])
    manifest = media_io.load_manifest(config["manifest"])
    y = _labels_for(manifest, ids)
    seed = int(config["seed"])
    kernel = config.get("kernel", "rbf")
    search = learning.grid_search_cv(X, y, seed=seed, kernel=kernel)
    model = learning.svr_train(X, y, kernel=kernel, C=search.c, gamma=search.gamma)
    out = config.get("out", "model.json")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(model.to_json())
    _write_json(
        out + ".meta.json",
        {"config": config, "C": search.c, "gamma": search.gamma, "cv_rmse": search.rmse},
    )
    return 0


def cmd_predict(config: dict) -> int:
    ids, _, X = _read_features_csv(config["features"])
    with open(config["model"], "r", encoding="utf-8") as fh:
        model = learning.SvrModel.from_json(fh.read())
    preds = learning.svr_predict(model, X)
    out = config.get("out", "predictions.csv")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "score"])
        for vid, p in zip(ids, preds):
            writer.writerow([vid, repr(float(p))])
    return 0


def cmd_benchmark(config: dict) -> int:
    ids, _, X = _read_features_csv(config["features"])
    manifest = media_io.load_manifest(config["manifest"])
    y = _labels_for(manifest, ids)
    if X.shape[0] != y.size:
        raise BvqaError("feature/label row mismatch")
    seed = int(config["seed"])
    record = evaluation.evaluate_split_protocol(
        X,
        y,
        kernel=config.get("kernel", "rbf"),
        iters=int(config.get("iters", 100)),
        seed=seed,
    )
    out_dir = config.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)
    _write_json(
        os.path.join(out_dir, "report.json"),
        {"config": config, "metrics": json.loads(record.to_json())},
    )
    with open(os.path.join(out_dir, "table.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "median", "std"])
        for metric in ("srcc", "krcc", "plcc", "rmse"):
            med = record.median[metric]
            std = record.std[metric]
            writer.writerow(
                [metric, "" if med is None else repr(med), "" if std is None else repr(std)]
            )
    return 0


def cmd_calibrate(config: dict) -> int:
    paths = config["datasets"].split(",")
    datasets = []
    for path in paths:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            rows = [(float(r["objective"]), float(r["mos"])) for r in reader]
        datasets.append(([o for o, _ in rows], [m for _, m in rows]))
    anchor = int(config.get("anchor", 0))
    cal = evaluation.inlsa_calibrate(datasets, anchor_index=anchor)
    _write_json(
        config.get("out", "calibration.json"),
        {
            "config": config,
            "anchor": cal.anchor,
            "maps": cal.maps,
            "iterations": cal.iterations,
        },
    )
    return 0


def cmd_diversity(config: dict) -> int:
    datasets = {}
    for path in config["manifest"].split(","):
        manifest = media_io.load_manifest(path)
        videos = [(r.id, media_io.read_video(r)) for r in manifest.records]
        datasets[manifest.name] = videos
    profile = evaluation.diversity_profile(datasets, bins=int(config.get("bins", 10)))
    out = config.get("out", "diversity.json")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(profile.to_json())
    return 0


_COMMANDS = {
    "extract": cmd_extract,
    "pool": cmd_pool,
    "select": cmd_select,
    "train": cmd_train,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "calibrate": cmd_calibrate,
    "diversity": cmd_diversity,
}

_RANDOMIZED = {"select", "train", "benchmark"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bvqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, *opts):
        p = sub.add_parser(name)
        p.add_argument("--config")
        for opt in opts:
            p.add_argument(f"--{opt.replace('_', '-')}", dest=opt)
        return p

    add("extract", "manifest", "features", "out", "threads", "keep_chunks")
    add("pool", "scores", "pooling", "out")
    add("select", "features", "manifest", "select_method", "k", "k_grid", "iters", "seed", "out")
    add("train", "features", "manifest", "kernel", "seed", "out")
    add("predict", "model", "features", "out")
    add("benchmark", "features", "manifest", "kernel", "iters", "seed", "out")
    add("calibrate", "datasets", "anchor", "out")
    add("diversity", "manifest", "bins", "out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    keys = {
        k for k in vars(args) if k not in ("command", "config")
    }
    try:
        config = _merge_config(args, keys)
        if args.command in _RANDOMIZED and "seed" not in config:
            raise BvqaError(f"{args.command} requires an explicit --seed")
        return _COMMANDS[args.command](config)
    except BvqaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
