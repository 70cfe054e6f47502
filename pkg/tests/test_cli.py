import csv
import json
import os

import numpy as np
import pytest

from bvqa import cli
from bvqa.media_io import write_y4m
from synthetic import make_video

MANIFEST_HEADER = "id,path,width,height,fps,pix_fmt,mos,dataset\n"


def build_corpus(tmp_path, n_videos=4, n_frames=30, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_videos):
        level = i / max(n_videos - 1, 1)
        frames = make_video(rng, n_frames=n_frames, blur=2.0 * level, noise=20.0 * level)
        name = f"v{i}.y4m"
        write_y4m(str(tmp_path / name), frames)
        rows.append(f"v{i},{name},64,64,30,y4m,{5.0 - 3.5 * level},dev\n")
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("# mos_scale=1,5\n" + MANIFEST_HEADER + "".join(rows))
    return str(manifest)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("corpus")
    manifest = build_corpus(tmp_path, n_videos=15)
    out = tmp_path / "features"
    code = cli.main(["extract", "--manifest", manifest, "--out", str(out), "--keep-chunks", "1"])
    assert code == 0
    return manifest, str(out)


class TestExtract:
    def test_outputs(self, corpus):
        _, out = corpus
        with open(os.path.join(out, "features.csv")) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "video_id" and len(rows[0]) == 277
        assert len(rows) == 16
        assert os.path.exists(os.path.join(out, "registry.json"))
        summary = json.load(open(os.path.join(out, "extract_summary.json")))
        assert summary["n_ok"] == 15 and summary["n_failed"] == 0
        assert "config_hash" in summary

    def test_chunk_file(self, corpus):
        _, out = corpus
        with open(os.path.join(out, "chunk_features.csv")) as fh:
            header = fh.readline().split(",")
        assert header[:2] == ["video_id", "chunk_idx"]

    def test_failure_isolated(self, tmp_path):
        manifest = tmp_path / "manifest.csv"
        manifest.write_text(
            "# mos_scale=1,5\n" + MANIFEST_HEADER + "v0,missing.y4m,64,64,30,y4m,3,dev\n"
        )
        code = cli.main(["extract", "--manifest", str(manifest), "--out", str(tmp_path / "o")])
        assert code == 1
        summary = json.load(open(tmp_path / "o" / "extract_summary.json"))
        assert summary["n_failed"] == 1 and "v0" in summary["failures"]


class TestTrainPredictBenchmark:
    def test_seed_required(self, corpus):
        manifest, out = corpus
        features = os.path.join(out, "features.csv")
        code = cli.main(["train", "--features", features, "--manifest", manifest])
        assert code == 2

    def test_train_then_predict(self, corpus, tmp_path):
        manifest, out = corpus
        features = os.path.join(out, "features.csv")
        model_path = str(tmp_path / "model.json")
        assert (
            cli.main(
                [
                    "train",
                    "--features",
                    features,
                    "--manifest",
                    manifest,
                    "--seed",
                    "3",
                    "--out",
                    model_path,
                ]
            )
            == 0
        )
        meta = json.load(open(model_path + ".meta.json"))
        assert {"C", "gamma", "cv_rmse", "config_hash"} <= set(meta)
        pred_path = str(tmp_path / "pred.csv")
        assert (
            cli.main(
                ["predict", "--model", model_path, "--features", features, "--out", pred_path]
            )
            == 0
        )
        with open(pred_path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 15
        scores = [float(r["score"]) for r in rows]
        assert all(np.isfinite(scores))

    def test_benchmark_report(self, corpus, tmp_path):
        manifest, out = corpus
        features = os.path.join(out, "features.csv")
        report_dir = str(tmp_path / "bench")
        code = cli.main(
            [
                "benchmark",
                "--features",
                features,
                "--manifest",
                manifest,
                "--iters",
                "2",
                "--seed",
                "0",
                "--out",
                report_dir,
            ]
        )
        assert code == 0
        report = json.load(open(os.path.join(report_dir, "report.json")))
        assert set(report["metrics"]["splits"]) == {"srcc", "krcc", "plcc", "rmse"}
        with open(os.path.join(report_dir, "table.csv")) as fh:
            table = list(csv.reader(fh))
        assert [row[0] for row in table[1:]] == ["srcc", "krcc", "plcc", "rmse"]


class TestPool:
    def test_pool_command(self, tmp_path):
        scores = tmp_path / "scores.csv"
        with open(scores, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["video_id", "chunk_idx", "score"])
            for idx, s in enumerate([4.0, 2.0, 3.0]):
                writer.writerow(["v0", idx, s])
        out = tmp_path / "pooled.csv"
        code = cli.main(["pool", "--scores", str(scores), "--pooling", "percentile:0.3", "--out", str(out)])
        assert code == 0
        rows = list(csv.DictReader(open(out)))
        assert float(rows[0]["score"]) == 2.0  # ceil(0.3 * 3) = 1 lowest chunk


class TestCalibrate:
    def test_two_datasets(self, tmp_path, rng):
        obj = rng.uniform(0, 10, 40)
        paths = []
        for i, (slope, intercept) in enumerate([(0.4, 1.0), (0.8, 0.0)]):
            path = tmp_path / f"d{i}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["objective", "mos"])
                for o in obj:
                    writer.writerow([o, slope * o + intercept])
            paths.append(str(path))
        out = tmp_path / "cal.json"
        code = cli.main(["calibrate", "--datasets", ",".join(paths), "--out", str(out)])
        assert code == 0
        payload = json.load(open(out))
        assert payload["anchor"] == 0
        assert payload["maps"][0] == [1.0, 0.0]
        slope, intercept = payload["maps"][1]
        assert slope == pytest.approx(0.5, abs=1e-5)
        assert intercept == pytest.approx(1.0, abs=1e-4)


class TestDiversity:
    def test_profile_written(self, corpus, tmp_path):
        manifest, _ = corpus
        out = tmp_path / "diversity.json"
        code = cli.main(["diversity", "--manifest", manifest, "--out", str(out)])
        assert code == 0
        payload = json.load(open(out))
        assert payload["feature_names"] == [
            "brightness",
            "contrast",
            "colorfulness",
            "sharpness",
            "si",
            "ti",
        ]


class TestSelect:
    def test_single_method(self, corpus, tmp_path):
        manifest, out = corpus
        features = os.path.join(out, "features.csv")
        sel_dir = str(tmp_path / "sel")
        code = cli.main(
            [
                "select",
                "--features",
                features,
                "--manifest",
                manifest,
                "--select-method",
                "svm_rank",
                "--k",
                "10",
                "--seed",
                "0",
                "--out",
                sel_dir,
            ]
        )
        assert code == 0
        report = json.load(open(os.path.join(sel_dir, "selection.json")))
        assert report["method"] == "svm_rank" and len(report["chosen"]) == 10


class TestConfigHandling:
    def test_config_file_with_flag_override(self, tmp_path):
        scores = tmp_path / "scores.csv"
        with open(scores, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["video_id", "chunk_idx", "score"])
            writer.writerow(["v0", 0, 1.0])
            writer.writerow(["v0", 1, 3.0])
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"scores={scores}\npooling=mean\nout={tmp_path / 'a.csv'}\n")
        code = cli.main(["pool", "--config", str(cfg), "--out", str(tmp_path / "b.csv")])
        assert code == 0
        assert (tmp_path / "b.csv").exists() and not (tmp_path / "a.csv").exists()

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("scores=x.csv\nbogus_key=1\n")
        assert cli.main(["pool", "--config", str(cfg)]) == 2
