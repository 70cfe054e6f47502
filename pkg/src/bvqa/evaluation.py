"""Benchmark protocol and metrics.

SRCC/KRCC/PLCC/RMSE with four-parameter logistic linearization, the repeated
80/20-split median protocol, cross-dataset MOS calibration (fixed affine
rescalings plus an iterative-nested-least-squares alignment against a shared
objective anchor), and content-diversity profiling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, optimize
from scipy.stats import rankdata

from .errors import DegenerateInputError
from .media_io import FrameTriple, yuv_to_rgb
from .temporal import colorfulness
from . import learning


def srcc(x, y):
    """Spearman rank correlation (Pearson on average ranks, ties averaged).

    Returns None for degenerate (constant) input rather than NaN.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 3:
        raise ValueError("need two equal-length vectors with >= 3 entries")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.sum(rx * rx) * np.sum(ry * ry))
    if denom == 0:
        return None
    return float(np.sum(rx * ry) / denom)


def krcc(x, y):
    """Kendall tau-b (tie-corrected), computed over all pairs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 3:
        raise ValueError("need two equal-length vectors with >= 3 entries")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(x.size, k=1)
    sx, sy = dx[iu], dy[iu]
    concordant_minus_discordant = float(np.sum(sx * sy))
    n0 = sx.size
    tx = float(np.sum(sx == 0))
    ty = float(np.sum(sy == 0))
    denom = np.sqrt((n0 - tx) * (n0 - ty))
    if denom == 0:
        return None
    return float(concordant_minus_discordant / denom)


@dataclass
class Logistic4Fit:
    beta: np.ndarray  # (b1, b2, b3, b4)
    converged: bool
    iterations: int
    linear_fallback: bool = False
    linear_coefs: tuple[float, float] = (0.0, 0.0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.linear_fallback:
            a, b = self.linear_coefs
            return a * x + b
        b1, b2, b3, b4 = self.beta
        return b2 + (b1 - b2) / (1.0 + np.exp(-(x - b3) / abs(b4)))


def logistic4_fit(objective_scores, mos) -> Logistic4Fit:
    """Four-parameter logistic regression of MOS on objective scores.

    f(x) = b2 + (b1 - b2) / (1 + exp(-(x - b3) / |b4|)), Levenberg-Marquardt,
    initialized from the data range. Falls back to a flagged linear
    least-squares map when the fit fails.
    """
    x = np.asarray(objective_scores, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    if x.size < 5:
        raise ValueError("need at least 5 points for a logistic fit")
    if np.ptp(x) == 0:
        raise DegenerateInputError("constant objective scores")

    def residuals(beta):
        b1, b2, b3, b4 = beta
        return b2 + (b1 - b2) / (1.0 + np.exp(-(x - b3) / max(abs(b4), 1e-12))) - y

    # two data-driven starts for the midpoint: the median objective score and
    # the score whose MOS is closest to mid-range (the latter escapes a local
    # minimum when the curve is off-center)
    mid_cross = float(x[np.argmin(np.abs(y - 0.5 * (y.max() + y.min())))])
    scale0 = max(float(np.std(x)) / 4.0, 1e-6)
    result = None
    for b3 in (mid_cross, float(np.median(x))):
        try:
            candidate = optimize.least_squares(
                residuals,
                np.array([y.max(), y.min(), b3, scale0]),
                method="lm",
                max_nfev=400,
                gtol=1e-8,
                xtol=1e-12,
                ftol=1e-12,
            )
        except Exception:
            continue
        if candidate.success and np.all(np.isfinite(candidate.x)) and abs(candidate.x[3]) > 0:
            if result is None or candidate.cost < result.cost:
                result = candidate
    ok = result is not None
    if ok:
        return Logistic4Fit(beta=result.x, converged=True, iterations=int(result.nfev))
    slope, intercept = np.polyfit(x, y, 1)
    return Logistic4Fit(
        beta=np.array([y.max(), y.min(), mid_cross, scale0]),
        converged=False,
        iterations=0,
        linear_fallback=True,
        linear_coefs=(float(slope), float(intercept)),
    )


def plcc_rmse(objective_scores, mos, fit: Logistic4Fit | None = None):
    """PLCC and RMSE between logistic-mapped scores and MOS."""
    x = np.asarray(objective_scores, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    if fit is None:
        fit = logistic4_fit(x, y)
    mapped = fit(x)
    rmse = float(np.sqrt(np.mean((mapped - y) ** 2)))
    if np.ptp(mapped) == 0 or np.ptp(y) == 0:
        return None, rmse
    plcc = float(np.corrcoef(mapped, y)[0, 1])
    return plcc, rmse


@dataclass
class MetricsRecord:
    srcc_splits: list
    krcc_splits: list
    plcc_splits: list
    rmse_splits: list
    seed: int = 0

    @staticmethod
    def _summary(values):
        clean = [v for v in values if v is not None]
        if not clean:
            return None, None
        return float(np.median(clean)), float(np.std(clean))

    @property
    def median(self) -> dict:
        return {
            name: self._summary(vals)[0]
            for name, vals in (
                ("srcc", self.srcc_splits),
                ("krcc", self.krcc_splits),
                ("plcc", self.plcc_splits),
                ("rmse", self.rmse_splits),
            )
        }

    @property
    def std(self) -> dict:
        return {
            name: self._summary(vals)[1]
            for name, vals in (
                ("srcc", self.srcc_splits),
                ("krcc", self.krcc_splits),
                ("plcc", self.plcc_splits),
                ("rmse", self.rmse_splits),
            )
        }

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "splits": {
                    "srcc": self.srcc_splits,
                    "krcc": self.krcc_splits,
                    "plcc": self.plcc_splits,
                    "rmse": self.rmse_splits,
                },
                "median": self.median,
                "std": self.std,
            },
            sort_keys=True,
        )


def evaluate_split_protocol(
    X: np.ndarray,
    y: np.ndarray,
    kernel: str = "rbf",
    grid: learning.GridSearchConfig | None = None,
    iters: int = 100,
    split: float = 0.8,
    seed: int = 0,
) -> MetricsRecord:
    """Repeated random 80/20 split protocol with per-split grid-search SVR.

    Per-iteration seeds are derived as seed + iteration index, so the record
    is reproducible bit-for-bit for a fixed seed.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 10:
        raise ValueError("need at least 10 rows for the split protocol")
    if grid is None:
        grid = learning.GridSearchConfig()
    record = MetricsRecord([], [], [], [], seed=seed)
    for it in range(iters):
        rng = np.random.default_rng(seed + it)
        perm = rng.permutation(n)
        cut = int(round(split * n))
        tr, te = perm[:cut], perm[cut:]
        search = learning.grid_search_cv(X[tr], y[tr], grid, seed=seed + it, kernel=kernel)
        model = learning.svr_train(
            X[tr], y[tr], kernel=kernel, C=search.c, gamma=search.gamma
        )
        pred = learning.svr_predict(model, X[te])
        record.srcc_splits.append(srcc(pred, y[te]))
        record.krcc_splits.append(krcc(pred, y[te]))
        try:
            p, r = plcc_rmse(pred, y[te])
        except (DegenerateInputError, ValueError):
            # constant predictions or a test split too small for the logistic fit
            p, r = None, None
        record.plcc_splits.append(p)
        record.rmse_splits.append(r)
    return record


# fixed affine rescalings onto the anchor [1, 5] scale
def mos_rescale(y_org, dataset: str) -> np.ndarray:
    """Map raw MOS onto the calibrated anchor scale for a known source dataset."""
    y = np.asarray(y_org, dtype=np.float64)
    if dataset == "konvid":
        if np.any(y < 1.0) or np.any(y > 5.0):
            raise ValueError("konvid MOS must lie in [1, 5]")
        return 5.0 - 4.0 * ((5.0 - y) / 4.0 * 1.1241 - 0.0993)
    if dataset == "livevqc":
        if np.any(y < 0.0) or np.any(y > 100.0):
            raise ValueError("livevqc MOS must lie in [0, 100]")
        return 5.0 - 4.0 * ((100.0 - y) / 100.0 * 0.7132 + 0.0253)
    raise ValueError(f"no rescaling defined for dataset {dataset!r}")


@dataclass
class CalibrationMap:
    anchor: int
    maps: list  # per-dataset (slope, intercept) onto the anchor scale
    iterations: int

    def apply(self, dataset_index: int, mos) -> np.ndarray:
        slope, intercept = self.maps[dataset_index]
        return slope * np.asarray(mos, dtype=np.float64) + intercept


def inlsa_calibrate(datasets, anchor_index: int = 0, tol: float = 1e-6, max_iter: int = 100):
    """Alternating-least-squares alignment of several MOS scales.

    ``datasets`` is a list of (objective_scores, mos) pairs sharing one
    objective metric. The anchor keeps the identity map; every other dataset
    gets the affine map that best matches the global objective-to-MOS line.
    """
    pairs = [(np.asarray(o, dtype=np.float64), np.asarray(m, dtype=np.float64)) for o, m in datasets]
    for obj, mos in pairs:
        if np.ptp(mos) == 0:
            raise DegenerateInputError("constant MOS in one dataset")
        if obj.size != mos.size:
            raise ValueError("objective/MOS length mismatch")
    maps = [(1.0, 0.0) for _ in pairs]
    if len(pairs) == 1:
        return CalibrationMap(anchor=anchor_index, maps=maps, iterations=0)

    for iteration in range(1, max_iter + 1):
        all_obj = np.concatenate([o for o, _ in pairs])
        all_mos = np.concatenate(
            [maps[i][0] * m + maps[i][1] for i, (_, m) in enumerate(pairs)]
        )
        slope, intercept = np.polyfit(all_obj, all_mos, 1)
        max_change = 0.0
        for i, (obj, mos) in enumerate(pairs):
            if i == anchor_index:
                continue
            target = slope * obj + intercept
            s, t = np.polyfit(mos, target, 1)
            max_change = max(max_change, abs(s - maps[i][0]), abs(t - maps[i][1]))
            maps[i] = (float(s), float(t))
        if max_change < tol:
            return CalibrationMap(anchor=anchor_index, maps=maps, iterations=iteration)
    return CalibrationMap(anchor=anchor_index, maps=maps, iterations=max_iter)


DIVERSITY_FEATURES = ("brightness", "contrast", "colorfulness", "sharpness", "si", "ti")
DIVERSITY_FRAME_STEP = 10


def video_diversity_features(frames: list[FrameTriple]) -> np.ndarray:
    """Six low-level content descriptors for one video, from every 10th frame.

    brightness/contrast/colorfulness/sharpness are frame averages; SI and TI
    follow the P.910 convention (max over frames of spatial/temporal std).
    """
    if not frames:
        raise ValueError("empty video")
    sampled = frames[::DIVERSITY_FRAME_STEP]
    brightness, contrast, colorf, sharpness, si = [], [], [], [], []
    ti = [0.0]
    prev_luma = None
    for y, u, v in sampled:
        img = y.data
        brightness.append(float(img.mean()))
        contrast.append(float(img.std()))
        colorf.append(colorfulness(yuv_to_rgb(y, u, v)))
        sharpness.append(float(ndimage.laplace(img, mode="reflect").var()))
        gx = ndimage.sobel(img, axis=1, mode="reflect")
        gy = ndimage.sobel(img, axis=0, mode="reflect")
        si.append(float(np.hypot(gx, gy).std()))
        if prev_luma is not None:
            ti.append(float((img - prev_luma).std()))
        prev_luma = img
    return np.array(
        [
            float(np.mean(brightness)),
            float(np.mean(contrast)),
            float(np.mean(colorf)),
            float(np.mean(sharpness)),
            float(np.max(si)),
            float(np.max(ti)),
        ]
    )


def relative_range(per_dataset_values: list) -> np.ndarray:
    """(max - min) of each dataset's values over the global maximum."""
    arrays = [np.asarray(v, dtype=np.float64) for v in per_dataset_values]
    global_max = max(float(a.max()) for a in arrays)
    if global_max == 0:
        raise DegenerateInputError("all feature values are zero")
    return np.array([(float(a.max()) - float(a.min())) / global_max for a in arrays])


def coverage_uniformity(per_dataset_values: list, bins: int = 10) -> np.ndarray:
    """Entropy (log base B) of each dataset's B-bin histogram over the pooled range."""
    arrays = [np.asarray(v, dtype=np.float64) for v in per_dataset_values]
    lo = min(float(a.min()) for a in arrays)
    hi = max(float(a.max()) for a in arrays)
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    out = []
    for a in arrays:
        counts, _ = np.histogram(a, bins=edges)
        p = counts / counts.sum()
        nz = p[p > 0]
        out.append(float(-np.sum(nz * np.log(nz) / np.log(bins))))
    return np.array(out)


@dataclass
class DiversityProfile:
    feature_names: tuple
    per_video: dict  # dataset name -> (n_videos, 6) array
    relative_range: dict  # dataset name -> (6,) array
    uniformity: dict  # dataset name -> (6,) array
    bins: int
    flagged_short: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "feature_names": list(self.feature_names),
                "per_video": {k: v.tolist() for k, v in self.per_video.items()},
                "relative_range": {k: v.tolist() for k, v in self.relative_range.items()},
                "uniformity": {k: v.tolist() for k, v in self.uniformity.items()},
                "bins": self.bins,
                "flagged_short": self.flagged_short,
            },
            sort_keys=True,
        )


def diversity_profile(datasets: dict, bins: int = 10) -> DiversityProfile:
    """Content-diversity profile across datasets.

    ``datasets`` maps dataset name to a list of (video_id, frames) entries.
    Videos shorter than the 10-frame sampling step fall back to their first
    frame and are flagged.
    """
    per_video = {}
    flagged = []
    for name, videos in datasets.items():
        rows = []
        for vid, frames in videos:
            if len(frames) < DIVERSITY_FRAME_STEP:
                flagged.append(f"{name}/{vid}")
                frames = frames[:1]
            rows.append(video_diversity_features(frames))
        per_video[name] = np.stack(rows)
    names = list(per_video)
    rel = {name: np.zeros(len(DIVERSITY_FEATURES)) for name in names}
    uni = {name: np.zeros(len(DIVERSITY_FEATURES)) for name in names}
    for i in range(len(DIVERSITY_FEATURES)):
        columns = [per_video[name][:, i] for name in names]
        r = relative_range(columns)
        u = coverage_uniformity(columns, bins=bins)
        for j, name in enumerate(names):
            rel[name][i] = r[j]
            uni[name][i] = u[j]
    return DiversityProfile(
        feature_names=DIVERSITY_FEATURES,
        per_video=per_video,
        relative_range=rel,
        uniformity=uni,
        bins=bins,
        flagged_short=flagged,
    )
