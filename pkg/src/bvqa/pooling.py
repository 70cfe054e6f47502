"""Temporal aggregation.

Two layers: within-chunk avg/std pooling of frame feature vectors plus
cross-chunk averaging, and a bank of eleven score-pooling methods that
collapse per-chunk quality predictions into a single video score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutError
from .registry import REGISTRY, FeatureVector

POOLING_KINDS = (
    "mean",
    "median",
    "harmonic",
    "geometric",
    "minkowski",
    "percentile",
    "vqpooling",
    "primacy",
    "recency",
    "hysteresis",
    "epooling",
)

# fixed reimplementation constants, exposed through PoolingMethod.params
MINKOWSKI_P = 2.0
PERCENTILE_FRACTION = 0.2
VQPOOL_HIGH_WEIGHT = 0.5
DECAY_ALPHA = 0.2
HYSTERESIS_WINDOW = 2
HYSTERESIS_MEMORY = 0.8


@dataclass(frozen=True)
class ScoreSeries:
    scores: np.ndarray
    chunk_duration: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        if self.scores.ndim != 1 or self.scores.size == 0:
            raise ValueError("score series must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("score series contains non-finite values")


@dataclass(frozen=True)
class PoolingMethod:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in POOLING_KINDS:
            raise ValueError(f"unknown pooling kind {self.kind!r}")

    @classmethod
    def parse(cls, spec: str) -> "PoolingMethod":
        """Parse a CLI-style 'kind[:param]' spec."""
        if ":" in spec:
            kind, raw = spec.split(":", 1)
            key = {"minkowski": "p", "percentile": "fraction"}.get(kind, "param")
            return cls(kind, {key: float(raw)})
        return cls(spec)


def chunk_pool(frame_features: list[FeatureVector]) -> FeatureVector:
    """Within-chunk [avg block, std block] pooling (population std, n=1 -> 0)."""
    if not frame_features:
        raise ValueError("empty chunk")
    layouts = {v.layout_id for v in frame_features}
    if len(layouts) != 1:
        raise LayoutError(f"mixed layouts in chunk: {sorted(layouts)}")
    layout = REGISTRY.pooled(frame_features[0].layout_id)
    mat = np.stack([v.values for v in frame_features])
    return FeatureVector(layout.layout_id, np.concatenate([mat.mean(axis=0), mat.std(axis=0)]))


def video_aggregate(chunk_features: list[FeatureVector]) -> FeatureVector:
    """Elementwise mean of chunk-level vectors."""
    if not chunk_features:
        raise ValueError("no chunks to aggregate")
    layouts = {v.layout_id for v in chunk_features}
    if len(layouts) != 1:
        raise LayoutError(f"mixed layouts across chunks: {sorted(layouts)}")
    mat = np.stack([v.values for v in chunk_features])
    return FeatureVector(chunk_features[0].layout_id, mat.mean(axis=0))


def _hysteresis_series(x: np.ndarray, window: int, memory: float) -> np.ndarray:
    pooled = np.empty_like(x)
    for t in range(x.size):
        low = x[max(0, t - window) : t + 1].min()
        pooled[t] = memory * low + (1.0 - memory) * x[t]
    return pooled


def pool(series: ScoreSeries, method: PoolingMethod) -> float:
    """Apply one non-ensemble pooling method to a chunk score series."""
    x = series.scores
    kind = method.kind
    if kind == "mean":
        return float(x.mean())
    if kind == "median":
        return float(np.median(x))
    if kind == "harmonic":
        if np.any(x <= 0):
            raise ValueError("harmonic pooling needs strictly positive scores")
        return float(x.size / np.sum(1.0 / x))
    if kind == "geometric":
        if np.any(x <= 0):
            raise ValueError("geometric pooling needs strictly positive scores")
        return float(np.exp(np.mean(np.log(x))))
    if kind == "minkowski":
        p = method.params.get("p", MINKOWSKI_P)
        return float(np.mean(x**p) ** (1.0 / p))
    if kind == "percentile":
        frac = method.params.get("fraction", PERCENTILE_FRACTION)
        if not 0 < frac <= 1:
            raise ValueError(f"percentile fraction must be in (0, 1], got {frac}")
        count = int(np.ceil(frac * x.size))
        return float(np.sort(x)[:count].mean())
    if kind == "vqpooling":
        weights = np.where(x < x.mean(), 1.0, method.params.get("param", VQPOOL_HIGH_WEIGHT))
        return float(np.sum(weights * x) / np.sum(weights))
    if kind == "primacy":
        w = np.exp(-method.params.get("param", DECAY_ALPHA) * np.arange(x.size))
        return float(np.sum(w * x) / np.sum(w))
    if kind == "recency":
        w = np.exp(-method.params.get("param", DECAY_ALPHA) * np.arange(x.size))[::-1]
        return float(np.sum(w * x) / np.sum(w))
    if kind == "hysteresis":
        return float(_hysteresis_series(x, HYSTERESIS_WINDOW, HYSTERESIS_MEMORY).mean())
    raise ValueError(f"{kind} is not a direct pooling method")


EPOOL_VARIANTS = ("mean", "minkowski", "percentile", "vqpooling", "variation", "hysteresis")


def epool_row(series: ScoreSeries) -> np.ndarray:
    """The 6 pooled variants feeding the ensemble pooling regressor."""
    row = []
    for kind in EPOOL_VARIANTS:
        if kind == "variation":
            row.append(float(series.scores.std()))
        else:
            row.append(pool(series, PoolingMethod(kind)))
    return np.array(row)


@dataclass(frozen=True)
class EPoolModel:
    svr: object  # learning.SvrModel


def epool_train(pooled_matrix: np.ndarray, labels: np.ndarray, seed: int = 0) -> EPoolModel:
    """Train the second-stage regressor over the 6-dim pooled representation."""
    from . import learning

    pooled_matrix = np.asarray(pooled_matrix, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if pooled_matrix.ndim != 2 or pooled_matrix.shape[1] != len(EPOOL_VARIANTS):
        raise ValueError(f"pooled matrix must be (n, {len(EPOOL_VARIANTS)})")
    if pooled_matrix.shape[0] < 10:
        raise ValueError("need at least 10 training rows for ensemble pooling")
    cfg = learning.GridSearchConfig(folds=min(5, pooled_matrix.shape[0]))
    search = learning.grid_search_cv(pooled_matrix, labels, cfg, seed=seed)
    model = learning.svr_train(
        pooled_matrix, labels, kernel="rbf", C=search.c, gamma=search.gamma
    )
    return EPoolModel(model)


def epool_apply(model: EPoolModel, pooled_rows: np.ndarray) -> np.ndarray:
    from . import learning

    return learning.svr_predict(model.svr, np.atleast_2d(np.asarray(pooled_rows, dtype=np.float64)))
