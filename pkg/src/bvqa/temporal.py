"""Two-level temporal features: low-complexity motion statistics from frame
pairs (LCF) and high-complexity spatial-impairment statistics from sparsely
sampled frames (HCF)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, FeatureExtractionError
from .media_io import FramePlane, FrameTriple, yuv_to_rgb
from .registry import REGISTRY, FeatureVector
from .spatial import ggd_fit, mscn_transform

BLOCK_SIZE = 16
SEARCH_RANGE = 8


class MotionField:
    __slots__ = ("vectors", "sad", "block_size")

    def __init__(self, vectors: np.ndarray, sad: np.ndarray, block_size: int = BLOCK_SIZE):
        self.vectors = vectors  # (rows, cols, 2) int displacements (dx, dy)
        self.sad = sad  # (rows, cols) matching costs
        self.block_size = block_size


# candidate displacements in tie-break order: |dx|+|dy|, then dy, then dx
_CANDIDATES = sorted(
    (
        (dx, dy)
        for dx in range(-SEARCH_RANGE, SEARCH_RANGE + 1)
        for dy in range(-SEARCH_RANGE, SEARCH_RANGE + 1)
    ),
    key=lambda d: (abs(d[0]) + abs(d[1]), d[1], d[0]),
)


def motion_field(prev: FramePlane, curr: FramePlane) -> MotionField:
    """Exhaustive block matching: 16x16 blocks, +-8 full search, SAD cost.

    Ties are broken by smallest |dx|+|dy|, then smallest dy, then smallest dx.
    Candidates whose reference footprint leaves the previous frame are invalid.
    """
    if prev.data.shape != curr.data.shape:
        raise ValueError(f"frame shapes differ: {prev.data.shape} vs {curr.data.shape}")
    h, w = curr.data.shape
    rows = -(-h // BLOCK_SIZE)
    cols = -(-w // BLOCK_SIZE)
    vectors = np.zeros((rows, cols, 2), dtype=np.int64)
    sad = np.zeros((rows, cols), dtype=np.float64)
    for by in range(rows):
        for bx in range(cols):
            y0, x0 = by * BLOCK_SIZE, bx * BLOCK_SIZE
            y1, x1 = min(y0 + BLOCK_SIZE, h), min(x0 + BLOCK_SIZE, w)
            block = curr.data[y0:y1, x0:x1]
            best_cost = np.inf
            best = (0, 0)
            # (dx, dy) is the content displacement: the block at (x0, y0) in
            # curr is matched against prev at (x0 - dx, y0 - dy)
            for dx, dy in _CANDIDATES:
                ry0, rx0 = y0 - dy, x0 - dx
                if ry0 < 0 or rx0 < 0 or ry0 + (y1 - y0) > h or rx0 + (x1 - x0) > w:
                    continue
                cost = float(
                    np.abs(block - prev.data[ry0 : ry0 + (y1 - y0), rx0 : rx0 + (x1 - x0)]).sum()
                )
                if cost < best_cost:
                    best_cost = cost
                    best = (dx, dy)
            vectors[by, bx] = best
            sad[by, bx] = best_cost
    return MotionField(vectors, sad)


LCF_BASE_NAMES = (
    "mv_mag_mean",
    "mv_mag_std",
    "motion_coherency",
    "zero_mv_fraction",
    "sad_mean",
    "sad_std",
    "framediff_abs_mean",
    "framediff_abs_std",
    "framediff_mscn_ggd_alpha",
    "framediff_mscn_ggd_sigma",
    "temporal_activity",
)

REGISTRY.register(
    "tlvqm_lcf",
    tuple(f"avg_lcf_{n}" for n in LCF_BASE_NAMES) + tuple(f"std_lcf_{n}" for n in LCF_BASE_NAMES),
    ("tlvqm_lcf",) * 22,
)


def lcf_sample(prev: FramePlane, curr: FramePlane) -> np.ndarray:
    """11 low-complexity motion features for one frame pair."""
    field = motion_field(prev, curr)
    mv = field.vectors.reshape(-1, 2).astype(np.float64)
    mags = np.hypot(mv[:, 0], mv[:, 1])
    mag_sum = mags.sum()
    coherency = 1.0 if mag_sum == 0 else float(np.hypot(*mv.sum(axis=0)) / mag_sum)
    diff = curr.data - prev.data
    abs_diff = np.abs(diff)
    try:
        g = ggd_fit(mscn_transform(diff).values)
        ggd_alpha, ggd_sigma = g.alpha, g.sigma
    except DegenerateInputError:
        # static pair: no residual signal to fit
        ggd_alpha, ggd_sigma = 0.0, 0.0
    return np.array(
        [
            float(mags.mean()),
            float(mags.std()),
            coherency,
            float(np.mean(mags == 0)),
            float(field.sad.mean()),
            float(field.sad.std()),
            float(abs_diff.mean()),
            float(abs_diff.std()),
            ggd_alpha,
            ggd_sigma,
            float(diff.std()),
        ]
    )


def lcf_features(chunk_pairs) -> FeatureVector:
    """Within-chunk avg/std pooling of per-pair LCF samples (22 dims)."""
    samples = [lcf_sample(prev, curr) for prev, curr in chunk_pairs]
    if not samples:
        raise FeatureExtractionError("lcf: empty chunk")
    mat = np.stack(samples)
    return FeatureVector("tlvqm_lcf", np.concatenate([mat.mean(axis=0), mat.std(axis=0)]))


HCF_BASE_NAMES = (
    "sharpness_var_laplacian",
    "sobel_mag_mean",
    "sobel_mag_std",
    "blockiness",
    "noise_mad",
    "rms_contrast",
    "colorfulness",
    "saturation_mean",
    "saturation_std",
    "overexposed_fraction",
    "underexposed_fraction",
    "edge_density",
    "corner_density",
    "luma_mean",
    "luma_std",
)

REGISTRY.register(
    "tlvqm_hcf",
    tuple(f"avg_hcf_{n}" for n in HCF_BASE_NAMES) + tuple(f"std_hcf_{n}" for n in HCF_BASE_NAMES),
    ("tlvqm_hcf",) * 30,
)


def colorfulness(rgb: np.ndarray) -> float:
    """Hasler-Suesstrunk colorfulness on RGB in [0, 1] (reported on a 0-255 scale)."""
    r, g, b = rgb[..., 0] * 255, rgb[..., 1] * 255, rgb[..., 2] * 255
    rg = r - g
    yb = 0.5 * (r + g) - b
    return float(
        np.hypot(rg.std(), yb.std()) + 0.3 * np.hypot(rg.mean(), yb.mean())
    )


def _harris_response(img: np.ndarray, sigma: float = 1.0, k: float = 0.05) -> np.ndarray:
    gx = ndimage.sobel(img, axis=1, mode="reflect")
    gy = ndimage.sobel(img, axis=0, mode="reflect")
    sxx = ndimage.gaussian_filter(gx * gx, sigma, mode="reflect")
    syy = ndimage.gaussian_filter(gy * gy, sigma, mode="reflect")
    sxy = ndimage.gaussian_filter(gx * gy, sigma, mode="reflect")
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - k * trace * trace


def hcf_sample(frame: FrameTriple) -> np.ndarray:
    """15 high-complexity spatial-impairment features for one sampled frame."""
    y, u, v = frame
    img = y.data
    lap = ndimage.laplace(img, mode="reflect")
    gx = ndimage.sobel(img, axis=1, mode="reflect")
    gy = ndimage.sobel(img, axis=0, mode="reflect")
    sobel_mag = np.hypot(gx, gy)

    # blockiness: gradient energy on 8-aligned boundaries vs elsewhere
    col_energy = (np.diff(img, axis=1) ** 2).mean(axis=0)
    row_energy = (np.diff(img, axis=0) ** 2).mean(axis=1)
    eps = 1e-12

    def _boundary_ratio(energy: np.ndarray) -> float:
        idx = np.arange(energy.size)
        on = energy[idx % 8 == 7]
        off = energy[idx % 8 != 7]
        if on.size == 0 or off.size == 0:
            return 1.0
        return float((on.mean() + eps) / (off.mean() + eps))

    blockiness = 0.5 * (_boundary_ratio(col_energy) + _boundary_ratio(row_energy))

    residual = img - ndimage.gaussian_filter(img, 1.0, mode="reflect")
    noise_mad = float(np.median(np.abs(residual - np.median(residual))))

    rgb = yuv_to_rgb(y, u, v)
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    saturation = np.where(maxc > 0, (maxc - minc) / np.maximum(maxc, eps), 0.0)

    edge_density = float(np.mean(sobel_mag > 0.1 * sobel_mag.max())) if sobel_mag.max() > 0 else 0.0
    harris = _harris_response(img)
    corner_density = float(np.mean(harris > 1e-4 * max(harris.max(), eps)))

    return np.array(
        [
            float(lap.var()),
            float(sobel_mag.mean()),
            float(sobel_mag.std()),
            blockiness,
            noise_mad,
            float(img.std() / max(img.mean(), eps)),
            colorfulness(rgb),
            float(saturation.mean()),
            float(saturation.std()),
            float(np.mean(img > 250)),
            float(np.mean(img < 5)),
            edge_density,
            corner_density,
            float(img.mean()),
            float(img.std()),
        ]
    )


def hcf_features(sampled_frames) -> FeatureVector:
    """Avg/std pooling of per-frame HCF samples across 1 frame/sec samples (30 dims)."""
    samples = [hcf_sample(frame) for frame in sampled_frames]
    if not samples:
        raise FeatureExtractionError("hcf: empty input")
    mat = np.stack(samples)
    return FeatureVector("tlvqm_hcf", np.concatenate([mat.mean(axis=0), mat.std(axis=0)]))
