"""Per-frame natural-scene-statistics feature families.

Three families are implemented, matching the classic 36/40/36 layouts:

* ``brisque_features``       - GGD/AGGD statistics of locally normalized luma
* ``gmlog_features``         - joint gradient-magnitude / LoG histograms
* ``higrade_grad_features``  - gradient-magnitude NSS in CIELAB channels
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from scipy.special import gamma as gamma_fn

from .errors import DegenerateInputError, FeatureExtractionError
from .media_io import FramePlane
from .registry import REGISTRY, FeatureVector

MIN_FRAME_SIDE = 32

# MSCN window: 7x7 Gaussian, sigma 7/6, stabilizer 1.0 on a [0,255] range.
MSCN_SIGMA = 7.0 / 6.0
MSCN_RADIUS = 3
MSCN_C = 1.0

# Shape-parameter lookup shared by the GGD and AGGD estimators.
ALPHA_GRID = np.logspace(np.log10(0.05), np.log10(10.0), 2000)
# GGD: E[x^2] / E[|x|]^2 as a function of alpha
_GGD_RATIO = (
    gamma_fn(1.0 / ALPHA_GRID) * gamma_fn(3.0 / ALPHA_GRID) / gamma_fn(2.0 / ALPHA_GRID) ** 2
)
# AGGD: gamma(2/nu)^2 / (gamma(1/nu) * gamma(3/nu))
_AGGD_RATIO = gamma_fn(2.0 / ALPHA_GRID) ** 2 / (
    gamma_fn(1.0 / ALPHA_GRID) * gamma_fn(3.0 / ALPHA_GRID)
)


class GgdParams:
    __slots__ = ("alpha", "sigma")

    def __init__(self, alpha: float, sigma: float):
        if alpha <= 0 or sigma <= 0:
            raise ValueError(f"GGD parameters must be positive, got {alpha}, {sigma}")
        self.alpha = alpha
        self.sigma = sigma


class AggdParams:
    __slots__ = ("nu", "sigma_l", "sigma_r", "eta")

    def __init__(self, nu: float, sigma_l: float, sigma_r: float, eta: float):
        if nu <= 0 or sigma_l <= 0 or sigma_r <= 0 or not np.isfinite(eta):
            raise ValueError("bad AGGD parameters")
        self.nu = nu
        self.sigma_l = sigma_l
        self.sigma_r = sigma_r
        self.eta = eta


class MscnField:
    __slots__ = ("values", "mu", "sigma")

    def __init__(self, values: np.ndarray, mu: np.ndarray, sigma: np.ndarray):
        self.values = values
        self.mu = mu
        self.sigma = sigma


def _gauss_blur(img: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    return ndimage.gaussian_filter(img, sigma=sigma, radius=radius, mode="reflect")


def mscn_transform(luma: FramePlane | np.ndarray, c: float = MSCN_C) -> MscnField:
    """Mean-subtracted contrast-normalized coefficients of a frame.

    Local mean/std come from a 7x7 Gaussian window (sigma 7/6) with symmetric
    boundary extension; the stabilizer c guards flat regions.
    """
    img = luma.data if isinstance(luma, FramePlane) else np.asarray(luma, dtype=np.float64)
    if min(img.shape) < 2 * MSCN_RADIUS + 1:
        raise FeatureExtractionError(f"frame {img.shape} smaller than the MSCN window")
    if c <= 0:
        raise ValueError("stabilizer c must be positive")
    mu = _gauss_blur(img, MSCN_SIGMA, MSCN_RADIUS)
    sigma = np.sqrt(np.abs(_gauss_blur(img * img, MSCN_SIGMA, MSCN_RADIUS) - mu * mu))
    return MscnField((img - mu) / (sigma + c), mu, sigma)


def ggd_fit(samples: np.ndarray) -> GgdParams:
    """Moment-matching generalized Gaussian fit (lookup over alpha in [0.05, 10])."""
    x = np.ravel(np.asarray(samples, dtype=np.float64))
    if x.size < 64:
        raise DegenerateInputError(f"need >= 64 samples for a GGD fit, got {x.size}")
    m2 = float(np.mean(x * x))
    m1 = float(np.mean(np.abs(x)))
    if m2 <= 0 or m1 <= 0 or np.ptp(x) == 0:
        raise DegenerateInputError("zero-variance input")
    ratio = m2 / (m1 * m1)
    alpha = float(ALPHA_GRID[np.argmin(np.abs(_GGD_RATIO - ratio))])
    return GgdParams(alpha, float(np.sqrt(m2)))


def aggd_fit(samples: np.ndarray) -> AggdParams:
    """Asymmetric generalized Gaussian fit via left/right second moments."""
    x = np.ravel(np.asarray(samples, dtype=np.float64))
    if x.size < 64:
        raise DegenerateInputError(f"need >= 64 samples for an AGGD fit, got {x.size}")
    left = x[x < 0]
    right = x[x > 0]
    if left.size == 0 or right.size == 0:
        raise DegenerateInputError("one-sided data")
    sigma_l = float(np.sqrt(np.mean(left * left)))
    sigma_r = float(np.sqrt(np.mean(right * right)))
    if sigma_l == 0 or sigma_r == 0:
        raise DegenerateInputError("zero-variance side")
    gamma_hat = sigma_l / sigma_r
    r_hat = float(np.mean(np.abs(x))) ** 2 / float(np.mean(x * x))
    r_norm = r_hat * (gamma_hat**3 + 1) * (gamma_hat + 1) / (gamma_hat**2 + 1) ** 2
    nu = float(ALPHA_GRID[np.argmin(np.abs(_AGGD_RATIO - r_norm))])
    eta = (sigma_r - sigma_l) * gamma_fn(2.0 / nu) / gamma_fn(1.0 / nu)
    return AggdParams(nu, sigma_l, sigma_r, float(eta))


def _check_frame(img: np.ndarray, family: str) -> None:
    if img.shape[0] < MIN_FRAME_SIDE or img.shape[1] < MIN_FRAME_SIDE:
        raise FeatureExtractionError(
            f"{family}: frame {img.shape} below minimum {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}"
        )


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    c = img[:h, :w]
    return 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])


def _paired_products(v: np.ndarray) -> dict[str, np.ndarray]:
    return {
        "h": v[:, :-1] * v[:, 1:],
        "v": v[:-1, :] * v[1:, :],
        "d1": v[:-1, :-1] * v[1:, 1:],
        "d2": v[1:, :-1] * v[:-1, 1:],
    }


def _brisque_scale(img: np.ndarray) -> list[float]:
    v = mscn_transform(img).values
    g = ggd_fit(v)
    feats = [g.alpha, g.sigma]
    for prod in _paired_products(v).values():
        a = aggd_fit(prod)
        feats += [a.nu, a.eta, a.sigma_l, a.sigma_r]
    return feats


_BRISQUE_NAMES = tuple(
    f"brisque_s{s}_{stat}"
    for s in (1, 2)
    for stat in ["ggd_alpha", "ggd_sigma"]
    + [f"{o}_{p}" for o in ("h", "v", "d1", "d2") for p in ("nu", "eta", "sigma_l", "sigma_r")]
)
REGISTRY.register("brisque", _BRISQUE_NAMES, ("brisque",) * 36)


def brisque_features(luma: FramePlane) -> FeatureVector:
    """36 BRISQUE features: GGD of MSCN + AGGD of 4 paired products, 2 scales."""
    img = luma.data
    _check_frame(img, "brisque")
    try:
        feats = _brisque_scale(img) + _brisque_scale(_downsample2(img))
    except DegenerateInputError as exc:
        raise FeatureExtractionError(f"brisque: {exc}") from exc
    return FeatureVector("brisque", np.array(feats))


GMLOG_SIGMA = 0.5
GMLOG_BINS = 10
GMLOG_PERCENTILE = 99.9
_GMLOG_NORM_RADIUS = 3  # 7x7 local RMS window for joint adaptive normalization


_GMLOG_NAMES = tuple(
    [f"gmlog_gm_marginal_{i}" for i in range(GMLOG_BINS)]
    + [f"gmlog_log_marginal_{i}" for i in range(GMLOG_BINS)]
    + [f"gmlog_gm_indep_{i}" for i in range(GMLOG_BINS)]
    + [f"gmlog_log_indep_{i}" for i in range(GMLOG_BINS)]
)
REGISTRY.register("gmlog", _GMLOG_NAMES, ("gmlog",) * 40)


def _log_kernel(sigma: float) -> np.ndarray:
    # Analytic Laplacian-of-Gaussian, re-centred to sum exactly to zero.  The
    # sampled scipy gaussian_laplace kernel has a large DC leak at small sigma,
    # which would make the response track local brightness instead of curvature.
    radius = max(2, int(np.ceil(4.0 * sigma)))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    r2 = xx * xx + yy * yy
    k = (r2 - 2.0 * sigma**2) / (2.0 * np.pi * sigma**6) * np.exp(-r2 / (2.0 * sigma**2))
    return k - k.mean()


_LOG_KERNEL = _log_kernel(GMLOG_SIGMA)


def _quantize(channel: np.ndarray, bins: int) -> np.ndarray:
    hi = np.percentile(channel, GMLOG_PERCENTILE)
    if hi <= 0:
        raise DegenerateInputError("flat channel, cannot quantize")
    q = np.minimum((channel / hi * bins).astype(np.int64), bins - 1)
    return q


def gmlog_features(luma: FramePlane) -> FeatureVector:
    """40 GM-LOG features: marginals and independency measures of the joint
    histogram of jointly normalized gradient magnitude and |LoG| responses."""
    img = luma.data
    _check_frame(img, "gmlog")
    gx = ndimage.gaussian_filter(img, GMLOG_SIGMA, order=(0, 1), mode="reflect")
    gy = ndimage.gaussian_filter(img, GMLOG_SIGMA, order=(1, 0), mode="reflect")
    gm = np.hypot(gx, gy)
    log = np.abs(ndimage.correlate(img, _LOG_KERNEL, mode="reflect"))

    # joint adaptive normalization by the local RMS of (GM, LoG)
    joint = gm * gm + log * log
    local_rms = np.sqrt(
        np.abs(_gauss_blur(joint, MSCN_SIGMA, _GMLOG_NORM_RADIUS))
    )
    eps = 1e-8
    gm_n = gm / (local_rms + eps)
    log_n = log / (local_rms + eps)

    try:
        qg = _quantize(gm_n, GMLOG_BINS)
        ql = _quantize(log_n, GMLOG_BINS)
    except DegenerateInputError as exc:
        raise FeatureExtractionError(f"gmlog: {exc}") from exc

    joint_hist = np.zeros((GMLOG_BINS, GMLOG_BINS))
    np.add.at(joint_hist, (qg.ravel(), ql.ravel()), 1.0)
    joint_hist /= joint_hist.sum()

    p_g = joint_hist.sum(axis=1)
    p_l = joint_hist.sum(axis=0)
    # independency measures: mean conditional probability across the other axis
    with np.errstate(invalid="ignore", divide="ignore"):
        cond_g = np.where((p_l > 0)[None, :], joint_hist / p_l[None, :], 0.0)  # P(G | L)
        cond_l = np.where((p_g > 0)[:, None], joint_hist / p_g[:, None], 0.0)  # P(L | G)
    n_g = cond_g.mean(axis=1)
    n_l = cond_l.mean(axis=0)
    return FeatureVector("gmlog", np.concatenate([p_g, p_l, n_g, n_l]))


_HG_CHANNEL_STATS = tuple(
    ["ggd_alpha", "ggd_sigma", "mscn_mean", "mscn_std"]
    + [f"{o}_{p}" for o in ("d1", "d2") for p in ("nu", "eta", "sigma_l", "sigma_r")]
)
_HIGRADE_NAMES = tuple(f"higrade_{ch}_{stat}" for ch in ("l", "a", "b") for stat in _HG_CHANNEL_STATS)
REGISTRY.register("higrade_grad", _HIGRADE_NAMES, ("higrade_grad",) * 36)


def _higrade_channel(img: np.ndarray) -> list[float]:
    gx = ndimage.gaussian_filter(img, GMLOG_SIGMA, order=(0, 1), mode="reflect")
    gy = ndimage.gaussian_filter(img, GMLOG_SIGMA, order=(1, 0), mode="reflect")
    gm = np.hypot(gx, gy)
    if np.ptp(gm) == 0:
        raise DegenerateInputError("flat gradient-magnitude map")
    v = mscn_transform(gm).values
    g = ggd_fit(v)
    feats = [g.alpha, g.sigma, float(np.mean(v)), float(np.std(v))]
    prods = _paired_products(v)
    for key in ("d1", "d2"):
        a = aggd_fit(prods[key])
        feats += [a.nu, a.eta, a.sigma_l, a.sigma_r]
    return feats


def higrade_grad_features(
    l_chan: FramePlane,
    a_chan: FramePlane,
    b_chan: FramePlane,
    on_degenerate: str = "raise",
) -> FeatureVector:
    """36 gradient-magnitude NSS features over CIELAB channels (12 per channel).

    Achromatic frames make the a/b channels degenerate; with
    ``on_degenerate="sentinel"`` the failing channel block becomes zeros
    instead of failing the frame.
    """
    if on_degenerate not in ("raise", "sentinel"):
        raise ValueError(f"bad on_degenerate mode {on_degenerate!r}")
    feats: list[float] = []
    for name, plane in (("l", l_chan), ("a", a_chan), ("b", b_chan)):
        _check_frame(plane.data, "higrade_grad")
        try:
            feats += _higrade_channel(plane.data)
        except DegenerateInputError as exc:
            if on_degenerate == "raise":
                raise FeatureExtractionError(f"higrade_grad channel {name}: {exc}") from exc
            feats += [0.0] * len(_HG_CHANNEL_STATS)
    return FeatureVector("higrade_grad", np.array(feats))
