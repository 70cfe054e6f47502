"""Regression and feature selection.

The quality regressor is an epsilon-SVR trained by a deterministic SMO-style
pairwise optimizer (maximal-KKT-violation working-set selection, ties broken
by lowest index). Hyperparameters come from an exponential 10x10 grid search
under k-fold cross-validated RMSE. Three feature selectors are provided:
random-forest permutation importance, linear-SVM weight ranking, and SFFS,
combined by a two-step procedure that first picks (method, k) and then keeps
the most frequently selected features over many train-test splits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from sklearn.tree import DecisionTreeRegressor

KKT_TOL = 1e-3
DEFAULT_EPSILON = 0.1
MAX_SMO_ITER = 1_000_000
# fixed C for the linear-SVR ranking / SFFS objective models
RANKING_C = 32.0


@njit(cache=True)
def _smo_solve(K, y, C, eps, tol, max_iter):  # pragma: no cover - exercised via svr_train
    n = K.shape[0]
    a = np.zeros(n)
    astar = np.zeros(n)
    F = np.zeros(n)  # K @ (a - astar)
    it = 0
    m_val = 0.0
    M_val = 0.0
    while True:
        # maximal violating pair over the expanded (alpha, alpha*) variables
        m_val = -1e300
        M_val = 1e300
        m_i = -1
        M_i = -1
        m_s = False
        M_s = False
        for i in range(n):
            d = y[i] - F[i]
            if a[i] < C and d - eps > m_val:
                m_val = d - eps
                m_i = i
                m_s = False
            if astar[i] > 0.0 and d + eps > m_val:
                m_val = d + eps
                m_i = i
                m_s = True
            if a[i] > 0.0 and d - eps < M_val:
                M_val = d - eps
                M_i = i
                M_s = False
            if astar[i] < C and d + eps < M_val:
                M_val = d + eps
                M_i = i
                M_s = True
        if m_i < 0 or M_i < 0 or m_val - M_val <= tol or it >= max_iter:
            break
        i, i_s = m_i, m_s
        j, j_s = M_i, M_s
        ti = -1.0 if i_s else 1.0
        tj = -1.0 if j_s else 1.0
        gi = (-F[i] + eps + y[i]) if i_s else (F[i] + eps - y[i])
        gj = (-F[j] + eps + y[j]) if j_s else (F[j] + eps - y[j])
        zi = astar[i] if i_s else a[i]
        zj = astar[j] if j_s else a[j]
        zi_old = zi
        zj_old = zj
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 1e-12:
            quad = 1e-12
        if ti != tj:
            delta = (-gi - gj) / quad
            diff = zi - zj
            zi += delta
            zj += delta
            if diff > 0.0:
                if zj < 0.0:
                    zj = 0.0
                    zi = diff
            else:
                if zi < 0.0:
                    zi = 0.0
                    zj = -diff
            if diff > 0.0:
                if zi > C:
                    zi = C
                    zj = C - diff
            else:
                if zj > C:
                    zj = C
                    zi = C + diff
        else:
            delta = (gi - gj) / quad
            s = zi + zj
            zi -= delta
            zj += delta
            if s > C:
                if zi > C:
                    zi = C
                    zj = s - C
            else:
                if zj < 0.0:
                    zj = 0.0
                    zi = s
            if s > C:
                if zj > C:
                    zj = C
                    zi = s - C
            else:
                if zi < 0.0:
                    zi = 0.0
                    zj = s
        if i_s:
            astar[i] = zi
        else:
            a[i] = zi
        if j_s:
            astar[j] = zj
        else:
            a[j] = zj
        dbi = ti * (zi - zi_old)
        dbj = tj * (zj - zj_old)
        for r in range(n):
            F[r] += dbi * K[r, i] + dbj * K[r, j]
        it += 1
    beta = a - astar
    if m_i >= 0 and M_i >= 0:
        b = 0.5 * (m_val + M_val)
        gap = m_val - M_val
    else:
        b = 0.0
        gap = 0.0
    return beta, b, gap, it


@dataclass
class Scaler:
    """Per-feature affine map of the training range onto [0, 1]."""

    low: np.ndarray
    span: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        low = X.min(axis=0)
        span = X.max(axis=0) - low
        return cls(low, span)

    def transform(self, X: np.ndarray, clip: bool = True, diagnostics: dict | None = None):
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(self.span > 0, (X - self.low) / np.where(self.span > 0, self.span, 1.0), 0.0)
        if diagnostics is not None:
            diagnostics["n_clipped"] = int(np.sum((out < 0) | (out > 1)))
        if clip:
            out = np.clip(out, 0.0, 1.0)
        return out


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.maximum(d2, 0.0)


def _kernel_matrix(A, B, kernel: str, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        return np.exp(-gamma * _sq_dists(A, B))
    raise ValueError(f"unknown kernel {kernel!r}")


@dataclass
class SvrModel:
    kernel: str
    gamma: float
    C: float
    epsilon: float
    scaler: Scaler
    support_idx: np.ndarray
    support_vectors: np.ndarray  # scaled
    dual_coefs: np.ndarray
    bias: float
    kkt_gap: float
    n_iter: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "kernel": self.kernel,
                "gamma": self.gamma,
                "C": self.C,
                "epsilon": self.epsilon,
                "scaler_low": self.scaler.low.tolist(),
                "scaler_span": self.scaler.span.tolist(),
                "support_idx": self.support_idx.tolist(),
                "support_vectors": self.support_vectors.tolist(),
                "dual_coefs": self.dual_coefs.tolist(),
                "bias": self.bias,
                "kkt_gap": self.kkt_gap,
                "n_iter": self.n_iter,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SvrModel":
        d = json.loads(text)
        return cls(
            kernel=d["kernel"],
            gamma=d["gamma"],
            C=d["C"],
            epsilon=d["epsilon"],
            scaler=Scaler(np.array(d["scaler_low"]), np.array(d["scaler_span"])),
            support_idx=np.array(d["support_idx"], dtype=np.int64),
            support_vectors=np.array(d["support_vectors"], dtype=np.float64).reshape(
                len(d["support_idx"]), -1
            ),
            dual_coefs=np.array(d["dual_coefs"], dtype=np.float64),
            bias=d["bias"],
            kkt_gap=d["kkt_gap"],
            n_iter=d["n_iter"],
        )


def _solve_scaled(
    K: np.ndarray, y: np.ndarray, C: float, epsilon: float, tol: float = KKT_TOL
):
    beta, b, gap, n_iter = _smo_solve(
        np.ascontiguousarray(K), np.ascontiguousarray(y), C, epsilon, tol, MAX_SMO_ITER
    )
    if n_iter >= MAX_SMO_ITER and gap > epsilon:
        # near-optimal stalls (gap within the epsilon tube) are still usable
        raise RuntimeError(f"SMO did not converge: KKT gap {gap:.3g} after {n_iter} iterations")
    return beta, b, gap, n_iter


def svr_train(
    X: np.ndarray,
    y: np.ndarray,
    kernel: str = "rbf",
    C: float = 1.0,
    gamma: float | None = None,
    epsilon: float = DEFAULT_EPSILON,
    tol: float = KKT_TOL,
) -> SvrModel:
    """Train an epsilon-SVR; features are min/max scaled to [0, 1] internally."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D feature matrix with at least 2 rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training input")
    if gamma is None:
        gamma = 1.0 / X.shape[1]
    scaler = Scaler.fit(X)
    Xs = scaler.transform(X)
    K = _kernel_matrix(Xs, Xs, kernel, gamma)
    beta, b, gap, n_iter = _solve_scaled(K, y, C, epsilon, tol)
    sv = np.flatnonzero(beta != 0.0)
    return SvrModel(
        kernel=kernel,
        gamma=gamma,
        C=C,
        epsilon=epsilon,
        scaler=scaler,
        support_idx=sv,
        support_vectors=Xs[sv],
        dual_coefs=beta[sv],
        bias=b,
        kkt_gap=gap,
        n_iter=n_iter,
    )


def svr_predict(model: SvrModel, X: np.ndarray, diagnostics: dict | None = None) -> np.ndarray:
    """f(x) = sum_i beta_i K(x_i, x) + b; out-of-range features are clipped to [0, 1]."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return np.zeros(0)
    X = np.atleast_2d(X)
    if X.shape[1] != model.scaler.low.size:
        raise ValueError(f"expected {model.scaler.low.size} features, got {X.shape[1]}")
    Xs = model.scaler.transform(X, diagnostics=diagnostics)
    if model.support_idx.size == 0:
        return np.full(X.shape[0], model.bias)
    K = _kernel_matrix(Xs, model.support_vectors, model.kernel, model.gamma)
    return K @ model.dual_coefs + model.bias


@dataclass(frozen=True)
class GridSearchConfig:
    c_grid: tuple = tuple(2.0**k for k in range(1, 11))
    gamma_grid: tuple = tuple(2.0**k for k in range(-8, 2))
    folds: int = 5
    objective: str = "rmse"


@dataclass
class GridSearchResult:
    c: float
    gamma: float
    rmse: float
    log: list  # (C, gamma, mean validation RMSE) per grid cell


def _fold_slices(n: int, folds: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, folds)]


def grid_search_cv(
    X: np.ndarray,
    y: np.ndarray,
    cfg: GridSearchConfig = GridSearchConfig(),
    seed: int = 0,
    kernel: str = "rbf",
    epsilon: float = DEFAULT_EPSILON,
) -> GridSearchResult:
    """Exhaustive (C, gamma) search by k-fold cross-validated RMSE.

    Folds are contiguous blocks of a seeded shuffle; ties prefer smaller C,
    then smaller gamma.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < cfg.folds:
        raise ValueError(f"{n} rows cannot be split into {cfg.folds} folds")
    rng = np.random.default_rng(seed)
    folds = _fold_slices(n, cfg.folds, rng)

    prepared = []
    for val_idx in folds:
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        tr_idx = np.flatnonzero(mask)
        scaler = Scaler.fit(X[tr_idx])
        Xtr = scaler.transform(X[tr_idx])
        Xval = scaler.transform(X[val_idx])
        if kernel == "rbf":
            prepared.append((y[tr_idx], y[val_idx], _sq_dists(Xtr, Xtr), _sq_dists(Xval, Xtr)))
        else:
            prepared.append((y[tr_idx], y[val_idx], Xtr @ Xtr.T, Xval @ Xtr.T))

    gammas = cfg.gamma_grid if kernel == "rbf" else (0.0,)
    best = None
    log = []
    for c in cfg.c_grid:
        for gamma in gammas:
            errors = []
            for ytr, yval, tr_mat, val_mat in prepared:
                if kernel == "rbf":
                    Ktr = np.exp(-gamma * tr_mat)
                    Kval = np.exp(-gamma * val_mat)
                else:
                    Ktr, Kval = tr_mat, val_mat
                beta, b, _, _ = _solve_scaled(Ktr, ytr, c, epsilon)
                pred = Kval @ beta + b
                errors.append(float(np.sqrt(np.mean((pred - yval) ** 2))))
            mean_rmse = float(np.mean(errors))
            log.append((c, gamma, mean_rmse))
            if best is None or mean_rmse < best[2]:
                best = (c, gamma, mean_rmse)
    return GridSearchResult(c=best[0], gamma=best[1], rmse=best[2], log=log)


@dataclass
class SelectionReport:
    method: str
    k: int
    chosen: np.ndarray
    frequency: np.ndarray | None = None
    plcc_curve: dict | None = None
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "method": self.method,
                "k": self.k,
                "chosen": self.chosen.tolist(),
                "frequency": None if self.frequency is None else self.frequency.tolist(),
                "plcc_curve": (
                    None
                    if self.plcc_curve is None
                    else {f"{m}:{k}": list(v) for (m, k), v in self.plcc_curve.items()}
                ),
                "seed": self.seed,
            },
            sort_keys=True,
        )


N_TREES = 100
TREE_MAX_DEPTH = 12
N_PERMUTATIONS = 5


def rf_permutation_importance(X: np.ndarray, y: np.ndarray, seed: int = 0) -> np.ndarray:
    """Mean out-of-bag RMSE increase per feature over a 100-tree forest.

    Each tree is a bootstrap CART with feature subsampling (ceil(d/3));
    features a tree never splits on contribute zero increase for that tree.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    max_features = -(-d // 3)
    importance = np.zeros(d)
    for _ in range(N_TREES):
        boot = rng.integers(0, n, size=n)
        oob = np.setdiff1d(np.arange(n), boot)
        tree = DecisionTreeRegressor(
            max_depth=TREE_MAX_DEPTH,
            max_features=max_features,
            random_state=int(rng.integers(0, 2**31 - 1)),
        )
        tree.fit(X[boot], y[boot])
        if oob.size == 0:
            continue
        Xo = X[oob]
        yo = y[oob]
        base = float(np.sqrt(np.mean((tree.predict(Xo) - yo) ** 2)))
        used = np.unique(tree.tree_.feature[tree.tree_.feature >= 0])
        for f in used:
            stacked = np.tile(Xo, (N_PERMUTATIONS, 1))
            for p in range(N_PERMUTATIONS):
                rows = slice(p * oob.size, (p + 1) * oob.size)
                stacked[rows, f] = Xo[rng.permutation(oob.size), f]
            preds = tree.predict(stacked).reshape(N_PERMUTATIONS, oob.size)
            rmses = np.sqrt(np.mean((preds - yo[None, :]) ** 2, axis=1))
            importance[f] += float(np.sum(rmses - base))
    return importance / (N_TREES * N_PERMUTATIONS)


def svm_rank_weights(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """|weight| of a linear SVR on [0, 1]-scaled features."""
    model = svr_train(X, y, kernel="linear", C=RANKING_C)
    if model.support_idx.size == 0:
        return np.zeros(X.shape[1])
    w = model.support_vectors.T @ model.dual_coefs
    return np.abs(w)


def _cv_rmse_subset(X, y, subset, folds=5, seed=0) -> float:
    subset = np.asarray(sorted(subset))
    cfg_folds = min(folds, X.shape[0])
    rng = np.random.default_rng(seed)
    slices = _fold_slices(X.shape[0], cfg_folds, rng)
    errs = []
    for val_idx in slices:
        mask = np.ones(X.shape[0], dtype=bool)
        mask[val_idx] = False
        tr_idx = np.flatnonzero(mask)
        model = svr_train(X[tr_idx][:, subset], y[tr_idx], kernel="linear", C=RANKING_C)
        pred = svr_predict(model, X[val_idx][:, subset])
        errs.append(float(np.sqrt(np.mean((pred - y[val_idx]) ** 2))))
    return float(np.mean(errs))


def sffs_select(X: np.ndarray, y: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Sequential forward floating selection under a CV-RMSE objective."""
    d = X.shape[1]
    selected: list[int] = []
    best_by_size: dict[int, tuple[float, tuple[int, ...]]] = {}
    while len(selected) < k:
        # forward: best single addition
        candidates = [f for f in range(d) if f not in selected]
        scores = [(_cv_rmse_subset(X, y, selected + [f], seed=seed), f) for f in candidates]
        rmse, chosen = min(scores)
        selected.append(chosen)
        size = len(selected)
        if size not in best_by_size or rmse < best_by_size[size][0]:
            best_by_size[size] = (rmse, tuple(selected))
        if size == k:
            break
        # conditional backward: drop features while it improves the smaller sets
        while len(selected) > 2:
            drop_scores = [
                (_cv_rmse_subset(X, y, [f for f in selected if f != r], seed=seed), r)
                for r in selected
            ]
            rmse_drop, worst = min(drop_scores)
            smaller = len(selected) - 1
            if smaller in best_by_size and rmse_drop >= best_by_size[smaller][0]:
                break
            selected.remove(worst)
            best_by_size[smaller] = (rmse_drop, tuple(selected))
    return np.array(sorted(best_by_size[k][1]))


def select_features(
    X: np.ndarray, y: np.ndarray, method: str, k: int, seed: int = 0
) -> SelectionReport:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    if not 0 < k < d:
        raise ValueError(f"k must be in (0, {d}), got {k}")
    if method == "rf_permutation":
        scores = rf_permutation_importance(X, y, seed=seed)
        chosen = np.argsort(-scores, kind="stable")[:k]
    elif method == "svm_rank":
        scores = svm_rank_weights(X, y)
        chosen = np.argsort(-scores, kind="stable")[:k]
    elif method == "sffs":
        chosen = sffs_select(X, y, k, seed=seed)
    else:
        raise ValueError(f"unknown selection method {method!r}")
    return SelectionReport(method=method, k=k, chosen=np.sort(chosen), seed=seed)


# coarsened hyperparameter grid used only to score candidate feature subsets
_STEP1_GRID = GridSearchConfig(
    c_grid=(2.0, 2.0**4, 2.0**7, 2.0**10),
    gamma_grid=(2.0**-6, 2.0**-3, 1.0),
)


def _split_plcc(X, y, method, k, rng) -> float:
    from .evaluation import logistic4_fit, plcc_rmse

    n = X.shape[0]
    perm = rng.permutation(n)
    cut = int(round(0.8 * n))
    tr, te = perm[:cut], perm[cut:]
    report = select_features(X[tr], y[tr], method, k, seed=int(rng.integers(0, 2**31 - 1)))
    cols = report.chosen
    search = grid_search_cv(
        X[tr][:, cols], y[tr], _STEP1_GRID, seed=int(rng.integers(0, 2**31 - 1))
    )
    model = svr_train(X[tr][:, cols], y[tr], kernel="rbf", C=search.c, gamma=search.gamma)
    pred = svr_predict(model, X[te][:, cols])
    fit = logistic4_fit(pred, y[te])
    value, _ = plcc_rmse(pred, y[te], fit)
    return -2.0 if value is None else value


def two_step_selection(
    X: np.ndarray,
    y: np.ndarray,
    k_grid,
    iters1: int = 10,
    iters2: int = 100,
    methods=("svm_rank", "rf_permutation"),
    seed: int = 0,
) -> SelectionReport:
    """Pick the best (method, k) by median split PLCC, then keep the k features
    most frequently selected over many splits."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n < 10:
        raise ValueError("too few rows for split-based selection")

    curve: dict[tuple[str, int], tuple[float, float]] = {}
    best_key = None
    best_median = -np.inf
    for method in methods:
        for k in sorted(k_grid):
            rng = np.random.default_rng(seed)
            plccs = [_split_plcc(X, y, method, k, rng) for _ in range(iters1)]
            med, std = float(np.median(plccs)), float(np.std(plccs))
            curve[(method, k)] = (med, std)
            if med > best_median:
                best_median = med
                best_key = (method, k)
    method_star, k_star = best_key

    rng = np.random.default_rng(seed + 1)
    frequency = np.zeros(d, dtype=np.int64)
    for _ in range(iters2):
        perm = rng.permutation(n)
        tr = perm[: int(round(0.8 * n))]
        report = select_features(
            X[tr], y[tr], method_star, k_star, seed=int(rng.integers(0, 2**31 - 1))
        )
        frequency[report.chosen] += 1
    chosen = np.sort(np.argsort(-frequency, kind="stable")[:k_star])
    return SelectionReport(
        method=method_star,
        k=k_star,
        chosen=chosen,
        frequency=frequency,
        plcc_curve=curve,
        seed=seed,
    )
