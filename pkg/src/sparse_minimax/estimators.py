"""Regression estimators.

Linear smoothers (kernel ridge, Nadaraya-Watson), a hard-threshold wavelet
baseline, and two deep ReLU fits: a restricted least-squares fit over a
constructed ramp dictionary, and plain gradient descent on a fixed
architecture for comparison.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy import linalg

from . import relu_net, wavelets
from .sparse_classes import check_domain

RIDGE_FALLBACK = 1e-8
DEFAULT_LAMBDA_GRID = tuple(np.logspace(-4, 2, 13).tolist())


class IllConditionedError(np.linalg.LinAlgError):
    def __init__(self, rcond):
        super().__init__(f"kernel system is ill-conditioned (reciprocal condition {rcond:.3g})")
        self.rcond = rcond


class DivergenceError(RuntimeError):
    def __init__(self, epoch, loss):
        super().__init__(f"gradient descent diverged at epoch {epoch} (loss {loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class Dataset:
    """n observations (x_i, y_i) with x_i in [0,1]^d."""

    xs: np.ndarray
    ys: np.ndarray
    sigma: float = float("nan")
    seed: Optional[int] = None
    target_id: Optional[str] = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        ys = np.asarray(self.ys, dtype=float).ravel()
        if xs.shape[0] < 1 or xs.shape[0] != ys.shape[0]:
            raise ValueError("need n >= 1 inputs matching the outputs")
        check_domain(xs)
        xs = xs.copy()
        ys = ys.copy()
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self):
        return self.xs.shape[0]

    @property
    def dim(self):
        return self.xs.shape[1]

    def with_outputs(self, ys):
        return Dataset(self.xs, ys, self.sigma, self.seed, self.target_id)


def _points(x, dim):
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0 or (arr.ndim == 1 and dim > 1 and arr.size == dim)
    pts = arr.reshape(-1, dim) if arr.ndim <= 1 else arr
    return pts, scalar


@dataclass
class FittedEstimator:
    """A fitted predictor with its hyperparameters and diagnostics."""

    kind: str
    predictor: object
    hyperparameters: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    dim: int = 1

    def predict(self, x):
        pts, scalar = _points(x, self.dim)
        out = self.predictor.evaluate(pts)
        return float(out[0]) if scalar else out

    __call__ = predict

    def evaluate(self, pts):
        return self.predictor.evaluate(pts)

    def breakpoints(self):
        fn = getattr(self.predictor, "breakpoints", None)
        return fn() if fn is not None else None

    @property
    def smooth(self):
        return getattr(self.predictor, "smooth", False)

    def to_json(self):
        return {"kind": self.kind, "hyperparameters": _jsonable(self.hyperparameters),
                "diagnostics": _jsonable(self.diagnostics),
                "predictor": self.predictor.to_dict()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def empirical_risk(est, data):
    """(1/n) sum (f(x_i) - y_i)^2."""
    pred = est.evaluate(data.xs) if hasattr(est, "evaluate") else est(data.xs)
    return float(np.mean((pred - data.ys) ** 2))


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianKernel:
    """exp(-gamma ||x - z||^2)."""

    gamma: float = 1.0

    def __call__(self, X, Z):
        sq = (np.sum(X ** 2, 1)[:, None] + np.sum(Z ** 2, 1)[None, :] - 2.0 * X @ Z.T)
        return np.exp(-self.gamma * np.maximum(sq, 0.0))

    def to_dict(self):
        return {"type": "gaussian", "gamma": self.gamma}


@dataclass(frozen=True)
class LaplaceKernel:
    """exp(-||x - z||_1 / length_scale); a product of 1-d exponential kernels."""

    length_scale: float = 1.0

    def __call__(self, X, Z):
        dist = np.zeros((X.shape[0], Z.shape[0]))
        for j in range(X.shape[1]):
            dist += np.abs(X[:, j][:, None] - Z[:, j][None, :])
        return np.exp(-dist / self.length_scale)

    def to_dict(self):
        return {"type": "laplace", "length_scale": self.length_scale}


@dataclass(frozen=True)
class ConstantKernel:
    value: float = 1.0

    def __call__(self, X, Z):
        return np.full((X.shape[0], Z.shape[0]), self.value)

    def to_dict(self):
        return {"type": "constant", "value": self.value}


def kernel_from_dict(d):
    kind = d.get("type", "laplace")
    if kind == "gaussian":
        return GaussianKernel(float(d.get("gamma", 1.0)))
    if kind == "laplace":
        return LaplaceKernel(float(d.get("length_scale", 1.0)))
    if kind == "constant":
        return ConstantKernel(float(d.get("value", 1.0)))
    raise ValueError(f"unknown kernel type {kind!r}")


# ---------------------------------------------------------------------------
# kernel ridge
# ---------------------------------------------------------------------------

# For the 1-d exponential kernel on sorted distinct inputs the Gram matrix
# has a tridiagonal inverse, so (K + lam I) c = y becomes the banded system
# (I + lam T) c = T y, and predictions follow from two linear recurrences.

def _exp_kernel_inverse(x, ell):
    gaps = np.diff(x)
    r = np.exp(-gaps / ell)
    one_minus = -np.expm1(-2.0 * gaps / ell)
    diag = np.ones(x.size)
    diag[:-1] += r * r / one_minus
    diag[1:] += r * r / one_minus
    off = -r / one_minus
    return diag, off


def _banded_ridge(x, y, ell, lam):
    diag, off = _exp_kernel_inverse(x, ell)
    n = x.size
    ab = np.zeros((3, n))
    ab[0, 1:] = lam * off
    ab[1] = 1.0 + lam * diag
    ab[2, :-1] = lam * off
    Ty = diag * y
    Ty[:-1] += off * y[1:]
    Ty[1:] += off * y[:-1]
    return linalg.solve_banded((1, 1), ab, Ty)


@numba.njit(cache=True)
def _exp_sums(x, c, ell):
    # left[j] = sum_{i <= j} c_i e^{-(x_j - x_i)/ell}; right[j] likewise for i >= j
    n = x.shape[0]
    left = np.empty(n)
    right = np.empty(n)
    left[0] = c[0]
    for j in range(1, n):
        left[j] = c[j] + math.exp(-(x[j] - x[j - 1]) / ell) * left[j - 1]
    right[n - 1] = c[n - 1]
    for j in range(n - 2, -1, -1):
        right[j] = c[j] + math.exp(-(x[j + 1] - x[j]) / ell) * right[j + 1]
    return left, right


def _exp_predict(x, left, right, ell, q):
    j = np.searchsorted(x, q, side="right") - 1
    out = np.zeros(q.size)
    has_left = j >= 0
    jl = j[has_left]
    out[has_left] += np.exp(-(q[has_left] - x[jl]) / ell) * left[jl]
    has_right = j + 1 < x.size
    jr = j[has_right] + 1
    out[has_right] += np.exp(-(x[jr] - q[has_right]) / ell) * right[jr]
    return out


class KernelRidgePredictor:
    """x -> k(x, X) c with dual coefficients c."""

    def __init__(self, kernel, xs, dual, lam, fast=False):
        self.kernel = kernel
        self.xs = xs
        self.dual = dual
        self.lam = lam
        self.fast = fast
        self.smooth = isinstance(kernel, GaussianKernel)
        if fast:
            self._left, self._right = _exp_sums(xs[:, 0], dual, kernel.length_scale)

    def evaluate(self, pts):
        if self.fast:
            return _exp_predict(self.xs[:, 0], self._left, self._right,
                                self.kernel.length_scale, pts[:, 0])
        out = np.empty(pts.shape[0])
        for s in range(0, pts.shape[0], 4096):
            out[s:s + 4096] = self.kernel(pts[s:s + 4096], self.xs) @ self.dual
        return out

    def weights(self, pts):
        """Matrix S with prediction S y for the training outputs y."""
        K = self.kernel(self.xs, self.xs)
        K[np.diag_indices_from(K)] += self.lam
        return linalg.solve(K, self.kernel(self.xs, pts), assume_a="pos").T

    def breakpoints(self):
        if isinstance(self.kernel, LaplaceKernel) and self.xs.shape[1] == 1:
            return [np.unique(self.xs[:, 0])]
        return None

    def to_dict(self):
        return {"kernel": self.kernel.to_dict(), "lambda": self.lam,
                "train_x": self.xs.tolist(), "dual": self.dual.tolist()}


def _fast_path(kernel, xs):
    if not isinstance(kernel, LaplaceKernel) or xs.shape[1] != 1:
        return False
    x = xs[:, 0]
    return bool(np.all(np.diff(np.sort(x)) > 0))


def _ridge_solve(kernel, xs, ys, lam, rcond_floor):
    """Dual coefficients and diagnostics; xs sorted when the fast path applies."""
    if _fast_path(kernel, xs):
        return _banded_ridge(xs[:, 0], ys, kernel.length_scale, lam), {"solver": "banded"}
    K = kernel(xs, xs)
    K[np.diag_indices_from(K)] += lam
    anorm = np.max(np.sum(np.abs(K), axis=0))
    try:
        cho = linalg.cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        raise IllConditionedError(0.0) from None
    rcond, info = linalg.lapack.dpocon(cho[0], anorm, uplo="L")
    if info != 0 or rcond < rcond_floor:
        raise IllConditionedError(float(rcond))
    return linalg.cho_solve(cho, ys), {"solver": "cholesky", "rcond": float(rcond)}


def cv_lambda(data, kernel, grid, folds, rng):
    """Pick lambda from ``grid`` by k-fold cross-validated squared error."""
    xs, ys = data.xs, data.ys
    order = np.argsort(xs[:, 0], kind="stable")
    xs, ys = xs[order], ys[order]
    n = ys.size
    folds = max(2, min(folds, n))
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % folds
    err = np.zeros(len(grid))
    fast = _fast_path(kernel, xs)
    for f in range(folds):
        tr, te = fold_of != f, fold_of == f
        if fast:
            x_tr = xs[tr, 0]
            for g, lam in enumerate(grid):
                c = _banded_ridge(x_tr, ys[tr], kernel.length_scale, lam)
                left, right = _exp_sums(x_tr, c, kernel.length_scale)
                pred = _exp_predict(x_tr, left, right, kernel.length_scale, xs[te, 0])
                err[g] += np.sum((pred - ys[te]) ** 2)
        else:
            evals, evecs = np.linalg.eigh(kernel(xs[tr], xs[tr]))
            proj = evecs.T @ ys[tr]
            K_te = kernel(xs[te], xs[tr]) @ evecs
            for g, lam in enumerate(grid):
                pred = K_te @ (proj / (np.maximum(evals, 0.0) + lam))
                err[g] += np.sum((pred - ys[te]) ** 2)
    best = int(np.argmin(err))
    return float(grid[best]), err / n


def kernel_ridge(data, kernel, lam, lambda_grid=DEFAULT_LAMBDA_GRID, folds=5, rng=None,
                 rcond_floor=1e-14):
    """Kernel ridge regression f(x) = k(x, X)(K + lam I)^{-1} Y.

    Parameters
    ----------
    lam : float or "cv"
        Ridge parameter; "cv" selects it from ``lambda_grid`` by
        ``folds``-fold cross-validation using ``rng`` for the split.
    """
    diagnostics = {"linear": True}
    if isinstance(lam, str):
        if lam != "cv":
            raise ValueError(f"unknown lambda policy {lam!r}")
        if rng is None:
            raise ValueError("cross-validation needs an rng")
        lam, cv_err = cv_lambda(data, kernel, list(lambda_grid), folds, rng)
        diagnostics["cv_error"] = cv_err.tolist()
        diagnostics["lambda_at_grid_edge"] = lam in (min(lambda_grid), max(lambda_grid))
    if not lam > 0:
        raise ValueError("lambda must be positive")
    xs, ys = data.xs, data.ys
    if xs.shape[1] == 1:
        order = np.argsort(xs[:, 0], kind="stable")
        xs, ys = xs[order], ys[order]
    dual, info = _ridge_solve(kernel, xs, ys, lam, rcond_floor)
    diagnostics.update(info)
    pred = KernelRidgePredictor(kernel, xs, dual, lam, fast=info["solver"] == "banded")
    est = FittedEstimator("kernel_ridge", pred, {"lambda": lam, "kernel": kernel.to_dict()},
                          diagnostics, data.dim)
    est.diagnostics["empirical_risk"] = empirical_risk(est, data)
    return est


# ---------------------------------------------------------------------------
# Nadaraya-Watson
# ---------------------------------------------------------------------------

class NadarayaWatsonPredictor:
    def __init__(self, xs, ys, bandwidth, kernel):
        self.xs = xs
        self.ys = ys
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.mean = float(np.mean(ys))
        self.smooth = kernel == "gaussian"

    def _raw_weights(self, pts):
        if self.kernel == "box":
            dist = np.max(np.abs(pts[:, None, :] - self.xs[None, :, :]), axis=2)
            return (dist <= self.bandwidth).astype(float)
        sq = np.sum((pts[:, None, :] - self.xs[None, :, :]) ** 2, axis=2)
        return np.exp(-0.5 * sq / self.bandwidth ** 2)

    def weights(self, pts):
        out = np.empty((pts.shape[0], self.xs.shape[0]))
        for s in range(0, pts.shape[0], 1024):
            w = self._raw_weights(pts[s:s + 1024])
            tot = w.sum(axis=1)
            empty = tot == 0
            w[empty] = 1.0
            tot[empty] = self.xs.shape[0]
            out[s:s + 1024] = w / tot[:, None]
        return out

    def evaluate(self, pts):
        out = np.empty(pts.shape[0])
        for s in range(0, pts.shape[0], 1024):
            out[s:s + 1024] = self.weights(pts[s:s + 1024]) @ self.ys
        return out

    def breakpoints(self):
        if self.kernel == "box" and self.xs.shape[1] == 1:
            x = self.xs[:, 0]
            return [np.unique(np.concatenate([x - self.bandwidth, x + self.bandwidth]))]
        return None

    def to_dict(self):
        return {"bandwidth": self.bandwidth, "kernel": self.kernel,
                "train_x": self.xs.tolist(), "dual": self.ys.tolist()}


def nadaraya_watson(data, bandwidth, kernel="box"):
    """Local average sum K_h(x - X_i) Y_i / sum K_h(x - X_i).

    The box kernel uses the max-norm window of half-width ``bandwidth``;
    an empty window falls back to the global mean of Y.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if kernel not in ("box", "gaussian"):
        raise ValueError(f"unknown kernel {kernel!r}")
    pred = NadarayaWatsonPredictor(data.xs, data.ys, float(bandwidth), kernel)
    est = FittedEstimator("nadaraya_watson", pred, {"bandwidth": bandwidth, "kernel": kernel},
                          {"linear": True}, data.dim)
    est.diagnostics["empirical_risk"] = empirical_risk(est, data)
    return est


# ---------------------------------------------------------------------------
# wavelet thresholding
# ---------------------------------------------------------------------------

class ThresholdPredictor:
    def __init__(self, mean, expansion):
        self.mean = mean
        self.expansion = expansion

    def evaluate(self, pts):
        return self.mean + self.expansion.evaluate(pts)

    def breakpoints(self):
        return self.expansion.breakpoints()

    def to_dict(self):
        return {"mean": self.mean, "expansion": self.expansion.to_dict()}


def empirical_coefficients(data, wavelet, max_level):
    """(1/n) sum_i Y_i psi_idx(X_i) for all indices with scale <= max_level."""
    n = data.n
    out = {}
    for k in range(max_level + 1):
        acc = np.zeros(2 ** k)
        for ls, v in wavelets._combos(wavelet, (k,), data.xs):
            np.add.at(acc, ls[0], data.ys * v)
        for l in range(2 ** k):
            out[wavelets.WaveletIndex((k,), (l,))] = acc[l] / n
    return out


def wavelet_threshold(data, wavelet, max_level, threshold=None, sigma=None):
    """Hard-threshold estimate from empirical wavelet coefficients.

    The sample mean is kept as the coarse (scaling) term.  Detail
    coefficients with |a| <= tau are dropped, with default
    tau = sigma sqrt(2 ln n / n).
    """
    if data.dim != 1 or wavelet.dim != 1:
        raise ValueError("wavelet thresholding is implemented for d = 1")
    n = data.n
    if threshold is None:
        sigma = data.sigma if sigma is None else sigma
        if not np.isfinite(sigma):
            raise ValueError("default threshold needs sigma")
        threshold = sigma * math.sqrt(2.0 * math.log(max(n, 2)) / n)
    raw = empirical_coefficients(data, wavelet, max_level)
    mean = float(np.mean(data.ys))
    kept = [(idx, a) for idx, a in sorted(raw.items(), key=lambda t: wavelets.order_key(t[0]))
            if abs(a) > threshold]
    expansion = wavelets.WaveletExpansion(wavelet, wavelets.CoeffSeq(kept))
    pred = ThresholdPredictor(mean, expansion)
    est = FittedEstimator("wavelet_threshold", pred,
                          {"threshold": threshold, "max_level": max_level},
                          {"kept": len(kept), "candidates": len(raw)}, 1)
    est.diagnostics["empirical_risk"] = empirical_risk(est, data)
    return est


# ---------------------------------------------------------------------------
# deep constructive ERM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassHint:
    """What the constructive fit may know about the target class."""

    kind: str
    bounds: dict
    sup_bound: float
    wavelet: Optional[object] = None

    @classmethod
    def of(cls, target):
        w = None
        if target.kind == "Jp":
            w = target.params.wavelet
        elif target.kind == "Kp":
            w = target.params.terms[0][2].wavelet
        return cls(target.kind, dict(target.bounds), float(target.sup_bound), w)


@numba.njit(cache=True)
def _segment_dp(y, wt, K):
    """Optimal weighted least-squares fit by a step function with K jumps.

    Returns the K cut positions (start index of each new segment).
    """
    n = y.shape[0]
    S0 = np.zeros(n + 1)
    S1 = np.zeros(n + 1)
    S2 = np.zeros(n + 1)
    for i in range(n):
        S0[i + 1] = S0[i] + wt[i]
        S1[i + 1] = S1[i] + wt[i] * y[i]
        S2[i + 1] = S2[i] + wt[i] * y[i] * y[i]
    INF = 1e300
    cost = np.full((K + 1, n + 1), INF)
    arg = np.zeros((K + 1, n + 1), np.int64)
    for i in range(1, n + 1):
        cost[0, i] = S2[i] - S1[i] * S1[i] / S0[i]
    for s in range(1, K + 1):
        for i in range(s + 1, n + 1):
            best = INF
            bj = s
            for j in range(s, i):
                w = S0[i] - S0[j]
                m = S1[i] - S1[j]
                c = cost[s - 1, j] + (S2[i] - S2[j]) - m * m / w
                if c < best:
                    best = c
                    bj = j
            cost[s, i] = best
            arg[s, i] = bj
    cuts = np.zeros(K, np.int64)
    i = n
    for s in range(K, 0, -1):
        j = arg[s, i]
        cuts[s - 1] = j
        i = j
    return cuts


def segment_fit(x, y, K):
    """Best K-jump step fit in x order; returns jump locations in (0, 1].

    Tied inputs are merged first so that no cut separates equal x values.
    """
    ux, inv, counts = np.unique(x, return_inverse=True, return_counts=True)
    sums = np.bincount(inv, weights=y)
    ybar = sums / counts
    K = int(min(K, ux.size - 1))
    if K <= 0:
        return np.empty(0), ux
    cuts = _segment_dp(ybar, counts.astype(float), K)
    return ux[cuts], ux


def _least_squares(G, y):
    """Coefficients of the LS fit, with a tiny ridge when G is rank deficient."""
    if G.shape[1] == 0:
        return np.zeros(0), False
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-12 or sv[0] == 0.0:
        A = G.T @ G
        A[np.diag_indices_from(A)] += RIDGE_FALLBACK
        return np.linalg.solve(A, G.T @ y), True
    return np.linalg.lstsq(G, y, rcond=None)[0], False


def _ramp_values(x, t, w):
    # 1 on [t, inf), linear on [t - w, t], 0 below
    return np.clip((x - (t - w)) / w, 0.0, 1.0)


def _ramp_network(steps, constant, F):
    """One-hidden-layer network sum_j h_j ramp(x; t_j, w_j) + constant, clipped at F."""
    W1, v1, W2 = [], [], []
    if constant != 0.0:
        # rho(x + 1) - rho(x) = 1 on [0, 1]
        W1 += [1.0, 1.0]
        v1 += [-1.0, 0.0]
        W2 += [constant, -constant]
    for t, w, h in steps:
        if h == 0.0:
            continue
        W1 += [1.0, 1.0]
        v1 += [t - w, t]
        W2 += [h / w, -h / w]
    if not W1:
        W1, v1, W2 = [0.0], [0.0], [0.0]
    net = relu_net.ReluNetwork([np.array(W1)[:, None], np.array(W2)[None, :]], [np.array(v1)])
    return net.with_clip(F) if F is not None else net


def _jump_count(hint):
    if hint.kind == "Jk":
        return int(hint.bounds["k"])
    if hint.kind == "I0":
        from .sparse_classes import get_base
        names = hint.bounds.get("phi_set", ["step"])
        per = max(len(get_base(nm).jump_points()) for nm in names)
        return int(hint.bounds["n_s"]) * per
    raise ValueError(hint.kind)


def _fit_jumps(data, hint, budget):
    x, y = data.xs[:, 0], data.ys
    n = data.n
    K = int(budget.get("K", _jump_count(hint)))
    locs, ux = segment_fit(x, y, K)
    steps = []
    for t in locs:
        j = np.searchsorted(ux, t)
        gap = t - ux[j - 1]
        steps.append((float(t), float(min(gap, budget.get("width", 1.0 / n)))))
    G = np.column_stack([np.ones(n)] + [_ramp_values(x, t, w) for t, w in steps])
    coef, fallback = _least_squares(G, y)
    info = {"K": K, "jump_locations": [t for t, _ in steps], "widths": [w for _, w in steps]}
    return G, coef, fallback, float(coef[0]), [(t, w, float(c)) for (t, w), c in zip(steps, coef[1:])], info


def jp_schedule(n, p, beta):
    """Dictionary depth m and size N for n samples: alpha = 1/p - 1/2."""
    alpha = 1.0 / p - 0.5
    m = max(1, math.ceil(2.0 * alpha / (beta * (2.0 * alpha + 1.0)) * math.log2(n)))
    N = math.ceil(n ** (1.0 / (2.0 * alpha + 1.0)))
    return m, N


def _bin_coefficients(x, y, wavelet, m, candidates):
    """Coefficient estimates from bin means at resolution 2^-m.

    Every candidate has scale < m and is therefore constant on each bin,
    so the inner product with the bin-mean histogram is exact for it.
    Empty bins take the global mean.
    """
    nb = 2 ** m
    b = np.minimum((x * nb).astype(np.int64), nb - 1)
    cnt = np.bincount(b, minlength=nb)
    tot = np.bincount(b, weights=y, minlength=nb)
    means = np.where(cnt > 0, tot / np.maximum(cnt, 1), np.mean(y))
    centers = (np.arange(nb) + 0.5) / nb
    out = np.empty(len(candidates))
    for i, idx in enumerate(candidates):
        out[i] = wavelets.eval_dyadic(wavelet, idx, centers) @ means / nb
    return out


def _fit_dyadic(data, hint, budget):
    x, y = data.xs[:, 0], data.ys
    n = data.n
    w = hint.wavelet or wavelets.DyadicWavelet.haar(1)
    if w.dim != 1:
        raise NotImplementedError("dyadic dictionary fit is 1-d only")
    p = float(hint.bounds.get("p", 2.0 / 3.0))
    beta = float(hint.bounds.get("beta", 1.0))
    m_def, N_def = jp_schedule(n, p, beta)
    m = int(budget.get("m", m_def))
    N = int(budget.get("N", N_def))
    width = float(budget.get("width", min(1.0 / n, 2.0 ** -(m + 2))))
    candidates = [idx for idx in wavelets.all_indices(1, m - 1)]
    selection = budget.get("selection", "bins")
    if selection == "bins":
        scores = _bin_coefficients(x, y, w, m, candidates)
    else:
        scores = np.array([wavelets.eval_dyadic(w, idx, x[:, None]) @ y / n for idx in candidates])
    order = np.argsort(-np.abs(scores), kind="stable")[:N]
    chosen = [candidates[i] for i in sorted(order)]
    atoms = []
    cols = []
    for idx in chosen:
        jumps = [(t, h) for t, h in wavelets.dyadic_jumps(w, idx) if t < 1.0]
        atoms.append(jumps)
        col = np.zeros(n)
        for t, h in jumps:
            col += h * _ramp_values(x, t, width)
        cols.append(col)
    G = np.column_stack(cols) if cols else np.zeros((n, 0))
    coef, fallback = _least_squares(G, y)
    merged = {}
    for jumps, c in zip(atoms, coef):
        for t, h in jumps:
            merged[t] = merged.get(t, 0.0) + c * h
    steps = [(t, width, hgt) for t, hgt in sorted(merged.items())]
    info = {"m": m, "N": N, "width": width, "selection": selection,
            "selected": [[idx.k[0], idx.l[0]] for idx in chosen]}
    return G, coef, fallback, 0.0, steps, info


def erm_deep_constructive(data, class_hint, budget=None):
    """Least squares over a fixed ramp dictionary realized as a ReLU network.

    Piecewise-constant hints (Jk, I0) place one ramp at each jump of the
    best K-jump step fit, found exactly by dynamic programming over the
    sorted inputs.  Wavelet hints (Jp, Kp) keep the N dyadic atoms of
    scale < m with the largest estimated coefficients.  Outer coefficients
    are the exact least-squares solution for the chosen dictionary; the
    output is clipped at the hint's sup bound.

    Parameters
    ----------
    class_hint : ClassHint or TargetFunction
    budget : dict, optional
        Overrides: ``K`` (jumps), ``m``, ``N``, ``width``, ``selection``.
    """
    if not isinstance(class_hint, ClassHint):
        class_hint = ClassHint.of(class_hint)
    if data.dim != 1:
        raise NotImplementedError("constructive fits are implemented for d = 1")
    budget = dict(budget or {})
    if class_hint.kind in ("Jk", "I0"):
        G, coef, fallback, const, steps, info = _fit_jumps(data, class_hint, budget)
    elif class_hint.kind in ("Jp", "Kp"):
        G, coef, fallback, const, steps, info = _fit_dyadic(data, class_hint, budget)
    else:
        raise ValueError(f"no dictionary for class kind {class_hint.kind!r}")
    F = float(class_hint.sup_bound) if class_hint.sup_bound > 0 else None
    net = _ramp_network(steps, const, F)
    fitted = G @ coef if G.shape[1] else np.zeros(data.n)
    info.update({
        "ridge_fallback": fallback,
        "coefficients": coef.tolist(),
        "empirical_risk_unclipped": float(np.mean((fitted - data.ys) ** 2)),
        "arch": net.arch.to_dict(),
    })
    est = FittedEstimator("deep_constructive", net, {"clip": F, **{k: v for k, v in budget.items()}},
                          info, 1)
    est.diagnostics["empirical_risk"] = empirical_risk(est, data)
    return est


# ---------------------------------------------------------------------------
# gradient descent on a fixed architecture
# ---------------------------------------------------------------------------

def loss_and_grad(weights, biases, X, y):
    """Mean squared error of an unclipped network and its gradient."""
    hs = [X]
    zs = []
    h = X
    for W, v in zip(weights[:-1], biases):
        z = h @ W.T - v
        zs.append(z)
        h = np.maximum(z, 0.0)
        hs.append(h)
    out = (h @ weights[-1].T)[:, 0]
    r = out - y
    n = y.size
    loss = float(np.mean(r * r))
    g_out = (2.0 / n) * r[:, None]
    gW = [None] * len(weights)
    gv = [None] * len(biases)
    gW[-1] = g_out.T @ hs[-1]
    delta = g_out @ weights[-1]
    for i in range(len(biases) - 1, -1, -1):
        delta = delta * (zs[i] > 0)
        gW[i] = delta.T @ hs[i]
        gv[i] = -np.sum(delta, axis=0)
        if i > 0:
            delta = delta @ weights[i]
    return loss, gW, gv


def init_network(arch, d, rng):
    """He-scaled Gaussian weights, zero biases, clipped to [-B, B]."""
    widths = [d] + [arch.D] * arch.L + [1]
    weights = [np.clip(rng.standard_normal((widths[i + 1], widths[i])) * math.sqrt(2.0 / widths[i]),
                       -arch.B, arch.B) for i in range(arch.L + 1)]
    biases = [np.zeros(arch.D) for _ in range(arch.L)]
    return weights, biases


def _prune(weights, biases, S):
    flat = np.concatenate([p.ravel() for p in weights + biases])
    if np.count_nonzero(flat) <= S:
        return weights, biases
    cutoff_idx = np.argsort(-np.abs(flat), kind="stable")[:S]
    keep = np.zeros(flat.size, bool)
    keep[cutoff_idx] = True
    out, pos = [], 0
    for p in weights + biases:
        q = p.ravel() * keep[pos:pos + p.size]
        out.append(q.reshape(p.shape))
        pos += p.size
    return out[:len(weights)], out[len(weights):]


def erm_deep_gd(data, arch, epochs=1000, step=0.01, seed=0, prune=False, init=None):
    """Full-batch gradient descent on squared loss over a fixed architecture.

    Parameters are clipped to [-B, B] after every step; with ``prune`` the
    S largest-magnitude parameters are kept at the end.  Carries no
    optimality guarantee.
    """
    rng = np.random.default_rng(seed)
    if init is not None:
        weights = [np.array(W, dtype=float) for W in init.weights]
        biases = [np.array(v, dtype=float) for v in init.biases]
    else:
        weights, biases = init_network(arch, data.dim, rng)
    history = []
    for epoch in range(epochs):
        loss, gW, gv = loss_and_grad(weights, biases, data.xs, data.ys)
        if not np.isfinite(loss) or loss > 1e100:
            raise DivergenceError(epoch, loss)
        history.append(loss)
        weights = [np.clip(W - step * g, -arch.B, arch.B) for W, g in zip(weights, gW)]
        biases = [np.clip(v - step * g, -arch.B, arch.B) for v, g in zip(biases, gv)]
    if prune:
        weights, biases = _prune(weights, biases, arch.S)
    net = relu_net.ReluNetwork(weights, biases, arch)
    final, _, _ = loss_and_grad(net.weights, net.biases, data.xs, data.ys)
    if not np.isfinite(final):
        raise DivergenceError(epochs, final)
    est = FittedEstimator("deep_gd", net, {"epochs": epochs, "step": step, "seed": seed,
                                           "prune": prune, "arch": arch.to_dict()},
                          {"loss_history_tail": history[-5:], "final_loss_unclipped": final,
                           "valid_arch": relu_net.validate_arch(net).ok}, data.dim)
    est.diagnostics["empirical_risk"] = empirical_risk(est, data)
    return est

