"""Dyadic wavelet systems on [0,1]^d.

Mother wavelets are registered with their breakpoints so that inner
products against piecewise-polynomial functions are computed exactly by a
breakpoint-aligned Gauss rule.  Multi-dimensional systems are tensor
products of per-coordinate mothers.
"""

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import quadrature
from .sparse_classes import (
    REL_TOL,
    CoeffSeq,
    InfeasibleClassError,
    TargetFunction,
    check_domain,
    merge_breaks_inclusive,
    sample_affine,
    tail_compactness_check,
    weak_lp_norm,
    _as_points,
)


class QuadratureError(RuntimeError):
    pass


class WaveletIndex(NamedTuple):
    """Scale vector ``k`` and shift vector ``l`` of a dyadic function."""

    k: tuple
    l: tuple

    @property
    def level(self):
        return max(self.k)

    @property
    def dim(self):
        return len(self.k)


def windex(k, l):
    """Validated index; ints are promoted to 1-d tuples."""
    k = (int(k),) if np.isscalar(k) else tuple(int(v) for v in k)
    l = (int(l),) if np.isscalar(l) else tuple(int(v) for v in l)
    if len(k) != len(l) or not k:
        raise ValueError("k and l must have the same positive length")
    for ki, li in zip(k, l):
        if ki < 0 or not 0 <= li < 2 ** ki:
            raise ValueError(f"invalid dyadic index k={k}, l={l}")
    return WaveletIndex(k, l)


def order_key(idx):
    """Coarse-to-fine total order: largest scale first, then lexicographic."""
    return (max(idx.k), idx.k, idx.l)


def all_indices(dim, max_level):
    """Every index with all scales at most ``max_level``, in total order."""
    out = []
    for ks in itertools.product(range(max_level + 1), repeat=dim):
        for ls in itertools.product(*[range(2 ** k) for k in ks]):
            out.append(WaveletIndex(tuple(ks), tuple(ls)))
    out.sort(key=order_key)
    return out


# ---------------------------------------------------------------------------
# mothers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mother:
    """1-d mother wavelet supported on [0,1] (zero outside)."""

    name: str
    func: object
    breakpoints: Optional[np.ndarray]
    degree: Optional[int] = 0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        inside = (t >= 0.0) & (t <= 1.0)
        if inside.any():
            out[inside] = self.func(t[inside])
        return out

    def jumps(self):
        """(location, height) of each discontinuity of the zero-extended mother."""
        if self.breakpoints is None or self.degree != 0:
            raise ValueError(f"mother {self.name!r} is not piecewise constant")
        eps = 1e-12
        out = []
        for t in merge_breaks_inclusive(self.breakpoints):
            jump = float(self(np.array([t + eps]))[0] - self(np.array([t - eps]))[0])
            if abs(jump) > 1e-12:
                out.append((float(t), jump))
        return out


_MOTHERS = {}


def _level_breaks(mother, max_level):
    # dyadic images of the mother's breakpoints up to max_level
    if mother.breakpoints is None:
        return None
    t = merge_breaks_inclusive(mother.breakpoints)
    pts = [(l + t) / 2.0 ** k for k in range(max_level + 1) for l in range(2 ** k)]
    return np.unique(np.concatenate(pts))


def register_mother(name, func, breakpoints=None, degree=0, check_level=3, tol=1e-10):
    """Register a mother after verifying orthonormality up to ``check_level``."""
    m = Mother(name, func, None if breakpoints is None else np.asarray(breakpoints, float), degree)
    w = DyadicWavelet((name,))
    _MOTHERS[name] = m
    try:
        G = gram_matrix(w, all_indices(1, check_level))
    except Exception:
        del _MOTHERS[name]
        raise
    err = np.max(np.abs(G - np.eye(G.shape[0])))
    if err > tol:
        del _MOTHERS[name]
        raise ValueError(f"mother {name!r} fails orthonormality: max Gram error {err:.3g}")
    return m


def get_mother(name):
    try:
        return _MOTHERS[name]
    except KeyError:
        raise KeyError(f"unknown mother wavelet {name!r}") from None


@dataclass(frozen=True)
class DyadicWavelet:
    """Tensor-product dyadic system, one mother name per coordinate."""

    mothers: tuple

    @classmethod
    def haar(cls, dim=1):
        return cls(("haar",) * dim)

    @property
    def dim(self):
        return len(self.mothers)

    def mother(self, axis):
        return get_mother(self.mothers[axis])

    @property
    def piecewise_constant(self):
        return all(get_mother(m).degree == 0 for m in self.mothers)


def _axis_candidates(mother, k, x):
    """The two shifts whose support can contain x, with scaled mother values.

    A shift ``l`` contributes only when 2^k x - l lies in [0, 1]; that is
    l = floor(2^k x), or l = floor(2^k x) - 1 at the right endpoint.
    """
    s = 2.0 ** k * x
    l0 = np.floor(s)
    y0 = s - l0
    ls = np.stack([l0, l0 - 1.0], axis=1).astype(np.int64)
    vals = np.stack([mother(y0), mother(y0 + 1.0)], axis=1) * 2.0 ** (k / 2.0)
    valid = (ls >= 0) & (ls < 2 ** k)
    vals = np.where(valid, vals, 0.0)
    ls = np.where(valid, ls, 0)
    return ls, vals


def _combos(w, ks, pts):
    """Yield (shift tuple arrays, product values) over the 2^d candidate combos."""
    per_axis = [_axis_candidates(w.mother(i), ks[i], pts[:, i]) for i in range(w.dim)]
    for choice in itertools.product((0, 1), repeat=w.dim):
        ls = tuple(per_axis[i][0][:, c] for i, c in enumerate(choice))
        v = np.ones(pts.shape[0])
        for i, c in enumerate(choice):
            v = v * per_axis[i][1][:, c]
        yield ls, v


def eval_dyadic(w, idx, x):
    """Evaluate 2^{|k|/2} prod_i psi_i(2^{k_i} x_i - l_i), zero-extended."""
    idx = windex(idx.k, idx.l) if isinstance(idx, WaveletIndex) else windex(*idx)
    if idx.dim != w.dim:
        raise ValueError("index dimension does not match the wavelet")
    pts, scalar = _as_points(x, w.dim)
    out = np.ones(pts.shape[0])
    for i in range(w.dim):
        k, l = idx.k[i], idx.l[i]
        out = out * 2.0 ** (k / 2.0) * w.mother(i)(2.0 ** k * pts[:, i] - l)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# expansions
# ---------------------------------------------------------------------------

class WaveletExpansion:
    """Finite expansion sum a_idx psi_idx; immutable.

    Parameters
    ----------
    wavelet : DyadicWavelet
    coeffs : CoeffSeq keyed by WaveletIndex
    bounds : dict, optional
        Claimed class constants (p, C1, C2, beta).
    meta : dict, optional
        Free-form provenance such as sampler acceptance counts.
    """

    def __init__(self, wavelet, coeffs, bounds=None, meta=None):
        self.wavelet = wavelet
        if not isinstance(coeffs, CoeffSeq):
            coeffs = CoeffSeq(coeffs)
        for key in coeffs.keys:
            if not isinstance(key, WaveletIndex) or key.dim != wavelet.dim:
                raise ValueError(f"bad coefficient key {key!r}")
        self.coeffs = coeffs
        self.bounds = dict(bounds if bounds is not None else coeffs.bounds)
        self.meta = dict(meta or {})
        groups = {}
        for key, a in coeffs.items():
            groups.setdefault(key.k, []).append((key.l, a))
        self._tables = {}
        for ks, entries in sorted(groups.items()):
            table = np.zeros(tuple(2 ** k for k in ks))
            for ls, a in entries:
                table[ls] = a
            self._tables[ks] = table

    @property
    def dim(self):
        return self.wavelet.dim

    @property
    def max_level(self):
        return max((key.level for key in self.coeffs.keys), default=0)

    def evaluate(self, pts):
        out = np.zeros(pts.shape[0])
        for ks, table in self._tables.items():
            for ls, v in _combos(self.wavelet, ks, pts):
                out += table[ls] * v
        return out

    def __call__(self, x):
        pts, scalar = _as_points(x, self.dim)
        vals = self.evaluate(pts)
        return float(vals[0]) if scalar else vals

    def breakpoints(self):
        level = self.max_level
        out = []
        for i in range(self.dim):
            b = _level_breaks(self.wavelet.mother(i), level)
            if b is None:
                return None
            out.append(b)
        return out

    def sup_norm(self):
        """Exact for piecewise-constant mothers, else a 2^14-point grid maximum."""
        if len(self.coeffs) == 0:
            return 0.0
        brk = self.breakpoints()
        if self.wavelet.piecewise_constant and brk is not None:
            axes = [np.unique(np.concatenate([(b[:-1] + b[1:]) / 2.0, b])) for b in brk]
        else:
            side = int(round((2 ** 14) ** (1.0 / self.dim)))
            axes = [np.linspace(0.0, 1.0, side)] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return float(np.max(np.abs(self.evaluate(pts))))

    def to_dict(self):
        return {
            "mothers": list(self.wavelet.mothers),
            "coeffs": [{"k": list(key.k), "l": list(key.l), "a": a}
                       for key, a in sorted(self.coeffs.items(), key=lambda t: order_key(t[0]))],
            "bounds": dict(self.bounds),
        }

    @classmethod
    def from_dict(cls, d):
        w = DyadicWavelet(tuple(d["mothers"]))
        coeffs = CoeffSeq([(windex(c["k"], c["l"]), c["a"]) for c in d["coeffs"]],
                          d.get("bounds"))
        return cls(w, coeffs, d.get("bounds"))


def synthesize(e):
    """Wrap an expansion as a target function of kind ``Jp``."""
    return TargetFunction("Jp", e, e.sup_norm(), e.dim, dict(e.bounds))


def _quadrature_axes(w, f, max_level, refine_to=None):
    fb = f.breakpoints() if hasattr(f, "breakpoints") else None
    axes = []
    for i in range(w.dim):
        mb = _level_breaks(w.mother(i), max_level)
        if mb is None or fb is None:
            return None
        b = quadrature.merge_breaks(mb, fb[i])
        if refine_to is not None:
            b = quadrature.refine(b, refine_to)
        axes.append(b)
    return axes


def _project(w, vals, nodes, weights, max_level):
    """Inner products of sampled values with every index up to max_level."""
    out = {}
    fw = vals * weights
    for ks in itertools.product(range(max_level + 1), repeat=w.dim):
        shape = tuple(2 ** k for k in ks)
        acc = np.zeros(shape)
        for ls, v in _combos(w, ks, nodes):
            np.add.at(acc, ls, fw * v)
        for ls in itertools.product(*[range(s) for s in shape]):
            out[WaveletIndex(tuple(ks), tuple(ls))] = acc[ls]
    return out


def analyze(w, f, max_level, drop_below=1e-12):
    """Coefficients <f, psi_idx> for every index with scales <= max_level.

    The exact path applies when ``f`` reports per-axis breakpoints and the
    mothers are piecewise polynomial; cells then align with every
    discontinuity and a Gauss rule integrates each cell exactly.  Otherwise
    a refined rule is run at two resolutions and any coefficient whose
    values disagree by more than 1e-9 raises ``QuadratureError``.
    """
    degree = getattr(f, "degree", None)
    mothers_deg = [w.mother(i).degree for i in range(w.dim)]
    axes = _quadrature_axes(w, f, max_level)
    if axes is not None and degree is not None and None not in mothers_deg:
        q = max(1, (degree + max(mothers_deg)) // 2 + 1)
        nodes, weights = quadrature.tensor_nodes(axes, q)
        vals = f.params.evaluate(nodes) if isinstance(f, TargetFunction) else f(nodes)
        coeffs = _project(w, vals, nodes, weights, max_level)
    else:
        results = []
        for width in (2.0 ** -(max_level + 5), 2.0 ** -(max_level + 6)):
            axes = _quadrature_axes(w, f, max_level, refine_to=width)
            if axes is None:
                axes = [quadrature.refine(quadrature.merge_breaks(_level_breaks(w.mother(i), max_level)
                                                                  if w.mother(i).breakpoints is not None else None),
                                          width) for i in range(w.dim)]
            nodes, weights = quadrature.tensor_nodes(axes, 6)
            vals = f.params.evaluate(nodes) if isinstance(f, TargetFunction) else f(nodes)
            results.append(_project(w, vals, nodes, weights, max_level))
        coarse, coeffs = results
        for key in coeffs:
            if abs(coeffs[key] - coarse[key]) > 1e-9:
                raise QuadratureError(f"quadrature did not converge at index {key}")
    kept = {k: v for k, v in coeffs.items() if abs(v) > drop_below}
    ordered = sorted(kept.items(), key=lambda t: order_key(t[0]))
    return CoeffSeq(ordered)


def gram_matrix(w, indices):
    """Exact Gram matrix of the given dyadic functions (piecewise-polynomial mothers)."""
    level = max(idx.level for idx in indices)
    axes = []
    for i in range(w.dim):
        b = _level_breaks(w.mother(i), level)
        if b is None:
            raise ValueError("Gram matrix needs mothers with known breakpoints")
        axes.append(b)
    deg = max(w.mother(i).degree or 0 for i in range(w.dim))
    nodes, weights = quadrature.tensor_nodes(axes, deg + 1)
    Phi = np.stack([eval_dyadic(w, idx, nodes) for idx in indices], axis=1)
    return Phi.T @ (Phi * weights[:, None])


# ---------------------------------------------------------------------------
# class samplers
# ---------------------------------------------------------------------------

def _levels_of(indices):
    return np.array([idx.level for idx in indices])


def sample_jp(w, p, C1, C2, beta, max_level, rng, max_tries=1000):
    """Random expansion satisfying the weak-lp and dyadic tail bounds.

    The i-th index in coarse-to-fine order receives magnitude
    C1 i^(-1/p) u_i with u_i ~ U[1/2, 1] and a random sign.  Draws failing
    the tail bound are rejected.
    """
    if not 0.0 < p < 2.0:
        raise ValueError("p must lie in (0, 2)")
    if min(C1, C2, beta) <= 0:
        raise ValueError("C1, C2, beta must be positive")
    indices = all_indices(w.dim, max_level)
    levels = _levels_of(indices)
    ranks = np.arange(1, len(indices) + 1, dtype=float)
    envelope = C1 * ranks ** (-1.0 / p)
    ms = np.arange(max_level + 1)
    bound = C2 * 2.0 ** (-beta * ms) * (1 + REL_TOL)
    for attempt in range(1, max_tries + 1):
        a = envelope * rng.uniform(0.5, 1.0, size=ranks.size)
        a = a * rng.choice([-1.0, 1.0], size=ranks.size)
        energy = np.bincount(levels, weights=a ** 2, minlength=max_level + 1)
        tails = np.cumsum(energy[::-1])[::-1]
        if np.all(tails <= bound):
            bounds = {"p": p, "C1": C1, "C2": C2, "beta": beta}
            coeffs = CoeffSeq(zip(indices, a), bounds)
            return WaveletExpansion(w, coeffs, bounds, {"attempts": attempt})
    raise InfeasibleClassError(
        f"tail bound not met in {max_tries} draws (p={p}, C1={C1}, C2={C2}, beta={beta})")


def in_jp(e, p, C1, C2, beta):
    return (weak_lp_norm(e.coeffs, p) <= C1 * (1 + REL_TOL)
            and tail_compactness_check(e.coeffs, C2, beta, "dyadic").ok)


class KpSum:
    """sum_j f_j(A_j x - b_j) with each f_j a wavelet expansion."""

    def __init__(self, terms):
        self.terms = tuple((np.array(A, float), np.array(b, float), e) for A, b, e in terms)
        self.dim = self.terms[0][2].dim if self.terms else 1

    def evaluate(self, pts):
        out = np.zeros(pts.shape[0])
        for A, b, e in self.terms:
            out += e.evaluate(pts @ A.T - b)
        return out

    def breakpoints(self):
        if self.dim != 1:
            return None
        pts = []
        for A, b, e in self.terms:
            brk = e.breakpoints()
            if brk is None:
                return None
            pts.append((brk[0] + b[0]) / A[0, 0])
        return [np.unique(np.concatenate(pts))]

    def to_dict(self):
        return {"terms": [{"A": A.tolist(), "b": b.tolist(), "expansion": e.to_dict()}
                          for A, b, e in self.terms]}

    @classmethod
    def from_dict(cls, d):
        return cls([(t["A"], t["b"], WaveletExpansion.from_dict(t["expansion"])) for t in d["terms"]])


def payload_from_dict(kind, d):
    if kind == "Jp":
        return WaveletExpansion.from_dict(d)
    if kind == "Kp":
        return KpSum.from_dict(d)
    raise ValueError(kind)


def make_kp(terms, bounds=None):
    """Target of kind Kp from (A, b, expansion) triples.

    The sup bound is the sum of per-term sup norms (each on a 2^14-point
    grid) inflated by 5%.
    """
    s = KpSum(terms)
    total = 0.0
    for _, _, e in s.terms:
        side = int(round((2 ** 14) ** (1.0 / e.dim)))
        grid = np.linspace(0.0, 1.0, side)
        mesh = np.meshgrid(*([grid] * e.dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        total += float(np.max(np.abs(e.evaluate(pts)), initial=0.0))
    bounds = dict(bounds or {})
    bounds.setdefault("n_s", len(s.terms))
    return TargetFunction("Kp", s, 1.05 * total, s.dim, bounds)


def sample_kp(psi_set, n_s, p, C1, C2, C3, beta, max_level, rng, max_tries=1000):
    """Random member of the composed class: n_s affine-warped J^p draws."""
    if n_s < 1 or C3 <= 0:
        raise ValueError("need n_s >= 1 and C3 > 0")
    wavelets = list(psi_set)
    dims = {w.dim for w in wavelets}
    if len(dims) != 1:
        raise ValueError("all wavelets in psi_set must share a dimension")
    d = dims.pop()
    terms = []
    for _ in range(n_s):
        w = wavelets[rng.integers(len(wavelets))]
        e = sample_jp(w, p, C1, C2, beta, max_level, rng, max_tries)
        A, b = sample_affine(d, C3, rng)
        terms.append((A, b, e))
    return make_kp(terms, {"p": p, "C1": C1, "C2": C2, "C3": C3, "beta": beta, "n_s": n_s})


def in_kp(f, n_s, p, C1, C2, C3, beta):
    terms = f.params.terms
    if len(terms) > n_s:
        return False
    for A, b, e in terms:
        det = abs(np.linalg.det(A))
        if det == 0 or 1.0 / det > C3 * (1 + REL_TOL):
            return False
        if np.max(np.abs(A)) > C3 * (1 + REL_TOL) or np.max(np.abs(b)) > C3 * (1 + REL_TOL):
            return False
        if not in_jp(e, p, C1, C2, beta):
            return False
    return True


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Truncation:
    expansion: WaveletExpansion
    discarded_energy: float
    bound: Optional[float] = None
    kept: tuple = field(default=())


def top_n_truncate(e, N, m):
    """Keep the N largest |a| among indices whose largest scale is below m.

    ``discarded_energy`` is the exact sum of squares of every dropped
    coefficient, which by Parseval equals the squared L2 error.  When the
    expansion carries class bounds, ``bound`` is
    C2 2^(-beta m) + C1^2 p/(2-p) N^(-2 alpha) with alpha = 1/p - 1/2.
    """
    if N < 1 or m < 0:
        raise ValueError("need N >= 1 and m >= 0")
    items = sorted(e.coeffs.items(), key=lambda t: order_key(t[0]))
    cand = [(key, a) for key, a in items if key.level < m]
    cand.sort(key=lambda t: -abs(t[1]))  # stable: ties keep coarse-to-fine order
    kept = cand[:N]
    kept_keys = {key for key, _ in kept}
    dropped = sum(a * a for key, a in items if key not in kept_keys)
    kept_sorted = sorted(kept, key=lambda t: order_key(t[0]))
    out = WaveletExpansion(e.wavelet, CoeffSeq(kept_sorted, e.bounds), e.bounds)
    bound = None
    b = e.bounds
    if all(name in b for name in ("p", "C1", "C2", "beta")):
        alpha = 1.0 / b["p"] - 0.5
        bound = (b["C2"] * 2.0 ** (-b["beta"] * m)
                 + b["C1"] ** 2 * b["p"] / (2.0 - b["p"]) * N ** (-2.0 * alpha))
    return Truncation(out, float(dropped), bound, tuple(k for k, _ in kept_sorted))


def dyadic_jumps(w, idx):
    """Jump locations and heights of a 1-d dyadic function with a piecewise-constant mother."""
    if w.dim != 1:
        raise ValueError("jump decomposition is 1-d only")
    k, l = idx.k[0], idx.l[0]
    scale = 2.0 ** (k / 2.0)
    return [((l + t) / 2.0 ** k, scale * h) for t, h in w.mother(0).jumps()]


def _haar(t):
    return np.where(t < 0.5, 1.0, np.where(t < 1.0, -1.0, 0.0))


register_mother("haar", _haar, breakpoints=[0.5], degree=0)
