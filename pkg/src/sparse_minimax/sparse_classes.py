"""Sparse target-function classes on the unit cube.

Holds the coefficient-sequence norms (weak lp, l0, tail compactness), the
piecewise-constant class with at most k jumps, the l0-bounded affine class
built from registered base functions, and the common ``TargetFunction``
wrapper with its JSON form.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import quadrature

REL_TOL = 1e-12


class InfeasibleClassError(ValueError):
    """Raised when a rejection sampler exhausts its budget."""


# ---------------------------------------------------------------------------
# coefficient sequences
# ---------------------------------------------------------------------------

class CoeffSeq:
    """Immutable sparse coefficient sequence.

    Keys are positive ordinals (1-based) or wavelet indices.  Zero entries
    are dropped on construction, so ``len`` is the l0 norm.

    Parameters
    ----------
    entries : mapping or iterable of (key, value)
    bounds : dict, optional
        Class bounds carried alongside (p, C1, C2, beta).
    """

    __slots__ = ("_keys", "_values", "bounds")

    def __init__(self, entries=(), bounds=None):
        items = entries.items() if hasattr(entries, "items") else entries
        keys, vals = [], []
        for k, v in items:
            v = float(v)
            if v != 0.0:
                keys.append(k)
                vals.append(v)
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate keys in coefficient sequence")
        values = np.array(vals, dtype=float)
        values.setflags(write=False)
        self._keys = tuple(keys)
        self._values = values
        self.bounds = dict(bounds or {})

    @classmethod
    def from_dense(cls, values, bounds=None):
        """Ordinal sequence a_1, a_2, ... from a dense array."""
        return cls(((i + 1, v) for i, v in enumerate(np.ravel(values))), bounds)

    @property
    def keys(self):
        return self._keys

    @property
    def values(self):
        return self._values

    def items(self):
        return zip(self._keys, self._values.tolist())

    def as_dict(self):
        return dict(self.items())

    def __len__(self):
        return len(self._keys)

    def __iter__(self):
        return iter(self._keys)

    def __getitem__(self, key):
        try:
            return float(self._values[self._keys.index(key)])
        except ValueError:
            return 0.0

    def __eq__(self, other):
        if not isinstance(other, CoeffSeq):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __repr__(self):
        return f"CoeffSeq(nnz={len(self)})"


def _abs_values(a):
    if isinstance(a, CoeffSeq):
        return np.abs(a.values)
    a = np.abs(np.asarray(a, dtype=float).ravel())
    return a[a != 0]


def weak_lp_norm(a, p):
    """sup_i i^(1/p) |a|_(i) over the decreasing rearrangement.

    Parameters
    ----------
    a : CoeffSeq or array_like
    p : float in (0, 2)
    """
    if not 0.0 < p < 2.0:
        raise ValueError(f"p must lie in (0, 2), got {p}")
    mags = np.sort(_abs_values(a))[::-1]
    if mags.size == 0:
        return 0.0
    ranks = np.arange(1, mags.size + 1, dtype=float)
    return float(np.max(ranks ** (1.0 / p) * mags))


def lp_norm(a, p):
    """Ordinary (quasi-)norm (sum |a_i|^p)^(1/p)."""
    if p <= 0:
        raise ValueError("p must be positive")
    mags = _abs_values(a)
    if mags.size == 0:
        return 0.0
    # factor out the largest magnitude so tiny entries do not underflow
    top = mags.max()
    return float(top * np.sum((mags / top) ** p) ** (1.0 / p))


def l0_norm(a):
    """Number of nonzero entries."""
    return int(_abs_values(a).size)


@dataclass(frozen=True)
class TailCheck:
    ok: bool
    first_violation: Optional[int]

    def __bool__(self):
        return self.ok


def _key_level(key):
    # wavelet indices expose .level; ordinals are plain ints
    return key.level if hasattr(key, "level") else int(key)


def tail_compactness_check(a, C2, beta, ordering="ordinal"):
    """Check the geometric or polynomial tail bound on squared coefficients.

    ``ordinal``: sum_{i > m} a_i^2 <= C2 m^(-beta) for all m >= 1.
    ``dyadic``: sum over indices with level >= m of a^2 <= C2 2^(-beta m)
    for all m >= 0, where the level of a multi-index is its largest scale.

    Returns
    -------
    TailCheck
        Truthy iff the bound holds; otherwise carries the smallest
        violating m.
    """
    if C2 <= 0 or beta <= 0:
        raise ValueError("C2 and beta must be positive")
    if ordering not in ("ordinal", "dyadic"):
        raise ValueError(f"unknown ordering {ordering!r}")
    if isinstance(a, CoeffSeq):
        keys, vals = a.keys, a.values
    else:
        seq = CoeffSeq.from_dense(a)
        keys, vals = seq.keys, seq.values
    if len(keys) == 0:
        return TailCheck(True, None)
    levels = np.array([_key_level(k) for k in keys])
    sq = vals ** 2
    top = int(levels.max())
    # energy at each level, then suffix sums
    energy = np.bincount(levels, weights=sq, minlength=top + 1)
    if ordering == "ordinal":
        if levels.min() < 1:
            raise ValueError("ordinal keys must be positive integers")
        # tail after m: sum over i >= m + 1
        suffix = np.cumsum(energy[::-1])[::-1]
        ms = np.arange(1, top + 1)
        tails = np.append(suffix, 0.0)[ms + 1]
        bound = C2 * ms.astype(float) ** (-beta)
    else:
        suffix = np.cumsum(energy[::-1])[::-1]
        ms = np.arange(0, top + 1)
        tails = suffix
        bound = C2 * 2.0 ** (-beta * ms)
    bad = np.nonzero(tails > bound * (1 + REL_TOL))[0]
    if bad.size:
        return TailCheck(False, int(ms[bad[0]]))
    return TailCheck(True, None)


# ---------------------------------------------------------------------------
# base functions for affine atoms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaseFunction:
    """Registered base function on [0,1]^d with unit L2 norm.

    ``func`` receives points already inside the cube, shape (m, d).
    ``breakpoints`` lists, per axis, the locations in [0,1] where the
    function is not smooth; ``None`` when unknown.
    """

    name: str
    dim: int
    func: Callable
    sup_norm: float
    breakpoints: Optional[tuple] = None
    degree: Optional[int] = 0

    def __call__(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        inside = np.all((z >= 0.0) & (z <= 1.0), axis=1)
        out = np.zeros(z.shape[0])
        if inside.any():
            out[inside] = self.func(z[inside])
        return out

    def jump_points(self):
        """Discontinuities of the zero-extended 1-d function on the real line."""
        if self.dim != 1 or self.breakpoints is None:
            raise ValueError("jump points need a 1-d base with known breakpoints")
        pts = merge_breaks_inclusive(self.breakpoints[0])
        eps = 1e-12
        out = []
        for t in pts:
            left = self(np.array([[t - eps]]))[0]
            right = self(np.array([[t + eps]]))[0]
            if abs(right - left) > 1e-9:
                out.append((float(t), float(right - left)))
        return out


def merge_breaks_inclusive(b):
    return np.unique(np.concatenate([[0.0, 1.0], np.asarray(b, dtype=float)]))


_BASES = {}


def register_base(name, func, dim=1, sup_norm=None, breakpoints=None,
                  degree=0, tol=1e-8):
    """Register a base function after checking its L2 norm is one.

    The norm is computed with the composite Gauss rule on the breakpoint
    grid (refined to width 1/64 per axis).
    """
    if breakpoints is None:
        axes = [np.linspace(0.0, 1.0, 257)] * dim
        q = 8
    else:
        axes = [quadrature.refine(merge_breaks_inclusive(b), 1 / 64) for b in breakpoints]
        q = 1 if degree == 0 else max(2, int(degree) + 1)
    nodes, weights = quadrature.tensor_nodes(axes, q)
    vals = func(nodes)
    norm2 = float(np.dot(weights, vals ** 2))
    if abs(norm2 - 1.0) > tol:
        raise ValueError(f"base {name!r} has squared L2 norm {norm2}, expected 1")
    if sup_norm is None:
        sup_norm = float(np.max(np.abs(vals)))
    base = BaseFunction(name, dim, func, float(sup_norm),
                        None if breakpoints is None else tuple(np.asarray(b, float) for b in breakpoints),
                        degree)
    _BASES[name] = base
    return base


def get_base(name):
    try:
        return _BASES[name]
    except KeyError:
        raise KeyError(f"unknown base function {name!r}") from None


def _haar_1d(t):
    return np.where(t < 0.5, 1.0, np.where(t < 1.0, -1.0, 0.0))


register_base("step", lambda z: np.where(z[:, 0] >= 0.5, np.sqrt(2.0), 0.0),
              dim=1, sup_norm=np.sqrt(2.0), breakpoints=([0.5],))
register_base("haar", lambda z: _haar_1d(z[:, 0]), dim=1, sup_norm=1.0,
              breakpoints=([0.5],))
register_base("step2d", lambda z: np.where(z[:, 0] >= 0.5, np.sqrt(2.0), 0.0),
              dim=2, sup_norm=np.sqrt(2.0), breakpoints=([0.5], []))
register_base("haar2d", lambda z: _haar_1d(z[:, 0]) * _haar_1d(z[:, 1]),
              dim=2, sup_norm=1.0, breakpoints=([0.5], [0.5]))


# ---------------------------------------------------------------------------
# class representations
# ---------------------------------------------------------------------------

def _as_points(x, dim):
    """Coerce input to shape (m, dim); report whether it was a scalar."""
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0 or (arr.ndim == 1 and dim > 1 and arr.size == dim)
    if dim == 1:
        pts = arr.reshape(-1, 1)
    else:
        pts = arr.reshape(-1, dim) if arr.ndim == 1 else arr
        if pts.ndim != 2 or pts.shape[1] != dim:
            raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return pts, scalar


def check_domain(pts):
    if not np.all(np.isfinite(pts)) or pts.min(initial=0.0) < 0.0 or pts.max(initial=0.0) > 1.0:
        raise ValueError("evaluation point outside the unit cube")


class PiecewiseConstantFn:
    """a0 + sum_i a_i 1_[t_i, 1] on [0, 1], stored in normalized form."""

    def __init__(self, a0, jumps=()):
        merged = {}
        for t, a in jumps:
            t, a = float(t), float(a)
            if not 0.0 < t <= 1.0:
                raise ValueError(f"jump location {t} outside (0, 1]")
            merged[t] = merged.get(t, 0.0) + a
        pairs = sorted((t, a) for t, a in merged.items() if a != 0.0)
        self.a0 = float(a0)
        self.locations = np.array([t for t, _ in pairs], dtype=float)
        self.heights = np.array([a for _, a in pairs], dtype=float)
        self.locations.setflags(write=False)
        self.heights.setflags(write=False)
        self._levels = self.a0 + np.concatenate([[0.0], np.cumsum(self.heights)])

    @property
    def jumps(self):
        return list(zip(self.locations.tolist(), self.heights.tolist()))

    def evaluate(self, pts):
        idx = np.searchsorted(self.locations, pts[:, 0], side="right")
        return self._levels[idx]

    def breakpoints(self):
        return [self.locations.copy()]

    def sup_norm(self):
        return float(np.max(np.abs(self._levels)))

    def to_dict(self):
        return {"a0": self.a0, "jumps": [[t, a] for t, a in self.jumps]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["a0"], [tuple(j) for j in d["jumps"]])


def total_variation(f):
    """Exact total variation of a normalized piecewise-constant function."""
    if isinstance(f, TargetFunction):
        f = f.params
    return float(np.sum(np.abs(f.heights)))


@dataclass(frozen=True)
class AffineAtom:
    """Atom c * phi(A x - b) with phi a registered base function."""

    c: float
    A: np.ndarray
    b: np.ndarray
    phi_id: str

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).copy()
        if A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise ValueError("A must be square and b must match its size")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self):
        return self.A.shape[0]

    def bound_violations(self, C):
        """Names of the class bounds this atom breaks for constant C."""
        out = []
        det = abs(np.linalg.det(self.A))
        if det == 0.0 or 1.0 / det > C * (1 + REL_TOL):
            out.append("det")
        if np.max(np.abs(self.A)) > C * (1 + REL_TOL):
            out.append("A")
        if np.max(np.abs(self.b)) > C * (1 + REL_TOL):
            out.append("b")
        if abs(self.c) > C * (1 + REL_TOL):
            out.append("c")
        return out

    def evaluate(self, pts):
        z = pts @ self.A.T - self.b
        return self.c * get_base(self.phi_id)(z)

    def to_dict(self):
        return {"c": self.c, "A": self.A.tolist(), "b": self.b.tolist(), "phi": self.phi_id}

    @classmethod
    def from_dict(cls, d):
        return cls(d["c"], np.array(d["A"], dtype=float), np.array(d["b"], dtype=float), d["phi"])


class AffineSum:
    """Finite sum of affine atoms, the payload of the I0 kind."""

    def __init__(self, atoms):
        self.atoms = tuple(atoms)
        dims = {a.dim for a in self.atoms}
        if len(dims) > 1:
            raise ValueError("atoms of mixed dimension")
        self.dim = dims.pop() if dims else 1

    def evaluate(self, pts):
        out = np.zeros(pts.shape[0])
        for atom in self.atoms:
            out += atom.evaluate(pts)
        return out

    def breakpoints(self):
        if self.dim != 1:
            return None
        pts = []
        for atom in self.atoms:
            base = get_base(atom.phi_id)
            if base.breakpoints is None:
                return None
            z = merge_breaks_inclusive(base.breakpoints[0])
            pts.append((z + atom.b[0]) / atom.A[0, 0])
        return [np.unique(np.concatenate(pts))] if pts else [np.array([])]

    def sup_bound(self):
        return float(sum(abs(a.c) * get_base(a.phi_id).sup_norm for a in self.atoms))

    def to_dict(self):
        return {"atoms": [a.to_dict() for a in self.atoms]}

    @classmethod
    def from_dict(cls, d):
        return cls([AffineAtom.from_dict(a) for a in d["atoms"]])


class CustomFn:
    """Wrap an arbitrary vectorized callable taking points of shape (m, d)."""

    def __init__(self, func, breaks=None):
        self.func = func
        self._breaks = breaks

    def evaluate(self, pts):
        return np.asarray(self.func(pts), dtype=float).reshape(-1)

    def breakpoints(self):
        return None if self._breaks is None else [np.asarray(b, float) for b in self._breaks]


@dataclass(frozen=True)
class TargetFunction:
    """Evaluatable regression function with class metadata.

    Parameters
    ----------
    kind : {"Jk", "I0", "Jp", "Kp", "Custom"}
    params : payload object exposing ``evaluate(points)`` and ``breakpoints()``
    sup_bound : float
        Known bound on the sup norm, used as the clip level.
    dim : int
    bounds : dict
        Class constants (k, C, n_s, p, C1, C2, C3, beta, ...).
    """

    kind: str
    params: object
    sup_bound: float
    dim: int = 1
    bounds: dict = field(default_factory=dict, compare=False)

    def __call__(self, x):
        return eval_target(self, x)

    def breakpoints(self):
        return self.params.breakpoints()

    # piecewise constant payloads let quadrature use a single node per cell
    @property
    def degree(self):
        return 0 if self.kind in ("Jk", "Jp") else None


def eval_target(f, x):
    """Evaluate a target at points of [0,1]^d.

    Accepts a scalar (d = 1), a single d-vector, or an (m, d) array.
    """
    pts, scalar = _as_points(x, f.dim)
    check_domain(pts)
    vals = f.params.evaluate(pts)
    return float(vals[0]) if scalar else vals


def custom_target(func, sup_bound, dim=1, breakpoints=None):
    return TargetFunction("Custom", CustomFn(func, breakpoints), float(sup_bound), dim)


def make_jk(a0, jumps, k=None, C=None):
    pc = PiecewiseConstantFn(a0, jumps)
    bounds = {"k": k if k is not None else len(pc.locations),
              "C": C if C is not None else max(abs(pc.a0), total_variation(pc))}
    return TargetFunction("Jk", pc, pc.sup_norm(), 1, bounds)


def make_i0(atoms, C=None):
    s = AffineSum(atoms)
    if C is None:
        C = 0.0
        for a in s.atoms:
            det = abs(np.linalg.det(a.A))
            C = max(C, 1.0 / det, np.max(np.abs(a.A)), np.max(np.abs(a.b)), abs(a.c))
    bounds = {"n_s": len(s.atoms), "C": float(C)}
    return TargetFunction("I0", s, s.sup_bound(), s.dim, bounds)


# ---------------------------------------------------------------------------
# samplers and validators
# ---------------------------------------------------------------------------

def sample_jk(k, C, rng):
    """Random member of the piecewise-constant class with at most k jumps.

    a0 ~ U[-C, C]; locations ~ U(0, 1]; magnitudes are a uniform simplex
    point scaled to total mass C with independent random signs.
    """
    if k < 1 or C <= 0:
        raise ValueError("need k >= 1 and C > 0")
    a0 = rng.uniform(-C, C)
    locs = 1.0 - rng.uniform(0.0, 1.0, size=k)
    mags = rng.dirichlet(np.ones(k)) * C
    signs = rng.choice([-1.0, 1.0], size=k)
    return make_jk(a0, zip(locs, mags * signs), k=k, C=C)


def in_jk(f, k, C):
    """Membership test for the piecewise-constant class."""
    pc = f.params if isinstance(f, TargetFunction) else f
    return (len(pc.locations) <= k and abs(pc.a0) <= C * (1 + REL_TOL)
            and total_variation(pc) <= C * (1 + REL_TOL))


def sample_affine(d, C, rng, max_rounds=1000):
    """Draw (A, b) with |det A|^-1, max|A_ij|, max|b_i| all at most C.

    A starts diagonally dominant: diagonal magnitudes in [lo, C], small
    off-diagonal entries, random signs; the determinant bound is enforced
    by rejection.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    lo = max(C / 2.0, min(1.0, C))
    spread = 0.5 * min(1.0, C) / max(d - 1, 1)
    for _ in range(max_rounds):
        diag = rng.uniform(lo, C, size=d) * rng.choice([-1.0, 1.0], size=d)
        A = rng.uniform(-spread, spread, size=(d, d)) if d > 1 else np.zeros((1, 1))
        np.fill_diagonal(A, diag)
        det = abs(np.linalg.det(A))
        if det > 0 and 1.0 / det <= C and np.max(np.abs(A)) <= C:
            b = rng.uniform(-C, C, size=d)
            return A, b
    raise InfeasibleClassError(f"no admissible affine map for d={d}, C={C} "
                               f"after {max_rounds} rounds")


def sample_i0(n_s, C, phi_set, rng, d=1, max_rounds=1000):
    """Random member of the l0-bounded affine class.

    Parameters
    ----------
    phi_set : sequence of registered base-function names of dimension d
    """
    if n_s < 1:
        raise ValueError("n_s must be at least 1")
    names = list(phi_set)
    for name in names:
        if get_base(name).dim != d:
            raise ValueError(f"base {name!r} is not {d}-dimensional")
    atoms = []
    for _ in range(n_s):
        name = names[rng.integers(len(names))]
        A, b = sample_affine(d, C, rng, max_rounds)
        c = rng.uniform(-C, C)
        atoms.append(AffineAtom(c, A, b, name))
    f = make_i0(atoms, C)
    return f


def in_i0(f, n_s, C):
    atoms = f.params.atoms
    return len(atoms) <= n_s and all(not a.bound_violations(C) for a in atoms)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def target_to_json(f):
    """Plain-dict form ``{"kind", "params", "sup_bound", ...}``."""
    if f.kind == "Custom":
        raise ValueError("custom targets are not serializable")
    return {"kind": f.kind, "dim": f.dim, "params": f.params.to_dict(),
            "bounds": dict(f.bounds), "sup_bound": f.sup_bound}


def target_from_json(doc):
    kind = doc["kind"]
    if kind == "Jk":
        params = PiecewiseConstantFn.from_dict(doc["params"])
    elif kind == "I0":
        params = AffineSum.from_dict(doc["params"])
    elif kind in ("Jp", "Kp"):
        from . import wavelets
        params = wavelets.payload_from_dict(kind, doc["params"])
    else:
        raise ValueError(f"unknown target kind {kind!r}")
    return TargetFunction(kind, params, float(doc["sup_bound"]), int(doc.get("dim", 1)),
                          dict(doc.get("bounds", {})))
