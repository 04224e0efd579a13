"""Sparse ReLU networks: evaluation, budget accounting, entropy bounds and
constructive builders.

A network with L hidden layers computes

    x -> W_{L+1} rho(W_L ... rho(W_1 x - v_1) ... - v_L)

with rho(t) = max(t, 0), optionally clipped to [-F, F].
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sparse_classes import REL_TOL

FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkArch:
    """Architecture budget: depth L, nonzeros S, width D, magnitude B, clip F."""

    L: int
    S: int
    D: int
    B: float
    F: Optional[float] = None

    def __post_init__(self):
        if self.L < 1 or self.D < 1 or self.S < 0:
            raise ValueError("need L >= 1, D >= 1, S >= 0")
        if self.B < 1:
            raise ValueError("magnitude bound B must be at least 1")
        if self.F is not None and self.F <= 0:
            raise ValueError("clip level F must be positive")

    def to_dict(self):
        return {"L": self.L, "S": self.S, "D": self.D, "B": self.B, "F": self.F}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["L"]), int(d["S"]), int(d["D"]), float(d["B"]), d.get("F"))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class ReluNetwork:
    """Immutable ReLU network.

    Parameters
    ----------
    weights : sequence of 2-d arrays W_1 .. W_{L+1}
    biases : sequence of 1-d arrays v_1 .. v_L
    arch : NetworkArch, optional
        Declared budget; inferred from the parameters when omitted.
    """

    def __init__(self, weights, biases, arch=None):
        weights = tuple(_frozen(np.atleast_2d(W)) for W in weights)
        biases = tuple(_frozen(np.atleast_1d(v)) for v in biases)
        if len(weights) != len(biases) + 1 or not biases:
            raise ValueError("need L >= 1 hidden layers and L + 1 weight matrices")
        for i, v in enumerate(biases):
            if weights[i].shape[0] != v.shape[0]:
                raise ValueError(f"layer {i + 1}: bias length does not match weight rows")
            if weights[i + 1].shape[1] != weights[i].shape[0]:
                raise ValueError(f"layer {i + 2}: weight columns do not match previous width")
        if weights[-1].shape[0] != 1:
            raise ValueError("output layer must have a single row")
        self.weights = weights
        self.biases = biases
        if arch is None:
            arch = NetworkArch(len(biases), nonzero_count(self),
                               max([self.input_dim] + [v.size for v in biases]),
                               max(1.0, _max_abs(self)))
        self.arch = arch

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def depth(self):
        return len(self.biases)

    def with_clip(self, F):
        a = self.arch
        return ReluNetwork(self.weights, self.biases, NetworkArch(a.L, a.S, a.D, a.B, F))

    def with_arch(self, arch):
        return ReluNetwork(self.weights, self.biases, arch)

    def evaluate(self, pts, clip=True):
        h = pts
        for W, v in zip(self.weights[:-1], self.biases):
            h = np.maximum(h @ W.T - v, 0.0)
        out = (h @ self.weights[-1].T)[:, 0]
        if clip and self.arch.F is not None:
            out = np.clip(out, -self.arch.F, self.arch.F)
        return out

    def __call__(self, x):
        return forward(self, x)

    def breakpoints(self):
        if self.input_dim != 1:
            return None
        return [breakpoints_1d(self)]

    def to_dict(self):
        return network_to_json(self)


def _max_abs(net):
    vals = [np.max(np.abs(W), initial=0.0) for W in net.weights]
    vals += [np.max(np.abs(v), initial=0.0) for v in net.biases]
    return float(max(vals))


def forward(net, x, clip=True):
    """Forward pass for one point (d-vector or scalar) or a batch of shape (m, d)."""
    arr = np.asarray(x, dtype=float)
    d = net.input_dim
    scalar = arr.ndim == 0 or (arr.ndim == 1 and d > 1 and arr.size == d)
    pts = arr.reshape(-1, d) if (arr.ndim <= 1) else arr
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ValueError(f"input of shape {arr.shape} does not match input dimension {d}")
    out = net.evaluate(pts, clip)
    return float(out[0]) if scalar else out


def nonzero_count(net):
    """sum ||W_i||_0 + sum ||v_i||_0."""
    return int(sum(np.count_nonzero(W) for W in net.weights)
               + sum(np.count_nonzero(v) for v in net.biases))


@dataclass(frozen=True)
class ArchReport:
    ok: bool
    violations: tuple = field(default=())
    nonzeros: int = 0

    def __bool__(self):
        return self.ok


def validate_arch(net, d=None):
    """Check depth, width, magnitude and sparsity against ``net.arch``."""
    a = net.arch
    out = []
    if net.depth != a.L:
        out.append(f"depth {net.depth} != L = {a.L}")
    d = net.input_dim if d is None else d
    if net.input_dim != d:
        out.append(f"input dimension {net.input_dim} != d = {d}")
    if d > a.D:
        out.append(f"input dimension {d} exceeds width D = {a.D}")
    for i, v in enumerate(net.biases):
        if v.size > a.D:
            out.append(f"layer {i + 1} width {v.size} exceeds D = {a.D}")
    limit = a.B * (1 + REL_TOL)
    for i, W in enumerate(net.weights):
        m = np.max(np.abs(W), initial=0.0)
        if m > limit:
            out.append(f"|W_{i + 1}| = {m:.6g} exceeds B = {a.B}")
    for i, v in enumerate(net.biases):
        m = np.max(np.abs(v), initial=0.0)
        if m > limit:
            out.append(f"|v_{i + 1}| = {m:.6g} exceeds B = {a.B}")
    nnz = nonzero_count(net)
    if nnz > a.S:
        out.append(f"{nnz} nonzero parameters exceed S = {a.S}")
    return ArchReport(not out, tuple(out), nnz)


# ---------------------------------------------------------------------------
# covering entropy
# ---------------------------------------------------------------------------

def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")


def covering_entropy_bound(arch, delta):
    """Natural-log bound 2 S (L+1) ln(B (L+1)(D+1) / delta) on the covering entropy."""
    _check_delta(delta)
    S, L, D, B = arch.S, arch.L, arch.D, arch.B
    return 2.0 * S * (L + 1) * math.log(B * (L + 1) * (D + 1) / delta)


def shared_entropy_bound(arch, N, d, delta):
    """Entropy bound for N-sharing families of an architecture (natural log).

    (N (d+1)^2 + 2 S (L+1)) (L+3) ln(N B (L+1)(D+1) / delta), valid for L >= 2.
    """
    _check_delta(delta)
    if arch.L < 2:
        raise ValueError("the sharing bound needs L >= 2")
    if N < 1 or d < 1:
        raise ValueError("need N >= 1 and d >= 1")
    S, L, D, B = arch.S, arch.L, arch.D, arch.B
    return (N * (d + 1) ** 2 + 2.0 * S * (L + 1)) * (L + 3) * math.log(N * B * (L + 1) * (D + 1) / delta)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_jump_approx(jump, height, width, depth=1, zero_extend=False):
    """Ramp network for ``height * 1_[jump, 1]`` on [0, 1].

    Zero on (-inf, jump - width], linear on [jump - width, jump], equal to
    ``height`` on [jump, 1].  The L2 error on [0, 1] is
    |height| sqrt(width / 3).

    Parameters
    ----------
    depth : {1, 2}
        With depth 2 the ramp is normalized to [0, 1] in a second hidden
        layer and scaled by ``height`` at the output.
    zero_extend : bool
        Also ramp back down to zero on [1, 1 + width], so the network
        approximates the zero-extended indicator on the whole line with
        L2 error |height| sqrt(2 width / 3).
    """
    if not 0.0 < width < min(jump, 1.0 - jump):
        raise ValueError("width must satisfy 0 < width < min(jump, 1 - jump)")
    if depth not in (1, 2):
        raise ValueError("depth must be 1 or 2")
    starts = [jump - width, jump]
    signs = [1.0, -1.0]
    if zero_extend:
        starts += [1.0, 1.0 + width]
        signs += [-1.0, 1.0]
    W1 = np.ones((len(starts), 1))
    v1 = np.array(starts)
    slope = np.array(signs) / width
    if depth == 1:
        net = ReluNetwork([W1, height * slope[None, :]], [v1])
    else:
        net = ReluNetwork([W1, slope[None, :], np.array([[height]])], [v1, np.zeros(1)])
    return net


def _block_diag(blocks):
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def composed_arch(sub_arch, n_s, d, C):
    """Architecture budget of a composition of n_s affine atoms of a sub-network."""
    a = sub_arch
    return NetworkArch(a.L + 2, n_s * (a.S + 2 * a.D * d + d * d + d + 1),
                       n_s * a.D, max(a.B, C))


def compose_atoms(sub, atoms, C):
    """Network computing sum_i c_i sub(A_i x - b_i) on [0,1]^d.

    Each atom gets its own block.  The first hidden layer carries the
    positive and negative parts of A_i x - b_i; the sub-network's first
    layer recombines them.  The layer after the sub-network splits its
    output into positive and negative parts, which the output layer weighs
    by c_i and -c_i.  Channels that interval arithmetic shows to vanish on
    the whole cube are omitted.
    """
    atoms = list(atoms)
    if not atoms:
        raise ValueError("need at least one atom")
    d = atoms[0].dim
    if sub.input_dim != d:
        raise ValueError("sub-network input dimension differs from the atom dimension")
    for i, atom in enumerate(atoms):
        if atom.dim != d:
            raise ValueError("atoms of mixed dimension")
        bad = atom.bound_violations(C)
        if bad:
            raise ValueError(f"atom {i} violates bounds {bad} for C = {C}")
    W_sub, v_sub = sub.weights, sub.biases
    L = sub.depth
    out_row = W_sub[-1][0]
    keep_pos_out = bool(np.any(out_row > 0))
    keep_neg_out = bool(np.any(out_row < 0))

    layers_W = [[] for _ in range(L + 2)]
    layers_v = [[] for _ in range(L + 2)]
    out_w = []
    for atom in atoms:
        A, b = atom.A, atom.b
        hi_pos = np.sum(np.maximum(A, 0.0), axis=1) - b
        hi_neg = np.sum(np.maximum(-A, 0.0), axis=1) + b
        pos = np.nonzero(hi_pos > 0)[0]
        neg = np.nonzero(hi_neg > 0)[0]
        front_W = np.vstack([A[pos], -A[neg]]) if (pos.size + neg.size) else np.zeros((0, d))
        front_v = np.concatenate([b[pos], -b[neg]])
        layers_W[0].append(front_W)
        layers_v[0].append(front_v)
        W1 = W_sub[0]
        layers_W[1].append(np.hstack([W1[:, pos], -W1[:, neg]]))
        layers_v[1].append(v_sub[0])
        for j in range(1, L):
            layers_W[j + 1].append(W_sub[j])
            layers_v[j + 1].append(v_sub[j])
        split = []
        if keep_pos_out:
            split.append(out_row)
        if keep_neg_out:
            split.append(-out_row)
        layers_W[L + 1].append(np.array(split).reshape(len(split), -1))
        layers_v[L + 1].append(np.zeros(len(split)))
        out_w += ([atom.c] if keep_pos_out else []) + ([-atom.c] if keep_neg_out else [])

    weights = [np.vstack(layers_W[0])]
    for j in range(1, L + 2):
        weights.append(_block_diag(layers_W[j]))
    weights.append(np.array(out_w).reshape(1, -1))
    biases = [np.concatenate(vs) for vs in layers_v]
    arch = composed_arch(sub.arch, len(atoms), d, C)
    return ReluNetwork(weights, biases, arch)


@dataclass(frozen=True)
class SharedFamily:
    """sum_i c_i base(A_i x - b_i) over a shared base network."""

    base: ReluNetwork
    atoms: tuple

    def __post_init__(self):
        B = self.base.arch.B * (1 + REL_TOL)
        clean = []
        for c, A, b in self.atoms:
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if abs(c) > B or np.max(np.abs(A)) > B or np.max(np.abs(b)) > B:
                raise ValueError("shared-family atom exceeds the magnitude bound B")
            clean.append((float(c), A, b))
        object.__setattr__(self, "atoms", tuple(clean))


def eval_shared(fam, x):
    """Evaluate a shared family; the base runs on the extended domain."""
    d = fam.base.input_dim
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0 or (arr.ndim == 1 and d > 1 and arr.size == d)
    pts = arr.reshape(-1, d)
    out = np.zeros(pts.shape[0])
    for c, A, b in fam.atoms:
        out += c * fam.base.evaluate(pts @ A.T - b)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# 1-d kinks
# ---------------------------------------------------------------------------

def breakpoints_1d(net, lo=0.0, hi=1.0):
    """All points in (lo, hi) where a 1-d network may fail to be affine.

    Pre-activations are affine between consecutive known breakpoints, so
    zero crossings found layer by layer are exact.  Crossings of the clip
    levels are added when the network clips.
    """
    if net.input_dim != 1:
        raise ValueError("breakpoints are defined for 1-d inputs only")
    bps = np.array([lo, hi], dtype=float)

    def crossings(vals):
        a, b = vals[:-1], vals[1:]
        hit = (a * b) < 0
        if not np.any(hit):
            return np.empty(0)
        rows, cols = np.nonzero(hit)
        x0, x1 = bps[rows], bps[rows + 1]
        za, zb = a[rows, cols], b[rows, cols]
        return x0 + (x1 - x0) * za / (za - zb)

    for k, (W, v) in enumerate(zip(net.weights[:-1], net.biases)):
        def pre(x, k=k):
            z = x[:, None]
            for W2, v2 in zip(net.weights[:k], net.biases[:k]):
                z = np.maximum(z @ W2.T - v2, 0.0)
            return z @ net.weights[k].T - net.biases[k]
        new = crossings(pre(bps))
        # points where a pre-activation is exactly zero are kinks as well
        zero = bps[np.any(pre(bps) == 0.0, axis=1)]
        bps = np.unique(np.concatenate([bps, new, zero]))
    if net.arch.F is not None:
        raw = net.evaluate(bps[:, None], clip=False)
        lev = np.stack([raw - net.arch.F, raw + net.arch.F], axis=1)
        bps = np.unique(np.concatenate([bps, crossings(lev)]))
    return bps


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def network_to_json(net):
    layers = []
    for i, W in enumerate(net.weights):
        entry = {"W": W.tolist(), "mask": (W != 0).astype(int).tolist()}
        if i < len(net.biases):
            entry["v"] = net.biases[i].tolist()
            entry["v_mask"] = (net.biases[i] != 0).astype(int).tolist()
        layers.append(entry)
    return {"version": FORMAT_VERSION, "arch": net.arch.to_dict(), "layers": layers}


def network_from_json(doc):
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported network format version {doc.get('version')}")
    weights, biases = [], []
    for entry in doc["layers"]:
        W = np.array(entry["W"], dtype=float)
        W[np.array(entry["mask"]) == 0] = 0.0
        weights.append(W)
        if "v" in entry:
            v = np.array(entry["v"], dtype=float)
            v[np.array(entry["v_mask"]) == 0] = 0.0
            biases.append(v)
    return ReluNetwork(weights, biases, NetworkArch.from_dict(doc["arch"]))

