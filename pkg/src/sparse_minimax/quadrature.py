"""Composite Gauss-Legendre rules over breakpoint-aligned cells.

A q-point rule on each cell integrates polynomials of degree 2q - 1
exactly, so piecewise polynomial integrands are handled without error
once every breakpoint is a cell edge.
"""

import numpy as np

DEFAULT_NODES = 5


def merge_breaks(*groups, lo=0.0, hi=1.0):
    """Sorted unique breakpoints inside [lo, hi], endpoints included."""
    parts = [np.array([lo, hi], dtype=float)]
    for g in groups:
        if g is None:
            continue
        g = np.asarray(g, dtype=float).ravel()
        parts.append(g[(g > lo) & (g < hi)])
    return np.unique(np.concatenate(parts))


def refine(breaks, max_width):
    """Split cells so that none is wider than ``max_width``."""
    breaks = np.asarray(breaks, dtype=float)
    widths = np.diff(breaks)
    pieces = np.maximum(np.ceil(widths / max_width).astype(int), 1)
    if np.all(pieces == 1):
        return breaks
    out = [breaks[:1]]
    for a, b, k in zip(breaks[:-1], breaks[1:], pieces):
        out.append(np.linspace(a, b, k + 1)[1:])
    return np.concatenate(out)


def cell_nodes(breaks, q=DEFAULT_NODES):
    """Nodes and weights of the composite rule on the given cells.

    Returns
    -------
    nodes, weights : ndarray
        Flat arrays of length ``q * (len(breaks) - 1)``.
    """
    breaks = np.asarray(breaks, dtype=float)
    t, w = np.polynomial.legendre.leggauss(q)
    a = breaks[:-1, None]
    h = np.diff(breaks)[:, None]
    nodes = a + 0.5 * h * (t[None, :] + 1.0)
    weights = 0.5 * h * w[None, :]
    return nodes.ravel(), weights.ravel()


def integrate(func, breaks, q=DEFAULT_NODES):
    """Integrate a vectorized 1-d function over cells delimited by ``breaks``."""
    x, w = cell_nodes(breaks, q)
    return float(np.dot(w, func(x)))


def tensor_nodes(breaks_per_axis, q=DEFAULT_NODES):
    """Tensor-product composite rule on a rectangular grid of cells.

    Returns
    -------
    nodes : ndarray, shape (m, d)
    weights : ndarray, shape (m,)
    """
    grids = [cell_nodes(b, q) for b in breaks_per_axis]
    mesh = np.meshgrid(*[g[0] for g in grids], indexing="ij")
    wmesh = np.meshgrid(*[g[1] for g in grids], indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    return nodes, weights
