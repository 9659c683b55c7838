"""Dense real matrix utilities used by every other module.

Conventions
-----------
* Everything is a dense float64 ``numpy.ndarray``; scalars become 1x1 blocks
  and 1-D arrays become column vectors when they enter block compositions.
* Empty matrices are legal everywhere: an ``m x 0`` block contributes no
  columns to a row of blocks, a ``0 x 0`` block contributes nothing to a
  block diagonal.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NotPositiveDefinite",
    "as2d",
    "kron",
    "sy",
    "sqrt_pd",
    "invsqrt_pd",
    "is_pd",
    "pd_tol",
    "block_compose",
    "col",
    "rowcat",
    "blkdiag",
    "zeros",
    "eye",
]


class NotPositiveDefinite(ValueError):
    """A matrix required to be positive definite is not (scale-aware check)."""


def as2d(x) -> np.ndarray:
    """Coerce ``x`` to a 2-D float array. Scalars become 1x1, 1-D arrays columns."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"expected at most 2 dimensions, got shape {a.shape}")
    return a


def zeros(r: int, c: int | None = None) -> np.ndarray:
    return np.zeros((r, r if c is None else c))


def eye(n: int) -> np.ndarray:
    return np.eye(n)


def kron(a, b) -> np.ndarray:
    """Kronecker product of two (possibly empty) matrices."""
    return np.kron(as2d(a), as2d(b))


def sy(x) -> np.ndarray:
    """X + X^T for square X."""
    a = as2d(x)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"sy needs a square matrix, got {a.shape}")
    return a + a.T


def pd_tol(eigs: np.ndarray) -> float:
    """Scale-aware strictness threshold for positive definiteness."""
    top = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    return 1e-9 * max(1.0, top)


def _eigh_checked(x, what: str):
    a = as2d(x)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} needs a square matrix, got {a.shape}")
    if a.size and not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * max(1.0, float(np.abs(a).max()))):
        raise ValueError(f"{what} needs a symmetric matrix")
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    return a, w, v


def is_pd(x) -> bool:
    a = as2d(x)
    if a.size == 0:
        return True  # vacuous: no eigenvalues to violate the bound
    _, w, _ = _eigh_checked(a, "is_pd")
    return bool(w.min() > pd_tol(w))


def sqrt_pd(x) -> np.ndarray:
    """Unique symmetric PD square root; raises NotPositiveDefinite otherwise."""
    a = as2d(x)
    if a.size == 0:
        return a.copy()
    a, w, v = _eigh_checked(a, "sqrt_pd")
    if w.min() <= pd_tol(w):
        raise NotPositiveDefinite(
            f"min eigenvalue {w.min():.3e} below tolerance {pd_tol(w):.3e}"
        )
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def invsqrt_pd(x) -> np.ndarray:
    """Symmetric PD inverse square root (same PD check as sqrt_pd)."""
    a = as2d(x)
    if a.size == 0:
        return a.copy()
    a, w, v = _eigh_checked(a, "invsqrt_pd")
    if w.min() <= pd_tol(w):
        raise NotPositiveDefinite(
            f"min eigenvalue {w.min():.3e} below tolerance {pd_tol(w):.3e}"
        )
    s = (v / np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def block_compose(grid) -> np.ndarray:
    """Assemble a matrix from a rectangular grid (list of rows) of blocks.

    Cells may be scalars, vectors (treated as columns) or matrices, including
    zero-width/zero-height ones. Raises ValueError on non-conformable rows.
    """
    if not grid:
        return np.zeros((0, 0))
    rows = []
    for cells in grid:
        parts = [as2d(c) for c in cells]
        if not parts:
            rows.append(np.zeros((0, 0)))
            continue
        heights = {p.shape[0] for p in parts}
        if len(heights) > 1:
            raise ValueError(f"row blocks disagree on height: {sorted(heights)}")
        rows.append(np.hstack(parts))
    widths = {r.shape[1] for r in rows}
    if len(widths) > 1:
        raise ValueError(f"rows disagree on width: {sorted(widths)}")
    return np.vstack(rows)


def col(blocks) -> np.ndarray:
    """Stack blocks vertically (the n-ary column operator)."""
    return block_compose([[b] for b in blocks])


def rowcat(blocks) -> np.ndarray:
    """Concatenate blocks horizontally (the n-ary row operator)."""
    return block_compose([list(blocks)])


def blkdiag(*blocks) -> np.ndarray:
    """Direct sum: place blocks on the diagonal; empty blocks contribute nothing."""
    parts = [as2d(b) for b in blocks]
    r = sum(p.shape[0] for p in parts)
    c = sum(p.shape[1] for p in parts)
    out = np.zeros((r, c))
    i = j = 0
    for p in parts:
        out[i : i + p.shape[0], j : j + p.shape[1]] = p
        i += p.shape[0]
        j += p.shape[1]
    return out
