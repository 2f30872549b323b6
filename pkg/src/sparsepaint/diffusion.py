"""Homogeneous diffusion inpainting with a conjugate-gradient solver.

Unknown pixels satisfy the discrete Laplace equation with the 5-point
stencil; known pixels act as Dirichlet data.  At the image border a pixel
simply has fewer neighbours (reflecting boundary), which keeps the system
symmetric positive definite as long as at least one pixel is known.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .image import DimensionError, as_image, as_mask

DEFAULT_TOL = 1e-6


class UnderdeterminedError(ValueError):
    """The mask contains no known pixel, so the Laplace problem has no unique solution."""


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float, target: float):
        super().__init__(
            f"CG did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e} > {target:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


@dataclass
class SparseSystem:
    """``matrix @ x = rhs`` over the unknown pixels, listed by flat row-major index."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    unknown: np.ndarray

    @property
    def dimension(self) -> int:
        return self.rhs.shape[0]


@dataclass
class _Stencil:
    matrix: sp.csr_matrix  # unknown x unknown
    coupling: sp.csr_matrix  # unknown x known
    unknown: np.ndarray
    known: np.ndarray


def _neighbour_pairs(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """All ordered 4-neighbour pairs (p, q) as flat indices."""
    idx = np.arange(m * n).reshape(m, n)
    src = [idx[1:, :], idx[:-1, :], idx[:, 1:], idx[:, :-1]]
    dst = [idx[:-1, :], idx[1:, :], idx[:, :-1], idx[:, 1:]]
    return (
        np.concatenate([s.ravel() for s in src]),
        np.concatenate([d.ravel() for d in dst]),
    )


def _stencil(mask: np.ndarray) -> _Stencil:
    m, n = mask.shape
    flat = mask.ravel()
    if not flat.any():
        raise UnderdeterminedError("mask is empty; at least one known pixel is required")
    unknown = np.flatnonzero(~flat)
    known = np.flatnonzero(flat)
    pos = np.full(m * n, -1, dtype=np.int64)
    pos[unknown] = np.arange(unknown.size)
    kpos = np.full(m * n, -1, dtype=np.int64)
    kpos[known] = np.arange(known.size)

    p, q = _neighbour_pairs(m, n)
    sel = ~flat[p]
    p, q = p[sel], q[sel]
    degree = np.bincount(pos[p], minlength=unknown.size).astype(np.float64)

    uu = ~flat[q]
    rows = np.concatenate([np.arange(unknown.size), pos[p[uu]]])
    cols = np.concatenate([np.arange(unknown.size), pos[q[uu]]])
    vals = np.concatenate([degree, -np.ones(uu.sum())])
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(unknown.size, unknown.size))

    kk = ~uu
    coupling = sp.csr_matrix(
        (np.ones(kk.sum()), (pos[p[kk]], kpos[q[kk]])), shape=(unknown.size, known.size)
    )
    return _Stencil(matrix, coupling, unknown, known)


def assemble_system(img, mask, channel: int = 0) -> SparseSystem:
    """Build the Laplace system for one channel of ``img`` given ``mask``."""
    img = as_image(img)
    mask = as_mask(mask)
    if img.shape[:2] != mask.shape:
        raise DimensionError(f"mask {mask.shape} does not match image {img.shape[:2]}")
    st = _stencil(mask)
    values = img[:, :, channel].ravel()
    rhs = st.coupling @ values[st.known]
    return SparseSystem(st.matrix, np.asarray(rhs, dtype=np.float64), st.unknown)


def cg_solve(
    system: SparseSystem,
    rel_residual: float = DEFAULT_TOL,
    max_iter: int | None = None,
    jacobi: bool = False,
) -> np.ndarray:
    """Solve an SPD system until ``||A x - b|| <= rel_residual * ||b||``.

    The default iteration cap is ten times the system dimension; exceeding it
    raises :class:`ConvergenceError`.  ``jacobi=True`` enables diagonal
    preconditioning.
    """
    if rel_residual <= 0:
        raise ValueError("rel_residual must be positive")
    A, b = system.matrix, system.rhs
    dim = b.shape[0]
    x = np.zeros(dim)
    if dim == 0:
        return x
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return x
    target = rel_residual * b_norm
    if max_iter is None:
        max_iter = 10 * dim
    inv_diag = 1.0 / A.diagonal() if jacobi else None

    r = b.copy()
    z = r * inv_diag if jacobi else r
    d = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ad = A @ d
        step = rz / (d @ Ad)
        x += step * d
        r -= step * Ad
        if np.linalg.norm(r) <= target:
            # guard against drift of the recursively updated residual
            r = b - A @ x
            if np.linalg.norm(r) <= target:
                return x
        z = r * inv_diag if jacobi else r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise ConvergenceError(max_iter, float(np.linalg.norm(b - A @ x) / b_norm), rel_residual)


def inpaint_homogeneous(img, mask, rel_residual: float = DEFAULT_TOL, jacobi: bool = False) -> np.ndarray:
    """Reconstruct unknown pixels as the discrete harmonic interpolant of the known ones."""
    img = as_image(img)
    mask = as_mask(mask)
    if img.shape[:2] != mask.shape:
        raise DimensionError(f"mask {mask.shape} does not match image {img.shape[:2]}")
    st = _stencil(mask)
    out = img.copy()
    if st.unknown.size == 0:
        return out
    flat = out.reshape(-1, img.shape[2])
    for c in range(img.shape[2]):
        rhs = np.asarray(st.coupling @ flat[st.known, c], dtype=np.float64)
        x = cg_solve(SparseSystem(st.matrix, rhs, st.unknown), rel_residual, jacobi=jacobi)
        flat[st.unknown, c] = np.clip(x, 0.0, 1.0)
    return out
