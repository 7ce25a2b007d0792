"""Finite-volume operators with homogeneous Neumann boundaries.

Every operator is assembled from face quantities.  Boundary faces carry
zero flux (equivalent to mirrored ghost cells), so the discrete divergence
of any face flux sums to zero over the grid.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .grid import Field, GridSpec


def face_differences(a: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Normal derivatives on all faces, boundary faces included (as zeros).

    Returns ``gx`` of shape ``(nx+1, ny)`` and ``gy`` of shape ``(nx, ny+1)``.
    """
    gx = np.zeros((grid.nx + 1, grid.ny))
    gy = np.zeros((grid.nx, grid.ny + 1))
    gx[1:-1, :] = np.diff(a, axis=0) / grid.hx
    gy[:, 1:-1] = np.diff(a, axis=1) / grid.hy
    return gx, gy


def flux_divergence(Fx: np.ndarray, Fy: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.diff(Fx, axis=0) / grid.hx + np.diff(Fy, axis=1) / grid.hy


def laplacian_array(a: np.ndarray, grid: GridSpec) -> np.ndarray:
    gx, gy = face_differences(a, grid)
    return flux_divergence(gx, gy, grid)


def laplacian(f: Field) -> Field:
    """5-point Neumann Laplacian."""
    return f.with_values(laplacian_array(f.values, f.grid))


def gradient_sq_array(a: np.ndarray, grid: GridSpec) -> np.ndarray:
    # Each cell gets the mean of the squared normal derivatives on its two
    # faces per direction, so sum(gradient_sq) * area == -<a, L a> exactly.
    gx, gy = face_differences(a, grid)
    return 0.5 * (gx[:-1] ** 2 + gx[1:] ** 2) + 0.5 * (gy[:, :-1] ** 2 + gy[:, 1:] ** 2)


def gradient_sq(f: Field) -> Field:
    return f.with_values(gradient_sq_array(f.values, f.grid))


def taxis_fluxes(u: np.ndarray, v: np.ndarray, chi: float, grid: GridSpec):
    """Upwind face fluxes ``chi * u_upwind * dv/dn``."""
    gx, gy = face_differences(v, grid)
    Fx = np.zeros_like(gx)
    Fy = np.zeros_like(gy)
    # drift points up the gradient; the donor cell is the one it leaves
    ix = gx[1:-1]
    Fx[1:-1] = chi * ix * np.where(ix > 0, u[:-1], u[1:])
    iy = gy[:, 1:-1]
    Fy[:, 1:-1] = chi * iy * np.where(iy > 0, u[:, :-1], u[:, 1:])
    return Fx, Fy


def taxis_divergence_array(u: np.ndarray, v: np.ndarray, chi: float, grid: GridSpec) -> np.ndarray:
    Fx, Fy = taxis_fluxes(u, v, chi, grid)
    return flux_divergence(Fx, Fy, grid)


def taxis_divergence(u: Field, v: Field, chi: float) -> Field:
    """Discrete ``chi * div(u grad v)`` in conservative upwind form."""
    return u.with_values(taxis_divergence_array(u.values, v.values, chi, u.grid))


def outflow_rate(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Per-cell sum of |dv/dn| / h over faces whose drift leaves the cell.

    An explicit upwind taxis step with ``dt * chi * outflow_rate <= 1`` keeps
    every cell nonnegative.
    """
    gx, gy = face_differences(v, grid)
    # face i+1/2 drains cell i when gx > 0 and cell i+1 when gx < 0
    out = (np.maximum(gx[1:], 0.0) + np.maximum(-gx[:-1], 0.0)) / grid.hx
    out += (np.maximum(gy[:, 1:], 0.0) + np.maximum(-gy[:, :-1], 0.0)) / grid.hy
    return out


def neumann_eigenvalues_1d(n: int, h: float) -> np.ndarray:
    """Eigenvalues of the negated cell-centred Neumann second difference.

    The eigenvectors are the DCT-II modes ``cos(pi k (i + 1/2) / n)``.
    """
    k = np.arange(n)
    return (2.0 - 2.0 * np.cos(np.pi * k / n)) / h**2


@lru_cache(maxsize=16)
def laplacian_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Sparse Neumann Laplacian acting on C-order flattened ``(nx, ny)`` arrays."""

    def second_difference(n, h):
        main = -2.0 * np.ones(n)
        main[0] = main[-1] = -1.0
        off = np.ones(n - 1)
        return sp.diags([off, main, off], [-1, 0, 1]) / h**2

    Dx = second_difference(grid.nx, grid.hx)
    Dy = second_difference(grid.ny, grid.hy)
    return (sp.kron(Dx, sp.identity(grid.ny)) + sp.kron(sp.identity(grid.nx), Dy)).tocsr()
