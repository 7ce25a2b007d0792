"""Discrete Neumann heat semigroup and regularization of the initial data.

``heat_step`` applies backward-Euler substeps of the 5-point Neumann
Laplacian.  The resolvent is diagonal in the DCT-II basis, so each solve is
a pair of fast transforms; a sparse residual check guards the result.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import InputError, NumericalError
from .grid import Field, GridSpec, MeasureSpec, integrate
from .operators import laplacian_array, neumann_eigenvalues_1d

SOLVER_TOL = 1e-12
"""Relative residual accepted from a resolvent solve."""

_SUBSTEP_FACTOR = 0.25 * 100


def max_substep(grid: GridSpec) -> float:
    return _SUBSTEP_FACTOR * min(grid.hx, grid.hy) ** 2


@lru_cache(maxsize=16)
def _symbol(grid: GridSpec) -> np.ndarray:
    mx = neumann_eigenvalues_1d(grid.nx, grid.hx)
    my = neumann_eigenvalues_1d(grid.ny, grid.hy)
    return mx[:, None] + my[None, :]


def _substeps(tau: float, grid: GridSpec, cap: float | None) -> tuple[int, float]:
    cap = max_substep(grid) if cap is None else cap
    n = max(1, math.ceil(tau / cap - 1e-12))
    return n, tau / n


def resolvent_solve(a: np.ndarray, tau: float, grid: GridSpec, nsteps: int = 1) -> np.ndarray:
    """Apply ``(I - tau*L)^(-nsteps)`` to the array ``a``.

    Raises NumericalError when the last substep's residual exceeds
    ``SOLVER_TOL`` relative to the right-hand side.
    """
    if np.ptp(a) == 0.0:
        # constants are fixed by every substep
        return np.array(a, dtype=float, copy=True)
    mu = _symbol(grid)
    ahat = scipy.fft.dctn(a, type=2, norm="ortho")
    factor = 1.0 / (1.0 + tau * mu)
    if nsteps == 1:
        prev = a
    else:
        prev = scipy.fft.idctn(ahat * factor ** (nsteps - 1), type=2, norm="ortho")
    out = scipy.fft.idctn(ahat * factor**nsteps, type=2, norm="ortho")
    residual = np.abs(out - tau * laplacian_array(out, grid) - prev).max()
    # roundoff in the residual itself grows with the conditioning 1 + tau*max(mu)
    scale = max(np.abs(prev).max(), np.finfo(float).tiny) * (1.0 + tau * mu.max())
    if residual > SOLVER_TOL * scale:
        raise NumericalError(
            f"resolvent solve residual {residual:.3e} exceeds tolerance", residual=residual
        )
    return out


def heat_step(f: Field, tau: float, max_step: float | None = None) -> Field:
    """Backward-Euler Neumann heat flow of ``f`` for total time ``tau``.

    The interval is split into equal substeps no longer than ``max_step``
    (default ``25*min(hx, hy)**2``).  Nonnegativity and the max principle
    are restored exactly after checking that the roundoff is small.
    """
    if not tau > 0:
        raise InputError(f"heat_step needs tau > 0, got {tau}")
    n, dt = _substeps(tau, f.grid, max_step)
    a = f.values
    out = resolvent_solve(a, dt, f.grid, n)
    lo, hi = a.min(), a.max()
    slack = 64 * np.finfo(float).eps * max(abs(lo), abs(hi), 1e-300)
    if out.min() < lo - slack or out.max() > hi + slack:
        raise NumericalError("heat_step broke the discrete maximum principle")
    return f.with_values(np.clip(out, lo, hi))


def splat_atoms(atoms, grid: GridSpec) -> np.ndarray:
    """Bilinear deposit of point masses onto cell averages.

    A weight near the boundary whose stencil leaves the grid is folded back
    into the mirrored cell, matching the reflective boundary.
    """
    dens = np.zeros(grid.shape)
    for x, y, w in atoms:
        gx = x / grid.hx - 0.5
        gy = y / grid.hy - 0.5
        i0 = math.floor(gx)
        j0 = math.floor(gy)
        fx = gx - i0
        fy = gy - j0
        for di, wx in ((0, 1.0 - fx), (1, fx)):
            i = min(max(i0 + di, 0), grid.nx - 1)
            for dj, wy in ((0, 1.0 - fy), (1, fy)):
                j = min(max(j0 + dj, 0), grid.ny - 1)
                dens[i, j] += w * wx * wy
    return dens / grid.cell_area


def _restore_mass(a: np.ndarray, m: float, grid: GridSpec) -> np.ndarray:
    for _ in range(2):
        a = a * (m / (a.sum() * grid.cell_area))
    return a


def mollify_measure(u0: MeasureSpec, eps: float, grid: GridSpec) -> Field:
    """Smooth positive density with the same total mass as ``u0``."""
    if not eps > 0:
        raise InputError(f"regularization parameter must be positive, got {eps}")
    u0.check_inside(grid)
    dens = splat_atoms(u0.atoms, grid)
    if u0.density is not None:
        dens = dens + u0.density.values
    smooth = heat_step(Field(grid, dens), eps)
    drift = abs(integrate(smooth) - u0.mass)
    if drift > 1e-11 * u0.mass:
        raise NumericalError(f"mollification lost mass {drift:.3e}", residual=drift)
    return smooth.with_values(_restore_mass(smooth.values, u0.mass, grid))


def smooth_v0(v0: Field, eps: float) -> Field:
    if v0.min() < 0:
        raise InputError("v0 must be nonnegative")
    if v0.max() == 0:
        raise InputError("v0 must not vanish identically")
    out = heat_step(v0, eps)
    assert out.max() <= v0.max()
    return out
