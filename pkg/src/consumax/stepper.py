"""IMEX time stepping for the chemotaxis-consumption system.

One step of size ``dt``::

    u*  = u - dt * chi * div(u grad v)        explicit upwind taxis
    u+  = (I - dt L)^-1 u*                    implicit diffusion
    v+  = (I - dt L)^-1 [v / (1 + dt u+)]     screened consumption, diffusion

Every substep maps nonnegative data to nonnegative data, never raises
``max v`` and conserves ``sum u`` up to roundoff, which is then removed by a
multiplicative restore.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CFLViolation, InputError, NumericalError
from .functionals import DiagnosticsRecorder, DiagnosticsSeries, PhiParams, TestFunction
from .grid import Field, GridSpec, MeasureSpec
from .operators import outflow_rate, taxis_divergence_array
from .regularize import SOLVER_TOL, mollify_measure, resolvent_solve, smooth_v0

logger = logging.getLogger(__name__)

TINY = 1e-300
NEG_TOL = 1e-14


@dataclass(frozen=True)
class SimParams:
    chi: float = 1.0
    n: int = 2
    grid: GridSpec = field(default_factory=GridSpec)
    T: float = 1.0
    eps: float = 1e-2
    dt_policy: str = "adaptive"
    sigma: float = 0.9
    dt: float | None = None

    def __post_init__(self):
        if not self.chi > 0:
            raise InputError("chi must be positive")
        if not self.T >= 0:
            raise InputError("final time must be nonnegative")
        if not 0 < self.eps < 1:
            raise InputError("regularization parameter must lie in (0, 1)")
        if self.dt_policy not in ("adaptive", "fixed"):
            raise InputError(f"unknown dt policy {self.dt_policy!r}")
        if self.dt_policy == "adaptive" and not 0 < self.sigma <= 1:
            raise InputError("safety factor sigma must lie in (0, 1]")
        if self.dt_policy == "fixed" and not (self.dt is not None and self.dt > 0):
            raise InputError("fixed dt policy needs dt > 0")

    @property
    def dt_max(self) -> float:
        return self.T / 100 if self.T > 0 else math.inf


@dataclass(frozen=True)
class SimState:
    t: float
    u: Field
    v: Field
    params: SimParams


def positivity_dt(v: np.ndarray, chi: float, grid: GridSpec) -> float:
    """Largest explicit taxis step that keeps every cell nonnegative."""
    return 1.0 / (chi * outflow_rate(v, grid).max() + TINY)


def cfl_dt(s: SimState) -> float:
    p = s.params
    if p.dt_policy == "fixed":
        return p.dt
    return min(p.sigma * positivity_dt(s.v.values, p.chi, p.grid), p.dt_max)


def _check_nonneg(a: np.ndarray, what: str) -> np.ndarray:
    scale = max(1.0, float(np.abs(a).max()))
    low = float(a.min())
    if low < -NEG_TOL * scale:
        raise NumericalError(f"{what} went negative ({low:.3e})", residual=low)
    return np.maximum(a, 0.0)


def step(s: SimState, dt: float) -> SimState:
    p = s.params
    g = p.grid
    if not dt > 0:
        raise InputError("dt must be positive")
    u, v = s.u.values, s.v.values
    limit = positivity_dt(v, p.chi, g)
    if dt > limit * (1 + 1e-8):
        raise CFLViolation(f"dt={dt:.3e} exceeds the positivity limit {limit:.3e}", t=s.t)

    mass = u.sum()
    ustar = _check_nonneg(u - dt * taxis_divergence_array(u, v, p.chi, g), "taxis update")
    uplus = _check_nonneg(resolvent_solve(ustar, dt, g), "u diffusion")
    if mass > 0:
        drift = abs(uplus.sum() - mass) / mass
        if drift > 10 * SOLVER_TOL:
            raise NumericalError(f"mass drift {drift:.3e} in one step", residual=drift, t=s.t)
        uplus = uplus * (mass / uplus.sum())

    screened = v / (1.0 + dt * uplus)
    vtop = screened.max()
    vplus = resolvent_solve(screened, dt, g)
    _check_nonneg(vplus, "v update")
    over = vplus.max() - vtop
    if over > 64 * np.finfo(float).eps * max(vtop, TINY):
        raise NumericalError("v update broke the maximum principle", residual=over, t=s.t)
    vplus = np.clip(vplus, 0.0, vtop)
    return SimState(s.t + dt, Field(g, uplus), Field(g, vplus), p)


@dataclass(frozen=True)
class ProbeConfig:
    """Record times plus the functionals to evaluate.

    ``pairs`` lists ``(p, lambda)`` for time-weighted quantities; every ``p``
    appearing there, together with ``energy_exponents``, gets an energy and
    dissipation column.
    """

    times: tuple[float, ...] = ()
    energy_exponents: tuple[float, ...] = ()
    pairs: tuple[tuple[float, float], ...] = ()
    tests: tuple[TestFunction, ...] = ()
    lp_exponents: tuple[float, ...] = (1.0,)
    delta: float | None = None
    keep_steps: bool = True


def geometric_ladder(T: float, levels: int) -> tuple[float, ...]:
    """``T * 2**-j`` for ``j = levels, ..., 0`` in increasing order."""
    return tuple(T * 2.0 ** (-j) for j in range(levels, -1, -1))


def _phi_params(params: SimParams, probes: ProbeConfig, vmax: float) -> dict[float, PhiParams]:
    from .verifier import select_delta

    delta = probes.delta
    if delta is None:
        try:
            delta = select_delta(params.n, params.chi, vmax)
        except InputError:
            delta = float("nan")
    exps = list(dict.fromkeys([*probes.energy_exponents, *(p for p, _ in probes.pairs)]))
    if vmax == 0:
        # the weight is identically 1 on a vanishing v
        return {p: PhiParams(p, 0.0, delta, 0.0) for p in exps}
    return {p: PhiParams.build(p, params.chi, vmax, delta) for p in exps}


def run(params: SimParams, u0: MeasureSpec, v0: Field, probes: ProbeConfig = ProbeConfig()) -> DiagnosticsSeries:
    """Regularize the data, integrate to ``T`` and record at the probe times."""
    g = params.grid
    if v0.grid != g:
        raise InputError("v0 lives on a different grid")
    u = mollify_measure(u0, params.eps, g)
    # v0 == 0 is a degenerate but well-posed case (pure heat flow for u)
    v = smooth_v0(v0, params.eps) if v0.max() > 0 else v0
    vmax0 = v0.max()
    rec = DiagnosticsRecorder(
        g, params.chi, params.n, _phi_params(params, probes, vmax0), probes.pairs,
        probes.tests, probes.lp_exponents, v_ref=v.values, keep_steps=probes.keep_steps,
    )
    state = SimState(0.0, u, v, params)
    rec.observe(0.0, u.values, v.values)
    rec.record(0.0, u.values, v.values)

    targets = sorted({t for t in probes.times if 0 < t <= params.T})
    if params.T > 0 and (not targets or targets[-1] < params.T):
        targets.append(params.T)
    record_at = set(t for t in probes.times if 0 < t <= params.T)
    nsteps = 0
    for target in targets:
        while state.t < target:
            dt = cfl_dt(state)
            # absorb slivers left by accumulated roundoff in t
            landing = target - state.t <= dt * (1 + 1e-9)
            if landing:
                dt = target - state.t
            try:
                state = step(state, dt)
            except NumericalError as exc:
                exc.t = state.t
                raise
            if landing:
                state = replace(state, t=target)
            nsteps += 1
            rec.observe(state.t, state.u.values, state.v.values)
        if target in record_at:
            rec.record(state.t, state.u.values, state.v.values)
    logger.debug("run finished after %d steps", nsteps)
    series = rec.series
    series.steps["count"] = [nsteps]
    return series
