"""Energy-type functionals and the per-run diagnostics they feed.

The weight ``phi(s) = exp((beta*s)**2)`` and its derivatives are evaluated in
closed form.  ``DiagnosticsRecorder`` evaluates the instantaneous functionals
after every time step, integrates the cumulative ones with the trapezoid rule
and publishes rows at the probe times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisViolation, InputError
from .grid import Field, GridSpec, lp_norm
from .operators import gradient_sq_array


def phi(s, beta):
    return np.exp((beta * np.asarray(s)) ** 2)


def phi1(s, beta):
    s = np.asarray(s)
    return 2.0 * beta**2 * s * phi(s, beta)


def phi2(s, beta):
    s = np.asarray(s)
    return 2.0 * beta**2 * (1.0 + 2.0 * beta**2 * s**2) * phi(s, beta)


def beta_of(p: float, chi: float, vmax: float) -> float:
    """Exponent scale making the weight absorb the taxis cross terms."""
    if not p > 1:
        raise InputError(f"beta needs p > 1, got {p}")
    if not (chi > 0 and vmax > 0):
        raise InputError("beta needs chi > 0 and vmax > 0")
    return math.sqrt(chi * (p - 1.0) / (4.0 * vmax))


@dataclass(frozen=True)
class PhiParams:
    p: float
    beta: float
    delta: float
    vmax: float

    @classmethod
    def build(cls, p: float, chi: float, vmax: float, delta: float) -> "PhiParams":
        return cls(p=p, beta=beta_of(p, chi, vmax), delta=delta, vmax=vmax)


def energy(u: Field, v: Field, pp: PhiParams) -> float:
    return float((u.values**pp.p * phi(v.values, pp.beta)).sum() * u.grid.cell_area)


def dissipation(u: Field, v: Field, pp: PhiParams) -> tuple[float, float]:
    """The two dissipation integrals, without their delta-dependent prefactors.

    ``D1 = int phi(v) |grad u^(p/2)|^2`` and ``D2 = int u^p phi''(v) |grad v|^2``.
    """
    g = u.grid
    a = g.cell_area
    d1 = (phi(v.values, pp.beta) * gradient_sq_array(u.values ** (pp.p / 2), g)).sum() * a
    d2 = (u.values**pp.p * phi2(v.values, pp.beta) * gradient_sq_array(v.values, g)).sum() * a
    return float(d1), float(d2)


def check_time_weight(p: float, lam: float, n: int = 2) -> None:
    if not lam > n * (p - 1) / 2:
        raise HypothesisViolation(
            f"time weight lambda={lam} must exceed n(p-1)/2 = {n * (p - 1) / 2:g}",
            condition="lambda > n(p-1)/2 for time-weighted bounds",
        )


def time_weighted(u: Field, t: float, p: float, lam: float, n: int = 2) -> float:
    """``t**lam * int u**p``."""
    check_time_weight(p, lam, n)
    if t < 0:
        raise InputError("time must be nonnegative")
    return float(t**lam * (u.values**p).sum() * u.grid.cell_area)


def taxis_l1(u: Field, v: Field) -> float:
    """``int u |grad v|``, the integrand of the cumulative taxis diagnostic."""
    return float((u.values * np.sqrt(gradient_sq_array(v.values, u.grid))).sum() * u.grid.cell_area)


@dataclass(frozen=True)
class TestFunction:
    """``cos(k pi x / Lx) * cos(l pi y / Ly)``: zero normal derivative on the boundary."""

    __test__ = False  # keep pytest from collecting it

    k: int
    l: int
    Lx: float = 1.0
    Ly: float = 1.0

    def __call__(self, x, y):
        return np.cos(self.k * np.pi * x / self.Lx) * np.cos(self.l * np.pi * y / self.Ly)

    def evaluate(self, grid: GridSpec) -> np.ndarray:
        X, Y = grid.centers()
        return self(X, Y)

    @property
    def grad_sup(self) -> float:
        return math.pi * max(self.k / self.Lx, self.l / self.Ly)

    @property
    def lap_sup(self) -> float:
        return (self.k * math.pi / self.Lx) ** 2 + (self.l * math.pi / self.Ly) ** 2

    @property
    def tag(self) -> str:
        return f"k{self.k}l{self.l}"


# -- column names ----------------------------------------------------------

def fmt_num(x: float) -> str:
    return f"{x:.6g}"


def col_energy(p):
    return f"E_p{fmt_num(p)}"


def col_d1(p):
    return f"D1_p{fmt_num(p)}"


def col_d2(p):
    return f"D2_p{fmt_num(p)}"


def col_weighted(p, lam):
    return f"W_p{fmt_num(p)}_l{fmt_num(lam)}"


def col_cumulative(p, lam):
    return f"S_p{fmt_num(p)}_l{fmt_num(lam)}"


def col_pair(tf: TestFunction):
    return f"pair_{tf.tag}"


def col_vdist(q):
    return f"vdist_p{fmt_num(q)}"


@dataclass
class DiagnosticsSeries:
    """Probe-time records of one run.

    ``columns`` maps CSV column names to per-record values; ``snapshots``
    holds ``(u, v)`` arrays for each record.
    """

    columns: dict[str, list[float]]
    snapshots: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    phi_params: dict[float, PhiParams] = field(default_factory=dict)
    pairs: tuple[tuple[float, float], ...] = ()
    tests: tuple[TestFunction, ...] = ()
    lp_exponents: tuple[float, ...] = ()
    steps: dict[str, list[float]] = field(default_factory=dict)
    grid: GridSpec | None = None
    chi: float = 1.0

    def __getitem__(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)

    def __len__(self):
        return len(self.columns["t"])

    @property
    def times(self) -> np.ndarray:
        return self["t"]

    def header(self) -> list[str]:
        return list(self.columns)

    def index_of(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[idx], t, rel_tol=1e-12, abs_tol=1e-15):
            raise KeyError(f"no record at t={t}")
        return idx

    def fields_at(self, t: float) -> tuple[Field, Field]:
        u, v = self.snapshots[self.index_of(t)]
        return Field(self.grid, u), Field(self.grid, v)


class DiagnosticsRecorder:
    """Accumulates every monitored functional along a run."""

    def __init__(self, grid, chi, n, phi_params, pairs, tests, lp_exponents, v_ref, keep_steps=True):
        self.grid = grid
        self.chi = chi
        self.n = n
        self.phi_params = dict(phi_params)
        self.pairs = tuple(pairs)
        self.tests = tuple(tests)
        self.lp = tuple(lp_exponents)
        self.v_ref = v_ref
        self.keep_steps = keep_steps
        self._test_values = [tf.evaluate(grid) for tf in self.tests]
        names = ["t", "mass", "vmax"]
        for p in self.phi_params:
            names += [col_energy(p), col_d1(p), col_d2(p)]
        for p, lam in self.pairs:
            names += [col_weighted(p, lam), col_cumulative(p, lam)]
        names.append("TX")
        names += [col_pair(tf) for tf in self.tests]
        names += [col_vdist(q) for q in self.lp]
        self.series = DiagnosticsSeries(
            columns={k: [] for k in names},
            phi_params=self.phi_params,
            pairs=self.pairs,
            tests=self.tests,
            lp_exponents=self.lp,
            steps={"t": [], **{col_energy(p): [] for p in self.phi_params},
                   **{col_d1(p): [] for p in self.phi_params},
                   **{col_d2(p): [] for p in self.phi_params}},
            grid=grid,
            chi=chi,
        )
        self._last = None
        self._cum = {pl: 0.0 for pl in self.pairs}
        self._tx = 0.0

    def _instant(self, t, u, v):
        g = self.grid
        a = g.cell_area
        gv2 = gradient_sq_array(v, g)
        inst = {"taxis": float((u * np.sqrt(gv2)).sum() * a)}
        upow = {}
        for p in {p for p, _ in self.pairs} | set(self.phi_params):
            upow[p] = u**p
        for p, pp in self.phi_params.items():
            ph = phi(v, pp.beta)
            inst[("E", p)] = float((upow[p] * ph).sum() * a)
            inst[("D1", p)] = float((ph * gradient_sq_array(u ** (p / 2), g)).sum() * a)
            inst[("D2", p)] = float((upow[p] * phi2(v, pp.beta) * gv2).sum() * a)
        for p, lam in self.pairs:
            inst[("Lp", p)] = float(upow[p].sum() * a)
            inst[("S", p, lam)] = t**lam * float((upow[p] * gv2).sum() * a)
        return inst

    def observe(self, t: float, u: np.ndarray, v: np.ndarray) -> None:
        """Advance the cumulative integrals to time ``t``."""
        inst = self._instant(t, u, v)
        if self._last is not None:
            t0, prev = self._last
            dt = t - t0
            self._tx += 0.5 * dt * (prev["taxis"] + inst["taxis"])
            for p, lam in self.pairs:
                key = ("S", p, lam)
                self._cum[(p, lam)] += 0.5 * dt * (prev[key] + inst[key])
        self._last = (t, inst)
        if self.keep_steps:
            st = self.series.steps
            st["t"].append(t)
            for p in self.phi_params:
                st[col_energy(p)].append(inst[("E", p)])
                st[col_d1(p)].append(inst[("D1", p)])
                st[col_d2(p)].append(inst[("D2", p)])

    def record(self, t: float, u: np.ndarray, v: np.ndarray) -> None:
        """Publish a row for time ``t`` (``observe`` must have seen ``t``)."""
        assert self._last is not None and self._last[0] == t
        inst = self._last[1]
        g = self.grid
        a = g.cell_area
        c = self.series.columns
        c["t"].append(t)
        c["mass"].append(float(u.sum() * a))
        c["vmax"].append(float(v.max()))
        for p in self.phi_params:
            c[col_energy(p)].append(inst[("E", p)])
            c[col_d1(p)].append(inst[("D1", p)])
            c[col_d2(p)].append(inst[("D2", p)])
        for p, lam in self.pairs:
            c[col_weighted(p, lam)].append(t**lam * inst[("Lp", p)])
            c[col_cumulative(p, lam)].append(self._cum[(p, lam)])
        c["TX"].append(self._tx)
        for tf, w in zip(self.tests, self._test_values):
            c[col_pair(tf)].append(float((u * w).sum() * a))
        dv = Field(g, v - self.v_ref)
        for q in self.lp:
            c[col_vdist(q)].append(lp_norm(dv, q))
        self.series.snapshots.append((u.copy(), v.copy()))


# -- continuity at t = 0 ----------------------------------------------------

@dataclass
class ContinuityReport:
    times: np.ndarray
    pairing_gap: dict[str, np.ndarray]
    pairing_bound: dict[str, np.ndarray]
    v_dist: np.ndarray
    v_bound: np.ndarray

    def pairing_margin(self, slack: float = 0.0) -> dict[str, np.ndarray]:
        """``(1 + slack) * bound - gap`` per probe; nonnegative means satisfied."""
        return {k: (1 + slack) * self.pairing_bound[k] - self.pairing_gap[k] for k in self.pairing_gap}

    def v_margin(self, slack: float = 0.0) -> np.ndarray:
        return (1 + slack) * self.v_bound - self.v_dist


def continuity_moduli(series: DiagnosticsSeries, u0, v0: Field) -> ContinuityReport:
    """Measured distances to the initial data next to their analytic bounds.

    Pairing gaps are taken relative to the regularized initial record.  The
    v-bound uses the raw ``v0`` and the discrete heat semigroup.
    """
    from .regularize import heat_step

    t = series.times
    m = u0.mass
    tx = series["TX"]
    gaps, bounds = {}, {}
    for tf in series.tests:
        col = series[col_pair(tf)]
        gaps[tf.tag] = np.abs(col - col[0])
        bounds[tf.tag] = m * tf.lap_sup * t + series.chi * tx * tf.grad_sup
    if 1 in series.lp_exponents or 1.0 in series.lp_exponents:
        v_dist = series[col_vdist(1)]
    else:
        v_dist = np.array([
            lp_norm(Field(series.grid, v - series.snapshots[0][1]), 1) for _, v in series.snapshots
        ])
    vsup = v0.max()
    heat_gap = np.array([
        0.0 if ti == 0 else lp_norm(Field(v0.grid, v0.values - heat_step(v0, ti).values), 1)
        for ti in t
    ])
    return ContinuityReport(t, gaps, bounds, v_dist, heat_gap + m * vsup * t)
