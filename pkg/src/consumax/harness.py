"""Experiment configuration, orchestration and persistence.

Each ``cmd_*`` function writes its artifacts under the output directory and
returns a :class:`VerificationReport`; the CLI maps a report to an exit code.
"""
from __future__ import annotations

import concurrent.futures
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import HypothesisViolation, InputError, SmallnessViolated
from .functionals import (
    ContinuityReport, DiagnosticsSeries, TestFunction, check_time_weight, col_cumulative,
    col_d1, col_d2, col_energy, col_weighted, continuity_moduli,
)
from .grid import Field, GridSpec, MeasureSpec, lp_norm
from .stepper import ProbeConfig, SimParams, geometric_ladder, run
from .verifier import certify, select_delta, smallness_threshold

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

MASS_TOL = 1e-10
VMAX_TOL = 1e-12
ENERGY_SLACK = 1e-6
ENERGY_T_MIN = 1e-3
CONTINUITY_SLACK = 0.10
SWEEP_FACTOR = 2.0
REFINE_RATE = 0.8
TX_FLOOR = 1e-14
FALLBACK_P = 1.25


@dataclass
class ExperimentConfig:
    sim: SimParams
    u0: MeasureSpec
    v0: Field
    v0_spec: dict
    probe_times: tuple[float, ...]
    pairs: tuple[tuple[float, float], ...]
    tests: tuple[TestFunction, ...]
    lp_exponents: tuple[float, ...]
    sweep_eps: tuple[float, ...] = ()
    sweep_t0: float = 0.5
    refine_levels: int = 3
    refine_dt: float | None = None
    refine_t_min: float = ENERGY_T_MIN
    out_dir: Path = Path("out")
    base_dir: Path = Path(".")
    delta: float | None = None
    exploratory: bool = False
    violations: list[str] = field(default_factory=list)
    snapshots: bool = True

    def probes(self, keep_steps=True) -> ProbeConfig:
        return ProbeConfig(
            times=self.probe_times, pairs=self.pairs, tests=self.tests,
            lp_exponents=self.lp_exponents, delta=self.delta, keep_steps=keep_steps,
        )

    @property
    def vmax(self) -> float:
        return self.v0.max()


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    where: str = ""


@dataclass
class VerificationReport:
    command: str
    checks: list[Check] = field(default_factory=list)
    exploratory: bool = False
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, worst, where=""):
        self.checks.append(Check(name, bool(passed), float(worst), str(where)))

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "exploratory": self.exploratory,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "info": self.info,
        }

    def as_text(self) -> str:
        lines = [f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: worst={c.worst:.6g} {c.where}".rstrip()
                 for c in self.checks]
        if self.exploratory:
            lines.append("exploratory: true")
        return "\n".join(lines)


# -- configuration ------------------------------------------------------------

def _v0_field(spec: dict, grid: GridSpec, base: Path) -> Field:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return Field.constant(grid, float(spec["value"]))
    if kind == "cosine":
        amp = float(spec["amplitude"])
        tf = TestFunction(int(spec.get("k", 1)), int(spec.get("l", 0)), grid.Lx, grid.Ly)
        return Field.from_function(grid, lambda x, y: amp * (1 + tf(x, y)) / 2)
    if kind == "file":
        arr = np.loadtxt(base / spec["path"], delimiter=",", ndmin=2)
        return Field(grid, arr)
    raise InputError(f"unknown v0 kind {kind!r}")


def _hypothesis(cfg_violations: list, allow: bool, exc: HypothesisViolation):
    if not allow:
        raise exc
    cfg_violations.append(f"{exc.condition}: {exc}")


def config_from_dict(raw: dict, base: Path = Path("."), allow_outside_hypotheses: bool = False) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from parsed TOML."""
    unknown = set(raw) - {"sim", "init", "probes", "functionals", "sweep", "refine", "output"}
    if unknown:
        raise InputError(f"unknown config sections: {sorted(unknown)}")
    s = raw.get("sim", {})
    grid = GridSpec(float(s.get("Lx", 1.0)), float(s.get("Ly", 1.0)), int(s.get("nx", 64)), int(s.get("ny", 64)))
    n = int(s.get("n", 2))
    chi = float(s.get("chi", 1.0))
    policy = s.get("dt_policy", "adaptive")
    sim = SimParams(
        chi=chi, n=n, grid=grid, T=float(s.get("T", 1.0)), eps=float(s.get("eps", 1e-2)),
        dt_policy=policy, sigma=float(s.get("sigma", 0.9)),
        dt=float(s["dt"]) if "dt" in s else None,
    )
    thr = smallness_threshold(n, chi)

    init = raw.get("init", {})
    atoms = [tuple(a) for a in init.get("atoms", [[grid.Lx / 2, grid.Ly / 2, 1.0]])]
    density = None
    if float(init.get("density", 0.0)) > 0:
        density = Field.constant(grid, float(init["density"]))
    u0 = MeasureSpec(atoms, density)
    u0.check_inside(grid)
    v0_spec = dict(init.get("v0", {"kind": "constant", "value": 0.9 * thr}))
    v0 = _v0_field(v0_spec, grid, base)
    if v0.min() < 0:
        raise InputError("v0 must be nonnegative")

    violations: list[str] = []
    vmax = v0.max()
    delta = None
    if vmax == 0:
        _hypothesis(violations, allow_outside_hypotheses, HypothesisViolation(
            "v0 vanishes identically; need ||v0||_inf > 0", condition="v0 not identically zero"))
        # every delta in (0, 1) is admissible in the limit vmax -> 0
        delta = 1.0
    else:
        try:
            delta = select_delta(n, chi, vmax)
        except SmallnessViolated as exc:
            _hypothesis(violations, allow_outside_hypotheses, exc)

    fn = raw.get("functionals", {})
    pairs_raw = fn.get("pairs", "auto")
    if pairs_raw == "auto":
        p = 1 + delta / 2 if delta is not None else FALLBACK_P
        pairs = ((p, n * (p - 1) / 2 + 0.1),)
    else:
        pairs = tuple((float(p), float(lam)) for p, lam in pairs_raw)
    for p, lam in pairs:
        upper = n / 2 + (delta if delta is not None else 0.0)
        if not 1 < p <= upper:
            _hypothesis(violations, allow_outside_hypotheses, HypothesisViolation(
                f"exponent p={p} outside (1, n/2 + delta] = (1, {upper:.6g}]",
                condition="p in (1, n/2 + delta]"))
        try:
            check_time_weight(p, lam, n)
        except HypothesisViolation as exc:
            _hypothesis(violations, allow_outside_hypotheses, exc)
    tests = tuple(TestFunction(int(k), int(l), grid.Lx, grid.Ly)
                  for k, l in fn.get("tests", [[0, 0], [1, 0], [0, 1], [1, 1]]))
    lp = tuple(float(q) for q in fn.get("lp", [1, 2]))

    pr = raw.get("probes", {})
    kind = pr.get("kind", "geometric")
    if kind == "geometric":
        times = geometric_ladder(sim.T, int(pr.get("levels", 14))) if sim.T > 0 else ()
    elif kind == "list":
        times = tuple(sorted(float(t) for t in pr.get("times", [])))
    else:
        raise InputError(f"unknown probe kind {kind!r}")
    if any(not 0 < t <= sim.T for t in times):
        raise InputError("probe times must lie in (0, T]")

    sw = raw.get("sweep", {})
    sweep_eps = tuple(float(e) for e in sw.get("eps", [1e-1, 3e-2, 1e-2, 3e-3]))
    if any(not 0 < e < 1 for e in sweep_eps) or list(sweep_eps) != sorted(sweep_eps, reverse=True):
        raise InputError("sweep eps list must be decreasing inside (0, 1)")
    rf = raw.get("refine", {})
    out = raw.get("output", {})
    return ExperimentConfig(
        sim=sim, u0=u0, v0=v0, v0_spec=v0_spec, probe_times=times, pairs=pairs, tests=tests,
        lp_exponents=lp, sweep_eps=sweep_eps, sweep_t0=float(sw.get("t0", 0.5)),
        refine_levels=int(rf.get("levels", 3)),
        refine_dt=float(rf["dt"]) if "dt" in rf else None,
        refine_t_min=float(rf.get("t_min", ENERGY_T_MIN)),
        out_dir=base / out.get("dir", "out"), base_dir=base, delta=delta,
        exploratory=bool(violations), violations=violations,
        snapshots=bool(pr.get("snapshots", True)),
    )


def load_config(path, allow_outside_hypotheses: bool = False) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw, path.parent, allow_outside_hypotheses)


# -- persistence --------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_series_csv(series: DiagnosticsSeries, path: Path) -> None:
    names = series.header()
    cols = [series.columns[k] for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(x) for x in row])


def read_series_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    return {k: body[:, i] for i, k in enumerate(header)}


def write_snapshots(series: DiagnosticsSeries, out: Path) -> None:
    X, Y = series.grid.centers()
    for idx, (u, v) in enumerate(series.snapshots):
        with open(out / f"fields_t{idx:03d}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "u", "v"])
            for row in zip(X.ravel(), Y.ravel(), u.ravel(), v.ravel()):
                w.writerow([_fmt(x) for x in row])


def write_report(report: VerificationReport, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


# -- checks shared by several commands ----------------------------------------

def invariant_checks(report: VerificationReport, series: DiagnosticsSeries, m: float, suffix: str = "") -> None:
    t = series.times
    mass_dev = np.abs(series["mass"] - m) / m
    k = int(np.argmax(mass_dev))
    report.add("mass conservation" + suffix, mass_dev[k] <= MASS_TOL, mass_dev[k], f"t={t[k]:.6g}")
    vm = series["vmax"]
    rise = np.diff(vm) if len(vm) > 1 else np.zeros(1)
    k = int(np.argmax(rise))
    report.add("vmax nonincreasing" + suffix, rise[k] <= VMAX_TOL, rise[k], f"t={t[k]:.6g}" if len(t) > 1 else "")
    worst = 0.0
    for name in series.header():
        if name == "TX" or name.startswith("S_"):
            d = np.diff(series[name])
            if d.size:
                worst = min(worst, float(d.min()))
    report.add("cumulative columns nondecreasing" + suffix, worst >= 0, worst)


def energy_monotonicity(series: DiagnosticsSeries, p: float, t_min: float = ENERGY_T_MIN):
    """Worst relative rise ``E(t_{k+1}) / E(t_k) - 1`` over probes with ``t_k >= t_min``."""
    t = series.times
    E = series[col_energy(p)]
    sel = np.nonzero(t[:-1] >= t_min)[0]
    if sel.size == 0:
        return -math.inf, None
    rel = E[sel + 1] / E[sel] - 1
    k = int(np.argmax(rel))
    return float(rel[k]), float(t[sel[k]])


def energy_residuals(t, E, D1, D2, p, delta):
    """Discrete form of the energy inequality between consecutive samples.

    Returns the residual ``(1/p) dE/dt + 2 delta (p-1)/p^2 D1 + delta/p D2``
    (dissipation at the left sample) and a roundoff scale for each interval.
    """
    t, E, D1, D2 = map(np.asarray, (t, E, D1, D2))
    rate = np.diff(E) / np.diff(t) / p
    a = 2 * delta * (p - 1) / p**2 * D1[:-1]
    b = delta / p * D2[:-1]
    scale = np.abs(rate) + a + b
    return rate + a + b, scale


# -- commands -----------------------------------------------------------------

def _prepare_out(cfg: ExperimentConfig, out_dir=None, command: str = "") -> Path:
    out = Path(out_dir) if out_dir is not None else cfg.out_dir / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _new_report(command: str, cfg: ExperimentConfig) -> VerificationReport:
    rep = VerificationReport(command, exploratory=cfg.exploratory)
    if cfg.violations:
        rep.info["violations"] = list(cfg.violations)
    rep.info["delta"] = cfg.delta
    rep.info["pairs"] = [list(pl) for pl in cfg.pairs]
    return rep


def cmd_run(cfg: ExperimentConfig, out_dir=None) -> tuple[VerificationReport, DiagnosticsSeries]:
    out = _prepare_out(cfg, out_dir, "run")
    rep = _new_report("run", cfg)
    series = run(cfg.sim, cfg.u0, cfg.v0, cfg.probes(keep_steps=False))
    write_series_csv(series, out / "series.csv")
    if cfg.snapshots:
        write_snapshots(series, out)
    invariant_checks(rep, series, cfg.u0.mass)
    if len(series) > 1:
        for p in series.phi_params:
            worst, where = energy_monotonicity(series, p)
            rep.add(f"energy nonincreasing p={p:.6g}", worst <= ENERGY_SLACK, worst, f"t={where}")
    rep.info["steps"] = series.steps["count"][0]
    write_report(rep, out / "report.json")
    return rep, series


def _sweep_one(args):
    cfg, eps = args
    sim = replace(cfg.sim, eps=eps)
    # the Cauchy comparison needs a record at t0
    probes = cfg.probes(keep_steps=False)
    probes = replace(probes, times=tuple(sorted({*probes.times, cfg.sweep_t0})))
    return run(sim, cfg.u0, cfg.v0, probes)


def _workers() -> int:
    env = os.environ.get("CONSUMAX_WORKERS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def run_sweep(cfg: ExperimentConfig, eps_list) -> list[DiagnosticsSeries]:
    jobs = [(cfg, e) for e in eps_list]
    workers = min(_workers(), len(jobs))
    if workers <= 1:
        return [_sweep_one(j) for j in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps eps-list order, so merging is deterministic
        return list(pool.map(_sweep_one, jobs))


def cmd_sweep_eps(cfg: ExperimentConfig, eps_list=None, out_dir=None):
    eps_list = tuple(cfg.sweep_eps if eps_list is None else eps_list)
    if any(not 0 < e < 1 for e in eps_list) or list(eps_list) != sorted(eps_list, reverse=True):
        raise InputError("sweep eps list must be decreasing inside (0, 1)")
    if not 0 < cfg.sweep_t0 <= cfg.sim.T:
        raise InputError(f"sweep t0={cfg.sweep_t0:g} must lie in (0, T]")
    out = _prepare_out(cfg, out_dir, "sweep-eps")
    rep = _new_report("sweep-eps", cfg)
    runs = run_sweep(cfg, eps_list)
    for i, (eps, series) in enumerate(zip(eps_list, runs)):
        sub = out / f"eps_{i:02d}"
        sub.mkdir(exist_ok=True)
        write_series_csv(series, sub / "series.csv")
        invariant_checks(rep, series, cfg.u0.mass, suffix=f" eps={eps:g}")

    sup = sweep_sup_table(runs, cfg.pairs)
    rep.info["eps"] = list(eps_list)
    rep.info["sup"] = sup
    for key, vals in sup.items():
        vals = np.asarray(vals)
        running = np.maximum.accumulate(vals)
        growth = running[-1] / running[0] if running[0] > 0 else math.inf
        rep.add(f"uniform bound {key}", growth < SWEEP_FACTOR, growth,
                f"eps {eps_list[0]:g} -> {eps_list[-1]:g}")

    cauchy = cauchy_table(runs, cfg.sweep_t0)
    rep.info["cauchy_t0"] = cfg.sweep_t0
    rep.info["cauchy_L2"] = cauchy
    if len(cauchy) >= 2:
        steps = np.diff(cauchy)
        rep.add("Cauchy differences decreasing", np.all(steps < 0), float(steps.max()),
                f"t0={cfg.sweep_t0:g}")
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", *sup.keys(), "cauchy_L2_next"])
        for i, eps in enumerate(eps_list):
            nxt = _fmt(cauchy[i]) if i < len(cauchy) else ""
            w.writerow([_fmt(eps), *(_fmt(v[i]) for v in sup.values()), nxt])
    write_report(rep, out / "report.json")
    return rep, runs


def sweep_sup_table(runs, pairs) -> dict[str, list[float]]:
    """Per-run maxima over probes of ``W`` and final values of ``S``."""
    table = {}
    for p, lam in pairs:
        table[f"sup_t {col_weighted(p, lam)}"] = [float(s[col_weighted(p, lam)].max()) for s in runs]
        table[f"final {col_cumulative(p, lam)}"] = [float(s[col_cumulative(p, lam)][-1]) for s in runs]
    return table


def cauchy_table(runs, t0: float) -> list[float]:
    out = []
    for a, b in zip(runs, runs[1:]):
        ua, _ = a.fields_at(t0)
        ub, _ = b.fields_at(t0)
        out.append(lp_norm(ua.with_values(ua.values - ub.values), 2))
    return out


def fit_power_law(t, y, floor: float = TX_FLOOR):
    """Least-squares fit of ``log y = log C + alpha log t`` over ``y > floor``."""
    t = np.asarray(t)
    y = np.asarray(y)
    m = (y > floor) & (t > 0)
    if m.sum() < 2:
        return None, None
    alpha, logc = np.polyfit(np.log(t[m]), np.log(y[m]), 1)
    return float(math.exp(logc)), float(alpha)


def cmd_continuity(cfg: ExperimentConfig, out_dir=None):
    out = _prepare_out(cfg, out_dir, "continuity")
    rep = _new_report("continuity", cfg)
    series = run(cfg.sim, cfg.u0, cfg.v0, cfg.probes(keep_steps=False))
    write_series_csv(series, out / "series.csv")
    invariant_checks(rep, series, cfg.u0.mass)
    cont = continuity_moduli(series, cfg.u0, cfg.v0)
    C, alpha = fit_power_law(series.times, series["TX"])
    rep.info["TX_fit"] = {"C": C, "alpha": alpha if alpha is not None else "not-applicable"}
    if alpha is not None:
        rep.add("taxis integral exponent positive", alpha > 0, alpha)
    continuity_checks(rep, cont)
    write_continuity_csv(series, cont, out / "continuity.csv")
    write_report(rep, out / "report.json")
    return rep, series, cont


def continuity_checks(rep: VerificationReport, cont: ContinuityReport, slack: float = CONTINUITY_SLACK):
    # t = 0 is a tie (both sides vanish); report the worst positive probe
    t = cont.times
    pos = t > 0
    if not pos.any():
        pos = np.ones_like(t, dtype=bool)
    for tag, gap in cont.pairing_gap.items():
        if tag == "k0l0":
            k = int(np.argmax(gap))
            rep.add("pairing gap k0l0 vanishes", gap[k] <= MASS_TOL, gap[k], f"t={t[k]:.6g}")
            continue
        margin = cont.pairing_margin(slack)[tag]
        ok = margin.min() >= 0
        k = int(np.argmin(np.where(pos, margin, np.inf)))
        rep.add(f"pairing bound {tag}", ok, margin[k], f"t={t[k]:.6g}")
    margin = cont.v_margin(slack)
    ok = margin.min() >= 0
    k = int(np.argmin(np.where(pos, margin, np.inf)))
    rep.add("v L1 continuity bound", ok, margin[k], f"t={t[k]:.6g}")


def write_continuity_csv(series, cont: ContinuityReport, path: Path):
    tags = list(cont.pairing_gap)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "TX", *(f"gap_{k}" for k in tags), *(f"bound_{k}" for k in tags), "vdist_L1", "vbound"])
        for i, t in enumerate(cont.times):
            w.writerow([_fmt(t), _fmt(series["TX"][i]),
                        *(_fmt(cont.pairing_gap[k][i]) for k in tags),
                        *(_fmt(cont.pairing_bound[k][i]) for k in tags),
                        _fmt(cont.v_dist[i]), _fmt(cont.v_bound[i])])


def cmd_verify(cfg: ExperimentConfig, s_points: int = 10_000, out_dir=None):
    """Pointwise certification at ``p = n/2 + delta`` and at each configured ``p``."""
    rep = _new_report("verify", cfg)
    sim = cfg.sim
    texts = []
    try:
        exps = [None, *dict.fromkeys(p for p, _ in cfg.pairs)]
        for p in exps:
            r = certify(sim.n, sim.chi, cfg.vmax, p=p, s_points=s_points)
            rep.add(f"pointwise absorption p={r.p:.6g}", r.passed, r.margin, f"s={r.argmax_s:.6g}")
            texts.append(r.as_text())
    except SmallnessViolated as exc:
        rep.add("smallness condition", False, cfg.vmax - smallness_threshold(sim.n, sim.chi), str(exc))
    text = "\n\n".join(texts)
    out = _prepare_out(cfg, out_dir, "verify")
    (out / "verify.txt").write_text(text + "\n")
    write_report(rep, out / "report.json")
    return rep, text


def cmd_refine(cfg: ExperimentConfig, levels: int | None = None, out_dir=None):
    """Energy-inequality residual under simultaneous halving of ``h`` and ``dt``.

    Each level runs with a fixed step and records every step; the residual is
    evaluated on consecutive steps with ``t_k >= t_min``.  A step violates the
    inequality when its residual exceeds roundoff (``1e-10`` times the size
    of its terms).
    """
    levels = cfg.refine_levels if levels is None else levels
    if levels < 2:
        raise InputError("refinement needs at least two levels")
    out = _prepare_out(cfg, out_dir, "refine")
    rep = _new_report("refine", cfg)
    base = cfg.sim
    dt0 = cfg.refine_dt if cfg.refine_dt is not None else base.dt_max
    rows = []
    for lev in range(levels):
        f = 2**lev
        g = GridSpec(base.grid.Lx, base.grid.Ly, base.grid.nx * f, base.grid.ny * f)
        sim = replace(base, grid=g, dt_policy="fixed", dt=dt0 / f)
        if cfg.v0_spec.get("kind") == "file":
            v0 = Field(g, np.kron(cfg.v0.values, np.ones((f, f))))
        else:
            v0 = _v0_field(cfg.v0_spec, g, cfg.base_dir)
        series = run(sim, cfg.u0, v0, replace(cfg.probes(keep_steps=True), times=()))
        st = series.steps
        t = np.asarray(st["t"])
        worst_res, violations, where = -math.inf, 0, None
        for p, pp in series.phi_params.items():
            res, scale = energy_residuals(t, st[col_energy(p)], st[col_d1(p)], st[col_d2(p)], p, pp.delta)
            sel = t[:-1] >= cfg.refine_t_min
            if not sel.any():
                continue
            bad = res[sel] > 1e-10 * scale[sel]
            violations += int(bad.sum())
            k = int(np.argmax(res[sel]))
            if res[sel][k] > worst_res:
                worst_res, where = float(res[sel][k]), float(t[:-1][sel][k])
        rows.append({"level": lev, "nx": g.nx, "ny": g.ny, "dt": dt0 / f, "worst_residual": worst_res,
                     "positive_residual": max(worst_res, 0.0), "violations": violations, "at": where})
    rates = []
    for a, b in zip(rows, rows[1:]):
        ra, rb = a["positive_residual"], b["positive_residual"]
        if rb == 0:
            rates.append(math.inf)
        elif ra == 0:
            rates.append(-math.inf)
        else:
            rates.append(math.log2(ra / rb))
    rep.info["levels"] = rows
    rep.info["rates"] = [_finite(r) if math.isfinite(r) else ("inf" if r > 0 else "-inf") for r in rates]
    counts = [r["violations"] for r in rows]
    rep.add("violating steps nonincreasing", all(b <= a for a, b in zip(counts, counts[1:])),
            max(counts), f"counts={counts}")
    min_rate = min(rates)
    rep.add("residual decay rate", min_rate >= REFINE_RATE, min_rate,
            "no positive residual at the finer level" if math.isinf(min_rate) and min_rate > 0 else "")
    with open(out / "refine.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "nx", "ny", "dt", "worst_residual", "violations"])
        for r in rows:
            w.writerow([r["level"], r["nx"], r["ny"], _fmt(r["dt"]), _fmt(r["worst_residual"]), r["violations"]])
    write_report(rep, out / "report.json")
    return rep, rows
