"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v`` (lines are printed to
the terminal even under output capture).
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from consumax import Field, GridSpec, PhiParams, dissipation, energy, integrate, taxis_l1
from consumax import harness
from consumax.verifier import delta_admissible, delta_rhs, random_certification

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def report(request):
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(label, ok, detail):
        line = f"ACCEPTANCE {label:>3} {'PASS' if ok else 'FAIL'}  {detail}"
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print("\n" + line, flush=True)
        else:
            print(line)
        return ok

    return emit


@pytest.fixture(scope="module")
def ref_cfg():
    return harness.load_config(CONFIGS / "reference.toml")


@pytest.fixture(scope="module")
def ref_run(ref_cfg, tmp_path_factory):
    t0 = time.perf_counter()
    rep, series = harness.cmd_run(ref_cfg, tmp_path_factory.mktemp("run"))
    return rep, series, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sweep(ref_cfg, tmp_path_factory):
    t0 = time.perf_counter()
    rep, runs = harness.cmd_sweep_eps(ref_cfg, [1e-1, 3e-2, 1e-2, 3e-3], tmp_path_factory.mktemp("sweep"))
    return rep, runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def tuples():
    t0 = time.perf_counter()
    reps = random_certification(trials=1000, seed=0, s_points=10_000)
    return reps, time.perf_counter() - t0


def test_1_pointwise_certification(tuples, report):
    reps, elapsed = tuples
    bad = [r for r in reps if not (r.passed and r.max_ratio <= 1 - r.delta + 1e-12)]
    worst = min(r.margin for r in reps)
    ok = not bad and elapsed < 5.0 and len(reps) == 1000
    report("1", ok, f"{len(reps) - len(bad)}/1000 tuples certified, min margin {worst:.3g}, {elapsed:.2f}s")
    assert ok


def test_2_delta_selection_consistency(tuples, report):
    reps, _ = tuples
    gap = max(abs(r.vmax - float(delta_rhs(r.delta, r.n, r.chi))) for r in reps)
    chain = all(delta_admissible(r.delta, r.n, r.chi, r.vmax) for r in reps)
    ok = gap <= 1e-11 and chain
    report("2", ok, f"max |vmax - R(delta)| = {gap:.3g}, chain inequality holds for all: {chain}")
    assert ok


def test_3_conservation_and_max_principle(ref_run, ref_cfg, report):
    _, series, elapsed = ref_run
    mass_dev = float(np.abs(series["mass"] - 1.0).max())
    rise = float(np.diff(series["vmax"]).max())
    ok = mass_dev <= 1e-10 and rise <= 1e-12 and elapsed < 60
    report("3", ok, f"max |mass - 1| = {mass_dev:.3g}, max vmax rise = {rise:.3g}, {elapsed:.2f}s")
    assert ok


def test_4_energy_monotonicity(ref_run, ref_cfg, tmp_path, report):
    _, series, _ = ref_run
    (p, _), = ref_cfg.pairs
    assert p == pytest.approx(1 + ref_cfg.delta / 2)
    worst, where = harness.energy_monotonicity(series, p, t_min=1e-3)
    mono = worst <= 1e-6
    rep, rows = harness.cmd_refine(ref_cfg, 3, tmp_path)
    counts = [r["violations"] for r in rows]
    rates = rep.info["rates"]
    refine_ok = rep.passed
    ok = mono and refine_ok
    residuals = [f"{r['worst_residual']:.3g}" for r in rows]
    report("4", ok, f"worst E rise {worst:.3g} (t={where:.3g}); violating steps per level {counts}, "
                    f"worst residuals {residuals}, decay rates {rates}")
    assert ok


def _growth(vals):
    running = np.maximum.accumulate(np.asarray(vals))
    return running[-1] / running[0]


def test_5a_uniform_time_weighted_bound(sweep, ref_cfg, report):
    rep, runs, elapsed = sweep
    (p, lam), = ref_cfg.pairs
    assert lam == pytest.approx(2 * (p - 1) / 2 + 0.1)
    vals = rep.info["sup"][f"sup_t {harness.col_weighted(p, lam)}"]
    g = _growth(vals)
    ok = g < 2 and elapsed < 300
    report("5a", ok, f"sup_t W over eps {[f'{v:.4g}' for v in vals]}: growth {g:.4g} (< 2), sweep {elapsed:.1f}s")
    assert ok


def test_5b_uniform_cumulative_bound(sweep, ref_cfg, report):
    rep, runs, elapsed = sweep
    (p, lam), = ref_cfg.pairs
    vals = rep.info["sup"][f"final {harness.col_cumulative(p, lam)}"]
    g = _growth(vals)
    ok = g < 2 and elapsed < 300
    report("5b", ok, f"S(T) over eps {[f'{v:.4g}' for v in vals]}: growth {g:.4g} (< 2), sweep {elapsed:.1f}s")
    assert ok


def test_6_taxis_integral_smallness(ref_run, report):
    _, series, _ = ref_run
    t, tx = series.times, series["TX"]
    assert t[1] <= 1e-4
    nondecreasing = bool(np.all(np.diff(tx) >= 0))
    C, alpha = harness.fit_power_law(t, tx)
    ok = nondecreasing and alpha is not None and alpha > 0
    report("6", ok, f"TX nondecreasing: {nondecreasing}, TX({t[1]:.3g}) = {tx[1]:.3g}, fitted alpha = {alpha:.4g}")
    assert ok


def test_7_vague_continuity(ref_run, ref_cfg, report):
    _, series, _ = ref_run
    from consumax import continuity_moduli

    cont = continuity_moduli(series, ref_cfg.u0, ref_cfg.v0)
    margins = cont.pairing_margin(0.10)
    tags = [tf.tag for tf in ref_cfg.tests]
    assert tags == ["k0l0", "k1l0", "k0l1", "k1l1"]
    ok = all(margins[k].min() >= 0 for k in tags if k != "k0l0")
    # both sides vanish at t = 0, so quote the tightest positive probe
    pos = series.times > 0
    worst = {k: float(margins[k][pos].min()) for k in tags if k != "k0l0"}
    zero_gap = float(cont.pairing_gap["k0l0"].max())
    ok = ok and zero_gap <= 1e-10
    report("7", ok, "min margin over t > 0 per test function "
           + ", ".join(f"{k}={v:.3g}" for k, v in worst.items()) + f"; k0l0 gap {zero_gap:.3g}")
    assert ok


def test_8_v_l1_continuity(tmp_path, report):
    cfg = harness.load_config(CONFIGS / "cosine_v0.toml")
    X, _ = cfg.sim.grid.centers()
    assert np.allclose(cfg.v0.values, 0.3 * (1 + np.cos(np.pi * X)) / 2, rtol=0, atol=1e-15)
    rep, series, cont = harness.cmd_continuity(cfg, tmp_path)
    margin = cont.v_margin(0.10)
    k = int(np.argmin(margin[1:])) + 1
    ok = bool(margin.min() >= 0)
    report("8", ok, f"min v-bound margin {margin[k]:.3g} at t={series.times[k]:.3g} "
                    f"(dist {cont.v_dist[k]:.3g} vs bound {cont.v_bound[k]:.3g})")
    assert ok


def test_9_smoothing_and_cauchy(ref_run, sweep, report):
    _, series, _ = ref_run
    finite = all(np.isfinite(series.fields_at(t)[0].max()) for t in series.times if t >= 1e-3)
    peak = max(series.fields_at(t)[0].max() for t in series.times if t >= 1e-3)
    rep, _, _ = sweep
    cauchy = rep.info["cauchy_L2"]
    decreasing = all(b < a for a, b in zip(cauchy, cauchy[1:]))
    ok = finite and decreasing and len(cauchy) == 3
    report("9", ok, f"max u finite for t >= 1e-3 (peak {peak:.4g}); "
                    f"Cauchy L2 at t0=0.5 {[f'{c:.3g}' for c in cauchy]}")
    assert ok


def test_10_oracle_equivalence(report):
    rng = np.random.default_rng(2024)
    g = GridSpec(nx=16, ny=16)
    worst = 0.0
    spent = 0.0
    for _ in range(100):
        u = Field(g, rng.random(g.shape) * 2 + 1e-3)
        v = Field(g, rng.random(g.shape) * 0.3)
        p = float(rng.uniform(1.01, 2.0))
        pp = PhiParams.build(p, float(rng.uniform(0.1, 10)), 0.3, 0.1)
        t0 = time.perf_counter()
        got = (energy(u, v, pp), *dissipation(u, v, pp), taxis_l1(u, v), integrate(u))
        spent += time.perf_counter() - t0
        U, V = u.values.tolist(), v.values.tolist()
        ref = (oracles.energy(U, V, p, pp.beta, g.hx, g.hy), *oracles.dissipation(U, V, p, pp.beta, g.hx, g.hy),
               oracles.taxis_l1(U, V, g.hx, g.hy), oracles.integrate(U, g.hx, g.hy))
        worst = max(worst, max(abs(a - b) / abs(b) for a, b in zip(got, ref)))
    ok = worst <= 1e-12 and spent < 1.0
    report("10", ok, f"max relative deviation {worst:.3g} over 100 trials, {spent:.3f}s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
