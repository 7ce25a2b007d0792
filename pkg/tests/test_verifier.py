import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from consumax import InputError, SmallnessInput, SmallnessViolated, select_delta, smallness_threshold
from consumax import verify_phi_identities, verify_pointwise
from consumax.functionals import beta_of, phi2
from consumax.verifier import absorption_ratio, certify, delta_admissible, delta_rhs, random_certification


def test_threshold_examples():
    assert smallness_threshold(2, 1.0) == pytest.approx(1 / 3, rel=1e-15)
    assert smallness_threshold(3, 2.0) == pytest.approx(1 / 9, rel=1e-15)
    assert smallness_threshold(2, 2.0) == pytest.approx(smallness_threshold(2, 1.0) / 2, rel=1e-15)
    with pytest.raises(InputError):
        smallness_threshold(1, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.floats(0.1, 10.0))
def test_rhs_strictly_decreasing_with_threshold_limit(n, chi):
    d = np.linspace(0, 1, 1002)[1:-1]
    r = delta_rhs(d, n, chi)
    assert np.all(np.diff(r) < 0)
    assert float(delta_rhs(0.0, n, chi)) == pytest.approx(smallness_threshold(n, chi), rel=1e-15)


def test_select_delta_bracket_near_threshold():
    delta = select_delta(2, 1.0, 0.33)
    assert 0 < delta < 0.01
    assert delta_rhs(delta, 2, 1.0) >= 0.33 >= delta_rhs(delta + 1e-9, 2, 1.0)


def test_select_delta_tends_to_one_for_small_data():
    ds = [select_delta(2, 1.0, v) for v in (1e-2, 1e-4, 1e-6)]
    # near delta = 1, R(delta) ~ (1 - delta)^2 / 2
    assert ds[0] < ds[1] < ds[2] < 1
    assert 1 - ds[2] == pytest.approx(np.sqrt(2e-6), rel=0.05)


@pytest.mark.parametrize("vmax", [0.35, 1 / 3, 0.0, -0.1])
def test_select_delta_rejects_outside_smallness(vmax):
    with pytest.raises(SmallnessViolated):
        select_delta(2, 1.0, vmax)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 4), st.floats(0.1, 10.0), st.floats(0.01, 0.99))
def test_select_delta_hits_the_boundary(n, chi, frac):
    vmax = frac * smallness_threshold(n, chi)
    delta = select_delta(n, chi, vmax)
    assert abs(vmax - float(delta_rhs(delta, n, chi))) <= 1e-11
    assert delta_admissible(delta, n, chi, vmax)
    assert not delta_admissible(np.nextafter(delta, 1.0) + 1e-15, n, chi, vmax)


def test_ratio_at_zero_equals_chi_p_vmax():
    n, chi, vmax = 2, 1.5, 0.1
    delta = select_delta(n, chi, vmax)
    p = n / 2 + delta
    beta = beta_of(p, chi, vmax)
    assert absorption_ratio(0.0, p, chi, delta, beta) == pytest.approx(chi * p * vmax, rel=1e-14)
    assert chi**2 * (p - 1) * p / (4 * beta**2) == pytest.approx(chi * p * vmax, rel=1e-14)


def test_verify_pointwise_reference_passes():
    rep = certify(2, 1.0, 0.3)
    assert rep.passed and rep.margin >= 0 and rep.max_ratio <= 1 - rep.delta + 1e-12
    assert rep.p == pytest.approx(1 + rep.delta)
    assert "pass: true" in rep.as_text()


def test_verify_pointwise_records_failure_outside_hypotheses():
    inp = SmallnessInput(2, 1.0, 0.6, 1.005)
    rep = verify_pointwise(inp, 0.01)
    assert np.isfinite(rep.max_ratio)
    assert rep.passed == (rep.max_ratio <= 1 - 0.01 + 1e-12)


@pytest.mark.parametrize("p", [1.0, 1.2])
def test_verify_pointwise_rejects_p_out_of_range(p):
    delta = select_delta(2, 1.0, 0.3)
    assert 1 + delta < 1.2
    with pytest.raises(InputError, match="for all p|admissible range"):
        verify_pointwise(SmallnessInput(2, 1.0, 0.3, p), delta)


def test_verify_pointwise_needs_enough_points():
    with pytest.raises(InputError):
        verify_pointwise(SmallnessInput(2, 1.0, 0.3, 1.01), 0.04, s_points=50)


def test_random_certification_small_batch():
    reps = random_certification(trials=50, seed=11, s_points=2000)
    assert all(r.passed for r in reps)
    assert len({(r.n, r.chi) for r in reps}) == 50


@pytest.mark.parametrize("beta", [1.0, 0.01, 3.0])
def test_phi_identities(beta):
    assert verify_phi_identities(beta, 100)


def test_phi_identities_detect_wrong_closed_form(monkeypatch):
    from consumax import verifier
    monkeypatch.setattr(verifier, "phi2", lambda s, b: 1.01 * phi2(s, b))
    assert not verifier.verify_phi_identities(1.0)


def test_phi_identities_reject_nonpositive_beta():
    with pytest.raises(InputError):
        verify_phi_identities(0.0)
