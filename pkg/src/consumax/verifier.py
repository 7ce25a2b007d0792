"""Certification of the scalar inequalities behind the energy estimate.

Nothing here touches a PDE run: every check is a closed-form evaluation on a
grid of ``s`` values in ``[0, vmax]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, SmallnessViolated
from .functionals import beta_of, phi, phi1, phi2

POINTWISE_TOL = 1e-12


def smallness_threshold(n: int, chi: float) -> float:
    """Upper bound ``2/(3 n chi)`` on ``||v0||_inf``."""
    if n < 2:
        raise InputError(f"dimension must be at least 2, got n={n}")
    if not chi > 0:
        raise InputError("chi must be positive")
    return 2.0 / (3.0 * n * chi)


def delta_rhs(delta, n: int, chi: float):
    """Admissible ``||v0||_inf`` for a given delta; decreasing on (0, 1)."""
    delta = np.asarray(delta, dtype=float)
    return 2.0 * (1.0 - delta) / ((2.0 + 1.0 / (1.0 - delta)) * (n + 2.0 * delta) * chi)


def delta_admissible(delta: float, n: int, chi: float, vmax: float) -> bool:
    """``(2 + 1/(1-delta)) (n + 2 delta) chi vmax / 2 <= 1 - delta``."""
    return (2.0 + 1.0 / (1.0 - delta)) * (n + 2.0 * delta) * chi * vmax / 2.0 <= 1.0 - delta


def select_delta(n: int, chi: float, vmax: float) -> float:
    """Largest admissible delta in (0, 1), by bisection.

    The bracket keeps ``lo`` admissible throughout, and bisection runs until
    the interval stops shrinking, well below 1e-12.
    """
    thr = smallness_threshold(n, chi)
    if not 0 < vmax < thr:
        raise SmallnessViolated(
            f"smallness condition fails: need 0 < ||v0||_inf < 2/(3 n chi) = {thr:.6g}, got {vmax:.6g}"
        )
    lo, hi = 0.0, 1.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if delta_admissible(mid, n, chi, vmax):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        # vmax sits within roundoff of the threshold
        raise SmallnessViolated(f"no admissible delta for vmax={vmax:.17g}")
    return lo


@dataclass(frozen=True)
class SmallnessInput:
    n: int
    chi: float
    vmax: float
    p: float


@dataclass
class PointwiseReport:
    n: int
    chi: float
    vmax: float
    p: float
    delta: float
    beta: float
    max_ratio: float
    argmax_s: float
    margin: float
    passed: bool

    def as_text(self) -> str:
        rows = [
            ("n", self.n), ("chi", self.chi), ("vmax", self.vmax), ("p", self.p),
            ("delta", self.delta), ("beta", self.beta), ("max_ratio", self.max_ratio),
            ("argmax_s", self.argmax_s), ("bound", 1 - self.delta), ("margin", self.margin),
            ("pass", str(self.passed).lower()),
        ]
        return "\n".join(f"{k}: {v:.17g}" if isinstance(v, float) else f"{k}: {v}" for k, v in rows)


def absorption_ratio(s, p: float, chi: float, delta: float, beta: float):
    """``(psi1 + psi2 + psi3) / (phi''/p)`` evaluated at ``s``."""
    f0, f1, f2 = phi(s, beta), phi1(s, beta), phi2(s, beta)
    psi1 = 2.0 * f1**2 / ((p - 1.0) * (1.0 - delta) * f0)
    psi2 = chi**2 * (p - 1.0) / 2.0 * f0
    psi3 = chi * f1
    return (psi1 + psi2 + psi3) / (f2 / p)


def verify_pointwise(inp: SmallnessInput, delta: float, s_points: int = 10_000) -> PointwiseReport:
    if s_points < 100:
        raise InputError("need at least 100 sample points")
    if not (1.0 < inp.p <= inp.n / 2 + delta):
        raise InputError(
            f"exponent p={inp.p} outside the admissible range (1, n/2 + delta] = (1, {inp.n / 2 + delta:.6g}]"
        )
    beta = beta_of(inp.p, inp.chi, inp.vmax)
    s = np.linspace(0.0, inp.vmax, s_points)
    r = absorption_ratio(s, inp.p, inp.chi, delta, beta)
    k = int(np.argmax(r))
    bound = 1.0 - delta
    return PointwiseReport(
        n=inp.n, chi=inp.chi, vmax=inp.vmax, p=inp.p, delta=delta, beta=beta,
        max_ratio=float(r[k]), argmax_s=float(s[k]), margin=float(bound - r[k]),
        passed=bool(r[k] <= bound + POINTWISE_TOL),
    )


def verify_phi_identities(beta: float, s_points: int = 100, s_max: float = 1.0) -> bool:
    """Compare the closed-form derivatives of the weight with finite differences.

    Differences are taken of ``phi - 1 = expm1((beta s)^2)``, which has the
    same derivatives and no cancellation near ``s = 0``.  The first derivative
    uses a centred step ``1e-6 (1 + s)``; the second a Richardson-extrapolated
    centred second difference with step ``1e-3 (1 + s)``.  Errors are measured
    relative to ``max(|exact|, beta^2 phi(s))``.
    """
    if not beta > 0:
        raise InputError("beta must be positive")
    s = np.linspace(0.0, s_max, s_points)

    def g(x):
        return np.expm1((beta * x) ** 2)

    h1 = 1e-6 * (1.0 + s)
    d1 = (g(s + h1) - g(s - h1)) / (2 * h1)

    def second(h):
        return (g(s + h) - 2 * g(s) + g(s - h)) / h**2

    h2 = 1e-3 * (1.0 + s)
    d2 = (4 * second(h2 / 2) - second(h2)) / 3

    scale = beta**2 * phi(s, beta)
    e1 = np.abs(d1 - phi1(s, beta)) / np.maximum(np.abs(phi1(s, beta)), scale)
    e2 = np.abs(d2 - phi2(s, beta)) / np.maximum(np.abs(phi2(s, beta)), scale)
    return bool(max(e1.max(), e2.max()) <= 1e-6)


def certify(n: int, chi: float, vmax: float, p: float | None = None, s_points: int = 10_000) -> PointwiseReport:
    """Select delta and run the pointwise check; ``p`` defaults to ``n/2 + delta``."""
    delta = select_delta(n, chi, vmax)
    if p is None:
        p = n / 2 + delta
    return verify_pointwise(SmallnessInput(n, chi, vmax, p), delta, s_points)


def random_certification(trials: int = 1000, seed: int = 0, s_points: int = 10_000):
    """Run ``certify`` at ``vmax = 0.9 * threshold`` on random ``(n, chi)``."""
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(trials):
        n = int(rng.integers(2, 5))
        chi = float(rng.uniform(0.1, 10.0))
        vmax = 0.9 * smallness_threshold(n, chi)
        reports.append(certify(n, chi, vmax, s_points=s_points))
    return reports


__all__ = [
    "POINTWISE_TOL", "PointwiseReport", "SmallnessInput", "absorption_ratio", "certify",
    "delta_admissible", "delta_rhs", "random_certification", "select_delta",
    "smallness_threshold", "verify_phi_identities", "verify_pointwise",
]
