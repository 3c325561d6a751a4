import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdchain.core import LocalGrowthFn
from sgdchain.errors import CertificationError, StepSizeError, UnsupportedObjectiveError
from sgdchain.noise import NoiseModel, RngStream
from sgdchain.objectives import QuadSine, Quadratic, SimplifiedBZ, SimplifiedCauchy
from sgdchain.theory import (
    c_dagger,
    check_convexity,
    check_dissipativity,
    check_linear_growth,
    check_local_growth,
    constants_for,
    constants_report,
    contraction_rate,
    convex_bias_bound,
    dissipativity_residual,
    l_dagger,
    linear_growth_ratio,
    localized_bias_bound,
    max_step_size,
    mu2_bound,
    mu4_bound,
    proposition3_constants,
    sample_points,
    step_size_bounds,
    theorem4_C,
    theorem5_constants,
)

pos = st.floats(0.01, 100.0, allow_nan=False)


def test_max_step_size_examples():
    assert max_step_size(1, 1, 1) == 0.25
    assert max_step_size(1, 3, 0) == pytest.approx((3 - math.sqrt(6)) / 3, abs=1e-12)
    assert max_step_size(1, 2, 1) == 0.5


@settings(max_examples=200, deadline=None)
@given(L=pos, alpha=pos, L_xi=pos, factor=st.floats(1.0, 10.0))
def test_max_step_size_monotone(L, alpha, L_xi, factor):
    # alpha <= L always holds for valid constants
    alpha = min(alpha, L)
    base = max_step_size(L, alpha, L_xi)
    assert 0 < base < math.inf
    assert max_step_size(L * factor, alpha, L_xi) <= base * (1 + 1e-12)
    assert max_step_size(L, alpha, L_xi * factor) <= base * (1 + 1e-12)
    assert max_step_size(L, alpha / factor, L_xi) <= base * (1 + 1e-12)


def test_c_dagger_examples():
    assert c_dagger(1, 1, 0, 1) == pytest.approx(1 / 64)
    assert l_dagger(1, 1, 0) == 17
    assert c_dagger(1, 1, 1, 0) == pytest.approx(1 / (64 * 17))
    assert c_dagger(2, 1, 0, 0) / c_dagger(1, 1, 0, 0) == pytest.approx(0.25)


def test_step_size_bounds_binding_cap():
    b = step_size_bounds(1.0, 1.0, 1.0, 0.0)
    assert b.binding == "c_dagger" and b.overall_max == pytest.approx(1 / 64)
    with pytest.raises(StepSizeError) as info:
        b.check(0.05)
    assert info.value.cap_name == "c_dagger"
    b.check(0.05, ["c_L_alpha"])
    b2 = step_size_bounds(1.0, 1.0, 1.0, 0.0, L_tilde=1000.0)
    assert b2.binding == "2/L_tilde"


def test_proposition3_examples():
    p = proposition3_constants(1, 1, 1, 0, 0.0, 0.01)
    assert p.D_branches[0] == pytest.approx(64 * math.sqrt(513), rel=1e-12)
    assert p.D_branches[0] == pytest.approx(1449.568, abs=1e-3)
    # 8 (beta + 6 L_bar^2 + 16) with theta* = 0 and L_xi = 0
    assert p.D_branches[1] == pytest.approx(8 * (1 + 6 + 16))
    assert p.D == p.D_branches[0]
    assert p.rho == pytest.approx(math.sqrt(1 - 0.02 + 32 * 1e-4))
    with pytest.raises(StepSizeError) as info:
        proposition3_constants(1, 1, 1, 0, 0.0, 0.1)
    assert info.value.cap_name == "c_dagger"


def test_rho_inside_unit_interval_on_grid():
    for L, alpha, beta, L_xi in [(1, 1, 1, 0), (10, 1, 25, 3), (0.5, 0.025, 0.3, 1)]:
        b = step_size_bounds(L, alpha, beta, L_xi)
        etas = np.linspace(0, b.overall_max, 102)[1:-1]
        rhos = [proposition3_constants(L, alpha, beta, L_xi, 0.0, e).rho for e in etas]
        assert all(0 < r < 1 for r in rhos)
        # minimum of the quadratic under the root sits at alpha / (32 L_dagger)
        eta_min = alpha / (32 * b.L_dagger)
        assert contraction_rate(alpha, b.L_dagger, eta_min) <= min(rhos) + 1e-15


def test_rho_approaches_one():
    assert contraction_rate(1, 1, 1e-12) == pytest.approx(1.0)
    assert contraction_rate(1, 1, 1e-12) < 1.0


def test_moment_bounds():
    assert mu2_bound(1, 25) == 53
    assert mu2_bound(1, 0) == 3
    lam, xty2 = 0.1, 0.7
    assert mu2_bound(lam / 4, xty2 / lam) == pytest.approx(3 + 8 * xty2 / lam**2)
    assert mu4_bound(1, 1, 0, 0) == pytest.approx(240)
    assert mu4_bound(1, 1, 1, 0) > mu4_bound(1, 1, 0, 0)
    v = mu4_bound(10, 1, 25, 3)
    assert 0 < v < math.inf


def test_theorem4_C_and_bounds():
    L, mu2 = 2.0, 7.0
    assert theorem4_C(L, 0.0, 1.0, 1.0, mu2) == pytest.approx(6 * L**2 * mu2 + 5 * L**2)
    C = 3.0
    lin = LocalGrowthFn.linear(1.0)
    sq = LocalGrowthFn.power(1.0, 2.0)
    r1 = localized_bias_bound(C, 2e-6, 0.5, lin) / localized_bias_bound(C, 1e-6, 0.5, lin)
    assert r1 == pytest.approx(2.0)
    r2 = localized_bias_bound(C, 4e-8, 0.5, sq) / localized_bias_bound(C, 1e-8, 0.5, sq)
    assert r2 == pytest.approx(2.0, rel=1e-3)
    assert convex_bias_bound(C, 0.1, L_phi=2) == pytest.approx(0.6)


def test_theorem5_constants():
    common = dict(L=1.0, L_tilde=1.0, L_xi=0.0, alpha=1.0, beta=0.0, mu2=3.0, strict=False)
    t = theorem5_constants(eta=0.1, **common)
    assert t.M == pytest.approx(12 * 1 * 1 * (1 + t.m + t.m**0.75 + 3.0))
    gamma = 0.5
    g = LocalGrowthFn.linear(gamma)
    t = theorem5_constants(eta=0.1, g=g, **common)
    x = 2 * t.M * 0.1 / (2 - 0.1)
    assert t.bias_bound == pytest.approx((1 + 1 / gamma) * x)
    near = [theorem5_constants(eta=2 - d, **common).bias_bound for d in (1e-2, 1e-4, 1e-6)]
    assert near[0] < near[1] < near[2] and near[2] > 1e6
    with pytest.raises(StepSizeError):
        theorem5_constants(eta=2.0, **common)
    with pytest.raises(StepSizeError):
        theorem5_constants(eta=0.1, **{**common, "strict": True})


def test_constants_report_and_json():
    r = constants_report(1.0, 1.0, 25.0, 1.0)
    assert r["c_L_alpha"] == 0.25 and r["mu2"] == 53
    json.dumps(r)
    r = constants_report(1.0, 1.0, 1.0, 0.0, eta=0.01)
    assert 0 < r["rho"] < 1 and r["D"] > 0
    with pytest.raises(StepSizeError):
        constants_report(1.0, 1.0, 1.0, 0.0, eta=0.5)


def test_constants_for_uses_noise_moments():
    c = constants_for(QuadSine(), NoiseModel.gaussian(1.0))
    assert c.L_xi == NoiseModel.gaussian(1.0).moment_constant(1)
    assert (c.alpha, c.beta) == (1.0, 25.0)


def test_sample_points_layout():
    pts, inside = sample_points(3, 2.0, 1000, RngStream(0))
    norms = np.linalg.norm(pts, axis=1)
    assert np.all(norms[inside] <= 2.0 + 1e-12)
    assert np.all(norms[~inside] >= 2.0 - 1e-12) and norms.max() == pytest.approx(20.0)
    assert np.all(pts[0] == 0)


def test_linear_growth_checker():
    cert = check_linear_growth(Quadratic(2), 1000.0, 2000, RngStream(0))
    assert cert.certified and 0.99 < cert.estimates["L"] <= 1.0
    q = check_linear_growth(QuadSine(), 20.0, 10_000, RngStream(0))
    assert 2 <= q.estimates["L"] <= 12
    grid = np.linspace(-20, 20, 400_001)[:, None]
    assert q.estimates["L"] <= linear_growth_ratio(QuadSine(), grid).max() + 1e-9
    sc = check_linear_growth(SimplifiedCauchy(10, 0.1), 20.0, 10_000, RngStream(0))
    assert sc.estimates["L"] <= 1.1
    bad = check_linear_growth(QuadSine(), 20.0, 1000, RngStream(0), L=1.0)
    assert not bad.certified and bad.violations
    with pytest.raises(CertificationError):
        bad.require()


def test_dissipativity_checker_quadratic_and_json():
    cert = check_dissipativity(Quadratic(3), 10.0, 2000, RngStream(1), alpha=1.0)
    assert cert.certified
    assert cert.estimates["alpha"] == 1.0 and cert.estimates["beta"] == pytest.approx(0, abs=1e-9)
    d = json.loads(cert.to_json())
    assert set(d) >= {"assumption", "params", "n_samples", "violations", "certified"}
    res = dissipativity_residual(Quadratic(3), np.eye(3), 1.0)
    np.testing.assert_allclose(res, 0.0)


def test_dissipativity_scan_picks_largest_alpha():
    cert = check_dissipativity(SimplifiedBZ(3, 0.1, 1.0), 5.0, 4000, RngStream(2))
    assert cert.certified
    assert 0.1 <= cert.estimates["alpha"] < 0.2


def test_dissipativity_rejects_too_large_alpha():
    cert = check_dissipativity(SimplifiedCauchy(3, 0.1), 5.0, 4000, RngStream(2), alpha=1.0)
    assert not cert.certified and cert.violations


def test_local_growth_checkers():
    bz = SimplifiedBZ(10, 0.1, 1.0)
    assert check_local_growth(bz, "localized_dissipativity", R=2.0, n_samples=10_000,
                              stream=RngStream(3)).certified
    sc = SimplifiedCauchy(10, 0.1)
    cert = check_local_growth(sc, "lojasiewicz", n_samples=10_000, stream=RngStream(3))
    assert cert.certified
    assert cert.params["gamma"] == pytest.approx(2 * 0.01 / 1.1)
    q = Quadratic(3)
    assert check_local_growth(q, "localized_dissipativity", g_spec=LocalGrowthFn.power(1.0, 2.0),
                              R=3.0, n_samples=2000, stream=RngStream(3)).certified
    with pytest.raises(ValueError):
        check_local_growth(q, "strong_convexity")


def test_local_growth_needs_minimizer(regression_objective):
    with pytest.raises(UnsupportedObjectiveError):
        check_local_growth(regression_objective, "lojasiewicz")


def test_convexity_checker():
    assert not check_convexity(SimplifiedCauchy(10, 0.1), 5.0, 2000, RngStream(4)).certified
    assert check_convexity(Quadratic(3), 5.0, 2000, RngStream(4)).certified


@settings(max_examples=4, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_checker_soundness_on_fresh_samples(seed):
    # the sample size is the checkers' default; a max over n points is exceeded by
    # roughly 1/n of fresh draws, so small n would sit near the 0.1% limit
    n, radius = 10_000, 20.0
    for obj in (QuadSine(), SimplifiedCauchy(4, 0.1), SimplifiedBZ(4, 0.1, 1.0)):
        lg = check_linear_growth(obj, radius, n, RngStream(seed, 0))
        fresh = check_linear_growth(obj, radius, 10 * n, RngStream(seed, 1), L=lg.estimates["L"])
        assert fresh.n_violations <= 0.001 * fresh.n_samples, obj.name
        ds = check_dissipativity(obj, radius, n, RngStream(seed, 2))
        assert ds.certified, obj.name
        fresh = check_dissipativity(obj, radius, 10 * n, RngStream(seed, 3),
                                    alpha=ds.estimates["alpha"], beta=ds.estimates["beta"])
        assert fresh.n_violations <= 0.001 * fresh.n_samples, obj.name
