"""Decision pipeline: dispersion, threshold, constants, modulus, g, escape."""

import math

import mpmath as mp
import numpy as np
import pytest

import liouville_lab as ll


# ---------------------------------------------------------------------------
# drift_dispersion


def test_dispersion_zero_drift(unit_bounds):
    field = ll.make_standard_fields("zero", 2)
    curve = ll.drift_dispersion(field, np.geomspace(1, 100, 12), n_pairs=4, seed=0)
    assert np.array_equal(curve.values, np.zeros(12))


def test_dispersion_contracting_drift_closed_form():
    # <x-y, b(x)-b(y)> = -|x-y|^2 for b(x) = -x, at every pair
    field = ll.make_standard_fields("ou", 2)
    radii = np.geomspace(0.5, 50, 10)
    curve = ll.drift_dispersion(field, radii, n_pairs=8, seed=1)
    np.testing.assert_allclose(curve.values, -(radii**2), rtol=1e-12)


def test_dispersion_pair_separation_is_exact():
    field = ll.make_log_example(0.25)
    radii = np.array([1.0, 10.0, 100.0])
    curve = ll.drift_dispersion(field, radii, n_pairs=8, seed=2)
    # reported values must be at least the hand-evaluable antipodal pair value
    for s, v in zip(radii, curve.values):
        antipodal = 2.0 * s * ll.eval_drift(field, np.array([s / 2.0]))[0]
        assert v >= antipodal - 1e-12


def test_dispersion_nondecreasing_in_pair_count():
    field = ll.make_log_example(0.75)
    radii = np.geomspace(1, 1e4, 12)
    few = ll.drift_dispersion(field, radii, n_pairs=4, seed=7)
    many = ll.drift_dispersion(field, radii, n_pairs=24, seed=7)
    assert np.all(many.values >= few.values - 1e-15)


def test_dispersion_rejects_bad_radii():
    field = ll.make_standard_fields("zero", 1)
    with pytest.raises(ValueError):
        ll.drift_dispersion(field, [3.0, 2.0], n_pairs=2, seed=0)
    with pytest.raises(ValueError):
        ll.drift_dispersion(field, [-1.0, 2.0], n_pairs=2, seed=0)


@pytest.mark.xfail(
    strict=True,
    reason="the 4*delta limit converges at O(1/log s); at s=1e4 the estimate "
    "is ~40% high — documented window behavior, see the acceptance notes",
)
def test_dispersion_near_4delta_at_1e4():
    for delta in (0.25, 1.0):
        field = ll.make_log_example(delta)
        curve = ll.drift_dispersion(field, [1e4], n_pairs=16, seed=0)
        assert curve.values[0] == pytest.approx(4 * delta, rel=0.02)


# ---------------------------------------------------------------------------
# asymptotic_dispersion


def test_asymptotic_zero_curve():
    field = ll.make_standard_fields("zero", 1)
    curve = ll.drift_dispersion(field, np.geomspace(1, 100, 12), n_pairs=2, seed=0)
    assert ll.asymptotic_dispersion(curve, 0.2) == 0.0


def test_asymptotic_decreasing_tail():
    field = ll.make_standard_fields("ou", 2)
    curve = ll.drift_dispersion(field, np.linspace(10, 100, 10), n_pairs=8, seed=0)
    # tail max of -s^2 over the last 20% of radii sits at the 80th percentile
    assert ll.asymptotic_dispersion(curve, 0.2) <= -6400.0


def test_asymptotic_requires_enough_radii():
    curve = ll.DispersionCurve(
        radii=np.array([1.0, 2.0]),
        values=np.array([0.0, 0.0]),
        window_radius=1.0,
        n_pairs_per_radius=1,
        seed=0,
        method="stub",
    )
    with pytest.raises(ValueError):
        ll.asymptotic_dispersion(curve, 0.2)
    field = ll.make_standard_fields("zero", 1)
    big = ll.drift_dispersion(field, np.geomspace(1, 100, 12), n_pairs=2, seed=0)
    with pytest.raises(ValueError):
        ll.asymptotic_dispersion(big, 0.0)


@pytest.mark.xfail(
    strict=True,
    reason="window-limited tail estimate lands near 1.55 at radii <= 1e5, "
    "not within 0.05 of the true limit 1.0 — same O(1/log s) gap",
)
def test_asymptotic_log_family_near_limit():
    field = ll.make_log_example(0.25)
    curve = ll.drift_dispersion(field, np.geomspace(1, 1e5, 48), n_pairs=32, seed=0)
    assert ll.asymptotic_dispersion(curve, 0.3) == pytest.approx(1.0, abs=0.05)


# ---------------------------------------------------------------------------
# theorem_threshold


def test_threshold_unit_q(unit_bounds):
    for d in (1, 2, 3, 4):
        assert ll.theorem_threshold(unit_bounds, d) == 2.0


def test_threshold_arithmetic():
    b = ll.EllipticityBounds(lambda0=1.0, Lambda0=2.0, domain_radius=1.0, n_samples=1)
    assert ll.theorem_threshold(b, 2) == 1.0
    b5 = ll.EllipticityBounds(lambda0=1.0, Lambda0=5.0, domain_radius=1.0, n_samples=1)
    assert ll.theorem_threshold(b5, 2) == -2.0


def test_threshold_scaled_identity():
    # q = c*I gives threshold exactly 2c
    for c in (0.5, 1.0, 3.0):
        b = ll.EllipticityBounds(lambda0=c, Lambda0=c, domain_radius=1.0, n_samples=1)
        assert ll.theorem_threshold(b, 3) == 2.0 * c


# ---------------------------------------------------------------------------
# classic_condition_check


def test_classic_condition_contracting(unit_bounds):
    field = ll.make_standard_fields("ou", 2)
    rng = np.random.default_rng(13)
    pairs = [(rng.uniform(-5, 5, 2), rng.uniform(-1, 1, 2)) for _ in range(100)]
    rep = ll.classic_condition_check(field, unit_bounds, pairs)
    assert rep.holds
    for (x, h), v in zip(pairs, rep.values):
        assert v == pytest.approx(-2.0 * float(h @ h), rel=1e-12)


def test_classic_condition_fails_for_log_family(unit_bounds, log_field_025):
    # at x=0, h=0.1 the value is 2*h*b(h) > 0 because b has the sign of h
    pairs = [(np.array([0.0]), np.array([0.1]))]
    rep = ll.classic_condition_check(log_field_025, unit_bounds, pairs)
    b_h = ll.eval_drift(log_field_025, np.array([0.1]))[0]
    assert rep.max_value == pytest.approx(2 * 0.1 * b_h, rel=1e-12)
    assert rep.max_value > 0
    assert not rep.holds
    assert rep.worst_index == 0


def test_classic_condition_fails_for_variable_q(var_q_field, var_q_bounds):
    # constant drift contributes nothing; (1/2 lambda0)*|q(x)-q(x+h)|^2 > 0
    rng = np.random.default_rng(29)
    pairs = [(rng.uniform(-5, 5, 2), rng.uniform(-2, 2, 2)) for _ in range(200)]
    rep = ll.classic_condition_check(var_q_field, var_q_bounds, pairs)
    assert not rep.holds
    assert rep.max_value > 0


# ---------------------------------------------------------------------------
# choose_constants


def test_choose_constants_zero_drift(unit_bounds):
    field = ll.make_standard_fields("zero", 1)
    curve = ll.drift_dispersion(field, np.geomspace(1, 100, 16), n_pairs=2, seed=0)
    c = ll.choose_constants(unit_bounds, 1, curve)
    assert 0 < c.mu < 1.0
    assert c.s1 == 0.0
    assert c.s2 == pytest.approx(2 * c.s1 + 1 * (1.0 - c.mu), rel=1e-14)
    assert c.s1 < 2 * c.mu - 0.5 * 1 * (1.0 - c.mu)
    assert c.s2 < 4 * c.mu
    # margin 4*mu - s2 = 5*mu - 1 grows with mu, so the grid maximum wins
    assert c.mu == pytest.approx(0.99, rel=1e-12)
    assert c.s0 == 1.0  # kappa == 0 everywhere, smallest radius works
    assert c.lam == pytest.approx(1.0 / (4 * (1.0 - c.mu)), rel=1e-12)


def test_choose_constants_log_family(unit_bounds, log_field_025):
    curve = ll.drift_dispersion(
        log_field_025, np.geomspace(1, 1e5, 32), n_pairs=16, seed=0
    )
    c = ll.choose_constants(unit_bounds, 1, curve)
    # the dispersion curve sits below s1 beyond s0
    suffix = curve.values[curve.radii >= c.s0]
    assert np.all(suffix <= c.s1 + 1e-12)
    assert c.s1 < 2 * c.mu - 0.5 * (1.0 - c.mu)
    assert c.s2 == pytest.approx(2 * c.s1 + (1.0 - c.mu), rel=1e-14)
    assert c.s2 < 4 * c.mu
    # hand check at mu = 0.9: the window tail (~1.46) is still admissible,
    # 1.46 < 2*0.9 - 0.05 = 1.75 and s2 ~ 3.0 < 3.6
    s1_tail = float(np.max(curve.values[-7:]))
    assert s1_tail < 2 * 0.9 - 0.5 * (1.0 - 0.9)
    assert 2 * s1_tail + (1.0 - 0.9) < 4 * 0.9


def test_choose_constants_inadmissible(unit_bounds, log_field_075):
    # kappa_inf ~ 3.5 exceeds the mu -> lambda0 threshold limit 2
    curve = ll.drift_dispersion(
        log_field_075, np.geomspace(1, 1e5, 32), n_pairs=16, seed=0
    )
    with pytest.raises(ll.NoAdmissibleConstants):
        ll.choose_constants(unit_bounds, 1, curve)


# ---------------------------------------------------------------------------
# modulus


def test_modulus_zero_drift_constant_q():
    field = ll.make_standard_fields("zero", 2)
    prof = ll.modulus(field, lam=1.0, s0=1.0, n_pairs=4, grid_size=16, seed=0)
    assert np.array_equal(prof.values, np.zeros(16))
    assert prof.dini_mass == 0.0
    assert prof.dini_ok


def test_modulus_contracting_drift_bound():
    # for b = -x the dispersion term is -2s^2 <= 0, so omega == 0 <= 2*K*s^2
    field = ll.make_standard_fields("ou", 1)
    prof = ll.modulus(field, lam=1.0, s0=1.0, n_pairs=8, grid_size=16, seed=0)
    assert np.all(prof.values <= 2.0 * prof.radii**2 + 1e-12)
    assert prof.dini_mass <= 1.0  # K * s0^2 with K = 1


def test_modulus_log_family_dini(log_field_025):
    prof = ll.modulus(log_field_025, lam=5.0, s0=1.0, n_pairs=8, grid_size=24, seed=0)
    assert prof.dini_ok
    assert prof.dini_mass > 0
    # b is smooth with |b'| bounded; the modulus is at most 2*sup|b'|*s0
    xs = np.linspace(-3, 3, 2001)
    bvals = np.array([ll.eval_drift(log_field_025, np.array([x]))[0] for x in xs])
    sup_bprime = np.max(np.abs(np.gradient(bvals, xs)))
    assert prof.dini_mass <= 2.0 * sup_bprime * 1.0


def test_modulus_values_monotone(var_q_field):
    prof = ll.modulus(var_q_field, lam=0.5, s0=2.0, n_pairs=8, grid_size=24, seed=1)
    assert np.all(np.diff(prof.values) >= 0.0)


def test_modulus_flat_head_fails_dini():
    radii = np.geomspace(1e-4, 1.0, 12)
    prof = ll.modulus_profile_from_samples(1.0, radii, np.ones(12))
    assert prof.head_exponent == pytest.approx(0.0, abs=1e-12)
    assert not prof.dini_ok


def test_modulus_profile_enforces_running_max():
    radii = np.geomspace(1e-3, 1.0, 6)
    ragged = np.array([0.1, 0.05, 0.2, 0.15, 0.3, 0.25])
    prof = ll.modulus_profile_from_samples(1.0, radii, ragged)
    assert np.all(np.diff(prof.values) >= 0.0)
    assert np.all(prof.values >= ragged)


# ---------------------------------------------------------------------------
# build_g


@pytest.fixture(scope="module")
def hand_profile():
    # omega(s) = s^2 sampled on a linear grid containing 0.5 and 1.0
    radii = np.linspace(0.1, 1.0, 10)
    return ll.modulus_profile_from_samples(0.5, radii, radii**2)


@pytest.fixture(scope="module")
def hand_constants():
    return ll.CriterionConstants(mu=0.5, s0=1.0, s1=0.95, s2=2.0, lam=0.5)


def test_build_g_hand_values(hand_profile, hand_constants):
    g = ll.build_g(hand_profile, hand_constants)
    assert g(0.5) == pytest.approx(0.5, rel=1e-12)   # omega(0.5)/0.5
    assert g(2.0) == pytest.approx(1.0, rel=1e-12)   # s2/s = 2/2


def test_build_g_left_branch_closed_at_s0(hand_profile, hand_constants):
    # at s = s0 the omega branch applies: omega(1)/1 = 1, not s2/s0 = 2
    g = ll.build_g(hand_profile, hand_constants)
    assert g(1.0) == pytest.approx(1.0, rel=1e-12)


def test_build_g_head_extrapolation(hand_profile, hand_constants):
    # below the grid, the fitted power law omega ~ s^2 gives g(s) = s
    assert hand_profile.head_exponent == pytest.approx(2.0, rel=1e-10)
    assert hand_profile.head_coeff == pytest.approx(1.0, rel=1e-10)
    assert hand_profile.head_mass == pytest.approx(0.005, rel=1e-10)
    g = ll.build_g(hand_profile, hand_constants)
    assert g(0.05) == pytest.approx(0.05, rel=1e-10)


def test_build_g_integral_closed_forms(hand_profile, hand_constants):
    # int_0^r g for omega(s)=s^2: head 0.005, then (r^2 - 0.01)/2 on the grid,
    # then s2*log(r/s0) beyond s0
    g = ll.build_g(hand_profile, hand_constants)
    assert g.integral(0.5) == pytest.approx(0.005 + (0.25 - 0.01) / 2, rel=1e-9)
    assert g.integral(1.0) == pytest.approx(0.5, rel=1e-9)
    assert g.integral(2.0) == pytest.approx(0.5 + 2 * math.log(2), rel=1e-9)


def test_build_g_integral_matches_direct_quadrature():
    # irregular monotone profile: compare the piecewise-power integral
    # against direct numerical quadrature of g itself
    radii = np.geomspace(1e-3, 1.0, 20)
    values = np.maximum.accumulate(radii**1.5 * (1.0 + 0.3 * np.sin(3 * np.log(radii))))
    prof = ll.modulus_profile_from_samples(2.0, radii, values)
    cons = ll.CriterionConstants(mu=0.5, s0=1.0, s1=0.5, s2=1.5, lam=2.0)
    g = ll.build_g(prof, cons)
    for a, b in [(1e-3, 1.0), (0.02, 0.7), (0.5, 2.0)]:
        # integrate piecewise: g is a power law between knots with a jump at s0
        knots = [a] + [float(r) for r in radii if a < r < b] + [b]
        if a < 1.0 < b:
            knots.append(1.0)
        direct = mp.quad(lambda s: g(float(s)), sorted(set(knots)))
        assert g.integral(b) - g.integral(a) == pytest.approx(float(direct), abs=1e-6)


def test_build_g_zero_modulus():
    radii = np.geomspace(1e-3, 1.0, 8)
    prof = ll.modulus_profile_from_samples(1.0, radii, np.zeros(8))
    cons = ll.CriterionConstants(mu=0.5, s0=1.0, s1=0.0, s2=1.0, lam=1.0)
    g = ll.build_g(prof, cons)
    assert g(0.5) == 0.0
    assert g(1.0) == 0.0
    assert g(4.0) == pytest.approx(0.25, rel=1e-12)  # s2/s past s0


def test_build_g_lambda_mismatch(hand_profile):
    cons = ll.CriterionConstants(mu=0.5, s0=1.0, s1=0.95, s2=2.0, lam=0.25)
    with pytest.raises(ll.ConstantMismatch):
        ll.build_g(hand_profile, cons)


# ---------------------------------------------------------------------------
# escape_integral_divergent


def _flat_g(s2, mu):
    radii = np.geomspace(1e-3, 1.0, 8)
    prof = ll.modulus_profile_from_samples(0.5, radii, np.zeros(8))
    cons = ll.CriterionConstants(mu=mu, s0=1.0, s1=(s2 - 0.5) / 2, s2=s2, lam=0.5)
    return ll.build_g(prof, cons), cons


@pytest.mark.parametrize(
    "s2,expect_divergent,partial_1e6",
    [
        # tail exponent s2/(4*mu) with mu=0.25; analytic partials:
        # 1 + 2(sqrt(R)-1), 1 + log(R), 1 + (1 - 1/R)
        (0.5, True, 1.0 + 2 * (1e3 - 1.0)),
        (1.0, True, 1.0 + math.log(1e6)),
        (2.0, False, 2.0 - 1e-6),
    ],
)
def test_escape_synthetic_tails(s2, expect_divergent, partial_1e6):
    g, cons = _flat_g(s2, mu=0.25)
    res = ll.escape_integral_divergent(g, cons, r_max=1e6)
    assert res.divergent is expect_divergent
    assert res.tail_exponent == pytest.approx(s2 / 1.0, rel=1e-12)
    assert res.prefactor == pytest.approx(1.0, rel=1e-12)
    assert res.partial_integral == pytest.approx(partial_1e6, rel=1e-3)


def test_escape_boundary_exponent_divergent():
    # s2/(4*mu) = 1 exactly: int 1/r diverges
    g, cons = _flat_g(1.0, mu=0.25)
    res = ll.escape_integral_divergent(g, cons, r_max=1e3)
    assert res.divergent


def test_escape_zero_s2_divergent():
    g, cons = _flat_g(0.0, mu=0.25)
    res = ll.escape_integral_divergent(g, cons, r_max=1e3)
    assert res.divergent
    # integrand is exactly 1 beyond s0, partial ~ r_max
    assert res.partial_integral == pytest.approx(1e3, rel=1e-3)


def test_escape_requires_r_max_beyond_s0():
    g, cons = _flat_g(1.0, mu=0.25)
    with pytest.raises(ValueError):
        ll.escape_integral_divergent(g, cons, r_max=0.5)


# ---------------------------------------------------------------------------
# evaluate_liouville_criterion (pipeline)


REDUCED = ll.CriterionConfig(radii_points=24, n_pairs=16, ellipticity_samples=2000, seed=0)


def test_pipeline_contracting_guaranteed():
    rep = ll.evaluate_liouville_criterion(ll.make_standard_fields("ou", 2), REDUCED)
    assert rep.verdict == ll.VERDICT_GUARANTEED
    assert rep.kappa_inf < 0 < rep.threshold


def test_pipeline_log_small_delta_guaranteed(log_field_025):
    rep = ll.evaluate_liouville_criterion(log_field_025, REDUCED)
    assert rep.verdict == ll.VERDICT_GUARANTEED
    assert rep.threshold == 2.0
    # verdict invariant: constants admissible, Dini mass finite, escape diverges
    assert rep.constants is not None
    assert rep.constants.s2 < 4 * rep.constants.mu
    assert rep.modulus is not None and rep.modulus.dini_ok
    assert math.isfinite(rep.modulus.dini_mass)
    assert rep.escape is not None and rep.escape.divergent


def test_pipeline_log_large_delta_inconclusive(log_field_075):
    rep = ll.evaluate_liouville_criterion(log_field_075, REDUCED)
    assert rep.verdict == ll.VERDICT_INCONCLUSIVE
    assert rep.kappa_inf > rep.threshold
    assert rep.constants is None
    assert any("dispersion-threshold" in d for d in rep.diagnostics)


def test_pipeline_reports_window_limit(log_field_025):
    rep = ll.evaluate_liouville_criterion(log_field_025, REDUCED)
    assert any("window-limited" in d for d in rep.diagnostics)


def test_pipeline_variable_q_guaranteed(var_q_field):
    rep = ll.evaluate_liouville_criterion(var_q_field, REDUCED)
    # constant drift: kappa == 0; threshold 2*1 - 1*(1.5-1) = 1.5 > 0
    assert rep.verdict == ll.VERDICT_GUARANTEED
    assert rep.kappa_inf == 0.0
    assert rep.threshold == pytest.approx(1.5, abs=1e-3)


def test_pipeline_radial_expanding_inconclusive():
    field = ll.make_standard_fields("radial_expand", 3, [4.0])
    rep = ll.evaluate_liouville_criterion(field, REDUCED)
    # kappa(s) peaks at 4.0 (= c) which exceeds the threshold 2
    assert rep.verdict == ll.VERDICT_INCONCLUSIVE


def test_pipeline_deterministic(log_field_025):
    a = ll.evaluate_liouville_criterion(log_field_025, REDUCED)
    b = ll.evaluate_liouville_criterion(log_field_025, REDUCED)
    assert a.kappa_inf == b.kappa_inf
    assert a.verdict == b.verdict
    assert np.array_equal(a.dispersion.values, b.dispersion.values)
    assert np.array_equal(a.modulus.values, b.modulus.values)
    assert a.constants == b.constants
    assert a.escape == b.escape
    assert a.diagnostics == b.diagnostics
