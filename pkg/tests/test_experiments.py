import numpy as np
import pytest

from ellipstab.analytic import limit_solution
from ellipstab.coefficients import (
    identity_field,
    radial_jump_field,
    scaled_identity_field,
)
from ellipstab.experiments import (
    BoundCheck,
    ConditionViolation,
    HypothesisViolation,
    bound_check,
    coefficient_rate_study,
    composition_inequality_check,
    default_eps_grid,
    domain_rate_study,
    fit_loglog,
    q_star,
    qualitative_convergence_study,
)
from ellipstab.geometry import SectorDomain, identity_map, radial_shift_map

BETA = 1.5 * np.pi
K = np.pi / BETA


class TestFitLoglog:
    def test_exact_power_law(self):
        eps = np.geomspace(1e-1, 1e-4, 7)
        fit = fit_loglog([(e, 3.0 * e**2) for e in eps], window=(0, 6))
        assert fit.exponent == pytest.approx(2.0, abs=1e-10)
        assert fit.constant == pytest.approx(3.0, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_series(self):
        eps = np.geomspace(1e-1, 1e-4, 5)
        fit = fit_loglog([(e, 2.5) for e in eps], window=(0, 4))
        assert fit.exponent == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == 1.0  # exact fit of a flat line

    def test_window_shift_approaches_true_exponent(self):
        eps = np.geomspace(1e-1, 1e-6, 11)
        samples = [(e, e ** (2.0 / 3.0) * (1 + e)) for e in eps]
        full = fit_loglog(samples, window=(0, 10))
        tail = fit_loglog(samples, window=(6, 10))
        assert abs(tail.exponent - 2.0 / 3.0) < abs(full.exponent - 2.0 / 3.0)
        assert abs(tail.exponent - 2.0 / 3.0) < 1e-4

    def test_default_window_drops_two_largest(self):
        eps = np.geomspace(1e-1, 1e-4, 7)
        fit = fit_loglog([(e, e) for e in eps])
        assert fit.window == (2, 6)

    def test_errors(self):
        eps = np.geomspace(1e-1, 1e-3, 5)
        with pytest.raises(ValueError):
            fit_loglog([(e, 0.0) for e in eps], window=(0, 4))
        with pytest.raises(ValueError):
            fit_loglog([(e, e) for e in eps[:3]])
        with pytest.raises(ValueError):
            fit_loglog([(0.1, 1.0), (0.1, 2.0), (0.01, 1.0), (0.001, 1.0)])

    def test_deterministic(self):
        eps = np.geomspace(1e-1, 1e-4, 7)
        samples = [(e, e ** (2.0 / 3.0) * (1 + 0.3 * e)) for e in eps]
        assert fit_loglog(samples) == fit_loglog(samples)


class TestBoundCheck:
    def test_decreasing_ratio_is_bounded(self):
        eps = np.geomspace(1e-1, 1e-4, 7)
        check = bound_check(eps, eps, eps**0.5, q=4.0, m_const=1.0)
        assert check.verdict == "bounded"
        assert check.ratio_max == pytest.approx(0.1**0.5)

    def test_growing_ratio_is_violated(self):
        eps = np.geomspace(1e-1, 1e-4, 7)
        check = bound_check(eps, eps**0.5, eps, q=4.0, m_const=1.0)
        assert check.verdict == "violated"

    def test_stable_ratio_is_bounded(self):
        eps = np.geomspace(1e-1, 1e-4, 7)
        lhs = 2.0 * eps * (1.0 + 0.05 * np.sin(np.arange(7)))
        check = bound_check(eps, lhs, eps, q=4.0, m_const=1.0)
        assert check.verdict == "bounded"

    def test_zero_lhs_is_bounded(self):
        eps = np.geomspace(1e-1, 1e-4, 7)
        check = bound_check(eps, np.zeros(7), eps, q=4.0, m_const=1.0)
        assert check.verdict == "bounded"
        assert check.ratio_max == 0.0


class TestCoefficientRateStudy:
    def test_flat_family_degenerates(self):
        study = coefficient_rate_study(BETA, 1.0)
        assert study.rate.degenerate
        assert np.isnan(study.rate.exponent)

    def test_sharpness_rate(self):
        study = coefficient_rate_study(BETA, 2.0, q=4.0)
        assert study.rate.exponent == pytest.approx(2.0 / 3.0, abs=0.03)
        assert study.rate.r_squared > 0.999
        assert study.bound.verdict == "bounded"

    def test_lower_bound_constant(self):
        study = coefficient_rate_study(BETA, 2.0)
        assert study.lower_bound_constant == pytest.approx(1.0 / 27.0)
        # ratio stabilizes well above the sharpness constant at small eps
        for ratio in study.lower_bound_ratios[-2:]:
            assert ratio >= study.lower_bound_constant * 0.95

    @pytest.mark.parametrize("q", [3.0, 4.0, 5.0])
    def test_sandwich_property(self, q):
        # the empirical exponent sits between the upper-bound rate (q-2)/q
        # and the sharp rate pi/beta for every admissible q
        study = coefficient_rate_study(BETA, 2.0, q=q)
        p = 2.0 * q / (q - 2.0)
        assert study.rate.exponent >= 2.0 / p - 0.03
        assert study.rate.exponent <= K + 0.03
        assert study.bound.verdict == "bounded"

    def test_rate_tracks_the_angle(self):
        # at beta = 1.2 pi the sharp exponent moves to pi/beta = 5/6, so the
        # study must follow the angle rather than any fixed number
        beta = 1.2 * np.pi
        study = coefficient_rate_study(beta, 2.0, q=4.0)
        assert study.rate.exponent == pytest.approx(np.pi / beta, abs=0.03)
        for ratio in study.lower_bound_ratios[-2:]:
            assert ratio >= study.lower_bound_constant * 0.95

    def test_contrast_symmetry_of_lower_constant(self):
        # (1-alpha)^2/(1+alpha)^2 is invariant under alpha -> 1/alpha, so the
        # sharpness constant for alpha = 1/2 equals the one for alpha = 2
        a2 = coefficient_rate_study(BETA, 2.0)
        ahalf = coefficient_rate_study(BETA, 0.5)
        assert ahalf.lower_bound_constant == pytest.approx(a2.lower_bound_constant)
        assert ahalf.rate.exponent == pytest.approx(2.0 / 3.0, abs=0.03)
        for ratio in ahalf.lower_bound_ratios[-2:]:
            assert ratio >= ahalf.lower_bound_constant * 0.95

    def test_upper_bound_rhs_closed_form(self):
        # the majorant is ||grad u0||_q * |alpha-1| (beta eps^2/2)^(1/p)
        q, alpha = 4.0, 2.0
        study = coefficient_rate_study(BETA, alpha, q=q)
        p = 2.0 * q / (q - 2.0)
        for eps, rhs in zip(study.bound.eps, study.bound.rhs_series):
            expect = study.grad_norm_q * abs(alpha - 1.0) * (0.5 * BETA * eps**2) ** (1 / p)
            assert rhs == pytest.approx(expect, rel=1e-9)

    def test_inadmissible_q(self):
        with pytest.raises(HypothesisViolation) as err:
            coefficient_rate_study(BETA, 2.0, q=7.0)
        assert err.value.q_star == pytest.approx(6.0)

    def test_deterministic(self):
        a = coefficient_rate_study(BETA, 2.0, q=4.0)
        b = coefficient_rate_study(BETA, 2.0, q=4.0)
        assert a.rate == b.rate
        assert a.bound.lhs_series == b.bound.lhs_series


class TestDomainRateStudy:
    def test_semi_analytic_rate(self):
        study = domain_rate_study(BETA, q=5.0)
        assert study.rate.exponent == pytest.approx(2.0 / 3.0, abs=0.03)
        assert study.mode == "semi_analytic"

    def test_rate_tracks_the_angle(self):
        beta = 1.2 * np.pi
        study = domain_rate_study(beta, q=4.0)
        assert study.rate.exponent == pytest.approx(np.pi / beta, abs=0.03)

    @pytest.mark.parametrize("q", [3.0, 4.0, 5.0])
    def test_bounded_for_admissible_q(self, q):
        study = domain_rate_study(BETA, q=q)
        assert study.bound.verdict == "bounded"
        assert study.bound.hypothesis_params[0] == q

    def test_larger_rhs_exponent_is_violated(self):
        study = domain_rate_study(BETA, q=5.0, rhs_eps_exponent=2.0 / 3.0 + 0.1)
        assert study.bound.verdict == "violated"

    def test_fem_mode_agrees_with_semi_analytic(self):
        grid = tuple(np.geomspace(1e-1, 1e-2, 4))
        study = domain_rate_study(BETA, grid, q=4.0, mode="fem",
                                  n_radial=48, n_angular=32)
        assert study.flagged == ()
        assert max(study.agreement) < 0.10
        assert 0.60 <= study.rate.exponent <= 0.73

    def test_fem_mode_flags_insufficient_refinement(self):
        # on a deliberately coarse mesh the discretization error dominates
        # and every grid point is flagged against the semi-analytic oracle
        grid = tuple(np.geomspace(1e-1, 10 ** -2.5, 4))
        study = domain_rate_study(BETA, grid, q=4.0, mode="fem",
                                  n_radial=10, n_angular=6)
        assert study.flagged != ()
        assert max(study.agreement) > 0.10

    def test_inadmissible_q(self):
        with pytest.raises(HypothesisViolation):
            domain_rate_study(BETA, q=6.0)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            domain_rate_study(BETA, mode="exact")

    @pytest.mark.parametrize("beta", [1.2 * np.pi, BETA])
    def test_error_ratio_stabilizes_to_sqrt_pi(self, beta):
        # expanding the annulus error: the inner disc contributes
        # (beta/2) * k * eps^2k and the r^{-k} reflection term the same, so
        # error^2 = beta * k * eps^2k (1 + o(1)) = pi * eps^2k (1 + o(1))
        # for every angle; the leading constant is sqrt(pi)
        from ellipstab.experiments import _semi_annulus_error
        from ellipstab.analytic import limit_solution as limit

        k = np.pi / beta
        u0 = limit(beta)
        ratios = [_semi_annulus_error(beta, e, u0) / e**k
                  for e in np.geomspace(1e-2, 1e-4, 5)]
        assert max(ratios) / min(ratios) < 1.05  # stabilizes within 5%
        assert ratios[-1] == pytest.approx(np.sqrt(np.pi), rel=1e-3)


class TestCompositionInequality:
    def test_identity_map_lhs_zero(self):
        u0 = limit_solution(BETA)
        check = composition_inequality_check(u0.value, [identity_map()], 5.0,
                                             SectorDomain(BETA))
        assert check.lhs_series[0] == pytest.approx(0.0, abs=1e-12)
        assert check.verdict == "bounded"

    def test_radial_family_bounded(self):
        u0 = limit_solution(BETA)
        maps = [radial_shift_map(e, BETA) for e in np.geomspace(1e-1, 1e-3, 5)]
        check = composition_inequality_check(u0.value, maps, 5.0, SectorDomain(BETA))
        assert check.verdict == "bounded"
        assert check.ratio_max < 1.0  # constant reported, not assumed

    def test_jacobian_deviation_scaling(self):
        # |(Dphi)^-1 - I| is 1 on the moved band, so its L^q norm scales as
        # |E|^(1/q); against |E|^((q-2)/(2q)) the ratio shrinks iff q < 4
        maps = [radial_shift_map(e, BETA) for e in np.geomspace(1e-1, 1e-3, 5)]
        u0 = limit_solution(BETA)
        check3 = composition_inequality_check(u0.value, maps, 3.0, SectorDomain(BETA))
        dev3 = check3.extras["jac_dev_ratio"]
        assert all(b < a for a, b in zip(dev3[:-1], dev3[1:]))
        lq = check3.extras["jac_dev_lq"]
        e_sets = [2.0 * BETA * e**2 for e in np.geomspace(1e-1, 1e-3, 5)]
        for val, es in zip(lq, e_sets):
            assert val == pytest.approx(es ** (1.0 / 3.0), rel=0.2)

    def test_q_validation(self):
        with pytest.raises(ValueError):
            composition_inequality_check(lambda p: np.ones(len(p)),
                                         [identity_map()], 2.0, SectorDomain(BETA))


class TestQualitativeConvergence:
    def test_constant_family_has_zero_errors(self):
        table = qualitative_convergence_study(
            lambda e: identity_field(), (0.4, 0.2, 0.1), "condition_3", BETA,
            n_radial=8, n_angular=8)
        assert all(r[1] < 1e-12 for r in table.rows)
        assert table.monotone

    def test_condition_3_jump_inside_compact_set(self):
        family = lambda e: radial_jump_field(2.0, e) if e > 0 else identity_field()
        table = qualitative_convergence_study(
            family, np.geomspace(0.4, 0.05, 4), "condition_3", BETA,
            exclusion_radius=0.5, n_radial=16, n_angular=16)
        errors = table.errors
        assert table.monotone
        assert errors[-1] < 0.5 * errors[0]
        assert all(r[2] == 0.0 for r in table.rows)  # identical off the disc

    def test_condition_3_violated_without_compact_set(self):
        family = lambda e: radial_jump_field(2.0, 0.8) if e > 0 else identity_field()
        with pytest.raises(ConditionViolation) as err:
            qualitative_convergence_study(
                family, np.geomspace(0.4, 0.05, 4), "condition_3", BETA,
                exclusion_radius=0.5, n_radial=8, n_angular=8)
        assert err.value.point is not None

    def test_condition_4_scaled_identity(self):
        # A_eps = (1 + eps) I: the deficit (A_0 - A_eps)_+ vanishes and the
        # solutions scale as u_0 / (1 + eps), so errors are linear in eps
        family = lambda e: scaled_identity_field(1.0 + e)
        grid = np.geomspace(0.4, 0.05, 4)
        table = qualitative_convergence_study(family, grid, "condition_4", BETA,
                                              n_radial=16, n_angular=16)
        assert table.monotone
        ratios = [err / (eps / (1 + eps)) for (eps, err, _) in table.rows]
        spread = max(ratios) / min(ratios)
        assert spread < 1.01  # exact scaling u_eps = u_0/(1+eps)

    def test_condition_4_would_reject_growth(self):
        # shrinking A_eps below A_0 leaves a positive part that does not die
        family = lambda e: scaled_identity_field(1.0 / (1.0 + e)) \
            if e > 0 else identity_field()
        grid = (0.4, 0.3, 0.2)  # the deficit stays about eps at the smallest eps
        with pytest.raises(ConditionViolation):
            qualitative_convergence_study(family, grid, "condition_4", BETA,
                                          n_radial=8, n_angular=8)

    def test_eps_grid_and_defaults(self):
        grid = default_eps_grid()
        assert len(grid) == 7
        assert grid[0] == pytest.approx(1e-1)
        assert grid[-1] == pytest.approx(1e-4)
        assert grid[1] / grid[0] == pytest.approx(10 ** -0.5)
        assert q_star(BETA) == pytest.approx(6.0)
