"""Rate studies and inequality tracking for the perturbation experiments.

Each study produces an empirical convergence exponent (least-squares slope
in log-log coordinates) and a bound check that follows the ratio of the
measured error to a theoretical majorant over a geometric grid of
perturbation sizes.  A ratio series that is non-increasing or stable over
the asymptotic window certifies the bound with its observed constant; a
growing ratio refutes the tested exponent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import analytic, coefficients, error_norms, fem, geometry, meshing


class HypothesisViolation(ValueError):
    """A study was asked to run outside its integrability hypotheses."""

    def __init__(self, message, q=None, q_star=None):
        super().__init__(message)
        self.q = q
        self.q_star = q_star


class ConditionViolation(ValueError):
    def __init__(self, message, eps=None, point=None, value=None):
        super().__init__(message)
        self.eps = eps
        self.point = point
        self.value = value


def default_eps_grid(eps_max=1e-1, eps_min=1e-4, points=7):
    """Geometric grid from eps_max down to eps_min (decreasing)."""
    if points < 2:
        raise ValueError("need at least 2 grid points")
    return tuple(np.geomspace(eps_max, eps_min, points))


def default_window(n):
    """Fit window: drop the two largest (pre-asymptotic) sizes when affordable."""
    return (2, n - 1) if n >= 6 else (0, n - 1)


@dataclass(frozen=True)
class RateFit:
    """Fitted power law error ~ constant * eps^exponent."""

    exponent: float
    constant: float
    r_squared: float
    samples: tuple  # ((eps, error), ...) with eps strictly decreasing
    window: tuple  # inclusive index range used for the fit
    degenerate: bool = False


def fit_loglog(samples, window=None):
    """Least-squares line through (log eps, log error) over the window.

    Samples are sorted by decreasing eps; at least 4 points must fall in
    the window and every windowed error must be positive.
    """
    samples = tuple(sorted(((float(e), float(v)) for e, v in samples),
                           key=lambda t: -t[0]))
    n = len(samples)
    if n >= 2 and len({e for e, _ in samples}) != n:
        raise ValueError("duplicate eps values")
    if window is None:
        window = default_window(n)
    i0, i1 = window
    if not (0 <= i0 <= i1 < n):
        raise ValueError(f"window {window} out of range for {n} samples")
    if i1 - i0 + 1 < 4:
        raise ValueError("fit needs at least 4 points in the window")
    eps = np.array([samples[i][0] for i in range(i0, i1 + 1)])
    err = np.array([samples[i][1] for i in range(i0, i1 + 1)])
    if np.any(err <= 0.0):
        raise ValueError("errors must be positive for a log-log fit")
    x = np.log(eps)
    y = np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot < 1e-28 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(slope), float(np.exp(intercept)),
                   float(np.clip(r2, 0.0, 1.0)), samples, (i0, i1))


def _degenerate_fit(samples):
    samples = tuple(sorted(((float(e), float(v)) for e, v in samples),
                           key=lambda t: -t[0]))
    return RateFit(float("nan"), 0.0, 0.0, samples,
                   (0, len(samples) - 1), degenerate=True)


@dataclass(frozen=True)
class BoundCheck:
    """Tracks lhs <= c * rhs over a parameter grid.

    ``verdict`` is "bounded" when the ratio series is non-increasing or
    stable (spread below 20%) over the asymptotic window, else "violated".
    ``hypothesis_params`` records (q, M) used to form the right-hand side.
    """

    eps: tuple
    lhs_series: tuple
    rhs_series: tuple
    ratio_max: float
    hypothesis_params: tuple
    verdict: str
    window: tuple
    extras: dict = field(default_factory=dict)


def bound_check(eps, lhs, rhs, q, m_const, window=None):
    eps = tuple(float(e) for e in eps)
    lhs = tuple(float(v) for v in lhs)
    rhs = tuple(float(v) for v in rhs)
    order = np.argsort(-np.asarray(eps))
    eps = tuple(eps[i] for i in order)
    lhs = tuple(lhs[i] for i in order)
    rhs = tuple(rhs[i] for i in order)
    ratios = [l / r if r > 0.0 else (0.0 if l <= 0.0 else float("inf"))
              for l, r in zip(lhs, rhs)]
    if window is None:
        window = default_window(len(eps))
    i0, i1 = window
    w = ratios[i0:i1 + 1]
    non_increasing = all(b <= a * (1.0 + 1e-9) for a, b in zip(w[:-1], w[1:]))
    positive = [v for v in w if v > 0.0]
    if not positive:
        stable = True
    elif any(np.isinf(v) for v in w):
        stable = False
    else:
        stable = max(positive) / min(positive) < 1.2 and max(w) == max(positive)
    verdict = "bounded" if (non_increasing or stable) else "violated"
    return BoundCheck(eps, lhs, rhs, float(np.max(ratios)), (float(q), float(m_const)),
                      verdict, (i0, i1))


def q_star(beta):
    """Gradient integrability threshold 2*beta/(beta - pi) of the corner solution."""
    return 2.0 * beta / (beta - np.pi)


# -- coefficient perturbation study ------------------------------------------


@dataclass(frozen=True)
class CoefficientStudy:
    rate: RateFit
    bound: BoundCheck
    lower_bound_ratios: tuple  # error^2 / eps^(2 pi / beta), per grid point
    lower_bound_constant: float  # pi (1-alpha)^2 / (2 beta (1+alpha)^2)
    grad_norm_q: float


def coefficient_rate_study(beta, alpha, eps_grid=None, q=4.0):
    """Error decay of the conductivity-jump family against the jump size.

    Semi-analytic: the error is the 1D weighted seminorm of the profile
    difference between the perturbed and unperturbed separable solutions.
    The bound check compares the error with
    ||grad u0||_{L^q} * ||a_eps - 1||_{L^p}, p = 2q/(q-2), and the squared
    error divided by eps^(2 pi / beta) is reported against the sharpness
    constant pi (1-alpha)^2 / (2 beta (1+alpha)^2).
    """
    qs = q_star(beta)
    if q >= qs:
        raise HypothesisViolation(
            f"q = {q:g} is not admissible: the corner gradient lies in L^q "
            f"only for q < {qs:g}", q=q, q_star=qs)
    if q <= 2.0:
        raise ValueError("q must exceed 2")
    if eps_grid is None:
        eps_grid = default_eps_grid()
    eps_grid = tuple(sorted((float(e) for e in eps_grid), reverse=True))
    u0 = analytic.limit_solution(beta)
    k = np.pi / beta

    errors = []
    for eps in eps_grid:
        diff = analytic.jump_solution(beta, alpha, eps).difference(u0)
        errors.append(analytic.h1_seminorm_separable(diff))
    samples = tuple(zip(eps_grid, errors))

    lower_const = np.pi * (1.0 - alpha) ** 2 / (2.0 * beta * (1.0 + alpha) ** 2)
    if max(errors) < 1e-14:
        rate = _degenerate_fit(samples)
        bound = bound_check(eps_grid, errors, [1.0] * len(errors), q, 0.0)
        return CoefficientStudy(rate, bound, tuple(0.0 for _ in eps_grid),
                                float(lower_const), 0.0)

    rate = fit_loglog(samples)
    p = 2.0 * q / (q - 2.0)
    grad_norm = error_norms.lq_gradient_norm(u0, q)
    sector = geometry.SectorDomain(beta)
    ident = coefficients.identity_field()
    rhs = [grad_norm * coefficients.lp_distance(
        coefficients.radial_jump_field(alpha, eps), ident, p, sector)
        for eps in eps_grid]
    bound = bound_check(eps_grid, errors, rhs, q, grad_norm)
    lower_ratios = tuple(err**2 / eps ** (2.0 * k)
                         for eps, err in zip(eps_grid, errors))
    return CoefficientStudy(rate, bound, lower_ratios, float(lower_const),
                            float(grad_norm))


# -- domain perturbation study ------------------------------------------------


@dataclass(frozen=True)
class DomainStudy:
    rate: RateFit
    bound: BoundCheck
    mode: str
    semi_errors: tuple
    fem_errors: tuple = ()
    agreement: tuple = ()  # relative fem vs semi difference per grid point
    flagged: tuple = ()  # grid indices where the disagreement exceeds 10%


def _semi_annulus_error(beta, eps, u0):
    ue = analytic.annulus_solution(beta, eps).extended_by_zero()
    return analytic.h1_seminorm_separable(ue.difference(u0))


def _fem_annulus_error(beta, eps, n_radial, n_angular, grading, rel_tol):
    sector = geometry.SectorDomain(beta)
    annulus = geometry.SectorDomain(beta, r_inner=eps)
    aligned = (eps, 2.0 * eps)
    radii = meshing.graded_radii(sector, n_radial, grading, aligned_radii=aligned)
    mesh0 = meshing.mesh_sector_from_radii(sector, radii, n_angular, grading,
                                           aligned_radii=aligned)
    radii_eps = radii[radii >= eps - 1e-15]
    mesh_eps = meshing.mesh_sector_from_radii(annulus, radii_eps, n_angular, grading,
                                              aligned_radii=aligned)
    src = analytic.SourceTerm(beta)
    ident = coefficients.identity_field()
    sol0 = fem.solve_cg(fem.assemble(mesh0, ident, source=src), rel_tol=rel_tol)
    sol_eps = fem.solve_cg(fem.assemble(mesh_eps, ident, source=src), rel_tol=rel_tol)
    # the sector mesh covers the union of both domains and its cells align
    # with the annulus mesh on r >= eps, so the quadrature is exact per cell
    return error_norms.cross_domain_gradient_error(sol_eps, sol0, quad_mesh=mesh0)


def domain_rate_study(beta, eps_grid=None, q=4.0, mode="semi_analytic",
                      rhs_eps_exponent=None, n_radial=96, n_angular=64,
                      grading=3.0, rel_tol=1e-10):
    """Error decay of the annular-sector family against the hole size.

    The bound check compares the error over the full sector (perturbed
    gradient extended by zero) with |E|^((q-2)/(2q)), where
    |E| = 2*beta*eps^2 is the measure moved by the radial shift map.
    ``rhs_eps_exponent`` overrides the eps-exponent (q-2)/q of that
    majorant; a larger exponent makes the ratio diverge, which is how the
    sharpness of the original exponent is exhibited.
    """
    qs = q_star(beta)
    if q >= qs:
        raise HypothesisViolation(
            f"q = {q:g} is not admissible: the corner gradient lies in L^q "
            f"only for q < {qs:g}", q=q, q_star=qs)
    if q <= 2.0:
        raise ValueError("q must exceed 2")
    if mode not in ("semi_analytic", "fem"):
        raise ValueError(f"unknown mode {mode!r}")
    if eps_grid is None:
        eps_grid = default_eps_grid()
    eps_grid = tuple(sorted((float(e) for e in eps_grid), reverse=True))
    u0 = analytic.limit_solution(beta)

    semi = tuple(_semi_annulus_error(beta, eps, u0) for eps in eps_grid)
    if mode == "fem":
        fem_err = tuple(
            _fem_annulus_error(beta, eps, n_radial, n_angular, grading, rel_tol)
            for eps in eps_grid
        )
        errors = fem_err
        agreement = tuple(abs(f - s) / s for f, s in zip(fem_err, semi))
        flagged = tuple(i for i, a in enumerate(agreement) if a > 0.10)
    else:
        fem_err = ()
        errors = semi
        agreement = ()
        flagged = ()

    samples = tuple(zip(eps_grid, errors))
    rate = fit_loglog(samples)

    exponent_rhs = (q - 2.0) / (2.0 * q)
    rhs = []
    for eps in eps_grid:
        e_measure = geometry.radial_shift_map(eps, beta).e_set_measure
        if rhs_eps_exponent is None:
            rhs.append(e_measure**exponent_rhs)
        else:
            rhs.append((2.0 * beta) ** exponent_rhs * eps**rhs_eps_exponent)
    lip = geometry.radial_shift_map(eps_grid[0], beta).lip_constant
    bound = bound_check(eps_grid, errors, rhs, q, lip)
    return DomainStudy(rate, bound, mode, semi, fem_err, agreement, flagged)


# -- composition inequality ----------------------------------------------------


def _spectral_norm_2x2(mats):
    m = np.asarray(mats, dtype=float)
    fro2 = np.sum(m**2, axis=(-2, -1))
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    gap = np.sqrt(np.maximum(fro2**2 - 4.0 * det**2, 0.0))
    return np.sqrt(0.5 * (fro2 + gap))


def composition_inequality_check(func, maps, q, domain, n_gauss=12, n_panels=12):
    """Check ||F o phi - F||_L2 <= c ||F||_Lq |E|^((q-2)/(2q)) over a map family.

    Also tracks ||(Dphi)^{-1} - I||_Lq against the same majorant in
    ``extras``.  The inverse Jacobian deviation is the bounded one for the
    radial shift family (the forward angular stretch blows up at the
    corner, so its L^q deviation is infinite for q > 2); the constant is
    reported, never assumed to be 1.
    """
    from .quadrature import integrate_polar

    if q <= 2.0:
        raise ValueError("q must exceed 2")
    maps = list(maps)
    if not maps:
        raise ValueError("need at least one map")

    f_norm_q = integrate_polar(
        lambda pts: np.abs(np.asarray(func(pts), dtype=float)) ** q,
        domain.beta, domain.r_inner, domain.r_outer,
        n_gauss=n_gauss, n_radial_panels=n_panels, n_angular_panels=n_panels,
    ) ** (1.0 / q)

    eps_list, lhs, rhs, jac_dev = [], [], [], []
    exponent = (q - 2.0) / (2.0 * q)
    for mp in maps:
        meta = dict(mp.meta)
        eps = float(meta.get("eps", mp.e_set_measure))
        breaks = (2.0 * meta["eps"],) if "eps" in meta else ()

        def comp_sq(pts, _mp=mp):
            fv = np.asarray(func(pts), dtype=float)
            return (np.asarray(func(_mp.forward(pts)), dtype=float) - fv) ** 2

        l2 = np.sqrt(max(integrate_polar(
            comp_sq, domain.beta, domain.r_inner, domain.r_outer,
            radial_breaks=breaks, n_gauss=n_gauss,
            n_radial_panels=n_panels, n_angular_panels=n_panels,
        ), 0.0))

        def inv_dev_q(pts, _mp=mp):
            J = _mp.jacobian(pts)
            Jinv = coefficients._inv_2x2(J, pts)
            Jinv[..., 0, 0] -= 1.0
            Jinv[..., 1, 1] -= 1.0
            return _spectral_norm_2x2(Jinv) ** q

        dev = integrate_polar(
            inv_dev_q, domain.beta, domain.r_inner, domain.r_outer,
            radial_breaks=breaks, n_gauss=n_gauss,
            n_radial_panels=n_panels, n_angular_panels=n_panels,
        ) ** (1.0 / q)

        eps_list.append(eps)
        lhs.append(l2)
        rhs.append(f_norm_q * mp.e_set_measure**exponent
                   if mp.e_set_measure > 0.0 else 0.0)
        jac_dev.append(dev)

    check = bound_check(eps_list, lhs, rhs, q, f_norm_q)
    order = np.argsort(-np.asarray(eps_list))
    e_sorted = [maps[i].e_set_measure for i in order]
    dev_sorted = [jac_dev[i] for i in order]
    dev_ratio = tuple(
        d / e**exponent if e > 0.0 else 0.0 for d, e in zip(dev_sorted, e_sorted)
    )
    check.extras["jac_dev_lq"] = tuple(dev_sorted)
    check.extras["jac_dev_ratio"] = dev_ratio
    return check


# -- qualitative convergence (no rate claimed) ---------------------------------


@dataclass(frozen=True)
class ConvergenceTable:
    mode: str
    rows: tuple  # (eps, fem error, condition statistic)
    monotone: bool

    @property
    def errors(self):
        return tuple(r[1] for r in self.rows)


def qualitative_convergence_study(field_family, eps_grid, mode, beta,
                                  exclusion_radius=0.5, n_radial=24,
                                  n_angular=24, grading=3.0, n_check=4000,
                                  rel_tol=1e-10):
    """Tabulate FEM errors for a coefficient family under one of two conditions.

    ``mode`` is "condition_3" (uniform convergence off a compact set, here
    the closed disc of ``exclusion_radius``) or "condition_4" (positive
    part of the deficit tends to zero uniformly).  The chosen condition is
    verified by sampling before any solve; only a monotone trend toward
    zero is asserted for the errors, no rate.
    """
    if mode not in ("condition_3", "condition_4"):
        raise ValueError(f"unknown mode {mode!r}")
    eps_grid = tuple(sorted((float(e) for e in eps_grid), reverse=True))
    sector = geometry.SectorDomain(beta)
    field0 = field_family(0.0)
    pts = sector.sample_interior(n_check)
    if mode == "condition_3":
        pts_check = pts[np.hypot(pts[:, 0], pts[:, 1]) > exclusion_radius]
    else:
        pts_check = pts

    stats = []
    for eps in eps_grid:
        a_eps = field_family(eps).eval(pts_check)
        a_0 = field0.eval(pts_check)
        if mode == "condition_3":
            dev = np.max(np.abs(a_eps - a_0), axis=(-2, -1))
        else:
            pos = coefficients.matrix_positive_part(a_0 - a_eps)
            dev = coefficients.sym_eigvals(pos)[..., 1]
        stats.append((float(np.max(dev)), int(np.argmax(dev))))

    final_stat, idx = stats[-1]
    if final_stat > 1e-10 and final_stat > 0.1 * max(stats[0][0], 1e-300):
        raise ConditionViolation(
            f"{mode} fails: deviation {final_stat:.3e} at the smallest eps",
            eps=eps_grid[-1], point=tuple(pts_check[idx]), value=final_stat)

    src = analytic.SourceTerm(beta)
    rows = []
    for (eps, (stat, _)) in zip(eps_grid, stats):
        f_eps = field_family(eps)
        aligned = tuple(r for r in f_eps.interface_radii if 0.0 < r < 1.0)
        mesh = meshing.mesh_sector(sector, n_radial, n_angular, grading, aligned)
        sol_eps = fem.solve_cg(fem.assemble(mesh, f_eps, source=src), rel_tol=rel_tol)
        sol_0 = fem.solve_cg(fem.assemble(mesh, field0, source=src), rel_tol=rel_tol)
        d = sol_eps.triangle_gradients() - sol_0.triangle_gradients()
        err = float(np.sqrt(np.sum(mesh.areas() * np.sum(d**2, axis=1))))
        rows.append((eps, err, stat))
    errors = [r[1] for r in rows]
    monotone = all(b <= a * 1.05 + 1e-14 for a, b in zip(errors[:-1], errors[1:]))
    return ConvergenceTable(mode, tuple(rows), monotone)
