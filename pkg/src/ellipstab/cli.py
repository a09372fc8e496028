"""Command-line front end: verify-analytic, rate-study and solve workflows.

Exit codes: 0 success, 2 usage error, 3 integrability-hypothesis violation,
4 solver failure.  All commands are deterministic: identical flags produce
byte-identical outputs, and every CSV embeds its normalized command line.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import analytic, coefficients, experiments, fem, geometry, meshing

BETA_DEFAULT = 1.5 * np.pi


def _fmt(v):
    return f"{v:.12g}"


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ellipstab",
        description="Elliptic H1-stability workbench: analytic verification, "
                    "perturbation rate studies and FEM solves on sector domains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("verify-analytic",
                        help="residual and interface checks for the closed-form solutions")
    pv.add_argument("--example", choices=("limit", "jump", "annulus"), required=True)
    pv.add_argument("--beta", type=float, default=BETA_DEFAULT)
    pv.add_argument("--alpha", type=float, default=2.0)
    pv.add_argument("--eps", type=float, default=0.1)

    pr = sub.add_parser("rate-study", help="run a perturbation study and write CSV")
    pr.add_argument("--study", choices=("coeff", "domain", "wwww", "qualitative"),
                    required=True)
    pr.add_argument("--beta", type=float, default=BETA_DEFAULT)
    pr.add_argument("--alpha", type=float, default=2.0)
    pr.add_argument("--q", type=float, default=4.0)
    pr.add_argument("--eps-min", type=float, default=1e-4)
    pr.add_argument("--eps-max", type=float, default=1e-1)
    pr.add_argument("--points", type=int, default=7)
    pr.add_argument("--mode", choices=("semi", "fem"), default="semi")
    pr.add_argument("--out", default="-", help="output CSV path, '-' for stdout")

    ps = sub.add_parser("solve", help="solve one problem and export mesh/solution")
    ps.add_argument("--domain", choices=("sector", "annulus", "graph"), required=True)
    ps.add_argument("--beta", type=float, default=BETA_DEFAULT)
    ps.add_argument("--eps", type=float, default=0.05,
                    help="inner radius for --domain annulus")
    ps.add_argument("--n-radial", type=int, default=16)
    ps.add_argument("--n-angular", type=int, default=16)
    ps.add_argument("--grading", type=float, default=3.0)
    ps.add_argument("--refine", type=int, default=0)
    ps.add_argument("--coeff", choices=("identity", "jump"), default="identity")
    ps.add_argument("--alpha", type=float, default=2.0)
    ps.add_argument("--jump-eps", type=float, default=0.1)
    ps.add_argument("--nx", type=int, default=16)
    ps.add_argument("--ny", type=int, default=16)
    ps.add_argument("--graph-height", type=float, default=0.85)
    ps.add_argument("--graph-slope", type=float, default=0.0)
    ps.add_argument("--out-prefix", required=True)
    return parser


def _check_angle(parser, beta):
    if not np.pi < beta < 2.0 * np.pi:
        parser.error(f"--beta must lie in (pi, 2*pi), got {beta:g}")


def _cmd_verify(parser, args):
    _check_angle(parser, args.beta)
    if args.alpha <= 0.0:
        parser.error("--alpha must be positive")
    if not 0.0 < args.eps < 1.0:
        parser.error("--eps must lie in (0, 1)")
    src = analytic.SourceTerm(args.beta)
    defects = []
    if args.example == "limit":
        sol = analytic.limit_solution(args.beta)
        field = coefficients.identity_field()
    elif args.example == "jump":
        sol = analytic.jump_solution(args.beta, args.alpha, args.eps)
        field = coefficients.radial_jump_field(args.alpha, args.eps)
        w, dw = sol.radial_profile, sol.radial_derivative
        below = np.nextafter(args.eps, 0.0)
        cont = abs(float(w(np.array([below]))[0] - w(np.array([args.eps]))[0]))
        flux = abs(float(args.alpha * dw(np.array([below]))[0]
                         - dw(np.array([args.eps]))[0]))
        defects = [("interface continuity", cont), ("flux continuity", flux)]
    else:
        sol = analytic.annulus_solution(args.beta, args.eps)
        field = coefficients.identity_field()
        w = sol.radial_profile
        defects = [
            ("inner Dirichlet value", abs(float(w(np.array([args.eps]))[0]))),
            ("outer Dirichlet value", abs(float(w(np.array([1.0]))[0]))),
        ]
    report = analytic.residual_check(sol, src, field)
    print(f"example={args.example} beta={_fmt(args.beta)} "
          f"alpha={_fmt(args.alpha)} eps={_fmt(args.eps)}")
    print(f"max residual {_fmt(report.max_residual)} "
          f"({report.n_evaluated} points, {report.n_skipped} skipped)")
    worst = report.max_residual
    for name, d in defects:
        print(f"{name} defect {_fmt(d)}")
        worst = max(worst, d)
    status = "PASS" if worst < 1e-4 else "FAIL"
    print(status)
    return 0 if status == "PASS" else 1


def _csv_lines(cmdline, rows, fit):
    lines = [f"# cmd: {cmdline}", "eps,error,bound,ratio"]
    for eps, err, bnd, ratio in rows:
        lines.append(",".join(_fmt(v) for v in (eps, err, bnd, ratio)))
    lines.append(
        f"# exponent={_fmt(fit.exponent)} constant={_fmt(fit.constant)} "
        f"r2={_fmt(fit.r_squared)} window={fit.window[0]}..{fit.window[1]}"
    )
    return "\n".join(lines) + "\n"


def _write(out, text):
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def _cmd_rate_study(parser, args):
    _check_angle(parser, args.beta)
    if args.points < 4:
        parser.error("--points must be at least 4 (the rate fit needs 4 samples)")
    if not 0.0 < args.eps_min < args.eps_max < 1.0:
        parser.error("need 0 < --eps-min < --eps-max < 1")
    grid = tuple(np.geomspace(args.eps_max, args.eps_min, args.points))
    cmdline = (
        f"rate-study --study {args.study} --beta {_fmt(args.beta)} "
        f"--alpha {_fmt(args.alpha)} --q {_fmt(args.q)} "
        f"--eps-min {_fmt(args.eps_min)} --eps-max {_fmt(args.eps_max)} "
        f"--points {args.points} --mode {args.mode}"
    )

    try:
        if args.study == "coeff":
            study = experiments.coefficient_rate_study(args.beta, args.alpha, grid,
                                                       q=args.q)
            if study.rate.degenerate:
                print("degenerate study: all errors vanish (no rate to fit)",
                      file=sys.stderr)
                return 1
            rows = list(zip(study.bound.eps, study.bound.lhs_series,
                            study.bound.rhs_series,
                            _ratios(study.bound)))
            fit = study.rate
        elif args.study == "domain":
            mode = "semi_analytic" if args.mode == "semi" else "fem"
            study = experiments.domain_rate_study(args.beta, grid, q=args.q, mode=mode)
            rows = list(zip(study.bound.eps, study.bound.lhs_series,
                            study.bound.rhs_series, _ratios(study.bound)))
            fit = study.rate
        elif args.study == "wwww":
            u0 = analytic.limit_solution(args.beta)
            maps = [geometry.radial_shift_map(e, args.beta) for e in grid]
            check = experiments.composition_inequality_check(
                u0.value, maps, args.q, geometry.SectorDomain(args.beta))
            rows = list(zip(check.eps, check.lhs_series, check.rhs_series,
                            _ratios(check)))
            fit = experiments.fit_loglog(list(zip(check.eps, check.lhs_series)))
        else:
            family = _jump_family(args.alpha)
            table = experiments.qualitative_convergence_study(
                family, grid, "condition_3", args.beta,
                exclusion_radius=min(0.5, 2.0 * args.eps_max))
            first = table.rows[0][1]
            rows = [(eps, err, stat, err / first if first > 0 else 0.0)
                    for eps, err, stat in table.rows]
            fit = experiments.fit_loglog([(eps, err) for eps, err, _ in table.rows])
    except experiments.HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return 3
    except fem.ConvergenceFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    _write(args.out, _csv_lines(cmdline, rows, fit))
    return 0


def _ratios(check):
    return [l / r if r > 0.0 else 0.0
            for l, r in zip(check.lhs_series, check.rhs_series)]


def _jump_family(alpha):
    def family(eps):
        if eps == 0.0:
            return coefficients.identity_field()
        return coefficients.radial_jump_field(alpha, eps)

    return family


def _cmd_solve(parser, args):
    if args.refine < 0:
        parser.error("--refine must be nonnegative")
    if args.domain in ("sector", "annulus"):
        _check_angle(parser, args.beta)
        r_inner = 0.0
        if args.domain == "annulus":
            if not 0.0 < args.eps < 1.0:
                parser.error("--eps must lie in (0, 1) for an annulus")
            r_inner = args.eps
        dom = geometry.SectorDomain(args.beta, r_inner=r_inner)
        aligned = ()
        if args.coeff == "jump":
            if not r_inner < args.jump_eps < 1.0:
                parser.error("--jump-eps must lie inside the domain radii")
            aligned = (args.jump_eps,)
        mesh = meshing.mesh_sector(dom, args.n_radial, args.n_angular,
                                   grading=args.grading, aligned_radii=aligned)
        source = analytic.SourceTerm(args.beta)
    else:
        lo, hi = args.graph_height, args.graph_height + args.graph_slope
        if min(lo, hi) <= 0.1 or max(lo, hi) > 1.0:
            parser.error("graph height must stay in (0.1, 1] over [0, 1]")
        dom = geometry.GraphDomain.from_height(
            0.0, 1.0, 0.0, 1.0,
            lambda x: args.graph_height + args.graph_slope * x, n_grid=args.nx + 1)
        mesh = meshing.mesh_graph_domain(dom, args.nx, args.ny)

        def source(pts):
            return np.ones(np.asarray(pts).shape[:-1])

    for _ in range(args.refine):
        mesh = meshing.refine_uniform(mesh)
    field = (coefficients.identity_field() if args.coeff == "identity"
             else coefficients.radial_jump_field(args.alpha, args.jump_eps))
    system = fem.assemble(mesh, field, source=source)
    try:
        sol = fem.solve_cg(system)
    except fem.ConvergenceFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4
    _write(f"{args.out_prefix}.mesh", mesh.export_text())
    _write(f"{args.out_prefix}.sol", fem.export_solution_text(sol))
    print(f"unknowns {system.num_unknowns} iterations {sol.solve_report[0]} "
          f"relative residual {_fmt(sol.solve_report[1])}")
    return 0


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "verify-analytic":
            return _cmd_verify(parser, args)
        if args.command == "rate-study":
            return _cmd_rate_study(parser, args)
        return _cmd_solve(parser, args)
    except SystemExit as exc:  # argparse reports usage errors via exit(2)
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
