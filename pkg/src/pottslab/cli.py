"""Command-line front end.

Every subcommand prints a short text summary (or the JSON document with
``--json``) and writes the JSON document to ``--out`` when given.  Exit codes:
0 when every asserted check passes, 1 when one fails, 2 on usage errors.
Reports carry no timings or host data, so identical arguments give identical
files.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import analysis, boundary_opt, exact_oracle, maps, recursion
from .boundary import BoundarySpec, num_leaves, read_boundary, write_boundary
from .model import ParameterError, critical_params, new_params

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _int_or_sci(text: str) -> int:
    """Accepts ``1000000`` as well as ``1e6``."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value != int(value):
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


# -- argument plumbing ----------------------------------------------------

def _model_flags(sp: argparse.ArgumentParser, p_required: bool = True):
    sp.add_argument("--d", type=int, required=True, help="branching factor")
    sp.add_argument("--q", type=int, required=True, help="number of colours")
    g = sp.add_mutually_exclusive_group(required=p_required)
    g.add_argument("--p", type=float, help="interaction weight exp(beta) in (0, 1)")
    g.add_argument("--critical", action="store_true", help="use p = 1 - q/(d+1)")


def _common_flags(sp: argparse.ArgumentParser):
    sp.add_argument("--json", action="store_true", help="print the JSON report to stdout")
    sp.add_argument("--out", help="write the JSON report to this path")


def _budget_flags(sp: argparse.ArgumentParser):
    sp.add_argument("--budget-configs", type=_int_or_sci, default=None,
                    help="max interior configurations (default: env or 1e8)")
    sp.add_argument("--budget-boundaries", type=_int_or_sci, default=None,
                    help="max boundaries enumerated (default: env or 1e7)")
    sp.add_argument("--workers", type=int, default=exact_oracle.default_workers(),
                    help="threads for enumeration (results do not depend on it)")


def _params(args):
    if args.critical:
        return critical_params(args.d, args.q)
    return new_params(args.d, args.q, args.p)


def _budgets(args):
    cfg = args.budget_configs if args.budget_configs is not None else exact_oracle.budget_configs()
    bnd = (args.budget_boundaries if args.budget_boundaries is not None
           else exact_oracle.budget_boundaries())
    return cfg, bnd


# -- subcommands ----------------------------------------------------------

def cmd_oracle_check(args):
    P = _params(args)
    d, q, n = P.d, P.q, args.n
    cfg, bnd = _budgets(args)
    L = num_leaves(d, n)
    if args.boundary:
        xis = [read_boundary(args.boundary, q)]
        mode = "file"
    elif args.samples is None and q ** L <= min(bnd, 10 ** 4):
        xis = [exact_oracle.boundary_from_index(b, q, L) for b in range(q ** L)]
        mode = "all"
    else:
        k = args.samples or 200
        rng = np.random.default_rng(args.seed)
        xis = [BoundarySpec.explicit(rng.integers(1, q + 1, size=L)) for _ in range(k)]
        mode = f"random(seed={args.seed})"
    worst, worst_at = 0.0, None
    for i, xi in enumerate(xis):
        exact = exact_oracle.root_marginals_exact(P, n, xi, cfg, args.workers)
        rec = recursion.root_marginals_recursive(P, n, xi)
        err = float(np.abs(exact - rec).max())
        if err > worst:
            worst, worst_at = err, i
    ok = worst <= args.tol
    doc = {"params": P.as_dict(), "n": n, "mode": mode, "boundaries": len(xis),
           "max_abs_error": worst, "tolerance": args.tol, "ok": ok,
           "worst_boundary": None if worst_at is None else xis[worst_at].to_list(q, d, n)}
    text = [f"oracle-check d={d} q={q} p={P.p:.17g} n={n}: {len(xis)} boundaries ({mode}), "
            f"max |exact - recursive| = {worst:.3e} (tol {args.tol:g})"]
    return doc, ok, text


def cmd_iterate(args):
    P = _params(args)
    eps = recursion.pure_deviation_sequence(P, args.N)
    if args.csv:
        analysis.write_sequence_csv(args.csv, P.q, eps)
    doc = {"params": P.as_dict(), "N": args.N, "eps_N": float(eps[-1]),
           "marginal_dev_N": float(recursion.marginal_deviation(P.q, eps[-1])),
           "csv": args.csv, "conventions": analysis.CONVENTIONS}
    text = [f"iterate d={P.d} q={P.q} p={P.p:.17g}: eps_{args.N} = {eps[-1]:.17g}"]
    return doc, True, text


def cmd_exponent(args):
    P = _params(args)
    eps = recursion.pure_deviation_sequence(P, args.N + 2)
    pl = analysis.power_law_constant(P, args.N, eps)
    tel = analysis.telescoping_series(P, args.N, eps)
    checks = {
        "probability_level": pl.probability.relative_error <= args.rtol,
        "ratio_level": pl.ratio.relative_error <= args.rtol,
        "odd_even": pl.odd_even_gap <= args.rtol,
        "telescoping_cesaro": tel.relative_error <= args.rtol,
    }
    ok = all(checks.values())
    doc = {"params": P.as_dict(), "N": args.N, "rtol": args.rtol,
           "probability_level": pl.probability, "ratio_level": pl.ratio,
           "ratio_level_odd": pl.ratio_odd, "odd_even_gap": pl.odd_even_gap,
           "telescoping_cesaro_mean": tel.cesaro_mean, "telescoping_target": tel.target,
           "regression_exponent": analysis.regression_exponent(eps[:args.N]),
           "checks": checks, "ok": ok, "conventions": analysis.CONVENTIONS}
    text = [f"exponent d={P.d} q={P.q} N={args.N}",
            f"  probability level {pl.probability.estimator_value:.10g} "
            f"(target {pl.probability.target:.10g}, rel err {pl.probability.relative_error:.2e})",
            f"  ratio level       {pl.ratio.estimator_value:.10g} "
            f"(target {pl.ratio.target:.10g}, rel err {pl.ratio.relative_error:.2e})",
            f"  odd/even gap {pl.odd_even_gap:.2e}, telescoping mean {tel.cesaro_mean:.10g} "
            f"(target {tel.target:.10g})"]
    return doc, ok, text


def cmd_rate(args):
    P = _params(args)
    est = analysis.exponential_rate(P, args.N)
    diag = analysis.successive_rate(P, args.N)
    ok = est.abs_error <= args.atol
    doc = {"params": P.as_dict(), "N": args.N, "atol": args.atol, "estimate": est,
           "abs_error": est.abs_error, "successive_ratio_diagnostic": diag, "ok": ok}
    text = [f"rate d={P.d} q={P.q} p={P.p:.17g} N={est.n_used}: "
            f"{est.estimator_value:.10g} vs log(A/B) = {est.target:.10g} "
            f"(abs err {est.abs_error:.3e}, tol {args.atol:g})",
            f"  successive-ratio diagnostic {diag.estimator_value:.10g}"]
    return doc, ok, text


def cmd_maps_audit(args):
    P = _params(args)
    grid = maps.log_grid(args.xmax, args.points)
    report = maps.audit_two_step(P, grid)
    text = [f"maps-audit d={P.d} q={P.q} p={P.p:.17g}: {args.points} points on [1, {args.xmax:g}]"]
    for a in report.per_m:
        text.append(f"  m={a.m}: sup (f_m o f_m)' = {a.sup_derivative:.12g} at x={a.argsup:.6g} "
                    f"(bound {a.bound:.12g}), max G = {a.max_G:.12g}, "
                    f"FD rel err {a.second_derivative_max_relerr:.2e}, "
                    f"violations {a.violation_count}")
    return report.as_dict(), report.ok, text


def cmd_taylor(args):
    P = _params(args)
    c = maps.taylor_c123(P)
    d = P.d
    c3_target = -(d * d - 1) / (d * d)
    inc = maps.telescoping_increment(P, args.x)
    inc_target = (d * d - 1) / (3.0 * d * d)
    checks = {
        "c1": abs(c.c1 - 1.0) <= 1e-9,
        "c2": abs(c.c2) <= 1e-9,
        "c3": abs(c.c3 - c3_target) <= 1e-9,
        "c1_fd": abs(c.c1_fd - c.c1) <= 1e-6,
        "telescoping_increment": abs(inc - inc_target) <= args.inc_tol,
    }
    ok = all(checks.values())
    doc = {"params": P.as_dict(), "coeffs": c.as_dict(), "c3_target": c3_target,
           "x": args.x, "telescoping_increment": inc, "telescoping_target": inc_target,
           "checks": checks, "ok": ok}
    text = [f"taylor d={d} q={P.q}: c1={c.c1:.15g} c2={c.c2:.3e} c3={c.c3:.15g} "
            f"(target {c3_target:.15g}); FD c1={c.c1_fd:.12g}",
            f"  increment at x={args.x:.17g}: {inc:.12g} (target {inc_target:.12g})"]
    return doc, ok, text


def _pattern_doc(pts, limit: int):
    return [pt.to_list() for pt in pts[:limit]]


def cmd_h_max(args):
    P = _params(args)
    best, pts = boundary_opt.h_max_admissible(P, args.r, args.workers)
    ff = float(maps.two_step_eval(P, args.r))
    doc = {"params": P.as_dict(), "r": args.r, "max_value": best, "ff_value": ff,
           "argmax_count": len(pts), "argmax_patterns": _pattern_doc(pts, args.max_listed),
           "ff_bound_holds": None, "h_bound_holds": None}
    if args.r > 1.0:
        doc["expansion_holds"] = boundary_opt.verify_expansion(P, args.r, args.workers)
    text = [f"h-max d={P.d} q={P.q} p={P.p:.17g} r={args.r:.17g}: max h = {best:.17g}, "
            f"(f o f)(r) = {ff:.17g}, {len(pts)} maximiser(s)"]
    return doc, True, text


def cmd_expansion_probe(args):
    P = _params(args)
    radii = np.logspace(np.log10(args.smin), np.log10(args.smax), args.points)
    rep = boundary_opt.expansion_probe(P, radii, args.workers)
    text = [f"expansion-probe d={P.d} q={P.q} p={P.p:.17g}: "
            f"{sum(rep.holds)}/{len(rep.holds)} radii reproduce (f o f)(r) with the unique "
            f"maximiser; first failure at r-1 = {rep.first_failure}"]
    return rep.as_dict(), True, text


def cmd_two_step_bound(args):
    P = _params(args)
    cfg, bnd = _budgets(args)
    rep = boundary_opt.two_step_bound_check(P, args.n, bnd, args.workers, cfg)
    text = [f"two-step-bound d={P.d} q={P.q} p={P.p:.17g} n={args.n}: "
            f"r*_{args.n} = {rep.r:.17g}, r*_{args.n + 2} = {rep.r_star_next:.17g}",
            f"  max over A(r*) of h = {rep.max_value:.17g} -> holds: {rep.h_bound_holds}",
            f"  (f o f)(r*) = {rep.ff_value:.17g} -> holds: {rep.ff_bound_holds} (not asserted)"]
    return rep.as_dict(), rep.h_bound_holds, text


def cmd_frozen_search(args):
    P = _params(args)
    cfg, bnd = _budgets(args)
    found = exact_oracle.find_dominating_boundary(P, args.n, bnd, args.workers, cfg)
    doc = {"params": P.as_dict(), "n": args.n, "found": found is not None}
    if found is not None:
        xi, margin = found
        doc["boundary"] = xi.to_list(P.q, P.d, args.n)
        doc["margin"] = margin
        if args.save_boundary:
            write_boundary(args.save_boundary, doc["boundary"])
        text = [f"frozen-search d={P.d} q={P.q} p={P.p:.17g} n={args.n}: boundary "
                f"{''.join(map(str, doc['boundary']))} beats Pure(1) by {margin:.6e}"]
    else:
        text = [f"frozen-search d={P.d} q={P.q} p={P.p:.17g} n={args.n}: "
                "no boundary beats Pure(1)"]
    ok = found is not None or not args.require
    return doc, ok, text


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pottslab",
        description="Antiferromagnetic Potts model on d-ary trees: exact marginals, "
                    "ratio iteration and two-step map checks.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_text, p_required=True):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        _model_flags(sp, p_required)
        _common_flags(sp)
        sp.set_defaults(func=fn)
        return sp

    sp = add("oracle-check", cmd_oracle_check, "compare recursive marginals with enumeration")
    sp.add_argument("--n", type=int, required=True, help="tree height")
    sp.add_argument("--samples", type=int, help="random boundaries instead of all")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--boundary", help="boundary file (one colour per line)")
    sp.add_argument("--tol", type=float, default=1e-10)
    _budget_flags(sp)

    sp = add("iterate", cmd_iterate, "pure-boundary deviation sequence eps_1..eps_N")
    sp.add_argument("--N", type=_int_or_sci, required=True)
    sp.add_argument("--csv", help="write n,eps,marginal_dev rows here")

    sp = add("exponent", cmd_exponent, "critical power-law constant")
    sp.add_argument("--N", type=_int_or_sci, default=10 ** 6)
    sp.add_argument("--rtol", type=float, default=0.02)

    sp = add("rate", cmd_rate, "subcritical exponential decay rate")
    sp.add_argument("--N", type=_int_or_sci, default=400)
    sp.add_argument("--atol", type=float, default=1e-3)

    sp = add("maps-audit", cmd_maps_audit, "grid audit of the two-step maps f_m o f_m")
    sp.add_argument("--xmax", type=float, default=1e4)
    sp.add_argument("--points", type=_int_or_sci, default=10 ** 4)

    sp = add("taylor", cmd_taylor, "Taylor coefficients of f o f at 1 (critical p)")
    sp.add_argument("--x", type=float, default=1.0 + 1e-5,
                    help="point for the telescoping increment")
    sp.add_argument("--inc-tol", type=float, default=1e-4)

    sp = add("h-max", cmd_h_max, "exhaustive maximum of h over A(r)")
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--max-listed", type=int, default=64)
    sp.add_argument("--workers", type=int, default=exact_oracle.default_workers())

    sp = add("expansion-probe", cmd_expansion_probe,
             "sweep r and record where (f o f)(r) stops being the maximum over A(r)")
    sp.add_argument("--smin", type=float, default=1e-4, help="smallest r - 1")
    sp.add_argument("--smax", type=float, default=1e3, help="largest r - 1")
    sp.add_argument("--points", type=int, default=71)
    sp.add_argument("--workers", type=int, default=exact_oracle.default_workers())

    sp = add("two-step-bound", cmd_two_step_bound,
             "brute-force r*_{n+2} against the two-step bounds from r*_n")
    sp.add_argument("--n", type=int, default=1)
    _budget_flags(sp)

    sp = add("frozen-search", cmd_frozen_search,
             "search for a boundary giving colour 1 more root mass than Pure(1)")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--require", action="store_true",
                    help="exit 1 when no dominating boundary exists")
    sp.add_argument("--save-boundary", help="write the found boundary to this file")
    _budget_flags(sp)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    sp = _subparser(parser, args.command)
    try:
        doc, ok, text = args.func(args)
    except ParameterError as exc:
        sp.print_usage(sys.stderr)
        print(f"{sp.prog}: error: --{exc}", file=sys.stderr)
        return EXIT_USAGE
    except (exact_oracle.BudgetExceeded, recursion.SizeCapExceeded,
            boundary_opt.EnumerationCapExceeded, ValueError) as exc:
        sp.print_usage(sys.stderr)
        print(f"{sp.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    doc = dict(doc, command=args.command, version=analysis.tool_version())
    body = analysis.dumps(doc)
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(body)
        except OSError as exc:
            print(f"{sp.prog}: error: --out {args.out}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_USAGE
    if args.json:
        sys.stdout.write(body)
    else:
        print("\n".join(text))
        print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
