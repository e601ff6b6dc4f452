"""Command-line driver: run benchmarks, verify identities, emit tables.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

import argparse
import sys

import numpy as np

from .adaptive import AdaptiveConfig, eoc, refine_marked_twice, run_adaptive
from .duality import (
    energies_stokes,
    random_divfree_cr,
    random_divfree_rt,
    strong_convexity_stokes,
)
from .forms import SingularSystemError
from .problems import discretize_stokes, exact_errors, get_problem

USAGE_ERROR = 1
NUMERICAL_ERROR = 2


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(x)
    x = float(x)
    if x != 0.0 and abs(x) < 1e-3:
        return f"{x:.6e}"
    return f"{x:.6f}"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gapfem",
        description="Primal-dual gap error estimation benchmarks "
        "(Stokes / linear elasticity, Crouzeix-Raviart + Raviart-Thomas).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark problem")
    run.add_argument("problem", help="taylor-green, lshape, or cook")
    run.add_argument("--mode", choices=["uniform", "adaptive"], default="adaptive")
    run.add_argument("--theta", type=float, default=0.5)
    run.add_argument("--max-iter", type=int, default=10)
    run.add_argument("--eps-stop", type=float, default=0.0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default=None, help="report file path")
    run.add_argument("--format", choices=["csv", "json"], default="csv")

    ver = sub.add_parser("verify-identity", help="randomized Prager-Synge check")
    ver.add_argument("--problem", default="taylor-green")
    ver.add_argument("--levels", type=int, default=6)
    ver.add_argument("--seeds", type=int, default=3)
    ver.add_argument("--seed", type=int, default=0, help="seed offset")
    ver.add_argument("--threshold", type=float, default=1e-6)
    ver.add_argument("--out", default=None)
    ver.add_argument("--format", choices=["csv", "json"], default="csv")
    ver.add_argument(
        "--debug-tamper",
        action="store_true",
        help="inject a non-admissible perturbation (negative test)",
    )

    tab = sub.add_parser("table1", help="uniform Taylor-Green error table")
    tab.add_argument("--max-iter", type=int, default=4, help="number of levels")
    tab.add_argument("--seed", type=int, default=0)
    tab.add_argument("--out", default=None)
    tab.add_argument("--format", choices=["csv", "json"], default="csv")
    return parser


def cmd_run(args):
    try:
        problem = get_problem(args.problem)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    config = AdaptiveConfig(
        theta=args.theta,
        max_iter=args.max_iter,
        eps_stop=args.eps_stop,
        refinement_mode=args.mode,
    )
    try:
        report = run_adaptive(problem, config)
    except SingularSystemError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    rows = report.csv_rows()
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for row in rows:
        print("  ".join(c.rjust(w) for c, w in zip(row, widths)))
    if args.out:
        if args.format == "csv":
            report.to_csv(args.out)
        else:
            report.to_json(args.out)
        print(f"report written to {args.out}")
    return 0


def identity_rows(problem, levels, seeds, seed_offset=0, tamper=False):
    """Relative identity errors for random admissible pairs per level."""
    mesh = problem.mesh_factory()
    rows = []
    for level in range(1, levels + 1):
        sol = discretize_stokes(problem, mesh)
        errs = exact_errors(sol, problem, mesh)
        num_dof = 2 * mesh.num_sides + mesh.num_elements
        for i in range(1, seeds + 1):
            seed = seed_offset + 1000 * level + i
            # vary the perturbation size around the discretisation error
            size = 0.5 + ((7 * seed) % 8) / 4.0
            v = sol.u_h + random_divfree_cr(
                mesh, seed, scale=size * np.sqrt(2.0 / problem.nu) * errs["primal"]
            )
            tau = sol.t_h + random_divfree_rt(
                mesh, seed + 500000,
                scale=size * np.sqrt(2.0 * problem.nu) * errs["dual"],
            )
            if tamper:
                # break the divergence constraint on one element
                flux = tau.flux.copy()
                flux[0, mesh.element_sides[0, 0]] += 0.1 * (1.0 + flux.max())
                from .spaces import RTField

                tau = RTField(mesh, flux)
            en = energies_stokes(v, tau, sol.system)
            rho = strong_convexity_stokes(v, tau, sol)
            gap = en["primal"] - en["dual"]
            rho_tot = rho["primal"] + rho["dual"]
            if not np.isfinite(gap):
                rel = np.inf
            else:
                rel = abs(gap - rho_tot) / rho_tot
            rows.append(
                {
                    "level": level,
                    "sample": i,
                    "num_dof": num_dof,
                    "rho_primal": rho["primal"],
                    "rho_dual": rho["dual"],
                    "gap": gap,
                    "err_iden": rel,
                }
            )
        if level < levels:
            mesh = refine_marked_twice(mesh, range(mesh.num_elements))
    return rows


def cmd_verify_identity(args):
    try:
        problem = get_problem(args.problem)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    if problem.kind != "stokes":
        print("error: verify-identity requires a Stokes problem", file=sys.stderr)
        return USAGE_ERROR
    try:
        rows = identity_rows(
            problem, args.levels, args.seeds, args.seed, tamper=args.debug_tamper
        )
    except SingularSystemError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    header = ["level", "sample", "num_dof", "rho_primal", "rho_dual", "gap", "err_iden"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(
            ",".join(
                [str(r["level"]), str(r["sample"]), str(r["num_dof"])]
                + [_fmt(r[k]) for k in ("rho_primal", "rho_dual", "gap")]
                + [f"{r['err_iden']:.6e}"]
            )
        )
    for line in lines:
        print(line)
    if args.out:
        if args.format == "csv":
            with open(args.out, "w") as f:
                f.write("\n".join(lines) + "\n")
        else:
            import json

            with open(args.out, "w") as f:
                json.dump(rows, f, indent=2, default=float)
                f.write("\n")
        print(f"report written to {args.out}")
    worst = max(r["err_iden"] for r in rows)
    print(f"worst relative identity error: {worst:.3e} (threshold {args.threshold:.1e})")
    if not np.isfinite(worst) or worst > args.threshold:
        print("identity check FAILED", file=sys.stderr)
        return NUMERICAL_ERROR
    print("identity check passed")
    return 0


def cmd_table1(args):
    problem = get_problem("taylor-green")
    config = AdaptiveConfig(refinement_mode="uniform", max_iter=args.max_iter)
    try:
        report = run_adaptive(problem, config)
    except SingularSystemError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    dofs = [r.num_dof for r in report.records]
    ep = [r.errors["err_primal"] for r in report.records]
    ed = [r.errors["err_dual"] for r in report.records]
    hs = np.asarray(dofs, dtype=float) ** -0.5
    eoc_p = eoc(ep, hs)
    eoc_d = eoc(ed, hs)
    header = ["num_dof", "err_u", "eoc_u", "err_T", "eoc_T"]
    lines = [",".join(header)]
    for k in range(len(dofs)):
        lines.append(
            ",".join(
                [
                    str(dofs[k]),
                    _fmt(ep[k]),
                    _fmt(eoc_p[k - 1]) if k else "-",
                    _fmt(ed[k]),
                    _fmt(eoc_d[k - 1]) if k else "-",
                ]
            )
        )
    for line in lines:
        print(line)
    if args.out:
        with open(args.out, "w") as f:
            f.write("\n".join(lines) + "\n")
        print(f"table written to {args.out}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    if args.command == "run":
        return cmd_run(args)
    if args.command == "verify-identity":
        return cmd_verify_identity(args)
    if args.command == "table1":
        return cmd_table1(args)
    return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
