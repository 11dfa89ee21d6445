"""Command-line entry point: degell solve|spectrum|check|poincare|convergence.

Every command reads a problem file, emits a JSON document (stdout or
--out) embedding the resolved problem for provenance, and returns 0 on
success, 2 when a checked property fails (incompatible data, violated
condition), 1 on errors.  DEGELL_SEED overrides the seed in the file.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

from .analysis import (
    check_negativity,
    estimate_global_poincare,
    verify_max_principle,
    verify_uniqueness_thm5,
)
from .assembly import assemble_form, assemble_rhs, build_space, data_norm
from .errors import DegellError
from .problem import parse_problem_file
from .solver import (
    find_shift_gamma,
    solve_dirichlet,
    solve_neumann,
    solve_shifted,
    stability_report,
)
from .spectral import (
    compute_spectrum,
    eigenvalue_convergence,
    rayleigh_recursion,
    verify_spectral_claims,
)


def _load(spec_path, seed_flag=None):
    problem = parse_problem_file(spec_path)
    env_seed = os.environ.get("DEGELL_SEED")
    if seed_flag is not None:
        problem = replace(problem, seed=int(seed_flag))
    elif env_seed is not None:
        problem = replace(problem, seed=int(env_seed))
    return problem


def _emit(payload, out_path):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(path, mesh, values):
    with open(path, "w", encoding="utf-8") as fh:
        for vertex, value in zip(mesh.vertices, values):
            coords = ",".join(repr(float(c)) for c in vertex)
            fh.write(f"{coords},{float(value)!r}\n")


def _sidecar(out_path, suffix):
    stem, _ = os.path.splitext(out_path)
    return stem + suffix


def _payload(problem, command):
    return {
        "command": command,
        "spec": problem.resolved_dict(),
        "warnings": problem.exponent_warnings(),
    }


def cmd_solve(args):
    problem = _load(args.spec)
    mesh = problem.build_mesh()
    space = build_space(mesh, problem.bc)
    form = assemble_form(space, problem)
    payload = _payload(problem, "solve")
    if args.mu is not None:
        rhs = assemble_rhs(space, problem.f, problem.T, problem.g)
        dn = data_norm(space, problem.f, problem.T, problem.g)
        solution = solve_shifted(form, args.mu, rhs, data_norm_value=dn)
        payload["mode"] = "shifted"
        payload["solution_info"] = solution.info
        payload["solution"] = [float(c) for c in solution.coeffs]
        if args.out:
            _write_csv(_sidecar(args.out, ".csv"), mesh, solution.vertex_values())
        _emit(payload, args.out)
        return 0
    solve = solve_neumann if problem.bc == "neumann" else solve_dirichlet
    outcome = solve(problem, space, form=form)
    payload["mode"] = "fredholm"
    payload["outcome"] = outcome.to_json_dict()
    if outcome.solution is not None:
        payload["stability"] = stability_report(outcome, problem)
        if args.out:
            _write_csv(
                _sidecar(args.out, ".csv"), mesh, outcome.solution.vertex_values()
            )
    _emit(payload, args.out)
    if outcome.branch == "alternative" and not outcome.compatible:
        return 2
    return 0


def cmd_spectrum(args):
    problem = _load(args.spec)
    mesh = problem.build_mesh()
    space = build_space(mesh, problem.bc)
    form = assemble_form(space, problem)
    spectrum = compute_spectrum(form, args.k)
    payload = _payload(problem, "spectrum")
    payload["spectrum"] = spectrum.to_json_dict()
    payload["claims"] = verify_spectral_claims(spectrum)
    payload["eigenfunctions"] = [
        [float(v) for v in space.vertex_values(u.coeffs)]
        for u in spectrum.eigenfunctions
    ]
    if args.recursion:
        recursion = rayleigh_recursion(form, args.k)
        agreement = 0.0
        for a, b in zip(spectrum.eigenvalues, recursion.eigenvalues):
            a, b = float(a.real if hasattr(a, "real") else a), float(b)
            agreement = max(agreement, abs(a - b) / max(1.0, abs(a)))
        payload["recursion"] = recursion.to_json_dict()
        payload["recursion_agreement"] = agreement
    if args.out:
        for j, u in enumerate(spectrum.eigenfunctions):
            _write_csv(_sidecar(args.out, f"_eig{j}.csv"), mesh, u.vertex_values())
    _emit(payload, args.out)
    return 0


def cmd_check(args):
    problem = _load(args.spec, seed_flag=args.seed)
    mesh = problem.build_mesh()
    space = build_space(mesh, problem.bc)
    payload = _payload(problem, "check")
    payload["which"] = args.which
    code = 0
    if args.which in ("cond1_i", "cond1_ii", "cond2_i", "cond2_ii"):
        report = check_negativity(
            problem, space, args.which, trials=args.trials, seed=problem.seed
        )
        payload["report"] = report.to_json_dict()
        code = 0 if report.holds else 2
    elif args.which == "uniqueness":
        report = verify_uniqueness_thm5(problem, space, trials=args.trials)
        payload["report"] = report
        code = 0 if report.get("holds") in (True, None) else 2
    elif args.which == "maxprinciple":
        solve = solve_dirichlet if problem.bc == "dirichlet" else solve_neumann
        outcome = solve(problem, build_space(mesh, problem.bc))
        if outcome.solution is None:
            raise DegellError("no solution available to test the maximum principle on")
        report = verify_max_principle(
            problem, space, outcome.solution, trials=args.trials
        )
        payload["report"] = report
        code = 0 if report["holds"] else 2
    else:
        raise DegellError(f"unknown check {args.which!r}")
    _emit(payload, args.out)
    return code


def cmd_poincare(args):
    problem = _load(args.spec)
    mesh = problem.build_mesh()
    space = build_space(mesh, "neumann")
    payload = _payload(problem, "poincare")
    if args.r > 2.0 * problem.gain:
        payload["warnings"].append(
            f"requested r={args.r} exceeds 2*gain={2 * problem.gain}; the "
            "declared gain does not back this exponent"
        )
    report = estimate_global_poincare(
        space, problem.Q, q_target=args.r, trials=problem.trials, seed=problem.seed
    )
    payload["report"] = report.to_json_dict()
    _emit(payload, args.out)
    return 0


def cmd_convergence(args):
    problem = _load(args.spec)
    resolutions = [int(tok) for tok in args.resolutions.split(",") if tok.strip()]
    payload = _payload(problem, "convergence")
    payload["table"] = eigenvalue_convergence(problem, resolutions, args.k)
    _emit(payload, args.out)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="degell",
        description="Galerkin solver and verification harness for degenerate "
        "elliptic Neumann/Dirichlet problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="shifted solve or Fredholm dispatch")
    p_solve.add_argument("spec")
    p_solve.add_argument("--mu", type=float, default=None)
    p_solve.add_argument("--out", default=None)
    p_solve.set_defaults(fn=cmd_solve)

    p_spec = sub.add_parser("spectrum", help="generalized eigenvalues")
    p_spec.add_argument("spec")
    p_spec.add_argument("--k", type=int, default=6)
    p_spec.add_argument("--recursion", action="store_true")
    p_spec.add_argument("--out", default=None)
    p_spec.set_defaults(fn=cmd_spectrum)

    p_check = sub.add_parser("check", help="negativity / uniqueness / max principle")
    p_check.add_argument("spec")
    p_check.add_argument(
        "--which",
        required=True,
        choices=[
            "cond1_i",
            "cond1_ii",
            "cond2_i",
            "cond2_ii",
            "uniqueness",
            "maxprinciple",
        ],
    )
    p_check.add_argument("--trials", type=int, default=None)
    p_check.add_argument("--seed", type=int, default=None)
    p_check.add_argument("--out", default=None)
    p_check.set_defaults(fn=cmd_check)

    p_poin = sub.add_parser("poincare", help="global Poincare constant")
    p_poin.add_argument("spec")
    p_poin.add_argument("--r", type=float, default=2.0)
    p_poin.add_argument("--out", default=None)
    p_poin.set_defaults(fn=cmd_poincare)

    p_conv = sub.add_parser("convergence", help="eigenvalue refinement study")
    p_conv.add_argument("spec")
    p_conv.add_argument("--resolutions", default="25,50,100,200")
    p_conv.add_argument("--k", type=int, default=3)
    p_conv.add_argument("--out", default=None)
    p_conv.set_defaults(fn=cmd_convergence)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DegellError as exc:
        print(f"degell: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"degell: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
