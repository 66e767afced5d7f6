"""Command-line interface.

Exit codes:

==  ==========================================================
0   success
2   usage, schema or malformed-input error
3   numerical failure of the solver (or unbounded program)
4   infeasible program
==  ==========================================================
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_INPUT):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------------------
# configuration

def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON: {exc}") from exc
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from exc


def _merge(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Flags override the config file, which overrides built-in defaults."""
    conf = _load_json(args.config) if getattr(args, "config", None) else {}
    if not isinstance(conf, dict):
        raise CliError("config file must hold a JSON object")
    unknown = set(conf) - set(defaults)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, conf.get(key, default))
    return args


def parse_lifting(spec: dict, U):
    """Lifting from ``{"folds": [{"g": [...], "h": ...}]}`` or ``{"axial": {"breakpoints": [[...]]}}``.

    A fold is ``max{0, g'u + h}``.  Axial breakpoints are the interior points
    of each axis; a leading lower bound is accepted and ignored.
    """
    from .geometry import bounding_box
    from .lifting import AxialSegmentation

    if not isinstance(spec, dict) or len(set(spec) & {"folds", "axial"}) != 1:
        raise CliError("lifting must contain exactly one of 'folds' or 'axial'")
    K = U.K
    if "folds" in spec:
        rows = []
        for i, f in enumerate(spec["folds"]):
            try:
                g = np.asarray(f["g"], dtype=float).ravel()
                h = float(f.get("h", 0.0))
            except (KeyError, TypeError, ValueError) as exc:
                raise CliError(f"fold {i}: expected {{'g': [..], 'h': number}}") from exc
            if g.size != K:
                raise CliError(f"fold {i}: g has {g.size} entries, expected {K}")
            rows.append(np.r_[g, h])
        if not rows:
            raise CliError("lifting has no folds")
        return "folds", np.array(rows)
    try:
        bps = spec["axial"]["breakpoints"]
    except (KeyError, TypeError) as exc:
        raise CliError("axial lifting needs 'breakpoints'") from exc
    if not isinstance(bps, list) or len(bps) != K:
        raise CliError(f"axial lifting needs one breakpoint list per axis ({K})")
    lo, _ = bounding_box(U)
    full = []
    for k, b in enumerate(bps):
        b = [float(x) for x in b]
        if not b or abs(b[0] - lo[k]) > 1e-9:
            b = [lo[k]] + b
        full.append(b)
    return "axial", AxialSegmentation.for_set(U, full)


def build_program(P, rule: str, lift_spec: dict | None = None, outer: str | None = None):
    """``(lifted problem, copositive program, robust set)`` for a CLI rule."""
    from .lifting import axial_lift, build_GWK_outer, build_Ustar, lifted_problem, make_lifting, midpoint_folds
    from .reformulate import build

    robust_set = None
    if rule in ("pldr", "pqdr"):
        kind, obj = parse_lifting(lift_spec, P.uncertainty) if lift_spec else ("folds", midpoint_folds(P.uncertainty))
        if kind == "axial":
            al = axial_lift(P.uncertainty, obj, P.stage_dims)
            lf = al.lifting
            if outer == "gwk":
                robust_set = build_GWK_outer(al)
            elif outer == "ustar":
                robust_set = build_Ustar(al)
        else:
            if outer:
                raise CliError("--outer needs an axial lifting")
            lf = make_lifting(P.uncertainty, obj, P.stage_dims)
        P = lifted_problem(P, lf)
        base = "ldr" if rule == "pldr" else "qdr"
    else:
        if lift_spec is not None or outer:
            raise CliError("--lift and --outer only apply to pldr and pqdr")
        base = rule
    return P, build(P, base), robust_set


# ---------------------------------------------------------------------------
# solve

def _export(prog, path: str) -> str:
    from .conic.io import export_cbf, export_sdpa

    suffix = Path(path).suffix.lower()
    if suffix == ".cbf":
        export_cbf(prog, path)
        return "cbf"
    if suffix in (".dat-s", ".sdpa", ".dat"):
        export_sdpa(prog, path)
        return "sdpa"
    raise CliError("export path must end in .cbf, .dat-s or .sdpa")


def cmd_solve(args) -> tuple[int, dict]:
    from .conic import SolveOptions, assemble, solve
    from .conic.io import FormatError
    from .model import ModelError, load_problem
    from .reformulate import extract_rule
    from .verify import certificate_soundness, worst_case_eval

    try:
        P = load_problem(args.problem)
        lift = _load_json(args.lift) if args.lift else None
        Pl, cp, robust = build_program(P, args.rule, lift, args.outer)
        A = assemble(cp, args.cone.upper(), robust_set=robust)
    except OSError as exc:
        raise CliError(f"{args.problem}: {exc.strerror}") from exc
    except (ModelError, ValueError) as exc:
        raise CliError(str(exc)) from exc

    report = {"problem": str(args.problem), "rule": args.rule, "cone": args.cone,
              "program": cp.summary(), "sense": P.sense}
    if args.export:
        try:
            report["export"] = {"path": args.export, "format": _export(A.program, args.export)}
        except FormatError as exc:
            raise CliError(f"cannot export: {exc}") from exc
    if args.no_solve:
        if not args.export:
            raise CliError("--no-solve needs --export")
        report["status"] = "not solved"
        return EXIT_OK, report

    sol = solve(A.program, SolveOptions(backend=args.backend))
    report["status"] = sol.status
    report["residuals"] = {k: float(v) for k, v in sol.residuals.items()}
    report["iterations"] = sol.iterations
    report["solve_seconds"] = round(sol.solve_time, 4)
    if sol.status == "infeasible":
        report["certificate"] = {"dual_ray_norm": float(np.linalg.norm(sol.y)), "message": sol.message}
        return EXIT_INFEASIBLE, report
    if sol.status != "optimal":
        report["message"] = sol.message
        return EXIT_NUMERIC, report
    report["value"] = A.value(sol)
    if args.verify:
        rule = extract_rule(cp, A.decision(sol))
        res = worst_case_eval(Pl, rule, n=args.samples, seed=args.seed)
        report["verify"] = {k: (bool(v) if k == "verdict" else float(v)) for k, v in res.items()
                            if k in ("violation", "realized", "bound", "verdict")}
        report["certificates"] = {k: v for k, v in certificate_soundness(A, sol, n=args.samples, seed=args.seed).items()}
    return EXIT_OK, report


def _print_solve(rep: dict) -> None:
    print(f"rule {rep['rule']}  cone {rep['cone']}  sense {rep['sense']}")
    s = rep["program"]
    print(f"variables {s['n_vars']}  copositive constraints {s['n_cop']}  cone dimension {s['cone_dim']}")
    if "export" in rep:
        print(f"exported {rep['export']['format']} to {rep['export']['path']}")
    print(f"status {rep['status']}")
    if "value" in rep:
        print(f"bound {rep['value']:.10g}")
    for k, v in rep.get("residuals", {}).items():
        print(f"  {k:<10} {v:.2e}")
    if "verify" in rep:
        v = rep["verify"]
        print(f"verify: violation {v['violation']:.2e}  realized {v['realized']:.10g}  "
              f"verdict {'ok' if v['verdict'] else 'FAILED'}")
    if "certificate" in rep:
        print(f"infeasibility certificate: dual ray norm {rep['certificate']['dual_ray_norm']:.3e}")
    if "message" in rep:
        print(rep["message"])


# ---------------------------------------------------------------------------
# bench

def cmd_bench(args) -> tuple[int, dict]:
    from .bench.suite import ExperimentConfig, FAMILIES, default_jobs, plot_sweep, run_suite, sweep_markdown

    args = _merge(args, {"family": None, "T": "1", "n": 10, "seed": 0, "schemes": "", "out": "results",
                         "jobs": None, "timing": True, "figures": True})
    if args.family not in FAMILIES:
        raise CliError(f"unknown family {args.family!r}; choose from {', '.join(FAMILIES)}")
    try:
        Ts = [int(t) for t in str(args.T).split(",") if t.strip()]
        schemes = tuple(s for s in str(args.schemes).split(",") if s.strip()) if isinstance(args.schemes, str) \
            else tuple(args.schemes)
        jobs = default_jobs() if args.jobs is None else int(args.jobs)
        cfgs = [ExperimentConfig(args.family, T, int(args.n), int(args.seed), schemes, bool(args.timing)) for T in Ts]
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    tables, written = [], []
    for cfg in cfgs:
        tab = run_suite(cfg, jobs)
        tables.append(tab)
        written += [str(p) for p in tab.write(args.out, figures=bool(args.figures)).values()]
    out = Path(args.out)
    if len(tables) > 1:
        p = out / f"{args.family}_sweep.md"
        p.write_text(sweep_markdown(tables))
        written.append(str(p))
        if args.figures:
            p = out / f"{args.family}_sweep.png"
            plot_sweep(tables, p)
            written.append(str(p))
    report = {"family": args.family, "T": Ts, "n": int(args.n), "seed": int(args.seed),
              "schemes": list(cfgs[0].schemes), "files": written,
              "stats": {str(t.config.T): t.stats() for t in tables}}
    report["_markdown"] = sweep_markdown(tables) if len(tables) > 1 else tables[0].to_markdown()
    return EXIT_OK, report


# ---------------------------------------------------------------------------
# entry point

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="copodr", description="Copositive decision-rule bounds for robust problems.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one problem file")
    s.add_argument("problem")
    s.add_argument("--rule", choices=("ldr", "qdr", "pldr", "pqdr", "lqdr"), default="ldr")
    s.add_argument("--cone", choices=("ia", "as"), default="ia")
    s.add_argument("--lift", help="lifting JSON (pldr/pqdr); default one midpoint fold per axis")
    s.add_argument("--outer", choices=("gwk", "ustar"), help="outer approximation of an axial lifting")
    s.add_argument("--export", help="write the conic program (.cbf, .dat-s)")
    s.add_argument("--no-solve", action="store_true", help="export only")
    s.add_argument("--verify", action="store_true", help="sample-check the extracted rule")
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--backend", choices=("clarabel", "cvxopt"), default="clarabel")
    s.add_argument("--json", action="store_true", help="machine-readable output")

    b = sub.add_parser("bench", help="run a scheme comparison")
    b.add_argument("--family")
    b.add_argument("--T", help="horizon or comma-separated horizons")
    b.add_argument("--n", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--schemes", help="comma-separated, e.g. QDR-IA,QDR-AS")
    b.add_argument("--out")
    b.add_argument("--jobs", type=int, help="worker processes (default COPODR_JOBS or all cores)")
    b.add_argument("--config", help="JSON file with any of the options above")
    b.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                   help="leave solve_seconds blank so the CSV is reproducible byte for byte")
    b.add_argument("--no-figures", dest="figures", action="store_const", const=False)
    b.add_argument("--json", action="store_true")
    return p


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items() if not str(k).startswith("_")}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return None if not np.isfinite(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "solve":
            code, rep = cmd_solve(args)
        else:
            code, rep = cmd_bench(args)
    except CliError as exc:
        if getattr(args, "json", False):
            print(json.dumps({"error": str(exc), "exit_code": exc.code}))
        else:
            print(f"error: {exc}", file=sys.stderr)
        return exc.code
    rep["exit_code"] = code
    if args.json:
        print(json.dumps(_jsonable(rep), indent=1))
    elif args.command == "solve":
        _print_solve(rep)
    else:
        print(rep["_markdown"])
        print("wrote " + ", ".join(rep["files"]))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
