"""Command-line front end.

Exit codes: 0 success, 2 invalid arguments or config, 3 profile solver
failure, 4 a check failed, 5 runtime failure during a run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from . import profiles as P
from .errors import (
    DegenerateRoots,
    DomainError,
    EmptyRegime,
    NotApplicable,
    OrbitError,
    OscillatoryRegime,
    ShootingFailure,
    WindowError,
    YFSError,
)
from .io import read_json, to_json, write_csv, write_json
from .model import derive_exponents, regime_classify, similarity_params

EXIT_OK, EXIT_ARGS, EXIT_SOLVER, EXIT_CHECK, EXIT_RUNTIME = 0, 2, 3, 4, 5
SOLVER_ERRORS = (OscillatoryRegime, DegenerateRoots, EmptyRegime, NotApplicable, OrbitError,
                 ShootingFailure, WindowError)

log = logging.getLogger("yfs.cli")


class _Fail(Exception):
    def __init__(self, code: int, message: str, diagnostics=None):
        super().__init__(message)
        self.code = code
        self.diagnostics = diagnostics


def _emit(obj) -> None:
    sys.stdout.write(to_json(obj) + "\n")


# ------------------------------------------------------------ exponents


def cmd_exponents(args) -> int:
    mp = derive_exponents(args.dim)
    out = {"model": mp.to_dict()}
    if args.beta is not None:
        sp = similarity_params(mp, args.beta)
        out["similarity"] = sp.to_dict()
        out["regime"] = regime_classify(args.dim, args.beta).value
    _emit(out)
    return EXIT_OK


# -------------------------------------------------------------- profile


def build_profile(kind: str, dim: int, beta, amp, points: int):
    """Construct a profile; ``amp`` is the natural shooting parameter.

    ``f(0)`` for smooth, ``K`` for singular and expander, ``lambda`` for
    Barenblatt; ignored for the cylinder.
    """
    mp = derive_exponents(dim)
    if kind == "cylinder":
        return P.cylinder_profile(mp, beta, num=points)
    if kind == "barenblatt":
        return P.barenblatt_profile(mp, 1.0 if amp is None else amp, num=points)
    if beta is None:
        raise DomainError(f"--beta is required for {kind} profiles")
    sp = similarity_params(mp, beta)
    a = 1.0 if amp is None else amp
    if kind == "smooth":
        return P.solve_smooth_profile(sp, a, num=points)
    if kind == "singular":
        return P.solve_singular_profile(sp, a, num=points)
    if kind == "expander":
        return P.solve_expander_profile(sp, a, num=points)
    raise DomainError(f"unknown profile kind {kind!r}")


def _profile_or_fail(args):
    try:
        return build_profile(args.kind, args.dim, args.beta, args.amp, args.points)
    except SOLVER_ERRORS as exc:
        diag = getattr(exc, "diagnostics", None) or {}
        raise _Fail(EXIT_SOLVER, f"{type(exc).__name__}: {exc}", diag) from exc


def cmd_profile(args) -> int:
    prof = _profile_or_fail(args)
    diag = P.profile_diagnostics(prof)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        P.write_profile_csv(prof, out / "profile.csv")
        write_json(out / "diagnostics.json", diag)
    _emit(diag)
    return EXIT_OK


def cmd_phase(args) -> int:
    prof = _profile_or_fail(args)
    orbit = P.to_phase_orbit(prof)
    crit = P.critical_points(prof.params.model)
    summary = {"kind": prof.kind.value, "start": orbit.start, "endpoint": orbit.endpoint,
               "critical_points": {k: list(v) for k, v in crit.items()},
               "final": [float(orbit.X[-1]), float(orbit.Y[-1])]}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "orbit.csv", {"s": orbit.s, "X": orbit.X, "Y": orbit.Y},
                  header=[f"kind={prof.kind.value},N={prof.N},beta={prof.params.beta!r}",
                          f"start={orbit.start},endpoint={orbit.endpoint}"])
        write_json(out / "phase.json", summary)
    _emit(summary)
    return EXIT_OK


# ------------------------------------------------------------------ run


def build_report(res) -> dict:
    from .experiments import versions

    return {"config": res.config.raw, "versions": versions(),
            "checks": [c.to_dict() for c in res.checks], "files": [], "passed": res.passed,
            "info": res.info}


def run_config(path, outdir) -> tuple[str, int, str]:
    """Run one config file; returns ``(name, exit code, message)``."""
    from .config import load_config, validate_report
    from .experiments import run_experiment

    try:
        cfg = load_config(read_json(path))
    except (DomainError, OSError, json.JSONDecodeError) as exc:
        return str(path), EXIT_ARGS, f"invalid config {path}: {exc}"
    try:
        res = run_experiment(cfg)
    except YFSError as exc:
        return cfg.name, EXIT_RUNTIME, f"{cfg.name}: {type(exc).__name__}: {exc}"
    except (ValueError, ArithmeticError) as exc:
        return cfg.name, EXIT_RUNTIME, f"{cfg.name}: {type(exc).__name__}: {exc}"
    out = Path(outdir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    report = build_report(res)
    header = [f"experiment={cfg.experiment},name={cfg.name},yfs={__version__}"]
    for key, cols in sorted(res.tables.items()):
        if key in cfg.outputs and not cfg.outputs[key]:
            continue
        write_csv(out / f"{key}.csv", cols, header=header)
        report["files"].append(f"{key}.csv")
    report["files"].append("report.json")
    validate_report(json.loads(to_json(report)))
    write_json(out / "report.json", report)
    failed = [c.name for c in res.checks if not c.passed]
    if failed:
        return cfg.name, EXIT_CHECK, f"{cfg.name}: failed checks: {', '.join(failed)}"
    return cfg.name, EXIT_OK, f"{cfg.name}: all {len(res.checks)} checks passed"


def cmd_run(args) -> int:
    paths = list(args.config)
    if args.jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_config, paths, [args.out] * len(paths)))
    else:
        results = [run_config(p, args.out) for p in paths]
    for _, code, msg in results:
        (sys.stdout if code == EXIT_OK else sys.stderr).write(msg + "\n")
    codes = [c for _, c, _ in results]
    return max(codes) if codes else EXIT_OK


# --------------------------------------------------------------- report


def _report_paths(items):
    for item in items:
        p = Path(item)
        if p.is_dir():
            yield from sorted(p.rglob("report.json"))
        else:
            yield p


def cmd_report(args) -> int:
    from jsonschema import ValidationError

    from .config import validate_report

    code = EXIT_OK
    for path in _report_paths(args.path):
        try:
            rep = read_json(path)
            validate_report(rep)
        except (OSError, json.JSONDecodeError, ValidationError) as exc:
            sys.stderr.write(f"{path}: invalid report: {exc}\n")
            return EXIT_ARGS
        name = rep["config"].get("name", str(path))
        sys.stdout.write(f"{name} ({rep['config']['experiment']})\n")
        for c in rep["checks"]:
            verdict = "pass" if c["pass"] else "FAIL"
            sys.stdout.write(f"  {c['name']}: {verdict}  measured={c['measured']}  "
                             f"expected={c['expected']}  tol={c['tolerance']}\n")
        if not rep["passed"]:
            code = EXIT_CHECK
    return code


# ---------------------------------------------------------------- parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yfs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"yfs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exponents", help="print exponents and constants as JSON")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--beta", type=float)
    p.set_defaults(func=cmd_exponents)

    for name, func, help_ in (("profile", cmd_profile, "solve a self-similar profile"),
                              ("phase", cmd_phase, "map a profile to the phase plane")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--kind", required=True,
                       choices=["cylinder", "barenblatt", "smooth", "singular", "expander"])
        p.add_argument("--dim", type=int, required=True)
        p.add_argument("--beta", type=float)
        p.add_argument("--amp", type=float,
                       help="f(0) (smooth), K (singular, expander) or lambda (barenblatt)")
        p.add_argument("--points", type=_positive_int, default=P.DEFAULT_POINTS)
        p.add_argument("--out", help="output directory")
        p.set_defaults(func=func)

    p = sub.add_parser("run", help="run experiments from JSON configs")
    p.add_argument("config", nargs="+")
    p.add_argument("--out", default="runs")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize report.json files or run directories")
    p.add_argument("path", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        sys.stderr.write(f"error: {exc}\n")
        if exc.diagnostics:
            sys.stderr.write(to_json(exc.diagnostics) + "\n")
        return exc.code
    except DomainError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ARGS
    except SOLVER_ERRORS as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
