"""Command-line entry point: ``shiftbp {analyze,fixpoint,family,simulate,verify}``.

Every command prints a JSON run report on stdout.  Exit codes: 0 ok,
1 verify failure, 2 validation, 3 regime, 4 no convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np

from . import checks
from .construct import (
    DEFAULT_CONV_TOL,
    DEFAULT_M_MAX,
    DEFAULT_STEP,
    Candidate,
    ScanParams,
    construct_fixed_point,
    family,
)
from .errors import NoConvergence, NoRootInRegime, NotFound, ParseError, RegimeError, ValidationError
from .genfun import write_diagnostics_csv
from .law import OffspringLaw, check_assumptions, load_law, moments
from .roots import solve_decay_rate, solve_extinction
from .simulate import SimConfig, estimate_extinction, parse_typeset

EXIT_OK, EXIT_VERIFY, EXIT_VALIDATION, EXIT_REGIME, EXIT_NO_CONVERGENCE = 0, 1, 2, 3, 4


class _Exit(Exception):
    def __init__(self, code: int, message: str, outputs: dict | None = None):
        super().__init__(message)
        self.code = code
        self.outputs = outputs or {}


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, default=_jsonable)


def _write_json(path: str | Path, doc: Any) -> None:
    Path(path).write_text(_dumps(doc) + "\n", encoding="utf-8")


def _load(path: str) -> OffspringLaw:
    try:
        return load_law(Path(path))
    except FileNotFoundError:
        raise _Exit(EXIT_VALIDATION, f"no such law file: {path}")
    except (ParseError, ValidationError) as exc:
        raise _Exit(EXIT_VALIDATION, f"invalid law: {exc}")


def _require_assumptions(law: OffspringLaw):
    summary = moments(law)
    report = check_assumptions(law, summary)
    if not report.all_passed:
        raise _Exit(EXIT_VALIDATION, "law violates the standing assumptions",
                    {"assumptions": report.to_dict()})
    return summary, report


def cmd_analyze(args) -> tuple[dict, OffspringLaw]:
    law = _load(args.law)
    summary = moments(law)
    report = check_assumptions(law, summary)
    q = solve_extinction(summary).value
    out: dict[str, Any] = {
        "law": law.name,
        "K": law.K,
        "means": [float(m) for m in summary.means],
        "total_mean": summary.total_mean,
        "assumptions": report.to_dict(),
        "regime": report.regime,
        "q": q,
    }
    try:
        out["gamma"] = solve_decay_rate(summary).value
    except NoRootInRegime as exc:
        out["gamma"] = None
        out["gamma_note"] = str(exc)
    out["theta"] = [{"constant": q}, {"constant": 1.0}] if summary.supercritical else [{"constant": 1.0}]
    return out, law


def cmd_fixpoint(args) -> tuple[dict, OffspringLaw]:
    law = _load(args.law)
    summary, _ = _require_assumptions(law)
    if not summary.supercritical:
        raise _Exit(EXIT_REGIME, f"M = {summary.total_mean} <= 1: no non-trivial fixed point")
    scan = ScanParams(step=args.step, m_max=args.m_max)
    outputs: dict[str, Any] = {"candidate_path": args.out}
    try:
        cand = construct_fixed_point(law, seed_amplitude=args.seed_amplitude, scan=scan,
                                     conv_tol=args.conv_tol, n_head=args.truncate)
        code = EXIT_OK
    except NoConvergence as exc:
        cand = exc.candidate
        code = EXIT_NO_CONVERGENCE
        outputs["error"] = str(exc)
    except (RegimeError, NoRootInRegime) as exc:
        raise _Exit(EXIT_REGIME, str(exc))
    except NotFound as exc:
        raise _Exit(EXIT_NO_CONVERGENCE, str(exc))
    _write_json(args.out, cand.to_document())
    if args.csv:
        write_diagnostics_csv(args.csv, law, summary, cand.u)
        outputs["csv_path"] = args.csv
    outputs.update({
        "converged": cand.converged,
        "u_first": [float(v) for v in cand.u.coords(5)],
        "residual": cand.residual_report.to_dict(),
        "ratio": cand.ratio_diag.to_dict(),
    })
    if code != EXIT_OK:
        raise _Exit(code, outputs.pop("error"), outputs)
    return outputs, law


def cmd_family(args) -> tuple[dict, OffspringLaw]:
    law = _load(args.law)
    _require_assumptions(law)
    try:
        doc = json.loads(Path(args.candidate).read_text(encoding="utf-8"))
        base = Candidate.from_document(doc, law)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise _Exit(EXIT_VALIDATION, f"unreadable candidate: {exc}")
    except ValidationError as exc:
        raise _Exit(EXIT_VALIDATION, str(exc))
    try:
        rep = family(law, base, args.count, args.direction)
    except ValidationError as exc:
        raise _Exit(EXIT_VALIDATION, str(exc))
    _write_json(args.out, rep.to_document())
    return {
        "family_path": args.out,
        "direction": rep.direction,
        "count": len(rep.members),
        "all_ordered": rep.all_ordered,
        "max_residual": max(m.residual_report.sup_window for m in rep.members),
        "first_coords": [m.u.coord(1) for m in rep.members],
    }, law


def cmd_simulate(args) -> tuple[dict, OffspringLaw]:
    law = _load(args.law)
    try:
        config = SimConfig(trials=args.trials, seed=args.seed, max_generations=args.max_gen,
                           max_population=args.max_pop, typeset=parse_typeset(args.typeset))
    except ValidationError as exc:
        raise _Exit(EXIT_VALIDATION, str(exc))
    est = estimate_extinction(law, config)
    doc = est.to_document()
    if args.out:
        _write_json(args.out, doc)
    return {"estimate": doc}, law


def cmd_verify(args) -> tuple[dict, OffspringLaw]:
    law = _load(args.law)
    _require_assumptions(law)
    results = checks.run_suite(law, seed=args.seed, cases=args.cases)
    out = {"checks": [r.to_dict() for r in results],
           "failed": [r.name for r in results if r.status == checks.FAIL]}
    if out["failed"]:
        raise _Exit(EXIT_VERIFY, f"{len(out['failed'])} check(s) failed", out)
    return out, law


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shiftbp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="moments, assumptions, q, gamma and the extinction set")
    p.add_argument("law")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fixpoint", help="construct a non-trivial fixed point")
    p.add_argument("law")
    p.add_argument("--truncate", type=int, default=None, metavar="N", help="head length of the candidate")
    p.add_argument("--seed-amplitude", type=float, default=None, metavar="A")
    p.add_argument("--conv-tol", type=float, default=DEFAULT_CONV_TOL)
    p.add_argument("--step", type=int, default=DEFAULT_STEP, help="tail-start schedule step")
    p.add_argument("--m-max", type=int, default=DEFAULT_M_MAX, help="last tail start scanned")
    p.add_argument("--out", default="candidate.json")
    p.add_argument("--csv", default=None, help="also write per-coordinate diagnostics")
    p.set_defaults(func=cmd_fixpoint)

    p = sub.add_parser("family", help="prepend or shift a converged candidate")
    p.add_argument("law")
    p.add_argument("candidate")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--direction", choices=["prepend", "shift_left"], default="prepend")
    p.add_argument("--out", default="family.json")
    p.set_defaults(func=cmd_family)

    p = sub.add_parser("simulate", help="Monte Carlo extinction frequencies")
    p.add_argument("law")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--typeset", default="global", help="global | finite:LO..HI | mod:R,M")
    p.add_argument("--max-gen", type=int, default=500)
    p.add_argument("--max-pop", type=int, default=1_000_000)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("law")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=100)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    report: dict[str, Any] = {"command": ["shiftbp", *argv], "law_hash": None}
    code = EXIT_OK
    try:
        outputs, law = args.func(args)
        report["law_hash"] = law.digest
        report["outputs"] = outputs
    except _Exit as exc:
        code = exc.code
        report["error"] = str(exc)
        report["outputs"] = exc.outputs
        print(f"shiftbp: {exc}", file=sys.stderr)
    report["exit_code"] = code
    report["timing_s"] = round(time.perf_counter() - started, 6)
    print(_dumps(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
