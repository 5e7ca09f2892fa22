# app/cli.py
"""
Командная строка симулятора.

  python -m app.cli run <scenario|archetype> [--out DIR] [--metrics-file PATH]
  python -m app.cli replay <log>
  python -m app.cli verify <log>
  python -m app.cli metrics <log>
  python -m app.cli report <log> [--out PATH] [--pdf PATH]
  python -m app.cli archetypes list | export <name> [--out PATH]
  python -m app.cli sweep <scenario|archetype> --quorums 1/2,3/5,2/3

Коды выхода: 0 ok, 1 usage, 2 parse, 3 integrity, 4 expectation failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from app import canonical, metrics
from app.audit_log import read_log, verify_log
from app.engine import replay
from app.errors import HarnessError, IncompleteScenario, IntegrityError, UnknownReference

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_INTEGRITY = 3
EXIT_EXPECTATION = 4


class _Parser(argparse.ArgumentParser):
    # argparse по умолчанию выходит с кодом 2, а 2 у нас означает ошибку разбора сценария
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj) -> None:
    print(canonical.dumps(obj))


def _load_log(path: str):
    try:
        return read_log(path)
    except OSError as e:
        raise HarnessError(f"не удалось прочитать журнал {path}: {e}") from e


# ============================================================
#                          команды
# ============================================================

def cmd_run(args: argparse.Namespace) -> int:
    from app.runner import run
    from app.scenario import load_scenario

    scenario = load_scenario(args.scenario)
    result = run(scenario, out_dir=args.out, metrics_file=args.metrics_file)
    card = result.report.get("scorecard") or {}
    _emit({
        "scenario": result.scenario,
        "log": result.log_path,
        "report": result.report_path,
        "state_digest": result.report["state_digest"],
        "verdicts": card.get("verdicts"),
        "expectations_ok": result.ok,
    })
    return EXIT_OK if result.ok else EXIT_EXPECTATION


def cmd_replay(args: argparse.Namespace) -> int:
    engine = replay(_load_log(args.log))
    _emit({"records": len(engine.records), "head": engine.log_head, "state_digest": engine.digest(),
           "final_tick": engine.clock, "complete": engine.state.completed})
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    verdict = verify_log(_load_log(args.log))
    print(str(verdict))
    return EXIT_OK if verdict.ok else EXIT_INTEGRITY


def cmd_metrics(args: argparse.Namespace) -> int:
    records = _load_log(args.log)
    engine = replay(records)
    out = {
        "capture": metrics.capture_coalition_size(engine.state).to_dict(),
        "gini": metrics.power_gini(engine.state),
        "citation": metrics.citation_completeness(engine.state),
        "challenges": metrics.challenge_summary(engine.state),
    }
    try:
        out["verdicts"] = metrics.score_requirements(engine.state, records).verdicts()
    except IncompleteScenario:
        out["verdicts"] = None
    _emit(out)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    from app.report import build_report, render

    report = build_report(_load_log(args.log))
    text = render(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.pdf:
        from app.pdf_generator import pdf_generator

        if not pdf_generator.generate_report_pdf(report, args.pdf):
            return EXIT_USAGE
    return EXIT_OK


def cmd_archetypes(args: argparse.Namespace) -> int:
    from app.scenario import export_archetype, list_archetypes

    if args.action == "list":
        for name in list_archetypes():
            print(name)
        return EXIT_OK
    if not args.name:
        print("archetypes export: нужно имя архетипа", file=sys.stderr)
        return EXIT_USAGE
    print(export_archetype(args.name, args.out))
    return EXIT_OK


def _quorums(raw: str) -> List[str]:
    values = [v.strip() for v in raw.split(",") if v.strip()]
    for v in values:
        try:
            canonical.parse_fraction(v)
        except (ValueError, ZeroDivisionError):
            raise argparse.ArgumentTypeError(f"не доля: {v}")
    if not values:
        raise argparse.ArgumentTypeError("пустой список кворумов")
    return values


def cmd_sweep(args: argparse.Namespace) -> int:
    from app.runner import sweep
    from app.scenario import load_scenario

    _emit(sweep(load_scenario(args.scenario), args.quorums))
    return EXIT_OK


# ============================================================
#                           main
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hc", description="Cooperative governance engine and scenario simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="Run a scenario file or a bundled archetype")
    r.add_argument("scenario")
    r.add_argument("--out", default=None, help="Output directory (default: HC_OUT_DIR)")
    r.add_argument("--metrics-file", default=None, help="Write Prometheus textfile with run counters")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replay", help="Rebuild state from a log and print its digest")
    rp.add_argument("log")
    rp.set_defaults(func=cmd_replay)

    v = sub.add_parser("verify", help="Check the hash chain (exit 0 iff Ok)")
    v.add_argument("log")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("metrics", help="Capture coalition, Gini and verdicts of a log")
    m.add_argument("log")
    m.set_defaults(func=cmd_metrics)

    rep = sub.add_parser("report", help="Regenerate the canonical report from a log")
    rep.add_argument("log")
    rep.add_argument("--out", default="", help="Write report JSON here instead of stdout")
    rep.add_argument("--pdf", default="", help="Also render a PDF to this path")
    rep.set_defaults(func=cmd_report)

    a = sub.add_parser("archetypes", help="List or export bundled archetype scenarios")
    a.add_argument("action", choices=["list", "export"])
    a.add_argument("name", nargs="?", default=None)
    a.add_argument("--out", default=None, help="Destination file or directory")
    a.set_defaults(func=cmd_archetypes)

    s = sub.add_parser("sweep", help="Re-run a scenario over several quorum_major values")
    s.add_argument("scenario")
    s.add_argument("--quorums", type=_quorums, required=True, help="Comma-separated fractions, e.g. 1/2,2/3")
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IntegrityError as e:
        logger.error("Целостность нарушена: %s", e)
        print(f"integrity: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except UnknownReference as e:
        if args.cmd == "archetypes":
            print(str(e), file=sys.stderr)
            return EXIT_USAGE
        print(f"parse: {e}", file=sys.stderr)
        return EXIT_PARSE
    except HarnessError as e:
        print(f"parse: {e}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
