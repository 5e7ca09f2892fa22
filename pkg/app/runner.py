# app/runner.py
"""
Детерминированный прогон сценария: genesis → события скрипта по тикам →
дренаж (закрытие открытых предложений и очереди фонда) → scenario_end →
журнал и отчёт на диск.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from app import config, telemetry
from app.audit_log import write_log
from app.canonical import format_ratio, parse_fraction
from app.engine import Engine
from app.errors import FatalConfig, ValidationFailed
from app.models import DirectorStatus, ProposalState, ResolutionState, TERMINAL_PROPOSAL_STATES
from app.report import build_report_from_engine, expectations_ok, render
from app.scenario import Scenario

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    scenario: str
    engine: Engine
    report: Dict[str, Any]
    log_path: Optional[str] = None
    report_path: Optional[str] = None

    @property
    def ok(self) -> bool:
        return expectations_ok(self.report)


def start(scenario: Scenario) -> Engine:
    engine = Engine()
    try:
        engine.append_event({"event": "genesis", "config": scenario.config, "meta": scenario.meta()})
    except ValidationFailed as e:
        raise FatalConfig(f"{scenario.name}: genesis не прошёл проверку: {e.reason}") from e
    return engine


def apply(engine: Engine, event: Dict[str, Any]) -> bool:
    """Применить событие; отказ фиксируется в журнале, прогон продолжается."""
    try:
        engine.append_event(event)
        return True
    except ValidationFailed as err:
        engine.record_rejection(event, err)
        return False


def play_script(engine: Engine, script: Sequence[Dict[str, Any]]) -> None:
    for item in script:
        at = item["tick"]
        if at > engine.clock:
            engine.advance_time(at - engine.clock)
        event = {k: v for k, v in item.items() if k != "tick"}
        apply(engine, event)


# ============================================================
#                           дренаж
# ============================================================

def pending(engine: Engine) -> bool:
    s = engine.state
    live = any(p.state not in TERMINAL_PROPOSAL_STATES for p in s.proposals.values())
    return live or bool(s.foundation.queue)


def next_deadline(engine: Engine) -> Optional[int]:
    s = engine.state
    now = s.clock
    marks: List[int] = []
    for p in s.proposals.values():
        if p.state == ProposalState.OPEN:
            marks.append(p.opened_at + s.params.voting_window)
        elif p.state == ProposalState.TIMELOCKED and p.timelock_ends is not None:
            marks.append(p.timelock_ends)
        elif p.state == ProposalState.CHALLENGEABLE and p.challenge_ends is not None:
            marks.append(p.challenge_ends)
    f = s.foundation
    breached = {b.ref for b in f.breaches}
    for rid in f.queue:
        res = f.resolutions[rid]
        if res.state == ResolutionState.PENDING and rid not in breached:
            marks.append(res.enqueued_at + f.max_execution_delay + 1)
    future = [m for m in marks if m > now]
    return min(future) if future else None


def _executor(engine: Engine, rid: str) -> Optional[str]:
    f = engine.state.foundation
    res = f.resolutions[rid]
    d = f.director(res.assigned_director) if res.assigned_director else None
    if d is not None and d.status == DirectorStatus.SERVING:
        return d.actor
    serving = f.serving()
    return serving[0].actor if serving else None


def execute_queue(engine: Engine) -> int:
    """Исполняет головы очереди фонда по порядку; останавливается на первом отказе события."""
    done = 0
    f = engine.state.foundation
    while f.queue:
        rid = f.queue[0]
        director = _executor(engine, rid)
        if director is None:
            break
        if not apply(engine, {"event": "execute_resolution", "resolution": rid, "director": director}):
            break
        done += 1
        f = engine.state.foundation
    return done


def drain(engine: Engine, max_ticks: Optional[int] = None,
          run_queue: Optional[bool] = None) -> Tuple[bool, int]:
    """-> (quiescent, ticks). Голосов в дренаже нет: открытые предложения закрываются по окну."""
    max_ticks = config.HC_DRAIN_MAX_TICKS if max_ticks is None else max_ticks
    run_queue = config.HC_DRAIN_EXECUTE_QUEUE if run_queue is None else run_queue
    begin = engine.clock
    while True:
        if run_queue:
            execute_queue(engine)
        if not pending(engine):
            return True, engine.clock - begin
        deadline = next_deadline(engine)
        budget = max_ticks - (engine.clock - begin)
        if deadline is None or budget <= 0:
            logger.warning("Дренаж не достиг покоя за %d тиков", engine.clock - begin)
            return False, engine.clock - begin
        engine.advance_time(min(deadline - engine.clock, budget))


# ============================================================
#                           прогон
# ============================================================

def execute(scenario: Scenario) -> RunResult:
    """Прогон в памяти, без записи на диск."""
    engine = start(scenario)
    play_script(engine, scenario.script)
    quiescent, ticks = drain(engine)
    engine.append_event({"event": "scenario_end", "quiescent": quiescent, "drain_ticks": ticks})
    report = build_report_from_engine(engine)
    logger.info("Сценарий %s: %d записей, вердикты %s", scenario.name, len(engine.records),
                (report.get("scorecard") or {}).get("verdicts"))
    return RunResult(scenario=scenario.name, engine=engine, report=report)


def output_paths(out_dir: str, name: str) -> Tuple[str, str]:
    return os.path.join(out_dir, f"{name}.log"), os.path.join(out_dir, f"{name}.report.json")


def run(scenario: Scenario, out_dir: Optional[str] = None, metrics_file: Optional[str] = None) -> RunResult:
    out_dir = out_dir or config.HC_OUT_DIR
    result = execute(scenario)
    os.makedirs(out_dir, exist_ok=True)
    log_path, report_path = output_paths(out_dir, scenario.name)
    write_log(result.engine.records, log_path)
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render(result.report) + "\n")
    result.log_path, result.report_path = log_path, report_path

    metrics_file = metrics_file or config.HC_METRICS_FILE
    if metrics_file:
        telemetry.export_textfile(metrics_file)
    if not result.ok:
        failed = [r["expectation"] for r in result.report["expectations"] if not r["ok"]]
        logger.warning("Сценарий %s: не выполнены ожидания %s", scenario.name, failed)
    return result


def sweep(scenario: Scenario, quorums: Sequence[Any]) -> List[Dict[str, Any]]:
    """Повторный прогон с разными quorum_major: размер коалиции захвата и вердикты."""
    rows = []
    for q in quorums:
        value = parse_fraction(q)
        variant = scenario.with_params(quorum_major=f"{value.numerator}/{value.denominator}")
        try:
            result = execute(variant)
        except FatalConfig as e:
            rows.append({"quorum_major": format_ratio(float(value)), "error": str(e)})
            continue
        card = result.report.get("scorecard") or {}
        rows.append({
            "quorum_major": format_ratio(float(value)),
            "capture_coalition_size": result.report["metrics"]["capture"]["size"],
            "verdicts": card.get("verdicts"),
            "expectations_ok": result.ok,
        })
    return rows
