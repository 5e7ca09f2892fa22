# app/report.py
"""
Отчёт прогона строится из одного только журнала: повтор → состояние →
метрики → карта требований → проверка ожиданий из genesis. Каноническая
JSON-форма воспроизводится побайтно.
"""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional

from app import canonical, metrics, tokens, workstreams
from app.audit_log import EventRecord, verify_log
from app.canonical import parse_fraction
from app.engine import Engine, replay
from app.errors import IncompleteScenario
from app.models import EngineState

logger = logging.getLogger(__name__)

VERDICT_SCALE_NOTE = (
    "Met/Partial/Unmet is an analogy to qualitative Direct/Partial/Gap coverage coding, "
    "not a reproduction of it"
)
# Что симулятор не может оценить: зависит от реального принятия и вне модели
NOT_SIMULABLE = {
    "R2": ["timeliness of human access to published data"],
    "R3": ["market value of rewards"],
    "R5": ["off-engine coordination among holders"],
}


def _proposals(state: EngineState) -> List[Dict[str, Any]]:
    out = []
    for p in state.proposals.values():
        out.append({
            "id": p.id,
            "kind": p.kind,
            "action": p.action.get("type"),
            "proposer": p.proposer,
            "state": p.state,
            "mode": p.tally.mode,
            "tally": {
                "for": p.tally.for_power,
                "against": p.tally.against_power,
                "abstain": p.tally.abstain_power,
                "eligible": p.tally.eligible_power,
            },
            "tags": p.jurisdiction_tags,
            "opened_at": p.opened_at,
            "passed_at": p.passed_at,
            "executed_at": p.executed_at,
            "via_committee": p.via_committee,
            "challenge_of": p.challenge_of,
            "challenges": p.challenges,
            "resolution": p.resolution,
            "outcome": p.outcome,
            "cited_constraint": p.cited_constraint,
            "origin": p.origin,
        })
    return out


def _foundation(state: EngineState) -> Dict[str, Any]:
    f = state.foundation
    return {
        "configured": f.configured,
        "remit": f.remit,
        "directors": f.directors,
        "resolutions": [
            {
                "id": r.id, "source_proposal": r.source_proposal, "action": r.action.get("type"),
                "state": r.state, "assigned_director": r.assigned_director, "origin": r.origin,
                "enqueued_at": r.enqueued_at, "closed_at": r.closed_at, "cited_constraint": r.cited_constraint,
            }
            for r in f.resolutions.values()
        ],
        "executed": f.executed,
        "refusals": f.refusals,
        "effects": f.effects,
        "breaches": f.breaches,
    }


def _rejections(records: List[EventRecord]) -> List[Dict[str, Any]]:
    out = []
    for rec in records:
        ev = rec.event()
        if ev.get("event") == "rejection":
            out.append({"index": rec.index, "tick": rec.tick, "event": ev.get("rejected"), "code": ev.get("code")})
    return out


def _scenario_end(records: List[EventRecord]) -> Dict[str, Any]:
    for rec in reversed(records):
        ev = rec.event()
        if ev.get("event") == "scenario_end":
            return {"quiescent": ev.get("quiescent", True), "drain_ticks": ev.get("drain_ticks", 0)}
    return {}


# ============================================================
#                          ожидания
# ============================================================

def _actual(exp: Dict[str, Any], state: EngineState, core: Dict[str, Any]) -> Any:
    kind = exp.get("kind")
    if kind == "proposal_state":
        p = state.proposals.get(exp.get("proposal"))
        return p.state.value if p else None
    if kind == "resolution_state":
        r = state.foundation.resolutions.get(exp.get("resolution"))
        return r.state.value if r else None
    if kind == "task_state":
        ws = state.workstreams.get(exp.get("workstream"))
        t = ws.tasks.get(exp.get("task")) if ws else None
        return t.state.value if t else None
    if kind == "verdict":
        card = core.get("scorecard")
        return card["verdicts"].get(exp.get("requirement")) if card else None
    if kind == "metric":
        name = exp.get("metric")
        values = {
            "capture_coalition_size": core["metrics"]["capture"]["size"],
            "gini": core["metrics"]["gini"],
            "rejections": len(core["rejections"]),
            "breaches": len(state.foundation.breaches),
            "overrides": len(state.oracle.overrides),
            "refusals": len(state.foundation.refusals),
            "treasury": state.treasury.balance,
        }
        return values.get(name)
    return None


def _check(exp: Dict[str, Any], actual: Any) -> bool:
    if actual is None and "equals" not in exp:
        return False
    if "equals" in exp and actual != exp["equals"]:
        return False
    if "in" in exp and actual not in exp["in"]:
        return False
    try:
        if "min" in exp and parse_fraction(actual) < parse_fraction(exp["min"]):
            return False
        if "max" in exp and parse_fraction(actual) > parse_fraction(exp["max"]):
            return False
    except (ValueError, TypeError, ZeroDivisionError):
        return False
    return True


def evaluate_expectations(state: EngineState, core: Dict[str, Any]) -> List[Dict[str, Any]]:
    results = []
    for exp in state.meta.get("expectations") or []:
        actual = _actual(exp, state, core)
        results.append({"expectation": exp, "actual": actual, "ok": _check(exp, actual)})
    return results


# ============================================================
#                          сборка
# ============================================================

def build_report_from_engine(engine: Engine) -> Dict[str, Any]:
    state = engine.state
    records = engine.records
    capture = metrics.capture_coalition_size(state)
    g = metrics.power_gini(state)
    try:
        card = metrics.score_requirements(state, records)
        scorecard: Optional[Dict[str, Any]] = {**canonical.to_plain(card), "verdicts": card.verdicts()}
    except IncompleteScenario:
        scorecard = None

    core: Dict[str, Any] = {
        "scenario": {k: state.meta.get(k) for k in ("name", "description")},
        "complete": state.completed,
        "drain": _scenario_end(records),
        "log": {"records": len(records), "head": state.log_head, "verify": str(verify_log(records))},
        "state_digest": engine.digest(),
        "final_tick": state.clock,
        "params": state.params,
        "policy": state.policy,
        "treasury": {**canonical.to_plain(state.treasury), "conservation_ok": tokens.conservation_ok(state)},
        "proposals": _proposals(state),
        "foundation": _foundation(state),
        "oracle": {"readings": state.oracle.readings, "overrides": state.oracle.overrides,
                   "active_set": state.oracle.active_set},
        "jurisdiction": {"modules": state.jurisdictions, "findings": state.compliance_findings},
        "workstreams": workstreams.task_summary(state),
        "rewards": state.rewards,
        "clawbacks": state.clawbacks,
        "upgrades": state.upgrades,
        "rejections": _rejections(records),
        "metrics": {"capture": capture.to_dict(), "gini": g},
        "scorecard": scorecard,
        "verdict_scale": VERDICT_SCALE_NOTE,
        "not_simulable": NOT_SIMULABLE,
    }
    core = canonical.to_plain(core)
    core["expectations"] = canonical.to_plain(evaluate_expectations(state, core))
    return core


def build_report(records: List[EventRecord]) -> Dict[str, Any]:
    return build_report_from_engine(replay(records))


def expectations_ok(report: Dict[str, Any]) -> bool:
    return all(r["ok"] for r in report.get("expectations") or [])


def render(report: Dict[str, Any]) -> str:
    return canonical.dumps(report)
