# app/metrics.py
"""
Вычислимые показатели требований R1–R5: коалиция захвата, Джини силы
голоса, прослеживаемость решений, связь наград и вклада, кодо-подчинённость.

Все числа в отчёте либо точные (Fraction, целые), либо строки с
фиксированным числом знаков, чтобы отчёт воспроизводился побайтно.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app import config
from app.audit_log import EventRecord, verify_log
from app.canonical import format_ratio, parse_fraction
from app.errors import IncompleteScenario
from app.models import (
    EngineState,
    ProposalState,
    ResolutionState,
    TaskState,
    VoteMode,
)

logger = logging.getLogger(__name__)

MET = "Met"
PARTIAL = "Partial"
UNMET = "Unmet"

# События, не несущие управленческого содержания
_VACUOUS_EVENTS = {"genesis", "advance_time", "scenario_end"}


# ============================================================
#                    коалиция захвата
# ============================================================

@dataclass
class CaptureResult:
    size: Optional[int]  # None: Major-предложение не может пройти ни при какой коалиции
    exact: bool
    eligible_power: int

    def to_dict(self) -> Dict[str, Any]:
        return {"size": self.size, "mode": "exact" if self.exact else "approximate",
                "eligible_power": self.eligible_power}


def member_powers(state: EngineState) -> List[int]:
    """Собственная сила TokenWeighted активных участников (без делегирования)."""
    from app.governance import own_power

    return [own_power(state, a, VoteMode.TOKEN_WEIGHTED) for a in sorted(state.members) if state.members[a].active]


def _passes(total: int, eligible: int, quorum: Fraction) -> bool:
    # Остальные не голосуют; вся коалиция голосует For, доля For = 1
    return total > 0 and Fraction(total, eligible) >= quorum


def greedy_coalition(powers: Sequence[int], quorum: Fraction) -> Optional[int]:
    """Верхняя оценка: крупнейшие держатели по убыванию, пока не наберётся кворум."""
    eligible = int(sum(powers))
    if eligible <= 0:
        return None
    ordered = np.sort(np.asarray(powers, dtype=np.int64))[::-1]
    cum = np.cumsum(ordered)
    # Суммы целые: Σ ≥ q·E эквивалентно Σ ≥ ⌈q·E⌉
    target = quorum * eligible
    needed = max(1, -(-target.numerator // target.denominator))
    k = int(np.searchsorted(cum, needed)) + 1
    return k if k <= len(ordered) else None


def exact_coalition(powers: Sequence[int], quorum: Fraction) -> Optional[int]:
    """Перебор подмножеств по возрастанию размера с отсечением по сумме k крупнейших."""
    eligible = int(sum(powers))
    if eligible <= 0:
        return None
    ordered = sorted(powers, reverse=True)
    for k in range(1, len(ordered) + 1):
        if not _passes(sum(ordered[:k]), eligible, quorum):
            continue
        for combo in itertools.combinations(ordered, k):
            if _passes(sum(combo), eligible, quorum):
                return k
    return None


def capture_coalition_size(state: EngineState, exact_max: Optional[int] = None) -> CaptureResult:
    exact_max = config.HC_EXACT_COALITION_MAX if exact_max is None else exact_max
    powers = member_powers(state)
    eligible = sum(powers)
    params = state.params
    if params.supermajority_major >= 1:
        # Доля For строго больше 1 недостижима
        return CaptureResult(size=None, exact=True, eligible_power=eligible)
    if len(powers) <= exact_max:
        return CaptureResult(exact_coalition(powers, params.quorum_major), True, eligible)
    return CaptureResult(greedy_coalition(powers, params.quorum_major), False, eligible)


# ============================================================
#                          Джини
# ============================================================

def gini(values: Sequence[int]) -> Fraction:
    """Точный коэффициент Джини: Σ(2i − n − 1)·x_i / (n·Σx) по возрастанию."""
    n = len(values)
    if n == 0:
        return Fraction(0)
    xs = np.sort(np.asarray(values, dtype=np.int64))
    total = int(xs.sum())
    if total == 0:
        return Fraction(0)
    coef = 2 * np.arange(1, n + 1, dtype=np.int64) - n - 1
    return Fraction(int((coef * xs).sum()), n * total)


def power_gini(state: EngineState) -> Fraction:
    return gini(member_powers(state))


# ============================================================
#                      карта требований
# ============================================================

@dataclass
class RequirementScore:
    verdict: str
    metrics: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)


@dataclass
class Scorecard:
    r1: RequirementScore
    r2: RequirementScore
    r3: RequirementScore
    r4: RequirementScore
    r5: RequirementScore
    degenerate: bool = False

    def verdicts(self) -> Dict[str, str]:
        return {f"R{i}": getattr(self, f"r{i}").verdict for i in range(1, 6)}


def _score_r1(state: EngineState) -> RequirementScore:
    tasks = [t for ws in state.workstreams.values() for t in ws.tasks.values()]
    terminal = [t for t in tasks if t.state in (TaskState.DONE, TaskState.CANCELLED)]
    bounded = all(t.level <= 3 and (t.level < 3 or t.resolution_proposal) for t in tasks)
    m = {
        "tasks": len(tasks),
        "terminal": len(terminal),
        "terminal_ratio": Fraction(len(terminal), len(tasks)) if tasks else None,
        "escalation_bounded": bounded,
        "initiator_led": bool(state.params.role_admins),
    }
    notes = []
    if not tasks:
        verdict = PARTIAL
        notes.append("no tasks scripted")
    elif not bounded:
        verdict = UNMET
    elif len(terminal) == len(tasks):
        verdict = MET
    elif 2 * len(terminal) >= len(tasks):
        verdict = PARTIAL
    else:
        verdict = UNMET
    if verdict == MET and state.params.role_admins:
        verdict = PARTIAL
        notes.append("roles granted directly by role admins")
    return RequirementScore(verdict, m, notes)


def citation_completeness(state: EngineState) -> Dict[str, Any]:
    """Каждое решение должно вести к голосам, решению комитета, аттестациям или резолюции."""
    items = 0
    traced = 0
    for p in state.proposals.values():
        if p.state not in (ProposalState.EXECUTED_ON_CHAIN, ProposalState.ENQUEUED):
            continue
        items += 1
        if (p.via_committee and p.approvals) or p.tally.for_power > 0:
            traced += 1
    f = state.foundation
    for res in f.resolutions.values():
        items += 1
        src = state.proposals.get(res.source_proposal) if res.source_proposal else None
        from_proposal = src is not None and src.resolution == res.id
        from_reporting = res.origin == "reporting" and any(
            c.resolution == res.id for c in state.compliance_findings)
        if from_proposal or from_reporting:
            traced += 1
    for e in f.effects:
        items += 1
        if e.resolution in f.resolutions and f.resolutions[e.resolution].state == ResolutionState.EXECUTED:
            traced += 1
    for r in f.refusals:
        items += 1
        if r.cited_constraint:
            traced += 1
    for o in state.oracle.overrides:
        items += 1
        p = state.proposals.get(o.proposal)
        if p is not None and p.state == ProposalState.EXECUTED_ON_CHAIN:
            traced += 1
    for r in state.oracle.readings.values():
        if r.status == "Reading":
            items += 1
            if r.submissions >= state.oracle.m_min:
                traced += 1
    return {"items": items, "traced": traced,
            "completeness": Fraction(traced, items) if items else Fraction(1)}


def _score_r2(state: EngineState, records: List[EventRecord]) -> RequirementScore:
    verdict_log = verify_log(records)
    chain = citation_completeness(state)
    m = {"verify_log": str(verdict_log), **chain}
    if not verdict_log.ok:
        return RequirementScore(UNMET, m)
    return RequirementScore(MET if chain["completeness"] == 1 else PARTIAL, m)


def reward_correlation(state: EngineState) -> Optional[float]:
    actors = sorted(a for a in state.members if state.members[a].active)
    if len(actors) < 2:
        return None
    done = {a: 0 for a in actors}
    for ws in state.workstreams.values():
        for t in ws.tasks.values():
            if t.state == TaskState.DONE and t.assignee in done:
                done[t.assignee] += 1
    paid = {a: 0 for a in actors}
    for r in state.rewards:
        if r["kind"] in ("TaskReward", "Grant") and r["to"] in paid:
            paid[r["to"]] += r["amount"]
    x = np.array([done[a] for a in actors], dtype=float)
    y = np.array([paid[a] for a in actors], dtype=float)
    if x.std() == 0 or y.std() == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def _score_r3(state: EngineState) -> RequirementScore:
    from app.tokens import conservation_ok

    corr = reward_correlation(state)
    clawback_ok = all(c["vested_before"] == c["vested_after"] for c in state.clawbacks)
    conserved = conservation_ok(state)
    m = {
        "reward_correlation": format_ratio(corr) if corr is not None else None,
        "correlation_sign": None if corr is None else (1 if corr > 0 else (-1 if corr < 0 else 0)),
        "clawbacks": len(state.clawbacks),
        "clawback_bound_ok": clawback_ok,
        "conservation_ok": conserved,
        "task_rewards_total": sum(r["amount"] for r in state.rewards if r["kind"] == "TaskReward"),
    }
    if not (clawback_ok and conserved) or (corr is not None and corr <= 0):
        return RequirementScore(UNMET, m)
    if corr is None:
        return RequirementScore(PARTIAL, m, ["reward/contribution correlation undefined"])
    return RequirementScore(MET, m)


def deference_totality(state: EngineState) -> Dict[str, Any]:
    f = state.foundation
    breached = {(b.kind, b.ref) for b in f.breaches}
    silent_pending = [
        rid for rid in f.queue
        if f.resolutions[rid].state == ResolutionState.PENDING and ("delay", rid) not in breached
    ]
    unbreached_invalid = [
        r.resolution for r in f.refusals if not r.valid and ("invalid_citation", r.resolution) not in breached
    ]
    unsourced = [e.id for e in f.effects if e.resolution is None and ("unsourced_effect", e.id) not in breached]
    return {
        "pending": len(f.queue),
        "silent_pending": silent_pending,
        "unbreached_invalid_refusals": unbreached_invalid,
        "undetected_unsourced_effects": unsourced,
        "total": not (silent_pending or unbreached_invalid or unsourced),
    }


def _score_r4(state: EngineState) -> RequirementScore:
    f = state.foundation
    unresolved = [c.id for c in state.compliance_findings if c.resolved_at is None]
    m: Dict[str, Any] = {
        "foundation_configured": f.configured,
        "unresolved_compliance_findings": len(unresolved),
        "breaches": len(f.breaches),
        "unratified_directors": sorted(d.actor for d in f.serving() if d.ratified_at is None),
    }
    if not f.configured:
        return RequirementScore(UNMET, m, ["no code-deferent executor configured"])
    totality = deference_totality(state)
    m["totality"] = totality["total"]
    m["pending"] = totality["pending"]
    if not totality["total"]:
        return RequirementScore(UNMET, m)
    if unresolved or f.breaches:
        return RequirementScore(PARTIAL, m)
    return RequirementScore(MET, m)


def challenge_summary(state: EngineState) -> Dict[str, int]:
    challenges = [p for p in state.proposals.values() if p.challenge_of is not None]
    resolved = [p for p in challenges if p.state != ProposalState.OPEN]
    return {"filed": len(challenges), "resolved": len(resolved),
            "upheld": sum(1 for p in challenges if p.state == ProposalState.EXECUTED_ON_CHAIN)}


def _score_r5(state: EngineState, capture: CaptureResult, g: Fraction) -> RequirementScore:
    th = state.meta.get("thresholds") or {}
    coalition_min = int(th.get("coalition_min", 3))
    gini_max = parse_fraction(th.get("gini_max", "4/5"))
    ch = challenge_summary(state)
    m = {
        "capture_coalition_size": capture.size,
        "capture_mode": "exact" if capture.exact else "approximate",
        "gini": g,
        "coalition_min": coalition_min,
        "gini_max": gini_max,
        "challenges_enabled": state.params.challenges_enabled,
        "challenges": ch,
    }
    capture_ok = capture.size is None or capture.size >= coalition_min
    if not capture_ok or not state.params.challenges_enabled:
        return RequirementScore(UNMET, m)
    if g > gini_max or ch["resolved"] < ch["filed"]:
        return RequirementScore(PARTIAL, m)
    return RequirementScore(MET, m)


def is_degenerate(records: List[EventRecord]) -> bool:
    return all(r.event().get("event") in _VACUOUS_EVENTS for r in records)


def score_requirements(state: EngineState, records: List[EventRecord]) -> Scorecard:
    if not state.completed:
        raise IncompleteScenario("нет scenario_end: оценка требований недоступна")
    capture = capture_coalition_size(state)
    card = Scorecard(
        r1=_score_r1(state),
        r2=_score_r2(state, records),
        r3=_score_r3(state),
        r4=_score_r4(state),
        r5=_score_r5(state, capture, power_gini(state)),
    )
    if is_degenerate(records):
        card.degenerate = True
        for i in range(1, 6):
            score = getattr(card, f"r{i}")
            score.verdict = PARTIAL
            score.notes.append("degenerate: no governance activity")
    logger.info("Оценка требований: %s", card.verdicts())
    return card
