# app/foundation.py
"""
Кодо-подчинённый фонд: FIFO-очередь резолюций, исполнение в пределах мандата
и активных юрисдикционных ограничений либо отказ с указанием ограничения,
совет директоров и поиск нарушений с авто-предложением об отстранении.
"""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional

from app import actions, jurisdiction, telemetry, tokens
from app.errors import (
    NoFoundation,
    NotADirector,
    NotExecutable,
    NotFoundationBound,
    NotQueueHead,
    ValidationFailed,
)
from app.models import (
    SYSTEM_ACTOR,
    BreachFinding,
    Director,
    DirectorStatus,
    EngineState,
    ExecutionRecord,
    FoundationEffect,
    Kind,
    ProposalState,
    RefusalRecord,
    Remit,
    Resolution,
    ResolutionState,
)

logger = logging.getLogger(__name__)

# Автоматические основания отказа, не связанные с модулями
REMIT_CITATION = "REMIT"
TREASURY_CITATION = "TREASURY"
SYSTEM_CITATIONS = {REMIT_CITATION, TREASURY_CITATION}

BREACH_DELAY = "delay"
BREACH_INVALID_CITATION = "invalid_citation"
BREACH_UNSOURCED_EFFECT = "unsourced_effect"


def configure(state: EngineState, raw: Optional[Dict[str, Any]]) -> None:
    """Фонд из genesis; None: фонда нет (архетип центрального оркестратора)."""
    f = state.foundation
    if raw is None:
        f.configured = False
        return
    if not isinstance(raw, dict):
        raise ValidationFailed("foundation должен быть объектом или null")
    try:
        remit = {Remit(r) for r in raw.get("remit", [r.value for r in Remit])}
    except ValueError:
        raise ValidationFailed(f"неизвестная категория мандата: {raw.get('remit')!r}")
    delay = raw.get("max_execution_delay", 30)
    if not isinstance(delay, int) or isinstance(delay, bool) or delay < 0:
        raise ValidationFailed("max_execution_delay должен быть целым ≥ 0")
    f.configured = True
    f.remit = remit
    f.max_execution_delay = delay


def add_genesis_director(state: EngineState, actor: str) -> None:
    if not isinstance(actor, str) or not actor:
        raise ValidationFailed(f"некорректный директор: {actor!r}")
    if state.foundation.director(actor) is not None:
        raise ValidationFailed(f"директор {actor} указан дважды")
    # До ратификации директор считается временным
    state.foundation.directors.append(Director(actor=actor, ratified_at=None, appointed_at=state.clock))


# ============================================================
#                     совет директоров
# ============================================================

def _require_foundation(state: EngineState) -> None:
    if not state.foundation.configured:
        raise NoFoundation("фонд не сконфигурирован")


def elect_director(state: EngineState, actor: str) -> Director:
    _require_foundation(state)
    f = state.foundation
    existing = f.director(actor)
    if existing is not None and existing.status == DirectorStatus.SERVING:
        raise ValidationFailed(f"{actor} уже директор")
    if existing is not None:
        f.directors.remove(existing)
    d = Director(actor=actor, ratified_at=state.clock, appointed_at=state.clock)
    f.directors.append(d)
    logger.info("Директор %s избран (tick=%d)", actor, state.clock)
    return d


def ratify_director(state: EngineState, actor: str) -> None:
    _require_foundation(state)
    d = state.foundation.director(actor)
    if d is None or d.status != DirectorStatus.SERVING:
        raise NotADirector(f"{actor} не действующий директор")
    if d.ratified_at is not None:
        raise ValidationFailed(f"{actor} уже ратифицирован на тике {d.ratified_at}")
    d.ratified_at = state.clock
    logger.info("Директор %s ратифицирован", actor)


def remove_director(state: EngineState, actor: str, cause: str) -> None:
    _require_foundation(state)
    f = state.foundation
    d = f.director(actor)
    if d is None or d.status != DirectorStatus.SERVING:
        raise NotADirector(f"{actor} не действующий директор")
    remaining = [x for x in f.serving() if x.actor != actor]
    if not remaining and f.queue:
        raise ValidationFailed("совет не может опустеть при непустой очереди")
    d.status = DirectorStatus.REMOVED
    d.removed_at = state.clock
    for rid in f.queue:
        res = f.resolutions[rid]
        if res.assigned_director == actor:
            res.assigned_director = _next_assignee(state)
    logger.info("Директор %s отстранён: %s", actor, cause)


def _next_assignee(state: EngineState) -> Optional[str]:
    f = state.foundation
    serving = f.serving()
    if not serving:
        return None
    d = serving[f.next_assignee % len(serving)]
    f.next_assignee += 1
    return d.actor


# ============================================================
#                       очередь резолюций
# ============================================================

def _enqueue(state: EngineState, action: Dict[str, Any], source: Optional[str], origin: str) -> str:
    res = Resolution(
        id=state.next_id("R"),
        source_proposal=source,
        action=dict(action),
        enqueued_at=state.clock,
        assigned_director=_next_assignee(state),
        origin=origin,
    )
    state.foundation.resolutions[res.id] = res
    state.foundation.queue.append(res.id)
    logger.info("Резолюция %s поставлена в очередь (%s, источник %s, исполнитель %s)",
                res.id, action.get("type"), source, res.assigned_director)
    return res.id


def enqueue_resolution(state: EngineState, pid: str) -> str:
    p = state.proposals.get(pid)
    if p is None or p.state != ProposalState.EXECUTABLE:
        raise NotExecutable(f"{pid} не в состоянии Executable")
    if not actions.is_foundation_bound(state, p.action):
        raise NotFoundationBound(f"{p.action.get('type')} исполняется on-chain")
    _require_foundation(state)
    return _enqueue(state, p.action, pid, "proposal")


def enqueue_internal(state: EngineState, action: Dict[str, Any], source_proposal: Optional[str],
                     origin: str) -> str:
    """Резолюция по внутреннему триггеру движка (например, просроченная отчётность)."""
    _require_foundation(state)
    return _enqueue(state, action, source_proposal, origin)


def _tags_of(state: EngineState, res: Resolution) -> set:
    p = state.proposals.get(res.source_proposal) if res.source_proposal else None
    return set(p.jurisdiction_tags) if p else set()


def _refuse(state: EngineState, res: Resolution, director: str, cited: str, automatic: bool, valid: bool) -> str:
    f = state.foundation
    res.state = ResolutionState.REFUSED
    res.closed_at = state.clock
    res.cited_constraint = cited
    f.refusals.append(RefusalRecord(
        resolution=res.id, cited_constraint=cited, director=director,
        tick=state.clock, automatic=automatic, valid=valid,
    ))
    f.queue.pop(0)
    telemetry.inc(telemetry.FOUNDATION_OUTCOMES, "Refused")
    log = logger.info if valid else logger.warning
    log("Резолюция %s отклонена директором %s: %s (%s)", res.id, director, cited,
        "авто" if automatic else ("вручную" if valid else "недействительная ссылка"))
    return "Refused"


def _apply_effect(state: EngineState, res: Resolution) -> str:
    a = res.action
    t = a["type"]
    if t == "TreasuryTransfer":
        tokens.debit_external(state, a["amount"])
        return f"external transfer {a['amount']} to {a['to']}"
    if t == "Compliance":
        jurisdiction.record_report(state, a["module_id"])
        return f"compliance report {a['module_id']} {a['report_hash']}"
    if t == "Custody":
        return f"custody {a['asset']}" + (f" {a['amount']}" if a.get("amount") is not None else "")
    if t == "Licensing":
        return f"license {a['ip_ref']} to {a['licensee']}"
    if t == "Contracting":
        return f"contract with {a['counterparty']} {a['terms_hash']}"
    raise ValidationFailed(f"{t} не исполняется фондом")


def execute_resolution(state: EngineState, rid: str, director: str, cite: Optional[str] = None) -> str:
    """
    Исполнить голову очереди. Отказ возможен только со ссылкой на ограничение:
    автоматически (вне мандата, запрет модуля, пустая казна) или вручную через cite.
    Ручная ссылка на неактивное ограничение записывается, но считается нарушением.
    """
    _require_foundation(state)
    f = state.foundation
    d = f.director(director)
    if d is None or d.status != DirectorStatus.SERVING:
        raise NotADirector(f"{director} не действующий директор")
    if not f.queue or f.queue[0] != rid:
        raise NotQueueHead(f"{rid} не в голове очереди (голова: {f.queue[0] if f.queue else 'пусто'})")
    res = f.resolutions[rid]

    if cite is not None:
        if not isinstance(cite, str) or not cite:
            raise ValidationFailed("cite должен быть идентификатором ограничения")
        return _refuse(state, res, director, cite, automatic=False,
                       valid=jurisdiction.constraint_active(state, cite))

    remit = actions.remit_of(res.action)
    if remit is None or remit not in f.remit:
        return _refuse(state, res, director, REMIT_CITATION, automatic=True, valid=True)
    forbidding = jurisdiction.forbidding_constraint(state, res.action, _tags_of(state, res))
    if forbidding is not None:
        return _refuse(state, res, director, forbidding, automatic=True, valid=True)
    if res.action["type"] == "TreasuryTransfer" and state.treasury.balance < res.action["amount"]:
        return _refuse(state, res, director, TREASURY_CITATION, automatic=True, valid=True)

    description = _apply_effect(state, res)
    res.state = ResolutionState.EXECUTED
    res.closed_at = state.clock
    f.queue.pop(0)
    f.executed.append(ExecutionRecord(resolution=rid, director=director, tick=state.clock, effect=description))
    f.effects.append(FoundationEffect(id=state.next_id("E"), resolution=rid, director=director,
                                      tick=state.clock, description=description))
    telemetry.inc(telemetry.FOUNDATION_OUTCOMES, "Executed")
    logger.info("Резолюция %s исполнена директором %s: %s", rid, director, description)
    return "Executed"


def foundation_act(state: EngineState, director: str, note: str) -> FoundationEffect:
    """Действие фонда без резолюции. Допускается записью, но всегда даёт нарушение."""
    _require_foundation(state)
    d = state.foundation.director(director)
    if d is None or d.status != DirectorStatus.SERVING:
        raise NotADirector(f"{director} не действующий директор")
    if not isinstance(note, str) or not note:
        raise ValidationFailed("note обязателен")
    effect = FoundationEffect(id=state.next_id("E"), resolution=None, director=director,
                              tick=state.clock, description=note)
    state.foundation.effects.append(effect)
    logger.warning("Директор %s совершил действие без резолюции: %s", director, note)
    return effect


# ============================================================
#                      поиск нарушений
# ============================================================

def _candidates(state: EngineState, now: int) -> List[tuple]:
    f = state.foundation
    out = []
    for rid in f.queue:
        res = f.resolutions[rid]
        if res.state == ResolutionState.PENDING and now - res.enqueued_at > f.max_execution_delay:
            out.append((BREACH_DELAY, rid, res.assigned_director))
    for r in f.refusals:
        if not r.valid:
            out.append((BREACH_INVALID_CITATION, r.resolution, r.director))
    for e in f.effects:
        if e.resolution is None:
            out.append((BREACH_UNSOURCED_EFFECT, e.id, e.director))
    return out


def detect_breach(state: EngineState, now: int) -> List[BreachFinding]:
    """Каждая новая находка порождает Major-предложение DirectorRemove. Никогда не бросает."""
    from app import governance  # лениво: governance импортирует этот модуль

    f = state.foundation
    if not f.configured:
        return []
    seen = {(b.kind, b.ref) for b in f.breaches}
    found: List[BreachFinding] = []
    for kind, ref, director in _candidates(state, now):
        if (kind, ref) in seen:
            continue
        seen.add((kind, ref))
        finding = BreachFinding(id=state.next_id("B"), kind=kind, ref=ref, director=director, tick=now)
        d = f.director(director) if director else None
        if d is not None and d.status == DirectorStatus.SERVING:
            try:
                finding.removal_proposal = governance.submit_proposal(
                    state, SYSTEM_ACTOR, Kind.MAJOR,
                    {"type": "DirectorRemove", "actor": director, "cause": f"{kind}:{ref}"},
                    origin=f"breach:{finding.id}", internal=True,
                )
            except ValidationFailed as e:
                logger.warning("Не удалось подать отстранение %s: %s", director, e.reason)
        f.breaches.append(finding)
        found.append(finding)
        telemetry.inc(telemetry.BREACHES, kind)
        logger.warning("Нарушение %s (%s, %s), директор %s, предложение %s",
                       finding.id, kind, ref, director, finding.removal_proposal)
    return found
