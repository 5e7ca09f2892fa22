# app/jurisdiction.py
"""
Юрисдикционные модули как именованные наборы ограничений.

Словарь ограничений фиксирован четырьмя флагами. Действуют они на
предложения, помеченные модулем (теги объявляет автор предложения);
DATA_RESIDENCY действует на весь журнал, пока модуль допущен.
"""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Set, Tuple

from app.canonical import hash_text
from app.errors import DuplicateModule, UnknownModule, ValidationFailed
from app.models import (
    ComplianceFinding,
    Constraint,
    ConstraintFlag,
    EngineState,
    JurisdictionModule,
    ModuleStatus,
    VoteMode,
)

logger = logging.getLogger(__name__)

COMPLIANCE_TOPIC_PREFIX = "compliance:"
# Служебные ключи событий никогда не хешируются
_STRUCTURAL_KEYS = {"event", "kind", "tick", "type"}


def parse_module(raw: Dict[str, Any], now: int, admitted_by: Optional[str],
                 known_constraints: Set[str]) -> JurisdictionModule:
    if not isinstance(raw, dict) or not isinstance(raw.get("id"), str) or not raw["id"]:
        raise ValidationFailed("модуль должен иметь непустой id")
    mid = raw["id"]
    constraints: List[Constraint] = []
    for c in raw.get("constraints") or []:
        try:
            flag = ConstraintFlag(c["flag"])
        except (KeyError, ValueError, TypeError):
            raise ValidationFailed(f"{mid}: неизвестный флаг ограничения {c!r}")
        cid = c.get("id") or f"{mid}/{flag.value}"
        if cid in known_constraints or any(x.id == cid for x in constraints):
            raise ValidationFailed(f"{mid}: повторный id ограничения {cid}")
        period = c.get("period")
        if flag == ConstraintFlag.REPORTING_REQUIRED:
            if not isinstance(period, int) or isinstance(period, bool) or period <= 0:
                raise ValidationFailed(f"{cid}: REPORTING_REQUIRED требует period > 0")
        fields = list(c.get("sensitive_fields") or [])
        if flag == ConstraintFlag.DATA_RESIDENCY and not fields:
            raise ValidationFailed(f"{cid}: DATA_RESIDENCY требует sensitive_fields")
        constraints.append(Constraint(id=cid, flag=flag, period=period, sensitive_fields=fields))
    return JurisdictionModule(
        id=mid,
        name=str(raw.get("name") or mid),
        constraints=constraints,
        admitted_at=now,
        admitted_by=admitted_by,
    )


def all_constraint_ids(state: EngineState) -> Set[str]:
    return {c.id for m in state.jurisdictions.values() for c in m.constraints}


def check_admit(state: EngineState, raw: Dict[str, Any]) -> JurisdictionModule:
    mid = raw.get("id") if isinstance(raw, dict) else None
    if mid in state.jurisdictions:
        raise DuplicateModule(f"модуль {mid} уже известен")
    return parse_module(raw, state.clock, None, all_constraint_ids(state))


def admit_module(state: EngineState, raw: Dict[str, Any], proposal: Optional[str]) -> JurisdictionModule:
    module = check_admit(state, raw)
    module.admitted_by = proposal
    state.jurisdictions[module.id] = module
    logger.info("Модуль %s допущен (tick=%d, предложение %s)", module.id, state.clock, proposal)
    return module


def check_exit(state: EngineState, module_id: str) -> JurisdictionModule:
    m = state.jurisdictions.get(module_id)
    if m is None or not m.admitted:
        raise UnknownModule(f"модуль {module_id} не допущен")
    return m


def exit_module(state: EngineState, module_id: str) -> None:
    m = check_exit(state, module_id)
    m.status = ModuleStatus.EXITED
    m.exited_at = state.clock
    logger.info("Модуль %s вышел (tick=%d)", module_id, state.clock)


def check_tags(state: EngineState, tags: Set[str]) -> None:
    for t in tags:
        m = state.jurisdictions.get(t)
        if m is None or not m.admitted:
            raise UnknownModule(f"тег {t} не соответствует допущенному модулю")


def active_constraints(state: EngineState, tags: Optional[Set[str]] = None) -> List[Tuple[JurisdictionModule, Constraint]]:
    out = []
    for mid in sorted(state.jurisdictions):
        m = state.jurisdictions[mid]
        if not m.admitted or (tags is not None and mid not in tags):
            continue
        out.extend((m, c) for c in m.constraints)
    return out


def constraint_active(state: EngineState, constraint_id: str) -> bool:
    return any(c.id == constraint_id for _, c in active_constraints(state))


def effective_vote_mode(state: EngineState, tags: Set[str]) -> VoteMode:
    for _, c in active_constraints(state, tags):
        if c.flag == ConstraintFlag.TOKEN_VOTING_PROHIBITED:
            return VoteMode.ONE_MEMBER_ONE_VOTE
    return VoteMode.TOKEN_WEIGHTED


def forbidding_constraint(state: EngineState, action: Dict[str, Any], tags: Set[str]) -> Optional[str]:
    """Первое активное ограничение, запрещающее действие (детерминированный порядок)."""
    for _, c in active_constraints(state, tags):
        if c.flag == ConstraintFlag.TRANSFER_RESTRICTED and action.get("type") == "TreasuryTransfer":
            return c.id
    return None


# ============================================================
#                     резидентность данных
# ============================================================

def sensitive_fields(modules: List[JurisdictionModule]) -> Set[str]:
    out: Set[str] = set()
    for m in modules:
        if not m.admitted:
            continue
        for c in m.constraints:
            if c.flag == ConstraintFlag.DATA_RESIDENCY:
                out.update(c.sensitive_fields)
    return out


def _scrub(value: Any, fields: Set[str]) -> Any:
    if isinstance(value, dict):
        return {
            k: (hash_text(v) if k in fields and k not in _STRUCTURAL_KEYS else _scrub(v, fields))
            for k, v in value.items()
        }
    if isinstance(value, list):
        return [_scrub(v, fields) for v in value]
    return value


def residency_filter(payload: Dict[str, Any], fields: Set[str]) -> Dict[str, Any]:
    """Чувствительные поля заменяются хешами до записи в журнал; уже хешированные не меняются."""
    if not fields:
        return payload
    return _scrub(payload, fields)


def genesis_sensitive_fields(config: Dict[str, Any]) -> Set[str]:
    out: Set[str] = set()
    for raw in (config or {}).get("modules") or []:
        for c in (raw or {}).get("constraints") or []:
            if (c or {}).get("flag") == ConstraintFlag.DATA_RESIDENCY.value:
                out.update(c.get("sensitive_fields") or [])
    return out


# ============================================================
#                      отчётность (REPORTING_REQUIRED)
# ============================================================

def record_report(state: EngineState, module_id: str) -> None:
    m = state.jurisdictions.get(module_id)
    if m is None:
        return
    m.last_report = state.clock
    for f in state.compliance_findings:
        if f.module == module_id and f.resolved_at is None:
            f.resolved_at = state.clock
            logger.info("Нарушение отчётности %s закрыто (модуль %s)", f.id, module_id)


def reporting_check(state: EngineState, now: int) -> List[ComplianceFinding]:
    """Находит модули без отчёта за последние period тиков; на каждую находку ставит Compliance-резолюцию."""
    from app import foundation  # лениво: foundation сам зависит от этого модуля

    found: List[ComplianceFinding] = []
    for m, c in active_constraints(state):
        if c.flag != ConstraintFlag.REPORTING_REQUIRED or c.period is None:
            continue
        last = m.last_report if m.last_report is not None else m.admitted_at
        if now - last < c.period:
            continue
        if any(f.module == m.id and f.resolved_at is None for f in state.compliance_findings):
            continue
        finding = ComplianceFinding(id=state.next_id("F"), module=m.id, tick=now)
        if state.foundation.configured:
            finding.resolution = foundation.enqueue_internal(
                state,
                {"type": "Compliance", "module_id": m.id, "report_hash": hash_text(f"{m.id}@{now}")},
                source_proposal=m.admitted_by,
                origin="reporting",
            )
        state.compliance_findings.append(finding)
        found.append(finding)
        logger.info("Нет отчёта по модулю %s за %d тиков: находка %s", m.id, c.period, finding.id)
    return found
