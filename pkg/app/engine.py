# app/engine.py
"""
Событийный движок: единственный путь изменения состояния.

append_event: проверка → фильтр резидентности → применение → служебный
проход (жизненный цикл, нарушения) → запись в журнал. Отклонённое событие
не меняет состояние и ничего не пишет.
"""
from __future__ import annotations

import json
import logging
from typing import Any, Callable, Dict, List, Optional

from app import (
    audit_log,
    canonical,
    foundation,
    governance,
    jurisdiction,
    oracle,
    telemetry,
    tokens,
    workstreams,
)
from app.audit_log import EventRecord
from app.canonical import parse_fraction
from app.errors import IntegrityError, UnknownEvent, ValidationFailed
from app.models import EngineState, GovernanceParams, TokenPolicy

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = {"coalition_min": 3, "gini_max": "4/5"}
# Пишутся только движком/харнессом, в сценарии недопустимы
INTERNAL_EVENTS = {"genesis", "rejection", "scenario_end"}


def state_digest(state: EngineState) -> str:
    return canonical.digest(state)


def _get(payload: Dict[str, Any], name: str, default: Any = ..., kind: Optional[type] = None) -> Any:
    if name not in payload or payload[name] is None:
        if default is ...:
            raise ValidationFailed(f"{payload.get('event')}: поле '{name}' обязательно")
        return default
    value = payload[name]
    if kind is not None and (not isinstance(value, kind) or (kind is int and isinstance(value, bool))):
        raise ValidationFailed(f"{payload.get('event')}: поле '{name}' должно быть {kind.__name__}")
    return value


# ============================================================
#                          genesis
# ============================================================

def _params_from(raw: Dict[str, Any]) -> GovernanceParams:
    params = GovernanceParams()
    for key, value in (raw or {}).items():
        section, attr, coerced = governance.resolve_param(f"governance.{key}", value)
        setattr(params, attr, coerced)
    governance.validate_params(params)
    return params


def _policy_from(raw: Dict[str, Any]) -> TokenPolicy:
    policy = TokenPolicy()
    for key, value in (raw or {}).items():
        section, attr, coerced = governance.resolve_param(f"policy.{key}", value)
        setattr(policy, attr, coerced)
    return policy


def _thresholds(raw: Any) -> Dict[str, Any]:
    out = dict(DEFAULT_THRESHOLDS)
    out.update(raw or {})
    try:
        parse_fraction(out["gini_max"])
    except (ValueError, ZeroDivisionError):
        raise ValidationFailed(f"gini_max не доля: {out['gini_max']!r}")
    if not isinstance(out["coalition_min"], int):
        raise ValidationFailed("coalition_min должен быть целым")
    return out


def apply_genesis(state: EngineState, config: Dict[str, Any], meta: Dict[str, Any]) -> None:
    if not isinstance(config, dict):
        raise ValidationFailed("genesis: config должен быть объектом")
    state.params = _params_from(config.get("params") or {})
    state.policy = _policy_from(config.get("policy") or {})

    members = config.get("members") or []
    declared = config.get("roles")
    if declared is None:
        declared = sorted({r for m in members for r in (m.get("roles") or [])})
    state.roles = set(declared)
    missing = {a for a in state.params.role_admins} - {m.get("id") for m in members}
    if missing:
        raise ValidationFailed(f"role_admins не являются участниками: {sorted(missing)}")

    treasury = config.get("treasury") or {}
    balance = treasury.get("balance", 0)
    if not isinstance(balance, int) or isinstance(balance, bool) or balance < 0:
        raise ValidationFailed("treasury.balance должен быть целым ≥ 0")
    state.treasury.balance = balance
    state.treasury.total_supply = balance

    allocations = []
    for m in members:
        if not isinstance(m, dict):
            raise ValidationFailed(f"некорректный участник: {m!r}")
        governance.register_member(state, m.get("id"), m.get("roles") or [], genesis=True)
        alloc = m.get("allocation") or {}
        tokens.allocate_genesis(state, m["id"], alloc)
        if alloc:
            allocations.append({"actor": m["id"], **alloc})
    state.policy.genesis_allocations = allocations

    foundation.configure(state, config.get("foundation"))
    directors = config.get("directors") or []
    if directors and not state.foundation.configured:
        raise ValidationFailed("директора указаны, а фонд не сконфигурирован")
    for d in directors:
        foundation.add_genesis_director(state, d)

    oracle.configure(state, config.get("oracle"))
    for raw in config.get("modules") or []:
        jurisdiction.admit_module(state, raw, None)
    for raw in config.get("workstreams") or []:
        workstreams.create_workstream(state, raw)
    for raw in config.get("committees") or []:
        governance.charter_committee(state, raw.get("members") or [], raw.get("mandate"), raw.get("id"))

    meta = dict(meta or {})
    meta["thresholds"] = _thresholds(config.get("thresholds"))
    state.meta = meta
    logger.info("Genesis: %d участников, фонд %s, модулей %d",
                len(state.members), "есть" if state.foundation.configured else "нет", len(state.jurisdictions))


# ============================================================
#                          движок
# ============================================================

class Engine:
    """Один экземпляр однопоточный; разные экземпляры независимы."""

    def __init__(self) -> None:
        self.state = EngineState()
        self.records: List[EventRecord] = []
        self._handlers: Dict[str, Callable[[Dict[str, Any]], None]] = {
            "genesis": self._on_genesis,
            "advance_time": self._on_advance_time,
            "register_member": lambda e: governance.register_member(
                self.state, _get(e, "actor", kind=str), _get(e, "roles", []), by=_get(e, "by", None)),
            "exit_member": lambda e: governance.exit_member(self.state, _get(e, "actor", kind=str)),
            "grant_role": lambda e: governance.grant_role(
                self.state, _get(e, "by", kind=str), _get(e, "actor", kind=str), _get(e, "role", kind=str)),
            "submit_proposal": lambda e: governance.submit_proposal(
                self.state, _get(e, "proposer", kind=str), _get(e, "kind"), _get(e, "action", kind=dict),
                _get(e, "tags", [])),
            "cast_vote": lambda e: governance.cast_vote(
                self.state, _get(e, "voter", kind=str), _get(e, "proposal", kind=str), _get(e, "choice")),
            "delegate": lambda e: governance.delegate(
                self.state, _get(e, "delegator", kind=str), _get(e, "delegate", kind=str), _get(e, "scope")),
            "revoke_delegation": lambda e: governance.revoke_delegation(
                self.state, _get(e, "delegator", kind=str), _get(e, "scope")),
            "close_voting": lambda e: governance.close_voting(self.state, _get(e, "proposal", kind=str)),
            "file_challenge": lambda e: governance.file_challenge(
                self.state, _get(e, "challenger", kind=str), _get(e, "proposal", kind=str)),
            "committee_decide": lambda e: governance.committee_decide(
                self.state, _get(e, "committee", kind=str), _get(e, "action", kind=dict),
                _get(e, "approvals", [], kind=list), _get(e, "tags", [])),
            "execute_onchain": lambda e: governance.execute_onchain(self.state, _get(e, "proposal", kind=str)),
            "stake": lambda e: tokens.stake(self.state, _get(e, "actor", kind=str), _get(e, "amount")),
            "unstake": lambda e: tokens.unstake(self.state, _get(e, "actor", kind=str), _get(e, "amount")),
            "redeem": lambda e: tokens.redeem(self.state, _get(e, "actor", kind=str), _get(e, "amount")),
            "submit_attestation": lambda e: oracle.submit_attestation(
                self.state, _get(e, "provider", kind=str), _get(e, "topic", kind=str), _get(e, "round"),
                _get(e, "value"), _get(e, "evidence_hash", kind=str)),
            "execute_resolution": lambda e: foundation.execute_resolution(
                self.state, _get(e, "resolution", kind=str), _get(e, "director", kind=str), _get(e, "cite", None)),
            "foundation_act": lambda e: foundation.foundation_act(
                self.state, _get(e, "director", kind=str), _get(e, "note", kind=str)),
            "add_task": lambda e: workstreams.add_task(
                self.state, _get(e, "by", kind=str), _get(e, "workstream", kind=str), _get(e, "task", kind=dict)),
            "assign_task": lambda e: workstreams.assign_task(
                self.state, _get(e, "workstream", kind=str), _get(e, "task", kind=str), _get(e, "assignee", kind=str)),
            "escalate_task": lambda e: workstreams.escalate_task(
                self.state, _get(e, "workstream", kind=str), _get(e, "task", kind=str),
                _get(e, "outcome", "cancel"), _get(e, "assignee", None)),
            "signoff_task": lambda e: workstreams.signoff_task(
                self.state, _get(e, "workstream", kind=str), _get(e, "task", kind=str), _get(e, "by", kind=str)),
            "complete_task": lambda e: workstreams.complete_task(
                self.state, _get(e, "workstream", kind=str), _get(e, "task", kind=str), _get(e, "evidence", None)),
            "rejection": self._on_rejection,
            "scenario_end": self._on_scenario_end,
        }

    # --- свойства ---

    @property
    def clock(self) -> int:
        return self.state.clock

    @property
    def log_head(self) -> str:
        return self.state.log_head

    def digest(self) -> str:
        return state_digest(self.state)

    def script_events(self) -> set:
        return set(self._handlers) - INTERNAL_EVENTS

    # --- обработчики со сложной логикой ---

    def _on_genesis(self, e: Dict[str, Any]) -> None:
        if self.records:
            raise ValidationFailed("genesis допустим только первой записью журнала")
        fresh = EngineState()
        try:
            apply_genesis(fresh, _get(e, "config", kind=dict), _get(e, "meta", {}, kind=dict))
        except (KeyError, TypeError, AttributeError, ValueError) as ex:
            raise ValidationFailed(f"genesis: некорректная конфигурация ({ex})")
        self.state = fresh

    def _on_advance_time(self, e: Dict[str, Any]) -> None:
        ticks = _get(e, "ticks", kind=int)
        if ticks < 0:
            raise ValidationFailed("ticks должен быть ≥ 0")
        for _ in range(ticks):
            self.state.clock += 1
            self._tick(self.state.clock)

    def _tick(self, now: int) -> None:
        s = self.state
        tokens.vest_tick(s, now)
        oracle.finalize_rounds(s, now)
        oracle.rotate_operators(s, now)
        governance.settle_lifecycle(s, now)
        foundation.detect_breach(s, now)
        jurisdiction.reporting_check(s, now)

    def _on_rejection(self, e: Dict[str, Any]) -> None:
        _get(e, "code", kind=str)
        self.state.rejections += 1

    def _on_scenario_end(self, e: Dict[str, Any]) -> None:
        self.state.completed = True

    # --- главный вход ---

    def _effective_tick(self, event: Dict[str, Any]) -> int:
        if event.get("event") == "advance_time":
            ticks = event.get("ticks")
            if isinstance(ticks, int) and not isinstance(ticks, bool) and ticks >= 0:
                return self.state.clock + ticks
        return self.state.clock

    def append_event(self, event: Dict[str, Any]) -> EventRecord:
        if not isinstance(event, dict):
            raise ValidationFailed("событие должно быть объектом")
        name = event.get("event")
        handler = self._handlers.get(name)
        if handler is None:
            raise UnknownEvent(f"неизвестный тип события: {name!r}")
        if self.state.completed:
            raise ValidationFailed("сценарий уже завершён")
        tick = self._effective_tick(event)
        if "tick" in event and event["tick"] != tick:
            raise ValidationFailed(f"tick события {event['tick']} != тик движка {tick}")

        if name == "genesis":
            fields = jurisdiction.genesis_sensitive_fields(event.get("config") or {})
        else:
            fields = jurisdiction.sensitive_fields(list(self.state.jurisdictions.values()))
        payload = json.loads(canonical.dumps(jurisdiction.residency_filter({**event, "tick": tick}, fields)))

        try:
            handler(payload)
        except ValidationFailed as err:
            telemetry.inc(telemetry.EVENTS_REJECTED, err.code)
            logger.warning("Событие %s отклонено на тике %d: %s (%s)", name, tick, err.code, err.reason)
            raise

        now = self.state.clock
        governance.settle_lifecycle(self.state, now)
        foundation.detect_breach(self.state, now)

        record = audit_log.make_record(len(self.records), self.state.log_head, payload)
        self.records.append(record)
        self.state.log_head = record.hash
        telemetry.inc(telemetry.EVENTS_APPENDED, name)
        return record

    # --- удобные обёртки ---

    def advance_time(self, ticks: int) -> EventRecord:
        return self.append_event({"event": "advance_time", "ticks": ticks})

    def record_rejection(self, event: Dict[str, Any], err: ValidationFailed) -> EventRecord:
        """Отказ фиксируется отдельным событием, чтобы отчёт восстанавливался из журнала."""
        return self.append_event({
            "event": "rejection",
            "rejected": str(event.get("event")) if isinstance(event, dict) else "?",
            "code": err.code,
            "reason": err.reason,
        })

    @classmethod
    def from_genesis(cls, config: Dict[str, Any], meta: Optional[Dict[str, Any]] = None) -> "Engine":
        engine = cls()
        engine.append_event({"event": "genesis", "config": config, "meta": meta or {}})
        return engine


def replay(records: List[EventRecord]) -> Engine:
    """Пересобирает состояние из журнала и сверяет каждый хеш с оригиналом."""
    verdict = audit_log.verify_log(records)
    if not verdict.ok:
        raise IntegrityError(f"журнал повреждён: {verdict}", index=verdict.index)
    engine = Engine()
    for rec in records:
        new = engine.append_event(rec.event())
        if new.hash != rec.hash:
            raise IntegrityError(f"повтор разошёлся с журналом на записи {rec.index}", index=rec.index)
    logger.info("Повтор журнала: %d записей, digest %s", len(records), engine.digest()[:12])
    return engine
