# app/oracle.py
"""
Мультипровайдерный оракул: приём аттестаций, агрегация (взвешенная медиана /
взвешенная доля true), ротация операторов, управляемая смена набора и
аудируемые override'ы.
"""
from __future__ import annotations

import logging
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from app import jurisdiction
from app.canonical import parse_fraction
from app.errors import (
    DuplicateAttestation,
    InactiveProvider,
    RoundClosed,
    RoundOpen,
    ValidationFailed,
)
from app.models import Attestation, EngineState, OracleState, OverrideRecord, Reading

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
BOOLEAN = "boolean"

INSUFFICIENT = "Insufficient"
READING = "Reading"
OVERRIDDEN = "Overridden"


def round_key(topic: str, round_id: Any) -> str:
    return f"{topic}#{round_id}"


def value_type(value: Any) -> str:
    if isinstance(value, bool):
        return BOOLEAN
    if isinstance(value, (int, float)):
        return NUMERIC
    raise ValidationFailed(f"значение оракула должно быть числом или bool, получено {value!r}")


def parse_providers(raw: Sequence[Any]) -> List[List[Any]]:
    out: List[List[Any]] = []
    seen = set()
    for item in raw or []:
        if isinstance(item, dict):
            pid, weight = item.get("id"), item.get("weight", 1)
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            pid, weight = item
        else:
            pid, weight = item, 1
        if not isinstance(pid, str) or not pid:
            raise ValidationFailed(f"некорректный провайдер: {item!r}")
        if not isinstance(weight, int) or isinstance(weight, bool) or weight <= 0:
            raise ValidationFailed(f"вес провайдера {pid} должен быть целым > 0")
        if pid in seen:
            raise ValidationFailed(f"провайдер {pid} указан дважды")
        seen.add(pid)
        out.append([pid, weight])
    return out


def configure(state: EngineState, raw: Optional[Dict[str, Any]]) -> None:
    raw = raw or {}
    o = state.oracle
    o.providers = parse_providers(raw.get("providers") or [])
    o.n_active = raw.get("n_active")
    o.rotation_epoch = int(raw.get("rotation_epoch", 50))
    o.m_min = int(raw.get("m_min", 2))
    o.bool_threshold = parse_fraction(raw.get("bool_threshold", "1/2"))
    o.round_length = int(raw.get("round_length", 10))
    if o.round_length <= 0 or o.rotation_epoch < 0 or o.m_min < 1:
        raise ValidationFailed("round_length > 0, rotation_epoch ≥ 0, m_min ≥ 1")
    if not (0 < o.bool_threshold <= 1):
        raise ValidationFailed("bool_threshold должен быть в (0, 1]")
    o.rotation_anchor = 0
    o.active_set = active_set_for(o, state.clock)


# ============================================================
#                         ротация
# ============================================================

def _n_active(o: OracleState) -> int:
    p = len(o.providers)
    n = o.n_active if o.n_active is not None else min(3, p)
    return max(0, min(int(n), p))


def active_set_for(o: OracleState, now: int) -> List[str]:
    """Группы по n_active, по кругу: эпоха e начинается с позиции e·n (mod P)."""
    p = len(o.providers)
    n = _n_active(o)
    if p == 0 or n == 0:
        return []
    if n == p or o.rotation_epoch <= 0:
        return [pid for pid, _ in o.providers[:n]]
    epoch = (now - o.rotation_anchor) // o.rotation_epoch if now >= o.rotation_anchor else 0
    start = (epoch * n) % p
    return [o.providers[(start + i) % p][0] for i in range(n)]


def rotate_operators(state: EngineState, now: int) -> bool:
    o = state.oracle
    new = active_set_for(o, now)
    if new != o.active_set:
        logger.info("tick=%d: ротация операторов %s -> %s", now, o.active_set, new)
        o.active_set = new
        return True
    return False


# ============================================================
#                       аттестации
# ============================================================

def round_bounds(o: OracleState, round_id: int) -> Tuple[int, int]:
    return round_id * o.round_length, (round_id + 1) * o.round_length


def current_round(o: OracleState, now: int) -> int:
    return now // o.round_length


def submit_attestation(state: EngineState, provider: str, topic: str, round_id: Any,
                       value: Any, evidence_hash: str) -> Attestation:
    o = state.oracle
    if not isinstance(topic, str) or not topic or "#" in topic:
        raise ValidationFailed(f"некорректная тема: {topic!r}")
    if not isinstance(round_id, int) or isinstance(round_id, bool) or round_id < 0:
        raise ValidationFailed(f"некорректный раунд: {round_id!r}")
    if not isinstance(evidence_hash, str) or not evidence_hash:
        raise ValidationFailed("evidence_hash обязателен")
    if provider not in o.active_set:
        raise InactiveProvider(f"{provider} не в активном наборе {o.active_set}")
    start, end = round_bounds(o, round_id)
    if state.clock >= end:
        raise RoundClosed(f"раунд {round_id} закрыт на тике {end}")
    if state.clock < start:
        raise ValidationFailed(f"раунд {round_id} ещё не начался")
    vtype = value_type(value)
    known = o.topic_types.get(topic)
    if known is not None and known != vtype:
        raise ValidationFailed(f"тема {topic} имеет тип {known}, получено {vtype}")
    key = round_key(topic, round_id)
    if any(a.provider == provider for a in o.rounds.get(key, [])):
        raise DuplicateAttestation(f"{provider} уже подал аттестацию в {key}")

    att = Attestation(
        provider=provider, topic=topic, round=round_id, value=value,
        evidence_hash=evidence_hash, tick=state.clock, weight=o.weight_of(provider),
    )
    o.topic_types[topic] = vtype
    o.rounds.setdefault(key, []).append(att)
    if topic.startswith(jurisdiction.COMPLIANCE_TOPIC_PREFIX) and value is True:
        jurisdiction.record_report(state, topic[len(jurisdiction.COMPLIANCE_TOPIC_PREFIX):])
    return att


# ============================================================
#                        агрегация
# ============================================================

def weighted_median(pairs: Sequence[Tuple[Union[int, float], int]]) -> Union[int, float]:
    """Наименьшее значение, на котором накопленный вес ≥ половины общего."""
    ordered = sorted(pairs, key=lambda p: p[0])
    total = sum(w for _, w in ordered)
    cum = 0
    for v, w in ordered:
        cum += w
        if 2 * cum >= total:
            return v
    raise ValidationFailed("медиана пустого набора")


def aggregate_values(atts: Sequence[Attestation], m_min: int, bool_threshold: Fraction) -> Tuple[str, Any]:
    if len(atts) < m_min or not atts:
        return INSUFFICIENT, None
    if value_type(atts[0].value) == BOOLEAN:
        total = sum(a.weight for a in atts)
        yes = sum(a.weight for a in atts if a.value is True)
        return READING, Fraction(yes, total) >= bool_threshold
    return READING, weighted_median([(a.value, a.weight) for a in atts])


def aggregate(state: EngineState, topic: str, round_id: int) -> Reading:
    """Вердикт по закрытому раунду; для открытого RoundOpen."""
    o = state.oracle
    _, end = round_bounds(o, round_id)
    if state.clock < end:
        raise RoundOpen(f"раунд {round_id} закрывается на тике {end}")
    key = round_key(topic, round_id)
    stored = o.readings.get(key)
    if stored is not None:
        return stored
    atts = o.rounds.get(key, [])
    status, value = aggregate_values(atts, o.m_min, o.bool_threshold)
    return Reading(topic=topic, round=round_id, status=status, value=value, submissions=len(atts), tick=state.clock)


def finalize_rounds(state: EngineState, now: int) -> int:
    """Фиксирует показания раундов, закрывшихся к тику now."""
    o = state.oracle
    done = 0
    for key in sorted(o.rounds):
        if key in o.readings:
            continue
        atts = o.rounds[key]
        round_id = atts[0].round
        if now < round_bounds(o, round_id)[1]:
            continue
        status, value = aggregate_values(atts, o.m_min, o.bool_threshold)
        o.readings[key] = Reading(topic=atts[0].topic, round=round_id, status=status,
                                  value=value, submissions=len(atts), tick=now)
        done += 1
        logger.debug("Раунд %s зафиксирован: %s %r", key, status, value)
    return done


def latest_reading(state: EngineState, topic: str) -> Optional[Reading]:
    best: Optional[Reading] = None
    for r in state.oracle.readings.values():
        if r.topic != topic or r.status == INSUFFICIENT:
            continue
        if best is None or (r.tick, str(r.round)) >= (best.tick, str(best.round)):
            best = r
    return best


# ============================================================
#                 управляемые изменения (on-chain)
# ============================================================

def check_set_change(providers: Sequence[Any], n_active: Optional[int]) -> List[List[Any]]:
    parsed = parse_providers(providers)
    if not parsed:
        raise ValidationFailed("набор провайдеров не может быть пустым")
    if n_active is not None and n_active <= 0:
        raise ValidationFailed("n_active должен быть > 0")
    return parsed


def apply_oracle_set_change(state: EngineState, providers: Sequence[Any], n_active: Optional[int],
                            proposal: str) -> None:
    parsed = check_set_change(providers, n_active)
    o = state.oracle
    o.providers = parsed
    if n_active is not None:
        o.n_active = n_active
    now = state.clock
    # Ротация перезапускается со следующей границы эпохи
    o.rotation_anchor = ((now // o.rotation_epoch) + 1) * o.rotation_epoch if o.rotation_epoch > 0 else now
    o.active_set = active_set_for(o, now)
    logger.info("Набор оракулов изменён предложением %s: %s", proposal, parsed)


def check_override(state: EngineState, topic: str, value: Any) -> None:
    if not isinstance(topic, str) or not topic or "#" in topic:
        raise ValidationFailed(f"некорректная тема: {topic!r}")
    vtype = value_type(value)
    known = state.oracle.topic_types.get(topic)
    if known is not None and known != vtype:
        raise ValidationFailed(f"тема {topic} имеет тип {known}, получено {vtype}")


def apply_override(state: EngineState, topic: str, value: Any, round_id: Optional[int], proposal: str) -> Reading:
    check_override(state, topic, value)
    o = state.oracle
    key = round_key(topic, round_id if round_id is not None else f"ovr:{proposal}")
    previous = o.readings.get(key)
    reading = Reading(
        topic=topic, round=round_id, status=OVERRIDDEN, value=value,
        submissions=previous.submissions if previous else len(o.rounds.get(key, [])),
        tick=state.clock, override_proposal=proposal,
    )
    o.readings[key] = reading
    o.topic_types.setdefault(topic, value_type(value))
    o.overrides.append(OverrideRecord(proposal=proposal, topic=topic, round=round_id, value=value, tick=state.clock))
    logger.info("Override показания %s = %r (предложение %s)", key, value, proposal)
    return reading
