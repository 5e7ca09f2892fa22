# app/tokens.py
"""
Токен-политика: вестинг, локапы, clawback, награды и учёт казны.

Все суммы целые, вестинг округляется вниз. Инвариант сохранения:
total_supply == treasury.balance + Σ (vested + locked + unvested).
Функции сначала проверяют всё, потом мутируют; при исключении состояние не тронуто.
"""
from __future__ import annotations

import logging
from typing import Any, Dict, Optional

from app.errors import (
    ExceedsUnvested,
    InsufficientTreasury,
    InsufficientVested,
    LockupActive,
    NotAMember,
    Unauthorized,
    UnknownActor,
    ValidationFailed,
)
from app.models import EngineState, TokenAccount, VestingSchedule

logger = logging.getLogger(__name__)

REWARD_KINDS = ("Staking", "Grant", "Airdrop", "TaskReward", "Transfer")
# Награды, которые выдаются предложением Grant и подчиняются лимиту грантов
GRANT_KINDS = ("Grant", "Staking")


def check_grant_kind(raw: Any) -> str:
    kind = "Grant" if raw is None else raw
    if kind not in GRANT_KINDS:
        raise ValidationFailed(f"Grant: вид награды {raw!r} не из {GRANT_KINDS}")
    return kind


def _amount(value: Any) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ValidationFailed(f"сумма должна быть целым ≥ 0, получено {value!r}")
    return value


def open_account(state: EngineState, actor: str) -> TokenAccount:
    return state.accounts.setdefault(actor, TokenAccount())


def releasable(schedule: VestingSchedule, now: int) -> int:
    if now < schedule.start + schedule.cliff:
        return 0
    if schedule.duration <= 0:
        return schedule.total
    elapsed = now - schedule.start
    if elapsed >= schedule.duration:
        return schedule.total
    return schedule.total * elapsed // schedule.duration


def _vest_account(acc: TokenAccount, now: int) -> int:
    moved = 0
    for s in acc.schedules:
        target = releasable(s, now)
        if target > s.released:
            moved += target - s.released
            s.released = target
    if moved:
        acc.unvested -= moved
        acc.vested += moved
    return moved


def vest_tick(state: EngineState, now: int) -> int:
    """Переносит созревшие доли из unvested в vested. Идемпотентно на фиксированном тике."""
    total = 0
    for actor in sorted(state.accounts):
        total += _vest_account(state.accounts[actor], now)
    if total:
        logger.debug("tick=%d: вестинг освободил %d", now, total)
    return total


def _int_field(raw: Dict[str, Any], name: str, default: int, minimum: Optional[int] = None) -> int:
    value = raw.get(name, default)
    if isinstance(value, bool):
        raise ValidationFailed(f"поле '{name}' должно быть целым, получено {value!r}")
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise ValidationFailed(f"поле '{name}' должно быть целым, получено {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationFailed(f"поле '{name}' должно быть ≥ {minimum}, получено {value}")
    return value


def check_schedule(raw: Any) -> None:
    """Проверка графика вестинга без изменения состояния."""
    if raw is None:
        return
    if not isinstance(raw, dict):
        raise ValidationFailed(f"график вестинга должен быть объектом, получено {raw!r}")
    for name in ("start", "cliff", "duration", "total"):
        if name in raw:
            _int_field(raw, name, 0, minimum=0)


def make_schedule(amount: int, now: int, raw: Optional[Dict[str, Any]]) -> VestingSchedule:
    raw = raw or {}
    check_schedule(raw)
    return VestingSchedule(
        total=amount,
        start=_int_field(raw, "start", now, minimum=0),
        cliff=_int_field(raw, "cliff", 0, minimum=0),
        duration=_int_field(raw, "duration", 0, minimum=0),
    )


def allocate_genesis(state: EngineState, actor: str, alloc: Dict[str, Any]) -> None:
    """Начальная аллокация основателю: эмиссия сверх казны, total_supply растёт на ту же сумму."""
    if not isinstance(alloc, dict):
        raise ValidationFailed(f"аллокация {actor} должна быть объектом")
    vested = _int_field(alloc, "vested", 0, minimum=0)
    locked = _int_field(alloc, "locked", 0, minimum=0)
    lock_until = _int_field(alloc, "lock_until", 0)
    sched = alloc.get("schedule")
    schedule = None
    if sched:
        check_schedule(sched)
        total = _int_field(sched, "total", 0, minimum=0)
        schedule = make_schedule(total, state.clock, sched)

    acc = open_account(state, actor)
    acc.vested += vested
    acc.locked += locked
    acc.lock_until = max(acc.lock_until, lock_until)
    issued = vested + locked
    if schedule is not None:
        acc.schedules.append(schedule)
        acc.unvested += schedule.total
        issued += schedule.total
    state.treasury.total_supply += issued
    _vest_account(acc, state.clock)


# ============================================================
#                          clawback
# ============================================================

def execute_clawback(state: EngineState, actor: str, amount: int, cause: str,
                     proposal: Optional[str] = None) -> None:
    """Изъятие только из unvested; вестированное не трогаем никогда."""
    amount = _amount(amount)
    acc = state.accounts.get(actor)
    if acc is None:
        raise UnknownActor(f"нет счёта у {actor}")
    if amount > acc.unvested:
        raise ExceedsUnvested(f"clawback {amount} > unvested {acc.unvested}", actor=actor)

    vested_before = acc.vested
    left = amount
    # Сначала режем самые поздние графики
    for s in reversed(acc.schedules):
        if left == 0:
            break
        take = min(left, s.remaining)
        s.total -= take
        left -= take
    acc.unvested -= amount
    state.treasury.balance += amount
    state.clawbacks.append({
        "actor": actor,
        "amount": amount,
        "cause": cause,
        "proposal": proposal,
        "tick": state.clock,
        "vested_before": vested_before,
        "vested_after": acc.vested,
    })
    logger.info("Clawback %d у %s (причина: %s)", amount, actor, cause)


# ============================================================
#                        распределение
# ============================================================

def airdrop_eligible(state: EngineState, actor: str) -> bool:
    m = state.member(actor)
    return bool(m and m.active and state.policy.airdrop_roles <= m.roles)


def check_reward(state: EngineState, kind: str, to: str, amount: int) -> None:
    amount = _amount(amount)
    if kind not in REWARD_KINDS:
        raise ValidationFailed(f"неизвестный вид награды: {kind}")
    m = state.member(to)
    if m is None or not m.active:
        raise Unauthorized(f"получатель {to} не является активным участником")
    if kind == "Airdrop" and not airdrop_eligible(state, to):
        raise Unauthorized(f"{to} не проходит правила airdrop")
    if kind == "Staking":
        acc = state.accounts.get(to)
        if acc is None or acc.locked == 0:
            raise Unauthorized(f"{to} ничего не застейкал")
    if kind in GRANT_KINDS:
        pol = state.policy
        if pol.grant_cap is not None and amount > pol.grant_cap:
            raise Unauthorized(f"грант {amount} превышает лимит политики {pol.grant_cap}")
        if pol.grant_roles and not (pol.grant_roles & m.roles):
            raise Unauthorized(f"{to} не имеет роли для грантов")
    if state.treasury.balance < amount:
        raise InsufficientTreasury(f"в казне {state.treasury.balance}, нужно {amount}")


def distribute_reward(state: EngineState, kind: str, to: str, amount: int,
                      schedule: Optional[Dict[str, Any]] = None, source: Optional[str] = None) -> None:
    check_reward(state, kind, to, amount)
    vesting = make_schedule(amount, state.clock, schedule) if schedule is not None else None
    acc = open_account(state, to)
    state.treasury.balance -= amount
    if vesting is not None:
        acc.schedules.append(vesting)
        acc.unvested += amount
        _vest_account(acc, state.clock)
    else:
        acc.vested += amount
    state.rewards.append({"kind": kind, "to": to, "amount": amount, "source": source, "tick": state.clock})
    logger.debug("Награда %s: %d -> %s (источник %s)", kind, amount, to, source)


def airdrop(state: EngineState, recipients: list, amount_each: int, source: Optional[str]) -> None:
    amount_each = _amount(amount_each)
    if len(set(recipients)) != len(recipients):
        raise ValidationFailed("повторяющиеся получатели airdrop")
    for r in recipients:
        if not airdrop_eligible(state, r):
            raise Unauthorized(f"{r} не проходит правила airdrop")
    total = amount_each * len(recipients)
    if state.treasury.balance < total:
        raise InsufficientTreasury(f"в казне {state.treasury.balance}, нужно {total}")
    for r in recipients:
        distribute_reward(state, "Airdrop", r, amount_each, source=source)


def debit_external(state: EngineState, amount: int) -> None:
    """Перевод за пределы системы (исполняет фонд): токены покидают оборот."""
    amount = _amount(amount)
    if state.treasury.balance < amount:
        raise InsufficientTreasury(f"в казне {state.treasury.balance}, нужно {amount}")
    state.treasury.balance -= amount
    state.treasury.total_supply -= amount


# ============================================================
#                    стейкинг и погашение
# ============================================================

def _active_account(state: EngineState, actor: str) -> TokenAccount:
    if not state.is_active(actor):
        raise NotAMember(f"{actor} не является активным участником")
    return open_account(state, actor)


def stake(state: EngineState, actor: str, amount: int) -> None:
    amount = _amount(amount)
    acc = _active_account(state, actor)
    if amount == 0:
        return
    if acc.vested < amount:
        raise InsufficientVested(f"vested {acc.vested} < {amount}")
    acc.vested -= amount
    acc.locked += amount
    acc.lock_until = max(acc.lock_until, state.clock + state.policy.stake_lockup)


def unstake(state: EngineState, actor: str, amount: int) -> None:
    amount = _amount(amount)
    acc = _active_account(state, actor)
    if amount == 0:
        return
    if acc.locked < amount:
        raise InsufficientVested(f"locked {acc.locked} < {amount}")
    if state.clock < acc.lock_until:
        raise LockupActive(f"локап до тика {acc.lock_until}")
    acc.locked -= amount
    acc.vested += amount


def redeem(state: EngineState, actor: str, amount: int) -> None:
    """Погашение по номиналу 1:1: vested сжигается, total_supply уменьшается на ту же сумму."""
    amount = _amount(amount)
    acc = _active_account(state, actor)
    if acc.vested < amount:
        raise InsufficientVested(f"vested {acc.vested} < {amount}")
    acc.vested -= amount
    state.treasury.total_supply -= amount
    state.treasury.redeemed += amount


def conservation_ok(state: EngineState) -> bool:
    held = sum(a.balance for a in state.accounts.values())
    return state.treasury.total_supply == state.treasury.balance + held
