# app/workstreams.py
"""
Распределённое управление задачами: рабочие потоки со стюардом и требуемыми
ролями, назначение, эскалация по уровням (стюард → комитет → управление)
и награда за проверенное выполнение.
"""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional

from app import oracle, tokens
from app.canonical import hash_text
from app.errors import (
    MaxEscalation,
    MissingRole,
    NotAMember,
    NotOpen,
    Unauthorized,
    ValidationFailed,
    VerificationMissing,
)
from app.models import SYSTEM_ACTOR, EngineState, Kind, Task, TaskState, Workstream

logger = logging.getLogger(__name__)

MAX_LEVEL = 3
OUTCOMES = ("cancel", "reassign")
_TERMINAL = {TaskState.DONE, TaskState.CANCELLED}


def _verification(raw: Any) -> Dict[str, Any]:
    raw = raw or {"mode": "steward"}
    if not isinstance(raw, dict):
        raise ValidationFailed(f"некорректная верификация: {raw!r}")
    mode = raw.get("mode")
    if mode == "steward":
        return {"mode": "steward"}
    if mode == "oracle" and isinstance(raw.get("topic"), str) and raw["topic"]:
        return {"mode": "oracle", "topic": raw["topic"]}
    raise ValidationFailed(f"верификация: mode steward или oracle с topic, получено {raw!r}")


def parse_task(raw: Any) -> Task:
    if not isinstance(raw, dict) or not isinstance(raw.get("id"), str) or not raw["id"]:
        raise ValidationFailed("задача должна иметь непустой id")
    spec_hash = raw.get("spec_hash") or hash_text(raw.get("spec", raw["id"]))
    return Task(id=raw["id"], spec_hash=spec_hash, verification=_verification(raw.get("verification")))


def parse_spec(raw: Any) -> Workstream:
    if not isinstance(raw, dict) or not isinstance(raw.get("id"), str) or not raw["id"]:
        raise ValidationFailed("рабочий поток должен иметь непустой id")
    steward = raw.get("steward")
    if not isinstance(steward, str) or not steward:
        raise ValidationFailed(f"{raw['id']}: нужен steward")
    rate = raw.get("reward_rate", 0)
    if not isinstance(rate, int) or isinstance(rate, bool) or rate < 0:
        raise ValidationFailed(f"{raw['id']}: reward_rate должен быть целым ≥ 0")
    roles = raw.get("required_roles") or []
    if not isinstance(roles, list) or not all(isinstance(r, str) for r in roles):
        raise ValidationFailed(f"{raw['id']}: required_roles должен быть списком строк")
    ws = Workstream(id=raw["id"], steward=steward, required_roles=set(roles), reward_rate=rate)
    for t in raw.get("tasks") or []:
        task = parse_task(t)
        if task.id in ws.tasks:
            raise ValidationFailed(f"{ws.id}: задача {task.id} повторяется")
        ws.tasks[task.id] = task
    return ws


def create_workstream(state: EngineState, raw: Any, proposal: Optional[str] = None) -> Workstream:
    ws = parse_spec(raw)
    if ws.id in state.workstreams:
        raise ValidationFailed(f"рабочий поток {ws.id} уже существует")
    if not state.is_active(ws.steward):
        raise NotAMember(f"стюард {ws.steward} не является активным участником")
    unknown = ws.required_roles - state.roles
    if unknown:
        raise ValidationFailed(f"{ws.id}: незарегистрированные роли {sorted(unknown)}")
    state.workstreams[ws.id] = ws
    logger.info("Рабочий поток %s создан (стюард %s, основание %s)", ws.id, ws.steward, proposal or "genesis")
    return ws


def get_task(state: EngineState, workstream: str, task: str) -> tuple:
    ws = state.workstreams.get(workstream)
    if ws is None:
        raise ValidationFailed(f"нет рабочего потока {workstream}")
    t = ws.tasks.get(task)
    if t is None:
        raise ValidationFailed(f"нет задачи {workstream}/{task}")
    return ws, t


def add_task(state: EngineState, by: str, workstream: str, raw: Any) -> Task:
    ws = state.workstreams.get(workstream)
    if ws is None:
        raise ValidationFailed(f"нет рабочего потока {workstream}")
    if by != ws.steward or not state.is_active(by):
        raise Unauthorized(f"{by} не стюард {workstream}")
    task = parse_task(raw)
    if task.id in ws.tasks:
        raise ValidationFailed(f"задача {task.id} уже есть в {workstream}")
    ws.tasks[task.id] = task
    return task


def _check_assignee(state: EngineState, ws: Workstream, assignee: str) -> None:
    m = state.member(assignee)
    if m is None or not m.active:
        raise NotAMember(f"{assignee} не является активным участником")
    missing = ws.required_roles - m.roles
    if missing:
        raise MissingRole(f"{assignee} не имеет ролей {sorted(missing)}")


def assign_task(state: EngineState, workstream: str, task: str, assignee: str) -> Task:
    """Open → Assigned; эскалированную задачу можно переназначить."""
    ws, t = get_task(state, workstream, task)
    if t.state not in (TaskState.OPEN, TaskState.ESCALATED):
        raise NotOpen(f"{workstream}/{task} в состоянии {t.state.value}")
    _check_assignee(state, ws, assignee)
    t.assignee = assignee
    t.state = TaskState.ASSIGNED
    logger.debug("Задача %s/%s назначена %s", workstream, task, assignee)
    return t


def escalate_task(state: EngineState, workstream: str, task: str,
                  outcome: str = "cancel", assignee: Optional[str] = None) -> Task:
    """На третьем уровне автоматически подаётся Ordinary-предложение TaskResolve."""
    from app import governance  # лениво: governance импортирует этот модуль

    _, t = get_task(state, workstream, task)
    if t.state in (TaskState.ASSIGNED, TaskState.ESCALATED) and t.level >= MAX_LEVEL:
        raise MaxEscalation(f"{workstream}/{task} уже на уровне {t.level}")
    if t.state not in (TaskState.ASSIGNED, TaskState.ESCALATED):
        raise NotOpen(f"{workstream}/{task} в состоянии {t.state.value}")
    check_outcome(outcome, assignee)

    level = t.level + 1
    resolution = None
    if level == MAX_LEVEL:
        action = {"type": "TaskResolve", "workstream": workstream, "task": task, "outcome": outcome}
        if assignee is not None:
            action["assignee"] = assignee
        resolution = governance.submit_proposal(
            state, SYSTEM_ACTOR, Kind.ORDINARY, action, origin=f"escalation:{workstream}/{task}", internal=True,
        )
    t.level = level
    t.state = TaskState.ESCALATED
    t.resolution_proposal = resolution or t.resolution_proposal
    logger.info("Задача %s/%s эскалирована до уровня %d%s", workstream, task, level,
                f", предложение {resolution}" if resolution else "")
    return t


def signoff_task(state: EngineState, workstream: str, task: str, by: str) -> Task:
    ws, t = get_task(state, workstream, task)
    if by != ws.steward or not state.is_active(by):
        raise Unauthorized(f"{by} не стюард {workstream}")
    if t.state not in (TaskState.ASSIGNED, TaskState.ESCALATED):
        raise NotOpen(f"{workstream}/{task} в состоянии {t.state.value}")
    t.signed_off = True
    return t


def verification_satisfied(state: EngineState, t: Task) -> bool:
    if t.verification.get("mode") == "oracle":
        r = oracle.latest_reading(state, t.verification["topic"])
        return r is not None and r.value is True
    return t.signed_off


def complete_task(state: EngineState, workstream: str, task: str, evidence: Optional[str] = None) -> Task:
    ws, t = get_task(state, workstream, task)
    if t.state not in (TaskState.ASSIGNED, TaskState.ESCALATED) or t.assignee is None:
        raise NotOpen(f"{workstream}/{task} в состоянии {t.state.value}")
    if not verification_satisfied(state, t):
        raise VerificationMissing(f"{workstream}/{task}: проверка не пройдена ({t.verification['mode']})")
    tokens.check_reward(state, "TaskReward", t.assignee, ws.reward_rate)

    t.state = TaskState.DONE
    t.completed_at = state.clock
    tokens.distribute_reward(state, "TaskReward", t.assignee, ws.reward_rate, source=f"{workstream}/{task}")
    logger.info("Задача %s/%s выполнена %s, награда %d", workstream, task, t.assignee, ws.reward_rate)
    return t


# ============================================================
#                 решение по эскалации (on-chain)
# ============================================================

def check_outcome(outcome: Any, assignee: Optional[str]) -> None:
    if outcome not in OUTCOMES:
        raise ValidationFailed(f"исход эскалации должен быть одним из {OUTCOMES}")
    if outcome == "reassign" and not assignee:
        raise ValidationFailed("reassign требует assignee")


def resolve_task(state: EngineState, workstream: str, task: str, outcome: str,
                 assignee: Optional[str] = None) -> Task:
    check_outcome(outcome, assignee)
    ws, t = get_task(state, workstream, task)
    if t.state in _TERMINAL:
        raise NotOpen(f"{workstream}/{task} уже в состоянии {t.state.value}")
    if outcome == "reassign":
        _check_assignee(state, ws, assignee)
        t.assignee = assignee
        t.state = TaskState.ASSIGNED
        t.signed_off = False
    else:
        t.state = TaskState.CANCELLED
    logger.info("Эскалация %s/%s решена: %s", workstream, task, outcome)
    return t


def task_summary(state: EngineState) -> List[Dict[str, Any]]:
    out = []
    for wid in sorted(state.workstreams):
        ws = state.workstreams[wid]
        for tid in sorted(ws.tasks):
            t = ws.tasks[tid]
            out.append({
                "workstream": wid, "task": tid, "state": t.state.value, "level": t.level,
                "assignee": t.assignee, "resolution_proposal": t.resolution_proposal,
            })
    return out
