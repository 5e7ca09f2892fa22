# app/scenario.py
"""
Формат сценария и его загрузка.

Сценарий задаётся JSON-объектом:
  name, description  : метаданные (попадают в genesis и в отчёт);
  config             : конфигурация genesis (params, policy, members, treasury,
                       foundation, directors, oracle, modules, workstreams,
                       committees, thresholds);
  script             : список событий {"tick": t, "event": ..., ...поля};
  expectations       : необязательные проверки итогового отчёта.

Загрузка проверяет только структуру и ссылки. Семантику (права, суммы,
состояния) проверяет движок при прогоне: ошибки там становятся отказами в журнале,
а не ошибками сценария.
"""
from __future__ import annotations

import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Set

from app.engine import Engine
from app.errors import ParseError, UnknownReference
from app.models import SYSTEM_ACTOR

logger = logging.getLogger(__name__)

ARCHETYPES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "archetypes")

# Поля событий, которые ссылаются на участника/директора/провайдера
_ACTOR_FIELDS = ("actor", "by", "proposer", "voter", "delegator", "delegate",
                 "challenger", "provider", "director", "assignee")
_EXPECTATION_KINDS = {"proposal_state", "resolution_state", "task_state", "verdict", "metric"}


@dataclass
class Scenario:
    name: str
    config: Dict[str, Any]
    script: List[Dict[str, Any]] = field(default_factory=list)
    expectations: List[Dict[str, Any]] = field(default_factory=list)
    description: str = ""
    source: Optional[str] = None

    def meta(self) -> Dict[str, Any]:
        return {"name": self.name, "description": self.description, "expectations": self.expectations}

    def with_params(self, **params: Any) -> "Scenario":
        """Копия с переопределёнными параметрами управления (для sweep)."""
        config = json.loads(json.dumps(self.config))
        config.setdefault("params", {}).update(params)
        return Scenario(self.name, config, list(self.script), list(self.expectations), self.description, self.source)


# ============================================================
#                      архетипы в пакете
# ============================================================

def list_archetypes() -> List[str]:
    return sorted(f[:-5] for f in os.listdir(ARCHETYPES_DIR) if f.endswith(".json"))


def archetype_path(name: str) -> str:
    path = os.path.join(ARCHETYPES_DIR, f"{name}.json")
    if not os.path.isfile(path):
        raise UnknownReference(name, "archetypes")
    return path


def export_archetype(name: str, dest: Optional[str] = None) -> str:
    src = archetype_path(name)
    dest = dest or f"{name}.json"
    if os.path.isdir(dest):
        dest = os.path.join(dest, f"{name}.json")
    shutil.copyfile(src, dest)
    logger.info("Архетип %s выгружен в %s", name, dest)
    return dest


def resolve_path(ref: str) -> str:
    """Путь к файлу или имя встроенного архетипа."""
    if os.path.isfile(ref):
        return ref
    if os.sep not in ref and not ref.endswith(".json") and ref in list_archetypes():
        return archetype_path(ref)
    return ref


# ============================================================
#                       проверка ссылок
# ============================================================

def _declared_actors(config: Dict[str, Any], script: List[Dict[str, Any]]) -> Set[str]:
    actors = {SYSTEM_ACTOR}
    actors |= {m.get("id") for m in config.get("members") or [] if isinstance(m, dict)}
    actors |= {d for d in config.get("directors") or [] if isinstance(d, str)}
    for p in (config.get("oracle") or {}).get("providers") or []:
        actors.add(p.get("id") if isinstance(p, dict) else (p[0] if isinstance(p, list) and p else p))
    # Участники, появляющиеся по ходу сценария
    for ev in script:
        if ev.get("event") == "register_member":
            actors.add(ev.get("actor"))
        action = ev.get("action") or {}
        if isinstance(action, dict) and action.get("type") in ("MemberAdmit", "DirectorElect"):
            actors.add(action.get("actor"))
        if isinstance(action, dict) and action.get("type") == "OracleSetChange":
            for p in action.get("providers") or []:
                actors.add(p.get("id") if isinstance(p, dict) else (p[0] if isinstance(p, list) and p else p))
    return {a for a in actors if isinstance(a, str)}


def _declared_roles(config: Dict[str, Any], script: List[Dict[str, Any]]) -> Set[str]:
    roles = set(config.get("roles") or [])
    if config.get("roles") is None:
        roles |= {r for m in config.get("members") or [] if isinstance(m, dict) for r in m.get("roles") or []}
    for ev in script:
        action = ev.get("action") or {}
        if isinstance(action, dict) and action.get("type") == "RoleGrant":
            roles.add(action.get("role"))
    return roles


def _declared_modules(config: Dict[str, Any], script: List[Dict[str, Any]]) -> Set[str]:
    modules = {m.get("id") for m in config.get("modules") or [] if isinstance(m, dict)}
    for ev in script:
        action = ev.get("action") or {}
        if isinstance(action, dict) and action.get("type") == "ModuleAdmit":
            modules.add((action.get("module") or {}).get("id"))
    return modules


def check_references(config: Dict[str, Any], script: List[Dict[str, Any]]) -> None:
    vocabulary = Engine().script_events()
    actors = _declared_actors(config, script)
    roles = _declared_roles(config, script)
    modules = _declared_modules(config, script)

    for i, ev in enumerate(script):
        where = f"script[{i}]"
        name = ev.get("event")
        if name not in vocabulary:
            raise UnknownReference(str(name), where)
        for key in _ACTOR_FIELDS:
            value = ev.get(key)
            if isinstance(value, str) and value not in actors:
                raise UnknownReference(value, f"{where}.{key}")
        for a in ev.get("approvals") or []:
            if a not in actors:
                raise UnknownReference(str(a), f"{where}.approvals")
        for r in list(ev.get("roles") or []) + ([ev["role"]] if isinstance(ev.get("role"), str) else []):
            if r not in roles:
                raise UnknownReference(str(r), f"{where}.roles")
        for t in ev.get("tags") or []:
            if t not in modules:
                raise UnknownReference(str(t), f"{where}.tags")
        action = ev.get("action") or {}
        if isinstance(action, dict) and action.get("type") in ("ModuleExit", "Compliance"):
            if action.get("module_id") not in modules:
                raise UnknownReference(str(action.get("module_id")), f"{where}.action")


# ============================================================
#                          загрузка
# ============================================================

def _check_script(raw: Any) -> List[Dict[str, Any]]:
    if not isinstance(raw, list):
        raise ParseError("script должен быть списком событий")
    last = 0
    out = []
    for i, ev in enumerate(raw):
        if not isinstance(ev, dict) or not isinstance(ev.get("event"), str):
            raise ParseError(f"script[{i}]: событие должно быть объектом с полем 'event'")
        tick = ev.get("tick", last)
        if not isinstance(tick, int) or isinstance(tick, bool) or tick < 0:
            raise ParseError(f"script[{i}]: tick должен быть целым ≥ 0")
        if tick < last:
            raise ParseError(f"script[{i}]: tick {tick} меньше предыдущего {last}")
        last = tick
        out.append({**ev, "tick": tick})
    return out


def parse_scenario(obj: Any, source: Optional[str] = None) -> Scenario:
    if not isinstance(obj, dict):
        raise ParseError("сценарий должен быть JSON-объектом")
    config = obj.get("config")
    if not isinstance(config, dict):
        raise ParseError("в сценарии нет объекта config")
    expectations = obj.get("expectations") or []
    if not isinstance(expectations, list):
        raise ParseError("expectations должен быть списком")
    for i, exp in enumerate(expectations):
        if not isinstance(exp, dict) or exp.get("kind") not in _EXPECTATION_KINDS:
            raise ParseError(f"expectations[{i}]: kind должен быть одним из {sorted(_EXPECTATION_KINDS)}")
    script = _check_script(obj.get("script") or [])
    check_references(config, script)
    name = obj.get("name") or (os.path.splitext(os.path.basename(source))[0] if source else "scenario")
    return Scenario(
        name=str(name),
        config=config,
        script=script,
        expectations=expectations,
        description=str(obj.get("description") or ""),
        source=source,
    )


def load_scenario(path: str) -> Scenario:
    path = resolve_path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ParseError(f"не удалось прочитать {path}: {e}") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", line=e.lineno) from e
    scenario = parse_scenario(obj, source=path)
    logger.info("Сценарий %s загружен: %d событий, %d ожиданий",
                scenario.name, len(scenario.script), len(scenario.expectations))
    return scenario
