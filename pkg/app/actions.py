# app/actions.py
"""
Каталог действий предложений: форма полей, минимальный вид голосования,
место исполнения (on-chain модуль или очередь фонда) и категория мандата фонда.

Действие это обычный словарь {"type": <вариант>, ...поля}; так оно без
преобразований лежит в журнале и в состоянии.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Optional

from app.errors import KindMismatch, ValidationFailed
from app.models import EngineState, Kind, Remit

ONCHAIN = "onchain"
FOUNDATION = "foundation"


@dataclass(frozen=True)
class ActionSpec:
    fields: Dict[str, str]
    min_kind: Kind = Kind.ORDINARY
    site: str = ONCHAIN
    remit: Optional[Remit] = None
    capped: bool = False           # вид зависит от treasury_ordinary_cap
    override_only: bool = False    # допустим только Override
    internal: bool = False         # создаётся движком, не участниками


ACTIONS: Dict[str, ActionSpec] = {
    "TreasuryTransfer": ActionSpec({"to": "str", "amount": "int"}, capped=True, remit=Remit.CUSTODY),
    "Grant": ActionSpec({"to": "str", "amount": "int", "schedule": "dict?", "reward": "str?"}, capped=True),
    "Airdrop": ActionSpec({"recipients": "list", "amount_each": "int"}, capped=True),
    "ParamChange": ActionSpec({"field": "str", "value": "any"}, min_kind=Kind.MAJOR),
    "DirectorElect": ActionSpec({"actor": "str"}, min_kind=Kind.MAJOR),
    "DirectorRatify": ActionSpec({"actor": "str"}, min_kind=Kind.MAJOR),
    "DirectorRemove": ActionSpec({"actor": "str", "cause": "str"}, min_kind=Kind.MAJOR),
    "ModuleAdmit": ActionSpec({"module": "dict"}, min_kind=Kind.MAJOR),
    "ModuleExit": ActionSpec({"module_id": "str"}, min_kind=Kind.MAJOR),
    "OracleSetChange": ActionSpec({"providers": "list", "n_active": "int?"}, min_kind=Kind.MAJOR),
    "OracleOverride": ActionSpec({"topic": "str", "value": "any", "round": "int?"},
                                 min_kind=Kind.OVERRIDE, override_only=True),
    "Upgrade": ActionSpec({"tag": "str"}, min_kind=Kind.MAJOR),
    "Clawback": ActionSpec({"actor": "str", "amount": "int", "cause": "str"}, min_kind=Kind.MAJOR),
    "RoleGrant": ActionSpec({"actor": "str", "role": "str"}),
    "CommitteeCharter": ActionSpec({"members": "list", "mandate": "dict", "id": "str?"}, min_kind=Kind.MAJOR),
    "WorkstreamCreate": ActionSpec({"spec": "dict"}),
    "MemberAdmit": ActionSpec({"actor": "str", "roles": "list"}),
    "TaskResolve": ActionSpec({"workstream": "str", "task": "str", "outcome": "str", "assignee": "str?"}),
    "Custody": ActionSpec({"asset": "str", "amount": "int?"}, site=FOUNDATION, remit=Remit.CUSTODY),
    "Licensing": ActionSpec({"licensee": "str", "ip_ref": "str"}, site=FOUNDATION, remit=Remit.LICENSING),
    "Contracting": ActionSpec({"counterparty": "str", "terms_hash": "str"}, site=FOUNDATION, remit=Remit.CONTRACTING),
    "Compliance": ActionSpec({"module_id": "str", "report_hash": "str"}, site=FOUNDATION, remit=Remit.COMPLIANCE),
    "Challenge": ActionSpec({"target": "str"}, min_kind=Kind.OVERRIDE, override_only=True, internal=True),
}


def _check_field(variant: str, name: str, kind: str, value: Any) -> None:
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    if value is None:
        if optional:
            return
        raise ValidationFailed(f"{variant}: поле '{name}' обязательно")
    ok = {
        "str": lambda v: isinstance(v, str) and v != "",
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0,
        "list": lambda v: isinstance(v, list),
        "dict": lambda v: isinstance(v, dict),
        "any": lambda v: True,
    }[kind](value)
    if not ok:
        raise ValidationFailed(f"{variant}: поле '{name}' должно быть {kind}")


def spec_of(action: Any) -> ActionSpec:
    if not isinstance(action, dict) or "type" not in action:
        raise ValidationFailed("действие должно быть объектом с полем 'type'")
    spec = ACTIONS.get(action["type"])
    if spec is None:
        raise ValidationFailed(f"неизвестный вариант действия: {action['type']}")
    return spec


def validate_shape(action: Dict[str, Any], allow_internal: bool = False) -> ActionSpec:
    spec = spec_of(action)
    if spec.internal and not allow_internal:
        raise ValidationFailed(f"{action['type']} создаётся только движком")
    for name, kind in spec.fields.items():
        _check_field(action["type"], name, kind, action.get(name))
    unknown = set(action) - set(spec.fields) - {"type"}
    if unknown:
        raise ValidationFailed(f"{action['type']}: лишние поля {sorted(unknown)}")
    return spec


def amount_of(action: Dict[str, Any]) -> int:
    t = action.get("type")
    if t in ("TreasuryTransfer", "Grant", "Clawback"):
        return int(action.get("amount") or 0)
    if t == "Airdrop":
        return int(action.get("amount_each") or 0) * len(action.get("recipients") or [])
    if t == "Custody":
        return int(action.get("amount") or 0)
    return 0


def min_kind(state: EngineState, action: Dict[str, Any]) -> Kind:
    spec = spec_of(action)
    if spec.capped:
        return Kind.MAJOR if amount_of(action) > state.params.treasury_ordinary_cap else Kind.ORDINARY
    return spec.min_kind


def check_kind(state: EngineState, action: Dict[str, Any], kind: Kind) -> None:
    """Вид предложения должен быть не слабее минимального; Override допустим только для override-действий."""
    spec = spec_of(action)
    required = min_kind(state, action)
    if spec.override_only:
        if kind != Kind.OVERRIDE:
            raise KindMismatch(f"{action['type']} требует Override", required=required.value, got=kind.value)
        return
    if kind == Kind.OVERRIDE:
        raise KindMismatch(f"{action['type']} не допускает Override", got=kind.value)
    if kind.rank < required.rank:
        raise KindMismatch(f"{action['type']} требует {required.value}", required=required.value, got=kind.value)


def is_foundation_bound(state: EngineState, action: Dict[str, Any]) -> bool:
    spec = spec_of(action)
    if spec.site == FOUNDATION:
        return True
    # Перевод внешнему контрагенту (не участнику) исполняет фонд
    return action["type"] == "TreasuryTransfer" and action.get("to") not in state.members


def remit_of(action: Dict[str, Any]) -> Optional[Remit]:
    return spec_of(action).remit
