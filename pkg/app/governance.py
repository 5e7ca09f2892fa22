# app/governance.py
"""
Программируемый слой управления: жизненный цикл предложений, голосование
(по токенам или «один участник, один голос»), одношаговое делегирование,
комитеты, таймлоки, окна оспаривания и ограничение частоты апгрейдов.

Правила мутаций такие же, как во всём движке: сначала все проверки, потом
изменение состояния. Исключение из check-фазы оставляет состояние нетронутым.
"""
from __future__ import annotations

import dataclasses
import logging
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional, Set, Tuple

from app import actions, foundation, jurisdiction, oracle, telemetry, tokens, workstreams
from app.canonical import parse_fraction
from app.errors import (
    AlreadyVoted,
    ChainedDelegation,
    ChallengesDisabled,
    ConflictingVote,
    DelegatedAway,
    DuplicateMember,
    InsufficientCommitteeApproval,
    NoFoundation,
    NotAMember,
    NotChallengeable,
    NotOpen,
    OutsideMandate,
    RateLimited,
    SelfDelegation,
    Unauthorized,
    UnauthorizedOnboarding,
    UnknownActor,
    UnknownProposal,
    ValidationFailed,
    WindowNotElapsed,
)
from app.models import (
    SYSTEM_ACTOR,
    Choice,
    Committee,
    Delegation,
    EngineState,
    GovernanceParams,
    Kind,
    Member,
    MemberStatus,
    Proposal,
    ProposalState,
    Remit,
    VoteMode,
    VoteTally,
)

logger = logging.getLogger(__name__)

# Состояния, в которых Upgrade ещё «занимает» слот эпохи
_DEAD_STATES = {ProposalState.FAILED, ProposalState.WITHDRAWN, ProposalState.REVERTED}


# ============================================================
#                       участники и роли
# ============================================================

def _roles(raw: Any) -> Set[str]:
    if raw is None:
        return set()
    if not isinstance(raw, (list, tuple, set)) or not all(isinstance(r, str) and r for r in raw):
        raise ValidationFailed(f"роли должны быть списком строк: {raw!r}")
    return set(raw)


def check_register(state: EngineState, actor: str, roles: Iterable[str], by: Optional[str] = None,
                   via_proposal: Optional[str] = None, genesis: bool = False) -> Set[str]:
    if not isinstance(actor, str) or not actor or actor == SYSTEM_ACTOR:
        raise ValidationFailed(f"некорректный идентификатор участника: {actor!r}")
    if state.is_active(actor):
        raise DuplicateMember(f"{actor} уже активный участник")
    role_set = _roles(list(roles) if roles is not None else [])
    if not (genesis or via_proposal):
        if by is None or by not in state.params.role_admins or not state.is_active(by):
            raise UnauthorizedOnboarding(f"{by or '?'} не может принимать участников напрямую")
    unknown = role_set - state.roles
    if unknown:
        raise ValidationFailed(f"незарегистрированные роли: {sorted(unknown)}")
    return role_set


def register_member(state: EngineState, actor: str, roles: Iterable[str], by: Optional[str] = None,
                    via_proposal: Optional[str] = None, genesis: bool = False) -> Member:
    role_set = check_register(state, actor, roles, by=by, via_proposal=via_proposal, genesis=genesis)
    member = Member(actor=actor, roles=role_set, status=MemberStatus.ACTIVE, joined_at=state.clock)
    state.members[actor] = member
    tokens.open_account(state, actor)
    logger.info("Участник %s принят (роли %s, основание: %s)",
                actor, sorted(role_set), "genesis" if genesis else (via_proposal or by))
    return member


def exit_member(state: EngineState, actor: str) -> None:
    if not state.is_active(actor):
        raise NotAMember(f"{actor} не является активным участником")
    state.members[actor].status = MemberStatus.EXITED
    # Вышедший не голосует ни сам, ни через делегата
    state.delegations = [d for d in state.delegations if actor not in (d.delegator, d.delegate)]
    logger.info("Участник %s вышел (tick=%d)", actor, state.clock)


def grant_role(state: EngineState, by: str, actor: str, role: str) -> None:
    """Прямая выдача роли администратором (режим initiator-led permissions)."""
    if by not in state.params.role_admins or not state.is_active(by):
        raise Unauthorized(f"{by} не администратор ролей")
    if not state.is_active(actor):
        raise NotAMember(f"{actor} не является активным участником")
    if role not in state.roles:
        raise ValidationFailed(f"роль {role} не зарегистрирована")
    state.members[actor].roles.add(role)


# ============================================================
#                        сила голоса
# ============================================================

def own_power(state: EngineState, actor: str, mode: VoteMode) -> int:
    if not state.is_active(actor):
        return 0
    if mode == VoteMode.ONE_MEMBER_ONE_VOTE:
        return 1
    acc = state.accounts.get(actor)
    return acc.own_power if acc else 0


def delegators_of(state: EngineState, delegate: str, kind: Kind) -> List[str]:
    return sorted(
        d.delegator for d in state.delegations
        if d.delegate == delegate and kind in d.scope and state.is_active(d.delegator)
    )


def delegated_away(state: EngineState, actor: str, kind: Kind) -> Optional[Delegation]:
    for d in state.delegations:
        if d.delegator == actor and kind in d.scope:
            return d
    return None


def voting_power(state: EngineState, actor: str, kind: Kind, mode: VoteMode) -> int:
    """Собственная сила плюс сила делегаторов в области kind (одна ступень)."""
    if not state.is_active(actor):
        return 0
    return own_power(state, actor, mode) + sum(own_power(state, d, mode) for d in delegators_of(state, actor, kind))


# ============================================================
#                     предложения: подача
# ============================================================

def parse_kind(raw: Any) -> Kind:
    if isinstance(raw, Kind):
        return raw
    try:
        return Kind(raw)
    except ValueError:
        raise ValidationFailed(f"неизвестный вид предложения: {raw!r}")


def current_epoch(state: EngineState, now: Optional[int] = None) -> int:
    now = state.clock if now is None else now
    e = state.params.upgrade_epoch
    return now // e if e > 0 else 0


def check_upgrade_slot(state: EngineState) -> None:
    epoch = current_epoch(state)
    live = [
        p for p in state.proposals.values()
        if p.action.get("type") == "Upgrade" and p.state not in _DEAD_STATES
        and current_epoch(state, p.opened_at) == epoch
    ]
    if len(live) >= state.params.max_upgrades_per_epoch:
        raise RateLimited(f"лимит апгрейдов в эпохе {epoch} исчерпан", epoch=epoch)


def precheck_action(state: EngineState, action: Dict[str, Any]) -> None:
    """Статическая проверка содержимого действия при подаче (состояние не меняется)."""
    t = action["type"]
    if t == "ParamChange":
        resolve_param(action["field"], action["value"])
    elif t == "ModuleAdmit":
        jurisdiction.parse_module(action["module"], state.clock, None, set())
    elif t == "OracleSetChange":
        oracle.check_set_change(action["providers"], action.get("n_active"))
    elif t == "OracleOverride":
        oracle.check_override(state, action["topic"], action["value"])
    elif t == "CommitteeCharter":
        parse_mandate(action["mandate"])
        if not action["members"] or not all(isinstance(m, str) and m for m in action["members"]):
            raise ValidationFailed("CommitteeCharter: нужен непустой список участников")
    elif t == "WorkstreamCreate":
        workstreams.parse_spec(action["spec"])
    elif t == "MemberAdmit":
        _roles(action["roles"])
    elif t == "Grant":
        tokens.check_grant_kind(action.get("reward"))
        tokens.check_schedule(action.get("schedule"))
    elif t == "Airdrop":
        if not all(isinstance(r, str) and r for r in action["recipients"]):
            raise ValidationFailed("Airdrop: получатели должны быть строками")
    elif t == "TaskResolve":
        workstreams.check_outcome(action["outcome"], action.get("assignee"))


def _check_proposer(state: EngineState, proposer: str, internal: bool) -> None:
    if internal and proposer == SYSTEM_ACTOR:
        return
    m = state.member(proposer)
    if m is None or not m.active:
        raise NotAMember(f"{proposer} не является активным участником")
    allowed = state.params.proposer_roles
    if allowed and not (allowed & m.roles):
        raise Unauthorized(f"{proposer} не имеет роли для подачи предложений")


def _open(state: EngineState, kind: Kind, action: Dict[str, Any], proposer: str,
          tags: Set[str], origin: Optional[str] = None) -> Proposal:
    mode = jurisdiction.effective_vote_mode(state, tags)
    snapshot = {
        a: own_power(state, a, mode)
        for a in sorted(state.members) if state.members[a].active
    }
    p = Proposal(
        id=state.next_id("P"),
        kind=kind,
        action=action,
        proposer=proposer,
        opened_at=state.clock,
        tally=VoteTally(eligible_power=sum(snapshot.values()), mode=mode),
        jurisdiction_tags=set(tags),
        snapshot=snapshot,
        origin=origin,
    )
    state.proposals[p.id] = p
    logger.info("Предложение %s (%s, %s) открыто: %s", p.id, kind.value, mode.value, action.get("type"))
    return p


def submit_proposal(state: EngineState, proposer: str, kind: Any, action: Dict[str, Any],
                    tags: Optional[Iterable[str]] = None, origin: Optional[str] = None,
                    internal: bool = False) -> str:
    _check_proposer(state, proposer, internal)
    k = parse_kind(kind)
    actions.validate_shape(action)
    actions.check_kind(state, action, k)
    tag_set = set(tags or [])
    jurisdiction.check_tags(state, tag_set)
    precheck_action(state, action)
    if action["type"] == "Upgrade":
        check_upgrade_slot(state)
    return _open(state, k, dict(action), proposer, tag_set, origin).id


def get_proposal(state: EngineState, pid: str) -> Proposal:
    p = state.proposals.get(pid)
    if p is None:
        raise UnknownProposal(f"нет предложения {pid}")
    return p


# ============================================================
#                       голосование
# ============================================================

def _voting_end(state: EngineState, p: Proposal) -> int:
    return p.opened_at + state.params.voting_window


def _choice(raw: Any) -> Choice:
    try:
        return Choice(raw)
    except ValueError:
        raise ValidationFailed(f"неизвестный вариант голоса: {raw!r}")


def cast_vote(state: EngineState, voter: str, pid: str, choice: Any) -> VoteTally:
    p = get_proposal(state, pid)
    c = _choice(choice)
    if p.state != ProposalState.OPEN or state.clock >= _voting_end(state, p):
        raise NotOpen(f"{pid} не принимает голоса (state={p.state.value})")
    if not state.is_active(voter):
        raise NotAMember(f"{voter} не является активным участником")
    if voter not in p.snapshot:
        raise NotAMember(f"{voter} не был участником на момент открытия {pid}")
    if voter in p.votes or voter in p.counted:
        raise AlreadyVoted(f"{voter} уже учтён в {pid}")
    if delegated_away(state, voter, p.kind) is not None:
        raise DelegatedAway(f"{voter} делегировал голос по {p.kind.value}")

    contributors = [voter] + [
        d for d in delegators_of(state, voter, p.kind)
        if d in p.snapshot and d not in p.counted and d not in p.votes
    ]
    power = sum(p.snapshot[a] for a in contributors)
    t = p.tally
    if c == Choice.FOR:
        t.for_power += power
    elif c == Choice.AGAINST:
        t.against_power += power
    else:
        t.abstain_power += power
    p.votes[voter] = c
    for a in contributors:
        p.counted[a] = voter
    logger.debug("%s голосует %s по %s с силой %d", voter, c.value, pid, power)
    return t


def _parse_scope(raw: Any) -> Set[Kind]:
    if not isinstance(raw, (list, tuple, set)) or not raw:
        raise ValidationFailed("scope делегирования должен быть непустым списком видов")
    return {parse_kind(k) for k in raw}


def _conflicting_open(state: EngineState, actor: str, scope: Set[Kind]) -> Optional[str]:
    for p in state.proposals.values():
        if p.state == ProposalState.OPEN and p.kind in scope and actor in p.counted:
            return p.id
    return None


def delegate(state: EngineState, delegator: str, delegate_to: str, scope: Any) -> Delegation:
    kinds = _parse_scope(scope)
    if delegator == delegate_to:
        raise SelfDelegation(f"{delegator} не может делегировать сам себе")
    for a in (delegator, delegate_to):
        if not state.is_active(a):
            raise NotAMember(f"{a} не является активным участником")
    for k in kinds:
        if delegated_away(state, delegate_to, k) is not None:
            raise ChainedDelegation(f"{delegate_to} сам делегировал {k.value}")
        if delegators_of(state, delegator, k):
            raise ChainedDelegation(f"{delegator} уже получил делегирование {k.value}")
        if delegated_away(state, delegator, k) is not None:
            raise ValidationFailed(f"{delegator} уже делегировал {k.value}; сначала отзовите")
    conflict = _conflicting_open(state, delegator, kinds)
    if conflict:
        raise ConflictingVote(f"{delegator} уже учтён в открытом {conflict}")

    d = Delegation(delegator=delegator, delegate=delegate_to, scope=kinds, created_at=state.clock)
    state.delegations.append(d)
    logger.info("%s делегирует %s -> %s", delegator, sorted(k.value for k in kinds), delegate_to)
    return d


def revoke_delegation(state: EngineState, delegator: str, scope: Any) -> None:
    kinds = _parse_scope(scope)
    if not any(d.delegator == delegator and d.scope & kinds for d in state.delegations):
        raise ValidationFailed(f"у {delegator} нет делегирований в {sorted(k.value for k in kinds)}")
    conflict = _conflicting_open(state, delegator, kinds)
    if conflict:
        raise ConflictingVote(f"сила {delegator} уже учтена в открытом {conflict}")
    kept: List[Delegation] = []
    for d in state.delegations:
        if d.delegator == delegator:
            d.scope = d.scope - kinds
            if not d.scope:
                continue
        kept.append(d)
    state.delegations = kept


# ============================================================
#                  закрытие голосования
# ============================================================

def verdict(tally: VoteTally, quorum: Fraction, threshold: Fraction) -> bool:
    """Кворум по доле поданной силы, затем строгое превышение порога: ничья проваливается."""
    decisive = tally.for_power + tally.against_power
    if tally.eligible_power <= 0 or decisive <= 0:
        return False
    if Fraction(tally.cast_power, tally.eligible_power) < quorum:
        return False
    return Fraction(tally.for_power, decisive) > threshold


def _enter_timelock(state: EngineState, p: Proposal, now: int) -> None:
    p.passed_at = now
    p.timelock_ends = now + state.params.timelock
    p.challenge_ends = p.timelock_ends + state.params.challenge_window
    p.state = ProposalState.TIMELOCKED


def _close(state: EngineState, p: Proposal, now: int) -> ProposalState:
    params = state.params
    passed = verdict(p.tally, params.quorum(p.kind), params.threshold(p.kind))
    p.closed_at = now
    telemetry.inc(telemetry.PROPOSAL_VERDICTS, "Passed" if passed else "Failed")
    logger.info("Голосование по %s закрыто: %s (for=%d against=%d abstain=%d eligible=%d)",
                p.id, "Passed" if passed else "Failed", p.tally.for_power, p.tally.against_power,
                p.tally.abstain_power, p.tally.eligible_power)

    if p.challenge_of is not None:
        _resolve_challenge(state, p, passed, now)
        return p.state
    if passed:
        p.state = ProposalState.PASSED
        _enter_timelock(state, p, now)
    else:
        p.state = ProposalState.FAILED
    return p.state


def close_voting(state: EngineState, pid: str) -> ProposalState:
    p = get_proposal(state, pid)
    if p.state != ProposalState.OPEN:
        raise NotOpen(f"{pid} не открыто (state={p.state.value})")
    end = _voting_end(state, p)
    if state.clock < end:
        raise WindowNotElapsed(f"окно голосования {pid} закрывается на тике {end}")
    return _close(state, p, state.clock)


# ============================================================
#                       оспаривание
# ============================================================

def file_challenge(state: EngineState, challenger: str, pid: str) -> str:
    if not state.params.challenges_enabled:
        raise ChallengesDisabled("механизм оспаривания отключён")
    if not state.is_active(challenger):
        raise NotAMember(f"{challenger} не является активным участником")
    target = get_proposal(state, pid)
    if target.state != ProposalState.CHALLENGEABLE or target.challenge_of is not None:
        raise NotChallengeable(f"{pid} нельзя оспорить (state={target.state.value})")

    challenge = _open(state, Kind.OVERRIDE, {"type": "Challenge", "target": pid}, challenger,
                      set(target.jurisdiction_tags), origin="challenge")
    challenge.challenge_of = pid
    target.challenges.append(challenge.id)
    target.state = ProposalState.FROZEN
    logger.info("%s оспаривает %s: заморожено, голосование %s", challenger, pid, challenge.id)
    return challenge.id


def _resolve_challenge(state: EngineState, challenge: Proposal, passed: bool, now: int) -> None:
    target = state.proposals[challenge.challenge_of]
    if passed:
        challenge.state = ProposalState.EXECUTED_ON_CHAIN
        challenge.passed_at = now
        challenge.executed_at = now
        target.state = ProposalState.WITHDRAWN
        target.outcome = f"withdrawn by {challenge.id}"
        logger.info("Оспаривание %s прошло: %s отозвано", challenge.id, target.id)
    else:
        challenge.state = ProposalState.FAILED
        # Окно оспаривания начинается заново целиком
        target.state = ProposalState.CHALLENGEABLE
        target.challenge_ends = now + state.params.challenge_window
        logger.info("Оспаривание %s не прошло: %s снова оспоримо до тика %d",
                    challenge.id, target.id, target.challenge_ends)


# ============================================================
#                         комитеты
# ============================================================

def parse_mandate(raw: Any) -> Dict[str, Optional[int]]:
    if not isinstance(raw, dict) or not raw:
        raise ValidationFailed("мандат комитета должен быть непустым объектом {вариант: лимит}")
    out: Dict[str, Optional[int]] = {}
    for variant, cap in raw.items():
        spec = actions.ACTIONS.get(variant)
        if spec is None or spec.internal or spec.override_only:
            raise ValidationFailed(f"вариант {variant} не может входить в мандат")
        if cap is not None and (not isinstance(cap, int) or isinstance(cap, bool) or cap < 0):
            raise ValidationFailed(f"лимит мандата {variant} должен быть целым ≥ 0")
        out[variant] = cap
    return out


def charter_committee(state: EngineState, members: List[str], mandate: Any,
                      committee_id: Optional[str] = None) -> Committee:
    parsed = parse_mandate(mandate)
    if not members or len(set(members)) != len(members):
        raise ValidationFailed("состав комитета пуст или содержит повторы")
    for m in members:
        if not state.is_active(m):
            raise NotAMember(f"{m} не является активным участником")
    if committee_id is not None and committee_id in state.committees:
        raise ValidationFailed(f"комитет {committee_id} уже существует")
    cid = committee_id or state.next_id("C")
    c = Committee(id=cid, members=set(members), mandate=parsed, epoch=current_epoch(state))
    state.committees[cid] = c
    logger.info("Комитет %s учреждён: %s, мандат %s", cid, sorted(members), parsed)
    return c


def committee_decide(state: EngineState, committee_id: str, action: Dict[str, Any],
                     approvals: List[str], tags: Optional[Iterable[str]] = None) -> str:
    c = state.committees.get(committee_id)
    if c is None:
        raise ValidationFailed(f"нет комитета {committee_id}")
    actions.validate_shape(action)
    variant = action["type"]
    if variant not in c.mandate:
        raise OutsideMandate(f"{variant} вне мандата {committee_id}")
    cap = c.mandate[variant]
    if cap is not None and actions.amount_of(action) > cap:
        raise OutsideMandate(f"{variant}: сумма {actions.amount_of(action)} выше лимита {cap}")
    approvals = list(approvals or [])
    valid = {a for a in approvals if a in c.members and state.is_active(a)}
    if len(valid) != len(approvals) or 2 * len(valid) <= len(c.members):
        raise InsufficientCommitteeApproval(
            f"одобрений {len(valid)} из {len(c.members)}", approvals=",".join(approvals))
    epoch = current_epoch(state)
    used = c.decisions_this_epoch if c.epoch == epoch else 0
    if used >= state.params.committee_rate_limit:
        raise RateLimited(f"комитет {committee_id} исчерпал лимит решений в эпохе {epoch}", epoch=epoch)
    tag_set = set(tags or [])
    jurisdiction.check_tags(state, tag_set)
    precheck_action(state, action)
    if variant == "Upgrade":
        check_upgrade_slot(state)

    c.epoch = epoch
    c.decisions_this_epoch = used + 1
    p = _open(state, actions.min_kind(state, action), dict(action), f"committee:{committee_id}",
              tag_set, origin="committee")
    p.via_committee = committee_id
    p.approvals = sorted(valid)
    _enter_timelock(state, p, state.clock)
    c.decisions.append(p.id)
    logger.info("Комитет %s принял решение %s (%s)", committee_id, p.id, variant)
    return p.id


# ============================================================
#                 ParamChange: реестр параметров
# ============================================================

def _c_fraction(v: Any) -> Fraction:
    try:
        return parse_fraction(v)
    except (ValueError, ZeroDivisionError):
        raise ValidationFailed(f"не доля: {v!r}")


def _c_nonneg(v: Any) -> int:
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        raise ValidationFailed(f"ожидалось целое ≥ 0: {v!r}")
    return v


def _c_positive(v: Any) -> int:
    if _c_nonneg(v) == 0:
        raise ValidationFailed("ожидалось целое > 0")
    return v


def _c_optional_int(v: Any) -> Optional[int]:
    return None if v is None else _c_nonneg(v)


def _c_bool(v: Any) -> bool:
    if not isinstance(v, bool):
        raise ValidationFailed(f"ожидался bool: {v!r}")
    return v


def _c_remit(v: Any) -> Set[Remit]:
    try:
        return {Remit(x) for x in _roles(v)}
    except ValueError:
        raise ValidationFailed(f"неизвестная категория мандата: {v!r}")


# поле -> (раздел, атрибут, приведение)
PARAM_FIELDS: Dict[str, Tuple[str, str, Callable[[Any], Any]]] = {}
for _name in ("quorum_ordinary", "quorum_major", "quorum_override",
              "majority_ordinary", "supermajority_major", "supermajority_override"):
    PARAM_FIELDS[f"governance.{_name}"] = ("governance", _name, _c_fraction)
for _name in ("voting_window", "timelock", "challenge_window", "max_upgrades_per_epoch",
              "committee_rate_limit", "treasury_ordinary_cap"):
    PARAM_FIELDS[f"governance.{_name}"] = ("governance", _name, _c_nonneg)
PARAM_FIELDS["governance.upgrade_epoch"] = ("governance", "upgrade_epoch", _c_positive)
PARAM_FIELDS["governance.role_admins"] = ("governance", "role_admins", _roles)
PARAM_FIELDS["governance.proposer_roles"] = ("governance", "proposer_roles", _roles)
PARAM_FIELDS["governance.challenges_enabled"] = ("governance", "challenges_enabled", _c_bool)
PARAM_FIELDS["policy.contribution_reward_rate"] = ("policy", "contribution_reward_rate", _c_nonneg)
PARAM_FIELDS["policy.grant_cap"] = ("policy", "grant_cap", _c_optional_int)
PARAM_FIELDS["policy.grant_roles"] = ("policy", "grant_roles", _roles)
PARAM_FIELDS["policy.airdrop_roles"] = ("policy", "airdrop_roles", _roles)
PARAM_FIELDS["policy.stake_lockup"] = ("policy", "stake_lockup", _c_nonneg)
PARAM_FIELDS["foundation.remit"] = ("foundation", "remit", _c_remit)
PARAM_FIELDS["foundation.max_execution_delay"] = ("foundation", "max_execution_delay", _c_nonneg)
PARAM_FIELDS["oracle.m_min"] = ("oracle", "m_min", _c_positive)
PARAM_FIELDS["oracle.bool_threshold"] = ("oracle", "bool_threshold", _c_fraction)
PARAM_FIELDS["oracle.n_active"] = ("oracle", "n_active", _c_positive)
PARAM_FIELDS["oracle.rotation_epoch"] = ("oracle", "rotation_epoch", _c_nonneg)


def resolve_param(name: Any, value: Any) -> Tuple[str, str, Any]:
    if not isinstance(name, str):
        raise ValidationFailed(f"некорректное имя параметра: {name!r}")
    key = name if "." in name else f"governance.{name}"
    entry = PARAM_FIELDS.get(key)
    if entry is None:
        raise ValidationFailed(f"параметр {name} нельзя менять через ParamChange")
    section, attr, coerce = entry
    return section, attr, coerce(value)


def validate_params(p: GovernanceParams) -> None:
    for k in Kind:
        if not (0 < p.quorum(k) <= 1):
            raise ValidationFailed(f"кворум {k.value} вне (0, 1]")
        if not (Fraction(1, 2) <= p.threshold(k) <= 1):
            raise ValidationFailed(f"порог {k.value} вне [1/2, 1]")
    if not (p.supermajority_override >= p.supermajority_major >= p.majority_ordinary):
        raise ValidationFailed("пороги должны расти: Override ≥ Major ≥ Ordinary")
    for name in ("voting_window", "timelock", "challenge_window", "max_upgrades_per_epoch",
                 "committee_rate_limit", "treasury_ordinary_cap"):
        if getattr(p, name) < 0:
            raise ValidationFailed(f"{name} < 0")
    if p.upgrade_epoch <= 0:
        raise ValidationFailed("upgrade_epoch должен быть > 0")


def apply_param_change(state: EngineState, name: str, value: Any) -> None:
    section, attr, coerced = resolve_param(name, value)
    target = {
        "governance": state.params,
        "policy": state.policy,
        "foundation": state.foundation,
        "oracle": state.oracle,
    }[section]
    if section == "foundation" and not state.foundation.configured:
        raise NoFoundation("фонд не сконфигурирован")
    candidate = dataclasses.replace(target, **{attr: coerced})
    if section == "governance":
        validate_params(candidate)
    if section == "oracle" and attr == "bool_threshold" and not (0 < coerced <= 1):
        raise ValidationFailed("bool_threshold вне (0, 1]")
    setattr(target, attr, coerced)
    if section == "oracle":
        state.oracle.active_set = oracle.active_set_for(state.oracle, state.clock)
    logger.info("ParamChange: %s.%s = %r", section, attr, coerced)


# ============================================================
#                  исполнение и жизненный цикл
# ============================================================

def _upgrade(state: EngineState, tag: str, pid: str) -> None:
    epoch = current_epoch(state)
    done = sum(1 for u in state.upgrades if u["epoch"] == epoch)
    if done >= state.params.max_upgrades_per_epoch:
        raise RateLimited(f"в эпохе {epoch} апгрейд уже исполнен", epoch=epoch)
    state.upgrades.append({"tag": tag, "proposal": pid, "tick": state.clock, "epoch": epoch})


def _transfer(state: EngineState, p: Proposal) -> None:
    cid = jurisdiction.forbidding_constraint(state, p.action, p.jurisdiction_tags)
    if cid is not None:
        raise Unauthorized(f"перевод запрещён ограничением {cid}", constraint=cid)
    tokens.distribute_reward(state, "Transfer", p.action["to"], p.action["amount"], source=p.id)


def _role_grant(state: EngineState, actor: str, role: str) -> None:
    if not state.is_active(actor):
        raise UnknownActor(f"{actor} не является активным участником")
    state.roles.add(role)
    state.members[actor].roles.add(role)


def apply_onchain(state: EngineState, p: Proposal) -> None:
    """Применяет on-chain действие. Любая ошибка оставляет состояние нетронутым."""
    a = p.action
    t = a["type"]
    if t == "TreasuryTransfer":
        _transfer(state, p)
    elif t == "Grant":
        tokens.distribute_reward(state, tokens.check_grant_kind(a.get("reward")), a["to"], a["amount"],
                                 schedule=a.get("schedule"), source=p.id)
    elif t == "Airdrop":
        tokens.airdrop(state, a["recipients"], a["amount_each"], source=p.id)
    elif t == "ParamChange":
        apply_param_change(state, a["field"], a["value"])
    elif t == "DirectorElect":
        foundation.elect_director(state, a["actor"])
    elif t == "DirectorRatify":
        foundation.ratify_director(state, a["actor"])
    elif t == "DirectorRemove":
        foundation.remove_director(state, a["actor"], a["cause"])
    elif t == "ModuleAdmit":
        jurisdiction.admit_module(state, a["module"], p.id)
    elif t == "ModuleExit":
        jurisdiction.exit_module(state, a["module_id"])
    elif t == "OracleSetChange":
        oracle.apply_oracle_set_change(state, a["providers"], a.get("n_active"), p.id)
    elif t == "OracleOverride":
        oracle.apply_override(state, a["topic"], a["value"], a.get("round"), p.id)
    elif t == "Upgrade":
        _upgrade(state, a["tag"], p.id)
    elif t == "Clawback":
        tokens.execute_clawback(state, a["actor"], a["amount"], a["cause"], proposal=p.id)
    elif t == "RoleGrant":
        _role_grant(state, a["actor"], a["role"])
    elif t == "CommitteeCharter":
        charter_committee(state, a["members"], a["mandate"], a.get("id"))
    elif t == "WorkstreamCreate":
        workstreams.create_workstream(state, a["spec"], proposal=p.id)
    elif t == "MemberAdmit":
        register_member(state, a["actor"], a["roles"], via_proposal=p.id)
    elif t == "TaskResolve":
        workstreams.resolve_task(state, a["workstream"], a["task"], a["outcome"], a.get("assignee"))
    else:
        raise ValidationFailed(f"{t} не исполняется on-chain")


def _revert(p: Proposal, err: ValidationFailed) -> None:
    p.state = ProposalState.REVERTED
    p.outcome = err.code
    p.cited_constraint = err.details.get("constraint")
    telemetry.inc(telemetry.PROPOSAL_VERDICTS, "Reverted")
    logger.warning("Исполнение %s отменено: %s (%s)", p.id, err.code, err.reason)


def _dispatch(state: EngineState, p: Proposal) -> None:
    now = state.clock
    if actions.is_foundation_bound(state, p.action):
        if not state.foundation.configured:
            _revert(p, NoFoundation("фонд не сконфигурирован"))
            return
        p.resolution = foundation.enqueue_resolution(state, p.id)
        p.state = ProposalState.ENQUEUED
        p.executed_at = now
        logger.info("%s передано фонду как %s", p.id, p.resolution)
        return
    try:
        apply_onchain(state, p)
    except ValidationFailed as e:
        _revert(p, e)
        return
    p.state = ProposalState.EXECUTED_ON_CHAIN
    p.executed_at = now
    logger.info("%s исполнено on-chain (%s)", p.id, p.action["type"])


def execute_onchain(state: EngineState, pid: str) -> ProposalState:
    """Явное исполнение; допустимо только для предложения в состоянии Executable."""
    p = state.proposals.get(pid)
    if p is None or p.state != ProposalState.EXECUTABLE:
        raise Unauthorized(f"{pid}: нет исполнимого предложения")
    _dispatch(state, p)
    return p.state


def advance_lifecycle(state: EngineState, p: Proposal, now: int) -> ProposalState:
    """Идемпотентно на фиксированном тике."""
    if p.state == ProposalState.OPEN and now >= _voting_end(state, p):
        _close(state, p, now)
    if p.state == ProposalState.TIMELOCKED and now >= p.timelock_ends:
        p.state = ProposalState.CHALLENGEABLE
    if p.state == ProposalState.CHALLENGEABLE and now >= p.challenge_ends:
        p.state = ProposalState.EXECUTABLE
    if p.state == ProposalState.EXECUTABLE:
        _dispatch(state, p)
    return p.state


def settle_lifecycle(state: EngineState, now: int) -> None:
    # Повторяем проходы: закрытие оспаривания может вернуть цель в окно, уже истёкшее на этом тике
    for _ in range(len(state.proposals) + 2):
        before = {pid: p.state for pid, p in state.proposals.items()}
        for pid in list(state.proposals):
            advance_lifecycle(state, state.proposals[pid], now)
        if before == {pid: p.state for pid, p in state.proposals.items()}:
            return
