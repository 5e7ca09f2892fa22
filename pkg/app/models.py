# app/models.py
"""
Типы состояния всех трёх слоёв (программируемое управление, фонд,
юрисдикционные модули). Всё состояние хранится в обычных dataclass-ах; мутирует их
только движок при применении события.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Set

from app.canonical import ZERO_HASH

SYSTEM_ACTOR = "@engine"  # автор автоматических предложений (нарушения, эскалации)


class MemberStatus(str, Enum):
    ACTIVE = "Active"
    EXITED = "Exited"


class Kind(str, Enum):
    ORDINARY = "Ordinary"
    MAJOR = "Major"
    OVERRIDE = "Override"

    @property
    def rank(self) -> int:
        return {"Ordinary": 0, "Major": 1, "Override": 2}[self.value]


class ProposalState(str, Enum):
    OPEN = "Open"
    PASSED = "Passed"
    FAILED = "Failed"
    TIMELOCKED = "Timelocked"
    CHALLENGEABLE = "Challengeable"
    FROZEN = "Frozen"
    EXECUTABLE = "Executable"
    EXECUTED_ON_CHAIN = "ExecutedOnChain"
    ENQUEUED = "Enqueued"
    WITHDRAWN = "Withdrawn"
    REVERTED = "Reverted"


TERMINAL_PROPOSAL_STATES = {
    ProposalState.FAILED,
    ProposalState.EXECUTED_ON_CHAIN,
    ProposalState.ENQUEUED,
    ProposalState.WITHDRAWN,
    ProposalState.REVERTED,
}


class VoteMode(str, Enum):
    TOKEN_WEIGHTED = "TokenWeighted"
    ONE_MEMBER_ONE_VOTE = "OneMemberOneVote"


class Choice(str, Enum):
    FOR = "For"
    AGAINST = "Against"
    ABSTAIN = "Abstain"


class DirectorStatus(str, Enum):
    SERVING = "Serving"
    REMOVED = "Removed"


class ResolutionState(str, Enum):
    PENDING = "Pending"
    EXECUTED = "Executed"
    REFUSED = "Refused"


class ModuleStatus(str, Enum):
    ADMITTED = "Admitted"
    EXITED = "Exited"


class ConstraintFlag(str, Enum):
    TOKEN_VOTING_PROHIBITED = "TOKEN_VOTING_PROHIBITED"
    TRANSFER_RESTRICTED = "TRANSFER_RESTRICTED"
    DATA_RESIDENCY = "DATA_RESIDENCY"
    REPORTING_REQUIRED = "REPORTING_REQUIRED"


class TaskState(str, Enum):
    OPEN = "Open"
    ASSIGNED = "Assigned"
    ESCALATED = "Escalated"
    DONE = "Done"
    CANCELLED = "Cancelled"


class Remit(str, Enum):
    CUSTODY = "Custody"
    LICENSING = "Licensing"
    CONTRACTING = "Contracting"
    COMPLIANCE = "Compliance"


# ============================================================
#                      state-core
# ============================================================

@dataclass
class Member:
    actor: str
    roles: Set[str] = field(default_factory=set)
    status: MemberStatus = MemberStatus.ACTIVE
    joined_at: int = 0

    @property
    def active(self) -> bool:
        return self.status == MemberStatus.ACTIVE


# ============================================================
#                      token-policy
# ============================================================

@dataclass
class VestingSchedule:
    total: int
    start: int
    cliff: int = 0
    duration: int = 0
    released: int = 0

    @property
    def remaining(self) -> int:
        return self.total - self.released


@dataclass
class TokenAccount:
    vested: int = 0
    locked: int = 0
    unvested: int = 0
    schedules: List[VestingSchedule] = field(default_factory=list)
    lock_until: int = 0

    @property
    def own_power(self) -> int:
        # Невестированные токены голоса не дают
        return self.vested + self.locked

    @property
    def balance(self) -> int:
        return self.vested + self.locked + self.unvested


@dataclass
class Treasury:
    balance: int = 0
    total_supply: int = 0
    redeemed: int = 0


@dataclass
class TokenPolicy:
    contribution_reward_rate: int = 0
    grant_cap: Optional[int] = None
    grant_roles: Set[str] = field(default_factory=set)
    airdrop_roles: Set[str] = field(default_factory=set)
    stake_lockup: int = 0
    genesis_allocations: List[Dict[str, Any]] = field(default_factory=list)


# ============================================================
#                    governance-engine
# ============================================================

@dataclass
class GovernanceParams:
    quorum_ordinary: Fraction = Fraction(2, 5)
    quorum_major: Fraction = Fraction(1, 2)
    quorum_override: Fraction = Fraction(3, 5)
    majority_ordinary: Fraction = Fraction(1, 2)
    supermajority_major: Fraction = Fraction(2, 3)
    supermajority_override: Fraction = Fraction(3, 4)
    voting_window: int = 20
    timelock: int = 10
    challenge_window: int = 10
    upgrade_epoch: int = 100
    max_upgrades_per_epoch: int = 1
    committee_rate_limit: int = 3
    treasury_ordinary_cap: int = 100
    role_admins: Set[str] = field(default_factory=set)
    proposer_roles: Set[str] = field(default_factory=set)
    challenges_enabled: bool = True

    def quorum(self, kind: Kind) -> Fraction:
        return {
            Kind.ORDINARY: self.quorum_ordinary,
            Kind.MAJOR: self.quorum_major,
            Kind.OVERRIDE: self.quorum_override,
        }[kind]

    def threshold(self, kind: Kind) -> Fraction:
        return {
            Kind.ORDINARY: self.majority_ordinary,
            Kind.MAJOR: self.supermajority_major,
            Kind.OVERRIDE: self.supermajority_override,
        }[kind]


@dataclass
class VoteTally:
    for_power: int = 0
    against_power: int = 0
    abstain_power: int = 0
    eligible_power: int = 0
    mode: VoteMode = VoteMode.TOKEN_WEIGHTED

    @property
    def cast_power(self) -> int:
        return self.for_power + self.against_power + self.abstain_power


@dataclass
class Proposal:
    id: str
    kind: Kind
    action: Dict[str, Any]
    proposer: str
    opened_at: int
    state: ProposalState = ProposalState.OPEN
    tally: VoteTally = field(default_factory=VoteTally)
    jurisdiction_tags: Set[str] = field(default_factory=set)
    # Снимок собственной силы голоса на момент открытия
    snapshot: Dict[str, int] = field(default_factory=dict)
    votes: Dict[str, Choice] = field(default_factory=dict)
    # Чья сила уже учтена (напрямую или через делегата)
    counted: Dict[str, str] = field(default_factory=dict)
    closed_at: Optional[int] = None
    passed_at: Optional[int] = None
    timelock_ends: Optional[int] = None
    challenge_ends: Optional[int] = None
    executed_at: Optional[int] = None
    challenge_of: Optional[str] = None
    challenges: List[str] = field(default_factory=list)
    via_committee: Optional[str] = None
    approvals: List[str] = field(default_factory=list)
    resolution: Optional[str] = None
    outcome: Optional[str] = None
    cited_constraint: Optional[str] = None
    origin: Optional[str] = None


@dataclass
class Delegation:
    delegator: str
    delegate: str
    scope: Set[Kind] = field(default_factory=set)
    created_at: int = 0


@dataclass
class Committee:
    id: str
    members: Set[str] = field(default_factory=set)
    # вариант действия -> лимит суммы (None: без лимита суммы)
    mandate: Dict[str, Optional[int]] = field(default_factory=dict)
    decisions_this_epoch: int = 0
    epoch: int = 0
    decisions: List[str] = field(default_factory=list)


@dataclass
class Director:
    actor: str
    ratified_at: Optional[int] = None
    status: DirectorStatus = DirectorStatus.SERVING
    appointed_at: int = 0
    removed_at: Optional[int] = None


# ============================================================
#                      oracle-gateway
# ============================================================

@dataclass
class Attestation:
    provider: str
    topic: str
    round: int
    value: Any
    evidence_hash: str
    tick: int
    weight: int = 1


@dataclass
class Reading:
    topic: str
    round: Optional[int]
    status: str  # Reading | Insufficient | Overridden
    value: Any = None
    submissions: int = 0
    tick: int = 0
    override_proposal: Optional[str] = None


@dataclass
class OverrideRecord:
    proposal: str
    topic: str
    round: Optional[int]
    value: Any
    tick: int


@dataclass
class OracleState:
    providers: List[List[Any]] = field(default_factory=list)  # [[provider_id, weight], ...]
    n_active: Optional[int] = None
    active_set: List[str] = field(default_factory=list)
    rotation_epoch: int = 50
    rotation_anchor: int = 0
    m_min: int = 2
    bool_threshold: Fraction = Fraction(1, 2)
    round_length: int = 10
    rounds: Dict[str, List[Attestation]] = field(default_factory=dict)
    readings: Dict[str, Reading] = field(default_factory=dict)
    overrides: List[OverrideRecord] = field(default_factory=list)
    topic_types: Dict[str, str] = field(default_factory=dict)

    def weight_of(self, provider: str) -> int:
        for pid, w in self.providers:
            if pid == provider:
                return int(w)
        return 0


# ============================================================
#                   foundation-executor
# ============================================================

@dataclass
class Resolution:
    id: str
    source_proposal: Optional[str]
    action: Dict[str, Any]
    enqueued_at: int
    state: ResolutionState = ResolutionState.PENDING
    assigned_director: Optional[str] = None
    origin: str = "proposal"  # proposal | reporting
    closed_at: Optional[int] = None
    cited_constraint: Optional[str] = None


@dataclass
class ExecutionRecord:
    resolution: str
    director: str
    tick: int
    effect: str


@dataclass
class RefusalRecord:
    resolution: str
    cited_constraint: str
    director: str
    tick: int
    automatic: bool = True
    valid: bool = True


@dataclass
class FoundationEffect:
    id: str
    resolution: Optional[str]
    director: str
    tick: int
    description: str


@dataclass
class BreachFinding:
    id: str
    kind: str  # delay | invalid_citation | unsourced_effect
    ref: str
    director: Optional[str]
    tick: int
    removal_proposal: Optional[str] = None


@dataclass
class FoundationState:
    configured: bool = False
    directors: List[Director] = field(default_factory=list)
    queue: List[str] = field(default_factory=list)
    resolutions: Dict[str, Resolution] = field(default_factory=dict)
    executed: List[ExecutionRecord] = field(default_factory=list)
    refusals: List[RefusalRecord] = field(default_factory=list)
    effects: List[FoundationEffect] = field(default_factory=list)
    breaches: List[BreachFinding] = field(default_factory=list)
    remit: Set[Remit] = field(default_factory=set)
    max_execution_delay: int = 30
    next_assignee: int = 0

    def serving(self) -> List[Director]:
        return [d for d in self.directors if d.status == DirectorStatus.SERVING]

    def director(self, actor: str) -> Optional[Director]:
        for d in self.directors:
            if d.actor == actor:
                return d
        return None


# ============================================================
#                       jurisdiction
# ============================================================

@dataclass
class Constraint:
    id: str
    flag: ConstraintFlag
    period: Optional[int] = None
    sensitive_fields: List[str] = field(default_factory=list)


@dataclass
class JurisdictionModule:
    id: str
    name: str
    constraints: List[Constraint] = field(default_factory=list)
    admitted_at: int = 0
    status: ModuleStatus = ModuleStatus.ADMITTED
    exited_at: Optional[int] = None
    admitted_by: Optional[str] = None
    last_report: Optional[int] = None

    @property
    def admitted(self) -> bool:
        return self.status == ModuleStatus.ADMITTED


@dataclass
class ComplianceFinding:
    id: str
    module: str
    tick: int
    resolution: Optional[str] = None
    resolved_at: Optional[int] = None


# ============================================================
#                       workstreams
# ============================================================

@dataclass
class Task:
    id: str
    spec_hash: str
    verification: Dict[str, Any] = field(default_factory=lambda: {"mode": "steward"})
    assignee: Optional[str] = None
    state: TaskState = TaskState.OPEN
    level: int = 0
    signed_off: bool = False
    completed_at: Optional[int] = None
    resolution_proposal: Optional[str] = None


@dataclass
class Workstream:
    id: str
    steward: str
    required_roles: Set[str] = field(default_factory=set)
    tasks: Dict[str, Task] = field(default_factory=dict)
    reward_rate: int = 0


# ============================================================
#                       EngineState
# ============================================================

@dataclass
class EngineState:
    members: Dict[str, Member] = field(default_factory=dict)
    roles: Set[str] = field(default_factory=set)
    accounts: Dict[str, TokenAccount] = field(default_factory=dict)
    treasury: Treasury = field(default_factory=Treasury)
    policy: TokenPolicy = field(default_factory=TokenPolicy)
    params: GovernanceParams = field(default_factory=GovernanceParams)
    proposals: Dict[str, Proposal] = field(default_factory=dict)
    delegations: List[Delegation] = field(default_factory=list)
    committees: Dict[str, Committee] = field(default_factory=dict)
    oracle: OracleState = field(default_factory=OracleState)
    foundation: FoundationState = field(default_factory=FoundationState)
    jurisdictions: Dict[str, JurisdictionModule] = field(default_factory=dict)
    compliance_findings: List[ComplianceFinding] = field(default_factory=list)
    workstreams: Dict[str, Workstream] = field(default_factory=dict)
    upgrades: List[Dict[str, Any]] = field(default_factory=list)
    rewards: List[Dict[str, Any]] = field(default_factory=list)
    clawbacks: List[Dict[str, Any]] = field(default_factory=list)
    counters: Dict[str, int] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)
    rejections: int = 0
    completed: bool = False
    clock: int = 0
    log_head: str = ZERO_HASH

    def next_id(self, prefix: str) -> str:
        n = self.counters.get(prefix, 0) + 1
        self.counters[prefix] = n
        return f"{prefix}{n}"

    def member(self, actor: str) -> Optional[Member]:
        return self.members.get(actor)

    def is_active(self, actor: str) -> bool:
        m = self.members.get(actor)
        return bool(m and m.active)
