# tests/test_governance.py
from fractions import Fraction

import pytest

from app import governance
from app.errors import (
    AlreadyVoted,
    ChainedDelegation,
    DelegatedAway,
    DuplicateMember,
    InsufficientCommitteeApproval,
    KindMismatch,
    NotAMember,
    NotChallengeable,
    NotOpen,
    OutsideMandate,
    RateLimited,
    SelfDelegation,
    Unauthorized,
    UnauthorizedOnboarding,
    WindowNotElapsed,
)
from app.models import Kind, MemberStatus, ProposalState, VoteMode, VoteTally

GRANT = {"type": "Grant", "to": "bob", "amount": 50}
PARAM = {"type": "ParamChange", "field": "voting_window", "value": 6}


# ------------------------------------------------------------
#                    участники
# ------------------------------------------------------------

def test_genesis_founders_are_active(make_sim):
    s = make_sim({f"f{i}": 10 for i in range(5)})
    assert len(s.state.members) == 5
    assert all(m.status == MemberStatus.ACTIVE for m in s.state.members.values())


def test_reregister_active_member_rejected(sim):
    with pytest.raises(DuplicateMember):
        governance.register_member(sim.state, "alice", ["member"], via_proposal="P0")


def test_direct_onboarding_needs_role_admin(sim):
    with pytest.raises(UnauthorizedOnboarding):
        sim.do("register_member", actor="erin", roles=["member"], by="alice")


def test_role_admin_onboards_directly(make_sim, make_cfg):
    s = make_sim(params={**make_cfg()["params"], "role_admins": ["alice"]})
    s.do("register_member", actor="erin", roles=["member"], by="alice")
    assert s.state.is_active("erin")


def test_member_admitted_by_passed_proposal(sim):
    pid = sim.propose("alice", {"type": "MemberAdmit", "actor": "erin", "roles": ["member"]})
    sim.vote(pid, "alice", "bob")
    sim.to(8)
    assert not sim.state.is_active("erin")
    sim.to(9)
    assert sim.proposal(pid).state == ProposalState.EXECUTED_ON_CHAIN
    assert sim.state.members["erin"].joined_at == 9


# ------------------------------------------------------------
#                    подача предложений
# ------------------------------------------------------------

def test_grant_under_cap_is_ordinary_and_open(sim):
    pid = sim.propose("alice", GRANT)
    p = sim.proposal(pid)
    assert p.kind == Kind.ORDINARY
    assert p.state == ProposalState.OPEN


def test_transfer_over_cap_as_ordinary_is_kind_mismatch(sim):
    with pytest.raises(KindMismatch):
        sim.propose("alice", {"type": "TreasuryTransfer", "to": "bob", "amount": 150})
    pid = sim.propose("alice", {"type": "TreasuryTransfer", "to": "bob", "amount": 150}, kind="Major")
    assert sim.proposal(pid).kind == Kind.MAJOR


def test_second_upgrade_in_epoch_rate_limited(sim):
    sim.propose("alice", {"type": "Upgrade", "tag": "v2"}, kind="Major")
    with pytest.raises(RateLimited):
        sim.propose("bob", {"type": "Upgrade", "tag": "v3"}, kind="Major")


def test_non_member_cannot_propose(sim):
    with pytest.raises(NotAMember):
        sim.propose("mallory", GRANT)


def test_proposer_roles_restrict_submission(make_sim, make_cfg):
    s = make_sim(params={**make_cfg()["params"], "proposer_roles": ["dev"]})
    with pytest.raises(Unauthorized):
        s.propose("alice", GRANT)


# ------------------------------------------------------------
#                    голосование и делегирование
# ------------------------------------------------------------

def test_vote_adds_voter_power(sim):
    pid = sim.propose("alice", GRANT)
    sim.vote(pid, "bob")
    assert sim.proposal(pid).tally.for_power == 30
    with pytest.raises(AlreadyVoted):
        sim.vote(pid, "bob", choice="Against")


def test_vote_after_window_rejected(sim):
    pid = sim.propose("alice", GRANT)
    sim.to(5)
    with pytest.raises(NotOpen):
        sim.vote(pid, "bob")


def test_delegate_votes_with_delegators_power(make_sim):
    s = make_sim({"alice": 40, "dave": 10, "carol": 20})
    s.do("delegate", delegator="carol", delegate="dave", scope=["Ordinary"])
    pid = s.propose("alice", GRANT)
    with pytest.raises(DelegatedAway):
        s.vote(pid, "carol")
    s.vote(pid, "dave")
    assert s.proposal(pid).tally.for_power == 30


def test_delegation_is_scoped_by_kind(sim):
    sim.do("delegate", delegator="carol", delegate="dave", scope=["Ordinary"])
    pid = sim.propose("alice", PARAM, kind="Major")
    sim.vote(pid, "dave")
    sim.vote(pid, "carol")
    assert sim.proposal(pid).tally.for_power == 30


def test_chained_and_self_delegation_rejected(sim):
    sim.do("delegate", delegator="alice", delegate="bob", scope=["Ordinary"])
    with pytest.raises(ChainedDelegation):
        sim.do("delegate", delegator="bob", delegate="carol", scope=["Ordinary"])
    with pytest.raises(SelfDelegation):
        sim.do("delegate", delegator="dave", delegate="dave", scope=["Ordinary"])


def test_revoked_delegator_counted_once_as_self(sim):
    sim.do("delegate", delegator="carol", delegate="dave", scope=["Ordinary"])
    sim.do("revoke_delegation", delegator="carol", scope=["Ordinary"])
    pid = sim.propose("alice", GRANT)
    sim.vote(pid, "carol")
    sim.vote(pid, "dave")
    p = sim.proposal(pid)
    assert p.tally.for_power == 30
    assert p.counted == {"carol": "carol", "dave": "dave"}


def test_voting_power_excludes_unvested(make_sim):
    s = make_sim({"alice": {"vested": 40, "locked": 10,
                            "schedule": {"total": 50, "cliff": 10, "duration": 100}}})
    assert s.state.accounts["alice"].unvested == 50
    assert governance.voting_power(s.state, "alice", Kind.ORDINARY, VoteMode.TOKEN_WEIGHTED) == 50


def test_exited_member_has_no_power(sim):
    sim.do("exit_member", actor="dave")
    assert governance.voting_power(sim.state, "dave", Kind.ORDINARY, VoteMode.TOKEN_WEIGHTED) == 0


def test_one_member_one_vote_counts_delegators(sim):
    sim.do("delegate", delegator="bob", delegate="alice", scope=["Ordinary"])
    sim.do("delegate", delegator="carol", delegate="alice", scope=["Ordinary"])
    assert governance.voting_power(sim.state, "alice", Kind.ORDINARY, VoteMode.ONE_MEMBER_ONE_VOTE) == 3


# ------------------------------------------------------------
#                    закрытие голосования
# ------------------------------------------------------------

@pytest.mark.parametrize("for_power, against, expected", [
    (40, 0, False),    # 40% < кворума 1/2
    (40, 20, False),   # 40/60 ровно 2/3: ничья не проходит
    (41, 19, True),
])
def test_major_verdict_arithmetic(for_power, against, expected):
    tally = VoteTally(for_power=for_power, against_power=against, eligible_power=100)
    assert governance.verdict(tally, Fraction(1, 2), Fraction(2, 3)) is expected


def test_major_tie_fails_on_engine(make_sim):
    s = make_sim({"a": 40, "b": 20, "c": 40})
    pid = s.propose("a", PARAM, kind="Major")
    s.vote(pid, "a")
    s.vote(pid, "b", choice="Against")
    s.to(5)
    assert s.proposal(pid).state == ProposalState.FAILED


def test_major_just_over_supermajority_passes(make_sim):
    s = make_sim({"a": 41, "b": 19, "c": 40})
    pid = s.propose("a", PARAM, kind="Major")
    s.vote(pid, "a")
    s.vote(pid, "b", choice="Against")
    s.to(5)
    assert s.proposal(pid).state == ProposalState.TIMELOCKED


def test_abstain_counts_toward_quorum_only(sim):
    pid = sim.propose("alice", GRANT)
    sim.vote(pid, "dave")
    sim.vote(pid, "alice", choice="Abstain")
    sim.to(5)
    assert sim.proposal(pid).state == ProposalState.TIMELOCKED


def test_explicit_close_respects_window(sim):
    pid = sim.propose("alice", GRANT)
    with pytest.raises(WindowNotElapsed):
        sim.do("close_voting", proposal=pid)


# ------------------------------------------------------------
#                    жизненный цикл и оспаривание
# ------------------------------------------------------------

def _passed_grant(sim):
    pid = sim.propose("alice", GRANT)
    sim.vote(pid, "alice", "bob")
    return pid


def test_lifecycle_walkthrough(sim):
    pid = _passed_grant(sim)
    sim.to(5)
    p = sim.proposal(pid)
    assert p.state == ProposalState.TIMELOCKED
    assert (p.timelock_ends, p.challenge_ends) == (7, 9)
    sim.to(7)
    assert p.state == ProposalState.CHALLENGEABLE
    sim.to(8)
    assert sim.state.accounts["bob"].vested == 30
    sim.to(9)
    assert p.state == ProposalState.EXECUTED_ON_CHAIN
    assert sim.state.accounts["bob"].vested == 80
    assert sim.state.treasury.balance == 950


def test_zero_timelock_and_window_execute_at_close(make_sim):
    s = make_sim(params={"voting_window": 5, "timelock": 0, "challenge_window": 0})
    pid = _passed_grant(s)
    s.to(5)
    assert s.proposal(pid).state == ProposalState.EXECUTED_ON_CHAIN


def test_upheld_challenge_withdraws_target(sim):
    pid = _passed_grant(sim)
    sim.to(7)
    sim.do("file_challenge", challenger="dave", proposal=pid)
    cid = f"P{sim.state.counters['P']}"
    challenge = sim.proposal(cid)
    assert challenge.kind == Kind.OVERRIDE
    assert sim.proposal(pid).state == ProposalState.FROZEN
    sim.vote(cid, "alice", "bob", "carol")
    sim.to(11)
    assert sim.proposal(pid).state == ProposalState.FROZEN
    sim.to(12)
    assert challenge.state == ProposalState.EXECUTED_ON_CHAIN
    assert sim.proposal(pid).state == ProposalState.WITHDRAWN
    assert sim.state.accounts["bob"].vested == 30


def test_failed_challenge_restarts_window(sim):
    pid = _passed_grant(sim)
    sim.to(7)
    sim.do("file_challenge", challenger="dave", proposal=pid)
    cid = f"P{sim.state.counters['P']}"
    sim.vote(cid, "dave")
    sim.to(12)
    target = sim.proposal(pid)
    assert sim.proposal(cid).state == ProposalState.FAILED
    assert target.state == ProposalState.CHALLENGEABLE
    assert target.challenge_ends == 14
    sim.to(14)
    assert target.state == ProposalState.EXECUTED_ON_CHAIN


def test_cannot_challenge_executed_proposal(sim):
    pid = _passed_grant(sim)
    sim.to(9)
    with pytest.raises(NotChallengeable):
        sim.do("file_challenge", challenger="dave", proposal=pid)


def test_failed_onchain_action_reverts(make_sim):
    s = make_sim(treasury={"balance": 10})
    pid = _passed_grant(s)
    s.to(9)
    p = s.proposal(pid)
    assert p.state == ProposalState.REVERTED
    assert p.outcome == "InsufficientTreasury"
    assert s.state.treasury.balance == 10


# ------------------------------------------------------------
#                    комитеты
# ------------------------------------------------------------

def _with_committee(make_sim, make_cfg, rate_limit=3):
    return make_sim(
        params={**make_cfg()["params"], "committee_rate_limit": rate_limit},
        committees=[{"id": "ops", "members": ["alice", "bob", "carol"], "mandate": {"Grant": 30}}],
    )


def test_committee_decision_goes_straight_to_timelock(make_sim, make_cfg):
    s = _with_committee(make_sim, make_cfg)
    s.do("committee_decide", committee="ops", action={"type": "Grant", "to": "dave", "amount": 25},
         approvals=["alice", "bob"])
    p = s.proposal("P1")
    assert p.state == ProposalState.TIMELOCKED
    assert p.via_committee == "ops"
    assert p.approvals == ["alice", "bob"]
    s.to(4)
    assert p.state == ProposalState.EXECUTED_ON_CHAIN
    assert s.state.accounts["dave"].vested == 35


def test_committee_outside_mandate(make_sim, make_cfg):
    s = _with_committee(make_sim, make_cfg)
    with pytest.raises(OutsideMandate):
        s.do("committee_decide", committee="ops", action={"type": "Grant", "to": "dave", "amount": 31},
             approvals=["alice", "bob"])
    with pytest.raises(OutsideMandate):
        s.do("committee_decide", committee="ops", action={"type": "Upgrade", "tag": "v2"},
             approvals=["alice", "bob"])


def test_committee_needs_majority_approval(make_sim, make_cfg):
    s = _with_committee(make_sim, make_cfg)
    with pytest.raises(InsufficientCommitteeApproval):
        s.do("committee_decide", committee="ops", action={"type": "Grant", "to": "dave", "amount": 5},
             approvals=["alice"])


def test_committee_rate_limit_per_epoch(make_sim, make_cfg):
    s = _with_committee(make_sim, make_cfg, rate_limit=2)
    action = {"type": "Grant", "to": "dave", "amount": 5}
    s.do("committee_decide", committee="ops", action=action, approvals=["alice", "bob"])
    s.do("committee_decide", committee="ops", action=action, approvals=["bob", "carol"])
    with pytest.raises(RateLimited):
        s.do("committee_decide", committee="ops", action=action, approvals=["alice", "carol"])


# ------------------------------------------------------------
#        тайм-лок и окно оспаривания: эффект не раньше срока
# ------------------------------------------------------------

WINDOWS = [(0, 0), (2, 2), (3, 0), (0, 4), (5, 1)]
CHALLENGE_CASES = [(tl, w, c) for tl, w in WINDOWS for c in (None, "upheld", "failed") if w > 0 or c is None]


@pytest.mark.parametrize("timelock, window, challenge", CHALLENGE_CASES)
def test_no_effect_before_timelock_and_challenge_window(make_sim, timelock, window, challenge):
    s = make_sim(params={"voting_window": 5, "timelock": timelock, "challenge_window": window})
    pid = _passed_grant(s)
    p = s.proposal(pid)
    bob = s.state.accounts["bob"]
    cid = None
    for tick in range(1, 40):
        s.to(tick)
        if bob.vested != 30:
            assert p.state == ProposalState.EXECUTED_ON_CHAIN
            assert tick >= p.passed_at + timelock + window
            assert tick >= p.challenge_ends
        if challenge and cid is None and p.state == ProposalState.CHALLENGEABLE:
            s.do("file_challenge", challenger="dave", proposal=pid)
            cid = f"P{s.state.counters['P']}"
            s.vote(cid, *(("alice", "bob", "carol") if challenge == "upheld" else ("dave",)))
    if challenge == "upheld":
        assert p.state == ProposalState.WITHDRAWN
        assert bob.vested == 30
    else:
        assert p.state == ProposalState.EXECUTED_ON_CHAIN
        assert bob.vested == 80


def test_upgrade_execution_limited_per_epoch(make_sim):
    s = make_sim(params={"voting_window": 5, "timelock": 2, "challenge_window": 2, "upgrade_epoch": 10})
    s.to(9)
    first = s.propose("alice", {"type": "Upgrade", "tag": "v2"}, kind="Major")
    s.vote(first, "alice", "bob", "carol")
    s.to(10)
    second = s.propose("bob", {"type": "Upgrade", "tag": "v3"}, kind="Major")
    s.vote(second, "alice", "bob", "carol")
    s.to(19)
    assert s.proposal(first).state == ProposalState.EXECUTED_ON_CHAIN
    assert s.proposal(second).state == ProposalState.REVERTED
    assert s.proposal(second).outcome == "RateLimited"

    s.to(20)
    third = s.propose("carol", {"type": "Upgrade", "tag": "v4"}, kind="Major")
    s.vote(third, "alice", "bob", "carol")
    s.to(29)
    assert s.proposal(third).state == ProposalState.EXECUTED_ON_CHAIN
    assert [(u["tag"], u["epoch"]) for u in s.state.upgrades] == [("v2", 1), ("v4", 2)]
