# tests/test_workstreams.py
import pytest

from app import workstreams
from app.errors import MaxEscalation, MissingRole, NotOpen, Unauthorized, VerificationMissing
from app.models import SYSTEM_ACTOR, ProposalState, TaskState

MEMBERS = [
    {"id": "alice", "roles": ["member"], "allocation": {"vested": 40}},
    {"id": "bob", "roles": ["member", "dev"], "allocation": {"vested": 30}},
    {"id": "carol", "roles": ["member"], "allocation": {"vested": 20}},
    {"id": "dave", "roles": ["member"], "allocation": {"vested": 10}},
]
WORKSTREAM = {
    "id": "ws",
    "steward": "alice",
    "required_roles": ["dev"],
    "reward_rate": 10,
    "tasks": [
        {"id": "t1", "spec": "docs"},
        {"id": "t2", "spec": "deploy", "verification": {"mode": "oracle", "topic": "ws/t2"}},
    ],
}


@pytest.fixture
def ws_sim(make_sim):
    return make_sim(members=MEMBERS, workstreams=[WORKSTREAM],
                    oracle={"providers": ["o1", "o2"], "round_length": 5})


def _task(s, tid="t1"):
    return s.state.workstreams["ws"].tasks[tid]


def test_assignment_requires_role(ws_sim):
    with pytest.raises(MissingRole):
        ws_sim.do("assign_task", workstream="ws", task="t1", assignee="carol")
    ws_sim.do("assign_task", workstream="ws", task="t1", assignee="bob")
    assert _task(ws_sim).state == TaskState.ASSIGNED
    assert _task(ws_sim).assignee == "bob"
    with pytest.raises(NotOpen):
        ws_sim.do("assign_task", workstream="ws", task="t1", assignee="bob")


def test_only_steward_adds_tasks(ws_sim):
    with pytest.raises(Unauthorized):
        ws_sim.do("add_task", by="bob", workstream="ws", task={"id": "t3"})
    ws_sim.do("add_task", by="alice", workstream="ws", task={"id": "t3"})
    assert _task(ws_sim, "t3").state == TaskState.OPEN


def test_escalation_ladder_ends_in_governance(ws_sim):
    ws_sim.do("assign_task", workstream="ws", task="t1", assignee="bob")
    for level in (1, 2):
        ws_sim.do("escalate_task", workstream="ws", task="t1")
        assert _task(ws_sim).level == level
        assert _task(ws_sim).resolution_proposal is None

    ws_sim.do("escalate_task", workstream="ws", task="t1")
    t = _task(ws_sim)
    assert (t.level, t.state) == (3, TaskState.ESCALATED)
    p = ws_sim.proposal(t.resolution_proposal)
    assert p.proposer == SYSTEM_ACTOR
    assert p.action == {"type": "TaskResolve", "workstream": "ws", "task": "t1", "outcome": "cancel"}

    with pytest.raises(MaxEscalation):
        ws_sim.do("escalate_task", workstream="ws", task="t1")

    ws_sim.vote(p.id, "alice", "bob")
    ws_sim.to(9)
    assert p.state == ProposalState.EXECUTED_ON_CHAIN
    assert _task(ws_sim).state == TaskState.CANCELLED


def test_unassigned_task_cannot_escalate(ws_sim):
    with pytest.raises(NotOpen):
        ws_sim.do("escalate_task", workstream="ws", task="t1")


def test_signoff_then_reward_once(ws_sim):
    treasury = ws_sim.state.treasury.balance
    ws_sim.do("assign_task", workstream="ws", task="t1", assignee="bob")
    with pytest.raises(VerificationMissing):
        ws_sim.do("complete_task", workstream="ws", task="t1")
    ws_sim.do("signoff_task", workstream="ws", task="t1", by="alice")
    ws_sim.do("complete_task", workstream="ws", task="t1", evidence="sha256:pr42")
    assert _task(ws_sim).state == TaskState.DONE
    assert ws_sim.state.accounts["bob"].vested == 40
    assert ws_sim.state.treasury.balance == treasury - 10

    with pytest.raises(NotOpen):
        ws_sim.do("complete_task", workstream="ws", task="t1")
    assert ws_sim.state.accounts["bob"].vested == 40
    assert len([r for r in ws_sim.state.rewards if r["kind"] == "TaskReward"]) == 1


def _oracle_says(s, value):
    for provider in ("o1", "o2"):
        s.do("submit_attestation", provider=provider, topic="ws/t2", round=0, value=value,
             evidence_hash=f"sha256:{provider}")
    s.to(5)


def test_oracle_false_blocks_completion(ws_sim):
    ws_sim.do("assign_task", workstream="ws", task="t2", assignee="bob")
    _oracle_says(ws_sim, False)
    with pytest.raises(VerificationMissing):
        ws_sim.do("complete_task", workstream="ws", task="t2")
    assert _task(ws_sim, "t2").state == TaskState.ASSIGNED


def test_oracle_true_completes_without_signoff(ws_sim):
    ws_sim.do("assign_task", workstream="ws", task="t2", assignee="bob")
    _oracle_says(ws_sim, True)
    ws_sim.do("complete_task", workstream="ws", task="t2")
    assert _task(ws_sim, "t2").state == TaskState.DONE


def test_task_summary_is_sorted(ws_sim):
    rows = workstreams.task_summary(ws_sim.state)
    assert [r["task"] for r in rows] == ["t1", "t2"]
