# tests/test_audit_log.py
import dataclasses
import hashlib

import pytest

from app.audit_log import BrokenAt, Ok, read_log, verify_log, write_log
from app.canonical import ZERO_HASH
from app.engine import Engine, replay
from app.errors import IntegrityError, UnknownEvent, UnknownProposal, ValidationFailed


def _busy(sim):
    pid = sim.propose("alice", {"type": "Grant", "to": "bob", "amount": 5})
    sim.vote(pid, "alice", "bob")
    sim.to(3)
    sim.do("delegate", delegator="dave", delegate="carol", scope=["Major"])
    sim.to(12)
    return sim.engine.records


def test_advance_time_on_empty_state():
    engine = Engine()
    engine.advance_time(5)
    assert engine.clock == 5
    assert len(engine.records) == 1
    assert engine.records[0].prev_hash == ZERO_HASH


def test_hash_chain_recomputes_by_hand(sim):
    records = _busy(sim)
    prev = ZERO_HASH
    for i, rec in enumerate(records):
        assert rec.index == i
        assert rec.prev_hash == prev
        assert rec.hash == hashlib.sha256(bytes.fromhex(prev) + rec.payload).hexdigest()
        prev = rec.hash
    assert sim.engine.log_head == prev
    assert isinstance(verify_log(records), Ok)


def test_empty_log_is_ok():
    assert verify_log([]).ok


def test_flipped_payload_byte_breaks_at_that_record(sim):
    records = list(_busy(sim))
    raw = bytearray(records[2].payload)
    raw[3] ^= 0x01
    records[2] = dataclasses.replace(records[2], payload=bytes(raw))
    verdict = verify_log(records)
    assert isinstance(verdict, BrokenAt)
    assert verdict.index == 2


def test_altered_prev_hash_breaks_at_that_record(sim):
    records = list(_busy(sim))
    assert len(records) >= 5
    records[4] = dataclasses.replace(records[4], prev_hash="f" * 64)
    verdict = verify_log(records)
    assert verdict == BrokenAt(4, "prev_hash mismatch")
    assert str(verdict).startswith("BrokenAt(4)")


def test_rejected_event_changes_nothing(sim):
    before = (len(sim.engine.records), sim.engine.digest(), sim.engine.log_head)
    with pytest.raises(UnknownProposal):
        sim.do("cast_vote", voter="alice", proposal="P99", choice="For")
    with pytest.raises(UnknownEvent):
        sim.do("mint_everything", actor="alice")
    assert (len(sim.engine.records), sim.engine.digest(), sim.engine.log_head) == before


def test_event_tick_must_match_engine_clock(sim):
    with pytest.raises(ValidationFailed):
        sim.engine.append_event({"event": "advance_time", "ticks": 1, "tick": 7})


def test_replay_reproduces_live_state(sim):
    records = _busy(sim)
    again = replay(records)
    assert again.digest() == sim.engine.digest()
    assert again.log_head == sim.engine.log_head


def test_replay_prefix_matches_live_history(make_cfg):
    engine = Engine.from_genesis(make_cfg())
    digests = [engine.digest()]
    for ticks in (1, 4, 0, 2):
        engine.advance_time(ticks)
        digests.append(engine.digest())
    engine.append_event({"event": "stake", "actor": "bob", "amount": 10})
    digests.append(engine.digest())
    for n in range(1, len(engine.records) + 1):
        assert replay(engine.records[:n]).digest() == digests[n - 1]


def test_two_identical_logs_give_identical_digests(make_cfg):
    def build():
        e = Engine.from_genesis(make_cfg())
        e.advance_time(3)
        e.append_event({"event": "delegate", "delegator": "dave", "delegate": "alice", "scope": ["Ordinary"]})
        return e

    assert build().records == build().records
    assert replay(build().records).digest() == replay(build().records).digest()


def test_replay_refuses_tampered_log(sim):
    records = list(_busy(sim))
    records[1] = dataclasses.replace(records[1], hash="0" * 64)
    with pytest.raises(IntegrityError) as exc:
        replay(records)
    assert exc.value.index == 1


def test_log_file_round_trip_and_tamper(sim, tmp_path):
    records = _busy(sim)
    path = tmp_path / "run.log"
    write_log(records, str(path))
    loaded = read_log(str(path))
    assert [r.hash for r in loaded] == [r.hash for r in records]
    assert verify_log(loaded).ok

    lines = path.read_text(encoding="utf-8").splitlines()
    # строка 0 это заголовок, запись i лежит в строке i + 1
    lines[2] = lines[2].replace('"amount":5', '"amount":6')
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    verdict = verify_log(read_log(str(path)))
    assert not verdict.ok
    assert verdict.index == 1


def test_garbage_line_is_reported_not_raised(sim, tmp_path):
    records = _busy(sim)
    path = tmp_path / "run.log"
    write_log(records, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[3] = "{not json"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert verify_log(read_log(str(path))).index == 2
