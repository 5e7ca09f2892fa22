# tests/test_properties.py
import dataclasses
import itertools
import random
from fractions import Fraction

from hypothesis import given, seed, settings, strategies as st

from app import config, metrics, oracle, runner, tokens
from app.audit_log import verify_log
from app.engine import Engine, replay
from app.models import Attestation, ProposalState

powers_st = st.lists(st.integers(min_value=1, max_value=100), min_size=1, max_size=10)
quorum_st = st.sampled_from([Fraction(1, 3), Fraction(1, 2), Fraction(3, 5), Fraction(2, 3), Fraction(9, 10)])

# Сколько случайных сценариев гоняют циклы на random.Random; следует профилю hypothesis
RUNS = settings().max_examples
FAST = {"voting_window": 5, "timelock": 2, "challenge_window": 2}
MAJOR_ACTION = {"type": "ParamChange", "field": "timelock", "value": 2}


def _brute_coalition(powers, quorum):
    total = sum(powers)
    for k in range(1, len(powers) + 1):
        if any(Fraction(sum(c), total) >= quorum for c in itertools.combinations(powers, k)):
            return k
    return None


@seed(config.HC_SEED)
@given(powers_st, quorum_st)
def test_exact_coalition_is_minimal(powers, quorum):
    assert metrics.exact_coalition(powers, quorum) == _brute_coalition(powers, quorum)


@seed(config.HC_SEED)
@given(powers_st, quorum_st)
def test_greedy_never_below_exact(powers, quorum):
    assert metrics.greedy_coalition(powers, quorum) >= metrics.exact_coalition(powers, quorum)


@seed(config.HC_SEED)
@given(powers_st, st.sampled_from([2, 10, 1000]))
def test_metrics_are_scale_invariant(powers, k):
    scaled = [p * k for p in powers]
    half = Fraction(1, 2)
    assert metrics.exact_coalition(scaled, half) == metrics.exact_coalition(powers, half)
    assert metrics.gini(scaled) == metrics.gini(powers)


# ------------------------------------------------------------
#           устойчивость медианы к византийским провайдерам
# ------------------------------------------------------------

@st.composite
def _round(draw):
    n = draw(st.sampled_from([3, 5, 7]))
    f = (n - 1) // 2
    honest = draw(st.lists(st.integers(min_value=90, max_value=110), min_size=n - f, max_size=n - f))
    byzantine = draw(st.lists(st.integers(min_value=-10 ** 9, max_value=10 ** 9), min_size=f, max_size=f))
    order = draw(st.permutations(honest + byzantine))
    return n, honest, order


@seed(config.HC_SEED)
@given(_round())
def test_median_stays_within_honest_range(sample):
    n, honest, values = sample
    atts = [
        Attestation(provider=f"p{i}", topic="price", round=0, value=v, evidence_hash=f"h{i}", tick=0, weight=1)
        for i, v in enumerate(values)
    ]
    status, value = oracle.aggregate_values(atts, n, Fraction(1, 2))
    assert status == oracle.READING
    assert min(honest) <= value <= max(honest)


# ------------------------------------------------------------
#          случайные последовательности токен-событий
# ------------------------------------------------------------

ACTORS = ["alice", "bob", "carol"]

token_event_st = st.one_of(
    st.builds(lambda a, n: {"event": "stake", "actor": a, "amount": n},
              st.sampled_from(ACTORS), st.integers(0, 60)),
    st.builds(lambda a, n: {"event": "unstake", "actor": a, "amount": n},
              st.sampled_from(ACTORS), st.integers(0, 60)),
    st.builds(lambda a, n: {"event": "redeem", "actor": a, "amount": n},
              st.sampled_from(ACTORS), st.integers(0, 30)),
    st.builds(lambda n: {"event": "advance_time", "ticks": n}, st.integers(0, 15)),
)


@seed(config.HC_SEED)
@given(st.lists(token_event_st, max_size=25))
def test_token_sequences_conserve_supply_and_replay(events):
    genesis = {
        "policy": {"stake_lockup": 5},
        "roles": ["member"],
        "treasury": {"balance": 500},
        "members": [
            {"id": "alice", "roles": ["member"], "allocation": {"vested": 50}},
            {"id": "bob", "roles": ["member"], "allocation": {"schedule": {"total": 80, "cliff": 5, "duration": 40}}},
            {"id": "carol", "roles": ["member"], "allocation": {"vested": 10, "locked": 20}},
        ],
    }
    engine = Engine.from_genesis(genesis)
    for ev in events:
        runner.apply(engine, ev)
        assert tokens.conservation_ok(engine.state)
    assert replay(engine.records).digest() == engine.digest()


# ------------------------------------------------------------
#       случайные сценарии управления: повтор и подделка журнала
# ------------------------------------------------------------

def _random_engine(rng: random.Random) -> Engine:
    members = [f"m{i}" for i in range(rng.randint(2, 12))]
    genesis = {
        "params": {"voting_window": 4, "timelock": 1, "challenge_window": 1},
        "roles": ["member"],
        "treasury": {"balance": 300},
        "members": [{"id": m, "roles": ["member"], "allocation": {"vested": rng.randint(1, 50)}} for m in members],
    }
    engine = Engine.from_genesis(genesis)
    for _ in range(rng.randint(5, 120)):
        roll = rng.random()
        opened = engine.state.counters.get("P", 0)
        if roll < 0.2:
            ev = {"event": "submit_proposal", "proposer": rng.choice(members), "kind": "Ordinary", "tags": [],
                  "action": {"type": "Grant", "to": rng.choice(members), "amount": rng.randint(1, 20)}}
        elif roll < 0.5 and opened:
            ev = {"event": "cast_vote", "voter": rng.choice(members), "proposal": f"P{rng.randint(1, opened)}",
                  "choice": rng.choice(["For", "Against", "Abstain"])}
        elif roll < 0.6:
            ev = {"event": "delegate", "delegator": rng.choice(members), "delegate": rng.choice(members),
                  "scope": ["Ordinary"]}
        elif roll < 0.65:
            ev = {"event": "revoke_delegation", "delegator": rng.choice(members), "scope": ["Ordinary"]}
        elif roll < 0.75:
            ev = {"event": "redeem", "actor": rng.choice(members), "amount": rng.randint(0, 10)}
        else:
            ev = {"event": "advance_time", "ticks": rng.randint(0, 5)}
        runner.apply(engine, ev)
        assert tokens.conservation_ok(engine.state)
    return engine


def test_random_governance_sequences_replay_identically():
    rng = random.Random(config.HC_SEED)
    for _ in range(RUNS):
        engine = _random_engine(rng)
        assert verify_log(engine.records).ok
        assert replay(engine.records).digest() == engine.digest()


def test_single_bit_flip_is_detected_at_or_before_it():
    rng = random.Random(config.HC_SEED + 1)
    for _ in range(100):
        records = list(_random_engine(rng).records)
        i = rng.randrange(len(records))
        payload = bytearray(records[i].payload)
        payload[rng.randrange(len(payload))] ^= 1 << rng.randrange(8)
        records[i] = dataclasses.replace(records[i], payload=bytes(payload))
        verdict = verify_log(records)
        assert not verdict.ok
        assert verdict.index <= i


# ------------------------------------------------------------
#        захват: движок против независимого подсчёта
# ------------------------------------------------------------

def _engine_for(powers):
    return Engine.from_genesis({
        "params": dict(FAST),
        "roles": ["member"],
        "treasury": {"balance": 100},
        "members": [{"id": f"m{i}", "roles": ["member"], "allocation": {"vested": p}} for i, p in enumerate(powers)],
    })


def _major_tally_passes(for_power, against_power, abstain_power, eligible):
    # Кворум 1/2 по поданной силе, For строго больше 2/3 решающих голосов
    decisive = for_power + against_power
    cast = decisive + abstain_power
    return eligible > 0 and decisive > 0 and 2 * cast >= eligible and 3 * for_power > 2 * decisive


def _verdicts(engine, patterns):
    """Одно Major-предложение на шаблон голосования; -> [прошло ли] после закрытия окна."""
    pids = []
    for pattern in patterns:
        runner.apply(engine, {"event": "submit_proposal", "proposer": "m0", "kind": "Major",
                              "action": dict(MAJOR_ACTION), "tags": []})
        pid = f"P{engine.state.counters['P']}"
        for voter, choice in pattern.items():
            assert runner.apply(engine, {"event": "cast_vote", "voter": voter, "proposal": pid, "choice": choice})
        pids.append(pid)
    engine.advance_time(FAST["voting_window"])
    return [engine.state.proposals[pid].state != ProposalState.FAILED for pid in pids]


def test_no_sub_quorum_coalition_passes_major():
    rng = random.Random(config.HC_SEED + 2)
    for _ in range(20):
        powers = [rng.randint(1, 100) for _ in range(rng.randint(1, 7))]
        total = sum(powers)
        coalitions = [c for k in range(1, len(powers) + 1) for c in itertools.combinations(range(len(powers)), k)]
        passed = _verdicts(_engine_for(powers), [{f"m{i}": "For" for i in c} for c in coalitions])
        for coalition, ok in zip(coalitions, passed):
            assert ok == (2 * sum(powers[i] for i in coalition) >= total)


def test_engine_verdicts_match_independent_tally():
    rng = random.Random(config.HC_SEED + 3)
    for _ in range(40):
        powers = [rng.randint(1, 100) for _ in range(rng.randint(1, 12))]
        patterns = []
        for _ in range(10):
            pattern = {}
            for i in range(len(powers)):
                choice = rng.choice(["For", "Against", "Abstain", None])
                if choice is not None:
                    pattern[f"m{i}"] = choice
            patterns.append(pattern)
        passed = _verdicts(_engine_for(powers), patterns)
        for pattern, ok in zip(patterns, passed):
            sums = {c: sum(powers[int(v[1:])] for v, ch in pattern.items() if ch == c)
                    for c in ("For", "Against", "Abstain")}
            assert ok == _major_tally_passes(sums["For"], sums["Against"], sums["Abstain"], sum(powers))


# ------------------------------------------------------------
#           масштабирование балансов не меняет вердиктов
# ------------------------------------------------------------

def _scaled_run(powers, k, script):
    engine = _engine_for([p * k for p in powers])
    for kind, pattern in script:
        action = dict(MAJOR_ACTION) if kind == "Major" else {"type": "RoleGrant", "actor": "m0", "role": "member"}
        assert runner.apply(engine, {"event": "submit_proposal", "proposer": "m0", "kind": kind,
                                     "action": action, "tags": []})
        pid = f"P{engine.state.counters['P']}"
        for voter, choice in pattern.items():
            assert runner.apply(engine, {"event": "cast_vote", "voter": voter, "proposal": pid, "choice": choice})
    engine.advance_time(FAST["voting_window"])
    verdicts = [p.state == ProposalState.FAILED for _, p in sorted(engine.state.proposals.items())]
    return verdicts, metrics.capture_coalition_size(engine.state).size, metrics.power_gini(engine.state)


def test_scaling_balances_keeps_verdicts_capture_and_gini():
    rng = random.Random(config.HC_SEED + 4)
    for _ in range(100):
        powers = [rng.randint(1, 50) for _ in range(rng.randint(1, 8))]
        script = []
        for _ in range(rng.randint(1, 4)):
            pattern = {f"m{i}": rng.choice(["For", "Against", "Abstain"])
                       for i in range(len(powers)) if rng.random() < 0.7}
            script.append((rng.choice(["Ordinary", "Major"]), pattern))
        base = _scaled_run(powers, 1, script)
        for k in (2, 10, 1000):
            assert _scaled_run(powers, k, script) == base
