# tests/conftest.py
import os
from typing import Any, Dict, Optional

import pytest
from hypothesis import settings

from app.engine import Engine
from app.models import Proposal

# Профиль свойств: acceptance по умолчанию, dev для быстрого локального прогона
settings.register_profile("acceptance", max_examples=1000, deadline=None)
settings.register_profile("dev", max_examples=50, deadline=None)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "acceptance"))

# Короткие окна, чтобы жизненный цикл укладывался в десяток тиков
FAST_PARAMS = {"voting_window": 5, "timelock": 2, "challenge_window": 2}
DEFAULT_POWERS = {"alice": 40, "bob": 30, "carol": 20, "dave": 10}


def make_config(powers: Optional[Dict[str, Any]] = None, **sections: Any) -> Dict[str, Any]:
    powers = DEFAULT_POWERS if powers is None else powers
    members = []
    for actor, alloc in powers.items():
        if not isinstance(alloc, dict):
            alloc = {"vested": alloc}
        members.append({"id": actor, "roles": ["member"], "allocation": alloc})
    config: Dict[str, Any] = {
        "params": dict(FAST_PARAMS),
        "roles": ["member", "dev"],
        "treasury": {"balance": 1000},
        "members": members,
    }
    config.update(sections)
    return config


class Sim:
    """Тонкая обёртка над движком для тестов: события, время, предложения."""

    def __init__(self, engine: Engine):
        self.engine = engine

    @property
    def state(self):
        return self.engine.state

    @property
    def clock(self) -> int:
        return self.engine.clock

    def do(self, event: str, **fields: Any):
        return self.engine.append_event({"event": event, **fields})

    def to(self, tick: int) -> None:
        if tick > self.engine.clock:
            self.engine.advance_time(tick - self.engine.clock)

    def propose(self, proposer: str, action: Dict[str, Any], kind: str = "Ordinary", tags=None) -> str:
        self.do("submit_proposal", proposer=proposer, kind=kind, action=action, tags=tags or [])
        return f"P{self.state.counters['P']}"

    def vote(self, pid: str, *voters: str, choice: str = "For") -> None:
        for v in voters:
            self.do("cast_vote", voter=v, proposal=pid, choice=choice)

    def proposal(self, pid: str) -> Proposal:
        return self.state.proposals[pid]


@pytest.fixture
def make_sim():
    def _make(powers: Optional[Dict[str, Any]] = None, **sections: Any) -> Sim:
        return Sim(Engine.from_genesis(make_config(powers, **sections)))
    return _make


@pytest.fixture
def sim(make_sim) -> Sim:
    return make_sim()


@pytest.fixture
def make_cfg():
    return make_config
