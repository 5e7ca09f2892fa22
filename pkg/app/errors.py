# app/errors.py
"""
Единая иерархия исключений движка и харнесса.

ValidationFailed и его наследники означают отказ события: состояние не меняется,
в журнал ничего не пишется. Остальные семейства описывают ошибки целостности и
сценариев, их ловит CLI и переводит в коды выхода.
"""
from __future__ import annotations

from typing import Optional


class ValidationFailed(Exception):
    """Событие отклонено. `code`: стабильное имя причины (попадает в журнал)."""

    code = "ValidationFailed"

    def __init__(self, reason: str = "", **details):
        super().__init__(reason or self.code)
        self.reason = reason or self.code
        self.details = details

    def to_dict(self) -> dict:
        out = {"code": self.code, "reason": self.reason}
        if self.details:
            out["details"] = {k: str(v) for k, v in self.details.items()}
        return out


def _rejection(name: str) -> type:
    return type(name, (ValidationFailed,), {"code": name, "__doc__": f"Отказ: {name}."})


# --- state-core ---
DuplicateMember = _rejection("DuplicateMember")
UnauthorizedOnboarding = _rejection("UnauthorizedOnboarding")
UnknownActor = _rejection("UnknownActor")
UnknownEvent = _rejection("UnknownEvent")

# --- governance-engine ---
NotAMember = _rejection("NotAMember")
KindMismatch = _rejection("KindMismatch")
RateLimited = _rejection("RateLimited")
NotOpen = _rejection("NotOpen")
AlreadyVoted = _rejection("AlreadyVoted")
DelegatedAway = _rejection("DelegatedAway")
SelfDelegation = _rejection("SelfDelegation")
ChainedDelegation = _rejection("ChainedDelegation")
ConflictingVote = _rejection("ConflictingVote")
WindowNotElapsed = _rejection("WindowNotElapsed")
NotChallengeable = _rejection("NotChallengeable")
ChallengesDisabled = _rejection("ChallengesDisabled")
OutsideMandate = _rejection("OutsideMandate")
InsufficientCommitteeApproval = _rejection("InsufficientCommitteeApproval")
UnknownProposal = _rejection("UnknownProposal")

# --- token-policy ---
ExceedsUnvested = _rejection("ExceedsUnvested")
InsufficientTreasury = _rejection("InsufficientTreasury")
Unauthorized = _rejection("Unauthorized")
InsufficientVested = _rejection("InsufficientVested")
LockupActive = _rejection("LockupActive")

# --- oracle-gateway ---
InactiveProvider = _rejection("InactiveProvider")
DuplicateAttestation = _rejection("DuplicateAttestation")
RoundClosed = _rejection("RoundClosed")
RoundOpen = _rejection("RoundOpen")

# --- foundation-executor ---
NotExecutable = _rejection("NotExecutable")
NotFoundationBound = _rejection("NotFoundationBound")
NotADirector = _rejection("NotADirector")
NotQueueHead = _rejection("NotQueueHead")
NoFoundation = _rejection("NoFoundation")

# --- jurisdiction ---
DuplicateModule = _rejection("DuplicateModule")
UnknownModule = _rejection("UnknownModule")

# --- workstreams ---
MissingRole = _rejection("MissingRole")
MaxEscalation = _rejection("MaxEscalation")
VerificationMissing = _rejection("VerificationMissing")


class IntegrityError(Exception):
    """Цепочка хешей нарушена или повтор журнала разошёлся с оригиналом."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class HarnessError(Exception):
    """Базовая ошибка сценариев/отчётов."""


class ParseError(HarnessError):
    def __init__(self, message: str, line: Optional[int] = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class UnknownReference(HarnessError):
    def __init__(self, name: str, where: str = ""):
        super().__init__(f"unknown reference '{name}'" + (f" in {where}" if where else ""))
        self.name = name


class FatalConfig(HarnessError):
    """Конфигурация сценария не проходит валидацию, запуск прерывается."""


class IncompleteScenario(HarnessError):
    """Оценка требований запрошена до завершения сценария (нет scenario_end)."""
