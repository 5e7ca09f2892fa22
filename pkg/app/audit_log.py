# app/audit_log.py
"""
Append-only журнал событий с цепочкой SHA-256.

hash = SHA256(prev_hash_bytes || payload_bytes), где payload: каноническая
форма события. Запись 0 ссылается на нулевой prev_hash.
Файл: первая строка содержит заголовок формата, далее по одной канонической записи в строке.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Union

from app import canonical
from app.canonical import ZERO_HASH
from app.errors import IntegrityError

logger = logging.getLogger(__name__)

LOG_FORMAT = "hc-audit-log"
LOG_VERSION = 1
HASH_ALGORITHM = "sha256"


@dataclass(frozen=True)
class EventRecord:
    index: int
    prev_hash: str
    payload: bytes
    hash: str
    tick: int

    def event(self) -> Dict[str, Any]:
        return json.loads(self.payload.decode("utf-8"))

    def to_line(self) -> str:
        return canonical.dumps({
            "index": self.index,
            "prev_hash": self.prev_hash,
            "payload": self.event(),
            "hash": self.hash,
            "tick": self.tick,
        })


@dataclass(frozen=True)
class Ok:
    ok = True

    def __str__(self) -> str:
        return "Ok"


@dataclass(frozen=True)
class BrokenAt:
    index: int
    reason: str = ""
    ok = False

    def __str__(self) -> str:
        return f"BrokenAt({self.index})" + (f": {self.reason}" if self.reason else "")


Verdict = Union[Ok, BrokenAt]


def chain_hash(prev_hash: str, payload: bytes) -> str:
    return canonical.sha256_hex(bytes.fromhex(prev_hash) + payload)


def make_record(index: int, prev_hash: str, event: Dict[str, Any]) -> EventRecord:
    payload = canonical.encode(event)
    return EventRecord(
        index=index,
        prev_hash=prev_hash,
        payload=payload,
        hash=chain_hash(prev_hash, payload),
        tick=int(event.get("tick", 0)),
    )


def _payload_tick(payload: bytes) -> Optional[int]:
    try:
        tick = json.loads(payload.decode("utf-8")).get("tick")
    except Exception:
        return None
    return tick if isinstance(tick, int) and not isinstance(tick, bool) else None


def verify_log(records: Iterable[EventRecord]) -> Verdict:
    """Ok, если каждый хеш пересчитывается, индексы идут подряд с 0, а тики не убывают."""
    prev = ZERO_HASH
    last_tick = 0
    for expected_index, rec in enumerate(records):
        if rec.index != expected_index:
            return BrokenAt(expected_index, "index gap")
        if rec.prev_hash != prev:
            return BrokenAt(expected_index, "prev_hash mismatch")
        try:
            recomputed = chain_hash(rec.prev_hash, rec.payload)
        except ValueError:
            return BrokenAt(expected_index, "malformed prev_hash")
        if recomputed != rec.hash:
            return BrokenAt(expected_index, "hash mismatch")
        tick = _payload_tick(rec.payload)
        if tick is None or tick != rec.tick or tick < last_tick:
            return BrokenAt(expected_index, "tick mismatch")
        last_tick = tick
        prev = rec.hash
    return Ok()


# ============================================================
#                        файл журнала
# ============================================================

def header_line() -> str:
    return canonical.dumps({"format": LOG_FORMAT, "version": LOG_VERSION, "algorithm": HASH_ALGORITHM})


def write_log(records: List[EventRecord], path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header_line() + "\n")
        for rec in records:
            fh.write(rec.to_line() + "\n")
    logger.info("Журнал записан: %s (%d записей)", path, len(records))


def parse_log_lines(lines: List[str]) -> List[EventRecord]:
    """
    Разбирает строки файла. Повреждённая строка не бросает исключение сразу,
    а превращается в запись, которая гарантированно не пройдёт verify_log
    на своём индексе, и вердикт указывает на место поломки.
    """
    if not lines:
        raise IntegrityError("пустой файл журнала: нет заголовка", index=None)
    try:
        header = json.loads(lines[0])
    except ValueError as e:
        raise IntegrityError(f"заголовок журнала не читается: {e}") from e
    if header.get("format") != LOG_FORMAT or header.get("algorithm") != HASH_ALGORITHM:
        raise IntegrityError(f"неизвестный формат журнала: {header}")

    records: List[EventRecord] = []
    for i, raw in enumerate(lines[1:]):
        line = raw.rstrip("\n")
        try:
            obj = json.loads(line)
            payload = canonical.encode(obj["payload"])
            rec = EventRecord(
                index=int(obj["index"]),
                prev_hash=str(obj["prev_hash"]),
                payload=payload,
                hash=str(obj["hash"]),
                tick=int(obj["tick"]),
            )
            if rec.to_line() != line:
                raise ValueError("non-canonical line")
        except Exception as e:
            logger.debug("Строка %d журнала повреждена: %s", i, e)
            rec = EventRecord(index=i, prev_hash="", payload=line.encode("utf-8"), hash="", tick=-1)
        records.append(rec)
    return records


def read_log(path: str) -> List[EventRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln != ""]
    return parse_log_lines(lines)
