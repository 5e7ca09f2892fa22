# app/canonical.py
"""
Каноническая сериализация: JSON с отсортированными ключами, без пробелов.
Одна и та же форма используется для событий, состояния, отчётов и сценариев,
поэтому хеши воспроизводимы побайтно.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from enum import Enum
from fractions import Fraction
from typing import Any

ZERO_HASH = "0" * 64
HASH_PREFIX = "sha256:"


def to_plain(obj: Any) -> Any:
    """Приводит dataclass/Enum/Fraction/set к JSON-совместимым типам."""
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, float):
        # repr() float в Python детерминирован (кратчайшее представление)
        return obj
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (set, frozenset)):
        return sorted(to_plain(v) for v in obj)
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    raise TypeError(f"не сериализуется канонически: {type(obj).__name__}")


def format_ratio(value: float) -> str:
    return f"{value:.6f}"


def dumps(obj: Any) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def encode(obj: Any) -> bytes:
    return dumps(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest(obj: Any) -> str:
    return sha256_hex(encode(obj))


def hash_text(value: Any) -> str:
    """Хеш-доказательство для чувствительного поля (идемпотентно)."""
    if isinstance(value, str) and value.startswith(HASH_PREFIX):
        return value
    return HASH_PREFIX + sha256_hex(encode(value))


def parse_fraction(raw: Any) -> Fraction:
    """'2/3', 0.5, '0.4', 1 -> Fraction. Float переводим через строку, чтобы 0.4 было ровно 2/5."""
    if isinstance(raw, Fraction):
        return raw
    if isinstance(raw, bool):
        raise ValueError("bool не является долей")
    if isinstance(raw, int):
        return Fraction(raw)
    if isinstance(raw, float):
        return Fraction(repr(raw))
    if isinstance(raw, str):
        return Fraction(raw.strip())
    raise ValueError(f"не доля: {raw!r}")
