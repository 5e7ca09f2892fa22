# tests/test_canonical.py
from fractions import Fraction

import pytest

from app import canonical


@pytest.mark.parametrize("raw", ["0.4", 0.4, "2/5", Fraction(2, 5)])
def test_fraction_parsing_is_exact(raw):
    assert canonical.parse_fraction(raw) == Fraction(2, 5)


def test_bool_is_not_a_fraction():
    with pytest.raises(ValueError):
        canonical.parse_fraction(True)


def test_dumps_is_sorted_and_compact():
    assert canonical.dumps({"b": 1, "a": {"z": Fraction(1, 3), "y": {"q", "p"}}}) == \
        '{"a":{"y":["p","q"],"z":"1/3"},"b":1}'


def test_hash_text_is_idempotent():
    once = canonical.hash_text("Acme Secret GmbH")
    assert once.startswith(canonical.HASH_PREFIX)
    assert canonical.hash_text(once) == once
