"""
English number words for zero to nine hundred ninety-nine.

The same tables drive value rendering in the dataset generator and value
parsing in the reference extractor, so anything one side writes the other
side reads back.
"""

from decimal import Decimal
from typing import Dict, List, Optional, Sequence, Tuple

UNITS: Dict[str, int] = {
    "zero": 0,
    "one": 1,
    "two": 2,
    "three": 3,
    "four": 4,
    "five": 5,
    "six": 6,
    "seven": 7,
    "eight": 8,
    "nine": 9,
    "ten": 10,
    "eleven": 11,
    "twelve": 12,
    "thirteen": 13,
    "fourteen": 14,
    "fifteen": 15,
    "sixteen": 16,
    "seventeen": 17,
    "eighteen": 18,
    "nineteen": 19,
}

TENS: Dict[str, int] = {
    "twenty": 20,
    "thirty": 30,
    "forty": 40,
    "fifty": 50,
    "sixty": 60,
    "seventy": 70,
    "eighty": 80,
    "ninety": 90,
}

ORDINALS: Dict[str, int] = {
    "first": 1,
    "second": 2,
    "third": 3,
    "fourth": 4,
    "fifth": 5,
    "sixth": 6,
    "seventh": 7,
    "eighth": 8,
    "ninth": 9,
    "tenth": 10,
    "eleventh": 11,
    "twelfth": 12,
}

HUNDRED = "hundred"
POINT = "point"
NEGATORS = ("minus", "negative")

DIGIT_WORDS = [word for word, value in UNITS.items() if value < 10]

# Every word the grammar gives meaning to; generated text must not use them
# for anything other than values.
RESERVED_WORDS = frozenset(
    list(UNITS) + list(TENS) + list(ORDINALS) + [HUNDRED, POINT, "and", *NEGATORS]
)

_UNITS_BY_VALUE = {value: word for word, value in UNITS.items()}
_TENS_BY_VALUE = {value: word for word, value in TENS.items()}


def _below_hundred_words(n: int) -> str:
    if n < 20:
        return _UNITS_BY_VALUE[n]
    tens, unit = divmod(n, 10)
    if unit == 0:
        return _TENS_BY_VALUE[tens * 10]
    return f"{_TENS_BY_VALUE[tens * 10]}-{_UNITS_BY_VALUE[unit]}"


def int_to_words(n: int) -> str:
    """26 -> "twenty-six", 305 -> "three hundred five"."""
    if not 0 <= n <= 999:
        raise ValueError(f"{n} outside the supported range 0..999")
    hundreds, rest = divmod(n, 100)
    if hundreds == 0:
        return _below_hundred_words(rest)
    words = f"{_UNITS_BY_VALUE[hundreds]} {HUNDRED}"
    if rest:
        words += f" {_below_hundred_words(rest)}"
    return words


def value_to_words(value: str) -> str:
    """Render a canonical integer or decimal string ("26", "12.5") as words."""
    negative = value.startswith("-")
    digits = value.lstrip("-")
    whole, _, fraction = digits.partition(".")
    words = int_to_words(int(whole))
    if fraction:
        words += f" {POINT} " + " ".join(_UNITS_BY_VALUE[int(d)] for d in fraction)
    return f"minus {words}" if negative else words


def _parse_below_hundred(tokens: Sequence[str], i: int) -> Optional[Tuple[int, int]]:
    if i >= len(tokens):
        return None
    token = tokens[i]
    if token in TENS:
        value = TENS[token]
        if i + 1 < len(tokens) and 1 <= UNITS.get(tokens[i + 1], 0) <= 9:
            return value + UNITS[tokens[i + 1]], i + 2
        return value, i + 1
    if token in UNITS and UNITS[token] > 0:
        return UNITS[token], i + 1
    return None


def _parse_cardinal(tokens: Sequence[str], i: int) -> Optional[Tuple[int, int]]:
    token = tokens[i]
    if token in ORDINALS:
        return ORDINALS[token], i + 1
    if token in UNITS:
        value = UNITS[token]
        j = i + 1
        if value and value < 10 and j < len(tokens) and tokens[j] == HUNDRED:
            value *= 100
            j += 1
            k = j + 1 if j < len(tokens) and tokens[j] == "and" else j
            rest = _parse_below_hundred(tokens, k)
            if rest is not None:
                value += rest[0]
                j = rest[1]
        return value, j
    return _parse_below_hundred(tokens, i)


def parse_number_words(tokens: Sequence[str], i: int) -> Optional[Tuple[Decimal, int]]:
    """
    Parse the longest number phrase starting at tokens[i].

    Args:
        tokens: Lowercase word tokens
        i: Start position

    Returns:
        (value, index after the phrase), or None when tokens[i] starts no number
    """
    if i >= len(tokens):
        return None
    sign = 1
    start = i
    if tokens[i] in NEGATORS:
        sign = -1
        i += 1
        if i >= len(tokens):
            return None
    parsed = _parse_cardinal(tokens, i)
    if parsed is None:
        return None
    whole, j = parsed
    value = Decimal(whole)
    if (
        tokens[start + (1 if sign < 0 else 0)] not in ORDINALS
        and j + 1 < len(tokens)
        and tokens[j] == POINT
        and tokens[j + 1] in DIGIT_WORDS
    ):
        j += 1
        digits: List[str] = []
        while j < len(tokens) and tokens[j] in DIGIT_WORDS:
            digits.append(str(UNITS[tokens[j]]))
            j += 1
        value = Decimal(f"{whole}.{''.join(digits)}")
    return sign * value, j
