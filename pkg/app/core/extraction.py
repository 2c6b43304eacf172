"""
Argument Extraction

Step one of code generation: pull the input-argument values for an already
matched API function out of the subtask sentence.

The reference extractor is rule based and deterministic. It collects typed
value candidates (digit literals, number-word phrases, quoted strings and
boolean words), binds each parameter to the nearest preceding mention of its
name, then hands the remaining values out in order of appearance.
"""

import logging
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import requests
from pydantic import BaseModel, Field

from app.core.errors import (
    ArgumentTypeError,
    ExtractionArityError,
    ProviderUnavailableError,
)
from app.core.number_words import parse_number_words
from app.schemas.codegen import ArgumentSet
from app.schemas.corpus import ApiFunction, ApiParameter, ValueType

logger = logging.getLogger(__name__)

_TOKEN = re.compile(
    r"\"(?P<quoted>[^\"]*)\"|(?<![\w.])(?P<number>-?\d+(?:\.\d+)?)|(?P<word>[A-Za-z]+)"
)
_NAME_SPLIT = re.compile(r"[_\-\s]+")

TRUE_WORDS = frozenset({"true", "yes", "enable", "enabled"})
FALSE_WORDS = frozenset({"false", "no", "disable", "disabled"})


class ValueKind:
    NUMBER = "number"
    STRING = "string"
    BOOLEAN = "boolean"


@dataclass(frozen=True)
class Candidate:
    kind: str
    raw: str
    position: int
    number: Optional[Decimal] = None


def _kind_of(value_type: ValueType) -> str:
    if value_type.is_numeric:
        return ValueKind.NUMBER
    if value_type == ValueType.BOOLEAN:
        return ValueKind.BOOLEAN
    return ValueKind.STRING


def tokenize_for_extraction(text: str) -> Tuple[List[str], List[Candidate]]:
    """Split text into lowercase word tokens and the value candidates found among them."""
    tokens: List[str] = []
    literals: Dict[int, Candidate] = {}
    for match in _TOKEN.finditer(text):
        position = len(tokens)
        if match.group("quoted") is not None:
            tokens.append("\0")
            literals[position] = Candidate(ValueKind.STRING, match.group("quoted"), position)
        elif match.group("number") is not None:
            raw = match.group("number")
            tokens.append("\0")
            literals[position] = Candidate(ValueKind.NUMBER, raw, position, Decimal(raw))
        else:
            tokens.append(match.group("word").lower())

    candidates: List[Candidate] = []
    i = 0
    while i < len(tokens):
        if i in literals:
            candidates.append(literals[i])
            i += 1
            continue
        parsed = parse_number_words(tokens, i)
        if parsed is not None:
            value, end = parsed
            candidates.append(
                Candidate(ValueKind.NUMBER, " ".join(tokens[i:end]), i, value)
            )
            i = end
            continue
        if tokens[i] in TRUE_WORDS or tokens[i] in FALSE_WORDS:
            candidates.append(Candidate(ValueKind.BOOLEAN, tokens[i], i))
        i += 1
    return tokens, candidates


def name_tokens(name: str) -> List[str]:
    return [part for part in _NAME_SPLIT.split(name.lower()) if part]


def _mentions(tokens: Sequence[str], parameter: str, others: Sequence[str]) -> List[int]:
    """Positions (last token) where the parameter name, or a token only it uses, appears."""
    target = name_tokens(parameter)
    if not target:
        return []
    width = len(target)
    found = [
        i + width - 1
        for i in range(len(tokens) - width + 1)
        if list(tokens[i : i + width]) == target
    ]
    if found:
        return found
    shared = {token for other in others for token in name_tokens(other)}
    distinctive = {token for token in target if token not in shared and len(token) > 1}
    return [i for i, token in enumerate(tokens) if token in distinctive]


def _distance(value_pos: int, mention_pos: int, horizon: int) -> int:
    # Mentions after the value only count once every preceding mention has.
    if mention_pos <= value_pos:
        return value_pos - mention_pos
    return horizon + mention_pos - value_pos


def bind_candidates(
    tokens: Sequence[str],
    parameters: Sequence[ApiParameter],
    candidates: Sequence[Candidate],
) -> List[Candidate]:
    """Assign one candidate per parameter: nearest mention first, then appearance order."""
    names = [p.name for p in parameters]
    horizon = len(tokens) + 1
    pairs = []
    for p_index, param in enumerate(parameters):
        others = [n for n in names if n != param.name]
        mentions = _mentions(tokens, param.name, others)
        for c_index, candidate in enumerate(candidates):
            if not mentions:
                continue
            distance = min(_distance(candidate.position, m, horizon) for m in mentions)
            pairs.append((distance, p_index, c_index))

    bound: Dict[int, int] = {}
    used = set()
    for _, p_index, c_index in sorted(pairs):
        if p_index in bound or c_index in used:
            continue
        bound[p_index] = c_index
        used.add(c_index)

    leftovers = iter(i for i in range(len(candidates)) if i not in used)
    for p_index in range(len(parameters)):
        if p_index not in bound:
            bound[p_index] = next(leftovers)
    return [candidates[bound[p_index]] for p_index in range(len(parameters))]


def _decimal_text(value: Decimal) -> str:
    value = value.normalize()
    if value.as_tuple().exponent >= 0:
        return f"{int(value)}.0"
    return format(value, "f")


def canonicalize(parameter: ApiParameter, candidate: Candidate) -> str:
    """Render one value in its canonical form for the parameter's declared type."""
    value_type = parameter.value_type
    if value_type == ValueType.INTEGER:
        number = candidate.number
        if number is None or number != number.to_integral_value():
            raise ArgumentTypeError(
                f"{parameter.name} expects an integer, got '{candidate.raw}'"
            )
        return str(int(number))
    if value_type == ValueType.DECIMAL:
        if candidate.number is None:
            raise ArgumentTypeError(f"{parameter.name} expects a decimal, got '{candidate.raw}'")
        return _decimal_text(candidate.number)
    if value_type == ValueType.BOOLEAN:
        if candidate.raw in TRUE_WORDS:
            return "true"
        if candidate.raw in FALSE_WORDS:
            return "false"
        raise ArgumentTypeError(f"{parameter.name} expects a boolean, got '{candidate.raw}'")
    return candidate.raw


def parse_value_text(raw: str) -> Candidate:
    """Interpret a free-standing value string, e.g. one returned by a remote extractor."""
    raw = raw.strip()
    try:
        number = Decimal(raw)
        if number.is_finite():
            return Candidate(ValueKind.NUMBER, raw, 0, number)
    except InvalidOperation:
        pass
    tokens, candidates = tokenize_for_extraction(raw)
    if len(candidates) == 1 and candidates[0].kind == ValueKind.NUMBER:
        if candidates[0].position == 0 and len(tokens) <= len(candidates[0].raw.split()):
            return candidates[0]
    lowered = raw.lower()
    if lowered in TRUE_WORDS or lowered in FALSE_WORDS:
        return Candidate(ValueKind.BOOLEAN, lowered, 0)
    return Candidate(ValueKind.STRING, raw.strip("\"'"), 0)


class ArgumentExtractor(Protocol):
    def extract(self, text: str, function: ApiFunction) -> ArgumentSet: ...


class ReferenceExtractor:
    """Deterministic rule-based extractor."""

    def extract(self, text: str, function: ApiFunction) -> ArgumentSet:
        tokens, candidates = tokenize_for_extraction(text)
        chosen: Dict[str, Candidate] = {}
        for kind in (ValueKind.NUMBER, ValueKind.STRING, ValueKind.BOOLEAN):
            params = [p for p in function.parameters if _kind_of(p.value_type) == kind]
            found = [c for c in candidates if c.kind == kind]
            if not params:
                if kind == ValueKind.NUMBER and found:
                    raise ExtractionArityError(
                        f"{function.name} takes no numeric arguments, found {len(found)}"
                    )
                continue
            if len(found) != len(params):
                raise ExtractionArityError(
                    f"{function.name} expects {len(params)} {kind} argument(s), found {len(found)}"
                )
            for param, candidate in zip(params, bind_candidates(tokens, params, found)):
                chosen[param.name] = candidate

        return ArgumentSet(
            bindings=[
                (param.name, canonicalize(param, chosen[param.name]))
                for param in function.parameters
            ]
        )


class RemoteExtractor:
    """
    Hosted extraction model.

    Request: {"text", "function_name", "parameters": [{"name", "value_type"}]}
    Response: {"values": [string, ...]} in parameter order
    """

    def __init__(self, url: str, timeout_s: float = 10.0):
        self.url = url
        self.timeout_s = timeout_s

    def extract(self, text: str, function: ApiFunction) -> ArgumentSet:
        payload = {
            "text": text,
            "function_name": function.name,
            "parameters": [
                {"name": p.name, "value_type": p.value_type.value} for p in function.parameters
            ],
        }
        try:
            response = requests.post(self.url, json=payload, timeout=self.timeout_s)
            response.raise_for_status()
            values = response.json()["values"]
        except (requests.RequestException, KeyError, ValueError) as e:
            logger.error(f"Extraction request for {function.name} failed: {e}")
            raise ProviderUnavailableError(f"extractor unavailable: {e}") from e

        if len(values) != function.arity:
            raise ExtractionArityError(
                f"{function.name} expects {function.arity} argument(s), extractor returned {len(values)}"
            )
        return ArgumentSet(
            bindings=[
                (param.name, canonicalize(param, parse_value_text(str(value))))
                for param, value in zip(function.parameters, values)
            ]
        )


class ExtractorConfig(BaseModel):
    kind: str = Field(default="ref", pattern="^(ref|remote)$")
    url: Optional[str] = None
    timeout_s: float = Field(default=10.0, gt=0)


def build_extractor(config: Optional[ExtractorConfig] = None) -> ArgumentExtractor:
    config = config or ExtractorConfig()
    if config.kind == "remote":
        if not config.url:
            raise ProviderUnavailableError("remote extractor needs a url")
        return RemoteExtractor(config.url, config.timeout_s)
    return ReferenceExtractor()


def extract_arguments(text: str, function: ApiFunction, extractor: ArgumentExtractor) -> ArgumentSet:
    return extractor.extract(text, function)
