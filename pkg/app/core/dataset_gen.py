"""
Subtask-Argument Dataset Generator

Builds {ACTION, ATTRIBUTE, VALUE} triplets, renders each one through a
single-argument sentence frame, and joins one to four of them into a
subtask instruction. The planted (attribute, value) pairs are the labels.

Every pair is checked against the reference extractor at generation time;
draws it cannot recover exactly are discarded and counted. The resulting
train/test split and manifest are byte-stable for a given spec and seed.
"""

import json
import logging
import string
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import requests
from pydantic import BaseModel, Field, field_validator

from app.core.errors import LLMindError, ProviderUnavailableError
from app.core.extraction import FALSE_WORDS, TRUE_WORDS, ArgumentExtractor, ReferenceExtractor, name_tokens
from app.core.number_words import RESERVED_WORDS, value_to_words
from app.schemas.corpus import ApiFunction, ApiParameter, ValueType

logger = logging.getLogger(__name__)

MAX_ARITY = 4
MAX_ATTEMPTS = 1000

VERBS = ["set", "adjust", "tweak", "change", "configure", "update", "modify", "tune"]

# Attribute always precedes its value, so nearest-preceding binding recovers it.
FRAMES = [
    "{verb} the device's {attr} parameter to {value}",
    "{verb} {attr} to {value}",
    "{verb} the {attr} setting to {value}",
    "{verb} the value of {attr} to {value}",
    "{verb} {attr} so that it equals {value}",
    "{verb} the {attr} field to a value of {value}",
    "{verb} the {attr} attribute, making it {value}",
    "{verb} the current {attr} value to {value}",
    "{verb} the {attr} of the device to {value}",
    "{verb} {attr} on the device to exactly {value}",
    "{verb} the configured {attr} so it becomes {value}",
]

CONNECTORS = [" and ", ", then ", "; "]

ATTRIBUTES = [
    "gain",
    "sample_rate",
    "tx_power",
    "channel",
    "bandwidth",
    "duty_cycle",
    "threshold",
    "offset",
    "frequency",
    "volume",
    "brightness",
    "fan_speed",
    "timeout",
    "poll_interval",
    "retry_limit",
    "buffer_size",
    "temperature",
    "humidity",
    "exposure",
    "contrast",
    "zoom",
    "queue_depth",
    "window_width",
    "beacon_period",
    "backoff",
    "voltage",
    "pressure",
    "altitude",
    "heading",
    "torque",
]

DECIMAL_SHARE = 0.3
WORDS_SHARE = 0.5
RANDOM_ATTRIBUTE_SHARE = 0.5

FINE_TUNING_METADATA = {
    "method": "lora",
    "lora_rank": 32,
    "lora_alpha": 32,
    "lora_dropout": 0.1,
    "batch_size": 2,
    "learning_rate": 0.02,
    "optimizer": "adamw_8bit",
}


def _frame_vocabulary() -> frozenset:
    words = set(VERBS)
    for text in FRAMES + CONNECTORS:
        words.update(name_tokens("".join(c if c.isalpha() else " " for c in text)))
    return frozenset(words)


FRAME_WORDS = _frame_vocabulary()
_POOL_TOKENS = frozenset(token for attr in ATTRIBUTES for token in name_tokens(attr))
_FORBIDDEN_TOKENS = RESERVED_WORDS | TRUE_WORDS | FALSE_WORDS | FRAME_WORDS | _POOL_TOKENS


class Triplet(BaseModel):
    action: str = Field(min_length=1)
    attribute: str = Field(min_length=1)
    value: str

    @field_validator("value")
    @classmethod
    def _numeric(cls, value: str) -> str:
        try:
            Decimal(value)
        except InvalidOperation:
            raise ValueError(f"value '{value}' is neither an integer nor a decimal") from None
        return value


class SubtaskArgPair(BaseModel):
    instruction: str
    arguments: List[Tuple[str, str]]
    arity: int = Field(ge=1, le=MAX_ARITY)
    paraphrased: bool = False

    def to_json_line(self) -> str:
        record = {
            "instruction": self.instruction,
            "arguments": [list(a) for a in self.arguments],
            "arity": self.arity,
        }
        if self.paraphrased:
            record["paraphrased"] = True
        return json.dumps(record, ensure_ascii=False)


class DatasetSpec(BaseModel):
    counts: Dict[int, int] = Field(default_factory=lambda: {a: 1200 for a in range(1, MAX_ARITY + 1)})
    test_fraction: float = Field(default=0.10, gt=0, lt=1)
    seed: int = 0

    @field_validator("counts")
    @classmethod
    def _check_counts(cls, counts: Dict[int, int]) -> Dict[int, int]:
        if not counts:
            raise ValueError("at least one arity is required")
        for arity, count in counts.items():
            if not 1 <= arity <= MAX_ARITY:
                raise ValueError(f"arity {arity} outside 1..{MAX_ARITY}")
            if count <= 0:
                raise ValueError(f"count for arity {arity} must be positive")
        return dict(sorted(counts.items()))

    @classmethod
    def full(cls, seed: int = 0) -> "DatasetSpec":
        return cls(counts={a: 12000 for a in range(1, MAX_ARITY + 1)}, seed=seed)

    @classmethod
    def desk(cls, seed: int = 0) -> "DatasetSpec":
        return cls(counts={a: 1200 for a in range(1, MAX_ARITY + 1)}, seed=seed)

    @classmethod
    def scale(cls, name: str, seed: int = 0) -> "DatasetSpec":
        if name == "full":
            return cls.full(seed)
        if name == "desk":
            return cls.desk(seed)
        raise ValueError(f"unknown dataset scale '{name}' (full|desk)")

    @property
    def total(self) -> int:
        return sum(self.counts.values())


class Paraphraser(Protocol):
    name: str

    def paraphrase(self, text: str) -> str: ...


class IdentityParaphraser:
    name = "identity"

    def paraphrase(self, text: str) -> str:
        return text


class RemoteParaphraser:
    """Hosted rewording model. Request {"text"}; response {"text"}."""

    name = "remote"

    def __init__(self, url: str, timeout_s: float = 30.0):
        self.url = url
        self.timeout_s = timeout_s

    def paraphrase(self, text: str) -> str:
        try:
            response = requests.post(self.url, json={"text": text}, timeout=self.timeout_s)
            response.raise_for_status()
            return str(response.json()["text"])
        except (requests.RequestException, KeyError, ValueError) as e:
            logger.error(f"Paraphrase request failed: {e}")
            raise ProviderUnavailableError(f"paraphraser unavailable: {e}") from e


@dataclass
class GenerationStats:
    generated: int = 0
    rejected: int = 0
    paraphrased: int = 0


def _random_token(rng: np.random.Generator) -> str:
    while True:
        length = int(rng.integers(2, 5))
        token = "".join(rng.choice(list(string.ascii_uppercase), size=length))
        if token.lower() not in _FORBIDDEN_TOKENS:
            return token


def _draw_attributes(rng: np.random.Generator, arity: int) -> List[str]:
    chosen: List[str] = []
    used: set = set()
    while len(chosen) < arity:
        if rng.random() < RANDOM_ATTRIBUTE_SHARE:
            attr = _random_token(rng)
        else:
            attr = ATTRIBUTES[int(rng.integers(len(ATTRIBUTES)))]
        tokens = set(name_tokens(attr))
        if tokens & used:
            continue
        used |= tokens
        chosen.append(attr)
    return chosen


def _draw_value(rng: np.random.Generator) -> str:
    whole = int(rng.integers(0, 1000))
    if rng.random() < DECIMAL_SHARE:
        return f"{whole}.{int(rng.integers(0, 10))}"
    return str(whole)


def render_triplet(triplet: Triplet, frame: str, as_words: bool, capitalize: bool) -> str:
    """Render one triplet through one sentence frame, without final punctuation."""
    verb = triplet.action.capitalize() if capitalize else triplet.action
    value = value_to_words(triplet.value) if as_words else triplet.value
    return frame.format(verb=verb, attr=triplet.attribute.replace("_", " "), value=value)


def function_for_pair(pair: SubtaskArgPair) -> ApiFunction:
    """The API function a pair's instruction targets: one numeric parameter per attribute."""
    return ApiFunction(
        name="configure_device",
        description="Configure device parameters.",
        parameters=[
            ApiParameter(
                name=attr,
                value_type=ValueType.DECIMAL if "." in value else ValueType.INTEGER,
            )
            for attr, value in pair.arguments
        ],
    )


def recovers(pair: SubtaskArgPair, extractor: ArgumentExtractor) -> bool:
    try:
        extracted = extractor.extract(pair.instruction, function_for_pair(pair))
    except LLMindError:
        return False
    return extracted.bindings == [tuple(a) for a in pair.arguments]


def _draw_pair(rng: np.random.Generator, arity: int) -> SubtaskArgPair:
    attributes = _draw_attributes(rng, arity)
    clauses = []
    arguments = []
    for k, attr in enumerate(attributes):
        triplet = Triplet(
            action=VERBS[int(rng.integers(len(VERBS)))],
            attribute=attr,
            value=_draw_value(rng),
        )
        frame = FRAMES[int(rng.integers(len(FRAMES)))]
        as_words = bool(rng.random() < WORDS_SHARE)
        clauses.append(render_triplet(triplet, frame, as_words, capitalize=k == 0))
        arguments.append((triplet.attribute, triplet.value))

    text = clauses[0]
    for clause in clauses[1:]:
        text += CONNECTORS[int(rng.integers(len(CONNECTORS)))] + clause
    return SubtaskArgPair(instruction=text + ".", arguments=arguments, arity=arity)


def generate_pair(
    rng: np.random.Generator,
    arity: int,
    extractor: Optional[ArgumentExtractor] = None,
    paraphraser: Optional[Paraphraser] = None,
    stats: Optional[GenerationStats] = None,
) -> SubtaskArgPair:
    """
    Draw one subtask-argument pair the reference extractor recovers exactly.

    Args:
        rng: Source of every random choice
        arity: Number of arguments, 1..4
        extractor: Recovery check (reference extractor when omitted)
        paraphraser: Optional rewording applied after the check; reworded pairs are flagged
        stats: Counters updated in place
    """
    if not 1 <= arity <= MAX_ARITY:
        raise ValueError(f"arity {arity} outside 1..{MAX_ARITY}")
    extractor = extractor or ReferenceExtractor()
    stats = stats if stats is not None else GenerationStats()

    for _ in range(MAX_ATTEMPTS):
        pair = _draw_pair(rng, arity)
        if recovers(pair, extractor):
            break
        stats.rejected += 1
        logger.debug(f"Rejected unrecoverable draw: {pair.instruction!r}")
    else:
        raise RuntimeError(f"no recoverable arity-{arity} pair in {MAX_ATTEMPTS} draws")

    stats.generated += 1
    if paraphraser is not None:
        reworded = paraphraser.paraphrase(pair.instruction)
        if reworded != pair.instruction:
            stats.paraphrased += 1
            pair = pair.model_copy(update={"instruction": reworded, "paraphrased": True})
    return pair


def split_counts(counts: Dict[int, int], fraction: float) -> Dict[int, int]:
    """Per-arity test sizes summing to round(total * fraction), by largest remainder."""
    total = sum(counts.values())
    target = int(round(total * fraction))
    quotas = {arity: count * fraction for arity, count in counts.items()}
    sizes = {arity: int(np.floor(q)) for arity, q in quotas.items()}
    leftover = target - sum(sizes.values())
    order = sorted(quotas, key=lambda a: (-(quotas[a] - sizes[a]), a))
    for arity in order[:leftover]:
        sizes[arity] += 1
    return sizes


class DatasetFiles(BaseModel):
    train: Path
    test: Path
    manifest: Path
    train_count: int
    test_count: int
    rejected: int


def generate_dataset(
    spec: DatasetSpec,
    out_dir: Union[str, Path],
    paraphraser: Optional[Paraphraser] = None,
) -> DatasetFiles:
    """Generate all pairs, split them per arity and write train/test JSON lines plus a manifest."""
    out_dir = Path(out_dir)
    extractor = ReferenceExtractor()
    stats = GenerationStats()
    test_sizes = split_counts(spec.counts, spec.test_fraction)

    train: List[SubtaskArgPair] = []
    test: List[SubtaskArgPair] = []
    for arity, count in spec.counts.items():
        rng = np.random.default_rng([spec.seed, arity])
        pairs = [generate_pair(rng, arity, extractor, paraphraser, stats) for _ in range(count)]
        chosen = set(rng.permutation(count)[: test_sizes[arity]].tolist())
        for index, pair in enumerate(pairs):
            (test if index in chosen else train).append(pair)
        logger.info(f"Arity {arity}: {count} pairs, {test_sizes[arity]} held out")

    manifest = {
        "seed": spec.seed,
        "counts": {str(a): c for a, c in spec.counts.items()},
        "total": spec.total,
        "test_fraction": spec.test_fraction,
        "train_count": len(train),
        "test_count": len(test),
        "test_per_arity": {str(a): n for a, n in test_sizes.items()},
        "rejected_draws": stats.rejected,
        "paraphrased": stats.paraphrased,
        "paraphraser": paraphraser.name if paraphraser is not None else IdentityParaphraser.name,
        "pools": {
            "verbs": VERBS,
            "attributes": ATTRIBUTES,
            "frames": FRAMES,
            "connectors": CONNECTORS,
        },
        "fine_tuning": FINE_TUNING_METADATA,
        "files": {"train": "train.jsonl", "test": "test.jsonl"},
    }

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        train_path = _write_lines(out_dir / "train.jsonl", train)
        test_path = _write_lines(out_dir / "test.jsonl", test)
        manifest_path = out_dir / "manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"Could not write dataset to {out_dir}: {e}")
        raise

    logger.info(
        f"Dataset written to {out_dir}: {len(train)} train, {len(test)} test, {stats.rejected} rejected draws"
    )
    return DatasetFiles(
        train=train_path,
        test=test_path,
        manifest=manifest_path,
        train_count=len(train),
        test_count=len(test),
        rejected=stats.rejected,
    )


def _write_lines(path: Path, pairs: Iterable[SubtaskArgPair]) -> Path:
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for pair in pairs:
            handle.write(pair.to_json_line() + "\n")
    return path


def load_pairs(path: Union[str, Path]) -> List[SubtaskArgPair]:
    pairs = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                record = json.loads(line)
                pairs.append(
                    SubtaskArgPair(
                        instruction=record["instruction"],
                        arguments=[tuple(a) for a in record["arguments"]],
                        arity=record["arity"],
                        paraphrased=record.get("paraphrased", False),
                    )
                )
    return pairs


class ExtractionFailure(BaseModel):
    instruction: str
    arity: int
    expected: List[Tuple[str, str]]
    extracted: Optional[List[Tuple[str, str]]] = None
    reason: str


class EvaluationReport(BaseModel):
    total: int
    correct: int
    accuracy: float
    per_arity: Dict[int, float]
    failures: List[ExtractionFailure] = Field(default_factory=list)


def evaluate_extractor(
    extractor: ArgumentExtractor,
    test: Union[str, Path, Sequence[SubtaskArgPair]],
) -> EvaluationReport:
    """Exact-match accuracy: every value equal to the planted one, bound to the right attribute."""
    pairs = load_pairs(test) if isinstance(test, (str, Path)) else list(test)
    hits: Dict[int, List[bool]] = {}
    failures = []
    for pair in pairs:
        expected = [tuple(a) for a in pair.arguments]
        try:
            extracted = extractor.extract(pair.instruction, function_for_pair(pair)).bindings
        except LLMindError as e:
            failures.append(
                ExtractionFailure(
                    instruction=pair.instruction,
                    arity=pair.arity,
                    expected=expected,
                    reason=f"{type(e).__name__}: {e}",
                )
            )
            hits.setdefault(pair.arity, []).append(False)
            continue
        ok = list(extracted) == expected
        if not ok:
            failures.append(
                ExtractionFailure(
                    instruction=pair.instruction,
                    arity=pair.arity,
                    expected=expected,
                    extracted=list(extracted),
                    reason="mismatch",
                )
            )
        hits.setdefault(pair.arity, []).append(ok)

    correct = sum(sum(v) for v in hits.values())
    total = len(pairs)
    return EvaluationReport(
        total=total,
        correct=correct,
        accuracy=correct / total if total else 0.0,
        per_arity={arity: float(np.mean(v)) for arity, v in sorted(hits.items())},
        failures=failures,
    )


def failures_to_csv(report: EvaluationReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(
        [
            {
                "arity": f.arity,
                "instruction": f.instruction,
                "expected": json.dumps([list(a) for a in f.expected]),
                "extracted": json.dumps([list(a) for a in f.extracted]) if f.extracted is not None else "",
                "reason": f.reason,
            }
            for f in report.failures
        ],
        columns=["arity", "instruction", "expected", "extracted", "reason"],
    )
    df.to_csv(path, index=False)
    return path
