"""
Sentence Embedding Providers

Two providers share one contract (texts in, vectors out):

1. HashingEmbeddingProvider - deterministic signed feature hashing over a
   bag of lowercase tokens, the reference provider used by tests and
   benchmarks
2. RemoteEmbeddingProvider - HTTP adapter for a hosted sentence encoder,
   request {"texts": [...]} and response {"vectors": [[...]]}
"""

import logging
import re
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence

import numpy as np
import requests
from pydantic import BaseModel, Field

from app.core.errors import IncompatibleVectorsError, ProviderUnavailableError

logger = logging.getLogger(__name__)

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK_64 = (1 << 64) - 1

NORM_TOLERANCE = 1e-6

_NON_TOKEN = re.compile(r"[^a-z0-9\s]")


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    provider_id: str
    dim: int
    normalized: bool = False

    def __post_init__(self):
        if self.values.shape != (self.dim,):
            raise IncompatibleVectorsError(
                f"vector has shape {self.values.shape}, expected ({self.dim},)"
            )
        self.values.setflags(write=False)

    @property
    def degenerate(self) -> bool:
        """All-zero vectors carry no direction; similarity against them is 0."""
        return not np.any(self.values)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return (
            self.provider_id == other.provider_id
            and self.dim == other.dim
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.provider_id, self.dim, self.values.tobytes()))


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed_many(self, texts: Sequence[str]) -> List[EmbeddingVector]: ...


def tokenize(text: str) -> List[str]:
    return _NON_TOKEN.sub(" ", text.lower()).split()


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK_64
    return h


def _normalize(values: np.ndarray, provider_id: str, dim: int) -> EmbeddingVector:
    norm = np.linalg.norm(values)
    if norm == 0.0:
        return EmbeddingVector(values, provider_id, dim, normalized=False)
    return EmbeddingVector(values / norm, provider_id, dim, normalized=True)


class HashingEmbeddingProvider:
    """Signed hashing trick: bucket = fnv1a(token) mod dim, sign from the top bit."""

    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim
        self.provider_id = f"fnv1a-hashing-{dim}"

    def embed_text(self, text: str) -> EmbeddingVector:
        values = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            h = fnv1a_64(token.encode("utf-8"))
            values[h % self.dim] += -1.0 if h >> 63 else 1.0
        return _normalize(values, self.provider_id, self.dim)

    def embed_many(self, texts: Sequence[str]) -> List[EmbeddingVector]:
        return [self.embed_text(text) for text in texts]


class RemoteEmbeddingProvider:
    """Hosted sentence encoder reached over HTTP."""

    def __init__(
        self, url: str, dim: int, timeout_s: float = 10.0, model: str = "remote"
    ):
        self.url = url
        self.dim = dim
        self.timeout_s = timeout_s
        self.provider_id = f"{model}-{dim}"

    def embed_many(self, texts: Sequence[str]) -> List[EmbeddingVector]:
        try:
            response = requests.post(
                self.url, json={"texts": list(texts)}, timeout=self.timeout_s
            )
            response.raise_for_status()
            vectors = response.json()["vectors"]
        except (requests.RequestException, KeyError, ValueError) as e:
            logger.error(f"Embedding request to {self.url} failed: {e}")
            raise ProviderUnavailableError(f"embedding provider unavailable: {e}") from e

        if len(vectors) != len(texts):
            raise ProviderUnavailableError(
                f"embedding provider returned {len(vectors)} vectors for {len(texts)} texts"
            )
        result = []
        for raw in vectors:
            values = np.asarray(raw, dtype=np.float64)
            if values.shape != (self.dim,):
                raise IncompatibleVectorsError(
                    f"provider {self.provider_id} returned dimension {values.size}, expected {self.dim}"
                )
            result.append(_normalize(values, self.provider_id, self.dim))
        return result


class EmbeddingConfig(BaseModel):
    kind: str = Field(default="hashing", pattern="^(hashing|remote)$")
    dim: int = Field(default=256, gt=0)
    url: Optional[str] = None
    model: str = "remote"
    timeout_s: float = Field(default=10.0, gt=0)


def build_provider(config: Optional[EmbeddingConfig] = None) -> EmbeddingProvider:
    config = config or EmbeddingConfig()
    if config.kind == "remote":
        if not config.url:
            raise ProviderUnavailableError("remote embedding provider needs a url")
        return RemoteEmbeddingProvider(config.url, config.dim, config.timeout_s, config.model)
    return HashingEmbeddingProvider(config.dim)


def embed(text: str, provider: EmbeddingProvider) -> EmbeddingVector:
    return provider.embed_many([text])[0]


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a, b) / (|a| |b|), or 0.0 when either side is all-zero."""
    if a.provider_id != b.provider_id or a.dim != b.dim:
        raise IncompatibleVectorsError(
            f"cannot compare {a.provider_id}/{a.dim} with {b.provider_id}/{b.dim}"
        )
    if a.degenerate or b.degenerate:
        return 0.0
    score = float(np.dot(a.values, b.values) / (a.norm * b.norm))
    return float(np.clip(score, -1.0, 1.0)) + 0.0
