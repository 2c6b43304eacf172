"""
Retrieval of the device API function that best fits a subtask.

Each agent embeds its own device's chunks once, then scores every subtask
against all of them by cosine similarity and keeps the full ranking.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel

from app.core.embeddings import EmbeddingProvider, EmbeddingVector, cosine_similarity, embed
from app.core.errors import IncompatibleVectorsError, NoCandidatesError
from app.schemas.corpus import ApiChunk, ApiFunction

logger = logging.getLogger(__name__)

# Decimals compared when ranking; scores equal at this precision order by name.
TIE_PRECISION = 6


@dataclass(frozen=True)
class ApiIndex:
    entries: Tuple[Tuple[ApiChunk, EmbeddingVector], ...]
    provider_id: str
    dim: int

    @classmethod
    def from_entries(
        cls, entries: Sequence[Tuple[ApiChunk, EmbeddingVector]], provider_id: str, dim: int
    ) -> "ApiIndex":
        for chunk, vector in entries:
            if vector.provider_id != provider_id or vector.dim != dim:
                raise IncompatibleVectorsError(
                    f"chunk {chunk.function.name} embedded by {vector.provider_id}/{vector.dim}, "
                    f"index uses {provider_id}/{dim}"
                )
        return cls(tuple(entries), provider_id, dim)

    def __len__(self) -> int:
        return len(self.entries)


class MatchResult(BaseModel):
    best: ApiFunction
    score: float
    ranking: List[Tuple[str, float]]


def build_index(chunks: Sequence[ApiChunk], provider: EmbeddingProvider) -> ApiIndex:
    """Embed every chunk; an empty chunk list yields an empty index."""
    vectors = provider.embed_many([chunk.chunk_text for chunk in chunks]) if chunks else []
    index = ApiIndex.from_entries(
        list(zip(chunks, vectors)), provider.provider_id, provider.dim
    )
    logger.debug("Built index of %d chunks with %s", len(index), provider.provider_id)
    return index


def rank_scores(scored: Sequence[Tuple[str, float]]) -> List[Tuple[str, float]]:
    """Score descending, ties by ascending function name."""
    return sorted(scored, key=lambda item: (-round(item[1], TIE_PRECISION), item[0]))


def match_subtask(
    subtask_text: str,
    index: ApiIndex,
    provider: EmbeddingProvider,
    min_score: Optional[float] = None,
) -> MatchResult:
    """
    Pick the API function whose chunk is most similar to the subtask.

    Args:
        subtask_text: The natural-language subtask
        index: The agent's index over its own device profile
        provider: Must be the provider the index was built with
        min_score: Optional rejection threshold for low-confidence matches

    Raises:
        NoCandidatesError: Empty index, or best score below min_score
        IncompatibleVectorsError: Provider differs from the index's
    """
    if len(index) == 0:
        raise NoCandidatesError("cannot match against an empty index")
    if provider.provider_id != index.provider_id or provider.dim != index.dim:
        raise IncompatibleVectorsError(
            f"index built with {index.provider_id}, query provider is {provider.provider_id}"
        )

    query = embed(subtask_text, provider)
    functions = {}
    scored = []
    for chunk, vector in index.entries:
        functions[chunk.function.name] = chunk.function
        scored.append((chunk.function.name, cosine_similarity(query, vector)))

    ranking = rank_scores(scored)
    best_name, best_score = ranking[0]
    if min_score is not None and best_score < min_score:
        raise NoCandidatesError(
            f"best match {best_name} scored {best_score:.3f}, below threshold {min_score}"
        )
    return MatchResult(best=functions[best_name], score=best_score, ranking=ranking)


def ranking_to_json(result: MatchResult) -> str:
    """Canonical golden text: one [function, score] pair per line, 6 decimals."""
    rows = [json.dumps([name, round(score, 6) + 0.0]) for name, score in result.ranking]
    return "[\n" + ",\n".join(f"  {row}" for row in rows) + "\n]\n"


def write_golden_ranking(result: MatchResult, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(ranking_to_json(result), encoding="utf-8")
    return path
