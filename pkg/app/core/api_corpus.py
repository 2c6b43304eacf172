"""
Device API Corpus

Loads, validates and chunks the JSON device API profiles that form each
agent's external knowledge base. Every chunk holds exactly one function so
retrieval scores whole functions against a subtask.
"""

import json
import logging
from pathlib import Path
from typing import List, Union

from pydantic import ValidationError

from app.core.errors import (
    CorpusValidationError,
    MalformedDocumentError,
    ProfileIdentityError,
)
from app.schemas.corpus import ApiChunk, ApiFunction, DeviceApiProfile

logger = logging.getLogger(__name__)

CORPORA_DIR = Path(__file__).resolve().parent.parent.parent / "corpora"


def load_profile(raw: Union[bytes, str]) -> DeviceApiProfile:
    """
    Parse and validate one profile document.

    Args:
        raw: The complete UTF-8 JSON document

    Returns:
        DeviceApiProfile with all schema invariants checked

    Raises:
        MalformedDocumentError: The document is not valid JSON (carries the byte offset)
        CorpusValidationError: The document violates the schema
    """
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedDocumentError("Profile is not valid UTF-8", e.start) from e
    else:
        text = raw

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        offset = len(text[: e.pos].encode("utf-8"))
        raise MalformedDocumentError(f"Malformed profile document: {e.msg}", offset) from e

    if not isinstance(data, dict):
        raise CorpusValidationError("Profile document must be a JSON object")

    try:
        return DeviceApiProfile.model_validate(data)
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'profile'}: {err['msg']}"
            for err in e.errors()
        )
        raise CorpusValidationError(f"Invalid profile: {details}") from e


def load_profile_file(path: Union[str, Path]) -> DeviceApiProfile:
    """Load a profile from disk; bare names resolve against the shipped corpora."""
    path = Path(path)
    if not path.exists() and not path.is_absolute():
        candidate = CORPORA_DIR / path
        if candidate.exists():
            path = candidate
    profile = load_profile(path.read_bytes())
    logger.info(
        "Loaded profile %s v%d (%d functions) from %s",
        profile.device_id,
        profile.version,
        len(profile.functions),
        path,
    )
    return profile


def serialize_profile(profile: DeviceApiProfile) -> bytes:
    """Canonical JSON rendering; load_profile(serialize_profile(p)) == p."""
    return profile.model_dump_json(exclude_none=True).encode("utf-8")


def render_chunk_text(function: ApiFunction) -> str:
    """Canonical retrieval text: "name. description. parameters: p1 (d1); p2 (d2)"."""
    description = function.description.strip().rstrip(".")
    if function.parameters:
        params = "; ".join(
            f"{p.name} ({p.description.strip().rstrip('.')})" for p in function.parameters
        )
    else:
        params = "none"
    return f"{function.name}. {description}. parameters: {params}"


def chunk_profile(profile: DeviceApiProfile) -> List[ApiChunk]:
    """Split a profile into one chunk per function, preserving declaration order."""
    return [
        ApiChunk(
            function=function,
            source_device=profile.device_id,
            chunk_text=render_chunk_text(function),
        )
        for function in profile.functions
    ]


def apply_profile_update(
    current: DeviceApiProfile, update: DeviceApiProfile
) -> DeviceApiProfile:
    """Adopt the update only when it carries a strictly newer version."""
    if update.device_id != current.device_id:
        raise ProfileIdentityError(
            f"Profile update for {update.device_id} cannot apply to {current.device_id}"
        )
    if update.version > current.version:
        logger.info(
            "Profile %s updated v%d -> v%d",
            current.device_id,
            current.version,
            update.version,
        )
        return update
    return current
