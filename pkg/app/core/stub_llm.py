"""Deterministic stand-in for the planning and code-generation language models."""

import asyncio
import logging
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from app.core.errors import ProviderUnavailableError

logger = logging.getLogger(__name__)


class StubLLMConfig(BaseModel):
    latency_s: float = Field(default=0.2, ge=0)
    fail_p: float = Field(default=0.0, ge=0, le=1)
    seed: int = 0


class StubLLM:
    """
    Fixed latency per call and a seeded Bernoulli failure on code generation.

    Planning calls never fail so both orchestration modes see the same
    failure process.
    """

    def __init__(
        self,
        config: Optional[StubLLMConfig] = None,
        seed: Optional[Union[int, Sequence[int]]] = None,
    ):
        self.config = config or StubLLMConfig()
        self._rng = np.random.default_rng(self.config.seed if seed is None else seed)
        self.plan_calls = 0
        self.generate_calls = 0
        self.failures = 0

    async def plan(self, device_id: str) -> str:
        self.plan_calls += 1
        await asyncio.sleep(self.config.latency_s)
        return f"fsm plan for {device_id}"

    async def generate(self, device_id: str) -> str:
        self.generate_calls += 1
        await asyncio.sleep(self.config.latency_s)
        if self._rng.random() < self.config.fail_p:
            self.failures += 1
            logger.debug(f"Stub code generation failed for {device_id}")
            raise ProviderUnavailableError(f"code generation for {device_id} failed")
        return f"program for {device_id}"
