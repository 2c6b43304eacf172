"""
Device Agent Runtime

One agent per device, four cooperating activities:

1. Poll responder - answers every coordinator poll from current snapshots
2. Subtask receiver - stores assignments in a single-slot queue
3. Interpreter - matches, extracts, composes and renders the pending subtask
4. Executor - drives the five-state FSM on the device

The interpreter waits for the executor before popping the next subtask, so at
most one subtask runs per device. A new assignment supersedes a queued one
but never a running one. Matching and argument extraction run on a worker
thread so remote adapters never hold up poll replies.

History, code-generation spans and per-subtask statuses are all capped at
history_size entries; statuses of the latest, queued and running subtasks
are never evicted.
"""

import asyncio
import logging
import time
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Callable, Deque, Optional

from pydantic import BaseModel, Field

from app.core.api_corpus import apply_profile_update, chunk_profile
from app.core.codegen import compose_call, load_template, render_program
from app.core.embeddings import EmbeddingConfig, EmbeddingProvider, build_provider
from app.core.errors import AddressingError, LLMindError
from app.core.extraction import ArgumentExtractor, ExtractorConfig, build_extractor
from app.core.fsm_executor import DeviceHandle, run_fsm
from app.core.m2m_log import M2MLog
from app.core.rag_matcher import ApiIndex, build_index, match_subtask
from app.core.stub_llm import StubLLM
from app.schemas.codegen import CodeTemplate, RenderedProgram
from app.schemas.corpus import DeviceApiProfile
from app.schemas.execution import ExecutionRecord, FsmTimeouts
from app.schemas.messages import (
    CompletionStatus,
    DeviceReport,
    DeviceStatus,
    SubtaskSpec,
    SubtaskStatus,
)

logger = logging.getLogger(__name__)


class AgentConfig(BaseModel):
    device_id: str
    embedding: EmbeddingConfig = Field(default_factory=EmbeddingConfig)
    extractor: ExtractorConfig = Field(default_factory=ExtractorConfig)
    timeouts: FsmTimeouts = Field(default_factory=FsmTimeouts)
    endpoint: Optional[str] = None
    history_size: int = Field(default=1024, gt=0)
    min_match_score: Optional[float] = None
    template_path: Optional[str] = None
    announce_profile: bool = True


class SingleSlotQueue:
    """Capacity-one buffer; storing into an occupied slot drops the occupant."""

    def __init__(self):
        self.slot: Optional[SubtaskSpec] = None
        self.dropped_count = 0

    def put(self, subtask: SubtaskSpec) -> Optional[SubtaskSpec]:
        superseded = self.slot
        if superseded is not None:
            self.dropped_count += 1
        self.slot = subtask
        return superseded

    def pop(self) -> Optional[SubtaskSpec]:
        subtask, self.slot = self.slot, None
        return subtask

    def __len__(self) -> int:
        return 0 if self.slot is None else 1


@dataclass
class CodegenSpan:
    subtask_id: int
    started_at: float
    ended_at: float
    succeeded: bool


class AssignResult(BaseModel):
    accepted: bool
    superseded: Optional[int] = None
    detail: str = ""


class DeviceAgent:
    def __init__(
        self,
        profile: DeviceApiProfile,
        device: DeviceHandle,
        config: Optional[AgentConfig] = None,
        provider: Optional[EmbeddingProvider] = None,
        extractor: Optional[ArgumentExtractor] = None,
        template: Optional[CodeTemplate] = None,
        stub_llm: Optional[StubLLM] = None,
        m2m: Optional[M2MLog] = None,
        clock: Callable[[], float] = time.perf_counter,
    ):
        self.config = config or AgentConfig(device_id=profile.device_id)
        if self.config.device_id != profile.device_id:
            raise AddressingError(
                f"agent configured for {self.config.device_id} but profile is {profile.device_id}"
            )
        self.device_id = profile.device_id
        self.device = device
        self.provider = provider or build_provider(self.config.embedding)
        self.extractor = extractor or build_extractor(self.config.extractor)
        self.template = template or load_template(self.config.template_path)
        self.stub_llm = stub_llm
        self.m2m = m2m
        self.clock = clock

        self.profile = profile
        self.index = build_index(chunk_profile(profile), self.provider)
        self._pending_profile: Optional[DeviceApiProfile] = (
            profile if self.config.announce_profile else None
        )

        self.queue = SingleSlotQueue()
        self.history: Deque[ExecutionRecord] = deque(maxlen=self.config.history_size)
        self.codegen_spans: Deque[CodegenSpan] = deque(maxlen=self.config.history_size)
        self._statuses: "OrderedDict[int, SubtaskStatus]" = OrderedDict()
        self._latest_id: Optional[int] = None
        self._executing: Optional[int] = None
        self._fault: Optional[str] = None

        self._work = asyncio.Event()
        self._idle = asyncio.Event()
        self._idle.set()
        self._task: Optional[asyncio.Task] = None

    # Poll responder

    def handle_poll(self, round: int = 0) -> DeviceReport:
        """Assemble a report from snapshots; never waits on the executor."""
        status = DeviceStatus.OK
        try:
            attributes = dict(self.device.attributes())
        except Exception as e:
            logger.error(f"{self.device_id}: attribute snapshot failed: {e}")
            attributes = {"fault": str(e)}
            status = DeviceStatus.FAULT
        if self._fault is not None:
            attributes["fault"] = self._fault
            status = DeviceStatus.FAULT
            self._fault = None

        profile_update, self._pending_profile = self._pending_profile, None
        latest = self._statuses.get(self._latest_id) if self._latest_id is not None else None
        return DeviceReport(
            device_id=self.device_id,
            status=status,
            attributes=attributes,
            subtask_status=latest.model_copy() if latest else None,
            profile_update=profile_update,
        )

    def update_profile(self, update: DeviceApiProfile) -> bool:
        """Adopt a newer profile, rebuild the index and queue it for the next report."""
        adopted = apply_profile_update(self.profile, update)
        if adopted is self.profile:
            return False
        self.profile = adopted
        self.index = build_index(chunk_profile(adopted), self.provider)
        self._pending_profile = adopted
        return True

    # Subtask receiver

    def handle_assign(self, subtask: SubtaskSpec) -> AssignResult:
        if subtask.device_id != self.device_id:
            detail = f"subtask {subtask.subtask_id} addressed to {subtask.device_id}"
            self._fault = detail
            raise AddressingError(f"{self.device_id} received {detail}")

        superseded = self.queue.put(subtask)
        self._latest_id = subtask.subtask_id
        if superseded is not None:
            self._set_status(
                SubtaskStatus(
                    subtask_id=superseded.subtask_id,
                    status=CompletionStatus.SUPERSEDED,
                    detail=f"replaced by subtask {subtask.subtask_id}",
                )
            )
            logger.info(
                f"{self.device_id}: subtask {superseded.subtask_id} superseded by {subtask.subtask_id}"
            )
        self._set_status(SubtaskStatus(subtask_id=subtask.subtask_id, status=CompletionStatus.ONGOING))
        self._idle.clear()
        self._work.set()
        return AssignResult(
            accepted=True, superseded=superseded.subtask_id if superseded else None
        )

    def status_of(self, subtask_id: int) -> CompletionStatus:
        status = self._statuses.get(subtask_id)
        return status.status if status else CompletionStatus.NONE

    @property
    def tracked_statuses(self) -> int:
        return len(self._statuses)

    def _set_status(self, status: SubtaskStatus) -> None:
        self._statuses[status.subtask_id] = status
        self._statuses.move_to_end(status.subtask_id)
        excess = len(self._statuses) - self.config.history_size
        if excess <= 0:
            return
        queued = self.queue.slot.subtask_id if self.queue.slot is not None else None
        live = {self._latest_id, self._executing, queued}
        for subtask_id in [k for k in self._statuses if k not in live][:excess]:
            del self._statuses[subtask_id]

    @property
    def executing(self) -> Optional[int]:
        return self._executing

    # Interpreter and executor

    async def interpret_loop_step(self) -> Optional[ExecutionRecord]:
        """Pop and fully process the pending subtask, if any."""
        subtask = self.queue.pop()
        if subtask is None:
            return None
        self._executing = subtask.subtask_id
        try:
            record = await self._process(subtask)
        except Exception as e:
            logger.error(f"{self.device_id}: subtask {subtask.subtask_id} crashed: {e}")
            record = ExecutionRecord(
                subtask_id=subtask.subtask_id,
                device_id=self.device_id,
                error=f"{type(e).__name__}: {e}",
                final_status=CompletionStatus.NOT_EXECUTABLE,
            )
        finally:
            self._executing = None

        self.history.append(record)
        self._set_status(
            SubtaskStatus(
                subtask_id=subtask.subtask_id,
                status=record.final_status,
                function=record.function,
                result=record.call_result if record.error is None else None,
                detail=record.error,
            )
        )
        if self.queue.slot is None:
            self._idle.set()
        return record

    async def _process(self, subtask: SubtaskSpec) -> ExecutionRecord:
        started = self.clock()
        try:
            if self.stub_llm is not None:
                await self.stub_llm.generate(self.device_id)
            program = await asyncio.to_thread(self._generate, subtask.text, self.index)
        except LLMindError as e:
            self.codegen_spans.append(CodegenSpan(subtask.subtask_id, started, self.clock(), False))
            logger.warning(f"{self.device_id}: subtask {subtask.subtask_id} not executable: {e}")
            return ExecutionRecord(
                subtask_id=subtask.subtask_id,
                device_id=self.device_id,
                error=f"{type(e).__name__}: {e}",
                final_status=CompletionStatus.NOT_EXECUTABLE,
            )
        self.codegen_spans.append(CodegenSpan(subtask.subtask_id, started, self.clock(), True))
        logger.debug(f"{self.device_id}: program for subtask {subtask.subtask_id}:\n{program.text}")

        return await run_fsm(
            program.call_plan,
            self.device,
            self.config.timeouts,
            subtask_id=subtask.subtask_id,
            profile=self.profile,
            m2m=self.m2m,
        )

    def _generate(self, text: str, index: ApiIndex) -> RenderedProgram:
        match = match_subtask(text, index, self.provider, self.config.min_match_score)
        args = self.extractor.extract(text, match.best)
        return render_program(self.template, compose_call(match.best, args))

    async def run(self) -> None:
        while True:
            await self._work.wait()
            self._work.clear()
            while self.queue.slot is not None:
                await self.interpret_loop_step()
            if self.queue.slot is None:
                self._idle.set()

    def start(self) -> asyncio.Task:
        if self._task is None or self._task.done():
            self._task = asyncio.create_task(self.run(), name=f"agent-{self.device_id}")
        return self._task

    async def stop(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
            self._task = None

    async def drain(self, timeout: Optional[float] = None) -> None:
        """Wait until nothing is queued or executing."""
        await asyncio.wait_for(self._idle.wait(), timeout)
