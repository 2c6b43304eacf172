"""
Coordinator

Two activities share an instruction queue:
- instruction intake (submit_instruction) records manager instructions
- the round loop polls every agent, waits for reports until all arrive or the
  report timeout expires, hands the reports to the planner and distributes
  the resulting subtasks

A device never receives a new subtask while its previous one is unreported,
unless no report has arrived from it for `reissue_after_rounds` rounds, in
which case the outstanding subtask is re-issued under a new id.
"""

import asyncio
import logging
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Deque, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field, model_validator

from app.core.api_corpus import apply_profile_update
from app.core.errors import (
    ConfigurationError,
    InstructionValidationError,
    LLMindError,
    ProfileIdentityError,
)
from app.core.m2m_log import M2MLog
from app.core.planners import AsyncPlanner, Planner, PlannerConfig, SubtaskRequest
from app.core.stub_llm import StubLLM
from app.core.transport import CoordinatorTransport
from app.schemas.corpus import DeviceApiProfile
from app.schemas.messages import DeviceReport, Instruction, SubtaskSpec

logger = logging.getLogger(__name__)

MIN_PLANNER_BUDGET_S = 0.01


class OrchestrationMode(str, Enum):
    DISTRIBUTED = "distributed"
    CENTRALIZED_BASELINE = "centralized_baseline"


class CoordinatorConfig(BaseModel):
    poll_period_s: float = Field(default=1.0, gt=0)
    report_timeout_s: float = Field(default=0.5, gt=0)
    mode: OrchestrationMode = OrchestrationMode.DISTRIBUTED
    reissue_after_rounds: int = Field(default=3, ge=1)
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    round_history: int = Field(default=1000, gt=0)

    @model_validator(mode="after")
    def _timeout_within_period(self) -> "CoordinatorConfig":
        if self.report_timeout_s >= self.poll_period_s:
            raise ValueError("report_timeout_s must be shorter than poll_period_s")
        return self


class PollRound(BaseModel):
    round: int
    polled: List[str]
    received: Dict[str, DeviceReport]
    failed: List[str] = Field(default_factory=list)
    late: List[str] = Field(default_factory=list)
    dispatched: List[SubtaskSpec] = Field(default_factory=list)
    started_at: float
    deadline: float
    finished_at: float

    @model_validator(mode="after")
    def _received_subset_of_polled(self) -> "PollRound":
        extra = set(self.received) - set(self.polled)
        if extra:
            raise ValueError(f"reports from unpolled devices: {sorted(extra)}")
        return self

    @property
    def duration_s(self) -> float:
        return self.finished_at - self.started_at


@dataclass
class _Outstanding:
    subtask: SubtaskSpec
    missing_rounds: int = 0


class BaselineResult(BaseModel):
    n_devices: int
    wall_time_s: float
    success: bool
    failed_devices: List[str] = Field(default_factory=list)


class Coordinator:
    def __init__(
        self,
        transport: CoordinatorTransport,
        planner: Planner,
        config: Optional[CoordinatorConfig] = None,
        m2m: Optional[M2MLog] = None,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.transport = transport
        self.planner = planner
        self.config = config or CoordinatorConfig()
        self.m2m = m2m
        self.clock = clock

        self.round = 0
        self.profiles: Dict[str, DeviceApiProfile] = {}
        self.snapshots: Dict[str, DeviceReport] = {}
        self.outstanding: Dict[str, _Outstanding] = {}
        self.rounds: Deque[PollRound] = deque(maxlen=self.config.round_history)
        self._instructions: Deque[Instruction] = deque()
        self._instruction_ids = 0
        self._subtask_ids: Dict[str, int] = {}
        self._round_lock = asyncio.Lock()
        self._stop = asyncio.Event()

    # Instruction intake

    def submit_instruction(self, text: str) -> int:
        if not text or not text.strip():
            raise InstructionValidationError("instruction text must not be empty")
        self._instruction_ids += 1
        self._instructions.append(
            Instruction(instruction_id=self._instruction_ids, text=text.strip(), received_ts=time.time())
        )
        logger.info(f"Instruction {self._instruction_ids} queued: {text.strip()!r}")
        return self._instruction_ids

    @property
    def pending_instructions(self) -> List[Instruction]:
        return list(self._instructions)

    # Registry

    def register_device(self, profile: DeviceApiProfile) -> None:
        current = self.profiles.get(profile.device_id)
        if current is None:
            self.profiles[profile.device_id] = profile
            logger.info(f"Registered {profile.device_id} with profile v{profile.version}")
            return
        try:
            self.profiles[profile.device_id] = apply_profile_update(current, profile)
        except ProfileIdentityError as e:
            logger.error(f"Ignoring profile update: {e}")

    def _absorb(self, device_id: str, report: DeviceReport) -> DeviceReport:
        if report.profile_update is not None:
            self.register_device(report.profile_update)
            report = report.model_copy(update={"profile_update": None})
        self.snapshots[device_id] = report
        return report

    def _drain_late(self) -> List[Tuple[str, DeviceReport]]:
        late = []
        while not self.transport.reports.empty():
            device_id, _, report = self.transport.reports.get_nowait()
            late.append((device_id, self._absorb(device_id, report)))
        return late

    # Round loop

    async def run_round(self) -> PollRound:
        """Poll, collect until all reports or the deadline, plan, dispatch."""
        async with self._round_lock:
            self.round += 1
            current = self.round
            started = self.clock()
            deadline = started + self.config.report_timeout_s
            late = self._drain_late()

            polled = self.transport.endpoints()
            results = await self.transport.broadcast_poll(current)
            expected = {d for d, result in results.items() if result.ok}
            failed = sorted(d for d, result in results.items() if not result.ok)

            received: Dict[str, DeviceReport] = {}
            while not expected.issubset(received):
                remaining = deadline - self.clock()
                if remaining <= 0:
                    break
                try:
                    device_id, report_round, report = await asyncio.wait_for(
                        self.transport.reports.get(), timeout=remaining
                    )
                except asyncio.TimeoutError:
                    break
                report = self._absorb(device_id, report)
                if report_round == current and device_id in polled:
                    received[device_id] = report
                else:
                    late.append((device_id, report))

            missing = sorted(set(polled) - set(received))
            if missing:
                logger.info(f"Round {current}: no report from {', '.join(missing)}")

            self._track_outstanding(polled, received, late)
            dispatched = await self._reissue_stale()
            instructions = list(self._instructions)
            self._instructions.clear()
            for instruction in instructions or [None]:
                budget_s = max(started + self.config.poll_period_s - self.clock(), MIN_PLANNER_BUDGET_S)
                for subtask in await self.plan(instruction, dict(self.snapshots), budget_s):
                    await self._dispatch(subtask)
                    dispatched.append(subtask)

            record = PollRound(
                round=current,
                polled=polled,
                received=received,
                failed=failed,
                late=[device_id for device_id, _ in late],
                dispatched=dispatched,
                started_at=started,
                deadline=deadline,
                finished_at=self.clock(),
            )
            self.rounds.append(record)
            return record

    def _track_outstanding(
        self,
        polled: Sequence[str],
        received: Dict[str, DeviceReport],
        late: Sequence[Tuple[str, DeviceReport]],
    ) -> None:
        """Late reports count as heard and can settle an outstanding subtask too."""
        heard: Dict[str, List[DeviceReport]] = {}
        for device_id, report in late:
            heard.setdefault(device_id, []).append(report)
        for device_id, report in received.items():
            heard.setdefault(device_id, []).append(report)

        for device_id in list(self.outstanding):
            entry = self.outstanding[device_id]
            reports = heard.get(device_id)
            if not reports:
                if device_id in polled:
                    entry.missing_rounds += 1
                continue
            entry.missing_rounds = 0
            for report in reports:
                status = report.subtask_status
                if (
                    status is not None
                    and status.subtask_id == entry.subtask.subtask_id
                    and status.status.is_terminal
                ):
                    del self.outstanding[device_id]
                    break

    async def _reissue_stale(self) -> List[SubtaskSpec]:
        reissued = []
        for device_id, entry in list(self.outstanding.items()):
            if entry.missing_rounds < self.config.reissue_after_rounds:
                continue
            subtask = self._new_subtask(device_id, entry.subtask.text)
            logger.warning(
                f"{device_id} silent for {entry.missing_rounds} rounds; "
                f"re-issuing subtask {entry.subtask.subtask_id} as {subtask.subtask_id}"
            )
            await self._dispatch(subtask)
            reissued.append(subtask)
        return reissued

    def _new_subtask(self, device_id: str, text: str) -> SubtaskSpec:
        self._subtask_ids[device_id] = self._subtask_ids.get(device_id, 0) + 1
        return SubtaskSpec(
            subtask_id=self._subtask_ids[device_id],
            device_id=device_id,
            text=text,
            issued_round=self.round,
        )

    async def plan(
        self,
        instruction: Optional[Instruction],
        reports: Dict[str, DeviceReport],
        budget_s: Optional[float] = None,
    ) -> List[SubtaskSpec]:
        """
        Ask the planner, then keep only proposals the dispatch discipline allows.

        Planners with plan_async() are awaited with budget_s as their time limit.
        """
        try:
            proposals: List[SubtaskRequest]
            if isinstance(self.planner, AsyncPlanner):
                proposals = await self.planner.plan_async(instruction, reports, budget_s)
            else:
                proposals = self.planner.plan(instruction, reports)
        except LLMindError as e:
            logger.error(f"Planner failed in round {self.round}: {e}")
            return []
        known = set(self.transport.endpoints())
        busy = set(self.outstanding)
        subtasks = []
        for proposal in proposals:
            if proposal.device_id not in known:
                logger.warning(f"Planner addressed unknown device {proposal.device_id}")
                continue
            if proposal.device_id in busy:
                logger.debug(f"{proposal.device_id} still busy; holding {proposal.text!r}")
                continue
            busy.add(proposal.device_id)
            subtasks.append(self._new_subtask(proposal.device_id, proposal.text))
        return subtasks

    async def _dispatch(self, subtask: SubtaskSpec) -> None:
        self.outstanding[subtask.device_id] = _Outstanding(subtask)
        self.planner.on_dispatched(subtask)
        try:
            accepted = await self.transport.assign(subtask.device_id, subtask)
            if not accepted:
                logger.warning(f"{subtask.device_id} rejected subtask {subtask.subtask_id}")
        except LLMindError as e:
            logger.warning(f"Could not deliver subtask {subtask.subtask_id} to {subtask.device_id}: {e}")

    async def run(
        self,
        max_rounds: Optional[int] = None,
        until: Optional[Callable[[], bool]] = None,
    ) -> int:
        """Cycle rounds every poll period until stopped; returns the number of rounds run."""
        loop = asyncio.get_running_loop()
        completed = 0
        while not self._stop.is_set():
            if max_rounds is not None and completed >= max_rounds:
                break
            started = loop.time()
            await self.run_round()
            completed += 1
            if until is not None and until():
                break
            delay = started + self.config.poll_period_s - loop.time()
            if delay > 0:
                try:
                    await asyncio.wait_for(self._stop.wait(), timeout=delay)
                except asyncio.TimeoutError:
                    pass
        return completed

    def stop(self) -> None:
        self._stop.set()

    async def run_centralized_baseline(
        self, instruction: str, device_ids: Sequence[str], stub: StubLLM
    ) -> BaselineResult:
        if self.config.mode != OrchestrationMode.CENTRALIZED_BASELINE:
            raise ConfigurationError("coordinator is not in centralized_baseline mode")
        return await run_centralized_baseline(instruction, device_ids, stub)


async def run_centralized_baseline(
    instruction: str, device_ids: Sequence[str], stub: StubLLM
) -> BaselineResult:
    """
    Serial pipeline: for each device, plan its FSM and then generate its code.
    A failed generation is recorded and the run moves on to the next device.
    """
    if not instruction or not instruction.strip():
        raise InstructionValidationError("instruction text must not be empty")
    started = time.perf_counter()
    failed = []
    for device_id in device_ids:
        await stub.plan(device_id)
        try:
            await stub.generate(device_id)
        except LLMindError as e:
            logger.warning(f"Centralized code generation for {device_id} failed: {e}")
            failed.append(device_id)
    return BaselineResult(
        n_devices=len(device_ids),
        wall_time_s=time.perf_counter() - started,
        success=not failed,
        failed_devices=failed,
    )
