"""
Task planners for the coordinator.

A planner turns the current instruction (if any) and the latest device
reports into proposed subtasks. The coordinator filters proposals through its
dispatch discipline and tells the planner which ones actually went out via
on_dispatched(), so planner scripts only advance on real dispatches.

Scripted planners re-issue a subtask once after NotExecutable or Superseded,
then mark that device's script failed. Planners that wait on the network also
implement plan_async(), which the coordinator awaits with the time left in
the round.
"""

import asyncio
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Protocol, Sequence, Set, Tuple, runtime_checkable

import requests
from pydantic import BaseModel, Field

from app.core.errors import ConfigurationError
from app.core.number_words import int_to_words
from app.schemas.messages import CompletionStatus, DeviceReport, Instruction, SubtaskSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubtaskRequest:
    device_id: str
    text: str


class Planner(Protocol):
    def plan(
        self, instruction: Optional[Instruction], reports: Mapping[str, DeviceReport]
    ) -> List[SubtaskRequest]: ...

    def on_dispatched(self, subtask: SubtaskSpec) -> None: ...


@runtime_checkable
class AsyncPlanner(Protocol):
    async def plan_async(
        self,
        instruction: Optional[Instruction],
        reports: Mapping[str, DeviceReport],
        budget_s: Optional[float] = None,
    ) -> List[SubtaskRequest]: ...


@dataclass
class _Script:
    """Ordered steps for one device with re-issue bookkeeping."""

    steps: List[str]
    step: int = 0
    inflight: Optional[int] = None
    retries: int = 0
    failed: bool = False
    results: List[object] = field(default_factory=list)

    @property
    def done(self) -> bool:
        return self.step >= len(self.steps)

    def observe(self, report: Optional[DeviceReport], max_retries: int) -> Optional[CompletionStatus]:
        if self.inflight is None or report is None or report.subtask_status is None:
            return None
        status = report.subtask_status
        if status.subtask_id != self.inflight or not status.status.is_terminal:
            return None
        self.inflight = None
        if status.status == CompletionStatus.COMPLETED:
            self.results.append(status.result)
            self.step += 1
            self.retries = 0
        elif self.retries < max_retries:
            self.retries += 1
        else:
            self.failed = True
        return status.status

    def next_request(self, device_id: str) -> Optional[SubtaskRequest]:
        if self.failed or self.done or self.inflight is not None:
            return None
        return SubtaskRequest(device_id, self.steps[self.step])


def _device_order(device_id: str) -> Tuple[str, int]:
    match = re.match(r"(.*?)(\d+)$", device_id)
    if match:
        return match.group(1), int(match.group(2))
    return device_id, 0


class WarehousePlanner:
    """
    Vacancy survey: robot k moves to shelf k, then identifies its vacancies.

    Robots are taken from the reports unless given explicitly; the k-th robot
    in natural order covers shelf k.
    """

    MOVE = "Move to shelf {shelf}."
    IDENTIFY = "Identify the vacancy in shelf {shelf}."

    def __init__(self, robot_ids: Optional[Sequence[str]] = None, max_retries: int = 1):
        self.robot_ids = list(robot_ids) if robot_ids else None
        self.max_retries = max_retries
        self.scripts: Dict[str, _Script] = {}
        self.shelf_of: Dict[str, int] = {}
        self.vacancy: Dict[int, object] = {}
        self.ignored_instructions: List[int] = []

    @staticmethod
    def accepts(text: str) -> bool:
        lowered = text.lower()
        return "vacan" in lowered and "shel" in lowered

    def _start(self, reports: Mapping[str, DeviceReport]) -> None:
        robots = self.robot_ids or sorted(
            (d for d in reports if d.startswith("robot")), key=_device_order
        )
        for k, robot in enumerate(robots, start=1):
            words = int_to_words(k)
            self.shelf_of[robot] = k
            self.scripts[robot] = _Script(
                steps=[self.MOVE.format(shelf=words), self.IDENTIFY.format(shelf=words)]
            )
        logger.info(f"Warehouse survey started for {len(robots)} robot(s)")

    def plan(
        self, instruction: Optional[Instruction], reports: Mapping[str, DeviceReport]
    ) -> List[SubtaskRequest]:
        if instruction is not None:
            if self.accepts(instruction.text) and not self.active:
                self._start(reports)
            else:
                logger.warning(f"No script for instruction {instruction.instruction_id}: {instruction.text!r}")
                self.ignored_instructions.append(instruction.instruction_id)

        requests_out = []
        for robot, script in self.scripts.items():
            outcome = script.observe(reports.get(robot), self.max_retries)
            if outcome == CompletionStatus.COMPLETED and script.done:
                self.vacancy[self.shelf_of[robot]] = script.results[-1]
            elif outcome is not None and script.failed:
                logger.warning(f"{robot}: script failed at step {script.step + 1}")
            request = script.next_request(robot)
            if request is not None:
                requests_out.append(request)
        return requests_out

    def on_dispatched(self, subtask: SubtaskSpec) -> None:
        script = self.scripts.get(subtask.device_id)
        if script is not None:
            script.inflight = subtask.subtask_id

    @property
    def active(self) -> bool:
        return bool(self.scripts) and not self.finished

    @property
    def finished(self) -> bool:
        return bool(self.scripts) and all(s.done or s.failed for s in self.scripts.values())

    @property
    def succeeded(self) -> bool:
        return bool(self.scripts) and all(s.done for s in self.scripts.values())


DEFAULT_CW_SCHEDULE: List[Tuple[int, int]] = [(10, 15), (8, 12), (6, 9), (4, 6), (2, 4)]


class WifiQosPlanner:
    """
    Walks the CW-configurable client down the contention-window schedule while
    its upload time misses the requirement. When another client's requirement
    becomes violated it rolls back one step, once per violation episode, and
    holds until the violation clears.
    """

    CW_TEXT = "Set the contention window to log_CW_min {log_cw_min} and log_CW_max {log_cw_max}."

    def __init__(
        self,
        schedule: Sequence[Tuple[int, int]] = DEFAULT_CW_SCHEDULE,
        requirement_s: float = 16.0,
        target: Optional[str] = None,
        max_retries: int = 1,
    ):
        self.schedule = [tuple(step) for step in schedule]
        self.default_requirement_s = requirement_s
        self.requirements: Dict[str, float] = {}
        self.target = target
        self.max_retries = max_retries
        self.inflight: Optional[int] = None
        self.retries = 0
        self.gave_up = False
        self.rolled_back = False
        self.events: List[Tuple[str, Tuple[int, int]]] = []
        self._proposed: Optional[Tuple[str, Tuple[int, int]]] = None

    def set_requirement(self, device_id: str, seconds: float) -> None:
        self.requirements[device_id] = seconds
        logger.info(f"Requirement for {device_id} set to {seconds}s")

    def requirement(self, device_id: str) -> float:
        return self.requirements.get(device_id, self.default_requirement_s)

    def _find_target(self, reports: Mapping[str, DeviceReport]) -> Optional[str]:
        if self.target is not None:
            return self.target
        for device_id in sorted(reports, key=_device_order):
            if reports[device_id].attributes.get("cw_configurable"):
                return device_id
        return None

    def _observe(self, report: Optional[DeviceReport]) -> None:
        if self.inflight is None or report is None or report.subtask_status is None:
            return
        status = report.subtask_status
        if status.subtask_id != self.inflight or not status.status.is_terminal:
            return
        self.inflight = None
        if status.status == CompletionStatus.COMPLETED:
            self.retries = 0
        elif self.retries < self.max_retries:
            self.retries += 1
        else:
            self.gave_up = True
            logger.warning("CW adjustment keeps failing; giving up")

    def plan(
        self, instruction: Optional[Instruction], reports: Mapping[str, DeviceReport]
    ) -> List[SubtaskRequest]:
        if instruction is not None:
            logger.info(f"QoS planner keeps its standing goal; instruction noted: {instruction.text!r}")
        target = self._find_target(reports)
        if target is None or target not in reports:
            return []
        self._observe(reports[target])
        if self.inflight is not None or self.gave_up:
            return []

        attributes = reports[target].attributes
        current = (attributes.get("log_cw_min"), attributes.get("log_cw_max"))
        index = self.schedule.index(current) if current in self.schedule else -1

        active = {
            device_id: report.attributes["upload_time_s"]
            for device_id, report in reports.items()
            if "upload_time_s" in report.attributes and report.attributes.get("active", True)
        }
        violated = [
            d for d, upload in active.items() if d != target and upload > self.requirement(d)
        ]
        if violated:
            if not self.rolled_back and index > 0:
                self.rolled_back = True
                return [self._request(target, "rollback", self.schedule[index - 1])]
            return []
        self.rolled_back = False

        upload = active.get(target)
        if upload is not None and upload > self.requirement(target) and index < len(self.schedule) - 1:
            return [self._request(target, "step_down", self.schedule[index + 1])]
        return []

    def _request(self, target: str, kind: str, step: Tuple[int, int]) -> SubtaskRequest:
        self._proposed = (kind, step)
        text = self.CW_TEXT.format(log_cw_min=step[0], log_cw_max=step[1])
        return SubtaskRequest(target, text)

    def on_dispatched(self, subtask: SubtaskSpec) -> None:
        self.inflight = subtask.subtask_id
        if self._proposed is not None:
            self.events.append(self._proposed)
            self._proposed = None


class WifiInterferencePlanner:
    """
    Reacts to interference reported by a channel-sensing client: every client
    whose PER exceeds the threshold on 2.4 GHz and can switch bands without a
    reboot is told to move to 5 GHz. force_devices are told regardless.
    """

    SWITCH_TEXT = "Switch to the 5 GHz band."

    def __init__(
        self,
        per_threshold: float = 0.20,
        force_devices: Sequence[str] = (),
        max_retries: int = 1,
    ):
        self.per_threshold = per_threshold
        self.force_devices = set(force_devices)
        self.max_retries = max_retries
        self.scripts: Dict[str, _Script] = {}
        self.outcomes: Dict[str, List[CompletionStatus]] = {}

    def plan(
        self, instruction: Optional[Instruction], reports: Mapping[str, DeviceReport]
    ) -> List[SubtaskRequest]:
        if instruction is not None:
            logger.info(f"Interference planner keeps its standing goal; instruction noted: {instruction.text!r}")
        for device_id, script in self.scripts.items():
            outcome = script.observe(reports.get(device_id), self.max_retries)
            if outcome is not None:
                self.outcomes.setdefault(device_id, []).append(outcome)

        interference = any(r.attributes.get("interference_detected") for r in reports.values())
        requests_out = []
        for device_id in sorted(reports, key=_device_order):
            script = self.scripts.get(device_id)
            if script is None and interference and self._needs_switch(device_id, reports[device_id]):
                script = self.scripts[device_id] = _Script(steps=[self.SWITCH_TEXT])
            if script is not None:
                request = script.next_request(device_id)
                if request is not None:
                    requests_out.append(request)
        return requests_out

    def _needs_switch(self, device_id: str, report: DeviceReport) -> bool:
        attributes = report.attributes
        if attributes.get("band") != "band_2_4":
            return False
        if attributes.get("per", 0.0) <= self.per_threshold:
            return False
        return bool(attributes.get("band_switch_without_reboot")) or device_id in self.force_devices

    def on_dispatched(self, subtask: SubtaskSpec) -> None:
        script = self.scripts.get(subtask.device_id)
        if script is not None:
            script.inflight = subtask.subtask_id


class PlannerConfig(BaseModel):
    kind: str = Field(default="warehouse", pattern="^(warehouse|wifi_qos|wifi_interference|remote)$")
    url: Optional[str] = None
    timeout_s: float = Field(default=30.0, gt=0)
    temperature: float = 0.5
    top_p: float = 1.0


class RemotePlanner:
    """
    Hosted LLM planner.

    Request: {"instruction", "reports", "sampling": {"temperature", "top_p"}}
    Response: {"subtasks": [{"device_id", "text"}]}
    A failed request leaves the instruction pending for the next round.
    plan_async() runs the request on a worker thread, its timeout capped at
    the budget the coordinator passes in.
    """

    def __init__(self, url: str, timeout_s: float = 30.0, temperature: float = 0.5, top_p: float = 1.0):
        self.url = url
        self.timeout_s = timeout_s
        self.temperature = temperature
        self.top_p = top_p
        self.pending: List[Instruction] = []

    def plan(
        self, instruction: Optional[Instruction], reports: Mapping[str, DeviceReport]
    ) -> List[SubtaskRequest]:
        if instruction is not None:
            self.pending.append(instruction)
        return self._settle(self._request(self._payload(reports), self.timeout_s))

    async def plan_async(
        self,
        instruction: Optional[Instruction],
        reports: Mapping[str, DeviceReport],
        budget_s: Optional[float] = None,
    ) -> List[SubtaskRequest]:
        if instruction is not None:
            self.pending.append(instruction)
        timeout = self.timeout_s if budget_s is None else min(self.timeout_s, budget_s)
        planned = await asyncio.to_thread(self._request, self._payload(reports), timeout)
        return self._settle(planned)

    def _payload(self, reports: Mapping[str, DeviceReport]) -> dict:
        return {
            "instruction": self.pending[0].text if self.pending else None,
            "reports": {d: r.model_dump(mode="json", exclude_none=True) for d, r in reports.items()},
            "sampling": {"temperature": self.temperature, "top_p": self.top_p},
        }

    def _request(self, payload: dict, timeout_s: float) -> Optional[List[SubtaskRequest]]:
        try:
            response = requests.post(self.url, json=payload, timeout=timeout_s)
            response.raise_for_status()
            subtasks = response.json()["subtasks"]
            return [SubtaskRequest(s["device_id"], s["text"]) for s in subtasks]
        except (requests.RequestException, KeyError, TypeError, ValueError) as e:
            logger.error(f"Remote planner request failed: {e}")
            return None

    def _settle(self, planned: Optional[List[SubtaskRequest]]) -> List[SubtaskRequest]:
        if planned is None:
            return []
        if self.pending:
            self.pending.pop(0)
        return planned

    def on_dispatched(self, subtask: SubtaskSpec) -> None:
        pass


def build_planner(config: PlannerConfig) -> Planner:
    if config.kind == "remote":
        if not config.url:
            raise ConfigurationError("remote planner needs a url")
        return RemotePlanner(config.url, config.timeout_s, config.temperature, config.top_p)
    if config.kind == "wifi_qos":
        return WifiQosPlanner()
    if config.kind == "wifi_interference":
        return WifiInterferencePlanner()
    return WarehousePlanner()
