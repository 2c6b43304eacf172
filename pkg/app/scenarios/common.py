"""Pieces every scenario harness shares: config loading, the sim clock, timeline recording."""

import asyncio
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from app.core.agent_runtime import DeviceAgent
from app.core.errors import ConfigurationError
from app.schemas.messages import CompletionStatus
from app.schemas.scenario import TimelineEvent

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent.parent.parent / "config"
DRAIN_TIMEOUT_S = 60.0

ConfigT = TypeVar("ConfigT", bound=BaseModel)


def load_scenario_config(path: Union[str, Path], model: Type[ConfigT]) -> ConfigT:
    """Load a scenario config; bare names resolve against config/."""
    path = Path(path)
    if not path.exists() and not path.is_absolute():
        path = CONFIG_DIR / path
    if not path.exists():
        raise ConfigurationError(f"scenario config {path} not found")
    try:
        return model.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigurationError(f"invalid scenario config {path}: {e}") from e


class SimClock:
    """Simulated seconds, advanced by the harness between poll rounds."""

    def __init__(self, start: float = 0.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> float:
        self.now += seconds
        return self.now


class Timeline:
    def __init__(self, clock):
        self.clock = clock
        self.events: List[TimelineEvent] = []
        self._seen: Dict[str, int] = {}

    def add(self, event: str, **detail) -> TimelineEvent:
        entry = TimelineEvent(t=self.clock(), event=event, detail=detail)
        self.events.append(entry)
        return entry

    def record_executions(self, agents: Sequence[DeviceAgent]) -> None:
        """One event per execution record added since the last call."""
        for agent in agents:
            history = list(agent.history)
            for record in history[self._seen.get(agent.device_id, 0) :]:
                event = (
                    "subtask_completed"
                    if record.final_status == CompletionStatus.COMPLETED
                    else "subtask_not_executable"
                )
                self.add(
                    event,
                    device_id=record.device_id,
                    subtask_id=record.subtask_id,
                    function=record.function,
                    rendered_call=record.rendered_call,
                    error=record.error,
                )
            self._seen[agent.device_id] = len(history)


async def drain_agents(agents: Sequence[DeviceAgent], timeout_s: float = DRAIN_TIMEOUT_S) -> None:
    await asyncio.gather(*(agent.drain(timeout_s) for agent in agents))
