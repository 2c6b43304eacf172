"""
Machine-to-machine log.

Every protocol message and every FSM state entry becomes one short English
sentence so an operator can read what the coordinator and the agents told
each other.
"""

import logging
import time
from collections import deque
from pathlib import Path
from typing import Callable, Deque, List, Optional, Union

from jinja2 import Environment, StrictUndefined
from pydantic import BaseModel

from app.schemas.messages import DeviceReport, MessageType, SubtaskSpec, WireMessage

logger = logging.getLogger(__name__)

_env = Environment(undefined=StrictUndefined, trim_blocks=True, lstrip_blocks=True)

SENTENCES = {
    MessageType.POLL: _env.from_string(
        "{{ sender }} -> {{ recipient }}: round {{ round }} poll, please send your report."
    ),
    MessageType.REPORT: _env.from_string(
        "{{ sender }} -> {{ recipient }}: round {{ round }} report, device status {{ report.status.value }}"
        "{% if report.subtask_status %}"
        "; subtask {{ report.subtask_status.subtask_id }} is {{ report.subtask_status.status.value | replace('_', ' ') }}"
        "{% if report.subtask_status.function %} ({{ report.subtask_status.function }}"
        "{% if report.subtask_status.result is not none %} returned {{ report.subtask_status.result }}{% endif %}){% endif %}"
        "{% else %}; no subtask yet{% endif %}"
        "{% if attributes %}; {{ attributes }}{% endif %}"
        "{% if report.profile_update %}; API profile v{{ report.profile_update.version }} attached{% endif %}."
    ),
    MessageType.ASSIGN: _env.from_string(
        '{{ sender }} -> {{ recipient }}: subtask {{ subtask.subtask_id }}, "{{ subtask.text }}"'
    ),
    MessageType.ACK: _env.from_string(
        "{{ sender }} -> {{ recipient }}: "
        "{% if accepted %}assignment {{ correlation_id }} accepted.{% else %}"
        "assignment {{ correlation_id }} rejected ({{ detail }}).{% endif %}"
    ),
}


class M2MEntry(BaseModel):
    ts: float
    kind: str
    text: str

    def line(self) -> str:
        return f"{self.ts:.3f} {self.text}"


class M2MLog:
    """Bounded in-memory log with optional write-through to logging."""

    def __init__(self, clock: Callable[[], float] = time.time, maxlen: Optional[int] = None):
        self.clock = clock
        self._entries: Deque[M2MEntry] = deque(maxlen=maxlen)
        self.message_count = 0

    def _append(self, kind: str, text: str) -> M2MEntry:
        entry = M2MEntry(ts=self.clock(), kind=kind, text=text)
        self._entries.append(entry)
        logger.debug("m2m %s", entry.line())
        return entry

    def message(self, sender: str, recipient: str, message: WireMessage) -> M2MEntry:
        """Render one protocol message."""
        context = {
            "sender": sender,
            "recipient": recipient,
            "round": message.round,
            "correlation_id": message.correlation_id,
        }
        if message.type == MessageType.REPORT:
            report = message.device_report()
            context["report"] = report
            context["attributes"] = _describe_attributes(report)
        elif message.type == MessageType.ASSIGN:
            context["subtask"] = SubtaskSpec.model_validate(message.payload)
        elif message.type == MessageType.ACK:
            context["accepted"] = message.payload.get("accepted", True)
            context["detail"] = message.payload.get("detail", "")
        self.message_count += 1
        return self._append(message.type.value, SENTENCES[message.type].render(**context))

    def fsm_state(self, device_id: str, subtask_id: int, state: str, detail: str = "") -> M2MEntry:
        text = f"{device_id} {subtask_id} {state}"
        if detail:
            text += f" {detail}"
        return self._append("fsm", text)

    def note(self, text: str) -> M2MEntry:
        return self._append("note", text)

    @property
    def entries(self) -> List[M2MEntry]:
        return list(self._entries)

    def lines(self, limit: Optional[int] = None, kind: Optional[str] = None) -> List[str]:
        entries = [e for e in self._entries if kind is None or e.kind == kind]
        if limit is not None:
            entries = entries[-limit:] if limit > 0 else []
        return [e.line() for e in entries]

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.lines()) + "\n", encoding="utf-8")
        return path


def _describe_attributes(report: DeviceReport) -> str:
    parts = []
    for key in sorted(report.attributes):
        value = report.attributes[key]
        if isinstance(value, float):
            value = f"{value:.3f}"
        parts.append(f"{key.replace('_', ' ')} {value}")
    return ", ".join(parts)
