from enum import Enum
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.schemas.corpus import DeviceApiProfile


class CompletionStatus(str, Enum):
    NONE = "none"
    ONGOING = "ongoing"
    COMPLETED = "completed"
    NOT_EXECUTABLE = "not_executable"
    SUPERSEDED = "superseded"

    @property
    def is_terminal(self) -> bool:
        return self in (
            CompletionStatus.COMPLETED,
            CompletionStatus.NOT_EXECUTABLE,
            CompletionStatus.SUPERSEDED,
        )


class DeviceStatus(str, Enum):
    OK = "ok"
    FAULT = "fault"


class SubtaskSpec(BaseModel):
    """One single-sentence instruction addressed to one device."""

    model_config = ConfigDict(frozen=True)

    subtask_id: int = Field(ge=0)
    device_id: str = Field(min_length=1)
    text: str
    issued_round: int = 0

    @field_validator("text")
    @classmethod
    def _text_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("subtask text must not be empty")
        return value


class SubtaskStatus(BaseModel):
    """Latest known state of the most recent subtask an agent has seen."""

    subtask_id: int
    status: CompletionStatus
    function: Optional[str] = None
    result: Optional[Any] = None
    detail: Optional[str] = None


class DeviceReport(BaseModel):
    device_id: str
    status: DeviceStatus = DeviceStatus.OK
    attributes: Dict[str, Any] = Field(default_factory=dict)
    subtask_status: Optional[SubtaskStatus] = None
    profile_update: Optional[DeviceApiProfile] = None


class Instruction(BaseModel):
    instruction_id: int
    text: str
    received_ts: float


class MessageType(str, Enum):
    POLL = "poll"
    REPORT = "report"
    ASSIGN = "assign"
    ACK = "ack"


class WireMessage(BaseModel):
    """One line on the coordinator/agent wire. Unknown fields are ignored."""

    model_config = ConfigDict(extra="ignore")

    type: MessageType
    round: Optional[int] = None
    correlation_id: str = ""
    payload: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def poll(cls, round: int, correlation_id: str = "") -> "WireMessage":
        return cls(type=MessageType.POLL, round=round, correlation_id=correlation_id)

    @classmethod
    def report(
        cls, round: int, report: DeviceReport, correlation_id: str = ""
    ) -> "WireMessage":
        return cls(
            type=MessageType.REPORT,
            round=round,
            correlation_id=correlation_id,
            payload=report.model_dump(mode="json", exclude_none=True),
        )

    @classmethod
    def assign(cls, subtask: SubtaskSpec, correlation_id: str = "") -> "WireMessage":
        return cls(
            type=MessageType.ASSIGN,
            correlation_id=correlation_id,
            payload=subtask.model_dump(mode="json"),
        )

    @classmethod
    def ack(cls, correlation_id: str, accepted: bool = True, detail: str = "") -> "WireMessage":
        payload: Dict[str, Any] = {"accepted": accepted}
        if detail:
            payload["detail"] = detail
        return cls(type=MessageType.ACK, correlation_id=correlation_id, payload=payload)

    def device_report(self) -> DeviceReport:
        return DeviceReport.model_validate(self.payload)

    def subtask(self) -> SubtaskSpec:
        return SubtaskSpec.model_validate(self.payload)
