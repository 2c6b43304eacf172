from pydantic import BaseModel, Field
from typing import Optional, List, Dict, Any


class HealthResponse(BaseModel):
    """Health check response model."""

    status: str
    timestamp: str
    service: str
    version: str
    coordinator_running: bool = False
    round: Optional[int] = None


class InstructionRequest(BaseModel):
    text: str


class InstructionResponse(BaseModel):
    instruction_id: int
    pending: int


class DeviceSnapshot(BaseModel):
    device_id: str
    profile_version: Optional[int] = None
    functions: List[str] = Field(default_factory=list)
    report: Optional[Dict[str, Any]] = None
    outstanding_subtask: Optional[int] = None


class DevicesResponse(BaseModel):
    devices: List[DeviceSnapshot]


class RoundSummary(BaseModel):
    round: int
    polled: List[str]
    received: List[str]
    failed: List[str]
    duration_ms: float
    dispatched: List[Dict[str, Any]]


class RoundsResponse(BaseModel):
    rounds: List[RoundSummary]


class M2MResponse(BaseModel):
    lines: List[str]
    message_count: int
