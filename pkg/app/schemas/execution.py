from enum import Enum
from typing import Any, List, Optional

from pydantic import BaseModel, Field, model_validator

from app.schemas.messages import CompletionStatus


class FsmState(str, Enum):
    START = "Start"
    PRE_PROCESSING = "PreProcessing"
    FUNCTION_CALL = "FunctionCall"
    POST_PROCESSING = "PostProcessing"
    END = "End"


FSM_ORDER = [
    FsmState.START,
    FsmState.PRE_PROCESSING,
    FsmState.FUNCTION_CALL,
    FsmState.POST_PROCESSING,
    FsmState.END,
]


class FsmTimeouts(BaseModel):
    """Per-state time limits in seconds."""

    pre_s: float = Field(default=2.0, gt=0)
    call_s: float = Field(default=30.0, gt=0)
    post_s: float = Field(default=2.0, gt=0)


class StateEntry(BaseModel):
    state: FsmState
    entered_at: float
    detail: str = ""


class ExecutionRecord(BaseModel):
    """Trace of one five-state run for one subtask."""

    subtask_id: int
    device_id: str
    function: Optional[str] = None
    rendered_call: Optional[str] = None
    state_log: List[StateEntry] = Field(default_factory=list)
    call_result: Optional[Any] = None
    error: Optional[str] = None
    device_calls: int = 0
    final_status: CompletionStatus = CompletionStatus.ONGOING

    @model_validator(mode="after")
    def _states_in_order(self) -> "ExecutionRecord":
        states = [entry.state for entry in self.state_log]
        if states != FSM_ORDER[: len(states)]:
            raise ValueError(f"state log out of order: {[s.value for s in states]}")
        return self

    @property
    def states(self) -> List[FsmState]:
        return [entry.state for entry in self.state_log]
