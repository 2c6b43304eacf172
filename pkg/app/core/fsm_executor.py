"""
Five-state subtask FSM: Start -> PreProcessing -> FunctionCall ->
PostProcessing -> End.

Each state's operation runs on entry. PostProcessing and End are always
entered, also after a failed or timed-out call, so release hooks never leak.
"""

import asyncio
import logging
import time
from typing import Any, Awaitable, Callable, Dict, List, Optional, Protocol, Tuple

from app.core.codegen import plan_arguments
from app.core.m2m_log import M2MLog
from app.schemas.codegen import CallPlan
from app.schemas.corpus import DeviceApiProfile, RoleHint
from app.schemas.execution import (
    ExecutionRecord,
    FsmState,
    FsmTimeouts,
    StateEntry,
)
from app.schemas.messages import CompletionStatus

logger = logging.getLogger(__name__)


class DeviceHandle(Protocol):
    device_id: str

    async def call(self, function: str, args: Dict[str, Any]) -> Any: ...

    def attributes(self) -> Dict[str, Any]: ...


async def _invoke(
    call: Callable[[], Awaitable[Any]], timeout_s: float, label: str
) -> Tuple[Any, Optional[str]]:
    try:
        return await asyncio.wait_for(call(), timeout=timeout_s), None
    except asyncio.TimeoutError:
        return None, f"{label} timed out after {timeout_s:g}s"
    except Exception as e:
        return None, f"{label} failed: {type(e).__name__}: {e}"


async def run_fsm(
    plan: CallPlan,
    device: DeviceHandle,
    timeouts: Optional[FsmTimeouts] = None,
    subtask_id: int = 0,
    profile: Optional[DeviceApiProfile] = None,
    m2m: Optional[M2MLog] = None,
    clock: Callable[[], float] = time.time,
) -> ExecutionRecord:
    """
    Execute one CallPlan on a device.

    Device errors and timeouts never escape: they land in the record and turn
    the final status into NotExecutable.
    """
    timeouts = timeouts or FsmTimeouts()
    state_log: List[StateEntry] = []

    def enter(state: FsmState, detail: str = "") -> None:
        state_log.append(StateEntry(state=state, entered_at=clock(), detail=detail))
        logger.info("%s %s %s %s", device.device_id, subtask_id, state.value, detail)
        if m2m is not None:
            m2m.fsm_state(device.device_id, subtask_id, state.value, detail)

    init_hook = profile.function_with_role(RoleHint.INIT) if profile else None
    release_hook = profile.function_with_role(RoleHint.RELEASE) if profile else None

    enter(FsmState.START, plan.rendered_call)

    enter(FsmState.PRE_PROCESSING, init_hook.name if init_hook else "no-op")
    pre_error = None
    if init_hook is not None:
        _, pre_error = await _invoke(
            lambda: device.call(init_hook.name, {}), timeouts.pre_s, init_hook.name
        )

    call_result: Any = None
    error = pre_error
    device_calls = 0
    if pre_error is not None:
        enter(FsmState.FUNCTION_CALL, f"skipped: {pre_error}")
    else:
        enter(FsmState.FUNCTION_CALL, plan.rendered_call)
        device_calls = 1
        call_result, error = await _invoke(
            lambda: device.call(plan.function.name, plan_arguments(plan)),
            timeouts.call_s,
            plan.function.name,
        )

    post_detail = release_hook.name if release_hook else "no-op"
    enter(FsmState.POST_PROCESSING, post_detail)
    if release_hook is not None:
        _, post_error = await _invoke(
            lambda: device.call(release_hook.name, {}), timeouts.post_s, release_hook.name
        )
        if post_error is not None:
            logger.warning(f"{device.device_id} subtask {subtask_id}: {post_error}")

    final_status = CompletionStatus.COMPLETED if error is None else CompletionStatus.NOT_EXECUTABLE
    logger.info(
        f"{device.device_id} subtask {subtask_id} {plan.rendered_call} -> "
        f"{final_status.value}" + (f" ({error})" if error else f" result={call_result!r}")
    )
    enter(FsmState.END, final_status.value)

    return ExecutionRecord(
        subtask_id=subtask_id,
        device_id=device.device_id,
        function=plan.function.name,
        rendered_call=plan.rendered_call,
        state_log=state_log,
        call_result=call_result if error is None else error,
        error=error,
        device_calls=device_calls,
        final_status=final_status,
    )
