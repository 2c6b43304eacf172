import asyncio

import numpy as np
import pytest

from app.core.codegen import compose_call
from app.core.fsm_executor import run_fsm
from app.core.m2m_log import M2MLog
from app.schemas.codegen import ArgumentSet
from app.schemas.execution import FSM_ORDER, FsmState, FsmTimeouts
from app.schemas.messages import CompletionStatus


class FakeDevice:
    """Records calls; fails the named functions."""

    def __init__(self, device_id="client_1", failing=(), delay_s=0.0):
        self.device_id = device_id
        self.failing = set(failing)
        self.delay_s = delay_s
        self.calls = []

    async def call(self, function, args):
        self.calls.append(function)
        if self.delay_s and function not in ("open_session", "close_session"):
            await asyncio.sleep(self.delay_s)
        if function in self.failing:
            raise RuntimeError(f"{function} broke")
        return f"{function} ok"

    def attributes(self):
        return {}


@pytest.fixture
def cw_plan(wifi_sdr_profile):
    return compose_call(
        wifi_sdr_profile.function("set_contention_window"),
        ArgumentSet(bindings=[("log_cw_min", "8"), ("log_cw_max", "12")]),
    )


class TestRunFsm:
    async def test_success_path(self, cw_plan, wifi_sdr_profile):
        device = FakeDevice()
        record = await run_fsm(cw_plan, device, subtask_id=3, profile=wifi_sdr_profile)

        assert record.states == FSM_ORDER
        assert record.final_status == CompletionStatus.COMPLETED
        assert record.call_result == "set_contention_window ok"
        assert record.device_calls == 1
        assert device.calls == ["open_session", "set_contention_window", "close_session"]

    async def test_without_profile_hooks_are_noops(self, cw_plan):
        device = FakeDevice()
        record = await run_fsm(cw_plan, device)
        assert device.calls == ["set_contention_window"]
        assert record.state_log[1].detail == "no-op"

    async def test_call_failure_still_releases(self, cw_plan, wifi_sdr_profile):
        device = FakeDevice(failing={"set_contention_window"})
        record = await run_fsm(cw_plan, device, profile=wifi_sdr_profile)

        assert record.final_status == CompletionStatus.NOT_EXECUTABLE
        assert "broke" in record.error
        assert record.states == FSM_ORDER
        assert device.calls[-1] == "close_session"

    async def test_pre_failure_skips_call(self, cw_plan, wifi_sdr_profile):
        device = FakeDevice(failing={"open_session"})
        record = await run_fsm(cw_plan, device, profile=wifi_sdr_profile)

        assert record.final_status == CompletionStatus.NOT_EXECUTABLE
        assert record.device_calls == 0
        assert "set_contention_window" not in device.calls
        assert device.calls[-1] == "close_session"

    async def test_release_failure_does_not_fail_subtask(self, cw_plan, wifi_sdr_profile):
        device = FakeDevice(failing={"close_session"})
        record = await run_fsm(cw_plan, device, profile=wifi_sdr_profile)
        assert record.final_status == CompletionStatus.COMPLETED

    async def test_timeout(self, cw_plan, wifi_sdr_profile):
        device = FakeDevice(delay_s=1.0)
        record = await run_fsm(
            cw_plan, device, FsmTimeouts(call_s=0.01), profile=wifi_sdr_profile
        )

        assert record.final_status == CompletionStatus.NOT_EXECUTABLE
        assert "timed out" in record.error
        assert record.states == FSM_ORDER
        assert device.calls[-1] == "close_session"

    async def test_state_entries_logged_to_m2m(self, cw_plan):
        m2m = M2MLog()
        await run_fsm(cw_plan, FakeDevice(), subtask_id=5, m2m=m2m)
        lines = [entry.text for entry in m2m.entries]
        assert lines[0] == "client_1 5 Start set_contention_window(8, 12)"
        assert lines[-1] == "client_1 5 End completed"
        assert len(lines) == 5

    async def test_random_failures_keep_fsm_contract(self, cw_plan, wifi_sdr_profile):
        functions = ["open_session", "set_contention_window", "close_session"]
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            failing = {f for f in functions if rng.random() < 0.3}
            device = FakeDevice(failing=failing)

            record = await run_fsm(cw_plan, device, subtask_id=seed, profile=wifi_sdr_profile)

            assert record.states == FSM_ORDER
            assert [e.state for e in record.state_log].count(FsmState.END) == 1
            assert device.calls[-1] == "close_session"
            expected_ok = not failing & {"open_session", "set_contention_window"}
            assert (record.final_status == CompletionStatus.COMPLETED) == expected_ok
            assert record.device_calls == (0 if "open_session" in failing else 1)
