import asyncio
import time
from unittest.mock import MagicMock, patch

import pytest
import requests
from pydantic import ValidationError

from app.core.errors import ConfigurationError
from app.core.planners import (
    AsyncPlanner,
    PlannerConfig,
    RemotePlanner,
    SubtaskRequest,
    WarehousePlanner,
    WifiInterferencePlanner,
    WifiQosPlanner,
    build_planner,
)
from app.schemas.messages import CompletionStatus, DeviceReport, Instruction, SubtaskSpec, SubtaskStatus

SURVEY = Instruction(instruction_id=1, text="Please check if there are vacant positions on the shelves.", received_ts=0.0)


def report(device_id, subtask_id=None, status=None, result=None, **attributes):
    subtask_status = None
    if subtask_id is not None:
        subtask_status = SubtaskStatus(subtask_id=subtask_id, status=status, result=result)
    return DeviceReport(device_id=device_id, attributes=attributes, subtask_status=subtask_status)


def dispatch(planner, request, subtask_id):
    planner.on_dispatched(SubtaskSpec(subtask_id=subtask_id, device_id=request.device_id, text=request.text))


class TestWarehousePlanner:
    def test_full_survey(self):
        planner = WarehousePlanner()
        reports = {"robot_1": report("robot_1"), "robot_2": report("robot_2")}

        first = planner.plan(SURVEY, reports)
        assert first == [
            SubtaskRequest("robot_1", "Move to shelf one."),
            SubtaskRequest("robot_2", "Move to shelf two."),
        ]
        for request in first:
            dispatch(planner, request, 1)

        assert planner.plan(None, reports) == []

        reports = {
            "robot_1": report("robot_1", 1, CompletionStatus.COMPLETED, 1),
            "robot_2": report("robot_2", 1, CompletionStatus.ONGOING),
        }
        second = planner.plan(None, reports)
        assert second == [SubtaskRequest("robot_1", "Identify the vacancy in shelf one.")]
        dispatch(planner, second[0], 2)

        reports = {
            "robot_1": report("robot_1", 2, CompletionStatus.COMPLETED, [3, 7]),
            "robot_2": report("robot_2", 1, CompletionStatus.COMPLETED, 2),
        }
        third = planner.plan(None, reports)
        assert third == [SubtaskRequest("robot_2", "Identify the vacancy in shelf two.")]
        assert planner.vacancy == {1: [3, 7]}
        assert not planner.finished
        dispatch(planner, third[0], 2)

        planner.plan(None, {"robot_2": report("robot_2", 2, CompletionStatus.COMPLETED, [])})
        assert planner.vacancy == {1: [3, 7], 2: []}
        assert planner.finished and planner.succeeded

    def test_retries_once_then_fails(self):
        planner = WarehousePlanner(["robot_1"])
        request = planner.plan(SURVEY, {})[0]
        dispatch(planner, request, 1)

        retry = planner.plan(None, {"robot_1": report("robot_1", 1, CompletionStatus.NOT_EXECUTABLE)})
        assert retry == [request]
        dispatch(planner, retry[0], 2)

        after = planner.plan(None, {"robot_1": report("robot_1", 2, CompletionStatus.SUPERSEDED)})
        assert after == []
        assert planner.finished and not planner.succeeded

    def test_stale_status_ignored(self):
        planner = WarehousePlanner(["robot_1"])
        dispatch(planner, planner.plan(SURVEY, {})[0], 4)
        assert planner.plan(None, {"robot_1": report("robot_1", 3, CompletionStatus.COMPLETED, 1)}) == []
        assert planner.scripts["robot_1"].step == 0

    def test_robots_in_natural_order(self):
        planner = WarehousePlanner()
        reports = {d: report(d) for d in ("robot_10", "robot_2", "robot_1", "client_1")}
        planner.plan(SURVEY, reports)
        assert planner.shelf_of == {"robot_1": 1, "robot_2": 2, "robot_10": 3}

    def test_unrelated_instruction_ignored(self):
        planner = WarehousePlanner(["robot_1"])
        other = Instruction(instruction_id=7, text="Sing a song.", received_ts=0.0)
        assert planner.plan(other, {}) == []
        assert planner.ignored_instructions == [7]
        assert not planner.active

    @pytest.mark.parametrize(
        "text, expected",
        [
            ("Please check if there are vacant positions on the shelves.", True),
            ("Find vacancies on every shelf", True),
            ("Check the shelves", False),
        ],
    )
    def test_accepts(self, text, expected):
        assert WarehousePlanner.accepts(text) is expected


def qos_reports(cw=(10, 15), upload_1=30.0, upload_2=None, status=None):
    reports = {
        "client_1": report(
            "client_1",
            *(status or ()),
            cw_configurable=True,
            log_cw_min=cw[0],
            log_cw_max=cw[1],
            upload_time_s=upload_1,
        )
    }
    if upload_2 is not None:
        reports["client_2"] = report("client_2", cw_configurable=False, upload_time_s=upload_2)
    return reports


class TestWifiQosPlanner:
    def test_steps_down_while_violated(self):
        planner = WifiQosPlanner()
        requests_out = planner.plan(None, qos_reports())

        assert requests_out == [
            SubtaskRequest("client_1", "Set the contention window to log_CW_min 8 and log_CW_max 12.")
        ]
        dispatch(planner, requests_out[0], 1)
        assert planner.events == [("step_down", (8, 12))]

        assert planner.plan(None, qos_reports((8, 12), status=(1, CompletionStatus.ONGOING))) == []
        nxt = planner.plan(None, qos_reports((8, 12), status=(1, CompletionStatus.COMPLETED)))
        assert nxt[0].text.endswith("log_CW_min 6 and log_CW_max 9.")

    def test_holds_when_met_or_at_floor(self):
        planner = WifiQosPlanner()
        assert planner.plan(None, qos_reports(upload_1=12.0)) == []
        assert planner.plan(None, qos_reports((2, 4), upload_1=40.0)) == []

    def test_rollback_once_per_violation(self):
        planner = WifiQosPlanner()
        first = planner.plan(None, qos_reports((4, 6), upload_1=20.0, upload_2=25.0))
        assert first[0].text.endswith("log_CW_min 6 and log_CW_max 9.")
        dispatch(planner, first[0], 1)
        assert planner.events == [("rollback", (6, 9))]

        done = (1, CompletionStatus.COMPLETED)
        assert planner.plan(None, qos_reports((6, 9), upload_1=20.0, upload_2=25.0, status=done)) == []

        resumed = planner.plan(None, qos_reports((6, 9), upload_1=20.0, upload_2=10.0, status=done))
        assert resumed[0].text.endswith("log_CW_min 4 and log_CW_max 6.")

    def test_inactive_clients_do_not_count(self):
        planner = WifiQosPlanner()
        reports = qos_reports((4, 6), upload_1=12.0)
        reports["client_2"] = report("client_2", active=False, upload_time_s=100.0)
        assert planner.plan(None, reports) == []

    def test_per_device_requirement(self):
        planner = WifiQosPlanner()
        planner.set_requirement("client_1", 40.0)
        assert planner.requirement("client_1") == 40.0
        assert planner.requirement("client_2") == 16.0
        assert planner.plan(None, qos_reports(upload_1=30.0)) == []

    def test_gives_up_after_retry(self):
        planner = WifiQosPlanner()
        dispatch(planner, planner.plan(None, qos_reports())[0], 1)
        failed = (1, CompletionStatus.NOT_EXECUTABLE)
        retry = planner.plan(None, qos_reports(status=failed))
        dispatch(planner, retry[0], 2)
        assert planner.plan(None, qos_reports(status=(2, CompletionStatus.NOT_EXECUTABLE))) == []
        assert planner.gave_up

    def test_no_target(self):
        assert WifiQosPlanner().plan(None, {"client_2": report("client_2", upload_time_s=30.0)}) == []


def interference_reports(per_2=0.30, band_2="band_2_4", detected=True):
    return {
        "client_1": report(
            "client_1",
            band="band_2_4",
            per=0.37,
            interference_detected=detected,
            band_switch_without_reboot=False,
        ),
        "client_2": report("client_2", band=band_2, per=per_2, band_switch_without_reboot=True),
    }


class TestWifiInterferencePlanner:
    def test_switches_affected_clients(self):
        planner = WifiInterferencePlanner()
        assert planner.plan(None, interference_reports()) == [SubtaskRequest("client_2", "Switch to the 5 GHz band.")]

    def test_force_devices(self):
        planner = WifiInterferencePlanner(force_devices=["client_1"])
        requested = [r.device_id for r in planner.plan(None, interference_reports())]
        assert requested == ["client_1", "client_2"]

    @pytest.mark.parametrize(
        "kwargs",
        [{"detected": False}, {"per_2": 0.20}, {"band_2": "band_5"}],
    )
    def test_no_switch(self, kwargs):
        assert WifiInterferencePlanner().plan(None, interference_reports(**kwargs)) == []

    def test_outcomes_recorded(self):
        planner = WifiInterferencePlanner()
        dispatch(planner, planner.plan(None, interference_reports())[0], 1)
        reports = interference_reports(band_2="band_5")
        reports["client_2"] = report(
            "client_2", 1, CompletionStatus.COMPLETED, "band_5", band="band_5", per=0.067
        )
        assert planner.plan(None, reports) == []
        assert planner.outcomes == {"client_2": [CompletionStatus.COMPLETED]}


class TestRemotePlanner:
    @patch("app.core.planners.requests.post")
    def test_plan(self, mock_post):
        mock_post.return_value = MagicMock(json=lambda: {"subtasks": [{"device_id": "robot_1", "text": "Go."}]})
        planner = RemotePlanner("http://planner.local/plan", temperature=0.2)

        result = planner.plan(SURVEY, {"robot_1": report("robot_1", battery=90.0)})

        assert result == [SubtaskRequest("robot_1", "Go.")]
        payload = mock_post.call_args.kwargs["json"]
        assert payload["instruction"] == SURVEY.text
        assert payload["reports"]["robot_1"]["attributes"] == {"battery": 90.0}
        assert payload["sampling"] == {"temperature": 0.2, "top_p": 1.0}
        assert planner.pending == []

    @patch("app.core.planners.requests.post")
    def test_failure_keeps_instruction_pending(self, mock_post):
        mock_post.side_effect = requests.ConnectionError("refused")
        planner = RemotePlanner("http://planner.local/plan")

        assert planner.plan(SURVEY, {}) == []
        assert planner.pending == [SURVEY]

        mock_post.side_effect = None
        mock_post.return_value = MagicMock(json=lambda: {"subtasks": []})
        planner.plan(None, {})
        assert mock_post.call_args.kwargs["json"]["instruction"] == SURVEY.text
        assert planner.pending == []

    @patch("app.core.planners.requests.post")
    def test_malformed_response(self, mock_post):
        mock_post.return_value = MagicMock(json=lambda: {"plan": "?"})
        assert RemotePlanner("http://planner.local/plan").plan(SURVEY, {}) == []

    @patch("app.core.planners.requests.post")
    async def test_async_timeout_capped_by_budget(self, mock_post):
        mock_post.return_value = MagicMock(json=lambda: {"subtasks": [{"device_id": "robot_1", "text": "Go."}]})
        planner = RemotePlanner("http://planner.local/plan", timeout_s=30.0)

        assert isinstance(planner, AsyncPlanner)
        result = await planner.plan_async(SURVEY, {}, budget_s=0.25)

        assert result == [SubtaskRequest("robot_1", "Go.")]
        assert mock_post.call_args.kwargs["timeout"] == 0.25
        await planner.plan_async(None, {})
        assert mock_post.call_args.kwargs["timeout"] == 30.0

    async def test_async_request_leaves_loop_running(self):
        def slow_post(url, json, timeout):
            time.sleep(timeout)
            raise requests.Timeout("planner timed out")

        planner = RemotePlanner("http://planner.local/plan")
        ticks = []

        async def heartbeat():
            while True:
                ticks.append(time.perf_counter())
                await asyncio.sleep(0.01)

        beat = asyncio.create_task(heartbeat())
        try:
            with patch("app.core.planners.requests.post", side_effect=slow_post):
                assert await planner.plan_async(SURVEY, {}, budget_s=0.3) == []
        finally:
            beat.cancel()

        assert planner.pending == [SURVEY]
        assert len(ticks) >= 10
        assert max(b - a for a, b in zip(ticks, ticks[1:])) < 0.1

    def test_scripted_planners_are_synchronous(self):
        assert not isinstance(WarehousePlanner(), AsyncPlanner)


class TestBuildPlanner:
    @pytest.mark.parametrize(
        "kind, cls",
        [
            ("warehouse", WarehousePlanner),
            ("wifi_qos", WifiQosPlanner),
            ("wifi_interference", WifiInterferencePlanner),
        ],
    )
    def test_kinds(self, kind, cls):
        assert isinstance(build_planner(PlannerConfig(kind=kind)), cls)

    def test_remote(self):
        planner = build_planner(PlannerConfig(kind="remote", url="http://planner.local/plan", timeout_s=5))
        assert isinstance(planner, RemotePlanner)
        assert planner.timeout_s == 5

    def test_remote_without_url(self):
        with pytest.raises(ConfigurationError):
            build_planner(PlannerConfig(kind="remote"))

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            PlannerConfig(kind="oracle")
