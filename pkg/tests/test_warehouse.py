import math

import pytest

from app.core.coordinator import OrchestrationMode
from app.scenarios.common import load_scenario_config
from app.scenarios.warehouse import (
    SURVEY_INSTRUCTION,
    WarehouseConfig,
    build_warehouse_system,
    fit_line,
    run_scaling,
    run_warehouse,
)
from app.sim.warehouse import survey_matches_world


class TestWarehouseConfig:
    def test_shipped_config(self):
        config = load_scenario_config("warehouse.json", WarehouseConfig)
        assert config.n == 4
        assert config.mode == OrchestrationMode.DISTRIBUTED
        assert config.instruction == SURVEY_INSTRUCTION
        assert config.stub.latency_s == 0.2

    def test_fail_p_bounds(self):
        with pytest.raises(ValueError):
            WarehouseConfig(fail_p=1.5)


class TestBuildSystem:
    def test_wiring(self):
        system = build_warehouse_system(3, seed=2)
        assert system.transport.endpoints() == ["robot_1", "robot_2", "robot_3"]
        assert set(system.coordinator.profiles) == {"robot_1", "robot_2", "robot_3"}
        shelf = system.agents[2].profile.function("move_to_shelf").parameters[0]
        assert tuple(shelf.range) == (1, 3)
        assert system.world.n_shelves == 3


class TestRunWarehouse:
    async def test_distributed(self):
        result = await run_warehouse(WarehouseConfig(n=2, latency_s=0.05, trials=2))

        assert result.scenario_id == "warehouse-distributed-n2"
        assert all(result.checks.values()), result.checks
        assert result.summary["success_rate"] == 1.0
        assert [row["trial"] for row in result.metrics] == [0, 1]
        assert all(row["round_count"] > 0 for row in result.metrics)
        assert any("move_to_shelf" in line for line in result.m2m_lines)

    async def test_centralized(self):
        config = WarehouseConfig(n=2, latency_s=0.02, mode=OrchestrationMode.CENTRALIZED_BASELINE)
        result = await run_warehouse(config)

        assert all(result.checks.values()), result.checks
        assert result.metrics[0]["codegen_ms"] >= 0.9 * 2 * 2 * 20
        assert result.m2m_lines == []

    async def test_distributed_with_certain_failure(self):
        result = await run_warehouse(WarehouseConfig(n=2, latency_s=0.0, fail_p=1.0))

        assert "all_trials_succeeded" not in result.checks
        assert result.summary["success_rate"] == 0.0
        assert result.summary["device_success_rate"] == 0.0
        assert result.summary["expected_success_rate"] == 0.0

    async def test_centralized_expected_success(self):
        config = WarehouseConfig(n=3, latency_s=0.0, fail_p=0.5, trials=4, mode=OrchestrationMode.CENTRALIZED_BASELINE)
        result = await run_warehouse(config)
        assert result.summary["expected_success_rate"] == pytest.approx(0.125)
        assert len(result.metrics) == 4

    async def test_survey_against_world(self, warehouse_system):
        warehouse_system.start()
        try:
            warehouse_system.coordinator.submit_instruction(SURVEY_INSTRUCTION)
            await warehouse_system.coordinator.run(max_rounds=40, until=lambda: warehouse_system.planner.finished)
        finally:
            await warehouse_system.stop()
        assert survey_matches_world(warehouse_system.world, warehouse_system.planner.vacancy)


class TestFitLine:
    def test_exact_line(self):
        fit = fit_line([1, 2, 3, 4], [2, 4, 6, 8])
        assert fit.slope == pytest.approx(2.0)
        assert math.isclose(fit.intercept, 0.0, abs_tol=1e-9)
        assert fit.r2 == pytest.approx(1.0)

    def test_constant(self):
        assert fit_line([1, 2, 3], [5, 5, 5]).r2 == 1.0

    def test_noisy(self):
        assert fit_line([1, 2, 3, 4], [1, 4, 2, 5]).r2 < 0.9


@pytest.mark.slow
class TestScaling:
    async def test_sweep(self):
        result = await run_scaling(WarehouseConfig(latency_s=0.05), [1, 2, 4])

        assert all(result.checks.values()), result.checks
        assert result.summary["ns"] == [1, 2, 4]
        assert result.summary["centralized_fit"]["slope"] > 0
        assert len(result.metrics) == 6
