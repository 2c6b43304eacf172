"""
Warehouse benchmark: distributed agents against the centralized baseline.

Distributed mode drives a coordinator, N robot agents and the warehouse
world until every shelf's vacancy list has been reported. Centralized mode
runs the serial plan-then-generate pipeline for the same N robots. Both use
the stub language model so the two modes see the same latency and failure
process.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from app.core.agent_runtime import DeviceAgent
from app.core.api_corpus import load_profile_file
from app.core.codegen import load_template
from app.core.coordinator import (
    Coordinator,
    CoordinatorConfig,
    OrchestrationMode,
    run_centralized_baseline,
)
from app.core.embeddings import HashingEmbeddingProvider
from app.core.extraction import ReferenceExtractor
from app.core.m2m_log import M2MLog
from app.core.planners import WarehousePlanner
from app.core.stub_llm import StubLLM, StubLLMConfig
from app.core.transport import InProcessTransport
from app.schemas.scenario import ScenarioResult, TimelineEvent
from app.sim.devices import SimRobot
from app.sim.warehouse import WarehouseWorld, robot_ids, robot_profile, survey_matches_world

logger = logging.getLogger(__name__)

SURVEY_INSTRUCTION = "Please check if there are vacant positions on the shelves."
ROBOT_CORPUS = "robot.json"


class WarehouseConfig(BaseModel):
    n: int = Field(default=4, ge=1)
    mode: OrchestrationMode = OrchestrationMode.DISTRIBUTED
    latency_s: float = Field(default=0.2, ge=0)
    fail_p: float = Field(default=0.0, ge=0, le=1)
    trials: int = Field(default=1, ge=1)
    seed: int = 0
    poll_period_s: float = Field(default=0.05, gt=0)
    report_timeout_s: float = Field(default=0.02, gt=0)
    round_budget: int = Field(default=60, ge=1)
    instruction: str = SURVEY_INSTRUCTION

    @property
    def stub(self) -> StubLLMConfig:
        return StubLLMConfig(latency_s=self.latency_s, fail_p=self.fail_p, seed=self.seed)


@dataclass
class WarehouseSystem:
    world: WarehouseWorld
    transport: InProcessTransport
    coordinator: Coordinator
    planner: WarehousePlanner
    agents: List[DeviceAgent] = field(default_factory=list)
    m2m: Optional[M2MLog] = None

    def start(self) -> None:
        for agent in self.agents:
            agent.start()

    async def stop(self) -> None:
        for agent in self.agents:
            await agent.stop()


def build_warehouse_system(
    n: int,
    seed: int = 0,
    stub: Optional[StubLLMConfig] = None,
    stub_seed: Sequence[int] = (0,),
    poll_period_s: float = 0.05,
    report_timeout_s: float = 0.02,
    m2m: Optional[M2MLog] = None,
) -> WarehouseSystem:
    """Wire an N-shelf world, N robot agents, an in-process transport and a coordinator."""
    world = WarehouseWorld(n, seed=seed)
    base = load_profile_file(ROBOT_CORPUS)
    provider = HashingEmbeddingProvider()
    extractor = ReferenceExtractor()
    template = load_template()
    transport = InProcessTransport(m2m)
    ids = robot_ids(n)

    agents = []
    for k, robot_id in enumerate(ids, start=1):
        agent = DeviceAgent(
            robot_profile(base, robot_id, n),
            SimRobot(world, robot_id),
            provider=provider,
            extractor=extractor,
            template=template,
            stub_llm=StubLLM(stub, seed=[*stub_seed, k]) if stub is not None else None,
            m2m=m2m,
        )
        transport.register(agent)
        agents.append(agent)

    planner = WarehousePlanner(ids)
    coordinator = Coordinator(
        transport,
        planner,
        CoordinatorConfig(poll_period_s=poll_period_s, report_timeout_s=report_timeout_s),
        m2m,
    )
    for agent in agents:
        coordinator.register_device(agent.profile)
    return WarehouseSystem(world, transport, coordinator, planner, agents, m2m)


async def run_distributed_trial(
    config: WarehouseConfig, trial: int = 0, m2m: Optional[M2MLog] = None
) -> Dict[str, Any]:
    system = build_warehouse_system(
        config.n,
        seed=config.seed + trial,
        stub=config.stub,
        stub_seed=(config.seed, trial),
        poll_period_s=config.poll_period_s,
        report_timeout_s=config.report_timeout_s,
        m2m=m2m,
    )
    system.start()
    try:
        system.coordinator.submit_instruction(config.instruction)
        rounds = await system.coordinator.run(
            max_rounds=config.round_budget, until=lambda: system.planner.finished
        )
    finally:
        await system.stop()

    # Codegen phase: first dispatch wave, earliest start to latest end.
    wave = [agent.codegen_spans[0] for agent in system.agents if agent.codegen_spans]
    codegen_s = max(s.ended_at for s in wave) - min(s.started_at for s in wave) if wave else 0.0
    success = system.planner.succeeded and survey_matches_world(system.world, system.planner.vacancy)
    return {
        "mode": OrchestrationMode.DISTRIBUTED.value,
        "n": config.n,
        "trial": trial,
        "codegen_ms": codegen_s * 1000,
        "success": success,
        "device_success_rate": float(np.mean([s.succeeded for s in wave])) if wave else 0.0,
        "round_count": rounds,
    }


async def run_centralized_trial(config: WarehouseConfig, trial: int = 0) -> Dict[str, Any]:
    stub = StubLLM(config.stub, seed=[config.seed, trial])
    result = await run_centralized_baseline(config.instruction, robot_ids(config.n), stub)
    return {
        "mode": OrchestrationMode.CENTRALIZED_BASELINE.value,
        "n": config.n,
        "trial": trial,
        "codegen_ms": result.wall_time_s * 1000,
        "success": result.success,
        "device_success_rate": 1 - len(result.failed_devices) / config.n,
        "round_count": 0,
    }


async def run_warehouse(config: Optional[WarehouseConfig] = None) -> ScenarioResult:
    """Run config.trials independent trials in config.mode and collect per-trial metrics."""
    config = config or WarehouseConfig()
    m2m = M2MLog()
    started = time.perf_counter()
    rows = []
    timeline = []
    for trial in range(config.trials):
        try:
            if config.mode == OrchestrationMode.DISTRIBUTED:
                row = await run_distributed_trial(config, trial, m2m if trial == 0 else None)
            else:
                row = await run_centralized_trial(config, trial)
        except Exception as e:
            logger.error(f"Trial {trial} failed: {e}")
            row = {
                "mode": config.mode.value,
                "n": config.n,
                "trial": trial,
                "codegen_ms": float("nan"),
                "success": False,
                "device_success_rate": 0.0,
                "round_count": 0,
            }
        rows.append(row)
        timeline.append(
            TimelineEvent(
                t=time.perf_counter() - started,
                event="trial_finished",
                detail={"trial": trial, "success": row["success"], "codegen_ms": row["codegen_ms"]},
            )
        )

    df = pd.DataFrame(rows)
    latency_ms = config.latency_s * 1000
    checks: Dict[str, bool] = {}
    if config.fail_p == 0:
        checks["all_trials_succeeded"] = bool(df["success"].all())
    if config.latency_s > 0:
        if config.mode == OrchestrationMode.DISTRIBUTED:
            checks["codegen_within_parallel_bound"] = bool((df["codegen_ms"] <= 2.5 * latency_ms).all())
        elif config.fail_p == 0:
            checks["codegen_at_least_serial_sum"] = bool(
                (df["codegen_ms"] >= 0.9 * config.n * 2 * latency_ms).all()
            )

    summary = {
        "mode": config.mode.value,
        "n": config.n,
        "trials": config.trials,
        "latency_ms": latency_ms,
        "fail_p": config.fail_p,
        "mean_codegen_ms": float(df["codegen_ms"].mean()),
        "success_rate": float(df["success"].mean()),
        "device_success_rate": float(df["device_success_rate"].mean()),
        "expected_success_rate": (1 - config.fail_p) ** config.n
        if config.mode == OrchestrationMode.CENTRALIZED_BASELINE
        else 1 - config.fail_p,
    }
    logger.info(
        f"Warehouse {config.mode.value} N={config.n}: success {summary['success_rate']:.3f}, "
        f"codegen {summary['mean_codegen_ms']:.1f} ms"
    )
    return ScenarioResult(
        scenario_id=f"warehouse-{config.mode.value}-n{config.n}",
        timeline=timeline,
        metrics=rows,
        m2m_lines=m2m.lines(),
        checks=checks,
        summary=summary,
    )


class LineFit(BaseModel):
    slope: float
    intercept: float
    r2: float


def fit_line(x: Sequence[float], y: Sequence[float]) -> LineFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((residual**2).sum()) / total if total > 0 else 1.0
    return LineFit(slope=float(slope), intercept=float(intercept), r2=r2)


async def run_scaling(config: WarehouseConfig, ns: Sequence[int]) -> ScenarioResult:
    """Both modes at every N; checks linear centralized growth and flat distributed cost."""
    rows = []
    timeline = []
    m2m_lines: List[str] = []
    started = time.perf_counter()
    for n in ns:
        for mode in OrchestrationMode:
            result = await run_warehouse(config.model_copy(update={"n": n, "mode": mode}))
            rows.extend(result.metrics)
            if not m2m_lines:
                m2m_lines = result.m2m_lines
            timeline.append(
                TimelineEvent(
                    t=time.perf_counter() - started,
                    event="sweep_point",
                    detail={"n": n, "mode": mode.value, "mean_codegen_ms": result.summary["mean_codegen_ms"]},
                )
            )

    df = pd.DataFrame(rows)
    means = df.groupby(["mode", "n"])["codegen_ms"].mean().unstack(level=0)
    central = means[OrchestrationMode.CENTRALIZED_BASELINE.value]
    distributed = means[OrchestrationMode.DISTRIBUTED.value]
    fit = fit_line(central.index, central.values) if len(central) >= 2 else None
    latency_ms = config.latency_s * 1000
    gap = (central - distributed)[central.index >= 2]

    checks = {
        "distributed_within_parallel_bound": bool((distributed <= 2.5 * latency_ms).all()),
        "centralized_slower_for_n_at_least_2": bool((gap > 0).all()),
        "gap_grows_with_n": bool(gap.is_monotonic_increasing),
    }
    if config.fail_p == 0:
        checks["centralized_at_least_serial_sum"] = bool(
            all(central[n] >= 0.9 * n * 2 * latency_ms for n in central.index)
        )
    if fit is not None:
        checks["centralized_linear_in_n"] = fit.r2 >= 0.99

    return ScenarioResult(
        scenario_id="warehouse-scaling",
        timeline=timeline,
        metrics=rows,
        m2m_lines=m2m_lines,
        checks=checks,
        summary={
            "ns": list(ns),
            "centralized_fit": fit.model_dump() if fit else None,
            "mean_codegen_ms": {
                mode: {int(n): float(v) for n, v in means[mode].items()} for mode in means.columns
            },
        },
    )

