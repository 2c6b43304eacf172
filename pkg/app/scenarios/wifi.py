"""
WiFi QoS scenarios on the simulated world.

Scenario 1: the CW-configurable client meets its upload-time requirement
alone; a second client joins and the planner walks the first client's
contention window down the schedule until both meet the requirement.

Scenario 2: interference raises PER on 2.4 GHz; the sensing client reports
it and every client able to switch bands without a reboot moves to 5 GHz.

The harness owns a simulated clock advanced by one round period per poll
round, so timelines and metrics are reproducible for a fixed seed.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from app.core.agent_runtime import DeviceAgent
from app.core.api_corpus import load_profile_file
from app.core.codegen import load_template
from app.core.coordinator import Coordinator, CoordinatorConfig, PollRound
from app.core.embeddings import HashingEmbeddingProvider
from app.core.errors import ConfigurationError
from app.core.extraction import ReferenceExtractor
from app.core.m2m_log import M2MLog
from app.core.planners import DEFAULT_CW_SCHEDULE, Planner, WifiInterferencePlanner, WifiQosPlanner
from app.core.transport import InProcessTransport
from app.scenarios.common import SimClock, Timeline, drain_agents, load_scenario_config
from app.schemas.messages import CompletionStatus
from app.schemas.scenario import ScenarioResult
from app.sim.calibration import is_non_increasing, sweep_cw_schedule
from app.sim.devices import SimWifiClient
from app.sim.wifi import Band, WifiWorld, WifiWorldConfig

logger = logging.getLogger(__name__)

SCENARIO1_CONFIG = "wifi_scenario1.json"
SCENARIO2_CONFIG = "wifi_scenario2.json"
PER_TOLERANCE = 0.001

METRIC_KEYS = [
    "active",
    "band",
    "per",
    "mcs_index",
    "log_cw_min",
    "log_cw_max",
    "upload_time_s",
    "airtime_share",
    "interference_detected",
]


class WifiScenarioConfig(BaseModel):
    world: WifiWorldConfig
    max_rounds: int = Field(default=30, ge=1)
    round_period_s: float = Field(default=1.0, gt=0)


class WifiScenario1Config(WifiScenarioConfig):
    requirement_s: float = Field(default=16.0, gt=0)
    schedule: List[Tuple[int, int]] = Field(default_factory=lambda: list(DEFAULT_CW_SCHEDULE))
    cw_client: str = "client_1"
    joining_client: str = "client_2"
    join_round: int = Field(default=3, ge=1)
    settle_rounds: int = Field(default=2, ge=1)


class WifiScenario2Config(WifiScenarioConfig):
    per_threshold: float = Field(default=0.20, ge=0, le=1)
    interference_on_round: Optional[int] = 2
    interference_off_round: Optional[int] = 8
    force_switch: List[str] = Field(default_factory=list)


class _WifiSystem:
    def __init__(self, world_config: WifiWorldConfig, planner: Planner, clock: SimClock):
        self.clock = clock
        self.m2m = M2MLog(clock=clock)
        self.world = WifiWorld(world_config)
        self.transport = InProcessTransport(self.m2m)
        provider = HashingEmbeddingProvider()
        extractor = ReferenceExtractor()
        template = load_template()
        self.agents: List[DeviceAgent] = []
        for client in world_config.clients:
            profile = load_profile_file(client.profile)
            if profile.device_id != client.device_id:
                raise ConfigurationError(
                    f"profile {client.profile} describes {profile.device_id}, not {client.device_id}"
                )
            agent = DeviceAgent(
                profile,
                SimWifiClient(self.world, client.device_id),
                provider=provider,
                extractor=extractor,
                template=template,
                m2m=self.m2m,
            )
            self.transport.register(agent)
            self.agents.append(agent)
        self.coordinator = Coordinator(self.transport, planner, CoordinatorConfig(), self.m2m)
        for agent in self.agents:
            self.coordinator.register_device(agent.profile)
        self.timeline = Timeline(clock)
        self.rows: List[Dict[str, Any]] = []

    def agent(self, device_id: str) -> DeviceAgent:
        return next(a for a in self.agents if a.device_id == device_id)

    async def step(self) -> PollRound:
        """One poll round, then let every dispatched subtask run to completion."""
        record = await self.coordinator.run_round()
        for subtask in record.dispatched:
            self.timeline.add(
                "subtask_dispatched",
                device_id=subtask.device_id,
                subtask_id=subtask.subtask_id,
                text=subtask.text,
            )
        for device_id in sorted(record.received):
            attributes = record.received[device_id].attributes
            row = {"t": self.clock(), "round": record.round, "device_id": device_id}
            row.update({key: attributes.get(key) for key in METRIC_KEYS})
            self.rows.append(row)
        await drain_agents(self.agents)
        self.timeline.record_executions(self.agents)
        return record

    def rows_for(self, device_id: str, round: Optional[int] = None) -> List[Dict[str, Any]]:
        return [
            r for r in self.rows if r["device_id"] == device_id and (round is None or r["round"] == round)
        ]

    def result(self, scenario_id: str, checks: Dict[str, bool], summary: Dict[str, Any]) -> ScenarioResult:
        return ScenarioResult(
            scenario_id=scenario_id,
            timeline=self.timeline.events,
            metrics=self.rows,
            m2m_lines=self.m2m.lines(),
            checks=checks,
            summary=summary,
        )


def _truncate_schedule(
    schedule: Sequence[Tuple[int, int]], floor: Optional[Tuple[int, int]]
) -> List[Tuple[int, int]]:
    schedule = [tuple(step) for step in schedule]
    if floor is None:
        return schedule
    floor = tuple(floor)
    if floor not in schedule:
        raise ConfigurationError(f"schedule floor {floor} is not a step of {schedule}")
    return schedule[: schedule.index(floor) + 1]


async def run_wifi_scenario1(
    config: Optional[WifiScenario1Config] = None,
    seed: Optional[int] = None,
    schedule_floor: Optional[Tuple[int, int]] = None,
    inject_violation_round: Optional[int] = None,
) -> ScenarioResult:
    """
    Contention-window adaptation after a second client joins.

    Args:
        config: Scenario config (config/wifi_scenario1.json when omitted)
        seed: Overrides the world seed
        schedule_floor: Truncate the CW schedule at this step
        inject_violation_round: Round at which the joining client's requirement becomes unmeetable
    """
    config = config or load_scenario_config(SCENARIO1_CONFIG, WifiScenario1Config)
    if seed is not None:
        config = config.model_copy(update={"world": config.world.model_copy(update={"seed": seed})})
    schedule = _truncate_schedule(config.schedule, schedule_floor)

    clock = SimClock()
    planner = WifiQosPlanner(schedule, config.requirement_s, target=config.cw_client)
    system = _WifiSystem(config.world, planner, clock)
    for agent in system.agents:
        agent.start()

    rounds = 0
    quiet = 0
    try:
        for r in range(1, config.max_rounds + 1):
            if r == config.join_round:
                system.world.set_active(config.joining_client, True)
                system.timeline.add("client_joined", device_id=config.joining_client)
            if r == inject_violation_round:
                planner.set_requirement(config.joining_client, 0.0)
                system.timeline.add("requirement_violated", device_id=config.joining_client)
            record = await system.step()
            rounds = r
            quiet = quiet + 1 if r >= config.join_round and not record.dispatched else 0
            if quiet >= config.settle_rounds and planner.inflight is None:
                break
            clock.advance(config.round_period_s)
    finally:
        for agent in system.agents:
            await agent.stop()

    cw_rows = system.rows_for(config.cw_client)
    final = {row["device_id"]: row for row in system.rows if row["round"] == rounds}
    final_cw = (final[config.cw_client]["log_cw_min"], final[config.cw_client]["log_cw_max"])
    final_upload = {
        device_id: row["upload_time_s"] for device_id, row in final.items() if row["active"]
    }
    converged = all(
        upload is not None and upload <= planner.requirement(device_id)
        for device_id, upload in final_upload.items()
    )
    alone = [row for row in cw_rows if row["round"] < config.join_round]
    joined = system.rows_for(config.cw_client, config.join_round)

    checks = {
        "alone_meets_requirement": bool(alone)
        and all(row["upload_time_s"] <= config.requirement_s for row in alone),
        "violated_after_join": bool(joined) and joined[0]["upload_time_s"] > config.requirement_s,
    }
    if inject_violation_round is None:
        checks["converged"] = converged
        checks["final_cw_is_schedule_floor"] = final_cw == schedule[-1]
        sweep = sweep_cw_schedule(
            config.world, schedule, config.cw_client, active=[c.device_id for c in config.world.clients]
        )
        checks["upload_time_non_increasing_over_schedule"] = is_non_increasing(sweep, config.cw_client)
    else:
        checks["rolled_back_one_step"] = any(kind == "rollback" for kind, _ in planner.events)

    summary = {
        "rounds": rounds,
        "requirement_s": config.requirement_s,
        "final_cw": list(final_cw),
        "final_upload_time_s": final_upload,
        "converged": converged,
        "cw_steps": [[kind, list(step)] for kind, step in planner.events],
        "rollbacks": [list(step) for kind, step in planner.events if kind == "rollback"],
    }
    if not converged and inject_violation_round is None:
        logger.warning(
            f"Scenario 1 did not converge: CW {final_cw}, upload times {final_upload}"
        )
    return system.result("wifi-scenario-1", checks, summary)


async def run_wifi_scenario2(
    config: Optional[WifiScenario2Config] = None,
    seed: Optional[int] = None,
    interference: bool = True,
) -> ScenarioResult:
    """Band switching under interference; interference=False keeps the channel clean."""
    config = config or load_scenario_config(SCENARIO2_CONFIG, WifiScenario2Config)
    if seed is not None:
        config = config.model_copy(update={"world": config.world.model_copy(update={"seed": seed})})
    on_round = config.interference_on_round if interference else None
    off_round = config.interference_off_round if interference else None

    clock = SimClock()
    planner = WifiInterferencePlanner(config.per_threshold, force_devices=config.force_switch)
    system = _WifiSystem(config.world, planner, clock)
    for agent in system.agents:
        agent.start()

    dispatched = 0
    rounds = 0
    try:
        for r in range(1, config.max_rounds + 1):
            if r == on_round:
                system.world.set_interference(True)
                system.timeline.add("interference_on")
            if r == off_round:
                system.world.set_interference(False)
                system.timeline.add("interference_off")
            record = await system.step()
            dispatched += len(record.dispatched)
            rounds = r
            clock.advance(config.round_period_s)
    finally:
        for agent in system.agents:
            await agent.stop()

    clients = {c.device_id: c for c in config.world.clients}
    final = {row["device_id"]: row for row in system.rows if row["round"] == rounds}
    checks: Dict[str, bool] = {}
    if on_round is None:
        checks["no_subtasks_dispatched"] = dispatched == 0
    else:
        hit = {row["device_id"]: row for row in system.rows if row["round"] == on_round}
        checks["per_above_threshold_under_interference"] = bool(hit) and all(
            row["per"] > config.per_threshold for row in hit.values()
        )
        sensing = [d for d, c in clients.items() if c.can_sense_interference]
        checks["interference_reported_by_sensing_client"] = bool(sensing) and all(
            hit.get(d, {}).get("interference_detected") is True for d in sensing
        )
        switchable = [d for d, c in clients.items() if c.can_switch_band]
        checks["switchable_clients_on_5ghz"] = bool(switchable) and all(
            final[d]["band"] == Band.BAND_5.value
            and abs(final[d]["per"] - clients[d].base_per[Band.BAND_5]) <= PER_TOLERANCE
            for d in switchable
        )
        forced = [d for d in config.force_switch if d in clients and not clients[d].can_switch_band]
        if forced:
            checks["forced_switch_not_executable"] = all(
                any(
                    rec.function == "switch_band" and rec.final_status == CompletionStatus.NOT_EXECUTABLE
                    for rec in system.agent(d).history
                )
                for d in forced
            )
        if off_round is not None:
            checks["per_recovered_after_interference_off"] = all(
                row["per"] <= config.per_threshold
                for row in final.values()
                if row["band"] == Band.BAND_2_4.value
            )

    summary = {
        "rounds": rounds,
        "dispatched": dispatched,
        "final_per": {d: row["per"] for d, row in final.items()},
        "final_band": {d: row["band"] for d, row in final.items()},
        "outcomes": {d: [s.value for s in o] for d, o in planner.outcomes.items()},
    }
    return system.result("wifi-scenario-2", checks, summary)
