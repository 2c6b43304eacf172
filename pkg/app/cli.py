"""
Command-line entry point.

    llmind warehouse --n 4 --mode dist --latency-ms 200 --fail-p 0 --trials 1 --out runs/wh
    llmind wifi --scenario 1 --seed 7 --out runs/s1 --check
    llmind instruct --text "Please check if there are vacant positions on the shelves."
    llmind coordinator --bind 127.0.0.1:7707
    llmind agent --profile robot.json --connect 127.0.0.1:7707
    llmind dataset gen --scale desk --seed 0 --out data/
    llmind dataset eval --extractor ref --test data/test.jsonl
    llmind calibrate
"""

import argparse
import asyncio
import logging
import sys
from typing import List, Optional, Sequence, Tuple

import pandas as pd

from app.core.agent_runtime import DeviceAgent
from app.core.api_corpus import load_profile_file
from app.core.coordinator import Coordinator, CoordinatorConfig, OrchestrationMode
from app.core.dataset_gen import DatasetSpec, evaluate_extractor, failures_to_csv, generate_dataset
from app.core.errors import LLMindError
from app.core.extraction import ExtractorConfig, build_extractor
from app.core.m2m_log import M2MLog
from app.core.planners import PlannerConfig, build_planner
from app.core.serializers import write_run_outputs
from app.core.tcp_transport import AgentClient, TcpCoordinatorTransport, parse_address, resolve_bind
from app.scenarios.common import load_scenario_config
from app.scenarios.instruct import instruct
from app.scenarios.warehouse import WarehouseConfig, run_scaling, run_warehouse
from app.scenarios.wifi import (
    SCENARIO1_CONFIG,
    SCENARIO2_CONFIG,
    WifiScenario1Config,
    WifiScenario2Config,
    run_wifi_scenario1,
    run_wifi_scenario2,
)
from app.schemas.scenario import ScenarioResult
from app.sim.calibration import find_crossing, sweep_cw_schedule
from app.sim.devices import SimRobot, SimWifiClient
from app.sim.warehouse import WarehouseWorld, robot_profile
from app.sim.wifi import WifiWorld

logger = logging.getLogger(__name__)

MODES = {"dist": OrchestrationMode.DISTRIBUTED, "central": OrchestrationMode.CENTRALIZED_BASELINE}
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def _pair(text: str) -> Tuple[int, int]:
    low, high = text.split(",")
    return int(low), int(high)


def _int_list(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _finish(result: ScenarioResult, out: Optional[str], check: bool) -> int:
    if out:
        write_run_outputs(result, out)
    print(f"{result.scenario_id}:")
    for key, value in result.summary.items():
        print(f"  {key}: {value}")
    for name, ok in result.checks.items():
        print(f"  [{'pass' if ok else 'FAIL'}] {name}")
    if check and not result.passed:
        logger.error(f"Failed checks: {', '.join(result.failed_checks())}")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_warehouse(args: argparse.Namespace) -> int:
    config = load_scenario_config(args.config, WarehouseConfig)
    overrides = {
        "n": args.n,
        "mode": MODES[args.mode] if args.mode else None,
        "latency_s": args.latency_ms / 1000 if args.latency_ms is not None else None,
        "fail_p": args.fail_p,
        "trials": args.trials,
        "seed": args.seed,
    }
    config = config.model_copy(update={k: v for k, v in overrides.items() if v is not None})
    if args.sweep:
        result = asyncio.run(run_scaling(config, _int_list(args.sweep)))
    else:
        result = asyncio.run(run_warehouse(config))
    return _finish(result, args.out, args.check)


def cmd_wifi(args: argparse.Namespace) -> int:
    if args.scenario == 1:
        config = load_scenario_config(args.config or SCENARIO1_CONFIG, WifiScenario1Config)
        result = asyncio.run(
            run_wifi_scenario1(
                config,
                seed=args.seed,
                schedule_floor=_pair(args.floor) if args.floor else None,
                inject_violation_round=args.inject_violation_round,
            )
        )
    else:
        config = load_scenario_config(args.config or SCENARIO2_CONFIG, WifiScenario2Config)
        result = asyncio.run(
            run_wifi_scenario2(config, seed=args.seed, interference=not args.no_interference)
        )
    return _finish(result, args.out, args.check)


def cmd_instruct(args: argparse.Namespace) -> int:
    result = asyncio.run(
        instruct(args.text, n=args.n, seed=args.seed, round_budget=args.round_budget, echo=print)
    )
    for warning in result.warnings:
        print(f"WARNING: {warning}")
    return EXIT_OK if result.completed else EXIT_CHECK_FAILED


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = load_scenario_config(args.config, WifiScenario1Config)
    sweep = sweep_cw_schedule(
        config.world, config.schedule, config.cw_client, active=[c.device_id for c in config.world.clients]
    )
    df = pd.DataFrame(
        [{"log_cw_min": s.log_cw_min, "log_cw_max": s.log_cw_max, **s.upload_time_s} for s in sweep]
    )
    print(df.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    crossing = find_crossing(sweep, config.requirement_s)
    if crossing is None:
        print(f"No schedule step meets {config.requirement_s}s for every client")
        return EXIT_CHECK_FAILED
    print(f"First step meeting {config.requirement_s}s: ({crossing.log_cw_min}, {crossing.log_cw_max})")
    return EXIT_OK


async def _serve_coordinator(args: argparse.Namespace) -> None:
    import uvicorn

    from app.main import create_app

    m2m = M2MLog(maxlen=100000)
    transport = TcpCoordinatorTransport(m2m)
    host, port = resolve_bind(args.bind)
    await transport.start(host, port)
    planner = build_planner(PlannerConfig(kind=args.planner, url=args.planner_url))
    coordinator = Coordinator(
        transport,
        planner,
        CoordinatorConfig(poll_period_s=args.poll_period, report_timeout_s=args.poll_period / 2),
        m2m,
    )
    server = uvicorn.Server(
        uvicorn.Config(create_app(coordinator), host=args.http_host, port=args.http_port, log_level="info")
    )
    try:
        await asyncio.gather(coordinator.run(), server.serve())
    finally:
        coordinator.stop()
        await transport.close()


def cmd_coordinator(args: argparse.Namespace) -> int:
    asyncio.run(_serve_coordinator(args))
    return EXIT_OK


def _sim_device(args: argparse.Namespace):
    profile = load_profile_file(args.profile)
    if args.device == "sim-robot":
        robot_id = args.device_id or "robot_1"
        world = WarehouseWorld(args.shelves, seed=args.seed)
        return robot_profile(profile, robot_id, args.shelves), SimRobot(world, robot_id)
    config = load_scenario_config(SCENARIO1_CONFIG, WifiScenario1Config)
    world = WifiWorld(config.world)
    world.set_active(profile.device_id, True)
    return profile, SimWifiClient(world, profile.device_id)


async def _serve_agent(args: argparse.Namespace) -> None:
    profile, device = _sim_device(args)
    agent = DeviceAgent(profile, device, m2m=M2MLog(maxlen=10000))
    host, port = parse_address(args.connect)
    client = AgentClient(agent, host, port)
    await client.serve()


def cmd_agent(args: argparse.Namespace) -> int:
    asyncio.run(_serve_agent(args))
    return EXIT_OK


def cmd_dataset_gen(args: argparse.Namespace) -> int:
    spec = DatasetSpec.scale(args.scale, seed=args.seed)
    if args.test_fraction is not None:
        spec = spec.model_copy(update={"test_fraction": args.test_fraction})
    files = generate_dataset(spec, args.out)
    print(f"train: {files.train} ({files.train_count} pairs)")
    print(f"test: {files.test} ({files.test_count} pairs)")
    print(f"manifest: {files.manifest}; rejected draws: {files.rejected}")
    return EXIT_OK


def cmd_dataset_eval(args: argparse.Namespace) -> int:
    extractor = build_extractor(ExtractorConfig(kind=args.extractor, url=args.url))
    report = evaluate_extractor(extractor, args.test)
    print(f"accuracy: {report.accuracy:.4f} ({report.correct}/{report.total})")
    for arity, accuracy in report.per_arity.items():
        print(f"  arity {arity}: {accuracy:.4f}")
    if args.failures_csv:
        path = failures_to_csv(report, args.failures_csv)
        print(f"failures written to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llmind", description="Distributed IoT task orchestration")
    parser.add_argument("--log-level", default="WARNING", help="root logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    wh = sub.add_parser("warehouse", help="warehouse benchmark")
    wh.add_argument("--config", default="warehouse.json")
    wh.add_argument("--n", type=int)
    wh.add_argument("--mode", choices=sorted(MODES))
    wh.add_argument("--latency-ms", type=float)
    wh.add_argument("--fail-p", type=float)
    wh.add_argument("--trials", type=int)
    wh.add_argument("--seed", type=int)
    wh.add_argument("--sweep", help="comma-separated N values; runs both modes at each")
    wh.add_argument("--out")
    wh.add_argument("--check", action="store_true")
    wh.set_defaults(func=cmd_warehouse)

    wifi = sub.add_parser("wifi", help="WiFi QoS scenarios")
    wifi.add_argument("--scenario", type=int, choices=[1, 2], required=True)
    wifi.add_argument("--config")
    wifi.add_argument("--seed", type=int)
    wifi.add_argument("--floor", help="scenario 1: last CW step, e.g. 6,9")
    wifi.add_argument("--inject-violation-round", type=int)
    wifi.add_argument("--no-interference", action="store_true")
    wifi.add_argument("--out")
    wifi.add_argument("--check", action="store_true")
    wifi.set_defaults(func=cmd_wifi)

    ins = sub.add_parser("instruct", help="run one instruction on an embedded warehouse")
    ins.add_argument("--text", required=True)
    ins.add_argument("--n", type=int, default=2)
    ins.add_argument("--seed", type=int, default=0)
    ins.add_argument("--round-budget", type=int, default=20)
    ins.set_defaults(func=cmd_instruct)

    cal = sub.add_parser("calibrate", help="sweep the CW schedule of scenario 1")
    cal.add_argument("--config", default=SCENARIO1_CONFIG)
    cal.set_defaults(func=cmd_calibrate)

    co = sub.add_parser("coordinator", help="TCP coordinator with the operator HTTP API")
    co.add_argument("--bind", help="host:port for agents (env LLMIND_BIND, default 127.0.0.1:7707)")
    co.add_argument("--http-host", default="127.0.0.1")
    co.add_argument("--http-port", type=int, default=8000)
    co.add_argument("--planner", default="warehouse", choices=["warehouse", "wifi_qos", "wifi_interference", "remote"])
    co.add_argument("--planner-url")
    co.add_argument("--poll-period", type=float, default=1.0)
    co.set_defaults(func=cmd_coordinator)

    ag = sub.add_parser("agent", help="device agent over TCP against a simulated device")
    ag.add_argument("--profile", required=True)
    ag.add_argument("--connect", required=True, help="coordinator host:port")
    ag.add_argument("--device", default="sim-robot", choices=["sim-robot", "sim-wifi-sdr", "sim-wifi-commercial"])
    ag.add_argument("--device-id")
    ag.add_argument("--shelves", type=int, default=4)
    ag.add_argument("--seed", type=int, default=0)
    ag.set_defaults(func=cmd_agent)

    ds = sub.add_parser("dataset", help="subtask-argument dataset")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    gen = ds_sub.add_parser("gen")
    gen.add_argument("--scale", choices=["full", "desk"], default="desk")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--test-fraction", type=float)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_dataset_gen)
    ev = ds_sub.add_parser("eval")
    ev.add_argument("--extractor", choices=["ref", "remote"], default="ref")
    ev.add_argument("--url")
    ev.add_argument("--test", required=True)
    ev.add_argument("--failures-csv")
    ev.set_defaults(func=cmd_dataset_eval)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.WARNING),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        return args.func(args)
    except LLMindError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
