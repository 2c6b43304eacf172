"""Device handles that put the simulated worlds behind the agent's async call interface."""

import asyncio
from typing import Any, Dict

from app.sim.warehouse import WarehouseWorld
from app.sim.wifi import WifiWorld


class SimRobot:
    def __init__(self, world: WarehouseWorld, robot_id: str, action_latency_s: float = 0.0):
        self.world = world
        self.device_id = robot_id
        self.action_latency_s = action_latency_s
        self.calls: list = []
        world.add_robot(robot_id)

    async def call(self, function: str, args: Dict[str, Any]) -> Any:
        self.calls.append((function, dict(args)))
        if self.action_latency_s:
            await asyncio.sleep(self.action_latency_s)
        return self.world.robot_call(self.device_id, function, args)

    def attributes(self) -> Dict[str, Any]:
        return self.world.attributes(self.device_id)


class SimWifiClient:
    def __init__(self, world: WifiWorld, client_id: str):
        self.world = world
        self.device_id = client_id
        self.calls: list = []

    async def call(self, function: str, args: Dict[str, Any]) -> Any:
        self.calls.append((function, dict(args)))
        return self.world.wifi_call(self.device_id, function, args)

    def attributes(self) -> Dict[str, Any]:
        return self.world.attributes(self.device_id)
