"""
Warehouse world: N shelves, N robots, a seeded vacancy map.

Each shelf has ten positions; each position is vacant with probability 0.3,
drawn once from the seed.
"""

import logging
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np

from app.core.errors import DeviceDispatchError, DevicePreconditionError
from app.schemas.corpus import ApiParameter, DeviceApiProfile

logger = logging.getLogger(__name__)

POSITIONS_PER_SHELF = 10
VACANCY_P = 0.3
BASE = "base"

Location = Union[str, int]


class WarehouseWorld:
    def __init__(
        self,
        n_shelves: int,
        seed: int = 0,
        positions_per_shelf: int = POSITIONS_PER_SHELF,
        vacancy_p: float = VACANCY_P,
    ):
        if n_shelves < 1:
            raise ValueError("a warehouse needs at least one shelf")
        self.n_shelves = n_shelves
        self.seed = seed
        rng = np.random.default_rng(seed)
        draws = rng.random((n_shelves, positions_per_shelf)) < vacancy_p
        self.vacancy: Dict[int, List[int]] = {
            shelf: [int(p) + 1 for p in np.flatnonzero(draws[shelf - 1])]
            for shelf in range(1, n_shelves + 1)
        }
        self.robot_positions: Dict[str, Location] = {}
        self.battery: Dict[str, float] = {}
        self.activity: Dict[str, str] = {}
        self._images = 0

    def add_robot(self, robot_id: str) -> None:
        self.robot_positions[robot_id] = BASE
        self.battery[robot_id] = 100.0
        self.activity[robot_id] = "idle"

    def _check_shelf(self, shelf_id: int) -> int:
        shelf_id = int(shelf_id)
        if not 1 <= shelf_id <= self.n_shelves:
            raise DevicePreconditionError(f"shelf {shelf_id} does not exist (1..{self.n_shelves})")
        return shelf_id

    def robot_call(self, robot_id: str, function: str, args: Mapping[str, Any]) -> Any:
        """Apply one robot API call to the world and return the device result."""
        if robot_id not in self.robot_positions:
            raise DeviceDispatchError(f"unknown robot {robot_id}")

        if function == "move_to_shelf":
            shelf_id = self._check_shelf(args["shelf_id"])
            self.robot_positions[robot_id] = shelf_id
            self.battery[robot_id] = max(0.0, self.battery[robot_id] - 0.5)
            self.activity[robot_id] = f"at shelf {shelf_id}"
            return shelf_id
        if function == "identify_vacancy_by_shelf":
            shelf_id = self._check_shelf(args["shelf_id"])
            if self.robot_positions[robot_id] != shelf_id:
                raise DevicePreconditionError(
                    f"{robot_id} is at {self.robot_positions[robot_id]}, not at shelf {shelf_id}"
                )
            self.activity[robot_id] = f"scanned shelf {shelf_id}"
            return list(self.vacancy[shelf_id])
        if function == "get_status":
            return {
                "battery": self.battery[robot_id],
                "location": self.robot_positions[robot_id],
                "activity": self.activity[robot_id],
            }
        if function == "capture_image":
            self._images += 1
            return f"img-{robot_id}-{self._images:04d}"
        if function == "return_to_base":
            self.robot_positions[robot_id] = BASE
            self.activity[robot_id] = "docked"
            return BASE
        if function == "move_to_coordinates":
            x, y = float(args["x"]), float(args["y"])
            self.robot_positions[robot_id] = f"({x:g}, {y:g})"
            self.activity[robot_id] = "on the floor"
            return [x, y]
        raise DeviceDispatchError(f"robot has no function {function}")

    def attributes(self, robot_id: str) -> Dict[str, Any]:
        return {
            "location": self.robot_positions[robot_id],
            "battery": self.battery[robot_id],
            "activity": self.activity[robot_id],
        }


def robot_profile(base: DeviceApiProfile, robot_id: str, n_shelves: int) -> DeviceApiProfile:
    """Retarget the shipped robot profile to one robot of an N-shelf world."""
    functions = []
    for function in base.functions:
        parameters = [
            ApiParameter(**{**p.model_dump(), "range": (1, n_shelves)}) if p.name == "shelf_id" else p
            for p in function.parameters
        ]
        functions.append(function.model_copy(update={"parameters": parameters}))
    return DeviceApiProfile(
        device_id=robot_id,
        device_type=base.device_type,
        functions=functions,
        version=base.version,
    )


def robot_ids(n: int, prefix: str = "robot") -> List[str]:
    return [f"{prefix}_{k}" for k in range(1, n + 1)]


def survey_matches_world(world: WarehouseWorld, vacancy: Mapping[int, Optional[List[int]]]) -> bool:
    return all(vacancy.get(shelf) == world.vacancy[shelf] for shelf in world.vacancy)
