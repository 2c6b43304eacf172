"""
Calibration oracle for the WiFi QoS scenario.

Sweeps the CW-configurable client down a contention-window schedule and
reports every client's upload time at each step, so the recorded defaults
can be checked against the requirement.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel

from app.sim.wifi import WifiWorld, WifiWorldConfig

logger = logging.getLogger(__name__)


class CalibrationStep(BaseModel):
    log_cw_min: int
    log_cw_max: int
    upload_time_s: Dict[str, float]
    completed: Dict[str, bool]


def sweep_cw_schedule(
    config: WifiWorldConfig,
    schedule: Sequence[Tuple[int, int]],
    client_id: str,
    active: Optional[Sequence[str]] = None,
) -> List[CalibrationStep]:
    """Upload times of all active clients at each CW step of `client_id`."""
    world = WifiWorld(config)
    if active is not None:
        for device_id in world.clients:
            world.set_active(device_id, device_id in active)
    steps = []
    for log_cw_min, log_cw_max in schedule:
        world.wifi_call(
            client_id,
            "set_contention_window",
            {"log_cw_min": log_cw_min, "log_cw_max": log_cw_max},
        )
        metrics = world.simulate_upload()
        steps.append(
            CalibrationStep(
                log_cw_min=log_cw_min,
                log_cw_max=log_cw_max,
                upload_time_s={d: m.upload_time_s for d, m in metrics.items()},
                completed={d: m.completed for d, m in metrics.items()},
            )
        )
        logger.info(
            "CW (%d,%d): %s",
            log_cw_min,
            log_cw_max,
            ", ".join(f"{d}={m.upload_time_s:.2f}s" for d, m in metrics.items()),
        )
    return steps


def find_crossing(
    sweep: Sequence[CalibrationStep],
    requirement_s: float,
    client_ids: Optional[Sequence[str]] = None,
) -> Optional[CalibrationStep]:
    """First step at which every listed client meets the requirement."""
    for step in sweep:
        ids = client_ids or list(step.upload_time_s)
        if all(step.upload_time_s[d] <= requirement_s for d in ids):
            return step
    return None


def is_non_increasing(sweep: Sequence[CalibrationStep], client_id: str) -> bool:
    times = [step.upload_time_s[client_id] for step in sweep]
    return all(later <= earlier for earlier, later in zip(times, times[1:]))
