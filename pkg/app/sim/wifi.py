"""
WiFi world with a simplified contention model.

Contention: all active clients stay backlogged until every client has
delivered one file. Each cycle every client draws an integer backoff uniformly
from [0, 2^log_cw_min]; the smallest draw (random tie-break) transmits one
packet, occupying backoff * slot_time + payload / rate + overhead. The packet
fails with the client's retransmission rate and is then not credited. A
client that cannot finish before the horizon reports the horizon as its
upload time.

log_cw_max is carried as configuration state only.
"""

import logging
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import DeviceCapabilityError, DeviceDispatchError, DevicePreconditionError

logger = logging.getLogger(__name__)

MAX_CW_EXPONENT = 15
BATCH_CYCLES = 65536


class Band(str, Enum):
    BAND_2_4 = "band_2_4"
    BAND_5 = "band_5"


class WifiClientState(BaseModel):
    model_config = ConfigDict(validate_assignment=True)

    device_id: str
    profile: str = ""
    band: Band = Band.BAND_2_4
    log_cw_min: int = Field(default=10, ge=0, le=MAX_CW_EXPONENT)
    log_cw_max: int = Field(default=15, ge=0, le=MAX_CW_EXPONENT)
    nominal_rate_bps: float = Field(gt=0)
    retx_rate: float = Field(default=0.0, ge=0, le=1)
    base_per: Dict[Band, float] = Field(default_factory=lambda: {Band.BAND_2_4: 0.0, Band.BAND_5: 0.0})
    mcs_index: int = Field(default=0, ge=0)
    can_switch_band: bool = True
    can_sense_interference: bool = False
    cw_configurable: bool = False
    active: bool = True
    known_aps: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "WifiClientState":
        if self.log_cw_min > self.log_cw_max:
            raise ValueError(f"{self.device_id}: log_cw_min {self.log_cw_min} > log_cw_max {self.log_cw_max}")
        for band, per in self.base_per.items():
            if not 0.0 <= per <= 1.0:
                raise ValueError(f"{self.device_id}: base PER for {band.value} outside [0, 1]")
        return self


class WifiWorldConfig(BaseModel):
    clients: List[WifiClientState]
    interference_on: bool = False
    interference_per_add: float = Field(default=0.25, ge=0, le=1)
    slot_time_s: float = Field(default=9e-6, gt=0)
    payload_bits: int = Field(default=12000, gt=0)
    overhead_s: float = Field(default=100e-6, ge=0)
    file_size_bits: float = Field(default=32e6, gt=0)
    horizon_s: float = Field(default=600.0, gt=0)
    seed: int = 0


class UploadMetrics(BaseModel):
    upload_time_s: float
    airtime_share: float
    per: float
    completed: bool


def simulate_contention(
    rates_bps: np.ndarray,
    retx_rates: np.ndarray,
    log_cw_min: np.ndarray,
    config: WifiWorldConfig,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Run contention cycles until every client delivered one file or the horizon.

    Returns:
        (upload times, completed flags, airtime shares), one entry per client
    """
    n = len(rates_bps)
    airtime = config.payload_bits / rates_bps + config.overhead_s
    windows = np.power(2, log_cw_min).astype(np.int64)
    needed = math.ceil(config.file_size_bits / config.payload_bits)
    clients = np.arange(n)

    credited = np.zeros(n, dtype=np.int64)
    done_at = np.full(n, np.nan)
    air = np.zeros(n)
    t = 0.0
    while True:
        draws = rng.integers(0, windows + 1, size=(BATCH_CYCLES, n))
        winner = (draws + rng.random((BATCH_CYCLES, n))).argmin(axis=1)
        backoff = draws[np.arange(BATCH_CYCLES), winner]
        delivered = rng.random(BATCH_CYCLES) >= retx_rates[winner]
        ends = t + np.cumsum(backoff * config.slot_time_s + airtime[winner])
        cum_ok = credited + np.cumsum((winner[:, None] == clients) & delivered[:, None], axis=0)

        finished_here = []
        for i in range(n):
            if np.isnan(done_at[i]):
                hit = np.flatnonzero(cum_ok[:, i] >= needed)
                if hit.size:
                    done_at[i] = ends[hit[0]]
                    finished_here.append(hit[0])

        stop: Optional[int] = None
        if not np.isnan(done_at).any():
            stop = max(finished_here)
        past = np.flatnonzero(ends >= config.horizon_s)
        if past.size and (stop is None or past[0] < stop):
            stop = int(past[0])

        last = BATCH_CYCLES if stop is None else stop + 1
        air += np.bincount(winner[:last], weights=airtime[winner[:last]], minlength=n)
        if stop is not None:
            break
        t = float(ends[-1])
        credited = cum_ok[-1]

    completed = ~np.isnan(done_at) & (np.nan_to_num(done_at, nan=np.inf) <= config.horizon_s)
    upload = np.where(completed, done_at, config.horizon_s)
    shares = air / air.sum() if air.sum() > 0 else np.zeros(n)
    return upload, completed, shares


class WifiWorld:
    def __init__(self, config: WifiWorldConfig):
        self.config = config
        self.clients: Dict[str, WifiClientState] = {
            c.device_id: c.model_copy(deep=True) for c in config.clients
        }
        self.interference_on = config.interference_on
        self.sessions: Dict[str, bool] = {device_id: False for device_id in self.clients}
        self.tx_log: List[str] = []
        self._cache: Dict[Tuple, Dict[str, UploadMetrics]] = {}

    def _client(self, client_id: str) -> WifiClientState:
        try:
            return self.clients[client_id]
        except KeyError:
            raise DeviceDispatchError(f"unknown WiFi client {client_id}") from None

    def set_active(self, client_id: str, active: bool) -> None:
        self._client(client_id).active = active
        logger.info(f"{client_id} {'joined' if active else 'left'} the network")

    def set_interference(self, on: bool) -> None:
        self.interference_on = on
        logger.info(f"Interference {'on' if on else 'off'}")

    def compute_per(self, client_id: str) -> float:
        client = self._client(client_id)
        per = client.base_per.get(client.band, 0.0)
        if self.interference_on and client.band == Band.BAND_2_4:
            per += self.config.interference_per_add
        return min(1.0, per)

    def simulate_upload(self) -> Dict[str, UploadMetrics]:
        """Per active client upload time, airtime share and PER; cached per state."""
        active = [c for c in self.clients.values() if c.active]
        if not active:
            return {}
        key = tuple(
            (c.device_id, c.log_cw_min, c.nominal_rate_bps, c.retx_rate) for c in active
        )
        if key not in self._cache:
            upload, completed, shares = simulate_contention(
                np.array([c.nominal_rate_bps for c in active], dtype=float),
                np.array([c.retx_rate for c in active], dtype=float),
                np.array([c.log_cw_min for c in active]),
                self.config,
                np.random.default_rng(self.config.seed),
            )
            self._cache[key] = {
                c.device_id: UploadMetrics(
                    upload_time_s=float(upload[i]),
                    airtime_share=float(shares[i]),
                    per=0.0,
                    completed=bool(completed[i]),
                )
                for i, c in enumerate(active)
            }
        return {
            device_id: metrics.model_copy(update={"per": self.compute_per(device_id)})
            for device_id, metrics in self._cache[key].items()
        }

    def attributes(self, client_id: str) -> Dict[str, Any]:
        client = self._client(client_id)
        attributes: Dict[str, Any] = {
            "active": client.active,
            "band": client.band.value,
            "per": self.compute_per(client_id),
            "mcs_index": client.mcs_index,
            "log_cw_min": client.log_cw_min,
            "log_cw_max": client.log_cw_max,
            "cw_configurable": client.cw_configurable,
            "band_switch_without_reboot": client.can_switch_band,
        }
        if client.can_sense_interference:
            attributes["interference_detected"] = self.interference_on
        if client.active:
            metrics = self.simulate_upload()[client_id]
            attributes["upload_time_s"] = metrics.upload_time_s
            attributes["airtime_share"] = metrics.airtime_share
            attributes["upload_completed"] = metrics.completed
        return attributes

    def wifi_call(self, client_id: str, function: str, args: Dict[str, Any]) -> Any:
        client = self._client(client_id)
        if function == "open_session":
            self.sessions[client_id] = True
            return "session open"
        if function == "close_session":
            self.sessions[client_id] = False
            self.tx_log.append(
                f"{client_id} cw=({client.log_cw_min},{client.log_cw_max}) band={client.band.value}"
            )
            return "session closed"
        if function == "get_known_aps":
            return list(client.known_aps)
        if function == "get_link_metrics":
            return self.attributes(client_id)
        if function == "sense_channel":
            if not client.can_sense_interference:
                raise DeviceCapabilityError(f"{client_id} cannot sense the channel")
            return {
                "interference_detected": self.interference_on,
                "band": client.band.value,
                "per": self.compute_per(client_id),
            }
        if function == "set_contention_window":
            if not client.cw_configurable:
                raise DeviceCapabilityError(f"{client_id} does not expose its contention window")
            low, high = int(args["log_cw_min"]), int(args["log_cw_max"])
            if not 0 <= low <= high <= MAX_CW_EXPONENT:
                raise DevicePreconditionError(f"invalid contention window ({low}, {high})")
            client.log_cw_max = MAX_CW_EXPONENT
            client.log_cw_min = low
            client.log_cw_max = high
            logger.info(f"{client_id} contention window set to ({low}, {high})")
            return [low, high]
        if function == "switch_band":
            if not client.can_switch_band:
                raise DeviceCapabilityError(f"{client_id} cannot switch band without a reboot")
            target = Band.BAND_5 if float(args["band_ghz"]) >= 4.0 else Band.BAND_2_4
            client.band = target
            logger.info(f"{client_id} switched to {target.value}")
            return target.value
        raise DeviceDispatchError(f"WiFi client has no function {function}")
