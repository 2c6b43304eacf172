"""
Coordinator/agent message transport.

Wire format: one UTF-8 JSON object per LF-terminated line. Encoding is
canonical (fixed top-level key order, payload keys sorted, no whitespace) so
fixtures stay byte-stable.

Two transports share the same contract:
- InProcessTransport delivers messages between objects in one event loop
- tcp_transport (separate module) carries the same lines over TCP
"""

import asyncio
import json
import logging
from dataclasses import dataclass
from itertools import count
from typing import Any, Dict, Iterable, List, Mapping, Optional, Protocol, Set, Tuple, Union

from pydantic import ValidationError

from app.core.errors import FramingError, ProtocolError, TransportError
from app.core.m2m_log import M2MLog
from app.schemas.messages import DeviceReport, SubtaskSpec, WireMessage

logger = logging.getLogger(__name__)

MAX_LINE_BYTES = 1024 * 1024
COORDINATOR_ID = "coordinator"

_JSON_OPTS = {"separators": (",", ":"), "ensure_ascii": False, "sort_keys": True}


def _canonical(value: Any) -> str:
    return json.dumps(value, **_JSON_OPTS)


def encode(message: WireMessage) -> bytes:
    """Canonical single-line encoding, LF included."""
    parts = [f'"type":{_canonical(message.type.value)}']
    if message.round is not None:
        parts.append(f'"round":{_canonical(message.round)}')
    parts.append(f'"correlation_id":{_canonical(message.correlation_id)}')
    parts.append(f'"payload":{_canonical(message.payload)}')
    line = ("{" + ",".join(parts) + "}\n").encode("utf-8")
    if len(line) > MAX_LINE_BYTES:
        raise FramingError(f"encoded message is {len(line)} bytes, limit {MAX_LINE_BYTES}")
    return line


def decode(line: bytes) -> WireMessage:
    """
    Parse one line (with or without its LF).

    Raises:
        FramingError: Oversized or truncated line
        ProtocolError: Anything else that is not a valid message; carries the raw line
    """
    if len(line) > MAX_LINE_BYTES:
        raise FramingError(f"line of {len(line)} bytes exceeds {MAX_LINE_BYTES}", line[:256])
    body = line.rstrip(b"\r\n")
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ProtocolError(f"line is not UTF-8: {e}", line) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        if e.pos >= len(text.rstrip()) or e.msg.startswith("Unterminated string"):
            raise FramingError(f"truncated line: {e.msg}", line) from e
        raise ProtocolError(f"malformed JSON: {e.msg} at {e.pos}", line) from e
    if not isinstance(data, dict):
        raise ProtocolError("message must be a JSON object", line)
    if "type" not in data:
        raise ProtocolError("message has no type field", line)
    try:
        return WireMessage.model_validate(data)
    except ValidationError as e:
        raise ProtocolError(f"invalid message: {e.errors()[0]['msg']}", line) from e


class LineFramer:
    """
    Incremental splitter for a byte stream of encoded messages.

    feed() returns one entry per complete line: the decoded message, or the
    ProtocolError raised for that line. An oversized line is reported once
    and skipped up to its terminating LF.
    """

    def __init__(self, max_line_bytes: int = MAX_LINE_BYTES):
        self.max_line_bytes = max_line_bytes
        self._buffer = bytearray()
        self._discarding = False

    def feed(self, data: bytes) -> List[Union[WireMessage, ProtocolError]]:
        results: List[Union[WireMessage, ProtocolError]] = []
        self._buffer.extend(data)
        while True:
            newline = self._buffer.find(b"\n")
            if newline < 0:
                if not self._discarding and len(self._buffer) > self.max_line_bytes:
                    results.append(
                        FramingError(f"line exceeds {self.max_line_bytes} bytes", bytes(self._buffer[:256]))
                    )
                    self._discarding = True
                if self._discarding:
                    self._buffer.clear()
                break
            line = bytes(self._buffer[: newline + 1])
            del self._buffer[: newline + 1]
            if self._discarding:
                self._discarding = False
                continue
            if len(line) - 1 > self.max_line_bytes:
                results.append(FramingError(f"line exceeds {self.max_line_bytes} bytes", line[:256]))
                continue
            try:
                results.append(decode(line))
            except ProtocolError as e:
                logger.warning(f"Dropping bad line: {e}")
                results.append(e)
        return results

    @property
    def pending(self) -> int:
        return len(self._buffer)


@dataclass
class PollResult:
    ok: bool
    error: Optional[str] = None


class PollEndpoint(Protocol):
    async def send_poll(self, round: int) -> None: ...


async def broadcast_poll(
    endpoints: Mapping[str, PollEndpoint], round: int
) -> Dict[str, PollResult]:
    """Send one poll per endpoint concurrently; failures stay per endpoint."""
    names = list(endpoints)
    outcomes = await asyncio.gather(
        *(endpoints[name].send_poll(round) for name in names), return_exceptions=True
    )
    results = {}
    for name, outcome in zip(names, outcomes):
        if isinstance(outcome, BaseException):
            logger.warning(f"Poll {round} to {name} failed: {outcome}")
            results[name] = PollResult(ok=False, error=str(outcome) or type(outcome).__name__)
        else:
            results[name] = PollResult(ok=True)
    return results


class CoordinatorTransport(Protocol):
    """What the coordinator needs from any transport."""

    reports: "asyncio.Queue[Tuple[str, int, DeviceReport]]"

    def endpoints(self) -> List[str]: ...

    async def broadcast_poll(self, round: int) -> Dict[str, PollResult]: ...

    async def assign(self, device_id: str, subtask: SubtaskSpec) -> bool: ...


class _InProcessEndpoint:
    def __init__(self, transport: "InProcessTransport", device_id: str):
        self.transport = transport
        self.device_id = device_id

    async def send_poll(self, round: int) -> None:
        await self.transport._deliver_poll(self.device_id, round)


class InProcessTransport:
    """
    Same message contract as TCP, without sockets.

    Every message is encoded and decoded on the way through, so the codec is
    exercised. Silent endpoints receive messages but never answer; dead ones
    fail at send time.
    """

    def __init__(self, m2m: Optional[M2MLog] = None, report_delay_s: float = 0.0):
        self.m2m = m2m
        self.report_delay_s = report_delay_s
        self.reports: "asyncio.Queue[Tuple[str, int, DeviceReport]]" = asyncio.Queue()
        self._agents: Dict[str, Any] = {}
        self.silent: Set[str] = set()
        self.dead: Set[str] = set()
        self.delays: Dict[str, float] = {}
        self.sent_messages = 0
        self._ids = count(1)
        self._pending: Set[asyncio.Task] = set()

    def register(self, agent: Any) -> None:
        self._agents[agent.device_id] = agent

    def unregister(self, device_id: str) -> None:
        self._agents.pop(device_id, None)

    def endpoints(self) -> List[str]:
        return list(self._agents)

    def agents(self) -> Iterable[Any]:
        return self._agents.values()

    def _wire(self, sender: str, recipient: str, message: WireMessage) -> WireMessage:
        delivered = decode(encode(message))
        self.sent_messages += 1
        if self.m2m is not None:
            self.m2m.message(sender, recipient, delivered)
        return delivered

    async def broadcast_poll(self, round: int) -> Dict[str, PollResult]:
        endpoints = {device_id: _InProcessEndpoint(self, device_id) for device_id in self._agents}
        return await broadcast_poll(endpoints, round)

    async def _deliver_poll(self, device_id: str, round: int) -> None:
        if device_id in self.dead:
            raise TransportError(f"{device_id} is unreachable")
        poll = self._wire(COORDINATOR_ID, device_id, WireMessage.poll(round, f"poll-{round}"))
        if device_id in self.silent:
            return
        report = self._agents[device_id].handle_poll(poll.round)
        delay = self.delays.get(device_id, self.report_delay_s)
        if delay > 0:
            task = asyncio.create_task(self._send_report_later(device_id, poll.round, report, delay))
            self._pending.add(task)
            task.add_done_callback(self._pending.discard)
        else:
            self._send_report(device_id, poll.round, report)

    async def _send_report_later(self, device_id: str, round: int, report: DeviceReport, delay: float) -> None:
        await asyncio.sleep(delay)
        self._send_report(device_id, round, report)

    def _send_report(self, device_id: str, round: int, report: DeviceReport) -> None:
        message = self._wire(device_id, COORDINATOR_ID, WireMessage.report(round, report, f"report-{round}"))
        self.reports.put_nowait((device_id, message.round, message.device_report()))

    async def assign(self, device_id: str, subtask: SubtaskSpec) -> bool:
        if device_id in self.dead or device_id not in self._agents:
            raise TransportError(f"{device_id} is unreachable")
        correlation_id = f"assign-{next(self._ids)}"
        message = self._wire(COORDINATOR_ID, device_id, WireMessage.assign(subtask, correlation_id))
        try:
            self._agents[device_id].handle_assign(message.subtask())
            ack = WireMessage.ack(correlation_id)
            accepted = True
        except Exception as e:
            ack = WireMessage.ack(correlation_id, accepted=False, detail=str(e))
            accepted = False
        if device_id not in self.silent:
            self._wire(device_id, COORDINATOR_ID, ack)
        return accepted
