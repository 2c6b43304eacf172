"""
TCP transport for live deployments.

The coordinator listens; each agent connects, announces itself with an
unsolicited round-0 report carrying its full API profile, then answers polls
and acknowledges assignments on the same connection. Lines use the codec in
app.core.transport; writes on one connection are serialized.
"""

import asyncio
import logging
import os
from typing import AsyncIterator, Dict, List, Optional, Tuple, Union

from app.core.errors import LLMindError, ProtocolError, TransportError
from app.core.m2m_log import M2MLog
from app.core.transport import (
    COORDINATOR_ID,
    LineFramer,
    PollResult,
    broadcast_poll,
    encode,
)
from app.schemas.messages import DeviceReport, MessageType, SubtaskSpec, WireMessage

logger = logging.getLogger(__name__)

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 7707
BIND_ENV = "LLMIND_BIND"
READ_CHUNK = 65536


def parse_address(value: str, default_host: str = DEFAULT_HOST) -> Tuple[str, int]:
    """"host:port", ":port" or "port" -> (host, port)."""
    host, _, port = value.rpartition(":")
    try:
        return host or default_host, int(port)
    except ValueError:
        raise TransportError(f"invalid address '{value}' (expected host:port)") from None


def resolve_bind(value: Optional[str] = None) -> Tuple[str, int]:
    return parse_address(value or os.environ.get(BIND_ENV) or f"{DEFAULT_HOST}:{DEFAULT_PORT}")


class _Connection:
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer
        self.framer = LineFramer()
        self._lock = asyncio.Lock()

    @property
    def peer(self) -> str:
        peer = self.writer.get_extra_info("peername")
        return f"{peer[0]}:{peer[1]}" if peer else "?"

    async def send(self, message: WireMessage) -> None:
        line = encode(message)
        try:
            async with self._lock:
                self.writer.write(line)
                await self.writer.drain()
        except (ConnectionError, OSError) as e:
            raise TransportError(f"send to {self.peer} failed: {e}") from e

    async def messages(self) -> AsyncIterator[Union[WireMessage, ProtocolError]]:
        while True:
            try:
                data = await self.reader.read(READ_CHUNK)
            except (ConnectionError, OSError) as e:
                logger.info(f"Connection {self.peer} lost: {e}")
                return
            if not data:
                return
            for item in self.framer.feed(data):
                yield item

    async def close(self) -> None:
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


class _TcpEndpoint:
    def __init__(self, transport: "TcpCoordinatorTransport", device_id: str):
        self.transport = transport
        self.device_id = device_id

    async def send_poll(self, round: int) -> None:
        await self.transport._send(self.device_id, WireMessage.poll(round, f"poll-{round}"))


class TcpCoordinatorTransport:
    """Coordinator side: accepts agent connections and implements CoordinatorTransport."""

    def __init__(self, m2m: Optional[M2MLog] = None):
        self.m2m = m2m
        self.reports: "asyncio.Queue[Tuple[str, int, DeviceReport]]" = asyncio.Queue()
        self._connections: Dict[str, _Connection] = {}
        self._server: Optional[asyncio.AbstractServer] = None
        self._assign_ids = 0

    async def start(self, host: str = DEFAULT_HOST, port: int = DEFAULT_PORT) -> int:
        """Start listening; returns the bound port (useful with port 0)."""
        self._server = await asyncio.start_server(self._handle, host, port)
        bound = self._server.sockets[0].getsockname()[1]
        logger.info(f"Coordinator listening on {host}:{bound}")
        return bound

    def endpoints(self) -> List[str]:
        return list(self._connections)

    async def _send(self, device_id: str, message: WireMessage) -> None:
        connection = self._connections.get(device_id)
        if connection is None:
            raise TransportError(f"{device_id} is not connected")
        await connection.send(message)
        if self.m2m is not None:
            self.m2m.message(COORDINATOR_ID, device_id, message)

    async def broadcast_poll(self, round: int) -> Dict[str, PollResult]:
        endpoints = {device_id: _TcpEndpoint(self, device_id) for device_id in self._connections}
        return await broadcast_poll(endpoints, round)

    async def assign(self, device_id: str, subtask: SubtaskSpec) -> bool:
        """Fire and forget; the ack is logged when it arrives."""
        self._assign_ids += 1
        await self._send(device_id, WireMessage.assign(subtask, f"assign-{self._assign_ids}"))
        return True

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        connection = _Connection(reader, writer)
        device_id: Optional[str] = None
        logger.info(f"Agent connection from {connection.peer}")
        try:
            async for item in connection.messages():
                if isinstance(item, ProtocolError):
                    logger.warning(f"Bad line from {device_id or connection.peer}: {item}")
                    continue
                if item.type == MessageType.REPORT:
                    try:
                        report = item.device_report()
                    except ValueError as e:
                        logger.warning(f"Invalid report from {device_id or connection.peer}: {e}")
                        continue
                    if device_id is None:
                        device_id = report.device_id
                        self._connections[device_id] = connection
                        logger.info(f"Agent {device_id} registered from {connection.peer}")
                    if self.m2m is not None:
                        self.m2m.message(device_id, COORDINATOR_ID, item)
                    self.reports.put_nowait((device_id, item.round or 0, report))
                elif item.type == MessageType.ACK:
                    if self.m2m is not None and device_id is not None:
                        self.m2m.message(device_id, COORDINATOR_ID, item)
                    if not item.payload.get("accepted", True):
                        logger.warning(
                            f"{device_id} rejected {item.correlation_id}: {item.payload.get('detail', '')}"
                        )
                else:
                    logger.warning(f"Unexpected {item.type.value} message from {device_id or connection.peer}")
        finally:
            if device_id is not None and self._connections.get(device_id) is connection:
                del self._connections[device_id]
                logger.info(f"Agent {device_id} disconnected")
            await connection.close()

    async def close(self) -> None:
        for connection in list(self._connections.values()):
            await connection.close()
        self._connections.clear()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None


class AgentClient:
    """Agent side: connects one DeviceAgent to a coordinator."""

    def __init__(self, agent, host: str = DEFAULT_HOST, port: int = DEFAULT_PORT):
        self.agent = agent
        self.host = host
        self.port = port
        self._connection: Optional[_Connection] = None

    async def connect(self) -> None:
        try:
            reader, writer = await asyncio.open_connection(self.host, self.port)
        except (ConnectionError, OSError) as e:
            raise TransportError(f"cannot reach coordinator at {self.host}:{self.port}: {e}") from e
        self._connection = _Connection(reader, writer)
        await self._connection.send(WireMessage.report(0, self.agent.handle_poll(0), "register"))
        logger.info(f"{self.agent.device_id} connected to {self.host}:{self.port}")

    async def serve(self) -> None:
        """Answer polls and assignments until the coordinator closes the connection."""
        if self._connection is None:
            await self.connect()
        connection = self._connection
        self.agent.start()
        try:
            async for item in connection.messages():
                if isinstance(item, ProtocolError):
                    logger.warning(f"{self.agent.device_id}: bad line from coordinator: {item}")
                    continue
                if item.type == MessageType.POLL:
                    report = self.agent.handle_poll(item.round or 0)
                    await connection.send(WireMessage.report(item.round or 0, report, item.correlation_id))
                elif item.type == MessageType.ASSIGN:
                    await connection.send(self._accept(item))
                else:
                    logger.warning(f"{self.agent.device_id}: unexpected {item.type.value} message")
        finally:
            await self.agent.stop()
            await connection.close()
            self._connection = None
            logger.info(f"{self.agent.device_id} disconnected")

    def _accept(self, message: WireMessage) -> WireMessage:
        try:
            self.agent.handle_assign(message.subtask())
        except (LLMindError, ValueError) as e:
            return WireMessage.ack(message.correlation_id, accepted=False, detail=str(e))
        return WireMessage.ack(message.correlation_id)

    async def close(self) -> None:
        if self._connection is not None:
            await self._connection.close()
