"""Tracker/backend transport: the network delay model, wire codec, and two channels.

Wire message layout (little-endian)::

    magic    4s   b"VIOT"
    version  u16  1
    kind     u8   1 = request, 2 = response
    id       u64  request id
    t0       u64  capture time in nanoseconds
    body          request: payload blob
                  response: status u8 + 12 f64 (row-major R, then T)

On a socket every message is preceded by a u32 little-endian byte length.
"""

from __future__ import annotations

import socket
import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from .backend import PoseRequest, PoseResponse, ResponseStatus, pack_pose, unpack_pose

MAGIC = b"VIOT"
VERSION = 1
KIND_REQUEST = 1
KIND_RESPONSE = 2
DEFAULT_PORT = 47474
MAX_FRAME = 16 * 1024 * 1024

_HEADER = struct.Struct("<4sHBQQ")
_LENGTH = struct.Struct("<I")
_RESPONSE_BODY = 1 + 96


class ProtocolError(ValueError):
    """Bad magic, version, kind or body layout."""


class FramingError(ConnectionError):
    """Truncated or oversized frame; the stream cannot be resynchronised."""


@dataclass(frozen=True)
class LatencyModel:
    bandwidth: float = 50.0  # Mbps
    propagation_delay: float = 10.0  # ms, one way
    extra_delay: tuple = (0.0, 30.0)  # ms, uniform
    request_size: int = 102400
    response_size: int = 10240
    rng_seed: int = 0
    split: bool = False
    drop_probability: float = 0.0

    def __post_init__(self):
        lo, hi = self.extra_delay
        if min(self.bandwidth, self.propagation_delay, lo, hi, self.request_size, self.response_size) < 0:
            raise ValueError("latency parameters must be non-negative")
        if lo > hi:
            raise ValueError("extra delay range must satisfy lo <= hi")

    @classmethod
    def zero(cls, **kwargs) -> "LatencyModel":
        return cls(bandwidth=float("inf"), propagation_delay=0.0, extra_delay=(0.0, 0.0), **kwargs)


def transmission_ms(size_bytes: float, bandwidth_mbps: float) -> float:
    # bytes -> kB, kB -> kb (x8), kb -> Mb (/1024), s -> ms
    return (size_bytes / 1024.0) * 8.0 / (1024.0 * bandwidth_mbps) * 1e3


def compute_delay(size_bytes: float, model: LatencyModel, draw: float) -> float:
    """Round-trip backend response time in ms for a payload of ``size_bytes``."""
    if not size_bytes > 0:
        raise ValueError("size_bytes must be positive")
    return transmission_ms(size_bytes, model.bandwidth) + 2.0 * model.propagation_delay + draw


# --- codec -------------------------------------------------------------

def _t0_nanos(t0: float) -> int:
    return max(0, int(round(t0 * 1e9)))


def encode(msg) -> bytes:
    if isinstance(msg, PoseRequest):
        head = _HEADER.pack(MAGIC, VERSION, KIND_REQUEST, msg.request_id, _t0_nanos(msg.t0))
        return head + bytes(msg.payload)
    if isinstance(msg, PoseResponse):
        head = _HEADER.pack(MAGIC, VERSION, KIND_RESPONSE, msg.request_id, _t0_nanos(msg.t0))
        return head + bytes([int(msg.status)]) + pack_pose(msg.pose)
    raise TypeError(f"cannot encode {type(msg).__name__}")


def decode(buf: bytes):
    if len(buf) < _HEADER.size:
        raise ProtocolError("message shorter than header")
    magic, version, kind, rid, t0_ns = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}")
    body = buf[_HEADER.size:]
    t0 = t0_ns / 1e9
    if kind == KIND_REQUEST:
        return PoseRequest(rid, t0, bytes(body))
    if kind == KIND_RESPONSE:
        if len(body) != _RESPONSE_BODY:
            raise ProtocolError(f"response body has {len(body)} bytes, expected {_RESPONSE_BODY}")
        try:
            status = ResponseStatus(body[0])
        except ValueError as exc:
            raise ProtocolError(f"bad status {body[0]}") from exc
        return PoseResponse(rid, t0, unpack_pose(body[1:]), status)
    raise ProtocolError(f"unknown message kind {kind}")


# --- simulated channel -------------------------------------------------

class _Direction:
    def __init__(self):
        self.queue: deque = deque()
        self.last_delivery = -np.inf


class SimEndpoint:
    """One side of a :class:`SimulatedLink`; times are virtual seconds."""

    def __init__(self, link: "SimulatedLink", outbound: _Direction, inbound: _Direction, upstream: bool):
        self._link = link
        self._out = outbound
        self._in = inbound
        self._upstream = upstream

    def send(self, msg, now: float) -> float | None:
        """Queue ``msg``; returns its delivery time, or None if dropped."""
        return self._link._send(self._out, msg, now, self._upstream)

    def recv(self, now: float) -> list:
        out = []
        q = self._in.queue
        while q and q[0][0] <= now:
            out.append(q.popleft()[1])
        return out

    def next_delivery(self) -> float | None:
        return self._in.queue[0][0] if self._in.queue else None


class SimulatedLink:
    """Lossless FIFO link with the delay model, driven by a virtual clock.

    In the default aggregate mode the whole round-trip cost (request size,
    both propagation legs, one extra-delay draw) is charged on the
    client-to-server leg and replies travel instantly. ``split`` mode charges
    each leg its own transmission and one propagation delay, with the extra
    draw on the request leg. ``stream`` selects an independent draw sequence
    for the same model, e.g. one per experiment seed.
    """

    def __init__(self, model: LatencyModel, stream: int = 0):
        self.model = model
        self._rng = np.random.default_rng([model.rng_seed, 3, stream])
        up, down = _Direction(), _Direction()
        self.client = SimEndpoint(self, up, down, upstream=True)
        self.server = SimEndpoint(self, down, up, upstream=False)

    def leg_delay(self, upstream: bool) -> float:
        m = self.model
        if upstream:
            draw = float(self._rng.uniform(*m.extra_delay)) if m.extra_delay[1] > 0 else 0.0
            if m.split:
                return transmission_ms(m.request_size, m.bandwidth) + m.propagation_delay + draw
            return compute_delay(max(m.request_size, 1), m, draw)
        if m.split:
            return transmission_ms(m.response_size, m.bandwidth) + m.propagation_delay
        return 0.0

    def _send(self, direction: _Direction, msg, now: float, upstream: bool):
        m = self.model
        if m.drop_probability > 0 and self._rng.random() < m.drop_probability:
            return None
        delivery = now + self.leg_delay(upstream) / 1e3
        if delivery <= direction.last_delivery:
            # FIFO: never overtake, and keep delivery times distinct
            delivery = float(np.nextafter(direction.last_delivery, np.inf))
        direction.last_delivery = delivery
        direction.queue.append((delivery, msg))
        return delivery


def simulated_channel(model: LatencyModel, stream: int = 0):
    """Return the ``(client, server)`` endpoints of a fresh simulated link."""
    link = SimulatedLink(model, stream)
    return link.client, link.server


# --- sockets -------------------------------------------------------------

def parse_address(addr: str, default_port: int = DEFAULT_PORT):
    host, _, port = addr.rpartition(":")
    if not host:
        return addr or "127.0.0.1", default_port
    return host, int(port)


class SocketTransport:
    """Length-prefixed message stream over a connected socket."""

    def __init__(self, sock: socket.socket, max_frame: int = MAX_FRAME):
        self.sock = sock
        self.max_frame = max_frame

    @classmethod
    def connect(cls, address, timeout: float | None = 10.0) -> "SocketTransport":
        if isinstance(address, str):
            address = parse_address(address)
        sock = socket.create_connection(address, timeout=timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls(sock)

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def send(self, msg):
        data = encode(msg)
        if len(data) > self.max_frame:
            raise FramingError(f"frame of {len(data)} bytes exceeds {self.max_frame}")
        self.sock.sendall(_LENGTH.pack(len(data)) + data)

    def _recv_exact(self, n: int, allow_eof: bool) -> bytes | None:
        chunks = []
        got = 0
        while got < n:
            chunk = self.sock.recv(min(n - got, 1 << 20))
            if not chunk:
                if allow_eof and got == 0:
                    return None
                self.close()
                raise FramingError(f"stream truncated after {got} of {n} bytes")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv(self):
        """Next decoded message, or None on a clean end of stream."""
        head = self._recv_exact(_LENGTH.size, allow_eof=True)
        if head is None:
            return None
        (n,) = _LENGTH.unpack(head)
        if n > self.max_frame:
            self.close()
            raise FramingError(f"declared frame length {n} exceeds {self.max_frame}")
        try:
            return decode(self._recv_exact(n, allow_eof=False))
        except ProtocolError:
            self.close()
            raise

    # backend.serve protocol
    def recv_request(self):
        msg = self.recv()
        if msg is not None and not isinstance(msg, PoseRequest):
            raise ProtocolError("expected a request")
        return msg

    def send_response(self, resp: PoseResponse):
        self.send(resp)


class SocketServer:
    """Listening socket handing out one :class:`SocketTransport` per connection."""

    def __init__(self, address="127.0.0.1:0"):
        host, port = parse_address(address) if isinstance(address, str) else address
        self.sock = socket.create_server((host, port))

    @property
    def address(self):
        return self.sock.getsockname()[:2]

    def accept(self) -> SocketTransport:
        conn, _ = self.sock.accept()
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return SocketTransport(conn)

    def close(self):
        self.sock.close()


def socket_transport(address, listen: bool = False):
    """Client transport connected to ``address``, or a bound server if ``listen``."""
    return SocketServer(address) if listen else SocketTransport.connect(address)
