"""Weight snapshots, their binary wire format, and the message bus.

Snapshot layout (all integers and floats little-endian)::

    magic   b"CQW1"                     4 bytes
    version u16, worker_id u32, round_id u32, n_layers u16
    n_layers x (rows u32, cols u32)
    3 x (count u64, count x float64)    weights, biases, batchnorm params

Messages on the TCP bus travel as a 4-byte big-endian length prefix followed
by the encoded message (see :func:`encode_message`).
"""
from __future__ import annotations

import enum
import itertools
import logging
import queue
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import EncodeError, FormatError, LengthError, PayloadValueError, ShapeError, TransportError
from .network import NetworkState

log = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"CQW1"
SNAPSHOT_VERSION = 1
_HEAD = struct.Struct("<4sHIIH")
_SHAPE = struct.Struct("<II")
_COUNT = struct.Struct("<Q")
HEADER_SIZE = _HEAD.size

MESSAGE_MAGIC = b"CQM1"
_MSG_HEAD = struct.Struct("<4sBIQH")
_FRAME = struct.Struct(">I")
MAX_FRAME = 256 * 1024 * 1024


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype="<f8", copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WeightSnapshot:
    worker_id: int
    round_id: int
    layer_shapes: tuple[tuple[int, int], ...]
    weights: np.ndarray
    biases: np.ndarray
    batchnorm_params: np.ndarray = field(default_factory=lambda: _frozen_array([]))

    def __post_init__(self):
        shapes = tuple((int(r), int(c)) for r, c in self.layer_shapes)
        object.__setattr__(self, "layer_shapes", shapes)
        for name in ("weights", "biases", "batchnorm_params"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        n_w = sum(r * c for r, c in shapes)
        n_b = sum(c for _, c in shapes)
        if self.weights.size != n_w or self.biases.size != n_b:
            raise ShapeError(
                f"snapshot arrays ({self.weights.size}, {self.biases.size}) do not match shapes {list(shapes)}"
            )
        allowed_bn = {0} | ({4 * shapes[0][1]} if shapes else set())
        if self.batchnorm_params.size not in allowed_bn:
            raise ShapeError(f"batchnorm array of length {self.batchnorm_params.size} fits none of {sorted(allowed_bn)}")

    def __eq__(self, other):
        if not isinstance(other, WeightSnapshot):
            return NotImplemented
        return (
            self.worker_id == other.worker_id
            and self.round_id == other.round_id
            and self.layer_shapes == other.layer_shapes
            and self.weights.tobytes() == other.weights.tobytes()
            and self.biases.tobytes() == other.biases.tobytes()
            and self.batchnorm_params.tobytes() == other.batchnorm_params.tobytes()
        )

    __hash__ = None

    def same_layout(self, other: "WeightSnapshot") -> bool:
        return self.layer_shapes == other.layer_shapes and self.batchnorm_params.size == other.batchnorm_params.size

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.weights).all() and np.isfinite(self.biases).all() and np.isfinite(self.batchnorm_params).all()
        )

    @classmethod
    def from_network(cls, net: NetworkState, worker_id: int = 0, round_id: int = 0) -> "WeightSnapshot":
        return cls(worker_id, round_id, net.layer_shapes, net.weights, net.biases, net.batchnorm_params)

    def to_network(self) -> NetworkState:
        """Rebuild a trainable state.  ``epoch_counter`` becomes ``round_id``,
        so only a round-0 (never trained) snapshot counts as fresh."""
        return NetworkState(
            layer_shapes=self.layer_shapes,
            weights=np.array(self.weights),
            biases=np.array(self.biases),
            batchnorm_params=np.array(self.batchnorm_params),
            epoch_counter=self.round_id,
        )


def encoded_size(s: WeightSnapshot) -> int:
    arrays = (s.weights, s.biases, s.batchnorm_params)
    return HEADER_SIZE + _SHAPE.size * len(s.layer_shapes) + sum(_COUNT.size + 8 * a.size for a in arrays)


def encode_snapshot(s: WeightSnapshot) -> bytes:
    if not s.is_finite():
        raise EncodeError(f"snapshot from worker {s.worker_id}, round {s.round_id} holds non-finite values")
    parts = [_HEAD.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, s.worker_id, s.round_id, len(s.layer_shapes))]
    try:
        parts.extend(_SHAPE.pack(r, c) for r, c in s.layer_shapes)
    except struct.error as exc:
        raise EncodeError(f"layer shape out of u32 range: {exc}") from None
    for arr in (s.weights, s.biases, s.batchnorm_params):
        parts.append(_COUNT.pack(arr.size))
        parts.append(arr.astype("<f8", copy=False).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0
        self.expected = HEADER_SIZE

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise LengthError(self.expected, len(self.buf))
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out


def decode_snapshot(data: bytes) -> WeightSnapshot:
    r = _Reader(data)
    if len(data) >= 4 and bytes(data[:4]) != SNAPSHOT_MAGIC:
        raise FormatError(f"bad snapshot magic {bytes(data[:4])!r}")
    magic, version, worker_id, round_id, n_layers = _HEAD.unpack(r.take(HEADER_SIZE))
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise FormatError(f"unsupported snapshot version {version}")
    # known minimum: shapes plus three count fields
    r.expected = HEADER_SIZE + n_layers * _SHAPE.size + 3 * _COUNT.size
    shapes = tuple(_SHAPE.unpack(r.take(_SHAPE.size)) for _ in range(n_layers))
    want = [sum(a * b for a, b in shapes), sum(b for _, b in shapes)]
    arrays = []
    for i in range(3):
        (count,) = _COUNT.unpack(r.take(_COUNT.size))
        if i < 2 and count != want[i]:
            raise FormatError(f"array {i} has {count} values; layer shapes imply {want[i]}")
        r.expected += 8 * count
        arrays.append(np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64))
    if r.pos != len(data):
        raise LengthError(r.pos, len(data))
    for arr in arrays:
        if not np.isfinite(arr).all():
            raise PayloadValueError("snapshot payload contains NaN or infinite values")
    try:
        return WeightSnapshot(worker_id, round_id, shapes, *arrays)
    except ShapeError as exc:
        raise FormatError(str(exc)) from None


class MessageKind(enum.IntEnum):
    WEIGHTS_UPDATE = 1
    AVERAGED_WEIGHTS = 2
    PASS_MODEL = 3
    STOP = 4


_NEEDS_PAYLOAD = {MessageKind.WEIGHTS_UPDATE, MessageKind.AVERAGED_WEIGHTS, MessageKind.PASS_MODEL}


@dataclass(frozen=True)
class Message:
    """Bus envelope.  ``info`` carries small scalar side data (training time,
    local AUC, error text) next to the weights."""

    kind: MessageKind
    payload: WeightSnapshot | None = None
    sender: int = 0
    sequence: int = 0
    info: Mapping[str, float | str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", MessageKind(self.kind))
        if self.kind in _NEEDS_PAYLOAD and self.payload is None:
            raise ValueError(f"{self.kind.name} needs a payload")
        if self.kind is MessageKind.STOP and self.payload is not None:
            raise ValueError("STOP carries no payload")
        object.__setattr__(self, "info", dict(self.info))


def encode_message(msg: Message) -> bytes:
    parts = [_MSG_HEAD.pack(MESSAGE_MAGIC, msg.kind, msg.sender, msg.sequence, len(msg.info))]
    for key, value in msg.info.items():
        k = key.encode("utf-8")
        if isinstance(value, str):
            v = value.encode("utf-8")
            parts.append(struct.pack("<H", len(k)) + k + b"s" + struct.pack("<I", len(v)) + v)
        else:
            parts.append(struct.pack("<H", len(k)) + k + b"d" + struct.pack("<d", float(value)))
    if msg.payload is None:
        parts.append(b"\x00")
    else:
        body = encode_snapshot(msg.payload)
        parts.append(b"\x01" + _COUNT.pack(len(body)) + body)
    return b"".join(parts)


def decode_message(data: bytes) -> Message:
    try:
        magic, kind, sender, sequence, n_info = _MSG_HEAD.unpack_from(data, 0)
        if magic != MESSAGE_MAGIC:
            raise FormatError(f"bad message magic {magic!r}")
        if kind not in MessageKind._value2member_map_:
            raise FormatError(f"unknown message kind {kind}")
        pos = _MSG_HEAD.size
        info: dict[str, float | str] = {}
        for _ in range(n_info):
            (klen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            key = bytes(data[pos : pos + klen]).decode("utf-8")
            pos += klen
            tag = data[pos : pos + 1]
            pos += 1
            if tag == b"s":
                (vlen,) = struct.unpack_from("<I", data, pos)
                pos += 4
                info[key] = bytes(data[pos : pos + vlen]).decode("utf-8")
                pos += vlen
            elif tag == b"d":
                (info[key],) = struct.unpack_from("<d", data, pos)
                pos += 8
            else:
                raise FormatError(f"unknown info tag {tag!r}")
        flag = data[pos]
        pos += 1
        payload = None
        if flag:
            (blen,) = _COUNT.unpack_from(data, pos)
            pos += _COUNT.size
            payload = decode_snapshot(bytes(data[pos : pos + blen]))
            pos += blen
    except (struct.error, IndexError) as exc:
        raise FormatError(f"truncated message: {exc}") from None
    if pos != len(data):
        raise LengthError(pos, len(data))
    try:
        return Message(MessageKind(kind), payload, sender, sequence, info)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


class Endpoint:
    """One node's handle on a bus: an inbound queue plus a send function.

    :meth:`publish` stamps the message with this node as sender and the next
    per-sender sequence number.
    """

    def __init__(self, node_id: int):
        self.node_id = node_id
        self._inbox: queue.Queue[Message] = queue.Queue()
        self._seq = itertools.count(1)
        self._send_lock = threading.Lock()
        self.closed = False

    def publish(self, to: int, msg: Message) -> int:
        if self.closed:
            raise TransportError(f"endpoint {self.node_id} is closed")
        with self._send_lock:
            stamped = replace(msg, sender=self.node_id, sequence=next(self._seq))
            self._deliver(to, stamped)
        return stamped.sequence

    def consume(self, timeout: float | None = None) -> Message | None:
        """Next inbound message, or None when ``timeout`` seconds pass first."""
        if self.closed:
            raise TransportError(f"endpoint {self.node_id} is closed")
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is _CLOSED:
            raise TransportError(f"endpoint {self.node_id} closed while waiting")
        return item

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._inbox.put(_CLOSED)

    def _deliver(self, to: int, msg: Message) -> None:
        raise NotImplementedError


_CLOSED = object()


class InProcessBus:
    """Queues in one process; endpoints hand each other message objects."""

    def __init__(self):
        self._endpoints: dict[int, _InProcEndpoint] = {}
        self._pending: dict[int, list[Message]] = {}
        self._lock = threading.Lock()

    def endpoint(self, node_id: int) -> Endpoint:
        with self._lock:
            if node_id in self._endpoints:
                raise TransportError(f"node {node_id} already attached")
            ep = _InProcEndpoint(node_id, self)
            self._endpoints[node_id] = ep
            for msg in self._pending.pop(node_id, []):
                ep._inbox.put(msg)
        return ep

    def _route(self, to: int, msg: Message) -> None:
        with self._lock:
            ep = self._endpoints.get(to)
            if ep is None:
                self._pending.setdefault(to, []).append(msg)
            else:
                ep._inbox.put(msg)

    def close(self) -> None:
        with self._lock:
            eps = list(self._endpoints.values())
        for ep in eps:
            ep.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _InProcEndpoint(Endpoint):
    def __init__(self, node_id: int, bus: InProcessBus):
        super().__init__(node_id)
        self._bus = bus

    def _deliver(self, to: int, msg: Message) -> None:
        self._bus._route(to, msg)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            return None
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes | None:
    head = _recv_exact(sock, _FRAME.size)
    if head is None:
        return None
    (length,) = _FRAME.unpack(head)
    if length > MAX_FRAME:
        raise FormatError(f"frame of {length} bytes exceeds limit {MAX_FRAME}")
    return _recv_exact(sock, length) if length else b""


def frame(body: bytes) -> bytes:
    return _FRAME.pack(len(body)) + body


_ROUTE = struct.Struct("<I")


class _RouterHandler(socketserver.BaseRequestHandler):
    def handle(self):
        router: _Router = self.server  # type: ignore[assignment]
        sock = self.request
        hello = read_frame(sock)
        if hello is None or len(hello) != _ROUTE.size:
            return
        (node_id,) = _ROUTE.unpack(hello)
        router.attach(node_id, sock)
        try:
            while True:
                body = read_frame(sock)
                if body is None:
                    break
                (target,) = _ROUTE.unpack_from(body, 0)
                router.forward(target, body[_ROUTE.size :])
        except (OSError, FormatError) as exc:
            log.debug("router connection for node %d ended: %s", node_id, exc)
        finally:
            router.detach(node_id)


class _Router(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr):
        super().__init__(addr, _RouterHandler)
        self._conns: dict[int, tuple[socket.socket, threading.Lock]] = {}
        self._pending: dict[int, list[bytes]] = {}
        self._lock = threading.Lock()

    def attach(self, node_id: int, sock: socket.socket) -> None:
        with self._lock:
            lock = threading.Lock()
            self._conns[node_id] = (sock, lock)
            backlog = self._pending.pop(node_id, [])
            with lock:
                for body in backlog:
                    sock.sendall(frame(body))

    def detach(self, node_id: int) -> None:
        with self._lock:
            self._conns.pop(node_id, None)

    def forward(self, target: int, body: bytes) -> None:
        with self._lock:
            conn = self._conns.get(target)
            if conn is None:
                self._pending.setdefault(target, []).append(body)
                return
            sock, lock = conn
            # taken under the router lock so a sender's frames keep their order
            with lock:
                sock.sendall(frame(body))


class TcpBus:
    """Router on ``host:port`` (port 0 picks a free one) with socket endpoints.

    Every endpoint holds one TCP connection to the router; frames carry a
    4-byte big-endian length prefix.  Messages are serialized with
    :func:`encode_message`, so payloads cross the socket in the snapshot wire
    format.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._router = _Router((host, port))
        self.address = self._router.server_address
        self._thread = threading.Thread(target=self._router.serve_forever, name="bus-router", daemon=True)
        self._thread.start()
        self._endpoints: list[_TcpEndpoint] = []

    def endpoint(self, node_id: int) -> Endpoint:
        ep = _TcpEndpoint(node_id, self.address)
        self._endpoints.append(ep)
        return ep

    def close(self) -> None:
        for ep in self._endpoints:
            ep.close()
        self._router.shutdown()
        self._router.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _TcpEndpoint(Endpoint):
    def __init__(self, node_id: int, address):
        super().__init__(node_id)
        try:
            self._sock = socket.create_connection(address)
        except OSError as exc:
            raise TransportError(f"cannot reach bus router at {address}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock.sendall(frame(_ROUTE.pack(node_id)))
        self._reader = threading.Thread(target=self._read_loop, name=f"bus-node-{node_id}", daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        try:
            while True:
                body = read_frame(self._sock)
                if body is None:
                    break
                self._inbox.put(decode_message(body))
        except (OSError, FormatError) as exc:
            if not self.closed:
                log.warning("node %d reader stopped: %s", self.node_id, exc)
        finally:
            self.close()

    def _deliver(self, to: int, msg: Message) -> None:
        try:
            self._sock.sendall(frame(_ROUTE.pack(to) + encode_message(msg)))
        except OSError as exc:
            raise TransportError(f"node {self.node_id} send failed: {exc}") from exc

    def close(self) -> None:
        if self.closed:
            return
        super().close()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def make_bus(kind: str = "inproc", host: str = "127.0.0.1", port: int = 0):
    if kind == "inproc":
        return InProcessBus()
    if kind == "tcp":
        return TcpBus(host, port)
    raise ValueError(f"unknown transport {kind!r}; use 'inproc' or 'tcp'")
