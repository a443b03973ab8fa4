"""Device-edge wire protocol and the two endpoint orchestrators.

Frames are length-prefixed over one reliable ordered byte stream:
u32 little-endian length, then that many bytes of [u8 type | body].
Exact field layouts are documented in PROTOCOL.md and are bit-stable.

The device side keeps at most one request in flight. The edge side
accepts any number of connections but funnels every inference through a
single worker, so offloaded queries execute strictly sequentially.
"""

from __future__ import annotations

import enum
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

from .calibration import constrained_softmax
from .core import LogitVector
from .token_ops import CorruptPayload, unpack

PROTOCOL_VERSION = 1
MAX_FRAME = 256 * 1024 * 1024


class TransportError(RuntimeError):
    pass


class ConnectionClosed(TransportError):
    pass


class VersionMismatch(TransportError):
    pass


class MsgType(enum.IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    OFFLOAD_REQUEST = 3
    OFFLOAD_RESPONSE = 4
    ERROR = 5
    PING = 6
    PONG = 7


class ErrorCode(enum.IntEnum):
    CORRUPT_PAYLOAD = 1
    BACKEND_FAILURE = 2
    MALFORMED_FRAME = 3
    VERSION_MISMATCH = 4
    INTERNAL = 5


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class HelloAck:
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class OffloadRequest:
    query_id: str
    question: str
    options: tuple[str, ...]
    density: int
    n_frames: int
    payload: bytes  # TBT1 token payload


@dataclass(frozen=True)
class OffloadResponse:
    query_id: str
    answer: str
    kappa: float
    edge_lm_ms: float
    server_ms: float


@dataclass(frozen=True)
class ErrorMsg:
    query_id: str
    code: ErrorCode
    message: str


@dataclass(frozen=True)
class Ping:
    nonce: int = 0


@dataclass(frozen=True)
class Pong:
    nonce: int = 0


Message = Hello | HelloAck | OffloadRequest | OffloadResponse | ErrorMsg | Ping | Pong


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _unpack_str(buf: bytes, off: int):
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    if off + n > len(buf):
        raise TransportError("string field overruns frame")
    return buf[off:off + n].decode("utf-8"), off + n


def encode_message(msg: Message) -> bytes:
    """Serialize one message into a complete frame (length prefix included)."""
    if isinstance(msg, Hello):
        t, body = MsgType.HELLO, struct.pack("<H", msg.version)
    elif isinstance(msg, HelloAck):
        t, body = MsgType.HELLO_ACK, struct.pack("<H", msg.version)
    elif isinstance(msg, OffloadRequest):
        opts = "".join(msg.options).encode("ascii")
        t = MsgType.OFFLOAD_REQUEST
        body = (_pack_str(msg.query_id) + _pack_str(msg.question)
                + struct.pack("<B", len(opts)) + opts
                + struct.pack("<II", msg.density, msg.n_frames)
                + struct.pack("<I", len(msg.payload)) + msg.payload)
    elif isinstance(msg, OffloadResponse):
        t = MsgType.OFFLOAD_RESPONSE
        body = (_pack_str(msg.query_id) + struct.pack("<B", ord(msg.answer))
                + struct.pack("<ddd", msg.kappa, msg.edge_lm_ms, msg.server_ms))
    elif isinstance(msg, ErrorMsg):
        t = MsgType.ERROR
        body = _pack_str(msg.query_id) + struct.pack("<H", int(msg.code)) + _pack_str(msg.message)
    elif isinstance(msg, Ping):
        t, body = MsgType.PING, struct.pack("<Q", msg.nonce)
    elif isinstance(msg, Pong):
        t, body = MsgType.PONG, struct.pack("<Q", msg.nonce)
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    return struct.pack("<I", 1 + len(body)) + struct.pack("<B", int(t)) + body


def decode_message(frame: bytes) -> Message:
    """Parse one complete frame (length prefix included) back into a message."""
    if len(frame) < 5:
        raise TransportError("frame shorter than header")
    (length,) = struct.unpack_from("<I", frame, 0)
    if length != len(frame) - 4:
        raise TransportError("frame length mismatch")
    t = frame[4]
    body = frame[5:]
    try:
        mtype = MsgType(t)
    except ValueError:
        raise TransportError(f"unknown message type {t}") from None
    if mtype is MsgType.HELLO:
        return Hello(*struct.unpack("<H", body))
    if mtype is MsgType.HELLO_ACK:
        return HelloAck(*struct.unpack("<H", body))
    if mtype is MsgType.OFFLOAD_REQUEST:
        qid, off = _unpack_str(body, 0)
        question, off = _unpack_str(body, off)
        (n_opts,) = struct.unpack_from("<B", body, off)
        off += 1
        options = tuple(chr(b) for b in body[off:off + n_opts])
        off += n_opts
        density, n_frames = struct.unpack_from("<II", body, off)
        off += 8
        (plen,) = struct.unpack_from("<I", body, off)
        off += 4
        if off + plen != len(body):
            raise TransportError("payload length mismatch")
        return OffloadRequest(qid, question, options, density, n_frames, body[off:])
    if mtype is MsgType.OFFLOAD_RESPONSE:
        qid, off = _unpack_str(body, 0)
        answer = chr(body[off])
        kappa, edge_ms, server_ms = struct.unpack_from("<ddd", body, off + 1)
        return OffloadResponse(qid, answer, kappa, edge_ms, server_ms)
    if mtype is MsgType.ERROR:
        qid, off = _unpack_str(body, 0)
        (code,) = struct.unpack_from("<H", body, off)
        message, _ = _unpack_str(body, off + 2)
        return ErrorMsg(qid, ErrorCode(code), message)
    if mtype is MsgType.PING:
        return Ping(*struct.unpack("<Q", body))
    return Pong(*struct.unpack("<Q", body))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise ConnectionClosed("peer closed the stream")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> Message:
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack("<I", header)
    if not 1 <= length <= MAX_FRAME:
        raise TransportError(f"frame length {length} out of bounds")
    return decode_message(header + _recv_exact(sock, length))


def write_message(sock: socket.socket, msg: Message) -> None:
    sock.sendall(encode_message(msg))


class OffloadSession:
    """Device-side connection to the edge; one request in flight at most."""

    def __init__(self, host: str, port: int, timeout_s: float = 120.0):
        self.timeout_s = timeout_s
        self._lock = threading.Lock()
        self._sock = socket.create_connection((host, port), timeout=timeout_s)
        try:
            write_message(self._sock, Hello(PROTOCOL_VERSION))
            ack = read_message(self._sock)
            if isinstance(ack, ErrorMsg) and ack.code is ErrorCode.VERSION_MISMATCH:
                raise VersionMismatch(ack.message)
            if not isinstance(ack, HelloAck) or ack.version != PROTOCOL_VERSION:
                raise VersionMismatch(f"unexpected handshake reply: {ack!r}")
        except BaseException:
            self._sock.close()
            raise

    def offload(self, request: OffloadRequest):
        """Send one request and block for its response.

        Returns (OffloadResponse, network_ms, wall_ms) where network_ms is
        wall time minus the server-reported processing time.
        """
        with self._lock:
            t0 = time.perf_counter()
            try:
                write_message(self._sock, request)
                while True:
                    reply = read_message(self._sock)
                    if isinstance(reply, Pong):
                        continue
                    break
            except socket.timeout as e:
                raise TransportError(f"offload timed out after {self.timeout_s}s") from e
            wall_ms = (time.perf_counter() - t0) * 1000.0
        if isinstance(reply, ErrorMsg):
            raise TransportError(f"edge error {reply.code.name}: {reply.message}")
        if not isinstance(reply, OffloadResponse):
            raise TransportError(f"unexpected reply: {reply!r}")
        if reply.query_id != request.query_id:
            raise TransportError("response query_id does not echo the request")
        network_ms = max(0.0, wall_ms - reply.server_ms)
        return reply, network_ms, wall_ms

    def ping(self, nonce: int = 0) -> float:
        with self._lock:
            t0 = time.perf_counter()
            write_message(self._sock, Ping(nonce))
            reply = read_message(self._sock)
            if not isinstance(reply, Pong) or reply.nonce != nonce:
                raise TransportError(f"unexpected ping reply: {reply!r}")
            return (time.perf_counter() - t0) * 1000.0

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class EdgeServer:
    """Edge-side inference orchestrator over real sockets.

    ``backend`` is a callable (query_id, tokens, question, options,
    density) -> (LogitVector, compute_ms). All requests from all
    connections are executed by one worker thread, preserving the
    sequential-processing contract. ``tap`` (optional) observes wire
    events for tests.
    """

    def __init__(self, backend, temperature: float = 1.0,
                 host: str = "127.0.0.1", port: int = 0, tap=None):
        self.backend = backend
        self.temperature = temperature
        self.tap = tap or (lambda *a: None)
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(8)
        self.address = self._listener.getsockname()
        self._work: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self):
        t_accept = threading.Thread(target=self._accept_loop, name="edge-accept", daemon=True)
        t_work = threading.Thread(target=self._work_loop, name="edge-worker", daemon=True)
        self._threads = [t_accept, t_work]
        for t in self._threads:
            t.start()
        return self

    def serve_forever(self):
        """Blocking entry point used by the CLI."""
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self):
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        self._work.put(None)

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            t = threading.Thread(target=self._serve_conn, args=(conn,), daemon=True)
            t.start()

    def _serve_conn(self, conn: socket.socket):
        with conn:
            try:
                hello = read_message(conn)
            except TransportError:
                return
            if not isinstance(hello, Hello):
                self._send(conn, ErrorMsg("", ErrorCode.MALFORMED_FRAME, "expected Hello"))
                return
            if hello.version != PROTOCOL_VERSION:
                self._send(conn, ErrorMsg("", ErrorCode.VERSION_MISMATCH,
                                          f"server speaks version {PROTOCOL_VERSION}"))
                return
            self._send(conn, HelloAck(PROTOCOL_VERSION))
            while not self._stop.is_set():
                try:
                    msg = read_message(conn)
                except ConnectionClosed:
                    return
                except TransportError as e:
                    # malformed frame: report and reset the connection
                    self._send(conn, ErrorMsg("", ErrorCode.MALFORMED_FRAME, str(e)))
                    return
                if isinstance(msg, Ping):
                    self.tap("recv", "ping", "")
                    self._send(conn, Pong(msg.nonce))
                elif isinstance(msg, OffloadRequest):
                    self.tap("recv", "request", msg.query_id)
                    done = threading.Event()
                    self._work.put((conn, msg, done))
                    done.wait()
                else:
                    self._send(conn, ErrorMsg("", ErrorCode.MALFORMED_FRAME,
                                              f"unexpected {type(msg).__name__}"))
                    return

    def _work_loop(self):
        while True:
            item = self._work.get()
            if item is None:
                return
            conn, msg, done = item
            self.tap("exec", "start", msg.query_id)
            try:
                self._handle_request(conn, msg)
            finally:
                self.tap("exec", "end", msg.query_id)
                done.set()

    def _handle_request(self, conn, msg: OffloadRequest):
        t0 = time.perf_counter()
        try:
            tokens = unpack(msg.payload)
        except CorruptPayload as e:
            self._send(conn, ErrorMsg(msg.query_id, ErrorCode.CORRUPT_PAYLOAD, str(e)))
            self.tap("send", "error", msg.query_id)
            return
        try:
            logits, compute_ms = self.backend(
                msg.query_id, tokens, msg.question, msg.options, msg.density)
            if len(logits.values) != len(msg.options):
                raise ValueError("backend returned wrong logit count")
            dist = constrained_softmax(LogitVector(tuple(logits.values)), self.temperature)
            answer = msg.options[dist.argmax()]
        except Exception as e:
            self._send(conn, ErrorMsg(msg.query_id, ErrorCode.BACKEND_FAILURE, repr(e)))
            self.tap("send", "error", msg.query_id)
            return
        # measured wall only; a virtual compute_ms reaches the device via edge_lm_ms
        server_ms = (time.perf_counter() - t0) * 1000.0
        self._send(conn, OffloadResponse(msg.query_id, answer, dist.confidence,
                                         compute_ms, server_ms))
        self.tap("send", "response", msg.query_id)

    def _send(self, conn, msg):
        try:
            write_message(conn, msg)
        except OSError:
            pass
