"""Denoiser wire protocol v1.

Stream framing, little-endian:

  request:  magic "NSMI" | version u8 = 1 | msg_type u8 = 1 | t u32 |
            n_channels u8 (1 = unconditional, 2 = with condition) |
            height u32 | width u32 | n_channels*H*W float32 payload
            (channel 0 = x_t, channel 1 = condition)
  response: magic "NSMI" | version u8 = 1 | msg_type u8 = 2 |
            status u8 (0 = ok, 1 = error) | H*W float32 eps payload on ok,
            else u32 length + UTF-8 error message

One request in flight per connection; concurrent samplers need separate
connections.
"""

from __future__ import annotations

import json
import socket
import struct
import threading

import numpy as np

from .errors import (
    ConnectionLostError,
    DenoiserTimeoutError,
    ParameterError,
    ProtocolError,
    RemoteDenoiserError,
    ShapeError,
)

__all__ = [
    "MAGIC",
    "VERSION",
    "encode_request",
    "decode_request",
    "encode_response",
    "encode_error_response",
    "decode_response",
    "DenoiserClient",
    "StubDenoiserServer",
    "reference_eps",
    "reference_vectors",
    "dump_reference_vectors",
]

MAGIC = b"NSMI"
VERSION = 1
MSG_REQUEST = 1
MSG_RESPONSE = 2
STATUS_OK = 0
STATUS_ERROR = 1

_REQ_HEADER = struct.Struct("<4sBBIBII")
_RESP_HEADER = struct.Struct("<4sBBB")
_U32 = struct.Struct("<I")


def _as_f32_payload(arr, name):
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return np.ascontiguousarray(arr, dtype="<f4")


def encode_request(x_t, t, condition=None) -> bytes:
    x_t = _as_f32_payload(x_t, "x_t")
    if not 0 <= int(t) <= 0xFFFFFFFF:
        raise ParameterError(f"t does not fit in u32: {t!r}")
    h, w = x_t.shape
    chunks = [x_t.tobytes()]
    n_channels = 1
    if condition is not None:
        condition = _as_f32_payload(condition, "condition")
        if condition.shape != x_t.shape:
            raise ShapeError(
                f"condition shape {condition.shape} != x_t shape {x_t.shape}"
            )
        chunks.append(condition.tobytes())
        n_channels = 2
    header = _REQ_HEADER.pack(MAGIC, VERSION, MSG_REQUEST, int(t), n_channels, h, w)
    return header + b"".join(chunks)


def decode_request(read):
    """Parse one request from a read(n) callable.

    Returns (x_t, t, condition) with float32 arrays, or None at clean EOF.
    """
    header = read(_REQ_HEADER.size)
    if header == b"":
        return None
    if len(header) < _REQ_HEADER.size:
        raise ConnectionLostError("connection closed inside a request header")
    magic, version, msg_type, t, n_channels, h, w = _REQ_HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad request magic {magic!r}", offending_bytes=header)
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}", offending_bytes=header)
    if msg_type != MSG_REQUEST:
        raise ProtocolError(f"unexpected msg_type {msg_type}", offending_bytes=header)
    if n_channels not in (1, 2):
        raise ProtocolError(f"bad n_channels {n_channels}", offending_bytes=header)
    if h == 0 or w == 0:
        raise ProtocolError(f"bad dimensions {h}x{w}", offending_bytes=header)
    payload = read(n_channels * h * w * 4)
    if len(payload) < n_channels * h * w * 4:
        raise ConnectionLostError("connection closed inside a request payload")
    planes = np.frombuffer(payload, dtype="<f4").reshape(n_channels, h, w)
    condition = planes[1].copy() if n_channels == 2 else None
    return planes[0].copy(), t, condition


def encode_response(eps) -> bytes:
    eps = _as_f32_payload(eps, "eps")
    header = _RESP_HEADER.pack(MAGIC, VERSION, MSG_RESPONSE, STATUS_OK)
    return header + eps.tobytes()


def encode_error_response(message: str) -> bytes:
    data = message.encode("utf-8")
    header = _RESP_HEADER.pack(MAGIC, VERSION, MSG_RESPONSE, STATUS_ERROR)
    return header + _U32.pack(len(data)) + data


def decode_response(read, height, width):
    """Parse one response; the expected eps shape comes from the request."""
    header = read(_RESP_HEADER.size)
    if len(header) < _RESP_HEADER.size:
        raise ConnectionLostError("connection closed inside a response header")
    magic, version, msg_type, status = _RESP_HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad response magic {magic!r}", offending_bytes=header)
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}", offending_bytes=header)
    if msg_type != MSG_RESPONSE:
        raise ProtocolError(f"unexpected msg_type {msg_type}", offending_bytes=header)
    if status == STATUS_ERROR:
        raw_len = read(_U32.size)
        if len(raw_len) < _U32.size:
            raise ConnectionLostError("connection closed inside an error response")
        (length,) = _U32.unpack(raw_len)
        message = read(length).decode("utf-8", errors="replace")
        raise RemoteDenoiserError(f"denoiser reported: {message}")
    if status != STATUS_OK:
        raise ProtocolError(f"bad status byte {status}", offending_bytes=header)
    payload = read(height * width * 4)
    if len(payload) < height * width * 4:
        raise ConnectionLostError("connection closed inside a response payload")
    return np.frombuffer(payload, dtype="<f4").reshape(height, width).copy()


def _sock_reader(sock):
    def read(n):
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = sock.recv(n - len(buf))
            except socket.timeout as exc:
                raise DenoiserTimeoutError("denoiser read timed out") from exc
            if not chunk:
                break
            buf.extend(chunk)
        return bytes(buf)

    return read


def parse_endpoint(endpoint: str):
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ParameterError(f"endpoint must be host:port, got {endpoint!r}")
    return host or "127.0.0.1", int(port)


class DenoiserClient:
    """Blocking TCP client for the wire protocol; not thread-safe."""

    def __init__(self, endpoint, timeout=30.0):
        self.host, self.port = parse_endpoint(endpoint)
        self.timeout = timeout
        self._sock = None

    def connect(self):
        if self._sock is not None:
            return self
        try:
            self._sock = socket.create_connection(
                (self.host, self.port), timeout=self.timeout
            )
        except socket.timeout as exc:
            raise DenoiserTimeoutError(
                f"timed out connecting to {self.host}:{self.port}"
            ) from exc
        except OSError as exc:
            raise ConnectionLostError(
                f"could not connect to {self.host}:{self.port}: {exc}"
            ) from exc
        return self

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self.connect()

    def __exit__(self, *exc):
        self.close()

    def predict_eps(self, x_t, t, condition=None):
        self.connect()
        request = encode_request(x_t, t, condition)
        h, w = np.shape(x_t)
        try:
            self._sock.sendall(request)
        except socket.timeout as exc:
            raise DenoiserTimeoutError("denoiser write timed out") from exc
        except OSError as exc:
            raise ConnectionLostError(f"send failed: {exc}") from exc
        try:
            return decode_response(_sock_reader(self._sock), h, w)
        except OSError as exc:
            raise ConnectionLostError(f"receive failed: {exc}") from exc


class StubDenoiserServer:
    """In-process protocol server for tests and loopback experiments.

    handler(x_t, t, condition) -> eps runs on a worker thread per
    connection; handler exceptions become status-1 responses.
    """

    def __init__(self, handler, host="127.0.0.1", port=0):
        self.handler = handler
        self._listener = socket.create_server((host, port))
        self.host, self.port = self._listener.getsockname()[:2]
        self._threads = []
        self._accept_thread = None
        self._closing = False

    @property
    def endpoint(self):
        return f"{self.host}:{self.port}"

    def start(self):
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self

    def _accept_loop(self):
        while not self._closing:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            thread = threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True
            )
            thread.start()
            self._threads.append(thread)

    def _serve_connection(self, conn):
        reader = _sock_reader(conn)
        with conn:
            while True:
                try:
                    parsed = decode_request(reader)
                except (ProtocolError, ConnectionLostError) as exc:
                    try:
                        conn.sendall(encode_error_response(str(exc)))
                    except OSError:
                        pass
                    return
                if parsed is None:
                    return
                x_t, t, condition = parsed
                try:
                    eps = self.handler(x_t, t, condition)
                    payload = encode_response(eps)
                except Exception as exc:  # noqa: BLE001 - reported to the peer
                    payload = encode_error_response(f"{type(exc).__name__}: {exc}")
                try:
                    conn.sendall(payload)
                except OSError:
                    return

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()

    def close(self):
        self._closing = True
        self._listener.close()


def reference_eps(x_t, t, condition=None):
    """Pinned test function for cross-implementation conformance.

    Every operation is exact or correctly rounded in float32, so any
    implementation with IEEE-754 float32 arithmetic reproduces the output
    bit-for-bit: eps = 0.5*x_t (+ 0.25*condition) + (t mod 7)*0.125 - 0.25.
    """
    x_t = np.asarray(x_t, dtype=np.float32)
    out = np.float32(0.5) * x_t
    if condition is not None:
        out = out + np.float32(0.25) * np.asarray(condition, dtype=np.float32)
    bias = np.float32(np.float32(int(t) % 7) * np.float32(0.125)) - np.float32(0.25)
    return out + bias


def _reference_inputs(height, width, phase):
    # explicit integer-derived pattern (no RNG) so any language can rebuild it
    idx = np.arange(height * width, dtype=np.float32).reshape(height, width)
    return (idx * np.float32(0.01) - np.float32(phase)).astype(np.float32)


def reference_vectors():
    """Request/response byte pairs every server implementation must match."""
    cases = [
        dict(height=1, width=1, t=1, conditional=False),
        dict(height=3, width=5, t=7, conditional=False),
        dict(height=4, width=4, t=123, conditional=True),
        dict(height=8, width=8, t=2000, conditional=True),
    ]
    vectors = []
    for case in cases:
        x_t = _reference_inputs(case["height"], case["width"], 0.3)
        condition = (
            _reference_inputs(case["height"], case["width"], 1.5)
            if case["conditional"]
            else None
        )
        request = encode_request(x_t, case["t"], condition)
        response = encode_response(reference_eps(x_t, case["t"], condition))
        vectors.append(
            dict(
                name=f"{case['height']}x{case['width']}_t{case['t']}"
                + ("_cond" if case["conditional"] else ""),
                request=request.hex(),
                response=response.hex(),
            )
        )
    return vectors


def dump_reference_vectors(path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"protocol_version": VERSION, "vectors": reference_vectors()}, fh, indent=2)
        fh.write("\n")
