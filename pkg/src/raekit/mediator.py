"""Streaming mediator: transforms windows sent over a socket, one at a time.

Every frame is ``version(u8) | kind(u8) | length(u32 LE) | payload``.

kinds
    0 hello        client -> server: u32 k, u32 d; the server echoes it back
    1 window       k*d float32 LE, channels-first, raw sensor units
    2 transformed  same layout as window
    3 error        u16 code, UTF-8 message; the server closes afterwards

The server normalizes with the model's stored statistics, applies the
autoencoder and maps the result back to raw units before replying.
"""

from __future__ import annotations

import logging
import signal
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .rae import TrainedRae

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
HEADER = struct.Struct("<BBI")

HELLO, WINDOW, TRANSFORMED, ERROR = 0, 1, 2, 3
KINDS = (HELLO, WINDOW, TRANSFORMED, ERROR)

ERR_SHAPE = 1
ERR_MALFORMED = 2
ERR_PROTOCOL = 3
ERR_INTERNAL = 4


class ProtocolError(ValueError):
    pass


class IncompleteFrameError(ProtocolError):
    pass


class MediatorError(RuntimeError):
    def __init__(self, code, message):
        super().__init__(f"mediator error {code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class Frame:
    kind: int
    payload: bytes = b""
    version: int = PROTOCOL_VERSION


def encode_frame(kind, payload=b"", version=PROTOCOL_VERSION) -> bytes:
    if kind not in KINDS:
        raise ProtocolError(f"unknown frame kind {kind}")
    if len(payload) >= 2**32:
        raise ProtocolError("payload too large")
    return HEADER.pack(version, kind, len(payload)) + bytes(payload)


def split_frame(buf):
    """Decode the first frame in ``buf``; returns (frame, remaining bytes)."""
    if len(buf) < HEADER.size:
        raise IncompleteFrameError(f"need {HEADER.size} header bytes, have {len(buf)}")
    version, kind, length = HEADER.unpack_from(buf)
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if kind not in KINDS:
        raise ProtocolError(f"unknown frame kind {kind}")
    end = HEADER.size + length
    if len(buf) < end:
        raise IncompleteFrameError(f"declared payload length {length}, have {len(buf) - HEADER.size}")
    return Frame(kind, bytes(buf[HEADER.size:end]), version), bytes(buf[end:])


def decode_frame(data) -> Frame:
    frame, rest = split_frame(data)
    if rest:
        raise ProtocolError(f"{len(rest)} trailing bytes after frame")
    return frame


def _recv_exact(sock, n):
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            return None
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock):
    """Read one frame from a socket; ``None`` on a clean close between frames."""
    header = _recv_exact(sock, HEADER.size)
    if header is None:
        return None
    _, _, length = HEADER.unpack(header)
    payload = _recv_exact(sock, length) if length else b""
    if payload is None:
        raise IncompleteFrameError("connection closed inside a frame")
    return decode_frame(header + payload)


def hello_payload(k, d):
    return struct.pack("<II", k, d)


def error_payload(code, message):
    return struct.pack("<H", code) + message.encode("utf-8")


def parse_error(payload):
    (code,) = struct.unpack_from("<H", payload)
    return code, payload[2:].decode("utf-8", errors="replace")


def window_to_bytes(window) -> bytes:
    return np.asarray(window, dtype="<f4").tobytes()


def bytes_to_window(payload, k, d):
    if len(payload) != 4 * k * d:
        raise ProtocolError(f"window payload has {len(payload)} bytes, expected {4 * k * d}")
    return np.frombuffer(payload, dtype="<f4").reshape(k, d).astype(np.float64)


def transform_payload(model: TrainedRae, payload) -> bytes:
    """The exact byte-level operation the server performs on one window."""
    window = bytes_to_window(payload, model.k, model.d)
    return window_to_bytes(model.transform_raw(window))


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        model = self.server.model
        sock = self.request
        try:
            first = read_frame(sock)
            if first is None:
                return
            if first.kind != HELLO or len(first.payload) != 8:
                self._fail(ERR_PROTOCOL, "expected a hello frame with k and d")
                return
            k, d = struct.unpack("<II", first.payload)
            if (k, d) != (model.k, model.d):
                self._fail(ERR_SHAPE, f"client shape {k}x{d} does not match model shape {model.k}x{model.d}")
                return
            sock.sendall(encode_frame(HELLO, hello_payload(model.k, model.d)))
            while True:
                frame = read_frame(sock)
                if frame is None:
                    return
                if frame.kind != WINDOW:
                    self._fail(ERR_PROTOCOL, f"unexpected frame kind {frame.kind}")
                    return
                if len(frame.payload) != 4 * k * d:
                    self._fail(ERR_SHAPE, f"window payload has {len(frame.payload)} bytes, expected {4 * k * d}")
                    return
                sock.sendall(encode_frame(TRANSFORMED, transform_payload(model, frame.payload)))
        except ProtocolError as exc:
            self._fail(ERR_MALFORMED, str(exc))
        except (ConnectionError, OSError) as exc:
            log.debug("connection from %s dropped: %s", self.client_address, exc)

    def _fail(self, code, message):
        log.info("closing %s: %s", self.client_address, message)
        try:
            self.request.sendall(encode_frame(ERROR, error_payload(code, message)))
        except OSError:
            pass


class MediatorServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, model: TrainedRae):
        self.model = model
        super().__init__(address, _Handler)


def parse_address(text):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


def start_server(model: TrainedRae, address=("127.0.0.1", 0)):
    """Run a server on a background thread; returns it (call ``shutdown()`` to stop)."""
    server = MediatorServer(address, model)
    thread = threading.Thread(target=server.serve_forever, name="mediator", daemon=True)
    thread.start()
    return server


def serve(model: TrainedRae, address):
    """Serve until SIGINT or SIGTERM."""
    if isinstance(address, str):
        address = parse_address(address)
    server = start_server(model, address)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    host, port = server.server_address[:2]
    log.info("mediator listening on %s:%d (k=%d, d=%d)", host, port, model.k, model.d)
    print(f"listening on {host}:{port}", flush=True)
    stop.wait()
    server.shutdown()
    server.server_close()


class MediatorClient:
    """Blocking client; ``transform_many`` pipelines all windows before reading."""

    def __init__(self, address, k, d, timeout=30.0):
        self.k, self.d = k, d
        self.sock = socket.create_connection(address, timeout=timeout)
        self.sock.sendall(encode_frame(HELLO, hello_payload(k, d)))
        reply = self._expect(HELLO)
        if struct.unpack("<II", reply.payload) != (k, d):
            raise ProtocolError("server acknowledged a different shape")

    def _expect(self, kind):
        frame = read_frame(self.sock)
        if frame is None:
            raise ConnectionError("server closed the connection")
        if frame.kind == ERROR:
            raise MediatorError(*parse_error(frame.payload))
        if frame.kind != kind:
            raise ProtocolError(f"expected frame kind {kind}, got {frame.kind}")
        return frame

    def transform_bytes(self, payload):
        self.sock.sendall(encode_frame(WINDOW, payload))
        return self._expect(TRANSFORMED).payload

    def transform(self, window):
        return bytes_to_window(self.transform_bytes(window_to_bytes(window)), self.k, self.d)

    def transform_many(self, windows):
        windows = list(windows)
        data = b"".join(encode_frame(WINDOW, window_to_bytes(w)) for w in windows)
        # send from a side thread so neither end blocks on a full socket buffer
        sender = threading.Thread(target=self.sock.sendall, args=(data,), daemon=True)
        sender.start()
        out = [bytes_to_window(self._expect(TRANSFORMED).payload, self.k, self.d) for _ in windows]
        sender.join()
        return out

    def close(self):
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
