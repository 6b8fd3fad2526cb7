"""Single-bit UE -> RIS-controller feedback protocol and its transports.

Every frame is 6 bytes: big-endian u32 ``seq``, u8 ``kind``, u8 ``flags``.

====  =============  =========  ==========================================
kind  name           direction  flags
====  =============  =========  ==========================================
0x01  TRIAL_APPLIED  ctrl -> UE  0
0x02  FEEDBACK       UE -> ctrl  bit0 = degraded (P(i) < P(i-1)), rest 0
0x03  SESSION_END    UE -> ctrl  0; UE needs no (further) adaptation
====  =============  =========  ==========================================

``SESSION_END`` answering trial 0 means the trigger condition was not met;
answering trial ``i > 0`` means the trial was retained and the early-exit
condition holds.
"""

from __future__ import annotations

import collections
import socket
import struct
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Union

import numpy as np

KIND_TRIAL = 0x01
KIND_FEEDBACK = 0x02
KIND_END = 0x03

FRAME_LEN = 6
_FRAME = struct.Struct(">IBB")
_SEQ_MAX = 0xFFFFFFFF


class FrameError(ValueError):
    """A datagram that is not a valid protocol frame."""


class TransportError(RuntimeError):
    pass


class FeedbackTimeout(TransportError):
    """No matching reply arrived in time; ``config`` is the last accepted one."""

    def __init__(self, seq: int, message: str = "", config=None):
        super().__init__(message or f"no feedback for trial {seq}")
        self.seq = seq
        self.config = config


def _check_seq(seq: int) -> None:
    if not 0 <= seq <= _SEQ_MAX:
        raise ValueError(f"seq {seq} out of u32 range")


@dataclass(frozen=True)
class TrialMsg:
    seq: int

    def __post_init__(self):
        _check_seq(self.seq)


@dataclass(frozen=True)
class FeedbackMsg:
    seq: int
    degraded: bool

    def __post_init__(self):
        _check_seq(self.seq)
        object.__setattr__(self, "degraded", bool(self.degraded))


@dataclass(frozen=True)
class EndMsg:
    seq: int

    def __post_init__(self):
        _check_seq(self.seq)


Message = Union[TrialMsg, FeedbackMsg, EndMsg]


def encode(msg: Message) -> bytes:
    if isinstance(msg, TrialMsg):
        return _FRAME.pack(msg.seq, KIND_TRIAL, 0)
    if isinstance(msg, FeedbackMsg):
        return _FRAME.pack(msg.seq, KIND_FEEDBACK, 1 if msg.degraded else 0)
    if isinstance(msg, EndMsg):
        return _FRAME.pack(msg.seq, KIND_END, 0)
    raise TypeError(f"not a protocol message: {msg!r}")


def decode(frame: bytes) -> Message:
    if len(frame) != FRAME_LEN:
        raise FrameError(f"frame must be {FRAME_LEN} bytes, got {len(frame)}")
    seq, kind, flags = _FRAME.unpack(frame)
    if kind == KIND_FEEDBACK:
        if flags & 0xFE:
            raise FrameError(f"reserved feedback flag bits set: {flags:#04x}")
        return FeedbackMsg(seq, bool(flags & 1))
    if kind in (KIND_TRIAL, KIND_END):
        if flags:
            raise FrameError(f"flags must be zero for kind {kind:#04x}")
        return TrialMsg(seq) if kind == KIND_TRIAL else EndMsg(seq)
    raise FrameError(f"unknown frame kind {kind:#04x}")


Responder = Callable[[bytes], "bytes | None"]


class Link(Protocol):
    """Controller-side view of a transport."""

    def send(self, frame: bytes) -> None: ...

    def recv(self, timeout: float) -> bytes | None: ...

    def close(self) -> None: ...


class InProcessLink:
    """Synchronous link: each sent frame is handed straight to the UE responder.

    ``drop_prob`` and ``duplicate_prob`` act on replies only.  With an empty
    inbox ``recv`` returns immediately, which the controller treats as a
    timeout.
    """

    def __init__(self, responder: Responder, drop_prob: float = 0.0, duplicate_prob: float = 0.0,
                 rng: np.random.Generator | None = None, transcript: list | None = None):
        self.responder = responder
        self.drop_prob = drop_prob
        self.duplicate_prob = duplicate_prob
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.transcript = transcript
        self._inbox: collections.deque[bytes] = collections.deque()

    def send(self, frame: bytes) -> None:
        if self.transcript is not None:
            self.transcript.append(("tx", frame))
        reply = self.responder(frame)
        if reply is None:
            return
        if self.drop_prob and self.rng.random() < self.drop_prob:
            return
        self._inbox.append(reply)
        if self.duplicate_prob and self.rng.random() < self.duplicate_prob:
            self._inbox.append(reply)

    def recv(self, timeout: float) -> bytes | None:
        if not self._inbox:
            return None
        frame = self._inbox.popleft()
        if self.transcript is not None:
            self.transcript.append(("rx", frame))
        return frame

    def close(self) -> None:
        self._inbox.clear()


class UdpUeServer:
    """UE endpoint bound to a UDP socket, answering frames from a thread."""

    def __init__(self, responder: Responder, host: str = "127.0.0.1", port: int = 0,
                 drop_prob: float = 0.0, delay_s: float = 0.0, rng: np.random.Generator | None = None):
        self.responder = responder
        self.drop_prob = drop_prob
        self.delay_s = delay_s
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((host, port))
        self._sock.settimeout(0.05)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, name="ue-endpoint", daemon=True)
        self.error: BaseException | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                frame, peer = self._sock.recvfrom(64)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                reply = self.responder(frame)
            except FrameError:
                continue
            except BaseException as exc:  # surfaced to the controller thread
                self.error = exc
                break
            if reply is None or (self.drop_prob and self.rng.random() < self.drop_prob):
                continue
            if self.delay_s:
                time.sleep(self.delay_s)
            self._sock.sendto(reply, peer)

    def start(self) -> "UdpUeServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join()
        self._sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class UdpLink:
    """Controller-side UDP socket talking to one UE address."""

    def __init__(self, addr: tuple[str, int], transcript: list | None = None):
        self.addr = addr
        self.transcript = transcript
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def send(self, frame: bytes) -> None:
        if self.transcript is not None:
            self.transcript.append(("tx", frame))
        self._sock.sendto(frame, self.addr)

    def recv(self, timeout: float) -> bytes | None:
        self._sock.settimeout(max(timeout, 1e-6))
        try:
            frame, _ = self._sock.recvfrom(64)
        except socket.timeout:
            return None
        if self.transcript is not None:
            self.transcript.append(("rx", frame))
        return frame

    def close(self) -> None:
        self._sock.close()


@dataclass(frozen=True)
class InProcess:
    drop_prob: float = 0.0
    duplicate_prob: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class Datagram:
    host: str = "127.0.0.1"
    port: int = 0
    timeout_ms: float = 1000.0
    drop_prob: float = 0.0
    delay_ms: float = 0.0
    seed: int = 0


Transport = Union[InProcess, Datagram]


def parse_transport(text: str, timeout_ms: float = 1000.0) -> Transport:
    """Parse ``inproc`` or ``udp:HOST:PORT``."""
    if text == "inproc":
        return InProcess()
    if text.startswith("udp:"):
        host, _, port = text[4:].rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bad transport {text!r}, expected udp:HOST:PORT")
        return Datagram(host, int(port), timeout_ms=timeout_ms)
    raise ValueError(f"unknown transport {text!r}")


def format_transport(t: Transport) -> str:
    return "inproc" if isinstance(t, InProcess) else f"udp:{t.host}:{t.port}"


def await_reply(link: Link, seq: int, timeout_s: float) -> Message:
    """Wait for the FEEDBACK/SESSION_END answering ``seq``; stale frames are dropped."""
    deadline = time.monotonic() + timeout_s
    while True:
        frame = link.recv(max(deadline - time.monotonic(), 0.0))
        if frame is None:
            raise FeedbackTimeout(seq)
        try:
            msg = decode(frame)
        except FrameError:
            continue
        if isinstance(msg, (FeedbackMsg, EndMsg)) and msg.seq == seq:
            return msg


class ControllerSide(Protocol):
    def run(self, link: Link, timeout_s: float): ...


def run_session(transport: Transport | str, controller: ControllerSide, ue: Responder,
                transcript: list | None = None):
    """Wire ``controller`` to the UE responder over ``transport`` and run it."""
    if isinstance(transport, str):
        transport = parse_transport(transport)
    if isinstance(transport, InProcess):
        link = InProcessLink(ue, transport.drop_prob, transport.duplicate_prob,
                             np.random.default_rng(transport.seed), transcript)
        return controller.run(link, timeout_s=0.0)
    server = UdpUeServer(ue, transport.host, transport.port, transport.drop_prob,
                         transport.delay_ms / 1e3, np.random.default_rng(transport.seed))
    with server:
        link = UdpLink(server.address, transcript)
        try:
            return controller.run(link, timeout_s=transport.timeout_ms / 1e3)
        except FeedbackTimeout:
            if server.error is not None:
                raise server.error
            raise
        finally:
            link.close()
