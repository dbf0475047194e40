"""Foot-unit telemetry: wire codec, emulated lossy channel, receiver policy.

Wire format (little-endian, fixed 36 bytes):

    offset  size  field
    0       2     magic "CP"
    2       1     version (1)
    3       1     foot_id (0 = left, 1 = right)
    4       2     seq, wrapping u16
    6       4     timestamp_ms, u32
    10      16    per-cell mass, 4 x i32 centigrams
    26      2     x_cop, i16 milli-units (|x| <= 1000)
    28      2     y_cop, i16 milli-units
    30      4     f_total, i32 centigrams
    34      2     CRC-16/CCITT-FALSE over bytes 0..33

Fixed-point fields keep packets bit-exact across platforms.  The channel
emulates the wireless hop with seeded per-packet loss and latency; the
receiver holds the latest sample per foot, rejects stale sequence numbers
and flags feet whose data has outrun the staleness timeout.
"""

from __future__ import annotations

import binascii
import heapq
import struct
from dataclasses import dataclass, field

import numpy as np

from copbalance.cop import LEFT, RIGHT, FootCopSample

MAGIC = b"CP"
VERSION = 1
_HEADER = struct.Struct("<2sBBHI")
_BODY = struct.Struct("<4ihhi")
_CRC = struct.Struct("<H")
PACKET_SIZE = _HEADER.size + _BODY.size + _CRC.size  # 36

_I32_MAX = 2**31 - 1

FOOT_IDS = {LEFT: 0, RIGHT: 1}
FOOT_NAMES = {0: LEFT, 1: RIGHT}

DEFAULT_STALENESS_TIMEOUT_MS = 250.0
SEQ_WINDOW = 32768  # serial-number arithmetic half-range


class TelemetryError(Exception):
    """Base class for codec and receiver failures."""


class RangeOverflow(TelemetryError):
    """A field does not fit its fixed-point wire representation."""


class Truncated(TelemetryError):
    """Byte string is not a whole packet."""


class BadMagic(TelemetryError):
    pass


class BadVersion(TelemetryError):
    pass


class BadCrc(TelemetryError):
    pass


class NoDataYet(TelemetryError):
    """Receiver polled for a foot that has not delivered any packet."""


def crc16_ccitt(data: bytes) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF)."""
    return binascii.crc_hqx(data, 0xFFFF)


def _to_cg(grams: float, what: str) -> int:
    cg = round(grams * 100.0)
    if abs(cg) > _I32_MAX:
        raise RangeOverflow(f"{what} {grams} g exceeds i32 centigrams")
    return int(cg)


def _to_milli(value: float, what: str) -> int:
    milli = round(value * 1000.0)
    if abs(milli) > 1000:
        raise RangeOverflow(f"{what} {value} outside foot-local [-1, 1]")
    return int(milli)


def encode(sample: FootCopSample, seq: int) -> bytes:
    """Pack a per-foot sample into the fixed wire layout."""
    head = _HEADER.pack(
        MAGIC,
        VERSION,
        FOOT_IDS[sample.foot],
        seq & 0xFFFF,
        int(sample.timestamp_ms) & 0xFFFFFFFF,
    )
    body = _BODY.pack(
        *(_to_cg(m, f"cell {i} mass") for i, m in enumerate(sample.per_cell_g)),
        _to_milli(sample.x_cop, "x_cop"),
        _to_milli(sample.y_cop, "y_cop"),
        _to_cg(sample.f_total_g, "f_total"),
    )
    payload = head + body
    return payload + _CRC.pack(crc16_ccitt(payload))


def decode(data: bytes) -> tuple[FootCopSample, int]:
    """Inverse of :func:`encode`. Returns (sample, seq).

    Raises Truncated / BadMagic / BadVersion / BadCrc, each distinct.
    """
    if len(data) != PACKET_SIZE:
        raise Truncated(f"expected {PACKET_SIZE} bytes, got {len(data)}")
    # CRC first so that any in-flight corruption surfaces as BadCrc; magic and
    # version checks then only ever reject well-formed-but-foreign packets
    (crc_stored,) = _CRC.unpack_from(data, PACKET_SIZE - _CRC.size)
    if crc16_ccitt(data[: PACKET_SIZE - _CRC.size]) != crc_stored:
        raise BadCrc("checksum mismatch")
    magic, version, foot_id, seq, timestamp = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    c0, c1, c2, c3, x_milli, y_milli, f_cg = _BODY.unpack_from(data, _HEADER.size)
    sample = FootCopSample(
        foot=FOOT_NAMES[foot_id],
        f_total_g=f_cg / 100.0,
        x_cop=x_milli / 1000.0,
        y_cop=y_milli / 1000.0,
        per_cell_g=(c0 / 100.0, c1 / 100.0, c2 / 100.0, c3 / 100.0),
        timestamp_ms=timestamp,
    )
    return sample, seq


# ---------------------------------------------------------------------------
# Channel emulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelModel:
    """Lossy-link parameters. Identical seed gives an identical schedule."""

    loss_prob: float = 0.0
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    reorder: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be >= 0")


class Channel:
    """Datagram channel: independent per-packet drop and sampled latency.

    Without ``reorder`` delivery times are made non-decreasing in submission
    order, i.e. the link is FIFO with variable delay.
    """

    def __init__(self, model: ChannelModel):
        self.model = model
        self._rng = np.random.default_rng(model.seed)
        self._pending: list[tuple[float, int, bytes]] = []
        self._n_submitted = 0
        self._n_dropped = 0
        self._last_scheduled_ms = -np.inf

    def submit(self, data: bytes, now_ms: float) -> None:
        self._n_submitted += 1
        u = self._rng.random()
        latency = self.model.latency_ms + self._rng.uniform(0.0, self.model.jitter_ms)
        if u < self.model.loss_prob:
            self._n_dropped += 1
            return
        deliver_at = now_ms + latency
        if not self.model.reorder:
            deliver_at = max(deliver_at, self._last_scheduled_ms)
            self._last_scheduled_ms = deliver_at
        heapq.heappush(self._pending, (deliver_at, self._n_submitted, data))

    def poll(self, now_ms: float) -> list[tuple[float, bytes]]:
        """Packets whose delivery time has arrived, in delivery order."""
        out = []
        while self._pending and self._pending[0][0] <= now_ms:
            deliver_at, _, data = heapq.heappop(self._pending)
            out.append((deliver_at, data))
        return out

    @property
    def stats(self) -> dict[str, int]:
        return {
            "submitted": self._n_submitted,
            "dropped": self._n_dropped,
            "in_flight": len(self._pending),
        }


class UdpTransport:
    """Live-mode packet hop over local UDP datagrams.

    Same submit/poll surface as :class:`Channel`, so the control loop does
    not care which hop it runs on; arrival times are stamped at poll time.
    Deterministic tests should use :class:`Channel` instead.
    """

    def __init__(self, port: int, host: str = "127.0.0.1"):
        import socket as _socket

        self._addr = (host, port)
        self._rx = _socket.socket(_socket.AF_INET, _socket.SOCK_DGRAM)
        self._rx.bind((host, port))
        self._rx.setblocking(False)
        self._tx = _socket.socket(_socket.AF_INET, _socket.SOCK_DGRAM)

    @property
    def port(self) -> int:
        return self._rx.getsockname()[1]

    def submit(self, data: bytes, now_ms: float) -> None:
        self._tx.sendto(data, (self._addr[0], self.port))

    def poll(self, now_ms: float) -> list[tuple[float, bytes]]:
        out = []
        while True:
            try:
                data, _ = self._rx.recvfrom(4096)
            except BlockingIOError:
                return out
            out.append((now_ms, data))

    def close(self) -> None:
        self._rx.close()
        self._tx.close()


# ---------------------------------------------------------------------------
# Receiver
# ---------------------------------------------------------------------------

@dataclass
class _FootSlot:
    sample: FootCopSample
    seq: int
    arrival_ms: float


@dataclass
class Receiver:
    """Latest-sample-per-foot slots with monotone-seq and staleness policy."""

    staleness_timeout_ms: float = DEFAULT_STALENESS_TIMEOUT_MS
    _slots: dict[str, _FootSlot] = field(default_factory=dict)

    def push(self, data: bytes, now_ms: float) -> bool:
        """Decode and accept a packet. Returns False when the packet loses
        the seq race (old data after new); decode errors propagate."""
        sample, seq = decode(data)
        slot = self._slots.get(sample.foot)
        if slot is not None:
            diff = (seq - slot.seq) & 0xFFFF
            if diff == 0 or diff >= SEQ_WINDOW:
                return False
        self._slots[sample.foot] = _FootSlot(sample=sample, seq=seq, arrival_ms=now_ms)
        return True

    def poll_foot(self, foot: str, now_ms: float) -> tuple[FootCopSample, bool]:
        """Last-held sample and freshness for one foot."""
        slot = self._slots.get(foot)
        if slot is None:
            raise NoDataYet(f"no packet received yet for {foot} foot")
        fresh = (now_ms - slot.arrival_ms) <= self.staleness_timeout_ms
        return slot.sample, fresh

    def poll(self, now_ms: float) -> dict[str, tuple[FootCopSample, bool]]:
        """Both feet at once; raises NoDataYet until each foot has reported."""
        return {foot: self.poll_foot(foot, now_ms) for foot in (LEFT, RIGHT)}
