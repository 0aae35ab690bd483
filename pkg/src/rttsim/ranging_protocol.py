"""Master/slave round-trip measurement protocol.

One round trip::

    master  TX sync flag -> t0 ............................ RX sync flag -> t3
    slave            RX sync flag -> t1 ... TX sync flag -> t2

The slave piggy-backs ``t2 - t1`` (its processing latency, in its own cycles)
on the reply frame, so the master can form the corrected round-trip time
``(t3 - t0) - (t2 - t1)`` without synchronised clocks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .node_sim import (
    COUNTER_MODULUS, FRAME_BYTES, Node, PacketLost, ProtocolError, RfSettings,
    SyncEvent, check_window, flag_timeline,
)
from .rf_channel import Channel

PREAMBLE = b"\xaa" * 4
DEFAULT_SYNC_WORD = b"\xd3\x91\xd3\x91"
RETRY_LIMIT = 10
DEFAULT_PROCESSING_TIME = 100e-6

_DATA = struct.Struct(">IbH")


class FrameError(Exception):
    """A received frame is dropped; no capture fires."""


class PreambleError(FrameError):
    pass


class SyncMismatch(FrameError):
    pass


class CrcFailure(FrameError):
    pass


class LinkFailure(Exception):
    """Retry budget exhausted."""


class CampaignAborted(Exception):
    pass


def _crc_table(poly: int = 0x1021) -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ poly) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return table


_CRC_TABLE = _crc_table()


def crc16_ccitt(data: bytes, init: int = 0xFFFF) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor."""
    crc = init
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ byte]
    return crc


@dataclass(frozen=True)
class RangingPacket:
    latency_cycles: int = 0
    rssi: int = 0
    address: int = 0
    sync_word: bytes = DEFAULT_SYNC_WORD

    def __post_init__(self):
        if not 0 <= self.latency_cycles < COUNTER_MODULUS:
            raise ValueError("latency must fit in 4 bytes")
        if not -128 <= self.rssi <= 127:
            raise ValueError("rssi must fit in a signed byte")
        if not 0 <= self.address <= 0xFFFF:
            raise ValueError("address must fit in 2 bytes")
        if len(self.sync_word) != 4:
            raise ValueError("sync word is 4 bytes")


def encode_packet(p: RangingPacket) -> bytes:
    data = _DATA.pack(p.latency_cycles, p.rssi, p.address)
    return PREAMBLE + p.sync_word + data + crc16_ccitt(data).to_bytes(2, "big")


def decode_packet(frame: bytes, expected_sync: bytes = DEFAULT_SYNC_WORD) -> RangingPacket:
    if len(frame) != FRAME_BYTES:
        raise FrameError(f"expected {FRAME_BYTES} bytes, got {len(frame)}")
    if bytes(frame[:4]) != PREAMBLE:
        raise PreambleError(f"preamble {bytes(frame[:4]).hex()} is not {PREAMBLE.hex()}")
    sync = bytes(frame[4:8])
    if sync != expected_sync:
        raise SyncMismatch(f"sync word {sync.hex()} != {expected_sync.hex()}")
    data = bytes(frame[8:15])
    if crc16_ccitt(data) != int.from_bytes(frame[15:17], "big"):
        raise CrcFailure("checksum mismatch")
    latency, rssi, address = _DATA.unpack(data)
    return RangingPacket(latency, rssi, address, sync)


@dataclass(frozen=True)
class RoundTrip:
    t0: int
    t1: int
    t2: int
    t3: int
    master_rssi: int
    slave_rssi: int
    settings: RfSettings
    reported_latency: int
    attempts: int = 1

    @property
    def rtt(self) -> int:
        return (self.t3 - self.t0) % COUNTER_MODULUS

    @property
    def latency(self) -> int:
        return (self.t2 - self.t1) % COUNTER_MODULUS


def corrected_rtt(rt: RoundTrip) -> int:
    """Round-trip cycles minus the slave latency; may be negative, never clamped."""
    return rt.rtt - rt.latency


class Role(Enum):
    MASTER = "master"
    SLAVE = "slave"


class State(Enum):
    IDLE = "idle"
    TIMING = "timing"  # between the opening and the closing capture


@dataclass
class Station:
    """Protocol state machine shared by master and slave.

    The only role differences: the master may initiate a round, and it times
    TX->RX while the slave times RX->TX.
    """

    role: Role
    node: Node
    address: int = 0
    sync_word: bytes = DEFAULT_SYNC_WORD
    processing_time: float | Callable[[np.random.Generator], float] = DEFAULT_PROCESSING_TIME
    state: State = State.IDLE
    interval_start: int | None = None
    last_interval: int | None = None
    rounds_since_config: int = 0
    _opening: SyncEvent = field(init=False)

    def __post_init__(self):
        self._opening = SyncEvent.TX if self.role is Role.MASTER else SyncEvent.RX

    @property
    def settings(self) -> RfSettings:
        return self.node.settings

    def reset_round(self) -> None:
        self.state = State.IDLE
        self.interval_start = None
        self.node.counter.new_round()

    def initiate(self) -> None:
        if self.role is not Role.MASTER:
            raise ProtocolError("only the master initiates a measurement")
        self.reset_round()

    def on_sync(self, event: SyncEvent, flag_time: float) -> int:
        stamp = self.node.capture_at(flag_time)
        if event is self._opening:
            if self.state is not State.IDLE:
                raise ProtocolError(f"{self.role.value}: {event.value} while {self.state.value}")
            self.interval_start = stamp
            self.state = State.TIMING
        else:
            if self.state is not State.TIMING:
                raise ProtocolError(f"{self.role.value}: {event.value} while {self.state.value}")
            self.last_interval = (stamp - self.interval_start) % COUNTER_MODULUS
            self.state = State.IDLE
        return stamp

    def processing_delay(self) -> float:
        if callable(self.processing_time):
            return float(self.processing_time(self.node.rng))
        return self.processing_time

    def configure(self, settings: RfSettings) -> None:
        self.node.settings = settings
        self.rounds_since_config = 0
        self.reset_round()


def _maybe_lose(channel: Channel, rng: np.random.Generator) -> None:
    if channel.loss_probability and rng.random() < channel.loss_probability:
        raise PacketLost("packet dropped by the channel")


def _transmit(frame: bytes, channel: Channel, rng: np.random.Generator) -> bytes:
    _maybe_lose(channel, rng)
    if channel.corruption_probability and rng.random() < channel.corruption_probability:
        bit = int(rng.integers(0, 8 * FRAME_BYTES))
        buf = bytearray(frame)
        buf[bit // 8] ^= 1 << (bit % 8)
        return bytes(buf)
    return frame


def _attempt(master: Station, slave: Station, channel: Channel, rng: np.random.Generator,
             start: float) -> RoundTrip:
    settings = master.settings
    attenuation = channel.attenuation()
    prop = channel.delay()
    rx_power = settings.tx_power - attenuation
    index = master.rounds_since_config

    master.initiate()
    slave.reset_round()

    tx_start = master.node.clock_edge(max(start, master.node.time))
    p0 = tx_start + master.node.air_time(settings.head_time)
    t0 = master.on_sync(SyncEvent.TX, flag_timeline(master.node, SyncEvent.TX, p0))

    _maybe_lose(channel, rng)
    f1 = flag_timeline(slave.node, SyncEvent.RX, p0 + prop, attenuation)
    t1 = slave.on_sync(SyncEvent.RX, f1)
    slave_rssi = slave.node.read_rssi(rx_power, index)

    reply_start = slave.node.clock_edge(f1 + slave.processing_delay())
    p2 = reply_start + slave.node.air_time(settings.head_time)
    t2 = slave.on_sync(SyncEvent.TX, flag_timeline(slave.node, SyncEvent.TX, p2))
    frame = encode_packet(RangingPacket(slave.last_interval, slave_rssi, slave.address,
                                        slave.sync_word))

    received = _transmit(frame, channel, rng)
    f3 = flag_timeline(master.node, SyncEvent.RX, p2 + prop, attenuation)
    try:
        reply = decode_packet(received, master.sync_word)
    except FrameError as exc:
        raise PacketLost(str(exc)) from exc
    t3 = master.on_sync(SyncEvent.RX, f3)
    master_rssi = master.node.read_rssi(rx_power, index)
    return RoundTrip(t0, t1, t2, t3, master_rssi, reply.rssi, settings, reply.latency_cycles)


def run_round_trip(master: Station, slave: Station, channel: Channel,
                   rng: np.random.Generator, start: float | None = None,
                   retry_limit: int = RETRY_LIMIT) -> RoundTrip:
    """Run one measurement; a lost packet costs one measurement period and is retried."""
    if master.settings != slave.settings:
        raise ProtocolError("master and slave RF settings differ")
    if master.sync_word != slave.sync_word:
        raise ProtocolError("master and slave sync words differ")
    if start is None:
        start = master.node.time
    period = master.settings.measurement_period
    for attempt in range(1, retry_limit + 1):
        try:
            rt = _attempt(master, slave, channel, rng, start)
        except PacketLost:
            master.reset_round()
            slave.reset_round()
            start += period
            continue
        master.rounds_since_config += 1
        slave.rounds_since_config += 1
        if attempt > 1:
            rt = RoundTrip(rt.t0, rt.t1, rt.t2, rt.t3, rt.master_rssi, rt.slave_rssi,
                           rt.settings, rt.reported_latency, attempt)
        return rt
    raise LinkFailure(f"no round trip after {retry_limit} attempts")


@dataclass(frozen=True)
class CampaignCommand:
    count: int
    settings: RfSettings

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("a campaign needs at least one measurement")


def reconfigure(master: Station, slave: Station, settings: RfSettings, channel: Channel,
                rng: np.random.Generator, retry_limit: int = RETRY_LIMIT) -> None:
    """Master pushes ``settings`` to the slave, both switch, then the link is re-established."""
    attenuation = channel.attenuation()
    window = master.node.delay_model.window
    for _ in range(retry_limit):
        try:
            check_window(attenuation, window)
            _maybe_lose(channel, rng)
        except PacketLost:
            continue
        break
    else:
        raise CampaignAborted("slave did not acknowledge the new settings")
    slave.configure(settings)
    master.configure(settings)


def run_campaign(cmd: CampaignCommand, master: Station, slave: Station, channel: Channel,
                 rng: np.random.Generator) -> list[RoundTrip]:
    """Reconfigure, then take ``cmd.count`` measurements back to back.

    Rounds are scheduled one measurement period apart on the master's
    timeline. Any unrecoverable error aborts the campaign without data.
    """
    reconfigure(master, slave, cmd.settings, channel, rng)
    period = cmd.settings.measurement_period
    t = max(master.node.time, slave.node.time)
    records = []
    try:
        for _ in range(cmd.count):
            rt = run_round_trip(master, slave, channel, rng, start=t)
            records.append(rt)
            t += period * rt.attempts
    except LinkFailure as exc:
        raise CampaignAborted(str(exc)) from exc
    return records
