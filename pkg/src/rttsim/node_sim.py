"""One simulated transceiver: counter clock, capture register, analog delay.

The counter is a 16-bit timer extended by a 16-bit overflow register and is
clocked from a 26 MHz reference.  Sync-word flags (TX sent / RX received)
trigger captures; the flags lag the physical packet edges by an
undocumented, setting-dependent delay in the analog front end, which is the
dominant systematic error of round-trip ranging on this class of hardware.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .rf_channel import CABLE_VELOCITY_FACTOR, SPEED_OF_LIGHT

NOMINAL_CLOCK_HZ = 26e6
COUNTER_BITS = 32
COUNTER_MODULUS = 1 << COUNTER_BITS
WORD = 1 << 16

#: operating window of the boards; outside it packets are not received
ATTENUATION_WINDOW_DB = (36.0, 81.0)

PREAMBLE_BYTES = 4
SYNC_BYTES = 4
FRAME_BYTES = 17


class PacketLost(Exception):
    """The packet never raised a sync flag at the receiver."""


class ProtocolError(Exception):
    pass


class Frequency(Enum):
    MHZ_868 = 868e6
    MHZ_915 = 915e6

    @property
    def hz(self) -> float:
        return self.value

    @property
    def mhz(self) -> int:
        return int(round(self.value / 1e6))

    @classmethod
    def from_mhz(cls, mhz: float) -> "Frequency":
        for f in cls:
            if abs(f.mhz - mhz) < 0.5:
                return f
        raise ValueError(f"unsupported carrier {mhz} MHz (expected 868 or 915)")


class Modulation(Enum):
    FSK2 = "FSK2"
    GFSK2 = "GFSK2"


class DataRate(Enum):
    KBPS_1_2 = 1200
    KBPS_38_4 = 38400
    KBPS_250 = 250000

    @property
    def bps(self) -> int:
        return self.value

    @property
    def kbps(self) -> float:
        return self.value / 1000.0

    @classmethod
    def from_kbps(cls, kbps: float) -> "DataRate":
        for r in cls:
            if abs(r.kbps - kbps) < 1e-6:
                return r
        raise ValueError(f"unsupported data rate {kbps} kb/s (expected 1.2, 38.4 or 250)")


#: time of one single measurement (Table 1, "Measurement duration" for N = 1)
MEASUREMENT_PERIOD_S = {
    DataRate.KBPS_250: 1.4e-3,
    DataRate.KBPS_38_4: 4.3e-3,
    DataRate.KBPS_1_2: 110e-3,
}


@dataclass(frozen=True)
class RfSettings:
    frequency: Frequency = Frequency.MHZ_868
    modulation: Modulation = Modulation.FSK2
    data_rate: DataRate = DataRate.KBPS_250
    tx_power: float = 0.0  # dBm

    @property
    def label(self) -> str:
        rate = f"{self.data_rate.kbps:g}"
        return f"{rate}kbps-{self.modulation.value}-{self.frequency.mhz}MHz"

    @property
    def measurement_period(self) -> float:
        return MEASUREMENT_PERIOD_S[self.data_rate]

    @property
    def head_time(self) -> float:
        """Air time of preamble + sync word, i.e. from TX start to the TX sync flag."""
        return (PREAMBLE_BYTES + SYNC_BYTES) * 8 / self.data_rate.bps


def table1_settings() -> list[RfSettings]:
    """The ten setting rows of the paper's batch-size table, in table order."""
    rows = []
    for rate in (DataRate.KBPS_250, DataRate.KBPS_38_4, DataRate.KBPS_1_2):
        mods = (Modulation.GFSK2,) if rate is DataRate.KBPS_1_2 else (Modulation.GFSK2, Modulation.FSK2)
        for mod in mods:
            for freq in (Frequency.MHZ_868, Frequency.MHZ_915):
                rows.append(RfSettings(freq, mod, rate))
    return rows


@dataclass(frozen=True)
class ClockModel:
    nominal_hz: float = NOMINAL_CLOCK_HZ
    ppm_error: float = 0.0
    temp_coeff: float = 0.0  # fraction per degC
    voltage_coeff: float = 0.0  # fraction per V
    reference_temp: float = 20.0
    reference_voltage: float = 3.3

    def __post_init__(self):
        if self.nominal_hz <= 0:
            raise ValueError("nominal_hz must be positive")
        if self.effective_hz() <= 0:
            raise ValueError("clock model yields a non-positive frequency")

    @classmethod
    def crystal(cls, ppm_error: float = 0.0, nominal_hz: float = NOMINAL_CLOCK_HZ) -> "ClockModel":
        if abs(ppm_error) > 80:
            raise ValueError("crystal profile is specified to +-80 ppm")
        return cls(nominal_hz=nominal_hz, ppm_error=ppm_error)

    @classmethod
    def rc_oscillator(cls, nominal_hz: float = 20e6, **kwargs) -> "ClockModel":
        # internal RC oscillator: 0.1 %/degC and 1.9 %/V
        return cls(nominal_hz=nominal_hz, temp_coeff=0.001, voltage_coeff=0.019, **kwargs)

    def effective_hz(self, temp: float | None = None, voltage: float | None = None) -> float:
        dt = 0.0 if temp is None else temp - self.reference_temp
        dv = 0.0 if voltage is None else voltage - self.reference_voltage
        return self.nominal_hz * (1.0 + self.ppm_error * 1e-6
                                  + self.temp_coeff * dt + self.voltage_coeff * dv)


@dataclass
class CaptureCounter:
    """16-bit timer plus 16-bit overflow word; ``phase`` is the sub-cycle remainder."""

    low: int = 0
    high: int = 0
    phase: float = 0.0
    captures: list[int] = field(default_factory=list)

    @property
    def value(self) -> int:
        return self.high * WORD + self.low

    def advance(self, cycles: int) -> None:
        total = (self.value + cycles) % COUNTER_MODULUS
        self.high, self.low = divmod(total, WORD)

    def new_round(self) -> None:
        self.captures.clear()


def advance_clock(clock: ClockModel, counter: CaptureCounter, true_elapsed: float,
                  temp: float | None = None, voltage: float | None = None) -> CaptureCounter:
    """Run the counter for ``true_elapsed`` seconds of true time.

    The fractional cycle left over is carried in ``counter.phase`` so that many
    short advances add up to the same count as one long one.
    """
    if true_elapsed < 0:
        raise ValueError("time does not run backwards")
    total = true_elapsed * clock.effective_hz(temp, voltage) + counter.phase
    whole = math.floor(total)
    counter.phase = total - whole
    counter.advance(whole)
    return counter


def capture_on_sync(counter: CaptureCounter) -> int:
    if len(counter.captures) >= 4:
        raise ProtocolError("a measurement round has at most four captures (t0..t3)")
    stamp = counter.value
    counter.captures.append(stamp)
    return stamp


def exp_offset(attenuation, a: float, b: float, k: float, ref: float = ATTENUATION_WINDOW_DB[0]):
    """``a + b * exp(k * (A - ref))``; works on scalars and arrays."""
    return a + b * np.exp(k * (np.asarray(attenuation, dtype=float) - ref))


# Per-hop delay of the FSK front end.  Not tabulated anywhere; chosen to sit
# inside the 6-8 us flag offset and the 6-1400 us round-trip envelope.
DEFAULT_FSK_BASE_DELAY_S = {
    DataRate.KBPS_250: 7e-6,
    DataRate.KBPS_38_4: 30e-6,
    DataRate.KBPS_1_2: 600e-6,
}
GFSK_DELAY_FACTOR = 1.4
GFSK_NOISE_FACTOR = 2.0

#: single-shot distance standard deviation (m) of FSK in the 18 m cable setup.
#: 1.2 kb/s FSK was not measured; half the GFSK value is used.
DEFAULT_FSK_SINGLE_SHOT_STD_M = {
    DataRate.KBPS_250: 6.09,
    DataRate.KBPS_38_4: 30.10,
    DataRate.KBPS_1_2: 1741.33 / GFSK_NOISE_FACTOR,
}

#: variance (cycles^2) that capture quantisation adds to a corrected RTT.
#: TX captures sit at a fixed phase of the sender's own clock; the two RX
#: captures land at uniformly random phases.
QUANTIZATION_VARIANCE = 2.0 / 12.0


def hop_noise_sigma(distance_std: float, clock_hz: float = NOMINAL_CLOCK_HZ,
                    velocity_factor: float = CABLE_VELOCITY_FACTOR,
                    quantization_var: float = QUANTIZATION_VARIANCE) -> float:
    """Per-hop Gaussian delay sigma (s) giving a single-shot distance std of ``distance_std`` m.

    A corrected round trip contains two independent hop delays plus the
    quantisation of the two RX captures, so
    ``var_rtt = 2 sigma_hop^2 + quantization_var`` in cycles^2.
    """
    m_per_rtt_cycle = SPEED_OF_LIGHT * velocity_factor / clock_hz / 2.0
    var_rtt = (distance_std / m_per_rtt_cycle) ** 2
    if var_rtt <= quantization_var:
        raise ValueError("target spread is below the quantisation floor")
    return math.sqrt((var_rtt - quantization_var) / 2.0) / clock_hz


@dataclass
class AnalogDelayModel:
    base_delay: dict  # (Frequency, Modulation, DataRate) -> s
    noise_sigma: dict  # (Modulation, DataRate) -> s
    atten_a: float = 0.0  # s
    atten_b: float = 2.0 / NOMINAL_CLOCK_HZ  # s
    atten_k: float = 0.08  # 1/dB
    atten_ref: float = ATTENUATION_WINDOW_DB[0]
    temp_slope: float = 0.0  # s/degC
    voltage_slope: float = 0.0  # s/V
    reference_temp: float = 20.0
    reference_voltage: float = 3.3
    tx_split: float = 0.5
    window: tuple = ATTENUATION_WINDOW_DB

    def __post_init__(self):
        if not 0.0 <= self.tx_split <= 1.0:
            raise ValueError("tx_split must be in [0, 1]")
        if any(v < 0 for v in self.base_delay.values()):
            raise ValueError("base delays must be non-negative")
        if any(v < 0 for v in self.noise_sigma.values()):
            raise ValueError("noise sigmas must be >= 0")
        if self.atten_b < 0 or self.atten_k < 0:
            raise ValueError("attenuation offset must be non-decreasing in attenuation")

    @classmethod
    def default(cls, **overrides) -> "AnalogDelayModel":
        base = {}
        noise = {}
        for rate, delay in DEFAULT_FSK_BASE_DELAY_S.items():
            sigma = hop_noise_sigma(DEFAULT_FSK_SINGLE_SHOT_STD_M[rate])
            noise[(Modulation.FSK2, rate)] = sigma
            noise[(Modulation.GFSK2, rate)] = GFSK_NOISE_FACTOR * sigma
            for freq in Frequency:
                base[(freq, Modulation.FSK2, rate)] = delay
                base[(freq, Modulation.GFSK2, rate)] = GFSK_DELAY_FACTOR * delay
        overrides.setdefault("base_delay", base)
        overrides.setdefault("noise_sigma", noise)
        return cls(**overrides)

    @classmethod
    def ideal(cls) -> "AnalogDelayModel":
        """No analog delay at all: flags coincide with the physical edges."""
        base = {(f, m, r): 0.0 for f in Frequency for m in Modulation for r in DataRate}
        noise = {(m, r): 0.0 for m in Modulation for r in DataRate}
        return cls(base, noise, atten_a=0.0, atten_b=0.0, atten_k=0.0)

    def base(self, settings: RfSettings) -> float:
        return self.base_delay[(settings.frequency, settings.modulation, settings.data_rate)]

    def sigma(self, settings: RfSettings) -> float:
        return self.noise_sigma[(settings.modulation, settings.data_rate)]

    def attenuation_offset(self, attenuation):
        return exp_offset(attenuation, self.atten_a, self.atten_b, self.atten_k, self.atten_ref)

    def mean_delay(self, settings: RfSettings, attenuation: float,
                   temp: float | None = None, voltage: float | None = None) -> float:
        check_window(attenuation, self.window)
        dt = 0.0 if temp is None else temp - self.reference_temp
        dv = 0.0 if voltage is None else voltage - self.reference_voltage
        offset = self.atten_a + self.atten_b * math.exp(self.atten_k * (attenuation - self.atten_ref))
        return (self.base(settings) + offset
                + self.temp_slope * dt + self.voltage_slope * dv)


def check_window(attenuation: float, window=ATTENUATION_WINDOW_DB) -> None:
    lo, hi = window
    if attenuation > hi:
        raise PacketLost(f"attenuation {attenuation:.2f} dB above the {hi} dB sensitivity limit")
    if attenuation < lo:
        raise PacketLost(f"attenuation {attenuation:.2f} dB below the {lo} dB saturation limit")


def analog_delay_sample(model: AnalogDelayModel, settings: RfSettings, attenuation: float,
                        rng: np.random.Generator, temp: float | None = None,
                        voltage: float | None = None) -> float:
    """One draw of the delay between a physical sync edge and the RX flag (s)."""
    mean = model.mean_delay(settings, attenuation, temp, voltage)
    sigma = model.sigma(settings)
    value = mean + sigma * rng.standard_normal()
    if sigma == 0.0:
        return mean
    while value <= 0.0:
        value = mean + sigma * rng.standard_normal()
    return value


@dataclass(frozen=True)
class RssiModel:
    """RSSI register behaviour: Gaussian jitter, implausible warm-up values, rare spikes."""

    sigma_db: float = 0.5
    warmup: int = 60
    spike_probability: float = 1e-3
    spike_db: float = 20.0

    def read(self, true_power: float, index_in_round: int, rng: np.random.Generator) -> int:
        jitter = rng.standard_normal()
        u, spike, garbage = rng.random(3)
        if index_in_round < self.warmup:
            return -128 + int(garbage * 129)
        value = true_power + self.sigma_db * jitter
        if u < self.spike_probability:
            spike = 2.0 * spike - 1.0
            value += math.copysign(5.0 + (self.spike_db - 5.0) * abs(spike), spike)
        return min(127, max(-128, round(value)))


class SyncEvent(Enum):
    TX = "tx_sync"
    RX = "rx_sync"


class Node:
    """Hardware state of one board: clock, capture counter, delay model, RNG streams."""

    def __init__(self, settings: RfSettings | None = None, clock: ClockModel | None = None,
                 delay_model: AnalogDelayModel | None = None, seed=None,
                 rssi_model: RssiModel | None = None, temp: float = 20.0, voltage: float = 3.3,
                 address: int = 0, random_phase: bool = True):
        self.settings = settings or RfSettings()
        self.clock = clock or ClockModel()
        self.delay_model = delay_model or AnalogDelayModel.default()
        self.rssi_model = rssi_model or RssiModel()
        self.temp = temp
        self.voltage = voltage
        self.address = address
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        delay_seq, rssi_seq = seq.spawn(2)
        self.rng = np.random.default_rng(delay_seq)
        self.rssi_rng = np.random.default_rng(rssi_seq)
        self.counter = CaptureCounter()
        self.time = 0.0
        if random_phase:
            self.counter.phase = float(self.rng.random())

    @property
    def hz(self) -> float:
        return self.clock.effective_hz(self.temp, self.voltage)

    def advance_to(self, t: float) -> None:
        if t < self.time:
            raise ValueError(f"node clock cannot run backwards ({t} < {self.time})")
        advance_clock(self.clock, self.counter, t - self.time, self.temp, self.voltage)
        self.time = t

    def capture_at(self, t: float) -> int:
        self.advance_to(t)
        return capture_on_sync(self.counter)

    def clock_edge(self, t: float) -> float:
        """Middle of the first counter cycle that starts after ``t``.

        Firmware acts on clock edges, so a transmission requested at ``t``
        starts with the next cycle; the half-cycle keeps later flags of the
        same packet away from exact edges, where float rounding would decide
        the captured value.
        """
        if t < self.time:
            raise ValueError(f"node clock cannot run backwards ({t} < {self.time})")
        hz = self.hz
        cycles = (t - self.time) * hz + self.counter.phase
        return t + (math.floor(cycles) + 1.5 - cycles) / hz

    def air_time(self, nominal_seconds: float) -> float:
        """True duration of something clocked from this node's crystal (bit timing)."""
        return nominal_seconds * self.clock.nominal_hz / self.hz

    def read_rssi(self, true_power: float, index_in_round: int) -> int:
        return self.rssi_model.read(true_power, index_in_round, self.rssi_rng)


def flag_timeline(node: Node, event: SyncEvent, true_time: float,
                  attenuation: float | None = None) -> float:
    """Time the sync flag rises for a physical sync edge at ``true_time``.

    TX flags lag by the transmit share of the base delay; RX flags by a full
    analog-delay draw.
    """
    model = node.delay_model
    if event is SyncEvent.TX:
        return true_time + model.tx_split * model.base(node.settings)
    if attenuation is None:
        raise ValueError("RX flag timing needs the link attenuation")
    return true_time + analog_delay_sample(model, node.settings, attenuation, node.rng,
                                           node.temp, node.voltage)
