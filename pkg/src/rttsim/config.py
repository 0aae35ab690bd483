"""Campaign configuration: a TOML file with a fixed schema.

Unknown keys, wrong types and invalid values raise :class:`ConfigError`
carrying the dotted field path and, when it can be located, the line.

Count fields (samples, trials) are written at desk scale; ``scale = "full"``
or ``--full`` multiplies them by ten to reach the paper's counts.

Schema (all tables optional except the two top-level keys)::

    seed = 1                        # required, 0 <= seed < 2**64
    scenario = "BatchSizeStudy"     # DistanceSweep | AttenuationSweep | BatchSizeStudy | Trilateration
    scale = "desk"                  # desk | full
    write_records = false           # also dump every round trip to records_*.csv

    [[settings]]                    # default: the ten table rows, or 250 kb/s FSK 868 MHz
    frequency_mhz = 868
    modulation = "FSK2"
    data_rate_kbps = 250
    tx_power_dbm = 0.0

    [channel]        cable_length_m, attenuation_db, velocity_factor, cable_loss_db_per_m,
                     loss_probability, corruption_probability
    [clock]          nominal_hz, ppm_error, temp_coeff, voltage_coeff, temperature_c, supply_v
    [delay]          tx_split, atten_a_cycles, atten_b_cycles, atten_k_per_db, atten_ref_db,
                     temp_slope_ns_per_c, voltage_slope_ns_per_v, processing_time_us
    [[delay.base]]   frequency_mhz (optional), modulation, data_rate_kbps, delay_us
    [[delay.noise]]  modulation, data_rate_kbps, and one of sigma_ns / single_shot_std_m
    [rssi]           sigma_db, warmup, spike_probability, spike_db
    [cleaning]       rtt_min, rtt_max, rssi_warmup_discard, rssi_band_db, round_size
    [batch_size_study]   batch_sizes, samples_fast, samples_slow
    [distance_sweep]     distances_m, reference_distance_m, samples_per_point
    [attenuation_sweep]  start_db, stop_db, step_db, cable_length_m, samples_per_point
    [trilateration]      anchors, targets, trials, samples_per_anchor, sigma_targets_m,
                         reference_distance_m, calibration_step_db, calibration_samples
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .estimation import CleaningPolicy
from .node_sim import (
    NOMINAL_CLOCK_HZ, AnalogDelayModel, ClockModel, DataRate, Frequency, Modulation,
    RfSettings, RssiModel, hop_noise_sigma, table1_settings,
)
from .ranging_protocol import DEFAULT_PROCESSING_TIME

FULL_SCALE_FACTOR = 10


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = path or "<config>"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")


class Scenario(Enum):
    DISTANCE_SWEEP = "DistanceSweep"
    ATTENUATION_SWEEP = "AttenuationSweep"
    BATCH_SIZE_STUDY = "BatchSizeStudy"
    TRILATERATION = "Trilateration"


@dataclass(frozen=True)
class ChannelParams:
    cable_length_m: float = 18.0
    attenuation_db: float = 60.0
    velocity_factor: float = 0.8
    cable_loss_db_per_m: float = 0.14
    loss_probability: float = 0.0
    corruption_probability: float = 0.0


@dataclass(frozen=True)
class BatchParams:
    batch_sizes: tuple = (1, 20, 50, 100, 200, 500, 1000, 2000, 5000)
    samples_fast: int = 30_000  # 250 and 38.4 kb/s
    samples_slow: int = 5_000  # 1.2 kb/s


@dataclass(frozen=True)
class DistanceParams:
    distances_m: tuple = (2.0, 13.0, 23.0, 33.0, 43.0)
    reference_distance_m: float = 2.0
    samples_per_point: int = 2_500


@dataclass(frozen=True)
class AttenuationParams:
    start_db: float = 36.0
    stop_db: float = 81.0
    step_db: float = 1.0
    cable_length_m: float = 2.0
    samples_per_point: int = 2_500

    def points(self) -> list[float]:
        n = int(round((self.stop_db - self.start_db) / self.step_db))
        return [self.start_db + i * self.step_db for i in range(n + 1)]


@dataclass(frozen=True)
class TrilaterationParams:
    anchors: tuple = ((0.0, 0.0), (20.0, 0.0), (20.0, 20.0), (0.0, 20.0))
    targets: tuple = ((7.0, 11.0),)
    trials: int = 20
    samples_per_anchor: int = 200
    sigma_targets_m: tuple = (0.5, 1.0)
    reference_distance_m: float = 2.0
    calibration_step_db: float = 3.0
    calibration_samples: int = 1_000


@dataclass(frozen=True)
class CampaignConfig:
    seed: int
    scenario: Scenario
    settings: tuple = ()
    full: bool = False
    write_records: bool = False
    channel: ChannelParams = ChannelParams()
    clock: ClockModel = ClockModel()
    temperature_c: float = 20.0
    supply_v: float = 3.3
    delay: AnalogDelayModel = field(default_factory=AnalogDelayModel.default)
    processing_time_s: float = DEFAULT_PROCESSING_TIME
    rssi: RssiModel = RssiModel()
    cleaning: CleaningPolicy = CleaningPolicy()
    batch: BatchParams = BatchParams()
    distance: DistanceParams = DistanceParams()
    attenuation: AttenuationParams = AttenuationParams()
    trilateration: TrilaterationParams = TrilaterationParams()

    @property
    def scale(self) -> int:
        return FULL_SCALE_FACTOR if self.full else 1

    def with_overrides(self, seed: int | None = None, full: bool | None = None) -> "CampaignConfig":
        from dataclasses import replace
        kw = {}
        if seed is not None:
            kw["seed"] = _check_seed(seed, "seed")
        if full:
            kw["full"] = True
        return replace(self, **kw)


# --- parsing -------------------------------------------------------------

_NUM = (int, float)


class _Reader:
    """Walks the parsed TOML tree and turns problems into ConfigErrors with line numbers."""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def line_of(self, path: str) -> int | None:
        parts = path.replace("]", "").replace("[", ".").split(".")
        keys = [p for p in parts if p and not p.isdigit()]
        if not keys:
            return None
        key = re.escape(keys[-1])
        header = ".".join(keys[:-1])
        start = 0
        if header:
            pat = re.compile(r"^\s*\[\[?\s*" + re.escape(header) + r"\s*\]\]?\s*$")
            for i, ln in enumerate(self.lines):
                if pat.match(ln):
                    start = i
                    break
        pat = re.compile(r"^\s*(\[\[?\s*)?([\w.]*\.)?" + key + r"\b")
        for i in range(start, len(self.lines)):
            if pat.match(self.lines[i]):
                return i + 1
        return None

    def error(self, message: str, path: str) -> ConfigError:
        return ConfigError(message, path, self.line_of(path))

    def table(self, data, path: str, allowed: dict) -> dict:
        if not isinstance(data, dict):
            raise self.error("expected a table", path)
        out = {}
        for key, value in data.items():
            sub = f"{path}.{key}" if path else key
            if key not in allowed:
                raise self.error(f"unknown key '{key}'", sub)
            kind = allowed[key]
            out[key] = self.value(value, sub, kind)
        return out

    def value(self, value, path: str, kind):
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, _NUM):
                raise self.error(f"expected a number, got {type(value).__name__}", path)
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise self.error(f"expected an integer, got {type(value).__name__}", path)
            return value
        if kind is bool:
            if not isinstance(value, bool):
                raise self.error("expected true or false", path)
            return value
        if kind is str:
            if not isinstance(value, str):
                raise self.error("expected a string", path)
            return value
        if kind == "floats":
            if not isinstance(value, list) or not value:
                raise self.error("expected a non-empty array of numbers", path)
            return tuple(self.value(v, f"{path}[{i}]", float) for i, v in enumerate(value))
        if kind == "ints":
            if not isinstance(value, list) or not value:
                raise self.error("expected a non-empty array of integers", path)
            return tuple(self.value(v, f"{path}[{i}]", int) for i, v in enumerate(value))
        if kind == "points":
            if not isinstance(value, list) or not value:
                raise self.error("expected a non-empty array of coordinate arrays", path)
            pts = tuple(self.value(v, f"{path}[{i}]", "floats") for i, v in enumerate(value))
            dims = {len(p) for p in pts}
            if len(dims) != 1 or dims.pop() not in (2, 3):
                raise self.error("points must all be 2-D or all 3-D", path)
            return pts
        raise AssertionError(kind)


def _check_seed(seed, path: str, reader: _Reader | None = None) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        msg = "seed must be an integer in [0, 2**64)"
        raise reader.error(msg, path) if reader else ConfigError(msg, path)
    return seed


_SETTINGS_KEYS = {"frequency_mhz": float, "modulation": str, "data_rate_kbps": float,
                  "tx_power_dbm": float}


def _modulation(name: str, reader: _Reader, path: str) -> Modulation:
    try:
        return Modulation(name.upper())
    except ValueError:
        raise reader.error(f"unknown modulation '{name}' (FSK2 or GFSK2)", path) from None


def _rate(kbps: float, reader: _Reader, path: str) -> DataRate:
    try:
        return DataRate.from_kbps(kbps)
    except ValueError as exc:
        raise reader.error(str(exc), path) from None


def _frequency(mhz: float, reader: _Reader, path: str) -> Frequency:
    try:
        return Frequency.from_mhz(mhz)
    except ValueError as exc:
        raise reader.error(str(exc), path) from None


def _settings(rows, reader: _Reader) -> tuple:
    if not isinstance(rows, list) or not rows:
        raise reader.error("expected one or more [[settings]] tables", "settings")
    out = []
    for i, row in enumerate(rows):
        path = f"settings[{i}]"
        t = reader.table(row, path, _SETTINGS_KEYS)
        for key in ("frequency_mhz", "modulation", "data_rate_kbps"):
            if key not in t:
                raise reader.error(f"missing '{key}'", f"{path}.{key}")
        out.append(RfSettings(_frequency(t["frequency_mhz"], reader, f"{path}.frequency_mhz"),
                              _modulation(t["modulation"], reader, f"{path}.modulation"),
                              _rate(t["data_rate_kbps"], reader, f"{path}.data_rate_kbps"),
                              t.get("tx_power_dbm", 0.0)))
    return tuple(out)


def _delay(data, reader: _Reader, clock: ClockModel, velocity_factor: float):
    allowed = {"tx_split": float, "atten_a_cycles": float, "atten_b_cycles": float,
               "atten_k_per_db": float, "atten_ref_db": float, "temp_slope_ns_per_c": float,
               "voltage_slope_ns_per_v": float, "processing_time_us": float,
               "base": list, "noise": list}
    base_rows = data.get("base", []) if isinstance(data, dict) else []
    noise_rows = data.get("noise", []) if isinstance(data, dict) else []
    scalar = {k: v for k, v in data.items() if k not in ("base", "noise")} if isinstance(data, dict) else data
    t = reader.table(scalar, "delay", {k: v for k, v in allowed.items() if v is not list})

    model = AnalogDelayModel.default()
    base = dict(model.base_delay)
    noise = dict(model.noise_sigma)
    if not isinstance(base_rows, list):
        raise reader.error("expected [[delay.base]] tables", "delay.base")
    for i, row in enumerate(base_rows):
        path = f"delay.base[{i}]"
        r = reader.table(row, path, {"frequency_mhz": float, "modulation": str,
                                     "data_rate_kbps": float, "delay_us": float})
        for key in ("modulation", "data_rate_kbps", "delay_us"):
            if key not in r:
                raise reader.error(f"missing '{key}'", f"{path}.{key}")
        if r["delay_us"] < 0:
            raise reader.error("delay must be >= 0", f"{path}.delay_us")
        mod = _modulation(r["modulation"], reader, f"{path}.modulation")
        rate = _rate(r["data_rate_kbps"], reader, f"{path}.data_rate_kbps")
        freqs = ([_frequency(r["frequency_mhz"], reader, f"{path}.frequency_mhz")]
                 if "frequency_mhz" in r else list(Frequency))
        for f in freqs:
            base[(f, mod, rate)] = r["delay_us"] * 1e-6
    if not isinstance(noise_rows, list):
        raise reader.error("expected [[delay.noise]] tables", "delay.noise")
    for i, row in enumerate(noise_rows):
        path = f"delay.noise[{i}]"
        r = reader.table(row, path, {"modulation": str, "data_rate_kbps": float,
                                     "sigma_ns": float, "single_shot_std_m": float})
        for key in ("modulation", "data_rate_kbps"):
            if key not in r:
                raise reader.error(f"missing '{key}'", f"{path}.{key}")
        mod = _modulation(r["modulation"], reader, f"{path}.modulation")
        rate = _rate(r["data_rate_kbps"], reader, f"{path}.data_rate_kbps")
        if ("sigma_ns" in r) == ("single_shot_std_m" in r):
            raise reader.error("give exactly one of sigma_ns / single_shot_std_m", path)
        if "sigma_ns" in r:
            if r["sigma_ns"] < 0:
                raise reader.error("sigma must be >= 0", f"{path}.sigma_ns")
            noise[(mod, rate)] = r["sigma_ns"] * 1e-9
        else:
            try:
                noise[(mod, rate)] = hop_noise_sigma(r["single_shot_std_m"], clock.nominal_hz,
                                                     velocity_factor)
            except ValueError as exc:
                raise reader.error(str(exc), f"{path}.single_shot_std_m") from None

    hz = NOMINAL_CLOCK_HZ
    kw = dict(base_delay=base, noise_sigma=noise)
    for key, name, factor in (("tx_split", "tx_split", 1.0),
                              ("atten_a_cycles", "atten_a", 1.0 / hz),
                              ("atten_b_cycles", "atten_b", 1.0 / hz),
                              ("atten_k_per_db", "atten_k", 1.0),
                              ("atten_ref_db", "atten_ref", 1.0),
                              ("temp_slope_ns_per_c", "temp_slope", 1e-9),
                              ("voltage_slope_ns_per_v", "voltage_slope", 1e-9)):
        if key in t:
            kw[name] = t[key] * factor
    try:
        model = AnalogDelayModel(**{**_model_defaults(model), **kw})
    except ValueError as exc:
        raise reader.error(str(exc), "delay") from None
    processing = t.get("processing_time_us", DEFAULT_PROCESSING_TIME * 1e6)
    if processing < 0:
        raise reader.error("processing time must be >= 0", "delay.processing_time_us")
    return model, processing * 1e-6


def _model_defaults(m: AnalogDelayModel) -> dict:
    return dict(atten_a=m.atten_a, atten_b=m.atten_b, atten_k=m.atten_k, atten_ref=m.atten_ref,
                temp_slope=m.temp_slope, voltage_slope=m.voltage_slope,
                reference_temp=m.reference_temp, reference_voltage=m.reference_voltage,
                tx_split=m.tx_split, window=m.window)


def _build(cls, t: dict, reader: _Reader, path: str, rename: dict | None = None):
    rename = rename or {}
    try:
        return cls(**{rename.get(k, k): v for k, v in t.items()})
    except ValueError as exc:
        raise reader.error(str(exc), path) from None


def _positive(t: dict, keys, reader: _Reader, path: str) -> None:
    for key in keys:
        if key in t:
            vals = t[key] if isinstance(t[key], tuple) else (t[key],)
            if any(v <= 0 for v in vals):
                raise reader.error("must be positive", f"{path}.{key}")


_TOP = {"seed", "scenario", "scale", "write_records", "settings", "channel", "clock", "delay",
        "rssi", "cleaning", "batch_size_study", "distance_sweep", "attenuation_sweep",
        "trilateration"}


def parse_config(text: str) -> CampaignConfig:
    """Parse and validate a campaign config from TOML text."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"not valid TOML: {exc}", "", int(m.group(1)) if m else None) from None
    reader = _Reader(text)
    for key in data:
        if key not in _TOP:
            raise reader.error(f"unknown key '{key}'", key)
    if "seed" not in data:
        raise ConfigError("missing required key (no default seed: runs must be reproducible)", "seed")
    seed = _check_seed(data["seed"], "seed", reader)
    if "scenario" not in data:
        raise ConfigError("missing required key", "scenario")
    try:
        scenario = Scenario(reader.value(data["scenario"], "scenario", str))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        names = ", ".join(s.value for s in Scenario)
        raise reader.error(f"unknown scenario '{data['scenario']}' ({names})", "scenario") from None
    scale = reader.value(data.get("scale", "desk"), "scale", str)
    if scale not in ("desk", "full"):
        raise reader.error("scale must be 'desk' or 'full'", "scale")
    write_records = reader.value(data.get("write_records", False), "write_records", bool)

    if "settings" in data:
        settings = _settings(data["settings"], reader)
    elif scenario is Scenario.BATCH_SIZE_STUDY:
        settings = tuple(table1_settings())
    else:
        settings = (RfSettings(),)
    if scenario is not Scenario.BATCH_SIZE_STUDY and len(settings) != 1:
        raise reader.error(f"{scenario.value} takes exactly one setting", "settings")

    ch = reader.table(data.get("channel", {}), "channel",
                      {k: float for k in ChannelParams.__dataclass_fields__})
    _positive(ch, ("velocity_factor",), reader, "channel")
    channel = ChannelParams(**ch)
    for key in ("loss_probability", "corruption_probability"):
        if not 0.0 <= getattr(channel, key) <= 1.0:
            raise reader.error("must be in [0, 1]", f"channel.{key}")
    if channel.cable_length_m < 0 or channel.cable_loss_db_per_m < 0:
        raise reader.error("cable length and loss must be >= 0", "channel")
    if not 0.0 < channel.velocity_factor <= 1.0:
        raise reader.error("must be in (0, 1]", "channel.velocity_factor")

    ck = reader.table(data.get("clock", {}), "clock",
                      {"nominal_hz": float, "ppm_error": float, "temp_coeff": float,
                       "voltage_coeff": float, "temperature_c": float, "supply_v": float})
    temperature = ck.pop("temperature_c", 20.0)
    supply = ck.pop("supply_v", 3.3)
    clock = _build(ClockModel, ck, reader, "clock")

    delay, processing = _delay(data.get("delay", {}), reader, clock, channel.velocity_factor)

    rs = reader.table(data.get("rssi", {}), "rssi", {"sigma_db": float, "warmup": int,
                                                      "spike_probability": float, "spike_db": float})
    rssi = _build(RssiModel, rs, reader, "rssi")

    cl = reader.table(data.get("cleaning", {}), "cleaning",
                      {"rtt_min": int, "rtt_max": int, "rssi_warmup_discard": int,
                       "rssi_band_db": float, "round_size": int})
    _positive(cl, ("round_size", "rssi_band_db"), reader, "cleaning")
    cleaning = _build(CleaningPolicy, cl, reader, "cleaning", {"rssi_band_db": "rssi_band"})

    bt = reader.table(data.get("batch_size_study", {}), "batch_size_study",
                      {"batch_sizes": "ints", "samples_fast": int, "samples_slow": int})
    _positive(bt, bt.keys(), reader, "batch_size_study")
    batch = BatchParams(**bt)

    ds = reader.table(data.get("distance_sweep", {}), "distance_sweep",
                      {"distances_m": "floats", "reference_distance_m": float,
                       "samples_per_point": int})
    _positive(ds, ("reference_distance_m", "samples_per_point"), reader, "distance_sweep")
    if any(d < 0 for d in ds.get("distances_m", ())):
        raise reader.error("distances must be >= 0", "distance_sweep.distances_m")
    distance = DistanceParams(**ds)

    at = reader.table(data.get("attenuation_sweep", {}), "attenuation_sweep",
                      {"start_db": float, "stop_db": float, "step_db": float,
                       "cable_length_m": float, "samples_per_point": int})
    _positive(at, ("step_db", "cable_length_m", "samples_per_point"), reader, "attenuation_sweep")
    attenuation = AttenuationParams(**at)
    if attenuation.stop_db < attenuation.start_db:
        raise reader.error("stop_db must not be below start_db", "attenuation_sweep.stop_db")

    tr = reader.table(data.get("trilateration", {}), "trilateration",
                      {"anchors": "points", "targets": "points", "trials": int,
                       "samples_per_anchor": int, "sigma_targets_m": "floats",
                       "reference_distance_m": float, "calibration_step_db": float,
                       "calibration_samples": int})
    _positive(tr, ("trials", "samples_per_anchor", "sigma_targets_m", "reference_distance_m",
                   "calibration_step_db", "calibration_samples"), reader, "trilateration")
    trilateration = TrilaterationParams(**tr)
    if len(trilateration.anchors[0]) != len(trilateration.targets[0]):
        raise reader.error("targets and anchors must have the same dimension", "trilateration.targets")

    return CampaignConfig(seed=seed, scenario=scenario, settings=settings, full=scale == "full",
                          write_records=write_records, channel=channel, clock=clock,
                          temperature_c=temperature, supply_v=supply, delay=delay,
                          processing_time_s=processing, rssi=rssi, cleaning=cleaning,
                          batch=batch, distance=distance, attenuation=attenuation,
                          trilateration=trilateration)


def load_config(path) -> CampaignConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text)


#: one-command reproductions of the table and the two sweep figures
PRESETS = {
    "table1": 'seed = 1\nscenario = "BatchSizeStudy"\n',
    "fig5": 'seed = 1\nscenario = "DistanceSweep"\n',
    "fig6": 'seed = 1\nscenario = "AttenuationSweep"\n',
}


def preset(name: str) -> CampaignConfig:
    return parse_config(PRESETS[name])
