"""Scenario runners: the batch-size study, the two sweeps and trilateration.

Each scenario cell draws from its own RNG stream derived from
``(seed, scenario, cell key)``. Cells of the batch-size study are keyed by
data rate only, so rows that differ in carrier or modulation see the same
underlying random draws (common random numbers); their differences are then
the model's, not the sampling noise's.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import CampaignConfig, Scenario
from .estimation import (
    BatchStats, ExpFit, OffsetModel, batch_stats, calibrate_offset, clean_rssi, clean_rtt,
    corrected_std, distance_to_cycles, fit_attenuation_offset, meters_per_cycle,
)
from .localization import (
    Anchor, Budget, RangeObservation, gdop, plan_budget, trilaterate,
)
from .node_sim import DataRate, Frequency, Modulation, Node, RfSettings
from .ranging_protocol import (
    CampaignCommand, Role, RoundTrip, Station, corrected_rtt, run_campaign,
)
from .rf_channel import Channel, Medium

_SCENARIO_KEY = {Scenario.BATCH_SIZE_STUDY: 1, Scenario.DISTANCE_SWEEP: 2,
                 Scenario.ATTENUATION_SWEEP: 3, Scenario.TRILATERATION: 4}
_RATE_KEY = {DataRate.KBPS_250: 0, DataRate.KBPS_38_4: 1, DataRate.KBPS_1_2: 2}


def fmt(x) -> str:
    """Locale-independent, round-trippable number text for CSV cells."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def cell_seed(seed: int, scenario: Scenario, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(_SCENARIO_KEY[scenario], *key))


# --- measuring -------------------------------------------------------------

@dataclass
class Measurement:
    settings: RfSettings
    records: list
    master_rssi_rounds: list

    @property
    def corrected(self) -> np.ndarray:
        return np.fromiter((corrected_rtt(r) for r in self.records), dtype=np.int64,
                           count=len(self.records))


def make_stations(config: CampaignConfig, settings: RfSettings, seq: np.random.SeedSequence):
    master_seq, slave_seq = seq.spawn(2)
    nodes = [Node(settings, config.clock, config.delay, s, config.rssi, config.temperature_c,
                  config.supply_v, address=a) for s, a in ((master_seq, 1), (slave_seq, 2))]
    master = Station(Role.MASTER, nodes[0], address=1)
    slave = Station(Role.SLAVE, nodes[1], address=2, processing_time=config.processing_time_s)
    return master, slave


def measure(config: CampaignConfig, settings: RfSettings, channel: Channel, count: int,
            seq: np.random.SeedSequence) -> Measurement:
    """``count`` round trips, issued as campaigns of ``cleaning.round_size``."""
    node_seq, chan_seq = seq.spawn(2)
    master, slave = make_stations(config, settings, node_seq)
    rng = np.random.default_rng(chan_seq)
    channel = channel.with_frequency(settings.frequency.hz)
    size = config.cleaning.round_size
    records, rssi_rounds = [], []
    done = 0
    while done < count:
        n = min(size, count - done)
        chunk = run_campaign(CampaignCommand(n, settings), master, slave, channel, rng)
        records.extend(chunk)
        rssi_rounds.append([r.master_rssi for r in chunk])
        done += n
    return Measurement(settings, records, rssi_rounds)


def cable_channel(config: CampaignConfig, length: float, total_attenuation: float) -> Channel:
    ch = config.channel
    medium = Medium.cable(ch.velocity_factor, ch.cable_loss_db_per_m)
    return Channel.cable_with_total(length, total_attenuation, medium=medium,
                                    loss_probability=ch.loss_probability,
                                    corruption_probability=ch.corruption_probability)


def expected_rtt_offset(config: CampaignConfig, settings: RfSettings) -> tuple[float, float, float]:
    """(a, b, k) of the attenuation offset as it appears in a corrected RTT, in cycles.

    Two RX draws and the non-transmit share of two base delays survive the
    latency subtraction, so ``a_rtt = 2 (1 - split) base + 2 a`` and ``b_rtt = 2 b``.
    """
    d = config.delay
    hz = config.clock.effective_hz(config.temperature_c, config.supply_v)
    a = 2.0 * (1.0 - d.tx_split) * d.base(settings) * hz + 2.0 * d.atten_a * hz
    return a, 2.0 * d.atten_b * hz, d.atten_k


# --- record CSV --------------------------------------------------------------

RECORD_COLUMNS = ("index", "frequency_mhz", "modulation", "data_rate_kbps", "t0", "t1", "t2",
                  "t3", "rtt_cycles", "latency_cycles", "corrected_rtt_cycles",
                  "master_rssi_dbm", "slave_rssi_dbm", "attempts")


def write_records(path, records: Sequence[RoundTrip]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for i, r in enumerate(records):
            s = r.settings
            w.writerow([i, s.frequency.mhz, s.modulation.value, fmt(s.data_rate.kbps), r.t0, r.t1,
                        r.t2, r.t3, r.rtt, r.latency, corrected_rtt(r), r.master_rssi,
                        r.slave_rssi, r.attempts])


def read_records(path) -> list[RoundTrip]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            s = RfSettings(Frequency.from_mhz(float(row["frequency_mhz"])),
                           Modulation(row["modulation"]),
                           DataRate.from_kbps(float(row["data_rate_kbps"])))
            out.append(RoundTrip(int(row["t0"]), int(row["t1"]), int(row["t2"]), int(row["t3"]),
                                 int(row["master_rssi_dbm"]), int(row["slave_rssi_dbm"]), s,
                                 int(row["latency_cycles"]), int(row["attempts"])))
    return out


def _write(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


# --- batch-size study ------------------------------------------------------------

TABLE1_COLUMNS = ("setting", "modulation", "frequency_mhz", "data_rate_kbps", "batch_size",
                  "sigma_means_m", "duration_ms")


@dataclass
class Table1Row:
    settings: RfSettings
    batch_size: int
    sigma_means_m: float
    duration_ms: float
    stats: BatchStats


@dataclass
class BatchStudyResult:
    rows: list[Table1Row]
    mean_delay_cycles: dict = field(default_factory=dict)  # settings -> mean corrected RTT
    measurements: dict = field(default_factory=dict)

    def grid(self, settings: RfSettings) -> dict:
        return {r.batch_size: r.sigma_means_m for r in self.rows if r.settings == settings}


def batch_size_study(config: CampaignConfig, keep_records: bool = False) -> BatchStudyResult:
    p = config.batch
    ch = config.channel
    channel = cable_channel(config, ch.cable_length_m, ch.attenuation_db)
    m_per_cycle = meters_per_cycle(channel.medium, config.clock)
    result = BatchStudyResult([])
    for settings in config.settings:
        slow = settings.data_rate is DataRate.KBPS_1_2
        count = (p.samples_slow if slow else p.samples_fast) * config.scale
        seq = cell_seed(config.seed, Scenario.BATCH_SIZE_STUDY, _RATE_KEY[settings.data_rate])
        m = measure(config, settings, channel, count, seq)
        cleaned = clean_rtt(m.corrected, config.cleaning)
        result.mean_delay_cycles[settings] = float(cleaned.values.mean())
        if keep_records:
            result.measurements[settings] = m
        for n in p.batch_sizes:
            if n > cleaned.values.size:
                stats = BatchStats(cleaned.values.size, math.nan, math.nan, math.nan, n, 0,
                                   cleaned.rejected)
            else:
                stats = batch_stats(cleaned.values, n, cleaned.rejected).scaled(m_per_cycle)
            sigma = stats.std_dev if n == 1 else stats.std_of_means
            duration = round(n * settings.measurement_period * 1e3, 9)
            result.rows.append(Table1Row(settings, n, sigma, duration, stats))
    return result


def write_table1(path, result: BatchStudyResult) -> Path:
    return _write(Path(path), TABLE1_COLUMNS, (
        (r.settings.label, r.settings.modulation.value, r.settings.frequency.mhz,
         r.settings.data_rate.kbps, r.batch_size, r.sigma_means_m, r.duration_ms)
        for r in result.rows))


# --- distance sweep ------------------------------------------------------------

DISTANCE_COLUMNS = ("distance_m", "mean_cycles_normalized", "sigma_means_cycles")


@dataclass
class DistanceSweepResult:
    distances: np.ndarray
    mean_cycles: np.ndarray  # normalised by the reference offset
    sigma_means: np.ndarray
    offset_model: OffsetModel
    slope: float
    intercept: float


def distance_sweep(config: CampaignConfig) -> DistanceSweepResult:
    p = config.distance
    settings = config.settings[0]
    count = p.samples_per_point * config.scale
    total = config.channel.attenuation_db
    points = list(p.distances_m)
    if p.reference_distance_m not in points:
        points.append(p.reference_distance_m)
    means, sigmas = {}, {}
    for i, d in enumerate(points):
        seq = cell_seed(config.seed, Scenario.DISTANCE_SWEEP, i)
        m = measure(config, settings, cable_channel(config, d, total), count, seq)
        cleaned = clean_rtt(m.corrected, config.cleaning)
        means[d] = cleaned.values
        size = config.cleaning.round_size
        sigmas[d] = (batch_stats(cleaned.values, size).std_of_means
                     if cleaned.values.size >= 2 * size else math.nan)
    medium = cable_channel(config, 0.0, total).medium
    model = calibrate_offset(means[p.reference_distance_m], p.reference_distance_m, medium,
                             config.clock, total)
    dist = np.asarray(p.distances_m, dtype=float)
    norm = np.array([means[d].mean() - model.reference_offset for d in p.distances_m])
    sig = np.array([sigmas[d] for d in p.distances_m])
    if dist.size >= 2:
        slope, intercept = np.polyfit(dist, norm, 1)
    else:
        slope = intercept = math.nan
    return DistanceSweepResult(dist, norm, sig, model, float(slope), float(intercept))


def write_distance_sweep(path, result: DistanceSweepResult) -> Path:
    return _write(Path(path), DISTANCE_COLUMNS,
                  zip(result.distances, result.mean_cycles, result.sigma_means))


# --- attenuation sweep -------------------------------------------------------------

ATTENUATION_COLUMNS = ("attenuation_db", "offset_cycles", "fit_a", "fit_b", "fit_k")


@dataclass
class AttenuationSweepResult:
    attenuation: np.ndarray
    offset_cycles: np.ndarray
    fit: ExpFit


def attenuation_sweep(config: CampaignConfig, points: Sequence[float] | None = None,
                      count: int | None = None, key: int = 0) -> AttenuationSweepResult:
    """Mean corrected RTT minus cable propagation, per total attenuation, plus the fit."""
    p = config.attenuation
    settings = config.settings[0]
    pts = list(p.points() if points is None else points)
    count = p.samples_per_point * config.scale if count is None else count
    offsets = []
    for i, a in enumerate(pts):
        seq = cell_seed(config.seed, Scenario.ATTENUATION_SWEEP, key, i)
        channel = cable_channel(config, p.cable_length_m, a)
        m = measure(config, settings, channel, count, seq)
        cleaned = clean_rtt(m.corrected, config.cleaning)
        prop = float(distance_to_cycles(p.cable_length_m, channel.medium, config.clock))
        offsets.append(float(cleaned.values.mean()) - prop)
    A = np.asarray(pts, dtype=float)
    y = np.asarray(offsets)
    fit = fit_attenuation_offset(A, y, ref=config.delay.atten_ref)
    return AttenuationSweepResult(A, y, fit)


def write_attenuation_sweep(path, result: AttenuationSweepResult) -> Path:
    rows = []
    last = len(result.attenuation) - 1
    for i, (a, y) in enumerate(zip(result.attenuation, result.offset_cycles)):
        fit = result.fit.params if i == last else ("", "", "")
        rows.append((a, y, *fit))
    return _write(Path(path), ATTENUATION_COLUMNS, rows)


# --- trilateration ------------------------------------------------------------

POSITION_COLUMNS = ("trial", "target", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z",
                    "error_m", "gdop", "sigma_range_m")
BUDGET_COLUMNS = ("sigma_target_m", "sigma_1_m", "n_per_anchor", "n_anchors", "total_ms")


@dataclass
class PositionFix:
    trial: int
    target: int
    truth: np.ndarray
    estimate: np.ndarray
    covariance: np.ndarray
    gdop: float
    sigma_range: float

    @property
    def error(self) -> float:
        return float(np.linalg.norm(self.estimate - self.truth))


@dataclass
class TrilaterationResult:
    fixes: list[PositionFix]
    budgets: list[tuple[float, float, int, Budget]]  # target, sigma_1, anchors, budget
    sigma_1_m: float
    offset_model: OffsetModel


def _xyz(p) -> list:
    p = list(p)
    return p + [math.nan] * (3 - len(p))


def trilateration_study(config: CampaignConfig) -> TrilaterationResult:
    """Calibrate in the lab, then range a tag against each anchor over the air.

    Lab calibration: an attenuation sweep on a short cable gives the
    attenuation-offset curve, and a 2 m over-the-air reference gives the
    constant offset. In the field, each anchor's link attenuation is taken
    from the cleaned RSSI so the offset can be moved along the curve.
    """
    p = config.trilateration
    settings = config.settings[0]
    n_samples = p.samples_per_anchor * config.scale
    air = Medium.air()
    sc = Scenario.TRILATERATION

    lo, hi = config.delay.window
    cal_pts = list(np.arange(lo, hi + 1e-9, p.calibration_step_db))
    sweep = attenuation_sweep(config, cal_pts, p.calibration_samples, key=1000)

    ref_channel = Channel(medium=air, distance=p.reference_distance_m, fixed_attenuation=0.0,
                          loss_probability=config.channel.loss_probability,
                          corruption_probability=config.channel.corruption_probability)
    ref = measure(config, settings, ref_channel, p.calibration_samples, cell_seed(config.seed, sc, 0))
    ref_rtt = clean_rtt(ref.corrected, config.cleaning).values
    ref_rssi = clean_rssi(ref.master_rssi_rounds, config.cleaning).values
    ref_atten = settings.tx_power - float(ref_rssi.mean())
    model = calibrate_offset(ref_rtt, p.reference_distance_m, air, config.clock, ref_atten)
    model = model.with_fit(sweep.fit)
    sigma_1 = corrected_std(ref_rtt) * meters_per_cycle(air, config.clock)

    anchors = [Anchor(i, pos) for i, pos in enumerate(p.anchors)]
    positions = np.array([a.position for a in anchors])
    fixes = []
    for trial in range(p.trials):
        for ti, target in enumerate(p.targets):
            truth = np.asarray(target, dtype=float)
            obs = []
            for a in anchors:
                d = float(np.linalg.norm(truth - np.asarray(a.position)))
                channel = Channel(medium=air, distance=d, fixed_attenuation=0.0,
                                  loss_probability=config.channel.loss_probability,
                                  corruption_probability=config.channel.corruption_probability)
                seq = cell_seed(config.seed, sc, 1 + trial, ti, a.id)
                m = measure(config, settings, channel, n_samples, seq)
                rtt = clean_rtt(m.corrected, config.cleaning).values
                atten = settings.tx_power - float(clean_rssi(m.master_rssi_rounds, config.cleaning).values.mean())
                est = model.distance(rtt.mean(), atten)
                sigma = corrected_std(rtt) * meters_per_cycle(air, config.clock) / math.sqrt(rtt.size)
                obs.append(RangeObservation(a.id, max(est, 0.0), sigma, int(rtt.size)))
            x, cov = trilaterate(obs, anchors)
            sig = float(np.mean([o.sigma for o in obs]))
            fixes.append(PositionFix(trial, ti, truth, x, cov, gdop(positions, truth), sig))

    period_ms = settings.measurement_period * 1e3
    budgets = [(t, sigma_1, len(anchors), plan_budget(sigma_1, t, period_ms, len(anchors)))
               for t in p.sigma_targets_m]
    return TrilaterationResult(fixes, budgets, sigma_1, model)


def write_trilateration(out: Path, result: TrilaterationResult) -> list[Path]:
    pos = _write(out / "trilateration.csv", POSITION_COLUMNS, (
        (f.trial, f.target, *_xyz(f.truth), *_xyz(f.estimate), f.error, f.gdop, f.sigma_range)
        for f in result.fixes))
    bud = _write(out / "budget.csv", BUDGET_COLUMNS, (
        (t, s1, b.n_per_anchor, n, b.total_ms) for t, s1, n, b in result.budgets))
    return [pos, bud]


# --- entry point ------------------------------------------------------------------

_OUTPUT_NAME = {Scenario.BATCH_SIZE_STUDY: "table1.csv",
                Scenario.DISTANCE_SWEEP: "distance_sweep.csv",
                Scenario.ATTENUATION_SWEEP: "attenuation_sweep.csv"}


def run_scenario(config: CampaignConfig, out_dir) -> list[Path]:
    """Run the configured scenario and write its CSVs into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = config.scenario
    if sc is Scenario.BATCH_SIZE_STUDY:
        result = batch_size_study(config, keep_records=config.write_records)
        files = [write_table1(out / _OUTPUT_NAME[sc], result)]
        for settings, m in result.measurements.items():
            path = out / f"records_{settings.label}.csv"
            write_records(path, m.records)
            files.append(path)
        return files
    if sc is Scenario.DISTANCE_SWEEP:
        return [write_distance_sweep(out / _OUTPUT_NAME[sc], distance_sweep(config))]
    if sc is Scenario.ATTENUATION_SWEEP:
        return [write_attenuation_sweep(out / _OUTPUT_NAME[sc], attenuation_sweep(config))]
    return write_trilateration(out, trilateration_study(config))
