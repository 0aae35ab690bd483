import csv
import locale

import pytest

from rttsim.campaign import (
    ATTENUATION_COLUMNS, DISTANCE_COLUMNS, TABLE1_COLUMNS, measure, read_records, run_scenario,
    write_records, cell_seed,
)
from rttsim.cli import main
from rttsim.config import ConfigError, Scenario, parse_config, preset
from rttsim.node_sim import Modulation, RfSettings
from rttsim.rf_channel import Channel

SMALL_TABLE = """
seed = 3
scenario = "BatchSizeStudy"

[batch_size_study]
samples_fast = 1200
samples_slow = 1200
"""

SMALL_SWEEP = """
seed = 3
scenario = "DistanceSweep"

[distance_sweep]
samples_per_point = 400
"""


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_table1_grid_shape(tmp_path):
    cfg = parse_config(SMALL_TABLE)
    (path,) = run_scenario(cfg, tmp_path)
    r = rows(path)
    assert tuple(r[0]) == TABLE1_COLUMNS
    assert len(r) == 1 + 10 * 9
    assert [row[4] for row in r[1:10]] == ["1", "20", "50", "100", "200", "500", "1000", "2000", "5000"]
    assert r[1][6] == "1.4" and r[9][6] == "7000.0"


def test_same_seed_byte_identical(tmp_path):
    cfg = parse_config(SMALL_SWEEP)
    a = run_scenario(cfg, tmp_path / "a")[0].read_bytes()
    b = run_scenario(cfg, tmp_path / "b")[0].read_bytes()
    c = run_scenario(cfg.with_overrides(seed=4), tmp_path / "c")[0].read_bytes()
    assert a == b
    assert a != c


def test_distance_sweep_rows(tmp_path):
    (path,) = run_scenario(parse_config(SMALL_SWEEP), tmp_path)
    r = rows(path)
    assert tuple(r[0]) == DISTANCE_COLUMNS
    assert [float(x[0]) for x in r[1:]] == [2, 13, 23, 33, 43]


def test_attenuation_sweep_fit_on_last_row(tmp_path):
    cfg = parse_config('seed = 1\nscenario = "AttenuationSweep"\n'
                       '[attenuation_sweep]\nstep_db = 5\nsamples_per_point = 300\n')
    (path,) = run_scenario(cfg, tmp_path)
    r = rows(path)
    assert tuple(r[0]) == ATTENUATION_COLUMNS
    assert all(x[2:] == ["", "", ""] for x in r[1:-1])
    assert float(r[-1][4]) == pytest.approx(0.08, rel=0.05)


def test_numbers_are_locale_independent(tmp_path):
    try:
        locale.setlocale(locale.LC_NUMERIC, "de_DE.UTF-8")
    except locale.Error:
        pass
    try:
        (path,) = run_scenario(parse_config(SMALL_SWEEP), tmp_path)
    finally:
        locale.setlocale(locale.LC_NUMERIC, "C")
    text = path.read_text()
    for row in rows(path)[1:]:
        for cell in row:
            float(cell)
            assert "," not in cell
    assert "." in text


def test_record_csv_round_trip(tmp_path):
    m = measure(parse_config(SMALL_SWEEP), RfSettings(modulation=Modulation.GFSK2), Channel(), 150,
                cell_seed(1, Scenario.DISTANCE_SWEEP, 0))
    write_records(tmp_path / "r.csv", m.records)
    assert read_records(tmp_path / "r.csv") == m.records


def test_trilateration_outputs(tmp_path):
    cfg = parse_config('seed = 2\nscenario = "Trilateration"\n[trilateration]\ntrials = 2\n'
                       'calibration_step_db = 9\ncalibration_samples = 500\n')
    paths = run_scenario(cfg, tmp_path)
    assert [p.name for p in paths] == ["trilateration.csv", "budget.csv"]
    pos = rows(paths[0])
    assert len(pos) == 3
    assert float(pos[1][8]) < 3.0
    bud = rows(paths[1])
    assert int(bud[1][2]) >= 149


@pytest.mark.parametrize("text, path, line", [
    ('scenario = "BatchSizeStudy"\n', "seed", None),
    ('seed = 1\nscenario = "BatchSizeStudy"\n[clock]\nppm = 3\n', "clock.ppm", 4),
    ('seed = 1\nscenario = "Sweep"\n', "scenario", 2),
    ('seed = -1\nscenario = "BatchSizeStudy"\n', "seed", 1),
    ('seed = 1\nscenario = "DistanceSweep"\n\n[distance_sweep]\ndistances_m = [1, "a"]\n',
     "distance_sweep.distances_m[1]", 5),
    ('seed = 1\nscenario = "BatchSizeStudy"\n[[settings]]\nfrequency_mhz = 433\n'
     'modulation = "FSK2"\ndata_rate_kbps = 250\n', "settings[0].frequency_mhz", 4),
    ('seed = 1\nscenario = "BatchSizeStudy"\n[[delay.noise]]\nmodulation = "FSK2"\n'
     'data_rate_kbps = 250\n', "delay.noise[0]", None),
    ('seed = 1\nscenario = "BatchSizeStudy"\ncolour = 1\n', "colour", 3),
    ('seed = 1\nscenario = "BatchSizeStudy"\n[delay]\ntx_split = 2\n', "delay", None),
])
def test_config_errors_carry_location(text, path, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.path == path
    if line is not None:
        assert exc.value.line == line


def test_invalid_toml_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config('seed = 1\nscenario = \n')
    assert exc.value.line == 2


def test_overrides_apply():
    cfg = parse_config("""
seed = 5
scenario = "BatchSizeStudy"
scale = "full"
[[settings]]
frequency_mhz = 915
modulation = "gfsk2"
data_rate_kbps = 38.4
[clock]
ppm_error = 40
[delay]
tx_split = 0.25
atten_b_cycles = 3
[[delay.base]]
modulation = "FSK2"
data_rate_kbps = 250
frequency_mhz = 868
delay_us = 6.5
[[delay.noise]]
modulation = "FSK2"
data_rate_kbps = 250
single_shot_std_m = 5.0
[cleaning]
rtt_max = 50000
""")
    assert cfg.full and cfg.scale == 10
    assert cfg.settings == (RfSettings(modulation=Modulation.GFSK2,
                                       frequency=RfSettings().frequency.__class__.MHZ_915,
                                       data_rate=RfSettings().data_rate.__class__.KBPS_38_4),)
    assert cfg.clock.ppm_error == 40
    assert cfg.delay.tx_split == 0.25
    assert cfg.delay.atten_b == pytest.approx(3 / 26e6)
    assert cfg.delay.base(RfSettings()) == pytest.approx(6.5e-6)
    assert cfg.cleaning.rtt_max == 50000


def test_presets():
    assert preset("table1").scenario is Scenario.BATCH_SIZE_STUDY
    assert len(preset("table1").settings) == 10
    assert preset("fig5").scenario is Scenario.DISTANCE_SWEEP
    assert preset("fig6").scenario is Scenario.ATTENUATION_SWEEP


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.toml"
    good.write_text(SMALL_SWEEP)
    bad = tmp_path / "bad.toml"
    bad.write_text(SMALL_SWEEP + "typo = 1\n")
    broken = tmp_path / "broken.toml"
    broken.write_text(SMALL_SWEEP.replace("DistanceSweep", "AttenuationSweep")
                      + "[channel]\nloss_probability = 1.0\n")
    assert main(["run", str(good), "--out", str(tmp_path / "o"), "--seed", "8"]) == 0
    assert (tmp_path / "o" / "distance_sweep.csv").exists()
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "typo" in capsys.readouterr().err
    assert main(["run", str(broken), "--out", str(tmp_path / "o")]) == 1
    assert main(["run", str(tmp_path / "missing.toml")]) == 1
    assert main(["run"]) == 2
