"""Tally generation, determinism, CSV schema, and the MC oracle."""
import math
from dataclasses import replace

import numpy as np
import pytest

from mdiqkd import (SimMode, SourceModel, SystemParams, mc_photon_oracle,
                    pair_observables, read_tally_csv, realize_state,
                    simulate_tallies, write_tally_csv)
from mdiqkd.eventsim import TallySchemaError, gain_error_table

from conftest import config_with


def test_expected_mode_is_exact_expectation(default_config):
    table = simulate_tallies(default_config, 100.0, SimMode.expected())
    gain, err_rate = gain_error_table(default_config, 100.0)
    assert np.allclose(table.coinc, table.sent * gain, rtol=1e-12, atol=0)
    assert np.allclose(table.err, table.coinc * err_rate, rtol=1e-12, atol=0)


def test_expected_mode_conserves_pulses(default_config):
    table = simulate_tallies(default_config, 50.0, SimMode.expected())
    assert table.total_sent() == pytest.approx(
        default_config.system.total_pulses, abs=81)


def test_sampled_mode_deterministic(default_config):
    cfg = config_with(system=replace(default_config.system,
                                     total_pulses=10 ** 9))
    t1 = simulate_tallies(cfg, 100.0, SimMode.sampled(12345))
    t2 = simulate_tallies(cfg, 100.0, SimMode.sampled(12345))
    assert np.array_equal(t1.sent, t2.sent)
    assert np.array_equal(t1.coinc, t2.coinc)
    assert np.array_equal(t1.err, t2.err)
    t3 = simulate_tallies(cfg, 100.0, SimMode.sampled(54321))
    assert not np.array_equal(t1.coinc, t3.coinc)


def test_sampled_mode_conserves_pulses_exactly(default_config):
    cfg = config_with(system=replace(default_config.system,
                                     total_pulses=10 ** 9))
    table = simulate_tallies(cfg, 100.0, SimMode.sampled(7))
    assert table.total_sent() == 10 ** 9
    table.validate()


def test_sampled_statistics_consistent_with_expected(default_config):
    cfg = config_with(system=replace(default_config.system,
                                     total_pulses=10 ** 9))
    sampled = simulate_tallies(cfg, 100.0, SimMode.sampled(2024))
    expected = simulate_tallies(cfg, 100.0, SimMode.expected())
    gain, _ = gain_error_table(cfg, 100.0)
    for idx in np.ndindex(3, 3, 3, 3):
        n = expected.sent[idx]
        mean = expected.coinc[idx]
        sd = math.sqrt(max(n * gain[idx] * (1 - gain[idx]), 0.0))
        sd_sent = math.sqrt(n) if n > 0 else 0.0
        assert abs(sampled.sent[idx] - n) <= 5.0 * sd_sent + 1.0
        assert abs(sampled.coinc[idx] - mean) <= 5.0 * sd + 5.0


def test_rejects_meaningless_total_pulses(default_config):
    cfg = config_with(system=replace(default_config.system, total_pulses=3))
    with pytest.raises(ValueError, match="too small"):
        simulate_tallies(cfg, 100.0, SimMode.expected())


def test_sim_mode_seed_validation():
    with pytest.raises(ValueError):
        SimMode.sampled(-1)
    with pytest.raises(ValueError):
        SimMode.sampled(2 ** 64)


# --- CSV schema -------------------------------------------------------------


def test_tally_csv_round_trip(tmp_path, default_config):
    table = simulate_tallies(default_config, 80.0, SimMode.expected())
    path = tmp_path / "tallies.csv"
    write_tally_csv(table, str(path))
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 82  # header + 81 rows
    assert lines[0] == "m,n,intensity_a,intensity_b,sent,coinc,err"
    again = read_tally_csv(str(path))
    assert np.array_equal(again.sent, table.sent)
    assert np.array_equal(again.coinc, table.coinc)
    assert np.array_equal(again.err, table.err)


def test_tally_csv_schema_violation_reports_row(tmp_path, default_config):
    table = simulate_tallies(default_config, 80.0, SimMode.expected())
    path = tmp_path / "tallies.csv"
    write_tally_csv(table, str(path))
    lines = path.read_text().splitlines()
    parts = lines[5].split(",")
    parts[5] = str(float(parts[4]) * 2.0)  # coinc > sent
    lines[5] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TallySchemaError, match="row 6"):
        read_tally_csv(str(path))


def test_tally_csv_missing_rows_detected(tmp_path, default_config):
    table = simulate_tallies(default_config, 80.0, SimMode.expected())
    path = tmp_path / "tallies.csv"
    write_tally_csv(table, str(path))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(TallySchemaError, match="missing"):
        read_tally_csv(str(path))


def test_tally_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n")
    with pytest.raises(TallySchemaError, match="header"):
        read_tally_csv(str(path))


# --- MC oracle ---------------------------------------------------------------


def test_oracle_zero_without_light_or_darks():
    params = SystemParams(dark_count_rate_hz=0.0)
    s0 = realize_state(SourceModel(), 0)
    est = mc_photon_oracle(s0, s0, 0.0, 0.0, 0.0, params, trials=10 ** 5,
                           seed=1)
    assert est.gain == 0.0


def test_oracle_fock_hom_suppression():
    params = SystemParams(dark_count_rate_hz=0.0, misalignment_x=0.0)
    s2 = realize_state(SourceModel(), 2)
    est = mc_photon_oracle(s2, s2, 1.0, 1.0, 0.0, params, trials=10 ** 5,
                           seed=2, input_fock=True)
    assert est.gain == 0.0


def test_oracle_matches_analytic_gain(default_config):
    params = default_config.system
    s0 = realize_state(SourceModel(), 0)
    s2 = realize_state(SourceModel(), 2)
    obs = pair_observables(s0, s2, 0.25, 0.15, 60.0, params)
    est = mc_photon_oracle(s0, s2, 0.25, 0.15, 60.0, params,
                           trials=10 ** 6, seed=77)
    se = max(est.gain_se,
             math.sqrt(obs.gain * (1 - obs.gain) / est.trials))
    assert abs(obs.gain - est.gain) <= 3.0 * se


def test_oracle_deterministic(default_config):
    params = default_config.system
    s0 = realize_state(SourceModel(), 0)
    s1 = realize_state(SourceModel(), 1)
    a = mc_photon_oracle(s0, s1, 0.3, 0.3, 30.0, params, trials=200_000,
                         seed=5, labels=(0, 1))
    b = mc_photon_oracle(s0, s1, 0.3, 0.3, 30.0, params, trials=200_000,
                         seed=5, labels=(0, 1))
    assert a == b


def test_oracle_error_rate_tracks_intrinsic_flip(default_config):
    params = default_config.system
    s0 = realize_state(SourceModel(), 0)
    s1 = realize_state(SourceModel(), 1)
    est = mc_photon_oracle(s0, s1, 0.4, 0.4, 0.0, params, trials=400_000,
                           seed=11, labels=(0, 1))
    assert est.error_rate == pytest.approx(params.intrinsic_error_z,
                                           abs=4 * est.error_se + 1e-3)
