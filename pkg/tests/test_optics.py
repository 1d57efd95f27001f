"""Optics model: state realization, transmittance, gains, and oracles."""
import math
from dataclasses import replace

import numpy as np
import pytest

from mdiqkd import (SourceModel, SystemParams, channel_transmittance,
                    mc_photon_oracle, pair_observables, realize_state,
                    single_photon_truth, single_photon_z_truth)

IDEAL = SourceModel()
NO_DARK = SystemParams(dark_count_rate_hz=0.0)
CLEAN = SystemParams(dark_count_rate_hz=0.0, misalignment_x=0.0)


def test_realize_state_computational_basis():
    s = realize_state(IDEAL, 0)
    assert s.amplitude0 == 1.0 and s.amplitude1 == 0.0


def test_realize_state_equal_superposition():
    s = realize_state(IDEAL, 2)
    r = 1.0 / math.sqrt(2.0)
    assert abs(s.amplitude0 - r) < 1e-12 and abs(s.amplitude1 - r) < 1e-12


def test_realize_state_overlap_parametrization():
    src = SourceModel(z_overlap_angle=0.1)
    # oracle: direct inner product of the realized vectors
    v0 = realize_state(src, 0).as_array()
    v1 = realize_state(src, 1).as_array()
    overlap = abs(np.vdot(v0, v1))
    assert overlap == pytest.approx(math.sin(0.1), abs=1e-12)


def test_realize_state_2_normalized_with_overlap():
    src = SourceModel(c0=0.6, c1=0.8, theta=0.7, z_overlap_angle=0.08)
    v = realize_state(src, 2).as_array()
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)


def test_realize_state_bad_label():
    with pytest.raises(ValueError):
        realize_state(IDEAL, 3)


def test_transmittance_zero_distance_is_relay_efficiency():
    assert channel_transmittance(0.0, SystemParams()) == pytest.approx(0.67)


def test_transmittance_closed_form_100km():
    params = SystemParams(relay_efficiency=1.0)
    # per side: 50 km at 0.18 dB/km -> 10^-0.9
    assert channel_transmittance(100.0, params) == pytest.approx(
        10.0 ** -0.9, rel=1e-12)


def test_transmittance_lossless_limit():
    params = SystemParams(fiber_loss_db_per_km=0.0, relay_efficiency=1.0)
    assert channel_transmittance(5000.0, params) == 1.0


def test_gain_zero_without_photons_or_darks():
    s0, s1 = realize_state(IDEAL, 0), realize_state(IDEAL, 1)
    obs = pair_observables(s0, s1, 0.0, 0.0, 0.0, CLEAN)
    assert obs.gain == 0.0


def test_gain_zero_with_fully_lossy_channel():
    s0, s1 = realize_state(IDEAL, 0), realize_state(IDEAL, 1)
    params = SystemParams(relay_efficiency=0.0, dark_count_rate_hz=0.0)
    assert pair_observables(s0, s1, 0.5, 0.5, 10.0, params).gain == 0.0


def test_gain_matches_mc_oracle_at_operating_point():
    s0, s1 = realize_state(IDEAL, 0), realize_state(IDEAL, 1)
    params = SystemParams()
    obs = pair_observables(s0, s1, 0.2, 0.2, 0.0, params, labels=(0, 1))
    est = mc_photon_oracle(s0, s1, 0.2, 0.2, 0.0, params, trials=10 ** 7,
                           seed=20240517, labels=(0, 1))
    assert abs(obs.gain - est.gain) <= 3.0 * est.gain_se


def test_gain_monotone_in_distance():
    s0, s2 = realize_state(IDEAL, 0), realize_state(IDEAL, 2)
    gains = [pair_observables(s0, s2, 0.3, 0.3, d, SystemParams()).gain
             for d in np.linspace(0.0, 250.0, 11)]
    assert all(g1 >= g2 - 1e-15 for g1, g2 in zip(gains, gains[1:]))


def test_gain_symmetric_under_party_swap():
    rng = np.random.default_rng(7)
    for _ in range(20):
        c0 = rng.uniform(0.4, 0.9)
        src_a = SourceModel(c0=c0, c1=math.sqrt(1 - c0 ** 2),
                            theta=rng.uniform(0, 2 * math.pi),
                            z_overlap_angle=rng.uniform(0, 0.1))
        c0b = rng.uniform(0.4, 0.9)
        src_b = SourceModel(c0=c0b, c1=math.sqrt(1 - c0b ** 2),
                            theta=rng.uniform(0, 2 * math.pi),
                            z_overlap_angle=rng.uniform(0, 0.1))
        sa = realize_state(src_a, rng.integers(0, 3))
        sb = realize_state(src_b, rng.integers(0, 3))
        mu_a, mu_b = rng.uniform(0.05, 0.6, size=2)
        params = SystemParams()
        g1 = pair_observables(sa, sb, mu_a, mu_b, 80.0, params).gain
        g2 = pair_observables(sb, sa, mu_b, mu_a, 80.0, params).gain
        assert g1 == pytest.approx(g2, rel=1e-9, abs=1e-18)


def test_zz_error_rates_attach_to_labels():
    s0, s1 = realize_state(IDEAL, 0), realize_state(IDEAL, 1)
    params = SystemParams()
    assert pair_observables(s0, s1, 0.2, 0.2, 0.0, params,
                            labels=(0, 1)).error_rate == 0.0015
    assert pair_observables(s0, s0, 0.2, 0.2, 0.0, params,
                            labels=(0, 0)).error_rate == 1 - 0.0015
    # mismatched-basis settings carry no bit-error semantics
    assert pair_observables(s0, s1, 0.2, 0.2, 0.0, params,
                            labels=(2, 1)).error_rate == 0.0


# --- single-photon ground truth -------------------------------------------


def test_truth_zero_when_nothing_detects():
    params = SystemParams(relay_efficiency=0.0, dark_count_rate_hz=0.0)
    for m in range(3):
        for n in range(3):
            assert single_photon_truth(IDEAL, IDEAL, m, n, 0.0, params) == 0.0


def test_truth_hom_suppression_identical_states():
    # identical pure inputs never produce the antisymmetric outcome
    for label in (0, 1, 2):
        p = single_photon_truth(IDEAL, IDEAL, label, label, 0.0, CLEAN)
        assert p <= 1e-10


def test_truth_opposite_z_states_yield():
    p01 = single_photon_truth(IDEAL, IDEAL, 0, 1, 0.0, CLEAN)
    eta = channel_transmittance(0.0, CLEAN)
    assert p01 == pytest.approx(eta ** 2 / 2.0, rel=1e-12)


def test_truth_ratio_against_fock_mc_oracle():
    params = CLEAN
    s0, s1 = realize_state(IDEAL, 0), realize_state(IDEAL, 1)
    p01 = single_photon_truth(IDEAL, IDEAL, 0, 1, 40.0, params)
    est = mc_photon_oracle(s0, s1, 1.0, 1.0, 40.0, params, trials=10 ** 6,
                           seed=99, input_fock=True)
    assert abs(p01 - est.gain) <= 3.0 * max(
        est.gain_se, math.sqrt(p01 * (1 - p01) / est.trials))
    p00 = single_photon_truth(IDEAL, IDEAL, 0, 0, 40.0, params)
    est00 = mc_photon_oracle(s0, s0, 1.0, 1.0, 40.0, params, trials=10 ** 6,
                             seed=100, input_fock=True)
    assert p00 == pytest.approx(0.0, abs=1e-12)
    assert est00.gain == 0.0


def test_truth_misalignment_sets_x_error_probability():
    y11, e_phase = single_photon_z_truth(IDEAL, IDEAL, 0.0, NO_DARK)
    assert e_phase == pytest.approx(NO_DARK.misalignment_x, rel=1e-9)
    eta = channel_transmittance(0.0, NO_DARK)
    assert y11 == pytest.approx(eta ** 2 / 4.0, rel=1e-9)


def test_truth_x_pair_yield_under_misalignment():
    p22 = single_photon_truth(IDEAL, IDEAL, 2, 2, 0.0, NO_DARK)
    eta = channel_transmittance(0.0, NO_DARK)
    assert p22 == pytest.approx(
        NO_DARK.misalignment_x * eta ** 2 / 2.0, rel=1e-9)


def test_truth_phase_error_zero_for_clean_system():
    _, e_phase = single_photon_z_truth(IDEAL, IDEAL, 25.0, CLEAN)
    assert e_phase <= 1e-12
