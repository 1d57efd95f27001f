"""Decoy estimation: intervals, Poisson weights, and yield-bound soundness."""
import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.stats

from mdiqkd import (GainInterval, SimMode, SourceModel, SystemParams,
                    TallyTable, estimate_p_bounds, finite_size_interval,
                    poisson_weight, simulate_tallies, single_photon_truth,
                    make_party_params, ProtocolParams)
from mdiqkd.decoy import wilson_interval, _lp_pair_bounds, _gain_interval
from mdiqkd.eventsim import gain_error_table

from conftest import config_with, random_scenario


def test_poisson_weight_vacuum_limits():
    assert poisson_weight(0.0, 0) == 1.0
    assert poisson_weight(0.0, 3) == 0.0


def test_poisson_weight_closed_form():
    # oracle: scipy's Poisson pmf
    for mu, n in ((0.5, 1), (0.3, 0), (0.9, 4)):
        assert poisson_weight(mu, n) == pytest.approx(
            scipy.stats.poisson.pmf(n, mu), rel=1e-12)
    assert poisson_weight(0.5, 1) == pytest.approx(0.5 * math.exp(-0.5),
                                                   rel=1e-12)


def test_finite_size_interval_closed_form():
    iv = finite_size_interval(0, 10 ** 6, 1e-10)
    half = math.sqrt(math.log(2e10) / (2e6))
    assert half == pytest.approx(3.4438e-3, abs=1e-6)
    assert iv.low == 0.0
    assert iv.high == pytest.approx(half, rel=1e-12)


def test_finite_size_interval_zero_width_at_epsilon_two():
    iv = finite_size_interval(500, 1000, 2.0)
    assert iv.low == iv.high == 0.5


def test_finite_size_interval_clipping():
    iv = finite_size_interval(1000, 1000, 1e-10)
    assert iv.high == 1.0
    assert iv.low < 1.0


def test_finite_size_interval_empty_data():
    assert finite_size_interval(0, 0, 1e-10) == GainInterval(0.0, 1.0)


def test_wilson_interval_tracks_binomial_se():
    n, q = 10 ** 10, 1e-4
    iv = wilson_interval(q * n, n, 1e-12)
    z = math.sqrt(2 * math.log(2e12))
    se = math.sqrt(q * (1 - q) / n)
    assert (iv.high - iv.low) / 2 == pytest.approx(z * se, rel=0.01)
    assert iv.low < q < iv.high


def test_wilson_interval_zero_counts():
    iv = wilson_interval(0, 10 ** 8, 1e-12)
    z2 = 2 * math.log(2e12)
    assert iv.low == 0.0
    assert iv.high == pytest.approx(z2 / 10 ** 8, rel=0.1)


def test_interval_invalid_inputs():
    with pytest.raises(ValueError):
        finite_size_interval(5, 3, 1e-10)
    with pytest.raises(ValueError):
        finite_size_interval(1, 2, 3.0)
    with pytest.raises(ValueError):
        wilson_interval(1, 2, 0.0)


def _constant_yield_tallies(y: float) -> TallyTable:
    """Signal-independent channel: every setting has gain y exactly."""
    t = TallyTable.zeros()
    t.sent[:] = 1e9
    t.coinc[:] = 1e9 * y
    return t


def test_constant_yield_sanity():
    proto = ProtocolParams.symmetric(
        make_party_params(0.4, 0.1, 1 / 3, 1 / 3))
    y = 3.7e-4
    bounds = estimate_p_bounds(_constant_yield_tallies(y), proto,
                               epsilon=None)
    assert np.all(bounds.p_lower <= y + 1e-12)
    assert np.all(bounds.p_upper >= y - 1e-12)
    assert bounds.y11_lower <= y + 1e-12


def test_all_zero_gains():
    proto = ProtocolParams.symmetric(
        make_party_params(0.4, 0.1, 1 / 3, 1 / 3))
    bounds = estimate_p_bounds(_constant_yield_tallies(0.0), proto,
                               epsilon=None)
    assert np.all(bounds.p_lower == 0.0)
    assert bounds.y11_lower == 0.0


def test_asymptotic_soundness_and_tightness(default_config):
    tallies = simulate_tallies(default_config, 100.0, SimMode.expected())
    bounds = estimate_p_bounds(tallies, default_config.protocol,
                               epsilon=None)
    truth = np.array([[single_photon_truth(default_config.source_alice,
                                           default_config.source_bob,
                                           m, n, 100.0,
                                           default_config.system)
                       for n in range(3)] for m in range(3)])
    assert np.all(bounds.p_lower <= truth + 1e-12)
    assert np.all(bounds.p_upper >= truth - 1e-12)
    y11_true = truth[:2, :2].mean()
    # three-intensity analytic bound must never exceed the truth and stay
    # within a factor two of it at the reference operating point
    assert 0.5 * y11_true <= bounds.y11_lower <= y11_true + 1e-12


def test_finite_size_soundness_default_budget(default_config):
    tallies = simulate_tallies(default_config, 100.0, SimMode.expected())
    bounds = estimate_p_bounds(tallies, default_config.protocol,
                               epsilon=1e-10)
    truth = np.array([[single_photon_truth(default_config.source_alice,
                                           default_config.source_bob,
                                           m, n, 100.0,
                                           default_config.system)
                       for n in range(3)] for m in range(3)])
    assert np.all(bounds.p_lower <= truth + 1e-12)
    assert np.all(bounds.p_upper >= truth - 1e-12)
    y11_true = truth[:2, :2].mean()
    assert 0.5 * y11_true <= bounds.y11_lower <= y11_true + 1e-12


def test_hoeffding_method_still_sound(default_config):
    cfg = config_with(analysis=replace(default_config.analysis,
                                       finite_size_method="hoeffding"))
    tallies = simulate_tallies(cfg, 100.0, SimMode.expected())
    bounds = estimate_p_bounds(tallies, cfg.protocol, epsilon=1e-10,
                               options=cfg.analysis)
    truth = np.array([[single_photon_truth(cfg.source_alice, cfg.source_bob,
                                           m, n, 100.0, cfg.system)
                       for n in range(3)] for m in range(3)])
    assert np.all(bounds.p_lower <= truth + 1e-12)
    assert np.all(bounds.p_upper >= truth - 1e-12)


def test_monotonicity_widening_never_tightens(default_config):
    tallies = simulate_tallies(default_config, 90.0, SimMode.expected())
    tight = estimate_p_bounds(tallies, default_config.protocol,
                              epsilon=1e-8)
    loose = estimate_p_bounds(tallies, default_config.protocol,
                              epsilon=1e-14)
    assert np.all(loose.p_lower <= tight.p_lower + 1e-15)
    assert np.all(loose.p_upper >= tight.p_upper - 1e-15)
    assert loose.y11_lower <= tight.y11_lower + 1e-15


def test_vacuum_rows_contribute_only_dark_counts(default_config):
    # with no dark counts a vacuum pulse facing a single-bin (Z) state can
    # never complete the two-gate announcement pattern, so those vacuum
    # rows read exactly zero and removing them cannot move the bounds
    system = replace(default_config.system, dark_count_rate_hz=0.0)
    cfg = config_with(system=system)
    tallies = simulate_tallies(cfg, 60.0, SimMode.expected())
    assert np.all(tallies.coinc[:2, :, :, 2] == 0.0)  # Bob dark, Alice in Z
    assert np.all(tallies.coinc[:, :2, 2, :] == 0.0)  # Alice dark, Bob in Z
    assert np.all(tallies.coinc[:, :, 2, 2] == 0.0)   # both dark
    hard_zero = TallyTable(sent=tallies.sent.copy(),
                           coinc=tallies.coinc.copy(),
                           err=tallies.err.copy())
    hard_zero.coinc[:2, :, :, 2] = 0.0
    hard_zero.coinc[:, :2, 2, :] = 0.0
    hard_zero.coinc[:, :, 2, 2] = 0.0
    b1 = estimate_p_bounds(tallies, cfg.protocol, epsilon=None)
    b2 = estimate_p_bounds(hard_zero, cfg.protocol, epsilon=None)
    assert np.array_equal(b1.p_lower[:2, :2], b2.p_lower[:2, :2])
    assert np.array_equal(b1.p_upper[:2, :2], b2.p_upper[:2, :2])


def test_inconsistent_gains_degrade_gracefully():
    proto = ProtocolParams.symmetric(
        make_party_params(0.4, 0.1, 1 / 3, 1 / 3))
    t = TallyTable.zeros()
    t.sent[:] = 1e9
    # decoy gain wildly above signal gain: no yield assignment fits
    t.coinc[:, :, 0, 0] = 1e9 * 1e-6
    t.coinc[:, :, 1, 1] = 1e9 * 0.9
    bounds = estimate_p_bounds(t, proto, epsilon=None)
    assert bounds.warnings
    assert np.all(bounds.p_upper >= bounds.p_lower)


def test_asymmetric_intensities_sound():
    rng = np.random.default_rng(31)
    alice = make_party_params(0.5, 0.12, 1 / 3, 1 / 3)
    bob = make_party_params(0.35, 0.08, 1 / 3, 1 / 3)
    cfg = config_with(protocol=ProtocolParams(alice=alice, bob=bob))
    tallies = simulate_tallies(cfg, 70.0, SimMode.expected())
    bounds = estimate_p_bounds(tallies, cfg.protocol, epsilon=None)
    truth = np.array([[single_photon_truth(cfg.source_alice, cfg.source_bob,
                                           m, n, 70.0, cfg.system)
                       for n in range(3)] for m in range(3)])
    assert np.all(bounds.p_lower <= truth + 1e-12)
    assert np.all(bounds.p_upper >= truth - 1e-12)


def test_lp_cross_check_consistent_and_sound(default_config):
    tallies = simulate_tallies(default_config, 100.0, SimMode.expected())
    analytic = estimate_p_bounds(tallies, default_config.protocol,
                                 epsilon=None)
    lp_opts = replace(default_config.analysis, decoy_method="lp")
    lp = estimate_p_bounds(tallies, default_config.protocol, epsilon=None,
                           options=lp_opts)
    truth = np.array([[single_photon_truth(default_config.source_alice,
                                           default_config.source_bob,
                                           m, n, 100.0,
                                           default_config.system)
                       for n in range(3)] for m in range(3)])
    # LP uses the same data jointly, so it can only tighten; the absolute
    # slack covers the LP solver's feasibility tolerance, which is the
    # resolution floor for dark-count-scale yields
    assert np.all(lp.p_lower >= analytic.p_lower - 1e-7)
    assert np.all(lp.p_upper <= analytic.p_upper + 1e-7)
    assert np.all(lp.p_lower <= truth + 1e-7)
    assert np.all(lp.p_upper >= truth - 1e-7)
    assert lp.y11_lower >= analytic.y11_lower - 1e-7
