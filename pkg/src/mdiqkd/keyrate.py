"""Secure key rate assembly and the end-to-end analysis pipeline."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Config, ProtocolParams, YieldBounds
from .decoy import estimate_p_bounds
from .eventsim import SimMode, simulate_tallies
from .phase_error import (CoefficientBox, DegenerateFError, minimize_f,
                          phase_error_bound)

REPORT_CSV_COLUMNS = ("distance_km", "rate_per_pulse", "e_p_upper",
                      "y11_lower", "gain_zz_signal", "qber_zz_signal",
                      "f_min")


@dataclass(frozen=True)
class KeyRateReport:
    """Key rate with every intermediate needed to audit it."""

    distance_km: float
    e_p_upper: float
    y11_lower: float
    gain_zz_signal: float
    qber_zz_signal: float
    f_min: float
    rate_per_pulse: float
    rate_raw: float
    protocol_params_used: ProtocolParams
    p_lower: tuple = ()
    p_upper: tuple = ()
    reason: str = ""
    warnings: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        def party(p):
            return {"u": p.mus[0], "v": p.mus[1],
                    "p_signal": p.p_signal, "p_decoy": p.p_decoy,
                    "p_vacuum": p.p_vacuum,
                    "p_z_given_signal": p.p_z_given_signal,
                    "p_z_given_decoy": p.p_z_given_decoy}

        return {
            "distance_km": self.distance_km,
            "rate_per_pulse": self.rate_per_pulse,
            "rate_raw": self.rate_raw,
            "e_p_upper": self.e_p_upper,
            "y11_lower": self.y11_lower,
            "gain_zz_signal": self.gain_zz_signal,
            "qber_zz_signal": self.qber_zz_signal,
            "f_min": self.f_min,
            "p_lower": [list(row) for row in self.p_lower],
            "p_upper": [list(row) for row in self.p_upper],
            "reason": self.reason,
            "warnings": list(self.warnings),
            "protocol_params_used": {
                "alice": party(self.protocol_params_used.alice),
                "bob": party(self.protocol_params_used.bob)},
        }

    def to_csv_row(self) -> list:
        return [self.distance_km, self.rate_per_pulse, self.e_p_upper,
                self.y11_lower, self.gain_zz_signal, self.qber_zz_signal,
                self.f_min]


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy H(x), with the 0 log 0 = 0 convention."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy argument must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def key_rate(y11_lower: float, e_p: float, q_zz: float, e_zz: float,
             u: float, p_u: float, p_z_given_u: float,
             f_ec: float) -> tuple[float, float]:
    """Secure key rate per pulse; returns (rate_raw, rate clamped at 0)."""
    if u <= 0:
        raise ValueError("signal intensity must be positive")
    if f_ec < 1.0:
        raise ValueError("error-correction efficiency must be >= 1")
    single_photon_weight = (math.exp(-u) * u) ** 2
    # beyond e_p = 1/2 privacy amplification removes everything
    privacy_factor = 1.0 - binary_entropy(e_p) if e_p < 0.5 else 0.0
    privacy = single_photon_weight * y11_lower * privacy_factor
    correction = q_zz * f_ec * binary_entropy(e_zz)
    rate_raw = (p_u * p_z_given_u) ** 2 * (privacy - correction)
    return rate_raw, max(rate_raw, 0.0)


def measured_zz_signal(tallies) -> tuple[float, float]:
    """Measured (gain, QBER) for the matched Z-basis signal-signal setting."""
    sent, coinc, err = tallies.zz_sector(0, 0)
    gain = coinc / sent if sent > 0 else 0.0
    qber = err / coinc if coinc > 0 else 0.0
    return gain, qber


def _coefficient_box(config: Config) -> CoefficientBox:
    """Estimator coefficient box; oracle-mode sources pin the true values."""
    kwargs = {"c_min": config.analysis.c_min}
    for party, src in (("alice", config.source_alice),
                       ("bob", config.source_bob)):
        if src.known_to_estimator:
            c0 = src.c0
            kwargs[f"{party}_c0_bounds"] = (c0, c0)
    return CoefficientBox(**kwargs)


def bound_phase_error(bounds: YieldBounds, config: Config
                      ) -> tuple[float, float, tuple[str, ...]]:
    """Run the coefficient optimization and the e_p bound.

    Returns (e_p_upper, f_min, warnings); degenerate yield data collapses
    to the worst case e_p = 1 with f_min reported as NaN.
    """
    opts = config.analysis
    try:
        res = minimize_f(bounds, _coefficient_box(config),
                         objective=opts.f_objective,
                         data_constraints=opts.data_constraints,
                         grid_step=opts.f_grid_step,
                         refine_tol=opts.f_refine_tol)
    except DegenerateFError:
        return 1.0, float("nan"), ("degenerate yield data: e_p set to 1",)
    e_p = phase_error_bound(bounds, res.value)
    return e_p, res.value, res.warnings


def end_to_end(config: Config, distance_km: float, mode: SimMode,
               asymptotic: bool = False,
               tallies=None) -> KeyRateReport:
    """Full pipeline: tallies -> decoy bounds -> e_p -> key rate.

    ``asymptotic`` skips the finite-size intervals (zero-width gains).
    Pre-generated ``tallies`` (e.g. read from a CSV produced by a real
    experiment) bypass the simulation stage.
    """
    if tallies is None:
        tallies = simulate_tallies(config, distance_km, mode)
    epsilon = None if asymptotic else config.analysis.epsilon_total
    bounds = estimate_p_bounds(tallies, config.protocol, epsilon=epsilon,
                               options=config.analysis)
    e_p, f_min, warnings = bound_phase_error(bounds, config)
    q_zz, e_zz = measured_zz_signal(tallies)
    alice = config.protocol.alice
    rate_raw, rate = key_rate(bounds.y11_lower, e_p, q_zz, e_zz,
                              u=alice.mus[0], p_u=alice.p_signal,
                              p_z_given_u=alice.p_z_given_signal,
                              f_ec=config.system.ec_efficiency)
    reason = ""
    if rate == 0.0:
        if e_p >= 0.5 or bounds.y11_lower == 0.0:
            reason = "privacy term vanished"
        else:
            reason = "error-correction cost dominates"
    return KeyRateReport(
        distance_km=distance_km, e_p_upper=e_p, y11_lower=bounds.y11_lower,
        gain_zz_signal=q_zz, qber_zz_signal=e_zz, f_min=f_min,
        rate_per_pulse=rate, rate_raw=rate_raw,
        protocol_params_used=config.protocol,
        p_lower=tuple(map(tuple, bounds.p_lower)),
        p_upper=tuple(map(tuple, bounds.p_upper)),
        reason=reason, warnings=tuple(bounds.warnings) + tuple(warnings))


def report_to_json(report: KeyRateReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2)
