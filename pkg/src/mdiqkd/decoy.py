"""Three-intensity decoy estimation of single-photon-pair yields.

For each state pair the observed gains at the nine intensity pairs obey

    Q(alpha, beta) = sum_{j,k>=0} P_j(alpha) P_k(beta) Y_jk

with Poisson weights P and intensity-independent yields Y.  Writing
H(alpha, beta) = e^{alpha+beta} Q(alpha, beta) and

    G(w) = H(w, w) - H(w, 0) - H(0, w) + H(0, 0)
         = sum_{j,k>=1} w^{j+k} / (j! k!) Y_jk,

the combination u^3 G(v) - v^3 G(u) cancels every j+k = 3 term and makes
all higher orders non-positive, giving the standard bounds

    Y_11 >= (u^3 G(v) - v^3 G(u)) / (u^2 v^2 (u - v)),
    Y_11 <= min(G(v)/v^2, G(u)/u^2, 1).

Observed gains enter as Hoeffding intervals; every linear combination is
evaluated with per-observable worst-case endpoints (each observable's net
coefficient decides which endpoint).  A vacuum pulse carries no state
information, so all tally cells that differ only in the idle party's state
label measure the same probability and are pooled before the interval is
formed.  When the two parties use different intensities the elimination is
additionally applied one party at a time (two-stage variant) and the
tighter of the two sound bounds is kept.  An LP over truncated photon
numbers is available as an independent cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (AnalysisOptions, ProtocolParams, TallyTable, YieldBounds,
                   STATE_LABELS, Z_STATES)

# distinct gain observables entering the estimation after pooling:
# 36 per-state-pair non-vacuum cells, 6 + 6 single-vacuum classes,
# 1 vacuum-vacuum class, 4 Z-sector aggregates
N_OBSERVABLES = 53


@dataclass(frozen=True)
class GainInterval:
    low: float
    high: float

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError("interval low exceeds high")

    def scaled(self, factor: float) -> "GainInterval":
        return GainInterval(self.low * factor, self.high * factor)


def poisson_weight(mu: float, n: int) -> float:
    """P(n photons) for a phase-randomized pulse of mean photon number mu."""
    if mu < 0 or n < 0:
        raise ValueError("mu and n must be non-negative")
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))


def finite_size_interval(successes: float, trials: float,
                         epsilon: float) -> GainInterval:
    """Hoeffding confidence interval for an observed frequency.

    Half-width sqrt(ln(2/epsilon) / (2 trials)), clipped to [0, 1].  With
    zero trials the full interval is returned.  Epsilon up to 2 is accepted
    (the half-width vanishes there); meaningful use is epsilon in (0, 1).
    """
    if not 0.0 < epsilon <= 2.0:
        raise ValueError("epsilon must lie in (0, 2]")
    if trials <= 0:
        return GainInterval(0.0, 1.0)
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    center = successes / trials
    half = math.sqrt(max(math.log(2.0 / epsilon), 0.0) / (2.0 * trials))
    return GainInterval(max(center - half, 0.0), min(center + half, 1.0))


def wilson_interval(successes: float, trials: float,
                    epsilon: float) -> GainInterval:
    """Variance-scaled (Wilson score) confidence interval.

    The deviation multiplier z = sqrt(2 ln(2/epsilon)) keeps the same
    per-observable failure budget as the Hoeffding treatment under the
    normal tail bound, while the width scales with the binomial standard
    deviation instead of the distribution-free worst case.  This is the
    fluctuation treatment customary for decoy-state analyses where the
    observed frequencies sit many orders of magnitude below 1/2.
    """
    if not 0.0 < epsilon <= 2.0:
        raise ValueError("epsilon must lie in (0, 2]")
    if trials <= 0:
        return GainInterval(0.0, 1.0)
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    z2 = 2.0 * max(math.log(2.0 / epsilon), 0.0)
    denom = trials + z2
    center = (successes + z2 / 2.0) / denom
    q_hat = successes / trials
    half = math.sqrt(z2 * (trials * q_hat * (1.0 - q_hat) + z2 / 4.0)) / denom
    return GainInterval(max(center - half, 0.0), min(center + half, 1.0))


def _gain_interval(successes: float, trials: float,
                   epsilon: Optional[float],
                   method: str = "wilson") -> GainInterval:
    if epsilon is None:
        if trials <= 0:
            return GainInterval(0.0, 1.0)
        q = min(max(successes / trials, 0.0), 1.0)
        return GainInterval(q, q)
    if method == "hoeffding":
        return finite_size_interval(successes, trials, epsilon)
    return wilson_interval(successes, trials, epsilon)


def _combine(coeffs: list[tuple[float, GainInterval]]) -> GainInterval:
    """Interval of a linear combination, per-observable worst case.

    Repeated observables must be merged into one net coefficient by the
    caller; this routine assumes entries are independent.
    """
    low = 0.0
    high = 0.0
    for c, iv in coeffs:
        if c >= 0:
            low += c * iv.low
            high += c * iv.high
        else:
            low += c * iv.high
            high += c * iv.low
    return GainInterval(low, high)


def _h_intervals(q: dict[tuple[int, int], GainInterval],
                 mus_a, mus_b) -> dict[tuple[int, int], GainInterval]:
    return {(a, b): q[a, b].scaled(math.exp(mus_a[a] + mus_b[b]))
            for a in range(3) for b in range(3)}


def _joint_bounds(h: dict, u: float, v: float) -> tuple[float, float]:
    """Symmetric-intensity Y11 bounds from the joint u/v/o elimination."""
    # G(w) = H(w,w) - H(w,0) - H(0,w) + H(0,0); indices 0=u, 1=v, 2=o
    def g_terms(idx: int) -> list[tuple[float, GainInterval]]:
        return [(1.0, h[idx, idx]), (-1.0, h[idx, 2]), (-1.0, h[2, idx]),
                (1.0, h[2, 2])]

    # lower: u^3 G(v) - v^3 G(u) with H(0,0) merged into its net coefficient
    u3, v3 = u ** 3, v ** 3
    lower_comb = _combine([
        (u3, h[1, 1]), (-u3, h[1, 2]), (-u3, h[2, 1]),
        (-v3, h[0, 0]), (v3, h[0, 2]), (v3, h[2, 0]),
        (u3 - v3, h[2, 2]),
    ])
    y_low = lower_comb.low / (u ** 2 * v ** 2 * (u - v))

    g_v = _combine(g_terms(1))
    g_u = _combine(g_terms(0))
    y_high = min(g_v.high / v ** 2, g_u.high / u ** 2, 1.0)
    return max(y_low, 0.0), max(y_high, 0.0)


def _stage_single(h_u: GainInterval, h_v: GainInterval, h_o: GainInterval,
                  u: float, v: float) -> tuple[float, float]:
    """One-party elimination: bounds on the linear-term coefficient Z_1 of
    h(w) = sum_j w^j / j! Z_j given h(u), h(v) and h(0) = Z_0."""
    lower_comb = _combine([(u ** 2, h_v), (-v ** 2, h_u),
                           (-(u ** 2 - v ** 2), h_o)])
    z1_low = lower_comb.low / (u * v * (u - v))
    up_v = _combine([(1.0, h_v), (-1.0, h_o)]).high / v
    up_u = _combine([(1.0, h_u), (-1.0, h_o)]).high / u
    return max(z1_low, 0.0), max(min(up_v, up_u), 0.0)


def _two_stage_bounds(q: dict, mus_a, mus_b) -> tuple[float, float]:
    """Asymmetric-intensity Y11 bounds, eliminating one party at a time.

    Returns an inverted pair (1, 0) when the gain data admit no consistent
    intermediate, which the caller maps to trivial bounds plus a warning.
    """
    u_a, v_a = mus_a[0], mus_a[1]
    u_b, v_b = mus_b[0], mus_b[1]
    w1: dict[int, GainInterval] = {}
    for b in range(3):
        col = {a: q[a, b].scaled(math.exp(mus_a[a])) for a in range(3)}
        lo, hi = _stage_single(col[0], col[1], col[2], u_a, v_a)
        hi = min(hi, 1.0)
        if lo > hi:
            return 1.0, 0.0
        w1[b] = GainInterval(lo, hi)
    wb = {b: w1[b].scaled(math.exp(mus_b[b])) for b in range(3)}
    return _stage_single(wb[0], wb[1], wb[2], u_b, v_b)


def _pair_bounds(q: dict, mus_a, mus_b) -> tuple[float, float]:
    lo, hi = _two_stage_bounds(q, mus_a, mus_b)
    symmetric = (math.isclose(mus_a[0], mus_b[0], rel_tol=1e-12)
                 and math.isclose(mus_a[1], mus_b[1], rel_tol=1e-12))
    if symmetric:
        h = _h_intervals(q, mus_a, mus_b)
        j_lo, j_hi = _joint_bounds(h, mus_a[0], mus_a[1])
        lo, hi = max(lo, j_lo), min(hi, j_hi)
    return lo, hi


def _lp_pair_bounds(q: dict, mus_a, mus_b,
                    max_photons: int = 12) -> tuple[float, float]:
    """LP cross-check: optimize Y11 over truncated photon-number yields."""
    from scipy.optimize import linprog

    n_ph = max_photons + 1
    n_var = n_ph * n_ph
    rows_ub = []
    rhs_ub = []
    for a in range(3):
        for b in range(3):
            weights = np.array(
                [[poisson_weight(mus_a[a], j) * poisson_weight(mus_b[b], k)
                  for k in range(n_ph)] for j in range(n_ph)]).ravel()
            tail = max(1.0 - weights.sum(), 0.0)
            rows_ub.append(weights)
            rhs_ub.append(q[a, b].high)
            rows_ub.append(-weights)
            rhs_ub.append(-(max(q[a, b].low - tail, 0.0)))
    cost = np.zeros(n_var)
    cost[1 * n_ph + 1] = 1.0
    bounds = [(0.0, 1.0)] * n_var
    lo = linprog(cost, A_ub=np.array(rows_ub), b_ub=np.array(rhs_ub),
                 bounds=bounds, method="highs")
    hi = linprog(-cost, A_ub=np.array(rows_ub), b_ub=np.array(rhs_ub),
                 bounds=bounds, method="highs")
    if not (lo.success and hi.success):
        return 0.0, 1.0
    return float(lo.fun), float(-hi.fun)


def _interval_classes(tallies: TallyTable, eps: Optional[float],
                      method: str):
    """Gain intervals with vacuum cells pooled across the idle state label.

    Returns (per-pair non-vacuum, alice-vacuum[n, b], bob-vacuum[m, a],
    vacuum-vacuum) interval lookups.
    """
    nonvac = {}
    for m in STATE_LABELS:
        for n in STATE_LABELS:
            for a in range(2):
                for b in range(2):
                    nonvac[m, n, a, b] = _gain_interval(
                        tallies.coinc[m, n, a, b], tallies.sent[m, n, a, b],
                        eps, method)
    a_vac = {}
    b_vac = {}
    for b in range(2):
        for n in STATE_LABELS:
            a_vac[n, b] = _gain_interval(tallies.coinc[:, n, 2, b].sum(),
                                         tallies.sent[:, n, 2, b].sum(),
                                         eps, method)
    for a in range(2):
        for m in STATE_LABELS:
            b_vac[m, a] = _gain_interval(tallies.coinc[m, :, a, 2].sum(),
                                         tallies.sent[m, :, a, 2].sum(),
                                         eps, method)
    vac_vac = _gain_interval(tallies.coinc[:, :, 2, 2].sum(),
                             tallies.sent[:, :, 2, 2].sum(), eps, method)
    return nonvac, a_vac, b_vac, vac_vac


def _average(iv1: GainInterval, iv2: GainInterval) -> GainInterval:
    return GainInterval(0.5 * (iv1.low + iv2.low),
                        0.5 * (iv1.high + iv2.high))


def estimate_p_bounds(tallies: TallyTable, protocol: ProtocolParams,
                      epsilon: Optional[float] = 1e-10,
                      options: Optional[AnalysisOptions] = None
                      ) -> YieldBounds:
    """Bound all nine single-photon-pair yields and the Z-sector Y11.

    ``epsilon`` is the total statistical failure budget (None for the
    asymptotic, zero-width treatment of Expected-mode tallies).  Gain data
    inconsistent with any non-negative yield assignment yields the trivial
    bounds [0, 1] plus a warning instead of an error.
    """
    method = options.decoy_method if options is not None else "analytic"
    fs_method = (options.finite_size_method if options is not None
                 else "wilson")
    eps_each = None if epsilon is None else epsilon / N_OBSERVABLES
    mus_a = protocol.alice.mus
    mus_b = protocol.bob.mus
    nonvac, a_vac, b_vac, vac_vac = _interval_classes(tallies, eps_each,
                                                      fs_method)

    p_lower = np.zeros((3, 3))
    p_upper = np.ones((3, 3))
    warnings: list[str] = []
    for m in STATE_LABELS:
        for n in STATE_LABELS:
            q = {}
            for a in range(2):
                for b in range(2):
                    q[a, b] = nonvac[m, n, a, b]
            for b in range(2):
                q[2, b] = a_vac[n, b]
            for a in range(2):
                q[a, 2] = b_vac[m, a]
            q[2, 2] = vac_vac
            if method == "lp":
                lo, hi = _lp_pair_bounds(q, mus_a, mus_b)
            else:
                lo, hi = _pair_bounds(q, mus_a, mus_b)
            lo = min(max(lo, 0.0), 1.0)
            hi = min(max(hi, 0.0), 1.0)
            if lo > hi:
                warnings.append(f"pair ({m},{n}): inconsistent gains, "
                                "falling back to trivial bounds")
                lo, hi = 0.0, 1.0
            p_lower[m, n] = lo
            p_upper[m, n] = hi

    qz = {}
    for a in range(2):
        for b in range(2):
            sent, coinc, _ = tallies.zz_sector(a, b)
            qz[a, b] = _gain_interval(coinc, sent, eps_each, fs_method)
    for b in range(2):
        qz[2, b] = _average(a_vac[0, b], a_vac[1, b])
    for a in range(2):
        qz[a, 2] = _average(b_vac[0, a], b_vac[1, a])
    qz[2, 2] = vac_vac
    if method == "lp":
        y11_lower, _ = _lp_pair_bounds(qz, mus_a, mus_b)
    else:
        y11_lower, _ = _pair_bounds(qz, mus_a, mus_b)
    y11_lower = min(max(y11_lower, 0.0), 1.0)

    return YieldBounds(p_lower=p_lower, p_upper=p_upper,
                       y11_lower=y11_lower, warnings=tuple(warnings))
