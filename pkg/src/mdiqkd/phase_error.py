"""Phase-error bound for uncharacterized sources.

The bound combines the single-photon yield matrix p[m][n] with the unknown
X-state amplitudes (c0, c1) and (c0', c1') of the two parties through

    f = [ |sqrt(p22) + sqrt(p00) c0 c1' + sqrt(p11) c1 c0'|^2
          - p01 c0^2 c0'^2 - p10 c1^2 c1'^2 ]
        / [ 2 sqrt(p01 p10) c0 c0' c1 c1' ]

and the phase-error rate satisfies

    e_p <= [2 p00 + 2 p11 + p01 + p10 + 2 sqrt(p01 p10) f]
           / [2 (p00 + p11 + p01 + p10)].

The amplitudes are unknown, so f is optimized over the normalized,
clamped coefficient box intersected (by default) with the data-consistency
constraints implied by the announcement statistics: the event operator is
positive semidefinite, so for any fixed partner state

    (c0 sqrt(p0n) - c1 sqrt(p1n))^2 <= p2n <= (c0 sqrt(p0n) + c1 sqrt(p1n))^2,

and analogously for the other party.  These are the constraints the
mismatched-basis tallies exist to provide; without them the optimization
degenerates at the box corners.  Yield-interval endpoints enter each term
in the direction that extremizes f (corner enumeration for the two
denominator yields, monotone choice for the rest).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import YieldBounds


class DegenerateFError(ValueError):
    """The f denominator vanished; callers fall back to e_p = 1."""


@dataclass(frozen=True)
class CoefficientBox:
    """Feasible set for the unknown superposition amplitudes.

    ``c_min`` clamps every amplitude away from 0 (the denominator of f
    vanishes there).  Per-coefficient bounds, when given, pin or narrow one
    party's c0 range (c1 follows from normalization); oracle tests use this
    to pin the estimator at the true coefficients.
    """

    c_min: float = 0.05
    alice_c0_bounds: Optional[tuple[float, float]] = None
    bob_c0_bounds: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if not 0.0 < self.c_min <= 1.0 / math.sqrt(2.0) + 1e-12:
            raise ValueError("c_min must lie in (0, 1/sqrt(2)]")

    def angle_range(self, party: str) -> tuple[float, float]:
        """Feasible range of a = arccos(c0), honoring clamp and overrides."""
        c_hi = math.sqrt(1.0 - self.c_min ** 2)
        lo, hi = self.c_min, c_hi
        override = (self.alice_c0_bounds if party == "alice"
                    else self.bob_c0_bounds)
        if override is not None:
            lo = max(lo, override[0])
            hi = min(hi, override[1])
        if lo > hi:
            raise ValueError(f"empty coefficient range for {party}")
        return math.acos(hi), math.acos(lo)


@dataclass(frozen=True)
class FMinResult:
    value: float
    coefficients: tuple[float, float, float, float]  # c0, c1, c0', c1'
    corner: tuple[str, str]  # endpoints used for (p01, p10)
    constrained: bool
    warnings: tuple[str, ...] = ()


def f_value(c0: float, c1: float, c0p: float, c1p: float,
            p: np.ndarray) -> float:
    """Evaluate f for explicit coefficients and a 3x3 yield matrix."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("yields must be non-negative")
    if min(c0, c1, c0p, c1p) <= 0.0:
        raise DegenerateFError("all coefficients must be strictly positive")
    den = 2.0 * math.sqrt(p[0, 1] * p[1, 0]) * c0 * c0p * c1 * c1p
    if den == 0.0:
        raise DegenerateFError("zero denominator in f")
    num = ((math.sqrt(p[2, 2]) + math.sqrt(p[0, 0]) * c0 * c1p
            + math.sqrt(p[1, 1]) * c1 * c0p) ** 2
           - p[0, 1] * c0 ** 2 * c0p ** 2 - p[1, 0] * c1 ** 2 * c1p ** 2)
    return num / den


def _feasible_mask(angles: np.ndarray, bounds: YieldBounds, party: str,
                   slack_scale: float) -> np.ndarray:
    """Data-consistency mask over a grid of angles for one party.

    For Alice the constraints run over Bob's state index n (columns of p);
    for Bob over Alice's index m (rows).  A small Lipschitz slack keeps the
    grid neighbors of any truly feasible point feasible.
    """
    c0 = np.cos(angles)
    c1 = np.sin(angles)
    mask = np.ones(angles.shape, dtype=bool)
    for k in range(3):
        if party == "alice":
            lo0, hi0 = bounds.p_lower[0, k], bounds.p_upper[0, k]
            lo1, hi1 = bounds.p_lower[1, k], bounds.p_upper[1, k]
            t_lo, t_hi = bounds.p_lower[2, k], bounds.p_upper[2, k]
        else:
            lo0, hi0 = bounds.p_lower[k, 0], bounds.p_upper[k, 0]
            lo1, hi1 = bounds.p_lower[k, 1], bounds.p_upper[k, 1]
            t_lo, t_hi = bounds.p_lower[k, 2], bounds.p_upper[k, 2]
        r0l, r0h = math.sqrt(lo0), math.sqrt(hi0)
        r1l, r1h = math.sqrt(lo1), math.sqrt(hi1)
        slack = slack_scale * (r0h + r1h) ** 2 + 1e-15
        # reverse triangle: min over the yield box of (c0 r0 - c1 r1)^2
        diff_lo = c0 * r0l - c1 * r1h
        diff_hi = c0 * r0h - c1 * r1l
        min_sq = np.where(diff_lo * diff_hi <= 0.0, 0.0,
                          np.minimum(diff_lo ** 2, diff_hi ** 2))
        mask &= min_sq <= t_hi + slack
        # forward triangle: the superposition yield must be reachable
        mask &= (c0 * r0h + c1 * r1h) ** 2 >= t_lo - slack
    return mask


def _corner_matrices(bounds: YieldBounds, objective: str):
    """Yield matrices for every admissible interval-endpoint choice.

    f is monotone increasing in p00, p11 and p22, so those sit at the lower
    (for "min") or upper (for "max") endpoints; the two denominator yields
    p01 and p10 cut both ways and are enumerated.  Corners with a vanishing
    denominator product are skipped, duplicates (zero-width intervals)
    merged.
    """
    base = np.array(bounds.p_lower if objective == "min" else bounds.p_upper,
                    dtype=float)
    corners = []
    seen = set()
    for tag01 in ("low", "high"):
        for tag10 in ("low", "high"):
            p = base.copy()
            p[0, 1] = (bounds.p_lower if tag01 == "low"
                       else bounds.p_upper)[0, 1]
            p[1, 0] = (bounds.p_lower if tag10 == "low"
                       else bounds.p_upper)[1, 0]
            key = (p[0, 1], p[1, 0])
            if p[0, 1] * p[1, 0] > 0.0 and key not in seen:
                seen.add(key)
                corners.append(((tag01, tag10), p))
    return corners


def _f_grid(p: np.ndarray, ang_a: np.ndarray, ang_b: np.ndarray
            ) -> np.ndarray:
    c0 = np.cos(ang_a)[:, None]
    c1 = np.sin(ang_a)[:, None]
    c0p = np.cos(ang_b)[None, :]
    c1p = np.sin(ang_b)[None, :]
    num = ((math.sqrt(p[2, 2]) + math.sqrt(p[0, 0]) * c0 * c1p
            + math.sqrt(p[1, 1]) * c1 * c0p) ** 2
           - p[0, 1] * c0 ** 2 * c0p ** 2 - p[1, 0] * c1 ** 2 * c1p ** 2)
    den = 2.0 * math.sqrt(p[0, 1] * p[1, 0]) * c0 * c1 * c0p * c1p
    return num / den


def _grid_axis(lo: float, hi: float, step: float) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    n = max(int(math.ceil((hi - lo) / step)) + 1, 2)
    return np.linspace(lo, hi, n)


def _f_scalar(p: np.ndarray, a: float, b: float, sign: float) -> float:
    c0, c1 = math.cos(a), math.sin(a)
    c0p, c1p = math.cos(b), math.sin(b)
    num = ((math.sqrt(p[2, 2]) + math.sqrt(p[0, 0]) * c0 * c1p
            + math.sqrt(p[1, 1]) * c1 * c0p) ** 2
           - p[0, 1] * c0 ** 2 * c0p ** 2 - p[1, 0] * c1 ** 2 * c1p ** 2)
    den = 2.0 * math.sqrt(p[0, 1] * p[1, 0]) * c0 * c1 * c0p * c1p
    return sign * num / den


_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_axis(fun, lo: float, hi: float, tol: float
                 ) -> tuple[float, float]:
    """Golden-section minimization of one axis on [lo, hi]."""
    a, b = lo, hi
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = fun(x1), fun(x2)
    while b - a > tol:
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = fun(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def minimize_f(p_bounds: YieldBounds, box: CoefficientBox = CoefficientBox(),
               objective: str = "min", data_constraints: bool = True,
               grid_step: float = 1e-3, refine_tol: float = 1e-8
               ) -> FMinResult:
    """Certified extremum of f over the feasible coefficient set.

    Dense grid over the two free angles (c = (cos a, sin a) per party keeps
    normalization exact) followed by a deterministic local refinement; ties
    break toward the smallest angle pair.  ``objective="max"`` flips the
    search direction for sensitivity studies.
    """
    if objective not in ("min", "max"):
        raise ValueError("objective must be 'min' or 'max'")
    sign = 1.0 if objective == "min" else -1.0
    warnings: list[str] = []

    lo_a, hi_a = box.angle_range("alice")
    lo_b, hi_b = box.angle_range("bob")
    ang_a = _grid_axis(lo_a, hi_a, grid_step)
    ang_b = _grid_axis(lo_b, hi_b, grid_step)

    constrained = False
    mask_a = np.ones(ang_a.shape, dtype=bool)
    mask_b = np.ones(ang_b.shape, dtype=bool)
    if data_constraints:
        slack_scale = 2.0 * grid_step
        mask_a = _feasible_mask(ang_a, p_bounds, "alice", slack_scale)
        mask_b = _feasible_mask(ang_b, p_bounds, "bob", slack_scale)
        if mask_a.any() and mask_b.any():
            constrained = True
        else:
            warnings.append("data-consistency constraints infeasible; "
                            "falling back to the unconstrained box")
            mask_a = np.ones(ang_a.shape, dtype=bool)
            mask_b = np.ones(ang_b.shape, dtype=bool)

    corners = _corner_matrices(p_bounds, objective)
    if not corners:
        raise DegenerateFError(
            "p01 * p10 vanishes at every interval endpoint combination")

    best = None  # (signed f, a, b, corner tag, p)
    for tag, p in corners:
        grid = sign * _f_grid(p, ang_a, ang_b)
        grid = np.where(mask_a[:, None] & mask_b[None, :], grid, np.inf)
        flat = int(np.argmin(grid))
        ia, ib = np.unravel_index(flat, grid.shape)
        val = float(grid[ia, ib])
        if not math.isfinite(val):
            continue
        a_best, b_best = float(ang_a[ia]), float(ang_b[ib])

        # Local refinement within one grid cell of the winning grid point;
        # the feasibility slack was sized to keep this neighborhood inside
        # the relaxed constraint set, so no per-point re-checking is needed.
        a_ref, b_ref, v_ref = a_best, b_best, val
        axis_tol = min(grid_step * 1e-4, 1e-6)
        for _ in range(4):
            prev = v_ref
            a_ref, v_a = _golden_axis(
                lambda x: _f_scalar(p, x, b_ref, sign),
                max(lo_a, a_ref - grid_step), min(hi_a, a_ref + grid_step),
                axis_tol)
            b_ref, v_ref = _golden_axis(
                lambda x: _f_scalar(p, a_ref, x, sign),
                max(lo_b, b_ref - grid_step), min(hi_b, b_ref + grid_step),
                axis_tol)
            if abs(prev - v_ref) < refine_tol:
                break
        if v_ref < val:
            val, a_best, b_best = v_ref, a_ref, b_ref
        if best is None or val < best[0] - 1e-15:
            best = (val, a_best, b_best, tag, p)

    if best is None:
        raise DegenerateFError("f undefined over the whole feasible set")
    val, a_best, b_best, tag, _ = best
    coeffs = (math.cos(a_best), math.sin(a_best),
              math.cos(b_best), math.sin(b_best))
    return FMinResult(value=sign * val, coefficients=coeffs, corner=tag,
                      constrained=constrained, warnings=tuple(warnings))


def phase_error_bound(p_bounds: YieldBounds, f_min: float) -> float:
    """Worst-case e_p from the yield intervals and the optimized f.

    Numerator yields sit at their upper endpoints, denominator yields at
    their lower endpoints; the sqrt(p01 p10) factor multiplying f takes the
    endpoint matching the sign of f (upper for f >= 0, lower otherwise) so
    the term never shrinks below its true-value counterpart.  The result is
    clipped to [0, 1]; degenerate inputs (zero denominator or undefined f)
    return the trivial bound 1.
    """
    if f_min is None or not math.isfinite(f_min):
        return 1.0
    up = p_bounds.p_upper
    lo = p_bounds.p_lower
    den = 2.0 * (lo[0, 0] + lo[1, 1] + lo[0, 1] + lo[1, 0])
    if den <= 0.0:
        return 1.0
    cross = up if f_min >= 0 else lo
    num = (2.0 * up[0, 0] + 2.0 * up[1, 1] + up[0, 1] + up[1, 0]
           + 2.0 * math.sqrt(cross[0, 1] * cross[1, 0]) * f_min)
    return min(max(num / den, 0.0), 1.0)
