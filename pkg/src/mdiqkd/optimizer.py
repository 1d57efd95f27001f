"""Deterministic search of protocol parameters maximizing the key rate.

Coordinate descent with golden-section line searches over
(u, v, p_signal, p_decoy, p_z_given_signal, p_z_given_decoy), started from
a fixed set of initial points; both parties share parameters unless the
asymmetric toggle doubles the space.  Probes are evaluated on Expected-mode
tallies (finite-size intervals included, since the pulse budget drives the
optimum); the winning candidate is re-evaluated through the full-resolution
pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from .core import Config, ProtocolParams, make_party_params
from .eventsim import SimMode
from .keyrate import KeyRateReport, end_to_end

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

_PARAM_ORDER = ("u", "v", "p_signal", "p_decoy", "p_z_signal", "p_z_decoy")


@dataclass(frozen=True)
class SearchSpec:
    """Box bounds, start points and tolerances for the parameter search."""

    u_bounds: tuple[float, float] = (0.05, 1.0)
    v_bounds: tuple[float, float] = (0.005, 0.5)
    p_signal_bounds: tuple[float, float] = (0.1, 0.95)
    p_decoy_bounds: tuple[float, float] = (0.02, 0.8)
    p_z_signal_bounds: tuple[float, float] = (0.1, 0.95)
    p_z_decoy_bounds: tuple[float, float] = (0.05, 0.95)
    rel_tol: float = 1e-3
    max_sweeps: int = 8
    line_search_evals: int = 12
    probe_grid_step: float = 0.02
    asymmetric: bool = False
    starts: Optional[tuple[dict, ...]] = None

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "SearchSpec":
        if not d:
            return cls()
        kwargs = {}
        for name in ("u_bounds", "v_bounds", "p_signal_bounds",
                     "p_decoy_bounds", "p_z_signal_bounds",
                     "p_z_decoy_bounds"):
            if name in d:
                kwargs[name] = tuple(d[name])
        for name in ("rel_tol", "max_sweeps", "line_search_evals",
                     "probe_grid_step", "asymmetric"):
            if name in d:
                kwargs[name] = d[name]
        if "starts" in d:
            kwargs["starts"] = tuple(dict(s) for s in d["starts"])
        return cls(**kwargs)

    def bounds_of(self, name: str) -> tuple[float, float]:
        return {
            "u": self.u_bounds, "v": self.v_bounds,
            "p_signal": self.p_signal_bounds,
            "p_decoy": self.p_decoy_bounds,
            "p_z_signal": self.p_z_signal_bounds,
            "p_z_decoy": self.p_z_decoy_bounds,
        }[name]

    def default_starts(self) -> tuple[dict, ...]:
        if self.starts is not None:
            return self.starts
        starts = []
        for u, v in ((0.3, 0.1), (0.65, 0.05)):
            for p_signal in (0.45, 0.75):
                for p_z in (0.6, 0.9):
                    starts.append({"u": u, "v": v, "p_signal": p_signal,
                                   "p_decoy": 0.75 * (1.0 - p_signal),
                                   "p_z_signal": p_z, "p_z_decoy": 0.45})
        return tuple(starts)


def _param_names(spec: SearchSpec) -> tuple[str, ...]:
    if not spec.asymmetric:
        return _PARAM_ORDER
    return _PARAM_ORDER + tuple(f"{n}_b" for n in _PARAM_ORDER)


def _clip_point(point: dict, spec: SearchSpec) -> dict:
    out = dict(point)
    if spec.asymmetric:
        for name in _PARAM_ORDER:
            out.setdefault(f"{name}_b", out[name])
    for suffix in ("", "_b") if spec.asymmetric else ("",):
        for name in _PARAM_ORDER:
            lo, hi = spec.bounds_of(name)
            key = name + suffix
            out[key] = min(max(out[key], lo), hi)
        # strict intensity ordering and a nonzero vacuum share
        out["v" + suffix] = min(out["v" + suffix], 0.95 * out["u" + suffix])
        p_sig = "p_signal" + suffix
        p_dec = "p_decoy" + suffix
        max_decoy = 0.98 - out[p_sig]
        if max_decoy <= 0:
            out[p_sig] = min(out[p_sig], 0.95)
            max_decoy = 0.98 - out[p_sig]
        out[p_dec] = min(max(out[p_dec], 0.005), max_decoy)
    return out


def _party_from_point(point: dict, suffix: str):
    return make_party_params(
        u=point["u" + suffix], v=point["v" + suffix],
        p_signal=point["p_signal" + suffix],
        p_decoy=point["p_decoy" + suffix],
        p_z_given_signal=point["p_z_signal" + suffix],
        p_z_given_decoy=point["p_z_decoy" + suffix])


def _point_to_protocol(point: dict, spec: SearchSpec) -> ProtocolParams:
    alice = _party_from_point(point, "")
    if not spec.asymmetric:
        return ProtocolParams.symmetric(alice)
    return ProtocolParams(alice=alice, bob=_party_from_point(point, "_b"))


class _Evaluator:
    """Caching Expected-mode rate evaluation at probe resolution."""

    def __init__(self, config: Config, distance_km: float, spec: SearchSpec,
                 asymptotic: bool):
        probe_analysis = replace(config.analysis,
                                 f_grid_step=spec.probe_grid_step)
        self._config = replace(config, analysis=probe_analysis)
        self._distance = distance_km
        self._spec = spec
        self._asymptotic = asymptotic
        self._cache: dict[tuple, float] = {}
        self.evaluations = 0

    def rate(self, point: dict) -> float:
        key = tuple(round(point[k], 12) for k in _param_names(self._spec))
        if key in self._cache:
            return self._cache[key]
        cfg = replace(self._config,
                      protocol=_point_to_protocol(point, self._spec))
        try:
            report = end_to_end(cfg, self._distance, SimMode.expected(),
                                asymptotic=self._asymptotic)
            value = report.rate_per_pulse
        except ValueError:
            value = 0.0
        self.evaluations += 1
        self._cache[key] = value
        return value


def _golden_line_search(evaluator: _Evaluator, point: dict, name: str,
                        spec: SearchSpec) -> dict:
    base, suffix = (name[:-2], "_b") if name.endswith("_b") else (name, "")
    lo, hi = spec.bounds_of(base)
    if base == "v":
        hi = min(hi, 0.95 * point["u" + suffix])
    elif base == "p_decoy":
        hi = min(hi, 0.98 - point["p_signal" + suffix])
    elif base == "p_signal":
        hi = min(hi, 0.98 - point["p_decoy" + suffix])
    if hi <= lo:
        return point

    def value_at(x: float) -> float:
        probe = _clip_point({**point, name: x}, spec)
        return evaluator.rate(probe)

    # coarse bracketing scan first: the objective has flat zero-rate
    # plateaus where golden section alone has no gradient to follow
    xs = [lo + (hi - lo) * i / 8.0 for i in range(9)]
    cur = point[name]
    scan = [(value_at(x), -x, x) for x in xs + [cur]]
    _, _, center = max(scan)
    span = (hi - lo) / 8.0
    a, b = max(lo, center - span), min(hi, center + span)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = value_at(x1), value_at(x2)
    for _ in range(spec.line_search_evals):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = value_at(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = value_at(x1)
    x_best = x1 if f1 >= f2 else x2
    candidates = [x_best, center]
    best_x = max(candidates, key=lambda x: (value_at(x), -x))
    candidate = _clip_point({**point, name: best_x}, spec)
    if evaluator.rate(candidate) >= evaluator.rate(point):
        return candidate
    return point


def optimize(config: Config, distance_km: float,
             search_spec: Optional[SearchSpec] = None,
             asymptotic: bool = False
             ) -> tuple[ProtocolParams, KeyRateReport]:
    """Best protocol parameters found and the full report at that point.

    Deterministic: fixed multi-start set, golden-section coordinate descent,
    ties broken by the earlier start.  When no positive rate exists in the
    box a zero-rate report is returned with the best-found parameters.
    """
    if search_spec is None:
        search_spec = SearchSpec.from_dict(config.search_spec)
    evaluator = _Evaluator(config, distance_km, search_spec, asymptotic)

    best_point = None
    best_rate = -1.0
    for start in search_spec.default_starts():
        point = _clip_point(dict(start), search_spec)
        rate = evaluator.rate(point)
        for sweep in range(search_spec.max_sweeps):
            before = rate
            for name in _param_names(search_spec):
                point = _golden_line_search(evaluator, point, name,
                                            search_spec)
            rate = evaluator.rate(point)
            if rate <= 0.0 and sweep >= 1:
                break
            if before > 0 and (rate - before) / before < search_spec.rel_tol:
                break
        if rate > best_rate + 1e-18:
            best_rate = rate
            best_point = point

    protocol = _point_to_protocol(best_point, search_spec)
    final_config = replace(config, protocol=protocol)
    report = end_to_end(final_config, distance_km, SimMode.expected(),
                        asymptotic=asymptotic)
    return protocol, report
