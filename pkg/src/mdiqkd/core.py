"""Domain types, indexing conventions, and validated configuration.

Conventions used throughout the package:

* State labels: 0 and 1 are the Z-basis key states, 2 is the single
  X-basis superposition state.
* Intensity indices: 0 = signal (u), 1 = decoy (v), 2 = vacuum (o = 0).
* Tally arrays are indexed ``[m, n, a, b]`` = (Alice state, Bob state,
  Alice intensity, Bob intensity), shape (3, 3, 3, 3).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

Z_STATES = (0, 1)
X_STATE = 2
STATE_LABELS = (0, 1, 2)
INTENSITY_NAMES = ("signal", "decoy", "vacuum")

NORM_TOL = 1e-12
PROB_RENORM_TOL = 1e-9


class ConfigError(ValueError):
    """A configuration violated one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IntensityLabel(str, Enum):
    SIGNAL = "signal"
    DECOY = "decoy"
    VACUUM = "vacuum"


@dataclass(frozen=True)
class IntensityClass:
    """One of the three preparable pulse intensities."""

    label: IntensityLabel
    mu: float


@dataclass(frozen=True)
class SourceModel:
    """A party's state-preparation imperfections.

    ``c0``, ``c1`` and ``theta`` define the X-basis superposition state;
    ``z_overlap_angle`` tilts the two Z states away from orthogonality
    (overlap = sin(z_overlap_angle)).  ``known_to_estimator`` is False in
    protocol mode; True pins the estimator to the true coefficients and is
    meant for oracle tests only.
    """

    c0: float = 1.0 / math.sqrt(2.0)
    c1: float = 1.0 / math.sqrt(2.0)
    theta: float = 0.0
    z_overlap_angle: float = 0.0
    known_to_estimator: bool = False


@dataclass(frozen=True)
class SystemParams:
    """Channel, detector and protocol-level physical constants."""

    fiber_loss_db_per_km: float = 0.18
    relay_efficiency: float = 0.67
    dark_count_rate_hz: float = 12.0
    gate_window_s: float = 2e-9
    misalignment_x: float = 0.015
    intrinsic_error_z: float = 0.0015
    repetition_rate_hz: float = 5e7
    total_pulses: int = 10**13
    ec_efficiency: float = 1.16

    @property
    def dark_prob(self) -> float:
        """Dark probability per detector per gate, d = rate * window."""
        return self.dark_count_rate_hz * self.gate_window_s


@dataclass(frozen=True)
class PartyParams:
    """Per-party intensity and basis choice probabilities."""

    intensities: tuple[IntensityClass, IntensityClass, IntensityClass]
    p_signal: float = 1.0 / 3.0
    p_decoy: float = 1.0 / 3.0
    p_vacuum: float = 1.0 / 3.0
    p_z_given_signal: float = 0.5
    p_z_given_decoy: float = 0.5

    @property
    def mus(self) -> tuple[float, float, float]:
        return tuple(ic.mu for ic in self.intensities)

    @property
    def intensity_probs(self) -> tuple[float, float, float]:
        return (self.p_signal, self.p_decoy, self.p_vacuum)

    def p_z_given(self, intensity_index: int) -> float:
        # Vacuum pulses carry no photons, so their nominal basis split is a
        # bookkeeping convention; we reuse the decoy-state split.
        return (self.p_z_given_signal, self.p_z_given_decoy,
                self.p_z_given_decoy)[intensity_index]

    def state_probability(self, m: int, intensity_index: int) -> float:
        """P(state m | intensity), states 0/1 split the Z basis evenly."""
        pz = self.p_z_given(intensity_index)
        return pz / 2.0 if m in Z_STATES else 1.0 - pz


def make_party_params(u: float, v: float, p_signal: float, p_decoy: float,
                      p_z_given_signal: float = 0.5,
                      p_z_given_decoy: float = 0.5) -> PartyParams:
    """Convenience constructor from bare numbers (vacuum mu pinned at 0)."""
    return PartyParams(
        intensities=(IntensityClass(IntensityLabel.SIGNAL, u),
                     IntensityClass(IntensityLabel.DECOY, v),
                     IntensityClass(IntensityLabel.VACUUM, 0.0)),
        p_signal=p_signal,
        p_decoy=p_decoy,
        p_vacuum=1.0 - p_signal - p_decoy,
        p_z_given_signal=p_z_given_signal,
        p_z_given_decoy=p_z_given_decoy,
    )


@dataclass(frozen=True)
class ProtocolParams:
    alice: PartyParams
    bob: PartyParams

    @classmethod
    def symmetric(cls, party: PartyParams) -> "ProtocolParams":
        return cls(alice=party, bob=party)


@dataclass(frozen=True)
class AnalysisOptions:
    """Estimator knobs shared by the decoy and phase-error stages.

    ``epsilon_total`` is the global statistical failure budget, split
    equally across all gain observables used by the estimator.
    ``f_objective`` selects the direction of the coefficient optimization
    in the phase-error stage: "max" takes the worst case over every
    coefficient assignment consistent with the data (sound by
    construction), "min" is the tightness-study toggle.
    """

    epsilon_total: float = 1e-10
    finite_size_method: str = "wilson"  # or "hoeffding"
    c_min: float = 0.05
    data_constraints: bool = True
    f_objective: str = "max"
    f_grid_step: float = 1e-3
    f_refine_tol: float = 1e-8
    decoy_method: str = "analytic"  # or "lp"


@dataclass(frozen=True)
class Config:
    """A fully validated run configuration."""

    system: SystemParams
    protocol: ProtocolParams
    source_alice: SourceModel
    source_bob: SourceModel
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    search_spec: Optional[dict] = None

    @classmethod
    def default(cls) -> "Config":
        party = make_party_params(u=0.4, v=0.1, p_signal=1.0 / 3.0,
                                  p_decoy=1.0 / 3.0)
        return validate_config(SystemParams(), ProtocolParams.symmetric(party),
                               (SourceModel(), SourceModel()))


# ---------------------------------------------------------------------------
# Validation


def _check_source(src: SourceModel, who: str, out: list[str]) -> None:
    if src.c0 < 0 or src.c1 < 0:
        out.append(f"{who}: superposition amplitudes must be non-negative")
    if abs(src.c0 ** 2 + src.c1 ** 2 - 1.0) > NORM_TOL:
        out.append(f"{who}: c0^2 + c1^2 must equal 1 within {NORM_TOL}")
    if not math.isfinite(src.theta) or not math.isfinite(src.z_overlap_angle):
        out.append(f"{who}: phases must be finite")


def _check_party(party: PartyParams, who: str, out: list[str]) -> PartyParams:
    labels = tuple(ic.label for ic in party.intensities)
    if labels != (IntensityLabel.SIGNAL, IntensityLabel.DECOY,
                  IntensityLabel.VACUUM):
        out.append(f"{who}: intensities must be ordered (signal, decoy, vacuum)")
        return party
    u, v, o = party.mus
    if o != 0.0:
        out.append(f"{who}: vacuum intensity must be exactly 0")
    if not (u > v > 0.0):
        out.append(f"{who}: intensity ordering signal.mu > decoy.mu > 0 violated")
    probs = party.intensity_probs
    if any(p < 0.0 or p > 1.0 for p in probs):
        out.append(f"{who}: intensity probabilities must lie in [0, 1]")
        return party
    total = sum(probs)
    if abs(total - 1.0) > PROB_RENORM_TOL:
        out.append(f"{who}: intensity probabilities sum to {total!r}, not 1")
    elif total != 1.0:
        party = replace(party, p_signal=party.p_signal / total,
                        p_decoy=party.p_decoy / total,
                        p_vacuum=party.p_vacuum / total)
    for name in ("p_z_given_signal", "p_z_given_decoy"):
        val = getattr(party, name)
        if not 0.0 <= val <= 1.0:
            out.append(f"{who}: {name} must lie in [0, 1]")
    return party


def _check_system(params: SystemParams, out: list[str]) -> None:
    if params.fiber_loss_db_per_km < 0:
        out.append("fiber_loss_db_per_km must be >= 0")
    if not 0.0 <= params.relay_efficiency <= 1.0:
        out.append("relay_efficiency must lie in [0, 1]")
    if params.dark_count_rate_hz < 0 or params.gate_window_s <= 0:
        out.append("dark count rate must be >= 0 and gate window > 0")
    if not 0.0 <= params.misalignment_x <= 0.5:
        out.append("misalignment_x must lie in [0, 0.5]")
    if not 0.0 <= params.intrinsic_error_z <= 0.5:
        out.append("intrinsic_error_z must lie in [0, 0.5]")
    if params.repetition_rate_hz <= 0:
        out.append("repetition_rate_hz must be positive")
    if params.total_pulses < 1:
        out.append("total_pulses must be a positive integer")
    if params.ec_efficiency < 1.0:
        out.append("ec_efficiency must be >= 1")
    if params.dark_prob >= 1.0:
        out.append("dark probability per gate must be < 1")


def _check_analysis(opts: AnalysisOptions, out: list[str]) -> None:
    if not 0.0 < opts.epsilon_total < 1.0:
        out.append("epsilon_total must lie in (0, 1)")
    if opts.finite_size_method not in ("wilson", "hoeffding"):
        out.append("finite_size_method must be 'wilson' or 'hoeffding'")
    if not 0.0 < opts.c_min <= 1.0 / math.sqrt(2.0):
        out.append("c_min must lie in (0, 1/sqrt(2)]")
    if opts.f_objective not in ("min", "max"):
        out.append("f_objective must be 'min' or 'max'")
    if opts.f_grid_step <= 0 or opts.f_grid_step > 1e-3:
        out.append("f_grid_step must be positive and at most 1e-3")
    if opts.decoy_method not in ("analytic", "lp"):
        out.append("decoy_method must be 'analytic' or 'lp'")


def validate_config(system: SystemParams, protocol: ProtocolParams,
                    sources: tuple[SourceModel, SourceModel],
                    analysis: AnalysisOptions = AnalysisOptions(),
                    search_spec: Optional[dict] = None) -> Config:
    """Check every invariant and return a normalized Config.

    The only silent repair performed is renormalizing intensity probability
    triples whose sum is within 1e-9 of 1.  Raises ConfigError listing every
    violated invariant otherwise.
    """
    violations: list[str] = []
    _check_system(system, violations)
    alice = _check_party(protocol.alice, "alice", violations)
    bob = _check_party(protocol.bob, "bob", violations)
    _check_source(sources[0], "alice source", violations)
    _check_source(sources[1], "bob source", violations)
    _check_analysis(analysis, violations)
    if violations:
        raise ConfigError(violations)
    return Config(system=system, protocol=ProtocolParams(alice, bob),
                  source_alice=sources[0], source_bob=sources[1],
                  analysis=analysis, search_spec=search_spec)


# ---------------------------------------------------------------------------
# Tally table


@dataclass
class TallyTable:
    """Sent / coincidence / error counts per (m, n, a, b) setting.

    Counts are stored as float64: Sampled-mode tables hold exact integers,
    Expected-mode tables hold unrounded expected counts so that downstream
    estimates reproduce the underlying probabilities exactly.
    """

    sent: np.ndarray
    coinc: np.ndarray
    err: np.ndarray

    @classmethod
    def zeros(cls) -> "TallyTable":
        shape = (3, 3, 3, 3)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def validate(self) -> None:
        for name, arr in (("sent", self.sent), ("coinc", self.coinc),
                          ("err", self.err)):
            if arr.shape != (3, 3, 3, 3):
                raise ValueError(f"{name} must have shape (3, 3, 3, 3)")
            if np.any(arr < 0):
                raise ValueError(f"{name} contains negative counts")
        if np.any(self.coinc > self.sent * (1 + 1e-12) + 1e-9):
            raise ValueError("coinc exceeds sent")
        if np.any(self.err > self.coinc * (1 + 1e-12) + 1e-9):
            raise ValueError("err exceeds coinc")

    def total_sent(self) -> float:
        return float(self.sent.sum())

    def zz_sector(self, a: int, b: int) -> tuple[float, float, float]:
        """(sent, coinc, err) summed over the four matched Z-state cells."""
        sl = (slice(0, 2), slice(0, 2), a, b)
        return (float(self.sent[sl].sum()), float(self.coinc[sl].sum()),
                float(self.err[sl].sum()))


@dataclass(frozen=True)
class YieldBounds:
    """Interval estimates of the single-photon-pair yields.

    ``p_lower``/``p_upper`` are 3x3 arrays over (Alice state, Bob state);
    ``y11_lower`` bounds the Z-sector single-photon yield used by the key
    rate.  ``warnings`` flags state pairs whose gain data admitted no
    consistent yield assignment (their bounds fall back to [0, 1]).
    """

    p_lower: np.ndarray
    p_upper: np.ndarray
    y11_lower: float
    warnings: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# JSON serialization

_SYSTEM_FIELDS = ("fiber_loss_db_per_km", "relay_efficiency",
                  "dark_count_rate_hz", "gate_window_s", "misalignment_x",
                  "intrinsic_error_z", "repetition_rate_hz", "total_pulses",
                  "ec_efficiency")
_PARTY_FIELDS = ("p_signal", "p_decoy", "p_vacuum", "p_z_given_signal",
                 "p_z_given_decoy")
_SOURCE_FIELDS = ("c0", "c1", "theta", "z_overlap_angle", "known_to_estimator")
_ANALYSIS_FIELDS = ("epsilon_total", "finite_size_method", "c_min",
                    "data_constraints", "f_objective", "f_grid_step",
                    "f_refine_tol", "decoy_method")


def _party_to_dict(party: PartyParams) -> dict:
    d = {"intensities": [{"label": ic.label.value, "mu": ic.mu}
                         for ic in party.intensities]}
    for name in _PARTY_FIELDS:
        d[name] = getattr(party, name)
    return d


def _party_from_dict(d: dict, who: str) -> PartyParams:
    unknown = set(d) - set(_PARTY_FIELDS) - {"intensities"}
    if unknown:
        raise ConfigError([f"{who}: unknown fields {sorted(unknown)}"])
    try:
        intensities = tuple(
            IntensityClass(IntensityLabel(ic["label"]), float(ic["mu"]))
            for ic in d["intensities"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError([f"{who}: bad intensities entry ({exc})"]) from exc
    if len(intensities) != 3:
        raise ConfigError([f"{who}: exactly three intensities required"])
    kwargs = {name: d[name] for name in _PARTY_FIELDS if name in d}
    return PartyParams(intensities=intensities, **kwargs)


def config_to_dict(cfg: Config) -> dict:
    out = {
        "system_params": {name: getattr(cfg.system, name)
                          for name in _SYSTEM_FIELDS},
        "protocol_params": {"alice": _party_to_dict(cfg.protocol.alice),
                            "bob": _party_to_dict(cfg.protocol.bob)},
        "source_models": {
            who: {name: getattr(src, name) for name in _SOURCE_FIELDS}
            for who, src in (("alice", cfg.source_alice),
                             ("bob", cfg.source_bob))},
        "analysis": {name: getattr(cfg.analysis, name)
                     for name in _ANALYSIS_FIELDS},
    }
    if cfg.search_spec is not None:
        out["search_spec"] = cfg.search_spec
    return out


def _filtered_kwargs(d: dict, fields: tuple, who: str) -> dict:
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError([f"{who}: unknown fields {sorted(unknown)}"])
    return dict(d)


def config_from_dict(data: dict) -> Config:
    unknown = set(data) - {"system_params", "protocol_params", "source_models",
                           "analysis", "search_spec"}
    if unknown:
        raise ConfigError([f"unknown top-level sections {sorted(unknown)}"])
    try:
        system = SystemParams(**_filtered_kwargs(
            data.get("system_params", {}), _SYSTEM_FIELDS, "system_params"))
        proto_d = data["protocol_params"]
        protocol = ProtocolParams(
            alice=_party_from_dict(proto_d["alice"], "alice"),
            bob=_party_from_dict(proto_d["bob"], "bob"))
        src_d = data["source_models"]
        sources = tuple(
            SourceModel(**_filtered_kwargs(src_d[who], _SOURCE_FIELDS,
                                           f"{who} source"))
            for who in ("alice", "bob"))
        analysis = AnalysisOptions(**_filtered_kwargs(
            data.get("analysis", {}), _ANALYSIS_FIELDS, "analysis"))
    except KeyError as exc:
        raise ConfigError([f"missing required section/field: {exc}"]) from exc
    except TypeError as exc:
        raise ConfigError([f"malformed configuration: {exc}"]) from exc
    return validate_config(system, protocol, sources, analysis,
                           data.get("search_spec"))


def load_config(path: str) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"invalid JSON: {exc}"]) from exc
    return config_from_dict(data)


def save_config(cfg: Config, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")
