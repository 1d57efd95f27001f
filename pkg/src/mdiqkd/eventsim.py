"""Tally generation (expected or sampled) and the photon-level MC oracle.

Sampled runs are fully determined by (configuration, seed): the sent counts
come from one multinomial draw on the master Philox stream and every cell's
coincidence/error draws use a Philox stream jumped to that cell's fixed
index, so results do not depend on evaluation order.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Config, SystemParams, TallyTable, STATE_LABELS, Z_STATES
from .optics import (QubitState, channel_transmittance, misaligned_variants,
                     pair_observables, realize_state, zz_error_rate,
                     _two_photon_support_probs, _single_photon_support_probs,
                     _GATE_BIN, _GATE_SIGN, _PATTERNS)

_MC_CHUNK = 1 << 18

TALLY_CSV_COLUMNS = ("m", "n", "intensity_a", "intensity_b",
                     "sent", "coinc", "err")
_INTENSITY_NAME = ("signal", "decoy", "vacuum")
_INTENSITY_INDEX = {name: i for i, name in enumerate(_INTENSITY_NAME)}


@dataclass(frozen=True)
class SimMode:
    """Expected-value mode or binomially sampled finite-size mode."""

    kind: str
    seed: Optional[int] = None

    @classmethod
    def expected(cls) -> "SimMode":
        return cls(kind="expected")

    @classmethod
    def sampled(cls, seed: int) -> "SimMode":
        if not 0 <= int(seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        return cls(kind="sampled", seed=int(seed))

    @property
    def is_sampled(self) -> bool:
        return self.kind == "sampled"


def setting_probabilities(config: Config) -> tuple[np.ndarray, np.ndarray]:
    """Per-party P(state m, intensity a) matrices, shape (3, 3)."""
    out = []
    for party in (config.protocol.alice, config.protocol.bob):
        mat = np.zeros((3, 3))
        for a, p_int in enumerate(party.intensity_probs):
            for m in STATE_LABELS:
                mat[m, a] = p_int * party.state_probability(m, a)
        out.append(mat)
    return out[0], out[1]


def gain_error_table(config: Config, distance_km: float
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Gain and conditional-error probabilities for all 81 settings."""
    states_a = [realize_state(config.source_alice, m) for m in STATE_LABELS]
    states_b = [realize_state(config.source_bob, n) for n in STATE_LABELS]
    mus_a = config.protocol.alice.mus
    mus_b = config.protocol.bob.mus
    gain = np.zeros((3, 3, 3, 3))
    err = np.zeros((3, 3, 3, 3))
    for m in STATE_LABELS:
        for n in STATE_LABELS:
            for a in range(3):
                for b in range(3):
                    obs = pair_observables(states_a[m], states_b[n],
                                           mus_a[a], mus_b[b], distance_km,
                                           config.system, labels=(m, n))
                    gain[m, n, a, b] = obs.gain
                    err[m, n, a, b] = obs.error_rate
    return gain, err


def _multinomial_by_cell(rng: np.random.Generator, total: int,
                         probs: np.ndarray) -> np.ndarray:
    """Exact multinomial via sequential conditional binomials (int64-safe)."""
    flat = probs.ravel()
    counts = np.zeros(flat.size, dtype=np.int64)
    remaining = int(total)
    remaining_prob = 1.0
    for i, p in enumerate(flat[:-1]):
        if remaining <= 0 or remaining_prob <= 0:
            break
        p_cond = min(max(p / remaining_prob, 0.0), 1.0)
        draw = int(rng.binomial(remaining, p_cond))
        counts[i] = draw
        remaining -= draw
        remaining_prob -= p
    counts[-1] = max(remaining, 0)
    return counts.reshape(probs.shape)


def simulate_tallies(config: Config, distance_km: float,
                     mode: SimMode) -> TallyTable:
    """Generate the full 81-setting tally table for one distance."""
    n_total = config.system.total_pulses
    if n_total < 1:
        raise ValueError("total_pulses must be at least 1")
    p_a, p_b = setting_probabilities(config)
    cell_probs = np.einsum("ma,nb->mnab", p_a, p_b)
    expected_sent = n_total * cell_probs
    if expected_sent.max() < 0.5:
        raise ValueError(
            "total_pulses too small: every expected cell count rounds to 0")
    gain, err_rate = gain_error_table(config, distance_km)

    if not mode.is_sampled:
        sent = expected_sent
        coinc = sent * gain
        err = coinc * err_rate
        return TallyTable(sent=sent, coinc=coinc, err=err)

    master = np.random.Generator(np.random.Philox(key=mode.seed))
    sent = _multinomial_by_cell(master, n_total, cell_probs).astype(float)
    coinc = np.zeros_like(sent)
    err = np.zeros_like(sent)
    for idx in range(81):
        m, n, a, b = np.unravel_index(idx, (3, 3, 3, 3))
        n_sent = int(sent[m, n, a, b])
        if n_sent == 0:
            continue
        cell_rng = np.random.Generator(
            np.random.Philox(key=mode.seed).jumped(idx + 1))
        n_coinc = int(cell_rng.binomial(n_sent, gain[m, n, a, b]))
        coinc[m, n, a, b] = n_coinc
        if n_coinc and err_rate[m, n, a, b] > 0:
            err[m, n, a, b] = cell_rng.binomial(n_coinc, err_rate[m, n, a, b])
    table = TallyTable(sent=sent, coinc=coinc, err=err)
    table.validate()
    return table


# ---------------------------------------------------------------------------
# Tally CSV serialization


def write_tally_csv(table: TallyTable, path: str) -> None:
    def fmt(x: float) -> str:
        return str(int(x)) if float(x).is_integer() else repr(float(x))

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TALLY_CSV_COLUMNS)
        for m in STATE_LABELS:
            for n in STATE_LABELS:
                for a in range(3):
                    for b in range(3):
                        writer.writerow([m, n, _INTENSITY_NAME[a],
                                         _INTENSITY_NAME[b],
                                         fmt(table.sent[m, n, a, b]),
                                         fmt(table.coinc[m, n, a, b]),
                                         fmt(table.err[m, n, a, b])])


class TallySchemaError(ValueError):
    """Tally CSV violated the 81-row schema; message carries row numbers."""


def read_tally_csv(path: str) -> TallyTable:
    table = TallyTable.zeros()
    seen = np.zeros((3, 3, 3, 3), dtype=bool)
    errors: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TallySchemaError("row 1: missing header") from None
        if tuple(h.strip() for h in header) != TALLY_CSV_COLUMNS:
            raise TallySchemaError(
                f"row 1: header must be {','.join(TALLY_CSV_COLUMNS)}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                errors.append(f"row {row_no}: expected 7 columns")
                continue
            try:
                m, n = int(row[0]), int(row[1])
                a = _INTENSITY_INDEX[row[2].strip()]
                b = _INTENSITY_INDEX[row[3].strip()]
                sent, coinc, err = (float(row[4]), float(row[5]),
                                    float(row[6]))
            except (ValueError, KeyError):
                errors.append(f"row {row_no}: unparseable entry")
                continue
            if not (m in STATE_LABELS and n in STATE_LABELS):
                errors.append(f"row {row_no}: state labels must be 0..2")
                continue
            if seen[m, n, a, b]:
                errors.append(f"row {row_no}: duplicate setting")
                continue
            if not 0 <= err <= coinc <= sent:
                errors.append(
                    f"row {row_no}: requires 0 <= err <= coinc <= sent")
                continue
            seen[m, n, a, b] = True
            table.sent[m, n, a, b] = sent
            table.coinc[m, n, a, b] = coinc
            table.err[m, n, a, b] = err
    missing = int((~seen).sum())
    if missing:
        errors.append(f"{missing} of 81 settings missing")
    if errors:
        raise TallySchemaError("; ".join(errors))
    return table


# ---------------------------------------------------------------------------
# Photon-level Monte-Carlo oracle


@dataclass(frozen=True)
class OracleEstimate:
    gain: float
    error_rate: float
    gain_se: float
    error_se: float
    trials: int


def _pattern_counts_from_clicks(clicks: np.ndarray) -> np.ndarray:
    """Boolean mask of trials whose click set is exactly one pattern."""
    exact = np.zeros(clicks.shape[0], dtype=bool)
    for pattern in _PATTERNS:
        want = np.zeros(4, dtype=bool)
        want[list(pattern)] = True
        exact |= np.all(clicks == want, axis=1)
    return exact

def mc_photon_oracle(state_a: QubitState, state_b: QubitState,
                     mu_a: float, mu_b: float, distance_km: float,
                     params: SystemParams, trials: int, seed: int,
                     labels: tuple[int, int] | None = None,
                     input_fock: bool = False) -> OracleEstimate:
    """Event-by-event frequency estimate of the announcement probability.

    WCS mode samples the random pulse phases, propagates the coherent
    amplitudes through loss and the beam splitter, and draws Poissonian
    photon counts plus dark counts per detector gate.  ``input_fock``
    instead injects exactly one photon per party (bypassing the Poisson
    statistics) using the exact two-photon interference amplitudes.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    eta = channel_transmittance(distance_km, params)
    dark = params.dark_prob
    psi_b_variants = misaligned_variants(state_b, params)
    psi_a = state_a.as_array()
    rng = np.random.Generator(np.random.Philox(key=seed))

    n_success = 0
    n_err = 0
    err_defined = (labels is not None and labels[0] in Z_STATES
                   and labels[1] in Z_STATES)
    err_prob = zz_error_rate(labels[0], labels[1], params) if err_defined else 0.0

    if input_fock:
        two_probs, two_masks, one_b = [], None, []
        for psi_b in psi_b_variants:
            support_two = _two_photon_support_probs(psi_a, psi_b)
            keys_two = sorted(support_two, key=sorted)
            two_probs.append(np.array([support_two[k] for k in keys_two]))
            if two_masks is None:
                two_masks = np.zeros((len(keys_two), 4), dtype=bool)
                for i, k in enumerate(keys_two):
                    two_masks[i, sorted(k)] = True
            sup_b = _single_photon_support_probs(psi_b)
            one_b.append(np.array([sup_b[frozenset((g,))]
                                   for g in range(4)]))
        sup_a = _single_photon_support_probs(psi_a)
        probs_one_a = np.array([sup_a[frozenset((g,))] for g in range(4)])

    done = 0
    while done < trials:
        block = min(_MC_CHUNK, trials - done)
        drift = rng.integers(0, 2, size=block)  # per-trial phase-drift sign
        if input_fock:
            photon_clicks = np.zeros((block, 4), dtype=bool)
            alive_a = rng.random(block) < eta
            alive_b = rng.random(block) < eta
            both = alive_a & alive_b
            for s in (0, 1):
                sel = both & (drift == s)
                n_sel = int(sel.sum())
                if n_sel:
                    pick = rng.choice(len(two_probs[s]), size=n_sel,
                                      p=two_probs[s])
                    photon_clicks[sel] = two_masks[pick]
            only_a = alive_a & ~alive_b
            n_only = int(only_a.sum())
            if n_only:
                gate = rng.choice(4, size=n_only, p=probs_one_a)
                rows = np.zeros((n_only, 4), dtype=bool)
                rows[np.arange(n_only), gate] = True
                photon_clicks[only_a] = rows
            only_b = alive_b & ~alive_a
            for s in (0, 1):
                sel = only_b & (drift == s)
                n_sel = int(sel.sum())
                if n_sel:
                    gate = rng.choice(4, size=n_sel, p=one_b[s])
                    rows = np.zeros((n_sel, 4), dtype=bool)
                    rows[np.arange(n_sel), gate] = True
                    photon_clicks[sel] = rows
            clicks = photon_clicks
        else:
            phase_a = rng.uniform(0.0, 2.0 * math.pi, size=block)
            phase_b = rng.uniform(0.0, 2.0 * math.pi, size=block)
            amp_a = (math.sqrt(eta * mu_a) * psi_a[None, :]
                     * np.exp(1j * phase_a)[:, None])
            psi_b = np.where(drift[:, None] == 0, psi_b_variants[0][None, :],
                             psi_b_variants[1][None, :])
            amp_b = (math.sqrt(eta * mu_b) * psi_b
                     * np.exp(1j * phase_b)[:, None])
            means = np.empty((block, 4))
            for g in range(4):
                out = (amp_a[:, _GATE_BIN[g]]
                       + _GATE_SIGN[g] * amp_b[:, _GATE_BIN[g]])
                means[:, g] = 0.5 * np.abs(out) ** 2
            clicks = rng.poisson(means) > 0
        if dark > 0:
            clicks |= rng.random((block, 4)) < dark
        hits = _pattern_counts_from_clicks(clicks)
        k = int(hits.sum())
        n_success += k
        if err_defined and k:
            n_err += int(rng.binomial(k, err_prob))
        done += block

    gain_hat = n_success / trials
    gain_se = math.sqrt(max(gain_hat * (1.0 - gain_hat), 0.0) / trials)
    if err_defined and n_success > 0:
        err_hat = n_err / n_success
        err_se = math.sqrt(max(err_hat * (1.0 - err_hat), 0.0) / n_success)
    else:
        err_hat = 0.0
        err_se = 0.0
    return OracleEstimate(gain=gain_hat, error_rate=err_hat,
                          gain_se=gain_se, error_se=err_se, trials=trials)
