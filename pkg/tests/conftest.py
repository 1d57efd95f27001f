"""Shared fixtures: default config and randomized physical scenarios."""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from mdiqkd import (Config, ProtocolParams, SourceModel, SystemParams,
                    make_party_params, validate_config)


@pytest.fixture(scope="session")
def default_config() -> Config:
    return Config.default()


def random_scenario(rng: np.random.Generator) -> tuple[Config, float]:
    """One randomized physical scenario for the soundness property suites.

    Distance 0-150 km, u in [0.1, 0.8], v in [0.01, u/2], random source
    imperfections with z_overlap_angle <= 0.1 and c0 in [0.5, 0.85].
    """
    distance = float(rng.uniform(0.0, 150.0))
    u = float(rng.uniform(0.1, 0.8))
    v = float(rng.uniform(0.01, u / 2.0))
    party = make_party_params(u=u, v=v, p_signal=1.0 / 3.0, p_decoy=1.0 / 3.0,
                              p_z_given_signal=0.5, p_z_given_decoy=0.5)

    def source() -> SourceModel:
        c0 = float(rng.uniform(0.5, 0.85))
        return SourceModel(c0=c0, c1=math.sqrt(1.0 - c0 ** 2),
                           theta=float(rng.uniform(0.0, 2.0 * math.pi)),
                           z_overlap_angle=float(rng.uniform(0.0, 0.1)))

    cfg = validate_config(SystemParams(), ProtocolParams.symmetric(party),
                          (source(), source()))
    return cfg, distance


def config_with(protocol=None, system=None, sources=None,
                analysis=None) -> Config:
    cfg = Config.default()
    if protocol is not None:
        cfg = replace(cfg, protocol=protocol)
    if system is not None:
        cfg = replace(cfg, system=system)
    if sources is not None:
        cfg = replace(cfg, source_alice=sources[0], source_bob=sources[1])
    if analysis is not None:
        cfg = replace(cfg, analysis=analysis)
    return cfg
