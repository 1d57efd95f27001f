"""Simulation and security analysis for three-state MDI-QKD with
uncharacterized sources."""

from .core import (AnalysisOptions, Config, ConfigError, IntensityClass,
                   IntensityLabel, PartyParams, ProtocolParams, SourceModel,
                   SystemParams, TallyTable, YieldBounds, load_config,
                   make_party_params, save_config, validate_config)
from .decoy import (GainInterval, estimate_p_bounds, finite_size_interval,
                    poisson_weight)
from .eventsim import (OracleEstimate, SimMode, mc_photon_oracle,
                       read_tally_csv, simulate_tallies, write_tally_csv)
from .keyrate import (KeyRateReport, binary_entropy, end_to_end, key_rate)
from .optics import (QubitState, SettingObservables, channel_transmittance,
                     pair_observables, realize_state, single_photon_truth,
                     single_photon_z_truth)
from .optimizer import SearchSpec, optimize
from .phase_error import (CoefficientBox, DegenerateFError, FMinResult,
                          f_value, minimize_f, phase_error_bound)

__version__ = "0.1.0"
