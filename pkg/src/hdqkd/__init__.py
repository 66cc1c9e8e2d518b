"""Key rates for discrete-variable QKD with phase-randomized homodyne detection.

The pipeline: simulate the observable statistics of the protocol on a
pure-loss channel (channel), bound the per-photon-number behaviours and
transition probabilities by linear programming (decoy), minimise the
postselected-state distinguishability by semidefinite programming
(entropy), and assemble the Devetak-Winter rate (keyrate).
"""

from .channel import (ObservedStatistics, monte_carlo, observed_statistics,
                      true_photon_transition)
from .config import ProtocolConfig, poisson_weights, transmittance
from .conic import ConicProblem, SolveResult, solve
from .decoy import DecoyBounds, estimate_bounds
from .entropy import binary_entropy, pinch, postselect, refined_pinsker, \
    trace_norm_sdp
from .errors import (ConfigError, EstimationAbortError, HdqkdError,
                     NumericalToleranceError, UnsupportedOrderError)
from .fock import BinGrid, Interval, bin_prob, cross_gram, fock_wavefunction
from .keyrate import KeyRateReport, key_rate, optimize_params, sweep
from .oracle import oracle_bounds, oracle_gamma, oracle_transition
from .povm import FockOperator, block_povm, decoding_regions, photon_projector
from .states import SourceState, nphoton_bb84_vector, virtual_source

__version__ = "0.1.0"

__all__ = [
    "BinGrid", "ConfigError", "ConicProblem", "DecoyBounds",
    "EstimationAbortError", "FockOperator", "HdqkdError", "Interval",
    "KeyRateReport", "NumericalToleranceError", "ObservedStatistics",
    "ProtocolConfig", "SolveResult", "SourceState", "UnsupportedOrderError",
    "bin_prob", "binary_entropy", "block_povm", "cross_gram",
    "decoding_regions", "estimate_bounds", "fock_wavefunction", "key_rate",
    "monte_carlo", "nphoton_bb84_vector", "observed_statistics",
    "optimize_params", "oracle_bounds", "oracle_gamma", "oracle_transition",
    "photon_projector", "pinch", "poisson_weights", "postselect",
    "refined_pinsker", "solve", "sweep", "trace_norm_sdp", "transmittance",
    "true_photon_transition", "virtual_source",
]
