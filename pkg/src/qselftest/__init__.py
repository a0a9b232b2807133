"""Device-independent self-testing of pure bipartite entangled states."""

from .bell import (
    BellScenario,
    CorrelationTable,
    ProjectiveMeasurement,
    born_table,
    check_no_signalling,
    statistics,
)
from .highdim import build_qudit_settings, reconstruct_coefficients, reconstruction_fidelity
from .noise import NoiseSpec, dephase, mix_white, sample_counts, visibility_for_purity
from .qcore import SchmidtState, TargetQubitState, fidelity_to_pure, kron, partial_trace, purity
from .tiltedchsh import beta_value, extract_theta, optimal_settings, seesaw_maximize, swap_fidelity
from .tomo import reconstruct_density, schmidt_readout, tomo_projectors

__version__ = "0.1.0"
