"""Bell-CHSH tests with energy-time entangled photon pairs.

Quantum predictions, event-level simulation of Franson and hug
interferometers, count analysis, state tomography and a local
hidden-variable adversary for the postselection loophole.
"""
from .analysis import (
    ChshReport,
    FringeFit,
    chsh_from_counts,
    chsh_from_fits,
    correlation_from_counts,
    fit_fringe,
    mean_visibility,
    subtract_accidentals,
)
from .events import CountTable, GeometryConfig, fringe_scan, run_chsh_experiment
from .lhv import PostselectionRule, StrategyMixture, max_postselected_chsh, reproduce_quantum_statistics
from .quantum import (
    DensityOperator,
    MeasurementSettings,
    bell_phi_plus,
    canonical_settings,
    chsh_operator,
    chsh_value,
    coincidence_probabilities,
    correlation,
    fidelity,
    werner_like,
)
from .tomography import ml_reconstruction, table2_settings

__version__ = "0.1.0"
