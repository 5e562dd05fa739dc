"""Distributed PCA over networks: FAST-PCA gradient tracking, baselines and theory checks."""

from .analysis import (
    Trace,
    angle_error,
    consensus_error,
    eigen_coefficients,
    rate_fit,
    step_size_bound,
    tracker_residual,
)
from .consensus_pca import (
    NetworkState,
    centralized_oi,
    dsa_step,
    fastpca_init,
    fastpca_step,
    pseudo_gradient,
    seq_dist_pm,
)
from .errors import DiagnosticError, FormatError, ValidationError
from .network import Topology, metropolis_weights
from .spectra import Spectrum, SyntheticSpec, eig_sym, make_spectrum, synth_gaussian

__version__ = "0.1.0"
