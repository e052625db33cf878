"""Atomic-clock phase sensitivity with single-mode number squeezing."""

from .observables import MomentSet, moments, xi_squared
from .qfi import classical_fisher_single_port, eq5_sensitivity, entanglement_witness, qfi_diagonal
from .qnd import (QndConfig, analytic_post_qnd_moments, coherence_after_qnd, homodyne_distribution,
                  qnd_update, run_protocol, sample_homodyne, variance_after_qnd)
from .ramsey import (delta_theta, eq6_sensitivity, eq8_sensitivity, heisenberg_limit, optimal_theta,
                     output_number_moments, sensitivity_curve, small_angle_delta_theta, sql_limit)
from .states import (AtomState, NumberDistribution, SectorState, binomial_sector_state,
                     fock_mixture_state, gaussian_product_state, make_number_distribution,
                     prepared_clock_state, twin_fock_state)

__version__ = "0.1.0"
