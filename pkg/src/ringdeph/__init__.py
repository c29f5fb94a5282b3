"""Robustness of energy-landscape controllers for excitation transfer on spin rings."""
from .campaign import CampaignConfig, ConfigError, RunManifest, run_campaign
from .dynamics import (LtiSystem, build_lti, build_lti_rates, evolve_lti, evolve_projector,
                       fidelity, pair_terms, rates_from_dephasing_operator, steady_state,
                       trajectory, transfer_fidelity)
from .report import export_heatmap, export_scatter
from .ring import RingSpec, SpectralModel, basis_state, density_matrix, ring_hamiltonian, spectral_decompose
from .sampler import DephasingOperator, DephasingPool, SamplerConfig, cp_admissible, generate_pool
from .sensitivity import (ErrorSurface, SensitivityRecord, analytic_log_sensitivity,
                          analyze_controller, analyze_population, build_error_surface,
                          delta_grid, error_density, kde_log_sensitivity, perturbed_error)
from .stats import (classify_orthogonal_pair, kendall_tau, kendall_test, pearson_r, pearson_test,
                    run_trend_suite, tally_orthogonal)
from .synthesis import Budget, Controller, ObjectiveSpec, SearchBounds, select_top, synthesize, synthesize_top

__version__ = "0.1.0"
