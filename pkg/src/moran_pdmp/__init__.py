"""Moran process with randomly switching selection, its PDMP limit and persistence analysis."""
from .env import EnvironmentModel, FitnessVector, SimplexPoint, drift_field, jacobian, jacobian_at_vertex, per_capita_growth, stationary_distribution
from .errors import ConfigError, IntegrationError, ModelError
from .moran import MoranConfig, MoranState, moran_step, simulate_moran, transition_probabilities
from .pdmp import PdmpPath, closed_form_flow_1d, ergodic_average, flow_step, occupation_histogram, sample_switch, simulate_pdmp
from .persistence import (DensityModel, InvasionRateEstimate, MCOptions, PersistenceVerdict, classify_2species,
                          edge_ergodic_exists, edge_growth_rates_3species, edge_invasion_rate_mc, edge_invasion_sign_2env,
                          fokker_planck_residual, full_support_determinant, growth_rates_2species,
                          invariant_density_2species, lambda_vertex, persistence_verdict, vertex_invasion_rates)

__version__ = "0.1.0"
