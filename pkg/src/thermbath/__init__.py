"""Thermalization of spin-chain regions by collision models with bath copies."""

from .collision import (CollisionProcess, RandomUnitaryChannel, convex_split_channel, convex_split_distance,
                        epsilon_thermalize_check, evolve_rk4, evolve_series, evolve_trajectories,
                        find_n_epsilon, steady_state_check, verify_convex_split)
from .entropy import (DmaxResult, EquilibriumState, dephase, dmax, dmax_region_curve, dmax_smooth,
                      infinite_time_average, reduce_equilibrium)
from .experiment import ExperimentConfig, emit_outputs, fit_slope, run_ensemble, transition_estimate
from .lattice import ChainSpec, DisorderRealization, Region, build_chain_hamiltonian, diagonalize_chain
from .linalg import SpectralDecomposition, eig_hermitian, partial_trace, trace_distance, trace_norm
from .optimality import (degenerate_gap_example, check_esc, optimal_distance_fixed_weights,
                         trivial_hamiltonian_note, verify_optimality)
from .thermal import gibbs_state, match_beta, thermal_target

__version__ = "0.1.0"
