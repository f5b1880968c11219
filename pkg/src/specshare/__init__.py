"""Decentralized unlicensed-spectrum coexistence simulation and
nonparametric Bayesian learning of finite-state-controller access policies.
"""

from .distributions import (digamma, log_density_beta, log_density_dirichlet,
                            log_density_gamma, sample_beta, sample_dirichlet,
                            sample_gamma, stick_breaking_weights,
                            validate_simplex)
from .simulator import (CoexistenceSimulator, DecisionOutcome, Episode,
                        SimConfig, backoff_counter, effective_throughput,
                        global_reward, jain_index, local_reward)
from .fsc import (FscPolicy, PointEstimate, history_likelihood,
                  init_from_episodes, initial_node, observation_bin,
                  point_estimate, prune, select_action, transition_node)
from .learning import (ElboTrace, Hyperparams, LearnResult, VariationalState,
                       backward_messages, elbo, empirical_value,
                       forward_messages, learn, mean_policy, node_marginals,
                       reward_bounds, reweighted)
from .trajectories import (SCHEDULES, BehaviorPolicy, EpsilonSchedule,
                           behavior_action, collect, load, save)

__version__ = "0.1.0"
