"""
Draw truncated stick-breaking weights and watch the concentration
parameter control how fast the stick mass decays.
"""
import numpy as np

from specshare.distributions import sample_beta, stick_breaking_weights

rng = np.random.default_rng(1)

for alpha in (0.5, 2.0, 10.0):
    # break portions V_i ~ Beta(1, alpha); small alpha -> early pieces
    # take almost all the mass
    portions = [sample_beta(1.0, alpha, rng) for _ in range(9)]
    weights = stick_breaking_weights(portions)
    print("alpha = %5.1f   first 5 weights:" % alpha,
          np.round(weights[:5], 3), "  sum:", weights.sum())
