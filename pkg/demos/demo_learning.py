"""
End-to-end learning demo at a reduced scale: collect trajectories under an
epsilon-greedy behavior policy, fit finite-state controllers by coordinate
ascent, and inspect the evidence-lower-bound trace.
"""
import numpy as np

from specshare.cli import _uniform_behavior
from specshare.learning import Hyperparams, empirical_value, learn
from specshare.simulator import SimConfig
from specshare.trajectories import collect

config = SimConfig(lte_count=1, wifi_count=1, seed=3)
behavior = _uniform_behavior(config, epsilon=0.9)

print("collecting 6 episodes of 20 epochs each ...")
episodes = collect(config, behavior, 6, 20, seed=11)

hyper = Hyperparams(c=0.1, d=100.0, e=0.1, f=100.0, gamma=0.9)
result = learn(episodes, hyper, max_iters=60)

trace = result.trace
print("iterations:", trace.iterations, " converged:", result.converged)
print("elbo:  %.2f -> %.2f" % (trace.elbo[0], trace.elbo[-1]))
print("value: %.3f -> %.3f" % (trace.value[0], trace.value[-1]))
print("node counts per agent over time:")
for it in range(0, trace.iterations, max(1, trace.iterations // 8)):
    print("  iter %3d  nodes %s" % (it + 1, trace.node_counts[it]))

print("\nlearned controllers:")
for n, pol in enumerate(result.policies):
    top = pol.action_set[int(np.argmax(pol.pi[0]))]
    print("  agent %d: %d node(s), favorite contention window %d"
          % (n, pol.node_count, top))

val = empirical_value(episodes, result.policies, gamma=hyper.gamma)
print("\ndiscounted value of the learned policies on the batch: %.3f" % val)
