"""
Walk through the channel-contention simulator: one Wi-Fi station and one
LTE small cell sharing a 20 MHz unlicensed channel.
"""
import numpy as np

from specshare.simulator import CoexistenceSimulator, SimConfig

# Two agents, 5% chance that a busy microsecond is misread as idle.
config = SimConfig(lte_count=1, wifi_count=1, pe=0.05, seed=7)
sim = CoexistenceSimulator(config)
rng = np.random.default_rng(0)

print("agents pending at reset:", sim.pending_agents())
print("channel occupancy:", sim.occupancy)

for epoch in range(5):
    # every pending agent picks a contention window; here: random choice
    actions = {agent: int(rng.choice(config.cw_set))
               for agent in sim.pending_agents()}
    outcomes = sim.step_epoch(actions)
    for out in outcomes:
        kind = config.agent_kind(out.agent)
        print("t=%7d us  agent %d (%s)  cw=%4d  waited %6d us  "
              "delivered %6.0f bits  Th=%5.2f Mbps  J=%.3f  r=%6.2f"
              % (out.completed_at_us, out.agent, kind, out.action,
                 out.observation_us, out.payload_bits, out.throughput_mbps,
                 out.jain, out.local_cumulative_reward))

print("\nsim clock: %.1f ms" % (sim.clock / 1000))
