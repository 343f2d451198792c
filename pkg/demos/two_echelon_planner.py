"""Two-echelon planner with doubling epochs.

Prints the epoch lengths, the learned (s1, s2) after each epoch and the
relative regret against the sampled optimum for increasing horizons.

    python3 demos/two_echelon_planner.py
"""

import numpy as np

from minibatch_inventory.core import DemandModel, RandomStream
from minibatch_inventory.harness import relative_average_regret
from minibatch_inventory.two_echelon import TwoEchelonInstance, planner_simulate, two_echelon_oracle

demand = DemandModel("normal", {"mu": 5, "sigma": 1})
inst = TwoEchelonInstance(h1=2, h2=1, p1=50, demand=demand, s_max=10, D_bar=10)
(s1_star, s2_star), c_star = two_echelon_oracle(inst, n_samples=10 ** 6)
print(f"optimum s1 {s1_star:.3f}, s2 {s2_star:.3f}, cost {c_star:.4f}")

T = 10 ** 4
D = demand.sample_path(RandomStream(3, 0), T)[:, 0]
tr = planner_simulate(inst, D)
for L, s1, s2 in zip(tr.lengths, tr.s1[0], tr.s2[0]):
    print(f"epoch of {L:5d} periods: s1 {s1:6.3f}  s2 {s2:6.3f}")

R = 30
for T in (10 ** 3, 10 ** 4, 10 ** 5):
    D = np.stack([demand.sample_path(RandomStream(4, r), T)[:, 0] for r in range(R)])
    reg = relative_average_regret(planner_simulate(inst, D).total_cost, T, c_star)
    print(f"T = {T:>6}: relative regret {reg.mean():6.2f}%")
