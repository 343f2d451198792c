"""Learn a newsvendor order-up-to level from censored sales.

Runs the meta-policy with fixed-time and exponential batch schedules, SGD
and the SAA policy on the same demand paths, then prints the average
pseudo-regret and the final target of each.

    python3 demos/newsvendor_learning.py
"""

import numpy as np

from minibatch_inventory.apps import MultiProductApp
from minibatch_inventory.baselines import SaaPolicy, SgdPolicy
from minibatch_inventory.core import DemandModel, RandomStream
from minibatch_inventory.meta_policy import MetaPolicy, simulate
from minibatch_inventory.optimizer import BatchSchedule

T, R = 20_000, 20
demand = DemandModel("uniform", {"a": 0, "b": 10})
app = MultiProductApp.newsvendor(h=1, b=50, demand=demand, capacity=20)
y_star = app.critical_quantiles()[0]
q_star = float(app.expected_cost(np.array([y_star])))
D = np.stack([demand.sample_path(RandomStream(0, r), T) for r in range(R)])
x1 = np.zeros((R, 1))

policies = {
    "meta, fixed-time": MetaPolicy(app, BatchSchedule.fixed_time(T), 0.1, x1),
    "meta, exponential": MetaPolicy(app, BatchSchedule.exponential(0.098, 5.1), 0.098, x1),
    "sgd, 1/sqrt(t)": SgdPolicy(app, 0.5, 0.5, x1),
    "saa (uncensored)": SaaPolicy(app, x1),
}

print(f"optimal level {y_star:.4f}, optimal expected cost {q_star:.4f}")
for name, pol in policies.items():
    tr = simulate(app, pol, D, record=True)
    regret = (app.expected_cost(tr.y) - q_star).sum(axis=1)
    switches = (np.diff(tr.y[..., 0], axis=1) != 0).sum(axis=1)
    print(f"{name:>18}: regret {regret.mean():8.1f}  final target {tr.final_w.mean():.4f}  "
          f"order-up-to changes {switches.mean():7.0f}")
