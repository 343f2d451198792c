"""Greedy warehouse-to-store delivery and its LP certificate.

Shows one delivery decision, confirms it matches the LP optimum, and
checks that the analytic gradient equals minus H^T times the LP dual.

    python3 demos/owms_delivery.py
"""

import numpy as np

from minibatch_inventory.apps import OwmsApp
from minibatch_inventory.core import DemandModel

demand = DemandModel("uniform", {"a": 0, "b": 10}, dimension=3)
app = OwmsApp(h=[0.5, 1, 1, 1], b=[12, 8, 6], c=[1, 2, 1], rho=[15, 10, 10, 10], demand=demand)
y = np.array([6.0, 2.0, 5.0, 1.0])
d = np.array([4.0, 3.0, 6.0])

out = app.greedy_delivery(y, d)
print("priority order (by b - c):", app.order.tolist())
print("shipped from warehouse:  ", out.z.tolist())
print("lost sales per store:    ", out.l.tolist())
print(f"greedy cost {float(out.cost):.6f}")

lp_cost, pi = app.lp_oracle(y, d)
H, _, _ = app.standard_form()
print(f"LP cost     {lp_cost:.6f}")
print("analytic gradient:", app.gradient_estimator(y, d).tolist())
print("-H^T pi:          ", (-H.T @ pi).tolist())
