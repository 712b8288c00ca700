"""The cost of moving: following the ODE is free, anything else is not.

The local Lagrangian is evaluated by its two routes, and then the path
action is compared on the ODE solution and on a path that stands still.
"""

from pathlib import Path

import numpy as np

from crnldp import DiscretePath, asymptotic_rates, drift_field, integrate_ode, lagrangian, load_network, path_rate

net = load_network(Path(__file__).resolve().parent.parent / "networks" / "example1.crn")
x = np.array([0.5, 1.5])
lam = asymptotic_rates(net, x)

for label, xi in (("along the drift", drift_field(net, x)), ("at rest", np.zeros(2)), ("sideways", np.array([0.5, -0.5]))):
    res = lagrangian(lam, xi, net.vectors)
    print(f"L at velocity {label:16s} = {res.value:.6f}   primal/dual gap {res.duality_gap:.1e}")

T = 3.0
traj = integrate_ode(net, x, T, tol=1e-11)
for n in (32, 128, 512):
    t = np.linspace(0, T, n + 1)
    print(f"action of the ODE path with {n:3d} segments: {path_rate(net, DiscretePath.from_samples(t, traj(t))):.2e}")
still = DiscretePath(np.tile(x, (9, 1)), np.full(8, T / 8))
print(f"action of standing still for T={T}: {path_rate(net, still):.4f}")
