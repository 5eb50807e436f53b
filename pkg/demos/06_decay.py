"""
Long-time decay
===============

With a thin tail of particles near the floor, both the fluid energy and
the Brinkman force decay like a power of t once the tail is absorbed.
"""
import numpy as np

from vnslimit.diagnostics import decay_fit
from vnslimit.scenario import ScenarioConfig, simulate_vns

res = simulate_vns(ScenarioConfig.preset("decay"))
s = res.series
print("|u|^2 slope", decay_fit(np.column_stack([s["t"], s["u_l2_sq"]]), (5, 20)))
print("|F|   slope", decay_fit(np.column_stack([s["t"], s["brinkman_l2"]]), (5, 20)))
