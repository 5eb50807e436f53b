"""
High-friction limit
===================

In the limit the density is carried by u - e_z and pushes the fluid down
with its weight.  The mass that leaves through the floor only grows.
"""
import numpy as np

from vnslimit.scenario import ScenarioConfig, simulate_limit

# a frozen fluid and a layer on 1 < z < 2: half of it is gone by t = 1.5
res = simulate_limit(ScenarioConfig.preset("transport", time={"T": 1.5}))
absorbed = [v for _, v in res.metric("mass.absorbed")]
print(f"final absorbed mass {absorbed[-1]:.4f}")
print("monotone:", bool(np.all(np.diff(absorbed) >= 0)), " ledger", f"{res.max_ledger_error:.1e}")
