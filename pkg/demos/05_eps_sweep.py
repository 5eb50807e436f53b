"""
Convergence in eps
==================

Runs the coupled system for a short list of eps and compares against the
limit run.  Small sizes keep this under a minute; the full sweep is
``vnslimit sweep-eps``.
"""
from vnslimit.scenario import ScenarioConfig, sweep

cfg = ScenarioConfig({"physics": {"eps_list": [0.4, 0.2, 0.1]},
                      "time": {"T": 0.5}, "kinetic": {"n_particles": 5000}})
rep = sweep(cfg).report
for row in rep.rows():
    print("eps={eps:<5g} total={total_error:.3e} gap={brinkman_gravity_gap:.3e}".format(**row))
print(f"fitted slope {rep.slope:.2f}")
