"""
Free flight, exit times and the exit geometric condition
========================================================

A particle in a fluid at rest relaxes towards the settling velocity -e_z
on the time scale eps.  Every trajectory starting in the box
{0 < z <= L, |v| < R} leaves through the floor before L + eps(1 + R).
"""
import numpy as np

from vnslimit import EgcQuery, egc_bounds, egc_check, exit_time_free

# exit times on a small grid of starting heights and vertical velocities
eps, L, R = 0.25, 1.0, 1.0
for z0 in (0.25, 0.5, 1.0):
    row = [exit_time_free(z0, vz, eps) for vz in np.linspace(-R, R, 5)]
    print(f"z0={z0:4.2f}", " ".join(f"{t:6.3f}" for t in row), f"  bound {L + eps * (1 + R):.3f}")

# the verdict flips once T exceeds the worst exit time
for T in (1.0, 2.01):
    res = egc_check(None, EgcQuery(1.0, 1.0, T, 0.5))
    print(f"T={T}: satisfied={res.satisfied} worst exit {res.worst_exit_time:.4f}")

# the enlarged box that survives a time-dependent flow
ell, r = egc_bounds(0.5, 1.0, 1.0, 2.0)
print(f"box corrections ell={ell:.6f} r={r:.6f}")
