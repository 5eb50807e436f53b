"""
Fluid solver against closed-form flows
======================================

Steady channel flow between a no-slip floor and a free-slip lid converges
at second order.  The full oracle suite is also available as
``vnslimit validate``.
"""
import numpy as np

from vnslimit.validation import channel_errors, run_all

h, err = channel_errors()
for hi, ei in zip(h, err):
    print(f"h={hi:.4f}  max error {ei:.3e}")
print("observed order", np.polyfit(np.log(h), np.log(err), 1)[0])

for r in run_all():
    print(f"{r.name:<12} {'PASS' if r.passed else 'FAIL'}  {r.value:.2e}")
