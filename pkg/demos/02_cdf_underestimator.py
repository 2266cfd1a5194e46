"""The concave piecewise-linear under-estimator of the standard normal CDF.

Builds the approximation at a few tolerances, prints the segment tables,
and verifies the under-estimation and accuracy bounds on a dense grid.
The delta = 0.002 setting used by the dispatch models yields 10 segments.
"""

import numpy as np
from scipy.special import ndtr

from ccopf import build_pwl, eval_pwl

for delta in (0.05, 0.01, 0.002):
    pwl = build_pwl(delta)
    x = np.linspace(0, 12, 50_001)
    gap = ndtr(x) - eval_pwl(pwl, x)
    print(f"delta = {delta}: S = {pwl.n_segments} segments, "
          f"max gap {gap.max():.2e}, min gap {gap.min():.2e}")

pwl = build_pwl(0.002)
print("\nsegments at delta = 0.002 (slope, intercept, breakpoint):")
for s in range(pwl.n_segments):
    t = pwl.breakpoints[s] if s < len(pwl.breakpoints) else float("inf")
    print(f"  s={s + 1:2d}: a = {pwl.slopes[s]:.6f}  b = {pwl.intercepts[s]:.6f}"
          + (f"  t_{s} = {t:.4f}" if s < len(pwl.breakpoints) else ""))

pwl.save_json("pwl_0.002.json")
print("\nwrote pwl_0.002.json")
