"""
Population landscape of the mean iteration
==========================================

With the weights known, the population map ``f`` always has ``eta`` as its
only positive fixed point.  How many negative fixed points it has depends on
the imbalance and the separation: a balanced mixture mirrors ``eta`` at ``-eta``,
while at moderate separation a strong imbalance removes them altogether.
"""
import numpy as np

from unbalanced_em import PopMeanMap1D, landscape_scan, mean_error_trace

# The map is exact at its fixed point, for every weight.
for delta in (0.05, 0.25, 0.5):
    m = PopMeanMap1D(1.0, delta)
    print(f"delta={delta:<5} f(1) - 1 = {m(1.0) - 1.0:+.1e}   f'(1) = {m.deriv(1.0):.4f}")

# Count negative fixed points on a small grid of (delta, eta).
print("\ndelta   eta   negative fixed points")
for row in landscape_scan([0.05, 0.2, 0.35, 0.5], [0.5, 1.0, 2.0]):
    roots = ", ".join(f"{r:.4f}" for r in row.roots) or "none"
    print(f"{row.delta:<7} {row.eta:<5} {roots}")

# Iterating from a small positive start, the more unbalanced mixture
# converges faster; the contraction factor is f'(eta).
print("\n t   |theta_t - 1| (delta 0.1)   |theta_t - 1| (delta 0.4)")
lo = np.abs(mean_error_trace(1.0, 0.1, 0.2, 30))
hi = np.abs(mean_error_trace(1.0, 0.4, 0.2, 30))
for t in range(0, 31, 5):
    print(f"{t:>2}   {lo[t]:.3e}                  {hi[t]:.3e}")
