"""Shrinkage operators and Bregman iteration on a tiny basis-pursuit problem.

Run with ``python demos/shrinkage_and_bregman.py``.
"""

import numpy as np

from bregflow import ConvexProblem, bregman_iterate, gshrink, prox_gradient_inner_solver, shrink

# Scalar shrinkage pulls values toward zero by alpha and zeroes the band |y| <= alpha.
y = np.linspace(-2, 2, 9)
print("y          ", y)
print("shrink(y,1)", shrink(y, 1.0))

# The grouped version shortens a vector by alpha, keeping its direction.
b = np.array([3.0, 4.0])
print("gshrink([3, 4], 1) =", gshrink(b, 1.0), " norm", np.linalg.norm(gshrink(b, 1.0)))

# Basis pursuit: min |u|_1 subject to A u = f, solved by adding back the residual.
rng = np.random.default_rng(0)
A = rng.standard_normal((5, 12))
x_true = np.zeros(12)
x_true[[2, 7]] = [1.5, -2.0]
f = A @ x_true
prob = ConvexProblem(lambda u: float(np.abs(u).sum()), A, f)
inner = prox_gradient_inner_solver(lambda v, t: shrink(v, t))
u, trace = bregman_iterate(prob, 1.0, np.zeros(12), 40, inner, tol=1e-12)

print("\n k   H(u_k)        J(u_k)")
for k in range(len(trace)):
    print(f"{k:2d}  {trace.H[k]:.3e}   {trace.J[k]:.6f}")
print("recovered support:", np.flatnonzero(np.abs(u) > 1e-6), " true:", [2, 7])
print("max error:", np.max(np.abs(u - x_true)))
