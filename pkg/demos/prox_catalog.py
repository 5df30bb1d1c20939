"""
The four proximable building blocks
===================================

Every nonsmooth term is one of four kinds with a closed-form prox. The grid
oracle minimises the prox objective by brute force and should agree with the
closed form to within its grid step.
"""

import numpy as np

from ssdn.prox import (BallIndicator, BoxIndicator, L1Anchor, Zero, moreau_gradient, prox,
                       prox_oracle, subgradient_residual)

eta = np.array([0.5, 3.0])
for f in (Zero(), L1Anchor([0.0, 1.5], 1.0), BallIndicator([0.0, 0.0], 2.0),
          BoxIndicator([-1.0, -1.0], [1.0, 1.0])):
    r = prox(f, eta)
    print(f"{f.kind:10s} prox = {r.point}   oracle = {prox_oracle(f, eta)}   "
          f"envelope = {r.envelope:.4f}   optimality residual = {subgradient_residual(f, eta):.1e}")

# %%
# Soft thresholding: inside the dead zone |eta - p| <= w the prox returns the
# anchor, outside it moves eta towards the anchor by w.
f = L1Anchor([0.0], 1.0)
for e in (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0):
    print(f"eta = {e:5.1f}  prox = {prox(f, [e]).point[0]:5.2f}  "
          f"Moreau gradient = {moreau_gradient(f, [e])[0]:5.2f}")
