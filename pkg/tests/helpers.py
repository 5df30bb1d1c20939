"""Shared random catalog instances for the prox tests."""

import numpy as np

from ssdn.prox import BallIndicator, BoxIndicator, L1Anchor, Zero

KINDS = ("zero", "l1_anchor", "ball", "box")


def random_function(kind, rng, q=2):
    if kind == "zero":
        return Zero()
    if kind == "l1_anchor":
        return L1Anchor(rng.uniform(-3, 3, q), rng.uniform(0.2, 2.0))
    if kind == "ball":
        return BallIndicator(rng.uniform(-3, 3, q), rng.uniform(0.5, 4.0))
    lo = rng.uniform(-3, 1, q)
    return BoxIndicator(lo, lo + rng.uniform(0.1, 4.0, q))


def kink_distance(f, eta):
    """Distance from ``eta`` to the set where the prox changes branch."""
    eta = np.asarray(eta)
    if isinstance(f, Zero):
        return np.inf
    if isinstance(f, L1Anchor):
        d = np.abs(eta - f.anchor)
        return float(np.min(np.abs(d - f.weight)))
    if isinstance(f, BallIndicator):
        return abs(float(np.linalg.norm(eta - f.center)) - f.radius)
    return float(min(np.min(np.abs(eta - f.lo)), np.min(np.abs(eta - f.hi))))


def function_value(f, d):
    """Exact function value without the indicator tolerance."""
    return f.value(d, tol=0.0)
