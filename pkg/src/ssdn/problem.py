"""
Distributed consensus problems with one smooth and two proximable terms per agent.

Agent ``i`` holds ``f_i = f0_i + f1_i + f2_i``; the network minimises
``F(x) = sum_i f_i(x_i)`` subject to all ``x_i`` being equal.
"""

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph
from .prox import (INDICATOR_TOL, BallIndicator, BoxIndicator, ProximableFunction,
                   function_from_dict)

__all__ = [
    "Quadratic",
    "AgentObjective",
    "ProblemSpec",
    "ValidationReport",
    "gradient_f0",
    "evaluate_total_cost",
    "validate_assumptions",
    "scale_for_strong_convexity",
]


@dataclass(frozen=True, init=False)
class Quadratic:
    """``k * ||x - m||^2``; strongly convex with modulus ``2k``."""

    m: np.ndarray
    k: float = 1.0
    kind = "quadratic"

    def __init__(self, m, k=1.0):
        k = float(k)
        if not k > 0:
            raise ValueError(f"quadratic scale k must be positive, got {k}")
        m = np.array(m, dtype=float, ndmin=1)
        if m.ndim != 1 or not np.all(np.isfinite(m)):
            raise ValueError("quadratic target m must be a finite vector")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "k", k)

    @property
    def dim(self):
        return len(self.m)

    @property
    def strong_convexity(self):
        return 2.0 * self.k

    def value(self, x):
        d = np.asarray(x) - self.m
        return self.k * float(d @ d)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != self.m.shape:
            raise ValueError(f"dimension mismatch: expected {self.m.shape}, got {x.shape}")
        return 2.0 * self.k * (x - self.m)

    def scaled(self, K):
        return Quadratic(self.m, self.k * K)

    def to_dict(self):
        return {"type": "quadratic", "m": self.m.tolist(), "k": self.k}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("type", None)
        if kind != "quadratic":
            raise ValueError(f"unknown smooth function type {kind!r}; expected 'quadratic'")
        unknown = set(d) - {"m", "k"}
        if unknown:
            raise ValueError(f"unknown keys for quadratic: {sorted(unknown)}")
        return cls(**d)

    def __eq__(self, other):
        return isinstance(other, Quadratic) and self.k == other.k and np.array_equal(self.m, other.m)

    __hash__ = None


@dataclass(frozen=True)
class AgentObjective:
    f0: Quadratic
    f1: ProximableFunction
    f2: ProximableFunction

    def __post_init__(self):
        dims = {f.dim for f in (self.f0, self.f1, self.f2) if f.dim is not None}
        if len(dims) != 1:
            raise ValueError(f"agent terms disagree on dimension: {sorted(dims)}")

    @property
    def dim(self):
        return self.f0.dim

    def value(self, x):
        return self.f0.value(x) + self.f1.value(x) + self.f2.value(x)

    def to_dict(self):
        return {"f0": self.f0.to_dict(), "f1": self.f1.to_dict(), "f2": self.f2.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(Quadratic.from_dict(d["f0"]), function_from_dict(d["f1"]),
                   function_from_dict(d["f2"]))


@dataclass(frozen=True)
class ProblemSpec:
    graph: Graph
    agents: tuple

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) != self.graph.n:
            raise ValueError(
                f"{len(self.agents)} agents given for a graph with {self.graph.n} nodes")
        dims = {a.dim for a in self.agents}
        if len(dims) != 1:
            raise ValueError(f"agents disagree on dimension: {sorted(dims)}")

    @property
    def n(self):
        return self.graph.n

    @property
    def q(self):
        return self.agents[0].dim

    def as_states(self, x):
        """Reshape a stacked ``n*q`` vector (or ``(n, q)`` array) to ``(n, q)``."""
        x = np.asarray(x, dtype=float)
        if x.shape == (self.n, self.q):
            return x
        if x.shape == (self.n * self.q,):
            return x.reshape(self.n, self.q)
        raise ValueError(f"expected shape ({self.n}, {self.q}) or ({self.n * self.q},), got {x.shape}")


def gradient_f0(agent, x_i):
    return agent.f0.gradient(x_i)


def evaluate_total_cost(p, x):
    """``F(x) = sum_i f0_i + f1_i + f2_i``; ``inf`` if any indicator is violated."""
    x = p.as_states(x)
    return float(sum(a.value(xi) for a, xi in zip(p.agents, x)))


@dataclass
class ValidationReport:
    connected: bool
    strong_convexity: list
    min_c: float
    strong_convexity_ok: bool
    proximable_ok: bool
    feasibility_ok: bool
    feasibility_heuristic: bool = True
    suggestions: list = field(default_factory=list)

    @property
    def passed(self):
        return self.connected and self.strong_convexity_ok and self.proximable_ok \
            and self.feasibility_ok

    def summary(self):
        lines = [
            f"connected graph:          {'pass' if self.connected else 'FAIL'}",
            f"strong convexity c > 1:   {'pass' if self.strong_convexity_ok else 'FAIL'}"
            f" (min c = {self.min_c:g})",
            f"proximable f1, f2:        {'pass' if self.proximable_ok else 'FAIL'}",
            f"feasibility (heuristic):  {'pass' if self.feasibility_ok else 'FAIL'}",
        ]
        return "\n".join(lines + self.suggestions)


def _bounding_box(f):
    if isinstance(f, BallIndicator):
        return f.center - f.radius, f.center + f.radius
    if isinstance(f, BoxIndicator):
        return f.lo, f.hi
    return None


def validate_assumptions(p):
    """Check connectivity, strong convexity (c > 1), catalog membership and,
    heuristically, that every pair of indicator sets has overlapping bounding
    boxes. The last check is necessary but not sufficient for a finite solution.
    """
    cs = [a.f0.strong_convexity for a in p.agents]
    min_c = min(cs)
    suggestions = []
    if min_c <= 1:
        suggestions.append(
            f"scale f0 by K > {1 / min_c:g} (scale_for_strong_convexity) to reach c > 1")
    proximable = all(isinstance(f, ProximableFunction) for a in p.agents for f in (a.f1, a.f2))
    boxes = [b for a in p.agents for b in map(_bounding_box, (a.f1, a.f2)) if b is not None]
    feasible = True
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            (lo1, hi1), (lo2, hi2) = boxes[i], boxes[j]
            if np.any(np.maximum(lo1, lo2) > np.minimum(hi1, hi2) + INDICATOR_TOL):
                feasible = False
    if not p.graph.connected:
        suggestions.append("graph is disconnected; consensus cannot be enforced")
    return ValidationReport(p.graph.connected, cs, min_c, min_c > 1, proximable, feasible,
                            True, suggestions)


def scale_for_strong_convexity(a, K):
    """Multiply the smooth term by ``K``; requires ``K > 1/c`` so that ``Kc > 1``."""
    c = a.f0.strong_convexity
    if not K > 1.0 / c:
        raise ValueError(f"K = {K:g} must exceed 1/c = {1 / c:g}")
    return AgentObjective(a.f0.scaled(K), a.f1, a.f2)
