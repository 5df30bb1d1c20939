"""
Double proximal primal-dual dynamics and their time discretisation.

Per agent ``i``, with ``s_i(u) = sum_j a_ij (u_i - u_j)``::

    dx_i = prox_{f1_i}[x_i - grad f0_i(x_i) - alpha s_i(v) - alpha s_i(x) + gamma z_i] - x_i
    dz_i = prox_{f2_i}[x_i - gamma z_i] - x_i
    dv_i = alpha s_i(x)

``z`` tracks a (scaled, negated) subgradient of ``f2`` so that ``f1`` and
``f2`` are only ever proxed separately. The system is continuous in time;
:func:`step` and :func:`simulate` integrate it with explicit Euler (default)
or classical RK4.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .prox import L1Anchor, ProxStack
from .problem import evaluate_total_cost, validate_assumptions

__all__ = [
    "SystemState",
    "AlgorithmParams",
    "Record",
    "Trajectory",
    "ParameterError",
    "DivergenceError",
    "AssumptionError",
    "DoubleProxSystem",
    "default_params",
    "vector_field",
    "subgradient_field",
    "step",
    "simulate",
    "integrate",
    "sign_changes",
    "VARIANTS",
    "METHODS",
]

METHODS = ("euler", "rk4")
VARIANTS = ("smooth", "subgradient")
DIVERGENCE_LIMIT = 1e12


class ParameterError(ValueError):
    """Step parameters outside the admissible region."""


class DivergenceError(RuntimeError):
    def __init__(self, message, t, agent=None):
        super().__init__(message)
        self.t = t
        self.agent = agent


class AssumptionError(ValueError):
    def __init__(self, report):
        super().__init__("problem violates standing assumptions:\n" + report.summary())
        self.report = report


@dataclass(frozen=True)
class SystemState:
    """Primal ``x``, auxiliary ``z`` and dual ``v``, each ``(n, q)``, at time ``t``."""

    x: np.ndarray
    z: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        shapes = {np.shape(self.x), np.shape(self.z), np.shape(self.v)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise ValueError(f"x, z, v must share one (n, q) shape, got {sorted(shapes)}")

    @classmethod
    def initial(cls, p, x0, z0=None, v0=None, t=0.0):
        """State with ``z`` and ``v`` defaulting to zeros."""
        x0 = np.array(p.as_states(x0), dtype=float)
        zero = np.zeros_like(x0)
        z0 = zero.copy() if z0 is None else np.array(p.as_states(z0), dtype=float)
        v0 = zero.copy() if v0 is None else np.array(p.as_states(v0), dtype=float)
        return cls(x0, z0, v0, float(t))

    @classmethod
    def from_packed(cls, S, t):
        S = np.array(S, dtype=float)
        return cls(S[0], S[1], S[2], float(t))

    def packed(self):
        return np.stack([self.x, self.z, self.v]).astype(float)

    def __eq__(self, other):
        return (isinstance(other, SystemState) and self.t == other.t
                and np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z)
                and np.array_equal(self.v, other.v))

    __hash__ = None


@dataclass(frozen=True)
class AlgorithmParams:
    """Coupling gains and integrator settings.

    ``alpha`` and ``gamma`` must satisfy ``0 < alpha < 1/lambda_max`` and
    ``0 < gamma < 1 - alpha * lambda_max`` for the graph at hand; see
    :meth:`check_bounds`.
    """

    alpha: float
    gamma: float
    h: float = 1e-3
    t_end: float = 100.0
    method: str = "euler"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if not self.h > 0:
            raise ParameterError(f"step h must be positive, got {self.h}")
        if not self.t_end >= 0:
            raise ParameterError(f"t_end must be nonnegative, got {self.t_end}")
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; expected one of {METHODS}")

    def check_bounds(self, lambda_max):
        if lambda_max > 0 and not self.alpha < 1.0 / lambda_max:
            raise ParameterError(
                f"alpha = {self.alpha:g} violates alpha < 1/lambda_max = {1 / lambda_max:.6g}")
        gmax = 1.0 - self.alpha * lambda_max
        if not self.gamma < gmax:
            raise ParameterError(
                f"gamma = {self.gamma:g} violates gamma < 1 - alpha*lambda_max = {gmax:.6g}")

    @property
    def n_steps(self):
        return steps_for(self.t_end, self.h)

    def replace(self, **kw):
        d = dict(alpha=self.alpha, gamma=self.gamma, h=self.h, t_end=self.t_end,
                 method=self.method)
        d.update(kw)
        return AlgorithmParams(**d)


def steps_for(t_end, h):
    """Number of steps of size ``h`` needed for ``t`` to reach ``t_end``."""
    return int(math.ceil(t_end / h - 1e-9)) if t_end > 0 else 0


def default_params(g, safety=0.5, h=1e-3, t_end=100.0, method="euler"):
    """Pick ``alpha = safety/lambda_max`` and ``gamma = safety*(1 - alpha*lambda_max)``."""
    if not 0 < safety < 1:
        raise ParameterError(f"safety fraction must lie in (0, 1), got {safety}")
    lam = g.spectrum.lambda_max
    if lam <= 0:
        raise ParameterError("graph has no edges (lambda_max = 0); choose alpha explicitly")
    alpha = safety / lam
    gamma = safety * (1.0 - alpha * lam)
    return AlgorithmParams(alpha, gamma, h, t_end, method)


class DoubleProxSystem:
    """Vector field of one problem/parameter pair, prepared for repeated evaluation.

    Works on packed ``(3, n, q)`` arrays holding ``x, z, v``.
    """

    def __init__(self, p, params, variant="smooth"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        params.check_bounds(p.graph.spectrum.lambda_max)
        self.problem = p
        self.params = params
        self.variant = variant
        self.graph = p.graph
        q = p.q
        self._m = np.array([a.f0.m for a in p.agents])
        self._two_k = np.array([[2.0 * a.f0.k] for a in p.agents])
        self._prox1 = ProxStack([a.f1 for a in p.agents], q)
        self._prox2 = ProxStack([a.f2 for a in p.agents], q)
        if variant == "subgradient":
            bad = [i + 1 for i, a in enumerate(p.agents) if not isinstance(a.f2, L1Anchor)]
            if bad:
                raise ValueError(
                    f"subgradient comparator needs l1_anchor f2; agents {bad} differ")
            self._anchor = np.array([a.f2.anchor for a in p.agents])
            self._w2 = np.array([[a.f2.weight] for a in p.agents])
            self.field = self._subgradient_field
        else:
            self.field = self._smooth_field

    def gradient(self, x):
        return self._two_k * (x - self._m)

    def _smooth_field(self, S):
        x, z, v = S
        a, g = self.params.alpha, self.params.gamma
        sx = self.graph.neighbor_sum(x)
        sv = self.graph.neighbor_sum(v)
        out = np.empty_like(S)
        out[0] = self._prox1(x - self._two_k * (x - self._m) - a * sv - a * sx + g * z) - x
        out[1] = self._prox2(x - g * z) - x
        out[2] = a * sx
        return out

    def subgradient(self, x):
        """Selection ``w * sign(x - p)`` from the l1 subdifferential (0 at kinks)."""
        return self._w2 * np.sign(x - self._anchor)

    def _subgradient_field(self, S):
        x, z, v = S
        a = self.params.alpha
        sx = self.graph.neighbor_sum(x)
        sv = self.graph.neighbor_sum(v)
        out = np.empty_like(S)
        out[0] = self._prox1(x - self._two_k * (x - self._m) - a * sv - a * sx
                             - self.subgradient(x)) - x
        out[1] = 0.0
        out[2] = a * sx
        return out

    def advance(self, S, F=None):
        """One integrator step from packed state ``S``; ``F`` is the field at ``S`` if known."""
        h = self.params.h
        if F is None:
            F = self.field(S)
        if self.params.method == "euler":
            return S + h * F
        k2 = self.field(S + (0.5 * h) * F)
        k3 = self.field(S + (0.5 * h) * k2)
        k4 = self.field(S + h * k3)
        return S + (h / 6.0) * (F + 2.0 * k2 + 2.0 * k3 + k4)


def _guard(S, t):
    top = np.max(np.abs(S))
    if top <= DIVERGENCE_LIMIT:
        return
    per_agent = np.max(np.abs(S), axis=(0, 2))
    bad = ~np.isfinite(per_agent) | (per_agent > DIVERGENCE_LIMIT)
    agent = int(np.flatnonzero(bad)[0]) + 1
    what = "non-finite state" if not np.isfinite(top) else "state norm above 1e12"
    raise DivergenceError(f"{what} at agent {agent}, t = {t:.6g}", t, agent)


def vector_field(s, p, params):
    """Return ``(dx, dz, dv)`` of the double proximal dynamics at state ``s``."""
    F = DoubleProxSystem(p, params).field(s.packed())
    return F[0], F[1], F[2]


def subgradient_field(s, p, params):
    """Comparator field that feeds a subgradient of ``f2`` straight into the x update."""
    F = DoubleProxSystem(p, params, "subgradient").field(s.packed())
    return F[0], F[1], F[2]


def step(s, p, params, variant="smooth"):
    """Advance ``s`` by one step of ``params.h``."""
    system = DoubleProxSystem(p, params, variant)
    t = s.t + params.h
    S = system.advance(s.packed())
    _guard(S, t)
    return SystemState.from_packed(S, t)


def integrate(p, s0, params, variant="smooth", n_steps=None, keep_fields=False):
    """Integrate and keep every state.

    Returns ``(times, states)`` with ``states`` of shape ``(n_steps + 1, 3, n, q)``;
    with ``keep_fields`` also the field at each state before stepping, shape
    ``(n_steps, 3, n, q)``.
    """
    system = DoubleProxSystem(p, params, variant)
    n_steps = params.n_steps if n_steps is None else n_steps
    S = s0.packed()
    states = np.empty((n_steps + 1,) + S.shape)
    states[0] = S
    fields = np.empty((n_steps,) + S.shape) if keep_fields else None
    h = params.h
    for k in range(n_steps):
        F = system.field(S)
        if keep_fields:
            fields[k] = F
        S = system.advance(S, F)
        _guard(S, s0.t + (k + 1) * h)
        states[k + 1] = S
    times = s0.t + h * np.arange(n_steps + 1)
    if keep_fields:
        return times, states, fields
    return times, states


@dataclass(frozen=True)
class Record:
    t: float
    state: SystemState
    cost: float
    consensus: float
    fixed_point: float
    lyapunov: float = None


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    h: float = None
    stride: int = 1
    variant: str = "smooth"
    steps: int = 0

    @property
    def final(self):
        return self.records[-1]

    @property
    def times(self):
        return np.array([r.t for r in self.records])

    def stacked(self, name):
        """Array of ``x``, ``z`` or ``v`` over records, shape ``(len, n, q)``."""
        return np.array([getattr(r.state, name) for r in self.records])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def __len__(self):
        return len(self.records)


def simulate(p, s0, params, stride=100, variant="smooth", certificate=None,
             check_assumptions=True):
    """Integrate from ``s0`` until ``t >= s0.t + t_end``.

    A record is kept every ``stride`` steps and at the final step. Records carry
    ``F(x)``, the consensus residual ``||Lx||`` and the fixed-point residual
    (norm of the smooth vector field); with a ``certificate`` also the
    Lyapunov value.

    Raises
    ------
    AssumptionError
        If :func:`validate_assumptions` fails and ``check_assumptions`` is true
        (otherwise a warning is issued).
    DivergenceError
        If any state entry leaves ``[-1e12, 1e12]`` or becomes non-finite.
    """
    if stride < 1:
        raise ValueError(f"recording stride must be at least 1, got {stride}")
    report = validate_assumptions(p)
    if not report.passed:
        if check_assumptions:
            raise AssumptionError(report)
        warnings.warn("simulating a problem that violates the standing assumptions:\n"
                      + report.summary(), stacklevel=2)
    system = DoubleProxSystem(p, params, variant)
    smooth = system if variant == "smooth" else DoubleProxSystem(p, params)
    lyap = None
    if certificate is not None:
        from .diagnostics import lyapunov_value
        lyap = lambda s: lyapunov_value(s, certificate, p, params)

    def record(S, t, F=None):
        s = SystemState.from_packed(S, t)
        Fs = F if (F is not None and smooth is system) else smooth.field(S)
        consensus = float(np.linalg.norm(p.graph.neighbor_sum(S[0])))
        return Record(t, s, evaluate_total_cost(p, S[0]), consensus,
                      float(np.linalg.norm(Fs)), None if lyap is None else lyap(s))

    n_steps = params.n_steps
    h = params.h
    traj = Trajectory(h=h, stride=stride, variant=variant, steps=n_steps)
    S = s0.packed()
    t = s0.t
    for k in range(n_steps):
        F = system.field(S)
        if k % stride == 0:
            traj.records.append(record(S, t, F))
        S = system.advance(S, F)
        t = s0.t + (k + 1) * h
        _guard(S, t)
    traj.records.append(record(S, t))
    return traj


def sign_changes(series):
    """Count sign flips along axis 0, ignoring exact zeros.

    ``series`` has shape ``(T, ...)``; the result has the trailing shape.
    """
    s = np.sign(np.asarray(series))
    flat = s.reshape(s.shape[0], -1)
    counts = np.empty(flat.shape[1], dtype=int)
    for j in range(flat.shape[1]):
        col = flat[:, j]
        col = col[col != 0]
        counts[j] = int(np.count_nonzero(col[1:] != col[:-1]))
    return counts.reshape(s.shape[1:])
