"""
Optimality and stability certificates for the double proximal dynamics.

* consensus residual ``||Lx||``
* fixed-point residual: norm of the vector field
* KKT residual through the prox reformulation of the optimality system
* Lyapunov function relative to an equilibrium ``(x*, z*, v*)``

The Lyapunov function is only evaluated, never used to prove anything: the
discrete monitor shows descent along a computed trajectory, it cannot show
convergence to the invariant set of the continuous-time argument.
"""

import json
from dataclasses import dataclass

import numpy as np

from .dynamics import DoubleProxSystem, SystemState, integrate
from .prox import prox

__all__ = [
    "EquilibriumCertificate",
    "ResidualReport",
    "DescentReport",
    "CertificateError",
    "consensus_residual",
    "fixed_point_residual",
    "kkt_residual",
    "subdifferential_residual",
    "lyapunov_value",
    "lyapunov_series",
    "lyapunov_descent",
    "analytic_certificate",
    "certificate_from_run",
    "residual_report",
]

SOURCES = ("converged-run", "analytic", "external")


class CertificateError(ValueError):
    """No equilibrium could be constructed or verified."""


@dataclass(frozen=True, eq=False)
class EquilibriumCertificate:
    x_star: np.ndarray
    z_star: np.ndarray
    v_star: np.ndarray
    source: str = "external"
    tolerance: float = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown certificate source {self.source!r}")
        for name in ("x_star", "z_star", "v_star"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))

    @property
    def state(self):
        return SystemState(self.x_star, self.z_star, self.v_star)

    def to_dict(self):
        return {"source": self.source, "tolerance": self.tolerance,
                "x_star": self.x_star.tolist(), "z_star": self.z_star.tolist(),
                "v_star": self.v_star.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["x_star"], d["z_star"], d["v_star"], d.get("source", "external"),
                   d.get("tolerance"))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ResidualReport:
    kkt: float
    fixed_point: float
    consensus: float
    lyapunov: float = None

    def __str__(self):
        s = f"kkt={self.kkt:.3e} fixed_point={self.fixed_point:.3e} consensus={self.consensus:.3e}"
        if self.lyapunov is not None:
            s += f" V={self.lyapunov:.6e}"
        return s


def consensus_residual(x, g):
    """Euclidean norm of ``(L (x) I) x`` over all ``n*q`` entries."""
    return float(np.linalg.norm(g.neighbor_sum(np.asarray(x, dtype=float))))


def fixed_point_residual(s, p, params):
    """Norm of the vector field over the ``x``, ``z`` and ``v`` blocks."""
    return float(np.linalg.norm(DoubleProxSystem(p, params).field(s.packed())))


def kkt_residual(s, p, params):
    """Largest of the three equilibrium-equation violations.

    ``||prox_F1[x - grad F0(x) - a L v - a L x + g z] - x||``,
    ``||prox_F2[x - g z] - x||`` and ``||L x||``. Each agent's prox is
    evaluated on its own, independently of the stacked evaluator used by the
    integrator.
    """
    a, g = params.alpha, params.gamma
    x, z, v = (np.asarray(u, dtype=float) for u in (s.x, s.z, s.v))
    sx = p.graph.neighbor_sum(x)
    sv = p.graph.neighbor_sum(v)
    r1 = np.empty_like(x)
    r2 = np.empty_like(x)
    for i, agent in enumerate(p.agents):
        eta1 = x[i] - agent.f0.gradient(x[i]) - a * sv[i] - a * sx[i] + g * z[i]
        r1[i] = prox(agent.f1, eta1).point - x[i]
        r2[i] = prox(agent.f2, x[i] - g * z[i]).point - x[i]
    return max(float(np.linalg.norm(r1)), float(np.linalg.norm(r2)),
               float(np.linalg.norm(sx)))


def subdifferential_residual(s, p, params):
    """Check the optimality inclusions directly.

    With ``g2 = -gamma z`` and ``g1 = -grad F0(x) - alpha L v + gamma z``,
    returns the largest of: distance of ``g1`` to the subdifferential of
    ``F1`` at ``x``, distance of ``g2`` to that of ``F2``, and ``||Lx||``.
    Zero exactly when ``x`` solves the consensus problem with multiplier
    ``alpha v``.
    """
    a, g = params.alpha, params.gamma
    x, z, v = (np.asarray(u, dtype=float) for u in (s.x, s.z, s.v))
    sx = p.graph.neighbor_sum(x)
    sv = p.graph.neighbor_sum(v)
    d1 = d2 = 0.0
    for i, agent in enumerate(p.agents):
        g1 = -agent.f0.gradient(x[i]) - a * sv[i] + g * z[i]
        d1 = max(d1, agent.f1.subdifferential_distance(x[i], g1))
        d2 = max(d2, agent.f2.subdifferential_distance(x[i], -g * z[i]))
    return max(d1, d2, float(np.linalg.norm(sx)))


def _f0_parts(p):
    m = np.array([a.f0.m for a in p.agents])
    k = np.array([a.f0.k for a in p.agents])
    return m, k


def lyapunov_value(s, cert, p, params):
    """``V = V1 + V2 + V3`` relative to the equilibrium in ``cert``.

    * ``V1 = 1/2|x-x*|^2 + g/2 |z-z*|^2 - g (x-x*).(z-z*) + 1/2 |v-v*|^2``
    * ``V2 = sum_i f0_i(x_i) - f0_i(x*_i) - (x-x*).grad F0(x*) + a/2 x.Lx``
    * ``V3 = a x.L(v-v*)``

    Only the smooth terms enter, so infeasible ``x`` is fine.
    """
    return float(lyapunov_series(s.packed()[None], cert, p, params)[0])


def lyapunov_series(states, cert, p, params):
    """Vectorised :func:`lyapunov_value` over packed states of shape ``(T, 3, n, q)``."""
    a, g = params.alpha, params.gamma
    m, k = _f0_parts(p)
    states = np.asarray(states, dtype=float)
    x, z, v = states[:, 0], states[:, 1], states[:, 2]
    dx = x - cert.x_star
    dz = z - cert.z_star
    dv = v - cert.v_star
    grad_star = 2.0 * k[:, None] * (cert.x_star - m)
    f0_star = np.sum(k * np.sum((cert.x_star - m) ** 2, axis=1))

    def total(u):
        return u.sum(axis=(1, 2))

    v1 = 0.5 * total(dx * dx) + 0.5 * g * total(dz * dz) - g * total(dx * dz) + 0.5 * total(dv * dv)
    f0 = np.sum(k[None, :] * np.sum((x - m) ** 2, axis=2), axis=1)
    # node axis first for the neighbour sums
    Lx = np.moveaxis(p.graph.neighbor_sum(np.moveaxis(x, 1, 0)), 0, 1)
    Ldv = np.moveaxis(p.graph.neighbor_sum(np.moveaxis(dv, 1, 0)), 0, 1)
    v2 = f0 - f0_star - total(dx * grad_star) + 0.5 * a * total(x * Lx)
    v3 = a * total(x * Ldv)
    return v1 + v2 + v3


@dataclass(frozen=True)
class DescentReport:
    h: float
    values: np.ndarray
    max_increase: float
    tolerance: float
    violations: int

    @property
    def passed(self):
        return self.violations == 0


def lyapunov_descent(p, s0, params, cert, variant="smooth", tol_factor=10.0):
    """Integrate and monitor ``V`` at every step.

    ``max_increase`` is the largest positive one-step change of ``V`` (0 if
    ``V`` never increases); ``violations`` counts steps whose increase exceeds
    ``tol_factor * h**2``.
    """
    _, states = integrate(p, s0, params, variant)
    values = lyapunov_series(states, cert, p, params)
    inc = np.diff(values)
    tol = tol_factor * params.h ** 2
    max_inc = float(max(inc.max(initial=0.0), 0.0))
    return DescentReport(params.h, values, max_inc, tol, int(np.count_nonzero(inc > tol)))


def _balance(select, intervals, deficit, tol):
    """Shift subgradient selections inside their intervals so their sum moves by ``deficit``."""
    for idx, (lo, hi) in intervals:
        if abs(deficit) <= tol:
            break
        cur = select[idx]
        room = (hi - cur) if deficit > 0 else (lo - cur)
        shift = min(deficit, room) if deficit > 0 else max(deficit, room)
        select[idx] = cur + shift
        deficit -= shift
    return deficit


def analytic_certificate(p, params, w_star):
    """Equilibrium ``(x*, z*, v*)`` around a known consensus optimum ``w_star``.

    Subgradients ``g1_i, g2_i`` of ``f1_i, f2_i`` at ``w_star`` start at their
    minimum-norm selections; where the stationarity condition
    ``sum_i grad f0_i + g1_i + g2_i = 0`` is not met, coordinates with slack
    (kinks of l1 terms, box faces) are adjusted in ascending agent order, f2
    before f1. Then ``z* = -g2 / gamma`` and ``v*`` is the minimum-norm
    solution of ``alpha L v* = -(grad F0 + g1 + g2)``. Ball boundaries
    contribute only the zero subgradient.

    Raises
    ------
    CertificateError
        If ``w_star`` is infeasible or no balanced selection exists.
    """
    n, q = p.n, p.q
    w_star = np.asarray(w_star, dtype=float)
    if w_star.shape != (q,):
        raise ValueError(f"optimum must have shape ({q},), got {w_star.shape}")
    x_star = np.tile(w_star, (n, 1))
    grad = np.array([a.f0.gradient(w_star) for a in p.agents])
    g1 = np.zeros((n, q))
    g2 = np.zeros((n, q))
    bounds = {}
    for i, agent in enumerate(p.agents):
        if not np.isfinite(agent.f1.value(w_star) + agent.f2.value(w_star)):
            raise CertificateError(f"optimum lies outside the constraint set of agent {i + 1}")
        for which, f, g in ((1, agent.f1, g1), (2, agent.f2, g2)):
            lo, hi = f.subgradient_interval(w_star)
            g[i] = np.clip(0.0, lo, hi)
            bounds[which, i] = (lo, hi)
    scale = max(1.0, float(np.abs(grad).max()))
    tol = 1e-12 * scale * n
    for j in range(q):
        deficit = -(grad[:, j].sum() + g1[:, j].sum() + g2[:, j].sum())
        for which, g in ((2, g2), (1, g1)):
            col = g[:, j].copy()
            slots = [(i, (bounds[which, i][0][j], bounds[which, i][1][j])) for i in range(n)]
            deficit = _balance(col, slots, deficit, tol)
            g[:, j] = col
        if abs(deficit) > tol * 1e3:
            raise CertificateError(
                f"no subgradient selection balances coordinate {j + 1} "
                f"(residual {deficit:.3e}); is w_star optimal?")
    z_star = -g2 / params.gamma
    rhs = -(grad + g1 + g2)
    L = p.graph.spectrum.L
    v_star = np.linalg.lstsq(params.alpha * L, rhs, rcond=None)[0]
    cert = EquilibriumCertificate(x_star, z_star, v_star, "analytic")
    res = fixed_point_residual(cert.state, p, params)
    return EquilibriumCertificate(x_star, z_star, v_star, "analytic", res)


def certificate_from_run(p, s0, params, tol=1e-10, t_max=1e4, check_every=1000):
    """Integrate until the fixed-point residual drops to ``tol`` and certify the state.

    Raises
    ------
    CertificateError
        If ``t_max`` is reached first.
    """
    system = DoubleProxSystem(p, params)
    S = s0.packed()
    h = params.h
    max_steps = int(np.ceil(t_max / h))
    for k in range(max_steps + 1):
        F = system.field(S)
        if k % check_every == 0:
            res = float(np.linalg.norm(F))
            if res <= tol:
                return EquilibriumCertificate(S[0], S[1], S[2], "converged-run", res)
        S = system.advance(S, F)
    raise CertificateError(
        f"fixed-point residual {float(np.linalg.norm(system.field(S))):.3e} above {tol:g} "
        f"after t = {t_max:g}")


def residual_report(s, p, params, cert=None):
    lyap = None if cert is None else lyapunov_value(s, cert, p, params)
    return ResidualReport(kkt_residual(s, p, params), fixed_point_residual(s, p, params),
                          consensus_residual(s.x, p.graph), lyap)
