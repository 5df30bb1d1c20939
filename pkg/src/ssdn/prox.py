"""
Proximable convex functions with closed-form proximal operators.

The catalog is closed: :class:`Zero`, :class:`L1Anchor`, :class:`BallIndicator`
and :class:`BoxIndicator`. Each kind knows its value, its prox, its
subdifferential (for optimality certificates) and its tagged-record form used
in scenario files.

For ``f`` lower semi-continuous and convex,

    prox_f[eta] = argmin_d  f(d) + 1/2 ||d - eta||^2
    M_f[eta]    = min_d     f(d) + 1/2 ||d - eta||^2

and ``d = prox_f[eta]`` iff ``eta - d`` is a subgradient of ``f`` at ``d``.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProximableFunction",
    "Zero",
    "L1Anchor",
    "BallIndicator",
    "BoxIndicator",
    "ProxResult",
    "ProxStack",
    "OracleError",
    "prox",
    "moreau_envelope",
    "moreau_gradient",
    "prox_oracle",
    "subgradient_residual",
    "function_from_dict",
]

# points this close to an indicator set count as inside it
INDICATOR_TOL = 1e-9


def _vec(a, name="vector"):
    a = np.array(a, dtype=float, ndmin=1)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    a.setflags(write=False)
    return a


def _kink_tol(*arrays):
    scale = max(1.0, *(float(np.max(np.abs(a))) for a in arrays))
    return 16 * np.finfo(float).eps * scale


class ProximableFunction:
    """Common interface of the catalog kinds."""

    kind = None
    dim = None

    def _check(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.dim is not None and eta.shape != (self.dim,):
            raise ValueError(
                f"dimension mismatch: {self.kind} expects shape ({self.dim},), got {eta.shape}")
        return eta

    def prox_point(self, eta):
        eta = self._check(eta)
        return self._batch(self._params(len(eta), 1), eta[None, :])[0]

    def value(self, x, tol=INDICATOR_TOL):
        raise NotImplementedError

    def subgradient_interval(self, point):
        """Per-coordinate bounds ``(lo, hi)`` of a box inside the subdifferential.

        For separable kinds the box is the whole subdifferential. For the ball
        on its boundary only ``{0}`` is returned (the normal cone is a ray, not
        a box).
        """
        raise NotImplementedError

    def subdifferential_distance(self, point, g):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    # stacked evaluation ---------------------------------------------------
    def _params(self, q, k):
        """Parameters tiled to ``k`` rows, in the layout :meth:`_batch` expects."""
        raise NotImplementedError

    @staticmethod
    def _batch(params, eta):
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(ProximableFunction):
    """The zero function. Its prox is the identity."""

    dim: int = None
    kind = "zero"

    def value(self, x, tol=INDICATOR_TOL):
        return 0.0

    def _params(self, q, k):
        return ()

    @staticmethod
    def _batch(params, eta):
        return eta.copy()

    def subgradient_interval(self, point):
        z = np.zeros(len(point))
        return z, z

    def subdifferential_distance(self, point, g):
        return float(np.linalg.norm(g))

    def to_dict(self):
        return {"type": "zero"}


@dataclass(frozen=True, init=False)
class L1Anchor(ProximableFunction):
    """``weight * ||x - anchor||_1``."""

    anchor: np.ndarray
    weight: float = 1.0
    kind = "l1_anchor"

    def __init__(self, anchor, weight=1.0):
        weight = float(weight)
        if not weight > 0:
            raise ValueError(f"l1_anchor weight must be positive, got {weight}")
        object.__setattr__(self, "anchor", _vec(anchor, "anchor"))
        object.__setattr__(self, "weight", weight)

    @property
    def dim(self):
        return len(self.anchor)

    def value(self, x, tol=INDICATOR_TOL):
        return self.weight * float(np.sum(np.abs(np.asarray(x) - self.anchor)))

    def _params(self, q, k):
        return (np.broadcast_to(self.anchor, (k, q)), np.full((k, 1), self.weight))

    @staticmethod
    def _batch(params, eta):
        # soft thresholding around the anchor; |eta - p| <= w maps to p
        p, w = params
        d = eta - p
        return np.where(d > w, eta - w, np.where(d < -w, eta + w, p))

    def subgradient_interval(self, point):
        d = np.asarray(point) - self.anchor
        tol = _kink_tol(point, self.anchor)
        w = self.weight
        lo = np.where(d > tol, w, -w)
        hi = np.where(d < -tol, -w, w)
        return lo, hi

    def subdifferential_distance(self, point, g):
        lo, hi = self.subgradient_interval(point)
        return float(np.linalg.norm(g - np.clip(g, lo, hi)))

    def to_dict(self):
        return {"type": "l1_anchor", "anchor": self.anchor.tolist(), "weight": self.weight}

    def __eq__(self, other):
        return (isinstance(other, L1Anchor) and self.weight == other.weight
                and np.array_equal(self.anchor, other.anchor))

    __hash__ = None


@dataclass(frozen=True, init=False)
class BallIndicator(ProximableFunction):
    """Indicator of the closed Euclidean ball ``{x : ||x - center|| <= radius}``."""

    center: np.ndarray
    radius: float
    kind = "ball"

    def __init__(self, center, radius):
        radius = float(radius)
        if not radius > 0:
            raise ValueError(f"ball radius must be positive, got {radius}")
        object.__setattr__(self, "center", _vec(center, "center"))
        object.__setattr__(self, "radius", radius)

    @property
    def dim(self):
        return len(self.center)

    def value(self, x, tol=INDICATOR_TOL):
        inside = np.linalg.norm(np.asarray(x) - self.center) <= self.radius + tol
        return 0.0 if inside else np.inf

    def _params(self, q, k):
        return (np.broadcast_to(self.center, (k, q)), np.full((k, 1), self.radius))

    @staticmethod
    def _batch(params, eta):
        c, r = params
        d = eta - c
        nrm = np.sqrt(np.sum(d * d, axis=1, keepdims=True))
        outside = nrm > r
        # the division only matters for rows outside the ball, where nrm > r > 0
        scale = np.where(outside, r / np.where(outside, nrm, 1.0), 1.0)
        return np.where(outside, c + scale * d, eta)

    def _on_boundary(self, point):
        return abs(np.linalg.norm(np.asarray(point) - self.center) - self.radius) \
            <= INDICATOR_TOL * max(1.0, self.radius)

    def subgradient_interval(self, point):
        z = np.zeros(len(point))
        return z, z

    def subdifferential_distance(self, point, g):
        point = np.asarray(point)
        d = point - self.center
        nrm = np.linalg.norm(d)
        if nrm > self.radius * (1 + INDICATOR_TOL) + INDICATOR_TOL:
            return np.inf
        if not self._on_boundary(point):
            return float(np.linalg.norm(g))
        # normal cone {t u : t >= 0}
        u = d / nrm
        t = float(g @ u)
        if t <= 0:
            return float(np.linalg.norm(g))
        return float(np.linalg.norm(g - t * u))

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}

    def __eq__(self, other):
        return (isinstance(other, BallIndicator) and self.radius == other.radius
                and np.array_equal(self.center, other.center))

    __hash__ = None


@dataclass(frozen=True, init=False)
class BoxIndicator(ProximableFunction):
    """Indicator of the box ``lo <= x <= hi`` (componentwise)."""

    lo: np.ndarray
    hi: np.ndarray
    kind = "box"

    def __init__(self, lo, hi):
        lo, hi = _vec(lo, "lo"), _vec(hi, "hi")
        if lo.shape != hi.shape:
            raise ValueError(f"box bounds differ in shape: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            j = int(np.flatnonzero(lo > hi)[0])
            raise ValueError(f"box lower bound exceeds upper bound at coordinate {j + 1}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return len(self.lo)

    def value(self, x, tol=INDICATOR_TOL):
        x = np.asarray(x)
        inside = np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol)
        return 0.0 if inside else np.inf

    def _params(self, q, k):
        return (np.broadcast_to(self.lo, (k, q)), np.broadcast_to(self.hi, (k, q)))

    @staticmethod
    def _batch(params, eta):
        lo, hi = params
        return np.minimum(np.maximum(eta, lo), hi)

    def subgradient_interval(self, point):
        point = np.asarray(point)
        tol = _kink_tol(point, self.lo, self.hi)
        at_lo = np.abs(point - self.lo) <= tol
        at_hi = np.abs(point - self.hi) <= tol
        lo = np.where(at_lo, -np.inf, 0.0)
        hi = np.where(at_hi, np.inf, 0.0)
        return lo, hi

    def subdifferential_distance(self, point, g):
        point = np.asarray(point)
        if self.value(point) == np.inf:
            return np.inf
        lo, hi = self.subgradient_interval(point)
        return float(np.linalg.norm(g - np.clip(g, lo, hi)))

    def to_dict(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}

    def __eq__(self, other):
        return (isinstance(other, BoxIndicator) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    __hash__ = None


_KINDS = {cls.kind: cls for cls in (Zero, L1Anchor, BallIndicator, BoxIndicator)}


def function_from_dict(d):
    """Build a catalog function from its tagged record, e.g. ``{"type": "ball", ...}``."""
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown function type {kind!r}; expected one of {sorted(_KINDS)}")
    if kind == "zero":
        unknown = set(d) - {"dim"}
    elif kind == "l1_anchor":
        unknown = set(d) - {"anchor", "weight"}
    elif kind == "ball":
        unknown = set(d) - {"center", "radius"}
    else:
        unknown = set(d) - {"lo", "hi"}
    if unknown:
        raise ValueError(f"unknown keys for {kind}: {sorted(unknown)}")
    return _KINDS[kind](**d)


@dataclass(frozen=True)
class ProxResult:
    """Prox point and the Moreau envelope value at the input."""

    point: np.ndarray
    envelope: float


def prox(f, eta):
    """Evaluate the proximal operator and Moreau envelope of ``f`` at ``eta``."""
    point = f.prox_point(eta)
    eta = np.asarray(eta, dtype=float)
    fval = f.value(point)
    return ProxResult(point, fval + 0.5 * float(np.sum((point - eta) ** 2)))


def moreau_envelope(f, eta):
    return prox(f, eta).envelope


def moreau_gradient(f, eta):
    """Gradient of the Moreau envelope, ``eta - prox_f[eta]``."""
    eta = np.asarray(eta, dtype=float)
    return eta - f.prox_point(eta)


def subgradient_residual(f, eta):
    """Distance from ``eta - prox_f[eta]`` to the subdifferential at the prox point.

    Zero certifies the prox optimality condition.
    """
    eta = np.asarray(eta, dtype=float)
    point = f.prox_point(eta)
    return f.subdifferential_distance(point, eta - point)


class ProxStack:
    """Row-wise prox of one catalog function per agent.

    Agents sharing a kind are evaluated together; the arithmetic per row is
    the same as in :meth:`ProximableFunction.prox_point`.
    """

    def __init__(self, functions, q):
        self.functions = tuple(functions)
        self.q = q
        groups = {}
        for i, f in enumerate(self.functions):
            groups.setdefault(type(f), []).append(i)
        self._groups = []
        for cls, idx in groups.items():
            rows = [self.functions[i]._params(q, 1) for i in idx]
            params = tuple(np.concatenate([r[k] for r in rows]) for k in range(len(rows[0])))
            self._groups.append((cls._batch, np.asarray(idx), params))
        self._single = len(self._groups) == 1

    def __call__(self, eta):
        if self._single:
            batch, _, params = self._groups[0]
            return batch(params, eta)
        out = np.empty_like(eta)
        for batch, idx, params in self._groups:
            out[idx] = batch(params, eta[idx])
        return out


class OracleError(ValueError):
    """The grid-search oracle could not bracket the minimiser."""


def _search_1d(obj, a, b, step, hard_a, hard_b, points=200):
    """Coarse-to-fine grid minimisation of a convex 1-D function on ``[a, b]``.

    Returns the best grid point at a final spacing no larger than ``step``.
    ``hard_a``/``hard_b`` mark ends that are genuine constraint bounds rather
    than the edge of the search window.
    """
    lo, hi = a, b
    while True:
        grid = np.linspace(lo, hi, points + 1)
        vals = obj(grid)
        k = int(np.argmin(vals))
        if (k == 0 and grid[0] == a and not hard_a) or \
                (k == points and grid[-1] == b and not hard_b):
            raise OracleError(
                f"minimiser on the search boundary at {grid[k]:.6g}; enlarge the search box")
        spacing = (hi - lo) / points
        if spacing <= step:
            return grid[k]
        lo, hi = max(a, grid[k] - 2 * spacing), min(b, grid[k] + 2 * spacing)


def _coordinate_objective(f, j, eta_j):
    if isinstance(f, L1Anchor):
        p, w = f.anchor[j], f.weight
        return lambda d: w * np.abs(d - p) + 0.5 * (d - eta_j) ** 2
    return lambda d: 0.5 * (d - eta_j) ** 2


def _search_ball_polar(f, eta, step):
    c, r = f.center, f.radius
    obj = lambda rho, th: 0.5 * ((c[0] + rho * np.cos(th) - eta[0]) ** 2
                                 + (c[1] + rho * np.sin(th) - eta[1]) ** 2)
    # polar grids hit the boundary rho = r exactly
    r_lo, r_hi = 0.0, r
    t_lo, t_hi = 0.0, 2 * np.pi
    nr, nt = 100, 400
    while True:
        rho = np.linspace(r_lo, r_hi, nr + 1)
        th = np.linspace(t_lo, t_hi, nt + 1)
        vals = obj(rho[:, None], th[None, :])
        i, k = np.unravel_index(int(np.argmin(vals)), vals.shape)
        d_rho = (r_hi - r_lo) / nr
        d_th = (t_hi - t_lo) / nt
        if d_rho <= step / 2 and r * d_th <= step / 2:
            return np.array([c[0] + rho[i] * np.cos(th[k]), c[1] + rho[i] * np.sin(th[k])])
        r_lo, r_hi = max(0.0, rho[i] - 2 * d_rho), min(r, rho[i] + 2 * d_rho)
        t_lo, t_hi = th[k] - 2 * d_th, th[k] + 2 * d_th


def prox_oracle(f, eta, grid=1e-4, span=10.0):
    """Brute-force grid search for ``argmin f(d) + 1/2 ||d - eta||^2``.

    Independent of the closed forms: separable kinds are searched one
    coordinate at a time on ``[eta_j - span, eta_j + span]`` (clipped to the
    box for :class:`BoxIndicator`), the ball in polar coordinates around its
    center (``q <= 2``). A box coordinate whose window misses the box is
    searched over the whole box. The returned point is within ``grid`` of the true
    minimiser in every coordinate.

    Raises
    ------
    OracleError
        If the minimiser sits on the edge of the search window.
    """
    eta = f._check(eta)
    if isinstance(f, BallIndicator):
        if f.dim == 1:
            return np.array([_search_1d(_coordinate_objective(f, 0, eta[0]),
                                        f.center[0] - f.radius, f.center[0] + f.radius,
                                        grid, True, True)])
        if f.dim == 2:
            return _search_ball_polar(f, eta, grid)
        raise ValueError("grid oracle for the ball supports dimension <= 2 only")
    out = np.empty(len(eta))
    for j, e in enumerate(eta):
        a, b = e - span, e + span
        hard_a = hard_b = False
        if isinstance(f, BoxIndicator):
            lo, hi = f.lo[j], f.hi[j]
            if hi < a or lo > b:
                # window misses the box: search the whole box instead
                a, b = lo, hi
            hard_a, hard_b = lo >= a, hi <= b
            a, b = max(a, lo), min(b, hi)
            if a == b:
                out[j] = a
                continue
        out[j] = _search_1d(_coordinate_objective(f, j, e), a, b, grid, hard_a, hard_b)
    return out
