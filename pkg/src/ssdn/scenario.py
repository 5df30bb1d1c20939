"""
Scenario files, run orchestration and trajectory export.

A scenario is one YAML document::

    name: paper_sec6
    graph:
      nodes: 4
      edges: [{i: 1, j: 2, weight: 1.0}, ...]      # 1-based
    agents:
      - f0: {type: quadratic, m: [-1.5, 0.0], k: 1.0}
        f1: {type: ball, center: [-4.0, 5.5], radius: 8.0}
        f2: {type: l1_anchor, anchor: [0.0, -1.5], weight: 1.0}
    params: {alpha: 0.2, gamma: 0.3}               # or {auto: true, safety: 0.5}
    initial:
      x: [[-4.0, 5.5], ...]                        # z, v optional (zeros)
    integrator: {method: euler, h: 0.001, t_end: 100.0}
    output: {trajectory: paper_sec6.csv, stride: 100, certificate: null}
    variant: smooth                                # or subgradient
    convergence_tol: 1.0e-4
    optimum: [0.0, 0.0]                            # optional, enables analytic certificates
"""

import csv
import dataclasses
import os
import time
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import (CertificateError, EquilibriumCertificate, analytic_certificate,
                          certificate_from_run, fixed_point_residual, lyapunov_descent,
                          residual_report)
from .dynamics import (METHODS, VARIANTS, AlgorithmParams, ParameterError, SystemState,
                       default_params, simulate)
from .graph import GraphError, from_edges
from .problem import AgentObjective, ProblemSpec, Quadratic
from .prox import function_from_dict

__all__ = [
    "Scenario",
    "ScenarioError",
    "RunSummary",
    "load_scenario",
    "parse_scenario",
    "bundled_scenarios",
    "run",
    "build_certificate",
    "certify",
    "monitor",
    "write_trajectory",
    "read_trajectory",
]

TOP_KEYS = {"name", "graph", "agents", "params", "initial", "integrator", "output", "variant",
            "convergence_tol", "optimum"}


class ScenarioError(ValueError):
    """Invalid scenario; ``key`` is a dotted path, ``line`` 1-based (or None)."""

    def __init__(self, message, key=None, line=None):
        where = ""
        if key:
            where = f"{key}" + (f" (line {line})" if line is not None else "") + ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.key = key
        self.line = line


def _line_map(text):
    """Map dotted key paths to 1-based line numbers."""
    lines = {}

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, f"{path}.{k.value}" if path else str(k.value))
                lines.setdefault(f"{path}.{k.value}" if path else str(k.value),
                                 k.start_mark.line + 1)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}[{i}]")

    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is not None:
        walk(root, "")
    return lines


@dataclass(eq=False)
class Scenario:
    name: str
    nodes: int
    edges: list
    agents: list
    x0: np.ndarray
    params: dict
    z0: np.ndarray = None
    v0: np.ndarray = None
    method: str = "euler"
    h: float = 1e-3
    t_end: float = 100.0
    stride: int = 100
    trajectory: str = None
    certificate: str = None
    variant: str = "smooth"
    convergence_tol: float = 1e-4
    optimum: np.ndarray = None

    @cached_property
    def graph(self):
        return from_edges(self.nodes, self.edges)

    @cached_property
    def problem(self):
        return ProblemSpec(self.graph, self.agents)

    @property
    def algorithm_params(self):
        if self.params.get("auto"):
            return default_params(self.graph, self.params.get("safety", 0.5), self.h,
                                  self.t_end, self.method)
        return AlgorithmParams(self.params["alpha"], self.params["gamma"], self.h, self.t_end,
                               self.method)

    @property
    def initial_state(self):
        return SystemState.initial(self.problem, self.x0, self.z0, self.v0)

    def replace(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        new = dataclasses.replace(self, **kw)
        _validate(new, {})
        return new

    def to_dict(self):
        d = {
            "name": self.name,
            "graph": {"nodes": self.nodes,
                      "edges": [{"i": i, "j": j, "weight": w} for i, j, w in self.edges]},
            "agents": [a.to_dict() for a in self.agents],
            "params": dict(self.params),
            "initial": {"x": np.asarray(self.x0).tolist()},
            "integrator": {"method": self.method, "h": self.h, "t_end": self.t_end},
            "output": {"trajectory": self.trajectory, "stride": self.stride,
                       "certificate": self.certificate},
            "variant": self.variant,
            "convergence_tol": self.convergence_tol,
        }
        if self.z0 is not None:
            d["initial"]["z"] = np.asarray(self.z0).tolist()
        if self.v0 is not None:
            d["initial"]["v"] = np.asarray(self.v0).tolist()
        if self.optimum is not None:
            d["optimum"] = np.asarray(self.optimum).tolist()
        return d

    def dump(self, path=None):
        text = yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)
        if path is not None:
            Path(path).write_text(text)
        return text

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.to_dict() == other.to_dict()


def _get(d, key, path, lines, required=True, default=None):
    if key in d:
        return d[key]
    if required:
        raise ScenarioError("missing required key", f"{path}.{key}" if path else key,
                            lines.get(path))
    return default


def _array(value, shape, key, lines):
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError("expected a numeric array", key, lines.get(key)) from None
    if a.shape != shape:
        raise ScenarioError(f"expected shape {shape}, got {a.shape}", key, lines.get(key))
    if not np.all(np.isfinite(a)):
        raise ScenarioError("entries must be finite", key, lines.get(key))
    return a


def parse_scenario(text, name=None):
    """Parse and validate scenario text."""
    try:
        data = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"parse error: {exc}", None,
                            None if mark is None else mark.line + 1) from None
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping", None, 1)
    unknown = set(data) - TOP_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise ScenarioError("unknown key", k, lines.get(k))

    g = _get(data, "graph", "", lines)
    nodes = _get(g, "nodes", "graph", lines)
    if not isinstance(nodes, int) or nodes < 1:
        raise ScenarioError("node count must be a positive integer", "graph.nodes",
                            lines.get("graph.nodes"))
    edges = []
    for k, e in enumerate(_get(g, "edges", "graph", lines, False, []) or []):
        key = f"graph.edges[{k}]"
        try:
            edges.append((int(e["i"]), int(e["j"]), float(e.get("weight", 1.0))))
        except (KeyError, TypeError, ValueError):
            raise ScenarioError("edge needs integer i, j and numeric weight", key,
                                lines.get(key)) from None

    agents_raw = _get(data, "agents", "", lines)
    if not isinstance(agents_raw, list):
        raise ScenarioError("expected a list of agents", "agents", lines.get("agents"))
    agents = []
    for k, a in enumerate(agents_raw):
        key = f"agents[{k}]"
        terms = {}
        for term, build in (("f0", Quadratic.from_dict), ("f1", function_from_dict),
                            ("f2", function_from_dict)):
            sub = f"{key}.{term}"
            if not isinstance(a, dict) or not isinstance(a.get(term), dict):
                raise ScenarioError("missing or malformed term", sub, lines.get(key))
            try:
                terms[term] = build(a[term])
            except (TypeError, ValueError) as exc:
                raise ScenarioError(str(exc), sub, lines.get(sub)) from None
        try:
            agents.append(AgentObjective(**terms))
        except ValueError as exc:
            raise ScenarioError(str(exc), key, lines.get(key)) from None

    params = _get(data, "params", "", lines, False, {"auto": True, "safety": 0.5})
    if params == "auto":
        params = {"auto": True, "safety": 0.5}
    if not isinstance(params, dict):
        raise ScenarioError("expected a mapping or 'auto'", "params", lines.get("params"))
    if params.get("auto"):
        params = {"auto": True, "safety": float(params.get("safety", 0.5))}
    else:
        for k in ("alpha", "gamma"):
            if k not in params:
                raise ScenarioError("missing required key", f"params.{k}", lines.get("params"))
        params = {"alpha": float(params["alpha"]), "gamma": float(params["gamma"])}

    init = _get(data, "initial", "", lines)
    integ = _get(data, "integrator", "", lines, False, {}) or {}
    out = _get(data, "output", "", lines, False, {}) or {}
    x0_raw = _get(init, "x", "initial", lines)
    q = len(agents[0].f0.m) if agents else 0
    shape = (nodes, q)
    x0 = _array(x0_raw, shape, "initial.x", lines)
    z0 = _array(init["z"], shape, "initial.z", lines) if init.get("z") is not None else None
    v0 = _array(init["v"], shape, "initial.v", lines) if init.get("v") is not None else None
    optimum = data.get("optimum")
    if optimum is not None:
        optimum = _array(optimum, (q,), "optimum", lines)

    sc = Scenario(
        name=str(data.get("name", name or "scenario")),
        nodes=nodes, edges=edges, agents=agents, x0=x0, params=params, z0=z0, v0=v0,
        method=str(integ.get("method", "euler")).lower(),
        h=float(integ.get("h", 1e-3)),
        t_end=float(integ.get("t_end", 100.0)),
        stride=int(out.get("stride", 100)),
        trajectory=out.get("trajectory"),
        certificate=out.get("certificate"),
        variant=str(data.get("variant", "smooth")),
        convergence_tol=float(data.get("convergence_tol", 1e-4)),
        optimum=optimum,
    )
    _validate(sc, lines)
    return sc


def _validate(sc, lines):
    if sc.variant not in VARIANTS:
        raise ScenarioError(f"unknown variant {sc.variant!r}; expected one of {VARIANTS}",
                            "variant", lines.get("variant"))
    if sc.method not in METHODS:
        raise ScenarioError(f"unknown method {sc.method!r}; expected one of {METHODS}",
                            "integrator.method", lines.get("integrator.method"))
    if sc.stride < 1:
        raise ScenarioError("stride must be at least 1", "output.stride",
                            lines.get("output.stride"))
    try:
        g = sc.graph
    except GraphError as exc:
        raise ScenarioError(str(exc), "graph.edges", lines.get("graph.edges")) from None
    try:
        p = sc.problem
    except ValueError as exc:
        raise ScenarioError(str(exc), "agents", lines.get("agents")) from None
    if sc.x0.shape != (p.n, p.q):
        raise ScenarioError(f"expected shape {(p.n, p.q)}, got {sc.x0.shape}", "initial.x",
                            lines.get("initial.x"))
    try:
        params = sc.algorithm_params
        params.check_bounds(g.spectrum.lambda_max)
    except ParameterError as exc:
        msg = str(exc)
        key = "params.gamma" if msg.startswith("gamma") else \
            "params.alpha" if msg.startswith("alpha") else \
            "params" if "safety" in msg or "lambda_max = 0" in msg else "integrator"
        raise ScenarioError(msg, key, lines.get(key, lines.get("params"))) from None


def bundled_scenarios():
    root = resources.files("ssdn") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario(path):
    """Load a scenario file, or a bundled scenario by name (e.g. ``"paper_sec6"``)."""
    p = Path(path)
    if p.is_file():
        return parse_scenario(p.read_text(), p.stem)
    if str(path) in bundled_scenarios():
        text = (resources.files("ssdn") / "scenarios" / f"{path}.yaml").read_text()
        return parse_scenario(text, str(path))
    raise ScenarioError(f"no such scenario file or bundled scenario: {path}")


# trajectory files ---------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_trajectory(path, traj):
    """Write one row per (record, agent): ``t, agent, x.., z.., v.., F, consensus, fixed_point[, V]``."""
    first = traj.records[0].state
    q = first.x.shape[1]
    with_v = any(r.lyapunov is not None for r in traj.records)
    header = ["t", "agent"] + [f"{b}_{j}" for b in "xzv" for j in range(1, q + 1)] \
        + ["F", "consensus", "fixed_point"] + (["V"] if with_v else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in traj.records:
            tail = [_fmt(r.cost), _fmt(r.consensus), _fmt(r.fixed_point)]
            if with_v:
                tail.append(_fmt(r.lyapunov))
            s = r.state
            for i in range(s.x.shape[0]):
                w.writerow([_fmt(r.t), i + 1] + [_fmt(u) for u in s.x[i]]
                           + [_fmt(u) for u in s.z[i]] + [_fmt(u) for u in s.v[i]] + tail)


def read_trajectory(path):
    """Read a trajectory file back as a list of ``(SystemState, row dict)`` per record."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ScenarioError(f"empty trajectory file {path}")
    q = sum(1 for k in rows[0] if k.startswith("x_"))
    out, block, t = [], [], None

    def flush():
        x = np.array([[float(r[f"x_{j}"]) for j in range(1, q + 1)] for r in block])
        z = np.array([[float(r[f"z_{j}"]) for j in range(1, q + 1)] for r in block])
        v = np.array([[float(r[f"v_{j}"]) for j in range(1, q + 1)] for r in block])
        out.append((SystemState(x, z, v, t), block[0]))

    for r in rows:
        tr = float(r["t"])
        if block and tr != t:
            flush()
            block = []
        t = tr
        block.append(r)
    flush()
    return out


# orchestration ------------------------------------------------------------

EXIT_CONVERGED, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_DIVERGED = 0, 1, 2, 3


@dataclass
class RunSummary:
    scenario: str
    final_state: SystemState
    report: object
    wall_time: float
    steps: int
    converged: bool
    trajectory: object = field(repr=False, default=None)
    trajectory_path: str = None

    @property
    def exit_code(self):
        return EXIT_CONVERGED if self.converged else EXIT_NOT_CONVERGED

    def __str__(self):
        verdict = "converged" if self.converged else "not converged (horizon reached)"
        x = self.final_state.x
        return (f"{self.scenario}: {verdict} at t = {self.final_state.t:g} after {self.steps} steps "
                f"({self.wall_time:.2f} s)\n  {self.report}\n"
                f"  max_i |x_i| = {np.max(np.linalg.norm(x, axis=1)):.6e}, "
                f"F(x) = {self.trajectory.final.cost:.10g}")


def run(scenario, out=None, write=True, check_assumptions=True):
    """Simulate a scenario, write its trajectory and return a :class:`RunSummary`.

    The verdict is "converged" when the fixed-point residual of the final
    state is at most ``scenario.convergence_tol``.
    """
    params = scenario.algorithm_params
    p = scenario.problem
    t0 = time.perf_counter()
    traj = simulate(p, scenario.initial_state, params, scenario.stride, scenario.variant,
                    check_assumptions=check_assumptions)
    wall = time.perf_counter() - t0
    final = traj.final.state
    report = residual_report(final, p, params)
    converged = bool(scenario.t_end > 0 and report.fixed_point <= scenario.convergence_tol)
    path = out or scenario.trajectory or f"{scenario.name}.csv"
    if write:
        write_trajectory(path, traj)
    return RunSummary(scenario.name, final, report, wall, traj.steps, converged, traj,
                      path if write else None)


def _final_state(trajectory):
    if isinstance(trajectory, (str, os.PathLike)):
        return read_trajectory(trajectory)[-1][0]
    if isinstance(trajectory, SystemState):
        return trajectory
    return trajectory.final.state


def build_certificate(scenario, trajectory=None, analytic=None, tol=1e-10, t_max=1e4):
    """Equilibrium certificate for a scenario.

    Analytic when the scenario names its ``optimum`` (or ``analytic`` is true).
    Otherwise the final state of ``trajectory`` is used if its fixed-point
    residual is within ``scenario.convergence_tol``; without a trajectory a
    fresh run is continued until the residual drops to ``tol``.
    """
    params = scenario.algorithm_params
    p = scenario.problem
    if analytic or (analytic is None and scenario.optimum is not None):
        if scenario.optimum is None:
            raise ScenarioError("analytic certificate needs an 'optimum' entry", "optimum")
        return analytic_certificate(p, params, scenario.optimum)
    if trajectory is not None:
        s = _final_state(trajectory)
        res = fixed_point_residual(s, p, params)
        if res > scenario.convergence_tol:
            raise CertificateError(
                f"final state is not an equilibrium (fixed-point residual {res:.3e})")
        return EquilibriumCertificate(s.x, s.z, s.v, "converged-run", res)
    return certificate_from_run(p, scenario.initial_state, params, tol, t_max)


def certify(scenario, trajectory, certificate=None):
    """Residual report on the final state of ``trajectory`` (object, state or file path).

    With a certificate the report also carries the Lyapunov value.
    """
    s = _final_state(trajectory)
    return residual_report(s, scenario.problem, scenario.algorithm_params, certificate)


def monitor(scenario, certificate, h_factor=2.0):
    """Lyapunov descent check on a fresh run with step ``h_factor * h``."""
    params = scenario.algorithm_params
    params = params.replace(h=params.h * h_factor)
    return lyapunov_descent(scenario.problem, scenario.initial_state, params, certificate)

