import numpy as np
import pytest
from scipy.linalg import expm

from ssdn.dynamics import (AlgorithmParams, AssumptionError, DivergenceError, DoubleProxSystem,
                           ParameterError, SystemState, default_params, integrate, sign_changes,
                           simulate, step, steps_for, subgradient_field, vector_field)
from ssdn.graph import build_graph, path_graph
from ssdn.problem import AgentObjective, ProblemSpec, Quadratic
from ssdn.prox import L1Anchor, Zero

GAMMA = 0.3


@pytest.fixture
def one_agent():
    """n = q = 1, f0 = x^2, f1 = f2 = 0, L = [0]."""
    return ProblemSpec(build_graph([[0.0]]), [AgentObjective(Quadratic([0.0], 1.0), Zero(), Zero())])


def _state(x, z=0.0, v=0.0, t=0.0):
    return SystemState(np.array([[x]]), np.array([[z]]), np.array([[v]]), t)


def _linear_matrix(gamma):
    # d/dt (x, z) = A (x, z) for the one-agent instance
    return np.array([[-2.0, gamma], [0.0, -gamma]])


def test_one_agent_field(one_agent):
    dx, dz, dv = vector_field(_state(1.0), one_agent, AlgorithmParams(0.2, GAMMA))
    assert (dx.item(), dz.item(), dv.item()) == (-2.0, 0.0, 0.0)


def test_one_agent_field_general(one_agent, rng):
    params = AlgorithmParams(0.2, GAMMA)
    for x, z, v in rng.normal(size=(20, 3)):
        dx, dz, dv = vector_field(_state(x, z, v), one_agent, params)
        np.testing.assert_allclose([dx.item(), dz.item()], _linear_matrix(GAMMA) @ [x, z], atol=1e-15)
        assert dv.item() == 0.0


def test_one_agent_euler_step(one_agent):
    s = step(_state(1.0), one_agent, AlgorithmParams(0.2, GAMMA, h=0.1))
    assert s.x.item() == pytest.approx(0.8, abs=1e-15)
    assert s.z.item() == 0.0 and s.v.item() == 0.0 and s.t == pytest.approx(0.1)


def test_one_agent_equilibrium_is_exact(one_agent):
    params = AlgorithmParams(0.2, GAMMA)
    F = vector_field(_state(0.0, 0.0, 3.7), one_agent, params)
    assert all(np.all(f == 0) for f in F)


def test_rk4_local_error_is_fifth_order(one_agent):
    s0 = _state(1.0, 1.0)
    errs = []
    for h in (0.2, 0.1, 0.05):
        s1 = step(s0, one_agent, AlgorithmParams(0.2, GAMMA, h=h, method="rk4"))
        exact = expm(_linear_matrix(GAMMA) * h) @ [1.0, 1.0]
        errs.append(np.hypot(s1.x.item() - exact[0], s1.z.item() - exact[1]))
    for a, b in zip(errs, errs[1:]):
        assert 26 <= a / b <= 38


def test_bundled_initial_dual_rate(bundled):
    _, _, dv = vector_field(bundled.initial_state, bundled.problem, bundled.algorithm_params)
    np.testing.assert_allclose(dv[0], [-2.0, 0.1], atol=1e-15)
    # the dual rate is alpha * L x, checked against the dense Laplacian
    L = bundled.graph.spectrum.L
    np.testing.assert_allclose(dv, 0.2 * L @ bundled.initial_state.x, atol=1e-14)


def test_default_params_path4():
    p = default_params(path_graph(4), 0.5)
    assert p.alpha == pytest.approx(0.5 / (2 + np.sqrt(2)), abs=1e-12)
    assert p.alpha == pytest.approx(0.14645, abs=1e-5)
    assert p.gamma == pytest.approx(0.25, abs=1e-12)


def test_bundled_gains_within_bounds():
    lam = path_graph(4).spectrum.lambda_max
    assert 0.2 < 1 / lam and 0.3 < 1 - 0.2 * lam
    AlgorithmParams(0.2, 0.3).check_bounds(lam)


@pytest.mark.parametrize("alpha, gamma, match", [(0.3, 0.01, "alpha"), (0.2, 0.32, "gamma")])
def test_bounds_rejected(alpha, gamma, match, bundled):
    params = AlgorithmParams(alpha, gamma)
    with pytest.raises(ParameterError, match=match):
        params.check_bounds(path_graph(4).spectrum.lambda_max)
    with pytest.raises(ParameterError):
        DoubleProxSystem(bundled.problem, params)


@pytest.mark.parametrize("kw", [dict(alpha=0), dict(gamma=-1), dict(h=0), dict(t_end=-1),
                                dict(method="midpoint")])
def test_params_validation(kw):
    args = dict(alpha=0.1, gamma=0.1)
    args.update(kw)
    with pytest.raises(ParameterError):
        AlgorithmParams(**args)


def test_default_params_edgeless():
    with pytest.raises(ParameterError, match="no edges"):
        default_params(build_graph([[0.0]]))


def test_steps_for():
    assert steps_for(100, 1e-3) == 100000
    assert steps_for(1, 0.3) == 4
    assert steps_for(0, 0.1) == 0


def test_zero_horizon(bundled):
    traj = simulate(bundled.problem, bundled.initial_state, bundled.algorithm_params.replace(t_end=0))
    assert len(traj) == 1 and traj.final.state == bundled.initial_state


def test_equilibrium_start_is_constant(bundled, bundled_analytic):
    s0 = SystemState(bundled_analytic.x_star, bundled_analytic.z_star, bundled_analytic.v_star)
    traj = simulate(bundled.problem, s0, bundled.algorithm_params.replace(t_end=1.0), stride=10)
    drift = max(np.max(np.abs(r.state.packed() - s0.packed())) for r in traj.records)
    assert drift <= 1e-12


def test_recording_stride(bundled):
    traj = simulate(bundled.problem, bundled.initial_state,
                    bundled.algorithm_params.replace(t_end=1.0), stride=100)
    assert len(traj) == 11
    np.testing.assert_allclose(np.diff(traj.times), 0.1, atol=1e-12)
    assert np.all(np.diff(traj.times) > 0)


def test_divergence_guard(one_agent):
    with pytest.raises(DivergenceError) as info:
        simulate(one_agent, _state(1.0), AlgorithmParams(0.2, GAMMA, h=5.0, t_end=200))
    assert info.value.agent == 1 and info.value.t > 0


def test_assumption_check(one_agent):
    weak = ProblemSpec(build_graph([[0.0]]),
                       [AgentObjective(Quadratic([0.0], 0.25), Zero(), Zero())])
    with pytest.raises(AssumptionError):
        simulate(weak, _state(1.0), AlgorithmParams(0.2, GAMMA, t_end=0.1))
    with pytest.warns(UserWarning):
        simulate(weak, _state(1.0), AlgorithmParams(0.2, GAMMA, t_end=0.1),
                 check_assumptions=False)


def test_determinism(bundled):
    params = bundled.algorithm_params.replace(t_end=2.0)
    a = integrate(bundled.problem, bundled.initial_state, params)[1]
    b = integrate(bundled.problem, bundled.initial_state, params)[1]
    assert np.array_equal(a, b)


def test_dual_sum_conserved_short(bundled):
    _, states = integrate(bundled.problem, bundled.initial_state, bundled.algorithm_params.replace(t_end=5))
    sums = states[:, 2].sum(axis=1)
    assert np.max(np.abs(sums - sums[0])) <= 1e-12


def test_field_locally_lipschitz(bundled, rng):
    system = DoubleProxSystem(bundled.problem, bundled.algorithm_params)
    S0 = bundled.initial_state.packed()
    ratios = []
    for _ in range(1000):
        S1 = S0 + rng.normal(scale=2.0, size=S0.shape)
        S2 = S1 + rng.normal(scale=1e-3, size=S0.shape)
        ratios.append(np.linalg.norm(system.field(S1) - system.field(S2))
                      / np.linalg.norm(S1 - S2))
    # composition of nonexpansive proxes with affine maps
    a, g, lam = 0.2, 0.3, bundled.graph.spectrum.lambda_max
    bound = 1 + (1 + 2 + 2 * a * lam + g) + (1 + g) + a * lam
    assert max(ratios) <= bound


def test_euler_step_refinement(bundled):
    ends = []
    for k in range(5):
        params = bundled.algorithm_params.replace(h=1e-2 / 2 ** k, t_end=1.0)
        ends.append(integrate(bundled.problem, bundled.initial_state, params)[1][-1])
    diffs = [np.linalg.norm(a - b) for a, b in zip(ends, ends[1:])]
    for a, b in zip(diffs, diffs[1:]):
        assert 1.7 <= a / b <= 2.3


def test_subgradient_selection():
    p = ProblemSpec(build_graph([[0.0]]),
                    [AgentObjective(Quadratic([0.0]), Zero(), L1Anchor([0.0], 1.0))])
    system = DoubleProxSystem(p, AlgorithmParams(0.2, GAMMA), "subgradient")
    assert system.subgradient(np.array([[2.0]])).item() == 1.0
    assert system.subgradient(np.array([[0.0]])).item() == 0.0
    dx, dz, _ = subgradient_field(_state(2.0, 5.0), p, AlgorithmParams(0.2, GAMMA))
    assert dx.item() == pytest.approx(-4.0 - 1.0) and dz.item() == 0.0


def test_subgradient_needs_l1(one_agent):
    with pytest.raises(ValueError, match="l1_anchor"):
        DoubleProxSystem(one_agent, AlgorithmParams(0.2, GAMMA), "subgradient")


def test_sign_changes():
    series = np.array([[1, 0], [-1, 0], [0, 1], [2, -1], [3, 1]], float)
    np.testing.assert_array_equal(sign_changes(series), [2, 2])


def test_state_shapes():
    with pytest.raises(ValueError):
        SystemState(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))
