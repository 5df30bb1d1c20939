import numpy as np
import pytest

from ssdn.graph import build_graph, path_graph
from ssdn.problem import (AgentObjective, ProblemSpec, Quadratic, evaluate_total_cost,
                          gradient_f0, scale_for_strong_convexity, validate_assumptions)
from ssdn.prox import BallIndicator, BoxIndicator, L1Anchor, Zero


def test_bundled_agent1_gradient(bundled):
    a1 = bundled.problem.agents[0]
    np.testing.assert_array_equal(a1.f0.m, [-1.5, 0.0])
    np.testing.assert_array_equal(gradient_f0(a1, np.zeros(2)), [3.0, 0.0])


def test_gradient_zero_at_target(bundled):
    for a in bundled.problem.agents:
        np.testing.assert_array_equal(gradient_f0(a, a.f0.m), [0.0, 0.0])


def test_gradient_scale():
    a = AgentObjective(Quadratic([0.0], 2.0), Zero(), Zero())
    np.testing.assert_array_equal(gradient_f0(a, np.array([1.0])), [4.0])


def test_gradient_dimension_check():
    with pytest.raises(ValueError, match="dimension"):
        Quadratic([0.0, 0.0]).gradient(np.zeros(3))


def _bundled_cost_by_hand(x):
    """Total cost of the bundled instance written out term by term."""
    x0 = np.array([[-4, 5.5], [6, 5], [5, -3.5], [-5, -5]], float)
    total = 0.0
    for i in range(4):
        c = i + 1 - 2.5
        if np.linalg.norm(x[i] - x0[i]) > 8:
            return np.inf
        total += (x[i, 0] - c) ** 2 + x[i, 1] ** 2
        total += abs(x[i, 0]) + abs(x[i, 1] - c)
    return total


def test_bundled_cost_at_origin(bundled):
    x = np.zeros((4, 2))
    assert evaluate_total_cost(bundled.problem, x) == pytest.approx(9.0, abs=1e-12)
    assert _bundled_cost_by_hand(x) == pytest.approx(9.0, abs=1e-12)


def test_bundled_cost_matches_hand_expansion(bundled, rng):
    for _ in range(50):
        x = rng.normal(scale=2, size=(4, 2))
        assert evaluate_total_cost(bundled.problem, x) == pytest.approx(_bundled_cost_by_hand(x))


def test_bundled_cost_outside_constraint(bundled):
    x = np.zeros((4, 2))
    x[0] = [20.0, 20.0]
    assert evaluate_total_cost(bundled.problem, x) == np.inf


def test_cost_accepts_flat_vector(bundled):
    assert evaluate_total_cost(bundled.problem, np.zeros(8)) == pytest.approx(9.0)
    with pytest.raises(ValueError, match="shape"):
        evaluate_total_cost(bundled.problem, np.zeros(7))


def test_single_agent_at_target():
    p = ProblemSpec(build_graph([[0.0]]), [AgentObjective(Quadratic([1.0, 2.0]), Zero(), Zero())])
    assert evaluate_total_cost(p, [[1.0, 2.0]]) == 0.0


def test_bundled_validation(bundled):
    rep = validate_assumptions(bundled.problem)
    assert rep.passed
    assert rep.strong_convexity == [2.0] * 4 and rep.min_c == 2.0


def test_weak_convexity_suggests_scaling():
    agents = [AgentObjective(Quadratic([0.0], 0.25), Zero(), Zero())] * 2
    rep = validate_assumptions(ProblemSpec(path_graph(2), agents))
    assert not rep.strong_convexity_ok and rep.min_c == 0.5
    assert any("K > 2" in s for s in rep.suggestions)
    assert "FAIL" in rep.summary()


def test_disconnected_graph_fails():
    agents = [AgentObjective(Quadratic([0.0]), Zero(), Zero())] * 2
    rep = validate_assumptions(ProblemSpec(build_graph(np.zeros((2, 2))), agents))
    assert not rep.connected and not rep.passed


def test_disjoint_sets_flagged():
    agents = [AgentObjective(Quadratic([0.0]), BoxIndicator([0.0], [1.0]), Zero()),
              AgentObjective(Quadratic([0.0]), BallIndicator([5.0], 1.0), Zero())]
    rep = validate_assumptions(ProblemSpec(path_graph(2), agents))
    assert not rep.feasibility_ok and rep.feasibility_heuristic


@pytest.mark.parametrize("k, K, c_new", [(0.25, 4.0, 2.0), (1.0, 1.0, 2.0)])
def test_scaling(k, K, c_new):
    a = AgentObjective(Quadratic([1.0], k), L1Anchor([0.0]), Zero())
    b = scale_for_strong_convexity(a, K)
    assert b.f0.strong_convexity == c_new
    assert b.f1 == a.f1 and b.f2 == a.f2


def test_scaling_rejects_small_factor():
    a = AgentObjective(Quadratic([1.0], 0.25), Zero(), Zero())
    with pytest.raises(ValueError, match="exceed"):
        scale_for_strong_convexity(a, 1.0)


def test_strong_convexity_inequality(rng):
    for _ in range(100):
        k = rng.uniform(0.1, 5)
        f = Quadratic(rng.normal(size=3), k)
        t1, t2 = rng.normal(scale=3, size=(2, 3))
        lhs = (f.gradient(t1) - f.gradient(t2)) @ (t1 - t2)
        assert lhs >= f.strong_convexity * np.sum((t1 - t2) ** 2) - 1e-10
        assert f.strong_convexity == 2 * k


def test_gradient_finite_differences(rng):
    for _ in range(50):
        f = Quadratic(rng.normal(size=2), rng.uniform(0.5, 3))
        x = rng.normal(scale=3, size=2)
        h = 1e-6
        fd = np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(2)])
        g = f.gradient(x)
        assert np.linalg.norm(fd - g) <= 1e-6 * max(np.linalg.norm(g), 1.0)


def test_cost_invariant_under_relabeling(bundled, rng):
    p = bundled.problem
    perm = rng.permutation(4)
    W = p.graph.weights[np.ix_(perm, perm)]
    q = ProblemSpec(build_graph(W), [p.agents[i] for i in perm])
    for _ in range(20):
        x = rng.normal(size=(4, 2))
        assert evaluate_total_cost(q, x[perm]) == pytest.approx(evaluate_total_cost(p, x))


def test_mismatched_dimensions_rejected():
    with pytest.raises(ValueError, match="dimension"):
        AgentObjective(Quadratic([0.0, 0.0]), L1Anchor([0.0]), Zero())
    with pytest.raises(ValueError):
        ProblemSpec(path_graph(3), [AgentObjective(Quadratic([0.0]), Zero(), Zero())] * 2)


def test_record_round_trip(bundled):
    for a in bundled.problem.agents:
        assert AgentObjective.from_dict(a.to_dict()) == a
