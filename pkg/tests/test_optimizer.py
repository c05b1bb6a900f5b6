import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from trustnum.errors import Infeasible, NoConvergence, NonPositiveRate
from trustnum.interference import CapacityRegion, build_conflict_graph
from trustnum.optimizer import (DualState, PrimalState, Problem, SolverParams, delay_control,
                                diagnostics, dual_update, dual_value, kkt_rate_residual,
                                lambda_subgradient, link_delay, link_delay_derivative, mu_link,
                                mu_subgradient, solve, source_rate_control, utility)
from trustnum.oracle import brute_force
from trustnum.topology import Flow, Network, Path
from trustnum.trust import TrustState


def single_link_problem(d_max=1e6, r_max=14.0):
    net = Network.from_triples(["a", "b"], [("a", "b", 10.0)])
    flow = Flow("a", "b", (Path([("a", "b")], "p"),), r_max=r_max, d_max=d_max)
    cg = build_conflict_graph(net, "none")
    return Problem(net, [flow], {"a": 1.0, "b": 1.0}, CapacityRegion.build(net, cg), cg)


# ---------------------------------------------------------------- utility

def test_utility_examples():
    assert utility([1], [math.e]) == pytest.approx(1.0)
    assert utility([1, 1], [1, 1]) == 0.0
    assert utility([0, 2], [-5, 1]) == 0.0
    with pytest.raises(NonPositiveRate):
        utility([1], [0.0])


# ----------------------------------------------------------- rate control

def test_single_path_closed_form():
    d = source_rate_control([1.0], [[1.0]], [0.1], r_max=14)
    assert d.x == pytest.approx([10.0]) and d.interior


def test_proportional_scaling_onto_cap():
    d = source_rate_control([1, 1], np.eye(2), [1 / 9, 1 / 6], r_max=10, corner="scale")
    np.testing.assert_allclose(d.x, [6, 4])
    assert not d.interior


def test_untrusted_path_gets_a_trust_proportional_share():
    d = source_rate_control([1, 0.04], np.diag([1, 0.04]), [0.2, 5.0], r_max=14)
    np.testing.assert_allclose(d.x, [5, 0.2])
    assert d.x[0] / d.x[1] == pytest.approx(25)


def test_threshold_beyond_reach_is_infeasible():
    with pytest.raises(Infeasible):
        source_rate_control([0.5, 0.2], np.eye(2), [1, 1], r_max=10, r_thres=6)


def test_zero_price_path_is_flagged_and_takes_the_rest_of_the_cap():
    d = source_rate_control([1, 1], np.eye(2), [0.5, 0.0], r_max=10, corner="scale")
    assert d.zero_price
    np.testing.assert_allclose(d.x, [2, 8])
    e = source_rate_control([1, 1], np.eye(2), [0.5, 0.0], r_max=10)
    assert e.zero_price and e.x.sum() == pytest.approx(10)


def test_scale_corner_meets_reliability_by_minimum_norm_shift():
    t = np.array([1.0, 0.2])
    d = source_rate_control(t, np.diag(t), [1.0, 0.1], r_max=10, r_thres=3.5, corner="scale")
    assert t @ d.x == pytest.approx(3.5)


def subproblem_value(t, price, x):
    return float(t @ np.log(x) - price @ x)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0.05, 1), min_size=1, max_size=5), st.data())
def test_exact_corner_beats_every_feasible_point(t, data):
    t = np.array(t)
    P = len(t)
    price = np.array(data.draw(st.lists(st.floats(0.01, 3), min_size=P, max_size=P)))
    r_max = data.draw(st.floats(0.5, 30))
    r_thres = data.draw(st.floats(0, 0.95)) * r_max * t.max()
    d = source_rate_control(t, np.diag(np.ones(P)), price, r_max, r_thres)
    x = d.x
    assert x.sum() <= r_max * (1 + 1e-9)
    assert t @ x >= r_thres - 1e-7
    best = subproblem_value(t, price, x)
    rng = np.random.default_rng(len(t))
    for _ in range(200):
        y = rng.dirichlet(np.ones(P)) * r_max * rng.uniform(0.01, 1)
        y = np.maximum(y, 1e-6)
        if y.sum() <= r_max and t @ y >= r_thres:
            assert subproblem_value(t, price, y) <= best + 1e-7


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.05, 1), min_size=2, max_size=4), st.floats(0.1, 0.99), st.data())
def test_lower_final_node_trust_lowers_the_interior_rate(t_hops, factor, data):
    # one path of len(t_hops) hops; the last receiver's trust drops by `factor`
    lam = np.array(data.draw(st.lists(st.floats(0.01, 2), min_size=len(t_hops), max_size=len(t_hops))))
    row = np.cumprod(t_hops)
    x0 = source_rate_control([row[-1]], row[None, :], lam, r_max=1e9).x[0]
    row2 = row.copy()
    row2[-1] *= factor
    x1 = source_rate_control([row2[-1]], row2[None, :], lam, r_max=1e9).x[0]
    assert x1 < x0


# ---------------------------------------------------------- delay control

def test_delay_control_examples():
    assert delay_control(4.0, 1.0, sigma_max=10)[0] == pytest.approx(0.5)
    assert delay_control(0.0, 2.0, sigma_max=10)[0] == 10
    s = delay_control(1.0, 1.0, sigma_max=10)[0]
    assert s == 1.0 and -(1 / s**2) * 1.0 == -1.0
    assert delay_control(2.0, 0.0, sigma_min=1e-4, sigma_max=10)[0] == 1e-4
    assert delay_control(1.0, 4.0, delay_scale=4, sigma_max=10)[0] == pytest.approx(4.0)


def test_link_delay_derivative_matches_finite_difference():
    s, h = 0.7, 1e-5
    fd = (link_delay(s + h, 3.0) - link_delay(s - h, 3.0)) / (2 * h)
    assert link_delay_derivative(s, 3.0) == pytest.approx(fd, rel=1e-6)


def test_mu_link_examples():
    R = np.array([[1, 0, 1], [1, 0, 0]])
    np.testing.assert_allclose(mu_link(R, [0.2, 0.3]), [0.5, 0, 0.2])
    assert mu_link(np.array([[1.0]]), [0.7])[0] == 0.7
    np.testing.assert_allclose(mu_link([R[:1], R[1:]], [0.2, 0.3]), [0.5, 0, 0.2])


def test_lambda_subgradient_examples():
    assert lambda_subgradient(10, 9.5, 0.3) == pytest.approx(0.2)
    assert lambda_subgradient(0, 0, 1e-4) == -1e-4
    assert lambda_subgradient(5, 4, 1) == 0


def test_dual_update_examples():
    prob = single_link_problem(d_max=2.0)
    params = SolverParams()
    # capacity slack 0.2, delay 1/sigma = 2.5 against a bound of 2
    primal = PrimalState(np.array([9.4]), np.array([0.4]), np.array([10.0]))
    out = dual_update(DualState(np.array([1.0]), np.array([0.5]), 3), primal, prob, params)
    assert out.lam[0] == pytest.approx(0.998)
    assert out.mu[0] == pytest.approx(0.505)
    assert out.iteration == 4
    primal = PrimalState(np.array([8.0]), np.array([1.0]), np.array([10.0]))
    out = dual_update(DualState(np.array([0.001]), np.array([0.0]), 0), primal, prob, params)
    assert out.lam[0] == 0.0 and out.mu[0] == 0.0


def test_params_validation():
    for bad in [dict(gamma=0), dict(epsilon=-1), dict(sigma_min=0), dict(sigma_min=2, sigma_max=1),
                dict(schedule="random"), dict(x_floor=0), dict(lambda_init=-1), dict(window="x")]:
        with pytest.raises(ValueError):
            SolverParams(**bad)


# ------------------------------------------------------------------ solve

def test_single_link_converges_to_capacity_minus_margin():
    prob = single_link_problem()
    sol = solve(prob)
    ref = brute_force(prob, SolverParams(), resolution=1e-3)
    assert ref.x[0] == pytest.approx(10 - 1e-4, abs=2e-3)
    assert sol.primal.x[0] == pytest.approx(ref.x[0], abs=1e-2)
    d = sol.diagnostics
    assert d.converged
    assert abs(d.gap) <= 1e-2 * abs(d.primal_objective)
    assert d.min_slack >= -1e-4


def test_prices_stay_non_negative_and_feasibility_holds():
    prob = single_link_problem(d_max=2.0)
    sol = solve(prob)
    assert (sol.dual.lam >= 0).all() and (sol.dual.mu >= 0).all()
    d = sol.diagnostics
    assert d.capacity_slack.min() >= -1e-4 and d.delay_slack.min() >= -1e-3
    assert d.rate_kkt_residual is None or d.rate_kkt_residual < 1e-2


def test_iteration_budget_exhaustion():
    prob = single_link_problem(d_max=2.0)
    with pytest.raises(NoConvergence) as err:
        solve(prob, SolverParams(max_iter=5))
    assert err.value.solution is not None
    assert not err.value.solution.diagnostics.converged
    sol = solve(prob, SolverParams(max_iter=5), raise_on_failure=False)
    assert sol.diagnostics.iterations == 5


def test_warm_start_from_converged_prices_is_quick():
    prob = single_link_problem(d_max=2.0)
    cold = solve(prob)
    warm = solve(prob, start=cold.dual)
    assert warm.diagnostics.iterations <= cold.diagnostics.iterations
    assert warm.primal.x[0] == pytest.approx(cold.primal.x[0], rel=1e-2)


def test_dual_value_bounds_feasible_utilities():
    prob = single_link_problem(d_max=2.0)
    params = SolverParams()
    ref = brute_force(prob, params, resolution=0.01)
    rng = np.random.default_rng(0)
    for _ in range(20):
        h = dual_value(prob, params, rng.uniform(0, 2, 1), rng.uniform(0, 2, 1))
        assert h >= ref.objective - 1e-9


def test_diagnostics_at_interior_point():
    prob = single_link_problem(d_max=2.0)
    params = SolverParams()
    lam = np.array([0.2])
    x = np.array([5.0])
    primal = PrimalState(x, np.array([1.0]), np.array([10.0]))
    d = diagnostics(primal, DualState(lam, np.array([0.2])), prob, params)
    assert d.rate_kkt_residual == pytest.approx(0.0, abs=1e-12)
    assert d.delay_kkt_residual == pytest.approx(0.0, abs=1e-12)
    assert (d.capacity_slack >= -1e-6).all() and (d.delay_slack >= -1e-6).all()
    assert d.gap == d.dual_objective - d.primal_objective
    assert kkt_rate_residual([1.0], [[1.0]], lam, x) == pytest.approx(0.0)


def test_greedy_policy_runs_inside_solve(chain):
    flow = Flow("s", "c", (Path([("s", "a"), ("a", "b"), ("b", "c")], "p"),), r_max=8, d_max=6)
    cg = build_conflict_graph(chain)
    prob = Problem(chain, [flow], {n: 1.0 for n in chain.nodes}, CapacityRegion.build(chain, cg), cg)
    exact = solve(prob, SolverParams(gamma=0.002, epsilon=3e-4))
    greedy = solve(prob, SolverParams(gamma=0.002, epsilon=3e-4, schedule="greedy"))
    for sol in (exact, greedy):
        assert sol.diagnostics.capacity_slack.min() >= -1e-4
    assert greedy.primal.x.sum() <= exact.primal.x.sum() + 0.05


def two_path_problem(t_mid, caps, d_max):
    net = Network.from_triples(["s", "a", "d"], [("s", "a", caps[0]), ("a", "d", caps[1]),
                                                 ("s", "d", caps[2])])
    flow = Flow("s", "d", (Path([("s", "a"), ("a", "d")], "p1"), Path([("s", "d")], "p2")),
                r_max=12, d_max=d_max)
    cg = build_conflict_graph(net, "none")
    trust = TrustState.initial({"s": 1.0, "a": t_mid, "d": 1.0}, 0.8)
    return Problem(net, [flow], trust, CapacityRegion.build(net, cg), cg)


@pytest.mark.parametrize("t_mid,caps,d_max", [
    (0.8, (8, 8, 5), 2.0),
    (0.5, (6, 9, 4), 3.0),
    (1.0, (5, 5, 5), 1.5),
])
def test_two_path_instances_match_oracle(t_mid, caps, d_max):
    prob = two_path_problem(t_mid, caps, d_max)
    params = SolverParams(gamma=0.002, epsilon=3e-4)
    sol = solve(prob, params)
    ref = brute_force(prob, params, resolution=0.01)
    U = sol.diagnostics.primal_objective
    assert abs(U - ref.objective) <= 1e-2 * abs(ref.objective)
