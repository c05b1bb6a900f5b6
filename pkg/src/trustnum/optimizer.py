"""Trust-aware utility maximisation by dual decomposition.

The primal problem maximises ``sum_s sum_k t_sk log x_sk`` over path rates
``x``, link capacity margins ``sigma`` and a scheduled capacity vector
``c_hat`` in the capacity region, subject to

* trust-weighted link load ``<= c_hat - sigma`` on every link,
* end-to-end delay ``sum kappa / sigma <= D_s`` on every path,
* ``sum_k x_sk <= R_s`` and ``sum_k t_sk x_sk >= R_thres`` per source.

Relaxing the first two constraints with link prices ``lam`` and path delay
prices ``mu`` splits the dual function into rate control, margin control and
scheduling, each solved in closed form (or by enumeration) for fixed prices.
The prices follow projected subgradient steps of constant size ``gamma``.

Because the margin and scheduling subproblems are linear in the primal
variables where their prices vanish, the raw primal iterates keep
oscillating around the optimum; the reported primal point is therefore the
running average of all iterates (scheduled vectors average to a convex
combination of region vertices).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import Infeasible, NoConvergence, NonPositiveRate
from .interference import (
    CapacityRegion,
    ConflictGraph,
    _support,
    max_weight_schedule_exact,
    max_weight_schedule_greedy,
)
from .topology import Flow, Network, routing_matrix
from .trust import TrustState, path_trust_vector, trust_incidence


@dataclass(frozen=True)
class SolverParams:
    gamma: float = 0.01
    epsilon: float = 1e-4
    max_iter: int = 50_000
    x_floor: float = 1e-6
    sigma_min: float = 1e-4
    sigma_max: float | None = None  # None: largest link capacity
    lambda_init: float = 1.0
    mu_init: float = 1.0
    delay_scale: float = 1.0
    schedule: str = "exact"
    corner: str = "exact"
    average: bool = True
    feas_tol: float = 1e-4
    patience: int = 50
    window: str = "tail"

    def __post_init__(self):
        if not self.gamma > 0 or not self.epsilon > 0:
            raise ValueError("gamma and epsilon must be positive")
        if not self.x_floor > 0:
            raise ValueError("x_floor must be positive")
        if not self.sigma_min > 0:
            raise ValueError("sigma_min must be positive")
        if self.sigma_max is not None and not self.sigma_max > self.sigma_min:
            raise ValueError("need sigma_min < sigma_max")
        if self.schedule not in ("exact", "greedy"):
            raise ValueError(f"unknown schedule policy {self.schedule!r}")
        if self.corner not in ("exact", "scale"):
            raise ValueError(f"unknown corner rule {self.corner!r}")
        if self.window not in ("tail", "full"):
            raise ValueError(f"unknown averaging window {self.window!r}")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.lambda_init < 0 or self.mu_init < 0:
            raise ValueError("initial prices must be non-negative")


@dataclass
class DualState:
    lam: np.ndarray
    mu: np.ndarray
    iteration: int = 0


@dataclass
class PrimalState:
    x: np.ndarray
    sigma: np.ndarray
    c_hat: np.ndarray
    # hull weights of c_hat: independent set (sorted link indices) -> weight
    beta: dict = field(default_factory=dict)


@dataclass
class Diagnostics:
    primal_objective: float
    dual_objective: float | None
    gap: float | None
    capacity_slack: np.ndarray
    delay_slack: np.ndarray
    rate_slack: np.ndarray
    reliability_slack: np.ndarray
    rate_kkt_residual: float | None
    delay_kkt_residual: float | None
    converged: bool = False
    iterations: int = 0
    flags: tuple = ()

    @property
    def min_slack(self) -> float:
        return float(min(self.capacity_slack.min(initial=np.inf), self.delay_slack.min(initial=np.inf),
                         self.rate_slack.min(initial=np.inf), self.reliability_slack.min(initial=np.inf)))


class Solution(NamedTuple):
    primal: PrimalState
    dual: DualState
    diagnostics: Diagnostics
    last: PrimalState


class Problem:
    """Static data of one solver run, with all flows' paths stacked row-wise.

    Global path ``p`` belongs to flow ``flow_of[p]``; ``T`` and ``R`` are the
    stacked trust-incidence and routing matrices.
    """

    def __init__(
        self,
        network: Network,
        flows: Sequence[Flow],
        trust: Mapping[str, float],
        region: CapacityRegion | None = None,
        conflict_graph: ConflictGraph | None = None,
    ):
        self.network = network
        self.flows = tuple(flows)
        self.trust = dict(trust.values if isinstance(trust, TrustState) else trust)
        self.region = region
        self.conflict_graph = conflict_graph
        L = len(network)
        blocks_T, blocks_R, ts, owner, dmax = [], [], [], [], []
        self.slices = []
        start = 0
        for f_i, flow in enumerate(self.flows):
            T_s = trust_incidence(self.trust, flow, network)
            blocks_T.append(T_s)
            blocks_R.append(routing_matrix(flow, network))
            ts.append(path_trust_vector(T_s, flow, network) if flow.n_paths else np.zeros(0))
            owner += [f_i] * flow.n_paths
            dmax += [flow.d_max] * flow.n_paths
            self.slices.append(slice(start, start + flow.n_paths))
            start += flow.n_paths
        self.T = np.vstack(blocks_T) if blocks_T else np.zeros((0, L))
        self.R = np.vstack(blocks_R) if blocks_R else np.zeros((0, L))
        self.t = np.concatenate(ts) if ts else np.zeros(0)
        self.flow_of = np.array(owner, dtype=int)
        self.d_path = np.array(dmax, dtype=float)
        self.capacities = network.capacities
        # tightest delay bound among paths using each link (inf if unused)
        used = self.R > 0
        self.d_link = np.where(used.any(axis=0),
                               np.where(used, self.d_path[:, None], np.inf).min(axis=0, initial=np.inf),
                               np.inf)

    @property
    def n_paths(self) -> int:
        return len(self.t)

    @property
    def n_links(self) -> int:
        return len(self.network)

    def with_rate_cap(self, r_max: float) -> "Problem":
        flows = [replace(f, r_max=r_max, r_thres=min(f.r_thres, r_max)) for f in self.flows]
        return Problem(self.network, flows, self.trust, self.region, self.conflict_graph)


# ---------------------------------------------------------------- subproblems


def utility(t: Sequence[float], x: Sequence[float]) -> float:
    """Trust-weighted log utility of one source's path rates."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    used = t != 0
    if (x[used] <= 0).any():
        raise NonPositiveRate("log utility needs strictly positive rates on trusted paths")
    return float(t[used] @ np.log(x[used]))


class RateDecision(NamedTuple):
    x: np.ndarray
    interior: bool
    zero_price: bool


def _rates(t, price, nu, rho, floor):
    # callers keep the denominator positive wherever t > 0; paths with t = 0 sit at the floor
    d = np.where(t > 0, price + nu - rho * t, 1.0)
    return np.maximum(floor, t / d)


def _capped(t, price, r_max, rho, floor):
    """Rates for reliability multiplier ``rho`` with the smallest cap multiplier that honours ``r_max``."""
    pos = t > 0
    nu_lo = max(0.0, float(np.max(rho * t[pos] - price[pos], initial=0.0)))
    if nu_lo == 0.0 and (price[pos] - rho * t[pos] > 0).all():
        x = _rates(t, price, 0.0, rho, floor)
        if x.sum() <= r_max:
            return x, 0.0
    P = len(t)
    hi = nu_lo + t.sum() / (r_max - P * floor)

    def excess(nu):
        return _rates(t, price, nu, rho, floor).sum() - r_max

    delta = 1e-12 * (1.0 + nu_lo)
    lo = nu_lo + delta
    if excess(lo) <= 0:
        return _rates(t, price, lo, rho, floor), lo
    nu = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    x = _rates(t, price, nu, rho, floor)
    if x.sum() > r_max:
        x *= r_max / x.sum()
    return x, nu


def source_rate_control(
    t: Sequence[float],
    T_s: np.ndarray,
    lam: Sequence[float],
    r_max: float,
    r_thres: float = 0.0,
    x_floor: float = 1e-6,
    corner: str = "exact",
) -> RateDecision:
    """Per-source rate response to link prices.

    The unconstrained maximiser of ``sum t_k log x_k - sum_k p_k x_k`` with
    path price ``p = T_s @ lam`` is ``x_k = t_k / p_k``. When that point
    violates the rate cap or the reliability floor:

    * ``corner="exact"`` solves the constrained subproblem exactly,
      ``x_k = t_k / (p_k + nu - rho t_k)`` with the cap multiplier ``nu`` and
      reliability multiplier ``rho`` found by root bracketing;
    * ``corner="scale"`` scales the rates proportionally onto the cap and
      then moves them along ``t`` onto the reliability hyperplane.

    Raises
    ------
    Infeasible
        If no rate vector under the cap can meet the reliability threshold.
    """
    t = np.asarray(t, dtype=float)
    price = np.asarray(T_s, dtype=float) @ np.asarray(lam, dtype=float)
    if len(t) == 0:
        return RateDecision(np.zeros(0), True, False)
    if r_thres > r_max * t.max() + 1e-12:
        raise Infeasible(f"reliability threshold {r_thres} exceeds best achievable {r_max * t.max()}")
    if r_max <= len(t) * x_floor:
        raise Infeasible("rate cap leaves no room above the per-path floor")
    zero_price = bool(((price <= 0) & (t > 0)).any())
    if corner == "scale":
        return _scaled(t, price, r_max, r_thres, x_floor, zero_price)

    x, nu = _capped(t, price, r_max, 0.0, x_floor)
    rho = 0.0
    if t @ x < r_thres:
        def shortfall(r):
            return t @ _capped(t, price, r_max, r, x_floor)[0] - r_thres

        hi = 1.0 / max(t.max(), 1e-300)
        for _ in range(200):
            if shortfall(hi) >= 0:
                break
            hi *= 2.0
        rho = brentq(shortfall, 0.0, hi, xtol=1e-14, maxiter=200)
        x, nu = _capped(t, price, r_max, rho, x_floor)
    interior = nu == 0.0 and rho == 0.0 and bool((x > x_floor).all()) and not zero_price
    return RateDecision(x, interior, zero_price)


def _scaled(t, price, r_max, r_thres, floor, zero_price):
    pos = price > 0
    x = np.zeros_like(t)
    x[pos] = t[pos] / price[pos]
    if zero_price:
        # unpriced paths take whatever the cap leaves after the priced ones
        share = max(r_max - x[pos].sum(), floor) / max(int((~pos).sum()), 1)
        x[~pos] = share
    x = np.maximum(x, floor)
    interior = not zero_price and bool((x > floor).all())
    if x.sum() > r_max:
        x *= r_max / x.sum()
        interior = False
    if t @ x < r_thres:
        x = x + (r_thres - t @ x) * t / (t @ t)
        x = np.maximum(x, floor)
        interior = False
    return RateDecision(x, interior, zero_price)


def delay_control(lam, mu_link, delay_scale: float = 1.0, sigma_min: float = 1e-4,
                  sigma_max: float = 1e4) -> np.ndarray:
    """Margins maximising ``-(kappa * mu_link / sigma + lam * sigma)`` on ``[sigma_min, sigma_max]``.

    Stationary point ``sqrt(kappa * mu_link / lam)``, clamped; a link with zero
    price takes ``sigma_max`` and a priced link with zero delay price takes
    ``sigma_min``.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    mu_link = np.atleast_1d(np.asarray(mu_link, dtype=float))
    sigma = np.empty(np.broadcast(lam, mu_link).shape)
    lam, mu_link = np.broadcast_arrays(lam, mu_link)
    free = lam == 0
    sigma[free] = sigma_max
    act = ~free
    sigma[act] = np.sqrt(delay_scale * mu_link[act] / lam[act])
    return np.clip(sigma, sigma_min, sigma_max)


def link_delay(sigma, delay_scale: float = 1.0):
    return delay_scale / np.asarray(sigma, dtype=float)


def link_delay_derivative(sigma, delay_scale: float = 1.0):
    return -delay_scale / np.asarray(sigma, dtype=float) ** 2


def mu_link(routing, mu) -> np.ndarray:
    """Per-link sum of the delay prices of every path crossing the link.

    ``routing`` is a stacked paths-by-links 0/1 matrix or a list of per-flow
    blocks matching the concatenated ``mu``.
    """
    if isinstance(routing, (list, tuple)):
        routing = np.vstack(routing)
    return np.asarray(routing, dtype=float).T @ np.asarray(mu, dtype=float)


def link_load(T, x) -> np.ndarray:
    return np.asarray(T, dtype=float).T @ np.asarray(x, dtype=float)


def lambda_subgradient(c_hat, load, sigma) -> np.ndarray:
    """Capacity slack per link: scheduled capacity minus trust-weighted load minus margin."""
    return np.asarray(c_hat, dtype=float) - np.asarray(load, dtype=float) - np.asarray(sigma, dtype=float)


def mu_subgradient(d_path, R, sigma, delay_scale: float = 1.0) -> np.ndarray:
    """Delay slack per path: bound minus summed link delay."""
    return np.asarray(d_path, dtype=float) - np.asarray(R, dtype=float) @ link_delay(sigma, delay_scale)


def dual_update(dual: DualState, primal: PrimalState, problem: Problem, params: SolverParams) -> DualState:
    """One projected subgradient step on both price vectors."""
    g_lam = lambda_subgradient(primal.c_hat, link_load(problem.T, primal.x), primal.sigma)
    g_mu = mu_subgradient(problem.d_path, problem.R, primal.sigma, params.delay_scale)
    lam = np.maximum(0.0, dual.lam - params.gamma * g_lam)
    mu = np.maximum(0.0, dual.mu - params.gamma * g_mu)
    return DualState(lam, mu, dual.iteration + 1)


# --------------------------------------------------------------------- solver


def _sigma_max(problem: Problem, params: SolverParams) -> float:
    if params.sigma_max is not None:
        return params.sigma_max
    return float(problem.capacities.max())


def _sigma_floor(problem: Problem, params: SolverParams) -> np.ndarray:
    """Per-link lower margin bound.

    A link whose own delay exceeds the bound of a path through it can never
    be part of a feasible point, so margins below ``kappa / D`` are cut off.
    This keeps the delay subgradient bounded by the path bounds instead of
    by ``kappa / sigma_min``.
    """
    floor = params.delay_scale / problem.d_link
    return np.minimum(np.maximum(params.sigma_min, floor), _sigma_max(problem, params))


def _window_start(n: int, params: SolverParams) -> int:
    """First iterate kept in the reported average after ``n`` steps.

    ``tail`` drops the older half so the transient from the starting prices
    washes out; ``full`` keeps everything.
    """
    return (n + 1) // 2 if params.window == "tail" else 0


def _schedule(problem: Problem, params: SolverParams, lam: np.ndarray) -> np.ndarray:
    if params.schedule == "greedy":
        if problem.conflict_graph is None:
            raise ValueError("greedy scheduling needs the conflict graph")
        return max_weight_schedule_greedy(problem.conflict_graph, problem.network, lam)
    if problem.region is None:
        raise ValueError("exact scheduling needs the capacity region")
    return max_weight_schedule_exact(problem.region, lam)


def _primal_response(problem: Problem, params: SolverParams, lam, mu, corner=None):
    x = np.empty(problem.n_paths)
    zero_price = False
    interior = []
    for flow, sl in zip(problem.flows, problem.slices):
        d = source_rate_control(problem.t[sl], problem.T[sl], lam, flow.r_max, flow.r_thres,
                                params.x_floor, corner or params.corner)
        x[sl] = d.x
        zero_price |= d.zero_price
        interior.append(d.interior)
    sigma = delay_control(lam, mu_link(problem.R, mu), params.delay_scale, _sigma_floor(problem, params),
                          _sigma_max(problem, params))
    return x, sigma, zero_price, interior


def _lagrangian(problem, params, dual, x, sigma, c_hat) -> float:
    U = sum(utility(problem.t[sl], x[sl]) for sl in problem.slices)
    ml = mu_link(problem.R, dual.mu)
    return (U - float(dual.lam @ link_load(problem.T, x))
            - float(np.sum(params.delay_scale * ml / sigma + dual.lam * sigma))
            + float(dual.lam @ c_hat) + float(dual.mu @ problem.d_path))


def dual_value(problem: Problem, params: SolverParams, lam, mu) -> float | None:
    """Dual function at ``(lam, mu)``: sum of the three subproblem suprema plus the delay-bound term.

    Always uses the exact corner solution and the exact region maximum, so
    the value is an upper bound on the primal optimum. ``None`` if the
    capacity region was not enumerated.
    """
    if problem.region is None:
        return None
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    x, sigma, _, _ = _primal_response(problem, params, lam, mu, corner="exact")
    price = problem.T @ lam
    rate_part = 0.0
    for sl in problem.slices:
        rate_part += utility(problem.t[sl], x[sl]) - float(price[sl] @ x[sl])
    ml = mu_link(problem.R, mu)
    delay_part = -float(np.sum(params.delay_scale * ml / sigma + lam * sigma))
    sched_part = float(np.max(problem.region.vectors @ lam))
    return rate_part + delay_part + sched_part + float(mu @ problem.d_path)


def diagnostics(primal: PrimalState, dual: DualState, problem: Problem, params: SolverParams,
                *, converged: bool = False, flags=(), dual_bound: float | None = None) -> Diagnostics:
    """Objectives, duality gap, constraint slacks (>= 0 is feasible) and stationarity residuals."""
    x, sigma = primal.x, primal.sigma
    U = sum(utility(problem.t[sl], x[sl]) for sl in problem.slices)
    h = dual_value(problem, params, dual.lam, dual.mu)
    if dual_bound is not None:
        h = dual_bound if h is None else min(h, dual_bound)
    cap = lambda_subgradient(primal.c_hat, link_load(problem.T, x), sigma)
    delay = mu_subgradient(problem.d_path, problem.R, sigma, params.delay_scale)
    rate = np.array([f.r_max - x[sl].sum() for f, sl in zip(problem.flows, problem.slices)])
    rel = np.array([problem.t[sl] @ x[sl] - f.r_thres for f, sl in zip(problem.flows, problem.slices)])

    price = problem.T @ dual.lam
    res = []
    for k, sl in enumerate(problem.slices):
        xs = x[sl]
        inside = rate[k] > params.feas_tol and (rel[k] > params.feas_tol or problem.flows[k].r_thres == 0)
        if inside and (xs > params.x_floor).all():
            res.append(float(np.max(np.abs(problem.t[sl] / xs - price[sl]), initial=0.0)))
    rate_res = max(res) if res else None

    smax = _sigma_max(problem, params)
    ml = mu_link(problem.R, dual.mu)
    free = (sigma > _sigma_floor(problem, params)) & (sigma < smax)
    delay_res = None
    if free.any():
        delay_res = float(np.max(np.abs(link_delay_derivative(sigma[free], params.delay_scale) * ml[free]
                                        + dual.lam[free])))
    return Diagnostics(
        primal_objective=U,
        dual_objective=h,
        gap=None if h is None else h - U,
        capacity_slack=cap,
        delay_slack=delay,
        rate_slack=rate,
        reliability_slack=rel,
        rate_kkt_residual=rate_res,
        delay_kkt_residual=delay_res,
        converged=converged,
        iterations=dual.iteration,
        flags=tuple(flags),
    )


def solve(problem: Problem, params: SolverParams | None = None, start: DualState | None = None,
          *, raise_on_failure: bool = True) -> Solution:
    """Run the decomposed price iteration until the reported rates settle.

    Each iteration: projected price step from the previous primal response,
    then per-source rate control, per-link margin control and scheduling at
    the new prices. Stops once the L1 change of the reported rates is at most
    ``epsilon`` and the reported point violates no capacity or delay
    constraint by more than ``feas_tol``.

    ``start`` warm-starts the prices. With ``raise_on_failure`` a run that
    exhausts ``max_iter`` raises ``NoConvergence`` carrying the final
    solution; otherwise the solution comes back with ``converged=False``.
    """
    params = params or SolverParams()
    L, P = problem.n_links, problem.n_paths
    if start is None:
        dual = DualState(np.full(L, params.lambda_init), np.full(P, params.mu_init), 0)
    else:
        dual = DualState(np.array(start.lam, dtype=float), np.array(start.mu, dtype=float), 0)

    x, sigma, zp, _ = _primal_response(problem, params, dual.lam, dual.mu)
    c_hat = _schedule(problem, params, dual.lam)
    flags = Counter()
    if zp:
        flags["zero_price_path"] += 1
    # the primal response maximises the Lagrangian, so it yields the dual value for free
    track_bound = params.corner == "exact" and params.schedule == "exact"
    best_bound = _lagrangian(problem, params, dual, x, sigma, c_hat) if track_bound else np.inf
    # running sums of every iterate; the reported point averages the most recent ones
    width = P + 2 * L + L + P
    sums = np.zeros((params.max_iter + 2, width))
    supports = [_support(c_hat)]
    sums[1] = np.concatenate([x, sigma, c_hat, dual.lam, dual.mu])
    cuts = np.cumsum([P, L, L, L])

    def window_mean(n):
        lo = _window_start(n, params)
        return np.split((sums[n + 1] - sums[lo]) / (n + 1 - lo), cuts), lo

    converged = False
    n = 0
    streak = 0
    prev = window_mean(0)[0]
    while n < params.max_iter:
        dual = dual_update(dual, PrimalState(x, sigma, c_hat), problem, params)
        n += 1
        x_prev_raw = x
        x, sigma, zp, _ = _primal_response(problem, params, dual.lam, dual.mu)
        c_hat = _schedule(problem, params, dual.lam)
        supports.append(_support(c_hat))
        sums[n + 1] = sums[n] + np.concatenate([x, sigma, c_hat, dual.lam, dual.mu])
        if track_bound:
            best_bound = min(best_bound, _lagrangian(problem, params, dual, x, sigma, c_hat))
        if zp:
            flags["zero_price_path"] += 1
        if params.average:
            cur = window_mean(n)[0]
            change = np.abs(cur[0] - prev[0]).sum()
            prev = cur
            xr, sr, cr = cur[0], cur[1], cur[2]
        else:
            change = np.abs(x - x_prev_raw).sum()
            xr, sr, cr = x, sigma, c_hat
        streak = streak + 1 if change <= params.epsilon else 0
        if streak >= params.patience:
            cap = lambda_subgradient(cr, link_load(problem.T, xr), sr)
            dly = mu_subgradient(problem.d_path, problem.R, sr, params.delay_scale)
            if cap.min(initial=0.0) >= -params.feas_tol and dly.min(initial=0.0) >= -params.feas_tol:
                converged = True
                break

    if params.average:
        (x_avg, s_avg, c_avg, lam_avg, mu_avg), lo = window_mean(n)
        counts = Counter(supports[lo:])
        total = sum(counts.values())
        beta = {s: c / total for s, c in sorted(counts.items())}
        primal = PrimalState(x_avg, s_avg, c_avg, beta)
    else:
        primal = PrimalState(x, sigma, c_hat, {_support(c_hat): 1.0})
    last = PrimalState(x, sigma, c_hat, {_support(c_hat): 1.0})
    bound = best_bound if track_bound else None
    if params.average:
        avg_bound = dual_value(problem, params, lam_avg, mu_avg)
        if avg_bound is not None:
            bound = avg_bound if bound is None else min(bound, avg_bound)
    flag_list = [f"{k}:{v}" for k, v in sorted(flags.items())]
    diag = diagnostics(primal, dual, problem, params, converged=converged, flags=flag_list,
                       dual_bound=bound)
    sol = Solution(primal, dual, diag, last)
    if not converged and raise_on_failure:
        raise NoConvergence(f"no convergence within {params.max_iter} iterations", sol)
    return sol


def kkt_rate_residual(t, T_s, lam, x) -> float:
    """Max-abs gap between the utility gradient ``t / x`` and the path prices."""
    price = np.asarray(T_s, dtype=float) @ np.asarray(lam, dtype=float)
    return float(np.max(np.abs(np.asarray(t) / np.asarray(x) - price)))

