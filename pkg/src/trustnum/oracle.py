"""Brute-force reference optimum for desk-sized instances.

Grid search over path rates and hull weights of the capacity region. The
margins need no grid: for fixed rates and scheduled capacities, the delay of
every path only falls as margins grow, so each margin is set to the largest
value the link's capacity constraint allows and the point is feasible iff
that choice meets every delay bound.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NoFeasiblePoint, TooLarge
from .optimizer import Problem, SolverParams

MAX_FLOWS = 2
MAX_PATHS = 4
MAX_LINKS = 6


@dataclass
class OracleResult:
    objective: float
    x: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray
    c_hat: np.ndarray
    resolution: float
    evaluations: int


def simplex_grid(n: int, step: float) -> np.ndarray:
    """All weight vectors of length ``n`` on the simplex with spacing ``step``."""
    m = int(round(1.0 / step))
    rows = [c for c in itertools.product(range(m + 1), repeat=n - 1) if sum(c) <= m]
    out = np.array([list(c) + [m - sum(c)] for c in rows], dtype=float) / m
    return out


def feasibility(problem: Problem, params: SolverParams, x, sigma, c_hat) -> dict:
    """Slack of every primal constraint at one point (>= 0 means satisfied)."""
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    smax = params.sigma_max if params.sigma_max is not None else float(problem.capacities.max())
    out = {
        "capacity": np.asarray(c_hat) - problem.T.T @ x - sigma,
        "delay": problem.d_path - problem.R @ (params.delay_scale / sigma),
        "rate": np.array([f.r_max - x[sl].sum() for f, sl in zip(problem.flows, problem.slices)]),
        "reliability": np.array([problem.t[sl] @ x[sl] - f.r_thres
                                 for f, sl in zip(problem.flows, problem.slices)]),
        "floor": x - params.x_floor,
        "margin_low": sigma - params.sigma_min,
        "margin_high": smax - sigma,
    }
    return out


def is_feasible(problem: Problem, params: SolverParams, x, sigma, c_hat, tol: float = 1e-9) -> bool:
    return all(v.min(initial=0.0) >= -tol for v in feasibility(problem, params, x, sigma, c_hat).values())


def _evaluate(problem, params, X, c_hat, smax):
    """Objective of each grid row of ``X`` (``-inf`` where infeasible) and the implied margins."""
    load = X @ problem.T
    sigma = np.minimum(smax, c_hat[None, :] - load)
    ok = (sigma >= params.sigma_min).all(axis=1)
    safe = np.where(sigma > 0, sigma, 1.0)
    delay = (params.delay_scale / safe) @ problem.R.T
    ok &= (delay <= problem.d_path[None, :] + 1e-12).all(axis=1)
    val = np.zeros(len(X))
    for f, sl in zip(problem.flows, problem.slices):
        xs = X[:, sl]
        ok &= xs.sum(axis=1) <= f.r_max + 1e-12
        ok &= xs @ problem.t[sl] >= f.r_thres - 1e-12
        used = problem.t[sl] != 0
        val += np.log(xs[:, used]) @ problem.t[sl][used]
    return np.where(ok, val, -np.inf), sigma


def _axes(problem, params, lo, hi, step):
    return [np.arange(lo[k], hi[k] + step * 0.5, step) for k in range(len(lo))]


def check_size(n_flows: int, n_paths: int, n_links: int) -> None:
    if n_flows > MAX_FLOWS or n_paths > MAX_PATHS or n_links > MAX_LINKS:
        raise TooLarge(f"oracle accepts at most {MAX_FLOWS} flows, {MAX_PATHS} paths and {MAX_LINKS} links")


def brute_force(
    problem: Problem,
    params: SolverParams | None = None,
    resolution: float = 0.01,
    beta_step: float = 0.1,
    max_points: int = 400_000,
) -> OracleResult:
    """Best grid point of the primal problem.

    The rate grid has spacing ``resolution`` on ``[x_floor, R_s]`` per path.
    When that grid is too large it is searched coarse-to-fine: exhaustive at a
    coarse spacing, then exhaustive again in a window around the incumbent,
    halving the spacing each round until it reaches ``resolution``.
    """
    params = params or SolverParams()
    check_size(len(problem.flows), problem.n_paths, problem.n_links)
    if problem.region is None:
        raise ValueError("oracle needs the capacity region")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    smax = params.sigma_max if params.sigma_max is not None else float(problem.capacities.max())
    P = problem.n_paths
    lo = np.full(P, params.x_floor)
    hi = np.array([problem.flows[f].r_max for f in problem.flow_of])
    betas = simplex_grid(len(problem.region), beta_step)
    hulls = betas @ problem.region.vectors

    per_axis = max(2, int(max_points ** (1.0 / P)))
    step = max(resolution, float((hi - lo).max()) / (per_axis - 1))
    best = (-np.inf, None, None, None)
    evaluations = 0
    window_lo, window_hi = lo.copy(), hi.copy()
    while True:
        grid = np.stack(np.meshgrid(*_axes(problem, params, window_lo, window_hi, step), indexing="ij"),
                        axis=-1).reshape(-1, P)
        for b, c_hat in zip(betas, hulls):
            vals, sig = _evaluate(problem, params, grid, c_hat, smax)
            evaluations += len(grid)
            i = int(np.argmax(vals))
            if vals[i] > best[0]:
                best = (float(vals[i]), grid[i].copy(), sig[i].copy(), b)
        if best[1] is None:
            raise NoFeasiblePoint("no grid point satisfies every constraint")
        if step <= resolution * (1 + 1e-9):
            break
        centre = best[1]
        window_lo = np.maximum(lo, centre - 2 * step)
        window_hi = np.minimum(hi, centre + 2 * step)
        step = max(resolution, step / 2)
        # anchor the finer grid on the incumbent so it is always re-evaluated
        window_lo = centre - np.floor((centre - window_lo) / step) * step

    obj, x, sig, b = best
    return OracleResult(obj, x, sig, b, b @ problem.region.vectors, resolution, evaluations)
