"""Period-by-period replay of a scenario: trust update, solve, one record per slot."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from ..errors import NoConvergence, TrustNumError
from ..interference import CapacityRegion
from ..optimizer import DualState, Problem, SolverParams, Solution, solve
from ..trust import TrustState, ewma_update
from .scenario import Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TraceRecord:
    """Solver output as seen in one time slot (slots and periods count from 1)."""

    slot: int
    period: int
    x: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray
    c_hat: np.ndarray
    mu: np.ndarray
    primal: float
    dual: float
    iterations: int
    converged: bool
    error: str | None = None

    @property
    def gap(self) -> float:
        return self.dual - self.primal


@dataclass(frozen=True)
class PeriodResult:
    period: int
    trust: TrustState
    problem: Problem
    solution: Solution | None
    error: str | None


def solve_periods(scenario: Scenario, params: SolverParams | None = None,
                  warm_start: bool | None = None) -> list[PeriodResult]:
    """Run the solver once per update period, carrying trust (and prices when warm) forward."""
    params = params or scenario.params
    warm = scenario.warm_start if warm_start is None else warm_start
    cg = scenario.conflict_graph()
    region = CapacityRegion.build(scenario.network, cg)
    state = None
    start: DualState | None = None
    out = []
    for p, row in enumerate(scenario.trust_rows, start=1):
        state = TrustState.initial(row, scenario.alpha) if state is None else ewma_update(state, row)
        problem = Problem(scenario.network, scenario.flows, state, region, cg)
        sol, err = None, None
        try:
            sol = solve(problem, params, start=start if warm else None)
        except NoConvergence as exc:
            sol, err = exc.solution, f"NoConvergence: {exc}"
        except TrustNumError as exc:
            err = f"{type(exc).__name__}: {exc}"
        if err:
            log.warning("period %d: %s", p, err)
        if sol is not None:
            start = sol.dual
        out.append(PeriodResult(p, state, problem, sol, err))
    return out


def _record(slot: int, result: PeriodResult, n_paths: int, n_links: int) -> TraceRecord:
    sol = result.solution
    if sol is None:
        nan_p, nan_l = np.full(n_paths, np.nan), np.full(n_links, np.nan)
        return TraceRecord(slot, result.period, nan_p, nan_l, nan_l, nan_l, nan_p,
                           np.nan, np.nan, 0, False, result.error)
    d = sol.diagnostics
    dual = d.dual_objective if d.dual_objective is not None else np.nan
    return TraceRecord(slot, result.period, sol.primal.x, sol.primal.sigma, sol.dual.lam,
                       sol.primal.c_hat, sol.dual.mu, d.primal_objective, dual, d.iterations,
                       d.converged, result.error)


def run(scenario: Scenario, params: SolverParams | None = None,
        warm_start: bool | None = None) -> list[TraceRecord]:
    """Trace of the whole horizon: ``T`` records, each period's result held for its slots."""
    results = solve_periods(scenario, params, warm_start)
    n_paths, n_links = len(scenario.paths), len(scenario.network)
    trace = []
    for result in results:
        first = (result.period - 1) * scenario.T_update + 1
        for slot in range(first, first + scenario.T_update):
            trace.append(_record(slot, result, n_paths, n_links))
    return trace


def with_schedule(scenario: Scenario, policy: str) -> Scenario:
    return replace(scenario, params=replace(scenario.params, schedule=policy))
