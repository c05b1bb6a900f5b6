"""Command line: ``trustnum run | verify | inspect``.

Exit codes: 0 success, 1 oracle mismatch in ``verify``, 2 invalid scenario,
3 solver did not converge.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path as FsPath

import numpy as np

from ..errors import NoFeasiblePoint, ScenarioError, TooLarge, TrustNumError
from ..interference import CapacityRegion, enumerate_independent_sets
from ..oracle import brute_force, check_size
from ..trust import TrustState, ewma_update, trust_incidence
from .output import emit_charts, emit_csv
from .runner import run, solve_periods
from .scenario import BUNDLED, Scenario, bundled_path, load_scenario

EXIT_OK, EXIT_MISMATCH, EXIT_INVALID, EXIT_NO_CONVERGENCE = 0, 1, 2, 3
OBJECTIVE_TOL = 1e-2
GAP_TOL = 2e-2


def _load(ref: str) -> Scenario:
    if not FsPath(ref).exists() and ref.removesuffix(".json") in BUNDLED:
        ref = str(bundled_path(ref))
    if not FsPath(ref).exists():
        raise ScenarioError(f"no scenario file {ref!r} (bundled: {', '.join(BUNDLED)})")
    return load_scenario(ref)


def _rate_dir(r: float) -> str:
    return f"rs_{r:g}"


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    params = scenario.params
    if args.schedule:
        params = replace(params, schedule=args.schedule)
    scenario = replace(scenario, params=params)
    if args.rs is not None:
        variants = [scenario.with_rate(r) for r in args.rs]
    else:
        variants = scenario.variants()
    split = args.rs is not None or bool(scenario.rate_variants)
    out = FsPath(args.out)
    status = EXIT_OK
    for sc in variants:
        target = out / _rate_dir(sc.rate_variants[0]) if split else out
        trace = run(sc, warm_start=False if args.cold_start else None)
        emit_csv(trace, sc, target)
        if not args.no_charts:
            emit_charts(trace, sc, target)
        failed = sorted({r.period for r in trace if not r.converged})
        for rec in trace[:: sc.T_update]:
            x = " ".join(f"{v:.4g}" for v in rec.x)
            tag = "ok" if rec.converged else (rec.error or "not converged")
            print(f"{target.name} period {rec.period}: x = [{x}] U = {rec.primal:.6g} "
                  f"iters = {rec.iterations} {tag}")
        if failed:
            status = EXIT_NO_CONVERGENCE
    return status


def cmd_verify(args) -> int:
    scenario = _load(args.scenario)
    try:
        check_size(len(scenario.flows), len(scenario.paths), len(scenario.network))
    except TooLarge as exc:
        print(f"oracle unavailable: {exc}")
        return EXIT_INVALID
    status = EXIT_OK
    for sc in scenario.variants():
        for res in solve_periods(sc):
            if res.solution is None:
                print(f"period {res.period}: solver failed: {res.error}")
                return EXIT_NO_CONVERGENCE
            try:
                ref = brute_force(res.problem, sc.params, resolution=args.resolution)
            except (TooLarge, NoFeasiblePoint) as exc:
                print(f"period {res.period}: oracle unavailable: {exc}")
                return EXIT_INVALID
            d = res.solution.diagnostics
            rel = abs(d.primal_objective - ref.objective) / max(abs(ref.objective), 1e-12)
            gap = abs(d.gap) / max(abs(d.primal_objective), 1e-12) if d.gap is not None else np.inf
            ok = rel <= OBJECTIVE_TOL and gap <= GAP_TOL and d.converged
            print(f"period {res.period}: solver U = {d.primal_objective:.6g} oracle U = {ref.objective:.6g} "
                  f"rel err = {rel:.2e} rel gap = {gap:.2e} {'PASS' if ok else 'FAIL'}")
            if not d.converged:
                status = max(status, EXIT_NO_CONVERGENCE)
            elif not ok and status == EXIT_OK:
                status = EXIT_MISMATCH
    return status


def cmd_inspect(args) -> int:
    sc = _load(args.scenario)
    net = sc.network
    print(f"scenario {sc.name}: {len(net.nodes)} nodes, {len(net)} links, {len(sc.paths)} paths, "
          f"{sc.n_periods} periods of {sc.T_update} slots")
    for i, link in enumerate(net.links):
        print(f"  {net.label(i)} {link.src}->{link.dst} c={link.capacity:g}")
    cg = sc.conflict_graph()
    edges = ", ".join(f"{net.label(i)}-{net.label(j)}" for i, j in sorted(cg.edges)) or "none"
    print(f"conflict graph ({sc.interference}): {edges}")
    sets = enumerate_independent_sets(cg)
    print(f"independent sets ({len(sets)}):")
    for s in sets:
        print("  {" + ", ".join(net.label(i) for i in s) + "}")
    region = CapacityRegion.from_sets(sets, net.capacities)
    print(f"capacity region vertices: {len(region)}")
    state = None
    for p, row in enumerate(sc.trust_rows, start=1):
        state = TrustState.initial(row, sc.alpha) if state is None else ewma_update(state, row)
        print(f"period {p} trust: " + " ".join(f"{n}={v:.4g}" for n, v in state.values.items()))
        for f in sc.flows:
            T = trust_incidence(state, f, net)
            print(f"  flow {f.name} trust incidence (paths x links):")
            for k, path in enumerate(f.paths):
                print(f"    {path.name}: " + " ".join(f"{v:.4g}" for v in T[k]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trustnum", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve every period and write traces and charts")
    r.add_argument("scenario", help="scenario JSON file or bundled name")
    r.add_argument("--out", required=True)
    r.add_argument("--schedule", choices=("exact", "greedy"))
    r.add_argument("--cold-start", action="store_true", help="reset prices at every period")
    r.add_argument("--rs", type=float, action="append", help="source rate cap in kbps (repeatable)")
    r.add_argument("--no-charts", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="compare the solver with the brute-force oracle")
    v.add_argument("scenario")
    v.add_argument("--resolution", type=float, default=0.01)
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("inspect", help="print conflict graph, independent sets and trust matrices")
    i.add_argument("scenario")
    i.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrustNumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
