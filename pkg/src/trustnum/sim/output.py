"""CSV traces and static SVG charts of a run."""

from __future__ import annotations

import csv
import os
import re
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from ..errors import IoError
from .runner import TraceRecord
from .scenario import Scenario

FMT = "%.6g"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FMT % float(v)


def columns(scenario: Scenario) -> dict[str, list[str]]:
    """Header of each CSV file, in output order."""
    paths = [p.name for p in scenario.paths]
    links = [scenario.network.label(i) for i in range(len(scenario.network))]
    head = ["slot", "period"]
    return {
        "rates.csv": head + [f"x_{p}" for p in paths],
        "margins.csv": head + [f"sigma_{l}" for l in links],
        "prices.csv": head + [f"lambda_{l}" for l in links] + [f"chat_{l}" for l in links]
                      + [f"mu_{p}" for p in paths],
        "objective.csv": head + ["primal", "dual", "gap", "iterations", "converged"],
    }


def _rows(rec: TraceRecord) -> dict[str, list]:
    head = [rec.slot, rec.period]
    return {
        "rates.csv": head + list(rec.x),
        "margins.csv": head + list(rec.sigma),
        "prices.csv": head + list(rec.lam) + list(rec.c_hat) + list(rec.mu),
        "objective.csv": head + [rec.primal, rec.dual, rec.gap, rec.iterations, rec.converged],
    }


def emit_csv(traces: Sequence[TraceRecord], scenario: Scenario, out_dir) -> list[FsPath]:
    """Write ``rates.csv``, ``margins.csv``, ``prices.csv`` and ``objective.csv`` into ``out_dir``."""
    if not traces:
        raise ValueError("empty trace: nothing to write")
    out = FsPath(out_dir)
    heads = columns(scenario)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        tables = {name: [h] for name, h in heads.items()}
        for rec in traces:
            for name, row in _rows(rec).items():
                tables[name].append([_fmt(v) if i >= 2 else str(v) for i, v in enumerate(row)])
        for name, table in tables.items():
            target = out / name
            with open(target, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh, lineterminator="\n").writerows(table)
            written.append(target)
    except OSError as exc:
        raise IoError(f"cannot write traces to {out}: {exc}") from exc
    return written


def emit_charts(traces: Sequence[TraceRecord], scenario: Scenario, out_dir) -> list[FsPath]:
    """Rate-per-path and margin-per-link charts as ``rates.svg`` and ``margins.svg``.

    Series follow the CSV column order. A single-slot trace is drawn with
    markers only. Output bytes are reproducible: fixed hash salt, no date.
    """
    if not traces:
        raise ValueError("empty trace: nothing to draw")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    heads = columns(scenario)
    slots = np.array([r.slot for r in traces])
    charts = [
        ("rates.svg", "Average traffic rate per path", "rate (kbps)",
         heads["rates.csv"][2:], np.array([r.x for r in traces])),
        ("margins.svg", "Link capacity margin", "margin (kbps)",
         heads["margins.csv"][2:], np.array([r.sigma for r in traces])),
    ]
    out = FsPath(out_dir)
    written = []
    style = {"marker": "o", "linestyle": "none"} if len(traces) == 1 else {}
    with matplotlib.rc_context({"svg.hashsalt": "trustnum", "svg.fonttype": "path"}):
        for name, title, ylabel, labels, Y in charts:
            fig, ax = plt.subplots(figsize=(7, 4))
            for j, label in enumerate(labels):
                (line,) = ax.plot(slots, Y[:, j], label=label.split("_", 1)[1], **style)
                line.set_gid(f"series-{label}")
            ax.set_xlabel("time slot")
            ax.set_ylabel(ylabel)
            ax.set_title(title)
            ax.legend(fontsize="small", ncol=2 if len(labels) > 6 else 1)
            fig.tight_layout()
            target = out / name
            try:
                out.mkdir(parents=True, exist_ok=True)
                fig.savefig(target, format="svg", metadata={"Date": None})
            except OSError as exc:
                raise IoError(f"cannot write chart {target}: {exc}") from exc
            finally:
                plt.close(fig)
            written.append(target)
    return written


def series_labels(path: os.PathLike) -> list[str]:
    """Column names of the series in a chart written by ``emit_charts``, in drawing order."""
    text = FsPath(path).read_text(encoding="utf-8")
    return re.findall(r'id="series-([^"]+)"', text)
