"""Node trust bookkeeping and the trust-weighted path/link matrices built from it."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValueOutOfRange
from .topology import Flow, Network, Path


def _check_unit(values: Mapping[str, float]):
    for node, v in values.items():
        if not (0.0 <= v <= 1.0):
            raise ValueOutOfRange(f"trust of node {node!r} is {v}, outside [0, 1]")


@dataclass(frozen=True)
class TrustState:
    """Current trust estimate per node, blended over update periods with weight ``alpha``."""

    values: Mapping[str, float]
    alpha: float
    period_index: int = 0
    history: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueOutOfRange(f"alpha={self.alpha} outside [0, 1]")
        _check_unit(self.values)
        object.__setattr__(self, "values", dict(self.values))

    @classmethod
    def initial(cls, samples: Mapping[str, float], alpha: float) -> "TrustState":
        # No history yet: the first samples are taken as-is.
        _check_unit(samples)
        values = dict(samples)
        return cls(values, alpha, period_index=1, history=(dict(values),))

    def __getitem__(self, node: str) -> float:
        return self.values[node]


def ewma_update(state: TrustState, fresh: Mapping[str, float]) -> TrustState:
    """Blend fresh samples into ``state``; nodes missing from ``fresh`` keep their value."""
    _check_unit(fresh)
    a = state.alpha
    values = dict(state.values)
    for node, new in fresh.items():
        values[node] = (1 - a) * values.get(node, new) + a * new
    # guard against 1 + eps from rounding
    values = {n: v if 0 <= v <= 1 else min(1, max(0, v)) for n, v in values.items()}
    return TrustState(values, a, state.period_index + 1, state.history + (dict(values),))


def path_trust(state: TrustState | Mapping[str, float], path: Path) -> float:
    """Product of the trust of every receiving node on ``path`` (source excluded)."""
    values = state.values if isinstance(state, TrustState) else state
    t = 1.0
    for node in path.receivers:
        t *= values[node]
    return t


def trust_incidence(state: TrustState | Mapping[str, float], flow: Flow, network: Network) -> np.ndarray:
    """Paths-by-links matrix of sub-path trust; zero where a link is off the path.

    Entry (k, l) is the product of receiver trust along path k up to and
    including link l, i.e. the fraction of the path's injected rate still
    being carried on l.
    """
    values = state.values if isinstance(state, TrustState) else state
    T = np.zeros((flow.n_paths, len(network)))
    for k, path in enumerate(flow.paths):
        running = 1.0
        for key in path.links:
            running *= values[key[1]]
            T[k, network.index(key)] = running
    return T


def path_trust_vector(T: np.ndarray, flow: Flow, network: Network) -> np.ndarray:
    """Aggregate trust per path, read off the final-link column of ``T``."""
    return np.array([T[k, network.index(p.links[-1])] for k, p in enumerate(flow.paths)])


def reliability_lhs(trust_row: Sequence[float], rates: Sequence[float]) -> float:
    """Expected delivered rate: sum over paths of path trust times path rate."""
    t = np.asarray(trust_row, dtype=float)
    x = np.asarray(rates, dtype=float)
    if t.shape != x.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {x.shape}")
    return float(t @ x)
