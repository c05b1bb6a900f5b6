"""Multihop network, flows, explicit multipath route sets and routing matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EndpointMismatch,
    LinkNotOnPath,
    LoopDetected,
    NonContiguous,
    TopologyError,
    UnknownLink,
)

LinkKey = tuple[str, str]


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    capacity: float

    @property
    def key(self) -> LinkKey:
        return (self.src, self.dst)


@dataclass(frozen=True)
class Network:
    """Directed wireless network.

    The position of a link in ``links`` is its canonical column index in
    every matrix and output file.
    """

    nodes: tuple[str, ...]
    links: tuple[Link, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        if len(set(self.nodes)) != len(self.nodes):
            raise TopologyError("duplicate node identifiers")
        node_set = set(self.nodes)
        index = {}
        for i, link in enumerate(self.links):
            if link.src == link.dst:
                raise TopologyError(f"link {link.key} is a self-loop")
            if link.src not in node_set or link.dst not in node_set:
                raise TopologyError(f"link {link.key} references an unknown node")
            if not link.capacity > 0:
                raise TopologyError(f"link {link.key} has non-positive capacity")
            if link.key in index:
                raise TopologyError(f"duplicate link {link.key}")
            index[link.key] = i
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_triples(cls, nodes: Iterable[str], triples: Iterable[tuple[str, str, float]]) -> "Network":
        return cls(tuple(nodes), tuple(Link(s, d, float(c)) for s, d, c in triples))

    def __len__(self):
        return len(self.links)

    def index(self, key: LinkKey) -> int:
        try:
            return self._index[tuple(key)]
        except KeyError:
            raise UnknownLink(f"link {tuple(key)} not in network") from None

    def has_link(self, key: LinkKey) -> bool:
        return tuple(key) in self._index

    @property
    def capacities(self) -> np.ndarray:
        return np.array([link.capacity for link in self.links], dtype=float)

    def label(self, i: int) -> str:
        return f"l{i + 1}"


@dataclass(frozen=True)
class Path:
    links: tuple[LinkKey, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(tuple(l) for l in self.links))

    def __len__(self):
        return len(self.links)

    def __iter__(self):
        return iter(self.links)

    def __contains__(self, key):
        return tuple(key) in self.links

    @property
    def nodes(self) -> tuple[str, ...]:
        if not self.links:
            return ()
        return (self.links[0][0],) + tuple(dst for _, dst in self.links)

    @property
    def receivers(self) -> tuple[str, ...]:
        return tuple(dst for _, dst in self.links)


@dataclass(frozen=True)
class Flow:
    source: str
    destination: str
    paths: tuple[Path, ...]
    r_max: float
    r_thres: float = 0.0
    d_max: float = 1.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not (0 <= self.r_thres <= self.r_max):
            raise TopologyError(f"flow {self.name!r}: need 0 <= r_thres <= r_max")
        if not self.d_max > 0:
            raise TopologyError(f"flow {self.name!r}: d_max must be positive")
        for p in self.paths:
            if p.links and (p.nodes[0] != self.source or p.nodes[-1] != self.destination):
                raise EndpointMismatch(
                    f"path {p.name or p.links} does not run {self.source} -> {self.destination}"
                )

    @property
    def n_paths(self) -> int:
        return len(self.paths)


def validate_path(network: Network, path: Path, flow: Flow | None = None) -> Path:
    """Return ``path`` unchanged if it is a usable route, otherwise raise."""
    if not path.links:
        raise NonContiguous("empty path")
    for key in path.links:
        if not network.has_link(key):
            raise UnknownLink(f"link {key} not in network")
    for (_, a), (b, _) in zip(path.links, path.links[1:]):
        if a != b:
            raise NonContiguous(f"gap between ...->{a} and {b}->...")
    nodes = path.nodes
    if len(set(nodes)) != len(nodes):
        raise LoopDetected(f"node repeated along {nodes}")
    if flow is not None and (nodes[0] != flow.source or nodes[-1] != flow.destination):
        raise EndpointMismatch(f"path {nodes} does not run {flow.source} -> {flow.destination}")
    return path


def routing_matrix(flow: Flow, network: Network) -> np.ndarray:
    """0/1 matrix with one row per path of ``flow`` and one column per link."""
    R = np.zeros((flow.n_paths, len(network)))
    for k, path in enumerate(flow.paths):
        for key in path.links:
            R[k, network.index(key)] = 1.0
    return R


def subpath(path: Path, link: LinkKey) -> Path:
    """Prefix of ``path`` ending with ``link`` (inclusive)."""
    link = tuple(link)
    try:
        end = path.links.index(link)
    except ValueError:
        raise LinkNotOnPath(f"{link} not on path {path.links}") from None
    return Path(path.links[: end + 1], name=path.name)


def path_from_nodes(nodes: Sequence[str], name: str = "") -> Path:
    return Path(tuple(zip(nodes[:-1], nodes[1:])), name=name)
