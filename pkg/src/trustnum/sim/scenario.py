"""Scenario files: parsing, validation and the bundled fixtures."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path as FsPath

import jsonschema

from ..errors import ParseError, TopologyError, ValidationError
from ..interference import ConflictGraph, build_conflict_graph
from ..optimizer import SolverParams
from ..topology import Flow, Network, Path, validate_path

BUNDLED = ("paper_fig5", "tiny_single_link", "tiny_two_path", "tiny_conflict")


@dataclass(frozen=True)
class Scenario:
    name: str
    network: Network
    flows: tuple[Flow, ...]
    trust_rows: tuple[dict, ...]
    alpha: float
    T: int
    T_update: int
    params: SolverParams
    interference: str = "node-exclusive"
    k: int = 0
    conflicts: tuple = ()
    rate_variants: tuple[float, ...] = ()
    warm_start: bool = True
    # per-flow threshold as a fraction of r_max (None: absolute r_thres kept)
    thres_ratios: tuple = field(default=(), repr=False)

    @property
    def n_periods(self) -> int:
        return self.T // self.T_update

    @property
    def paths(self) -> list[Path]:
        return [p for f in self.flows for p in f.paths]

    def conflict_graph(self) -> ConflictGraph:
        return build_conflict_graph(self.network, self.interference, self.k, self.conflicts)

    def with_rate(self, r_max: float) -> "Scenario":
        flows = []
        for f, ratio in zip(self.flows, self.thres_ratios):
            thres = f.r_thres if ratio is None else ratio * r_max
            flows.append(replace(f, r_max=float(r_max), r_thres=min(thres, float(r_max))))
        return replace(self, flows=tuple(flows), rate_variants=(float(r_max),))

    def variants(self) -> list["Scenario"]:
        if not self.rate_variants:
            return [self]
        return [self.with_rate(r) for r in self.rate_variants]


def _schema():
    text = resources.files("trustnum").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def bundled_path(name: str) -> FsPath:
    """Filesystem path of a bundled scenario (``paper_fig5`` and the tiny oracle instances)."""
    if name.endswith(".json"):
        name = name[:-5]
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}")
    return FsPath(str(resources.files("trustnum").joinpath(f"scenarios/{name}.json")))


def load_scenario(path) -> Scenario:
    """Read and validate a scenario JSON file.

    Raises ``ParseError`` for unreadable JSON and ``ValidationError`` naming
    the offending field for anything structurally or semantically wrong.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_scenario(doc, name=FsPath(path).stem)


def parse_scenario(doc: dict, name: str = "scenario") -> Scenario:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(where, exc.message) from None

    nodes = doc["nodes"]
    try:
        network = Network.from_triples(nodes, [(l["src"], l["dst"], l["capacity"]) for l in doc["links"]])
    except TopologyError as exc:
        raise ValidationError("links", str(exc)) from None

    flows, ratios = [], []
    for i, fd in enumerate(doc["flows"]):
        where = f"flows/{i}"
        if "r_thres" in fd and "r_thres_ratio" in fd:
            raise ValidationError(where, "give r_thres or r_thres_ratio, not both")
        ratio = fd.get("r_thres_ratio")
        r_thres = ratio * fd["r_max"] if ratio is not None else fd.get("r_thres", 0.0)
        paths = [Path(tuple(tuple(l) for l in p["links"]), name=p["name"]) for p in fd["paths"]]
        try:
            flow = Flow(fd["source"], fd["destination"], tuple(paths), float(fd["r_max"]), float(r_thres),
                        float(fd["d_max"]), fd.get("name", fd["source"]))
            for j, p in enumerate(paths):
                try:
                    validate_path(network, p, flow)
                except TopologyError as exc:
                    raise ValidationError(f"{where}/paths/{j}", f"{type(exc).__name__}: {exc}") from None
        except TopologyError as exc:
            raise ValidationError(where, f"{type(exc).__name__}: {exc}") from None
        flows.append(flow)
        ratios.append(ratio)
    names = [p.name for f in flows for p in f.paths]
    if len(set(names)) != len(names):
        raise ValidationError("flows", "path names must be unique")

    timing = doc["timing"]
    T, T_update = timing["T"], timing["T_update"]
    if T % T_update:
        raise ValidationError("timing/T_update", f"T={T} is not a multiple of T_update={T_update}")
    n_periods = T // T_update
    rows = doc["trust"]["schedule"]
    if len(rows) != n_periods:
        raise ValidationError("trust/schedule", f"expected {n_periods} rows (T / T_update), got {len(rows)}")
    trust_rows = []
    for r, row in enumerate(rows):
        if len(row) != len(nodes):
            raise ValidationError(f"trust/schedule/{r}", f"expected {len(nodes)} values, one per node")
        for c, v in enumerate(row):
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"trust/schedule/{r}/{c}", f"trust {v} outside [0, 1]")
        trust_rows.append(dict(zip(nodes, (float(v) for v in row))))

    inter = doc.get("interference", {"model": "node-exclusive"})
    conflicts = tuple(tuple(tuple(l) for l in pair) for pair in inter.get("conflicts", ()))
    if inter["model"] == "explicit":
        for pair in conflicts:
            for key in pair:
                if not network.has_link(key):
                    raise ValidationError("interference/conflicts", f"unknown link {key}")

    solver = dict(doc.get("solver", {}))
    solver["schedule"] = doc.get("schedule_policy", "exact")
    solver["delay_scale"] = doc.get("delay_scale", 1.0)
    try:
        params = SolverParams(**solver)
    except ValueError as exc:
        raise ValidationError("solver", str(exc)) from None

    return Scenario(
        name=doc.get("name", name),
        network=network,
        flows=tuple(flows),
        trust_rows=tuple(trust_rows),
        alpha=float(doc["trust"]["alpha"]),
        T=T,
        T_update=T_update,
        params=params,
        interference=inter["model"],
        k=inter.get("k", 0),
        conflicts=conflicts,
        rate_variants=tuple(float(r) for r in doc.get("rate_variants", ())),
        warm_start=doc.get("warm_start", True),
        thres_ratios=tuple(ratios),
    )
