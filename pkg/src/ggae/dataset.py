"""Bilateral trade CSV ingestion and trade-graph construction."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import ConfigError, DomainError, EmptyGraphError, EmptyInputError, SchemaError

DEFAULT_SCHEMA: dict[str, str] = {
    "exporter": "iso3_o",
    "importer": "iso3_d",
    "gdp_exporter": "gdp_o",
    "gdp_importer": "gdp_d",
    "distance": "dist",
    "flow": "tradeflow",
}
# roles used only when the column exists in the header
OPTIONAL_ROLES: dict[str, str] = {
    "year": "year",
    "flow_mirror": "tradeflow_imp",
}
REQUIRED_ROLES = tuple(DEFAULT_SCHEMA)


@dataclass(frozen=True)
class TradeRecord:
    """One exporter -> importer observation. Missing numeric cells are ``None``."""

    exporter: str
    importer: str
    gdp_exporter: float | None
    gdp_importer: float | None
    distance: float | None
    flow: float | None
    year: int | None = None


@dataclass
class TradeGraph:
    """Directed trade graph with log-scaled features.

    ``edge_distance`` and ``edge_amount`` are indexed by edge position, so
    ``edge_amount[k]`` is the log flow of ``edges[k]``.
    """

    nodes: list[str]
    node_features: np.ndarray
    edges: list[tuple[int, int]]
    edge_distance: np.ndarray
    edge_amount: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        if self.node_features.ndim == 1:
            self.node_features = self.node_features.reshape(-1, 1)
        self.edge_distance = np.asarray(self.edge_distance, dtype=np.float64)
        self.edge_amount = np.asarray(self.edge_amount, dtype=np.float64)
        self.edges = [(int(u), int(v)) for u, v in self.edges]
        n = len(self.nodes)
        if self.node_features.shape[0] != n:
            raise ValueError("node_features row count must equal number of nodes")
        if len(self.edge_distance) != len(self.edges) or len(self.edge_amount) != len(self.edges):
            raise ValueError("every edge needs a distance and an amount")
        for u, v in self.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) has an endpoint outside 0..{n - 1}")

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def src(self) -> np.ndarray:
        return self._endpoints[0]

    @property
    def dst(self) -> np.ndarray:
        return self._endpoints[1]

    @property
    def _endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_endpoint_cache")
        if cached is None or cached[0] is not self.edges:
            arr = np.array(self.edges, dtype=np.intp).reshape(-1, 2)
            cached = (self.edges, arr[:, 0].copy(), arr[:, 1].copy())
            self.__dict__["_endpoint_cache"] = cached
        return cached[1], cached[2]

    def to_json(self) -> str:
        """Canonical JSON form: ``{nodes:[{code, log_gdp}], edges:[{src, dst, log_dist, log_flow}]}``."""
        doc = {
            "nodes": [
                {"code": c, "log_gdp": float(self.node_features[i, 0])}
                for i, c in enumerate(self.nodes)
            ],
            "edges": [
                {
                    "src": self.nodes[u],
                    "dst": self.nodes[v],
                    "log_dist": float(self.edge_distance[k]),
                    "log_flow": float(self.edge_amount[k]),
                }
                for k, (u, v) in enumerate(self.edges)
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TradeGraph":
        doc = json.loads(text)
        try:
            nodes = [n["code"] for n in doc["nodes"]]
            feats = [[float(n["log_gdp"])] for n in doc["nodes"]]
            pos = {c: i for i, c in enumerate(nodes)}
            edges = [(pos[e["src"]], pos[e["dst"]]) for e in doc["edges"]]
            dist = [float(e["log_dist"]) for e in doc["edges"]]
            amt = [float(e["log_flow"]) for e in doc["edges"]]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed graph file: {exc}") from exc
        if not nodes:
            raise EmptyGraphError("graph file has no nodes")
        return cls(nodes, np.array(feats).reshape(-1, 1), edges, dist, amt)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EdgeSplit:
    train_edges: list[int]
    test_edges: list[int]
    seed: int


def _parse_float(cell: str | None) -> float | None:
    if cell is None:
        return None
    cell = cell.strip()
    if not cell:
        return None
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _parse_int(cell: str | None) -> int | None:
    value = _parse_float(cell)
    return None if value is None else int(value)


def parse_gravity_csv(
    source: IO[bytes] | IO[str], schema: Mapping[str, str] | None = None
) -> list[TradeRecord]:
    """Read a CEPII-style CSV into records.

    Unparseable numeric cells become ``None``. ``schema`` maps roles
    (``exporter``, ``importer``, ``gdp_exporter``, ``gdp_importer``,
    ``distance``, ``flow`` and optionally ``year``, ``flow_mirror``) to
    column names; unspecified roles take CEPII defaults.
    """
    raw = source.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw
    if not text.strip():
        raise EmptyInputError("empty input: no header row")
    cols = {**DEFAULT_SCHEMA, **OPTIONAL_ROLES, **(schema or {})}
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    for role in REQUIRED_ROLES:
        if cols[role] not in header:
            raise SchemaError(f"missing required column '{cols[role]}' (role {role})")
    year_col = cols["year"] if cols["year"] in header else None
    mirror_col = cols["flow_mirror"] if cols["flow_mirror"] in header else None

    records = []
    for row in reader:
        flow = _parse_float(row.get(cols["flow"]))
        if flow is None and mirror_col is not None:
            flow = _parse_float(row.get(mirror_col))
        records.append(
            TradeRecord(
                exporter=(row.get(cols["exporter"]) or "").strip(),
                importer=(row.get(cols["importer"]) or "").strip(),
                gdp_exporter=_parse_float(row.get(cols["gdp_exporter"])),
                gdp_importer=_parse_float(row.get(cols["gdp_importer"])),
                distance=_parse_float(row.get(cols["distance"])),
                flow=flow,
                year=_parse_int(row.get(year_col)) if year_col else None,
            )
        )
    return records


def drop_reason(rec: TradeRecord) -> str | None:
    """Why ``rec`` would be filtered out, or ``None`` if it is kept."""
    if not rec.exporter or not rec.importer:
        return "missing_country"
    if rec.exporter == rec.importer:
        return "self_pair"
    if rec.gdp_exporter is None or rec.gdp_importer is None:
        return "missing_gdp"
    if rec.gdp_exporter <= 0 or rec.gdp_importer <= 0:
        return "nonpositive_gdp"
    if rec.distance is None:
        return "missing_distance"
    if rec.distance <= 0:
        return "nonpositive_distance"
    if rec.flow is None:
        return "missing_flow"
    if rec.flow <= 0:
        return "nonpositive_flow"
    return None


def filter_complete(records: Iterable[TradeRecord]) -> list[TradeRecord]:
    return [r for r in records if drop_reason(r) is None]


def drop_summary(records: Iterable[TradeRecord]) -> dict[str, int]:
    counts = Counter(drop_reason(r) for r in records)
    counts.pop(None, None)
    return dict(sorted(counts.items()))


def log_transform(x: float) -> float:
    if not x > 0:
        raise DomainError(f"log undefined for {x}")
    return math.log(x)


def _year_key(rec: TradeRecord) -> float:
    return -math.inf if rec.year is None else rec.year


def build_graph(records: Iterable[TradeRecord]) -> TradeGraph:
    """Build the directed trade graph from complete records.

    Nodes are sorted by country code and edges by (exporter, importer).
    Repeated pairs and conflicting GDPs resolve to the latest year; on a
    year tie the later row wins.
    """
    records = list(records)
    if not records:
        raise EmptyGraphError("no records to build a graph from")

    gdp: dict[str, tuple[float, float]] = {}
    pairs: dict[tuple[str, str], TradeRecord] = {}
    for rec in records:
        if drop_reason(rec) is not None:
            raise DomainError(f"incomplete record {rec}; run filter_complete first")
        key = _year_key(rec)
        for code, value in ((rec.exporter, rec.gdp_exporter), (rec.importer, rec.gdp_importer)):
            if code not in gdp or key >= gdp[code][0]:
                gdp[code] = (key, value)
        pair = (rec.exporter, rec.importer)
        if pair not in pairs or key >= _year_key(pairs[pair]):
            pairs[pair] = rec

    nodes = sorted(gdp)
    pos = {c: i for i, c in enumerate(nodes)}
    feats = np.array([[log_transform(gdp[c][1])] for c in nodes])
    ordered = sorted(pairs)
    edges = [(pos[a], pos[b]) for a, b in ordered]
    dist = [log_transform(pairs[p].distance) for p in ordered]
    amt = [log_transform(pairs[p].flow) for p in ordered]
    return TradeGraph(nodes, feats, edges, dist, amt)


def split_edges(graph: TradeGraph, train_ratio: float, seed: int) -> EdgeSplit:
    """Seeded random train/test partition of edge indices.

    The train side holds the first ``round(train_ratio * |E|)`` edges of a
    uniform permutation.
    """
    if not 0.0 < train_ratio < 1.0:
        raise ConfigError(f"train_ratio must lie in (0, 1), got {train_ratio}")
    n = graph.num_edges
    if n < 2:
        raise EmptyGraphError(f"need at least 2 edges to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    # half-up rounding; keep both sides non-empty
    n_train = min(max(int(math.floor(train_ratio * n + 0.5)), 1), n - 1)
    return EdgeSplit(
        train_edges=sorted(int(i) for i in perm[:n_train]),
        test_edges=sorted(int(i) for i in perm[n_train:]),
        seed=seed,
    )


def emit_loglog_scatter(graph: TradeGraph) -> list[tuple[float, float]]:
    """(log GDP_u + log GDP_v - log dist, log flow) for each edge in order."""
    if graph.num_edges == 0:
        raise EmptyGraphError("graph has no edges")
    x = graph.node_features[:, 0]
    term = x[graph.src] + x[graph.dst] - graph.edge_distance
    return [(float(t), float(a)) for t, a in zip(term, graph.edge_amount)]


def write_scatter_csv(rows: Iterable[tuple[float, float]], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["gravity_term", "log_flow"])
    for term, flow in rows:
        writer.writerow([f"{term:.9g}", f"{flow:.9g}"])
