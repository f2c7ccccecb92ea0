"""Training, evaluation and the five-pattern comparison protocol."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import EdgeSplit, TradeGraph, split_edges
from .decoder import (
    GgaeLinearParams,
    MlpParams,
    ggae_decode_linear,
    ggae_edge_embedding_log,
    surrogate_decode,
)
from .encoder import GcnLayerParams, gcn_forward, identity_encode, init_gcn_layers, normalize_adjacency
from .errors import ConfigError, ContractError, DivergenceError


class Pattern(str, enum.Enum):
    P1_identity_ggae = "P1_identity_ggae"
    P2_gcn1_ggae = "P2_gcn1_ggae"
    P3_gcn1_mlp = "P3_gcn1_mlp"
    P4_gcn2_ggae = "P4_gcn2_ggae"
    P5_gcn2_mlp = "P5_gcn2_mlp"

    @property
    def gcn_layers(self) -> int:
        return {"P1": 0, "P2": 1, "P3": 1, "P4": 2, "P5": 2}[self.value[:2]]

    @property
    def decoder(self) -> str:
        return "mlp" if self.value.endswith("mlp") else "ggae"

    @property
    def number(self) -> int:
        return int(self.value[1])

    @classmethod
    def parse(cls, text: str) -> "Pattern":
        for p in cls:
            if text in (p.value, p.value[:2], str(p.number)):
                return p
        raise ConfigError(f"unknown pattern {text!r}")


PATTERNS = tuple(Pattern)

# Table-1 style descriptions per pattern: (encoder, decoder)
_TABLE_LABELS = {
    "ggae": "W(H_u + H_v - E_uv) + B",
    "mlp": "MLP([H_u || H_v || E_uv])",
}
_ENCODER_LABELS = {0: "identity", 1: "GCN(1)", 2: "GCN(2)"}


@dataclass(frozen=True)
class ModelConfig:
    pattern: Pattern = Pattern.P1_identity_ggae
    learning_rate: float = 0.01
    epochs: int = 1000
    train_ratio: float = 0.66
    hidden_dim: int = 16
    mlp_widths: tuple[int, ...] = (32, 16)
    seed: int = 0
    # exclude test edges from message passing
    train_only_adjacency: bool = True
    # subtract fixed feature/target means inside the model
    center: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "pattern", Pattern(self.pattern))
        object.__setattr__(self, "mlp_widths", tuple(int(w) for w in self.mlp_widths))
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.train_ratio < 1:
            raise ConfigError(f"train_ratio must lie in (0, 1), got {self.train_ratio}")
        if self.hidden_dim <= 0:
            raise ConfigError(f"hidden_dim must be positive, got {self.hidden_dim}")
        if any(w <= 0 for w in self.mlp_widths):
            raise ConfigError(f"mlp_widths must be positive, got {self.mlp_widths}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pattern"] = self.pattern.value
        d["mlp_widths"] = list(self.mlp_widths)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Centering:
    """Constant shifts applied around the trainable model.

    Node features lose ``node``, edge features lose ``edge`` and ``target``
    is added back to every prediction. For the identity encoder with the
    linear decoder this only reparametrizes the intercept.
    """

    node: float = 0.0
    edge: float = 0.0
    target: float = 0.0

    @classmethod
    def fit(cls, graph: TradeGraph, train_edges) -> "Centering":
        idx = np.asarray(train_edges, dtype=np.intp)
        return cls(
            node=float(graph.node_features.mean()),
            edge=float(graph.edge_distance[idx].mean()),
            target=float(graph.edge_amount[idx].mean()),
        )


@dataclass
class EdgeModel:
    """Encoder + decoder pair bound to one graph."""

    pattern: Pattern
    norm_adj: np.ndarray
    features: Tensor
    gcn: list[GcnLayerParams]
    decoder: GgaeLinearParams | MlpParams
    centering: Centering = Centering()

    def parameters(self) -> list[Tensor]:
        return [layer.weight for layer in self.gcn] + self.decoder.parameters()

    def embed(self) -> Tensor:
        if not self.gcn:
            return identity_encode(self.features)
        return gcn_forward(self.norm_adj, self.features, self.gcn)

    def predict(self, graph: TradeGraph, edge_index) -> Tensor:
        """Predicted log flow for the given edge indices, ``n x 1``."""
        idx = np.asarray(edge_index, dtype=np.intp)
        h = self.embed()
        h_u = ad.take_rows(h, graph.src[idx])
        h_v = ad.take_rows(h, graph.dst[idx])
        e = ad.tensor(graph.edge_distance[idx].reshape(-1, 1) - self.centering.edge)
        if self.pattern.decoder == "ggae":
            out = ggae_decode_linear(ggae_edge_embedding_log(h_u, h_v, e), self.decoder)
        else:
            out = surrogate_decode(h_u, h_v, e, self.decoder)
        if self.centering.target == 0.0:
            return out
        return ad.add(out, ad.tensor(np.full((len(idx), 1), self.centering.target)))


def build_model(graph: TradeGraph, split: EdgeSplit, config: ModelConfig) -> EdgeModel:
    rng = np.random.default_rng(config.seed)
    pattern = config.pattern
    adj_edges = split.train_edges if config.train_only_adjacency else None
    norm_adj = normalize_adjacency(graph, adj_edges)
    centering = Centering.fit(graph, split.train_edges) if config.center else Centering()
    features = ad.tensor(graph.node_features - centering.node)
    d = features.cols
    gcn = init_gcn_layers(d, config.hidden_dim, pattern.gcn_layers, rng) if pattern.gcn_layers else []
    h = config.hidden_dim if gcn else d
    if pattern.decoder == "ggae":
        decoder = GgaeLinearParams.init(h, rng)
    else:
        decoder = MlpParams.init(2 * h + 1, rng, config.mlp_widths)
    return EdgeModel(pattern, norm_adj, features, gcn, decoder, centering)


def _targets(graph: TradeGraph, edge_index) -> Tensor:
    return ad.tensor(graph.edge_amount[np.asarray(edge_index, dtype=np.intp)].reshape(-1, 1))


def train_pattern(
    graph: TradeGraph, split: EdgeSplit, config: ModelConfig
) -> tuple[EdgeModel, list[float]]:
    """Full-batch Adam on MSE over the train edges.

    Returns the trained model and the loss recorded before each update.
    """
    if not split.train_edges or not split.test_edges:
        raise ContractError("both sides of the split must be non-empty")
    model = build_model(graph, split, config)
    params = model.parameters()
    state = ad.AdamState(lr=config.learning_rate)
    target = _targets(graph, split.train_edges)
    history: list[float] = []
    for epoch in range(config.epochs):
        try:
            with ad.Tape() as tape:
                loss = ad.mse_loss(model.predict(graph, split.train_edges), target)
            ad.backward(loss, tape)
            history.append(loss.item())
            ad.adam_step(params, state)
        except DivergenceError as exc:
            raise DivergenceError(str(exc), epoch=epoch) from exc
    return model, history


def evaluate_rmse(model: EdgeModel, graph: TradeGraph, edge_list) -> float:
    """Root mean squared error of predicted vs actual log flow."""
    idx = np.asarray(list(edge_list), dtype=np.intp)
    if idx.size == 0:
        raise ContractError("evaluate_rmse needs at least one edge")
    pred = model.predict(graph, idx).values[:, 0]
    resid = pred - graph.edge_amount[idx]
    return float(np.sqrt(np.mean(resid * resid)))


def gravity_ols(graph: TradeGraph, edge_list=None) -> dict[str, float]:
    """Closed-form least squares of log flow on the single gravity regressor.

    Fits ``log_flow ~ intercept + slope * (x_u + x_v - log_dist)`` via the
    2x2 normal equations and reports the residual RMSE.
    """
    idx = np.arange(graph.num_edges) if edge_list is None else np.asarray(list(edge_list), dtype=np.intp)
    x = graph.node_features[:, 0]
    z = x[graph.src[idx]] + x[graph.dst[idx]] - graph.edge_distance[idx]
    y = graph.edge_amount[idx]
    n = len(z)
    sz, szz, sy, szy = z.sum(), (z * z).sum(), y.sum(), (z * y).sum()
    det = n * szz - sz * sz
    if det <= 0:
        raise ContractError("gravity regressor is constant; slope not identified")
    slope = (n * szy - sz * sy) / det
    intercept = (sy - slope * sz) / n
    resid = y - (intercept + slope * z)
    return {"slope": float(slope), "intercept": float(intercept), "rmse": float(np.sqrt(np.mean(resid**2)))}


@dataclass
class RunResult:
    seed: int
    train_rmse: float | None = None
    test_rmse: float | None = None
    final_loss: float | None = None
    epochs_run: int = 0
    error: str | None = None


@dataclass
class RunReport:
    config: dict
    per_run: list[RunResult]
    aggregate: dict[str, float] | None
    config_hash: str
    dataset_fingerprint: str
    n_runs: int = 0
    base_seed: int = 0

    @property
    def failed(self) -> bool:
        return any(r.error for r in self.per_run)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_runs": self.n_runs,
            "base_seed": self.base_seed,
            "config_hash": self.config_hash,
            "dataset_fingerprint": self.dataset_fingerprint,
            "per_run": [asdict(r) for r in self.per_run],
            "aggregate": self.aggregate,
        }


def _aggregate(results: list[RunResult]) -> dict[str, float] | None:
    vals = [r.test_rmse for r in results if r.error is None]
    if not vals:
        return None
    return {"avg": float(np.mean(vals)), "max": float(max(vals)), "min": float(min(vals))}


def _single_run(graph: TradeGraph, config: ModelConfig, run: int, record_divergence: bool) -> RunResult:
    split = split_edges(graph, config.train_ratio, config.seed)
    try:
        model, history = train_pattern(graph, split, config)
    except DivergenceError as exc:
        if not record_divergence:
            raise DivergenceError(str(exc.args[0]), epoch=exc.epoch, run=run) from exc
        return RunResult(seed=config.seed, epochs_run=exc.epoch or 0, error=str(exc))
    return RunResult(
        seed=config.seed,
        train_rmse=evaluate_rmse(model, graph, split.train_edges),
        test_rmse=evaluate_rmse(model, graph, split.test_edges),
        final_loss=history[-1],
        epochs_run=len(history),
    )


def run_experiment(
    graph: TradeGraph,
    pattern: Pattern | str,
    n_runs: int,
    base_seed: int = 0,
    config: ModelConfig | None = None,
    workers: int = 1,
    record_divergence: bool = False,
) -> RunReport:
    """Train ``pattern`` ``n_runs`` times; run ``i`` uses seed ``base_seed + i``
    for both its edge split and its initialization."""
    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}")
    base = replace(config or ModelConfig(), pattern=Pattern(pattern), seed=base_seed)
    configs = [replace(base, seed=base_seed + i) for i in range(n_runs)]

    def job(i: int) -> RunResult:
        return _single_run(graph, configs[i], i, record_divergence)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(n_runs)))
    else:
        results = [job(i) for i in range(n_runs)]
    return RunReport(
        config=base.to_dict(),
        per_run=results,
        aggregate=_aggregate(results),
        config_hash=base.config_hash(),
        dataset_fingerprint=graph.fingerprint(),
        n_runs=n_runs,
        base_seed=base_seed,
    )


@dataclass
class TableReport:
    rows: list[RunReport]
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    @property
    def failed(self) -> bool:
        return any(r.failed for r in self.rows)

    def to_dict(self) -> dict:
        return {"created_at": self.created_at, "patterns": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        head = ("pattern", "node feature", "edge feature", "encoder", "decoder", "RMSE (avg)", "RMSE (max)", "RMSE (min)")
        lines = []
        for rep in self.rows:
            p = Pattern(rep.config["pattern"])
            agg = rep.aggregate
            nums = ["n/a"] * 3 if agg is None else [f"{agg[k]:.3f}" for k in ("avg", "max", "min")]
            lines.append(
                (f"({p.number})", "log(GDP_u)", "log(dist(u,v))", _ENCODER_LABELS[p.gcn_layers], _TABLE_LABELS[p.decoder], *nums)
            )
        widths = [max(len(str(r[i])) for r in [head, *lines]) for i in range(len(head))]
        fmt = lambda r: " | ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
        rule = "-+-".join("-" * w for w in widths)
        return "\n".join([fmt(head), rule, *map(fmt, lines)]) + "\n"


def reproduce_table(
    graph: TradeGraph,
    n_runs: int,
    base_seed: int = 0,
    config: ModelConfig | None = None,
    workers: int = 1,
    record_divergence: bool = False,
) -> TableReport:
    """All five patterns; run ``i`` of every pattern shares the same split."""
    return TableReport(
        [
            run_experiment(graph, p, n_runs, base_seed, config, workers, record_divergence)
            for p in PATTERNS
        ]
    )


def generate_synthetic_gravity(
    n_countries: int,
    edge_density: float,
    noise_sigma: float,
    seed: int,
    gamma: float = 1.0,
) -> TradeGraph:
    """Random graph whose log flows follow the log-linear gravity law plus noise.

    log GDP ~ N(24, 2^2), log distance ~ N(8, 1) per unordered pair, each
    ordered pair kept with probability ``edge_density``.
    """
    if n_countries < 2:
        raise ConfigError(f"need at least 2 countries, got {n_countries}")
    if not 0 < edge_density <= 1:
        raise ConfigError(f"edge_density must lie in (0, 1], got {edge_density}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    rng = np.random.default_rng(seed)
    n = n_countries
    log_gdp = rng.normal(24.0, 2.0, size=n)
    log_dist = rng.normal(8.0, 1.0, size=(n, n))
    log_dist = np.triu(log_dist, 1) + np.triu(log_dist, 1).T
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    keep = rng.random(len(pairs)) < edge_density
    edges = [p for p, k in zip(pairs, keep) if k]
    if len(edges) < 2:
        # guarantee a trainable graph at tiny densities
        edges = pairs[:2]
    dist = np.array([log_dist[u, v] for u, v in edges])
    noise = rng.normal(0.0, noise_sigma, size=len(edges)) if noise_sigma > 0 else np.zeros(len(edges))
    amount = math.log(gamma) + log_gdp[[u for u, _ in edges]] + log_gdp[[v for _, v in edges]] - dist + noise
    width = len(str(n - 1))
    nodes = [f"C{i:0{width}d}" for i in range(n)]
    return TradeGraph(nodes, log_gdp.reshape(-1, 1), edges, dist, amount)
