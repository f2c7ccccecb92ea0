"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .dataset import (
    DEFAULT_SCHEMA,
    OPTIONAL_ROLES,
    TradeGraph,
    build_graph,
    drop_summary,
    emit_loglog_scatter,
    filter_complete,
    parse_gravity_csv,
    write_scatter_csv,
)
from .errors import ConfigError, DivergenceError, GgaeError
from .experiment import ModelConfig, Pattern, TableReport, generate_synthetic_gravity, reproduce_table, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_schema(text: str | None) -> dict[str, str]:
    """``role=column,...`` or a path to a JSON object."""
    if not text:
        return {}
    path = Path(text)
    if path.suffix == ".json" or path.is_file():
        return json.loads(path.read_text())
    out = {}
    for part in text.split(","):
        role, sep, col = part.partition("=")
        if not sep:
            raise ConfigError(f"bad schema entry {part!r}; expected role=column")
        out[role.strip()] = col.strip()
    unknown = set(out) - set(DEFAULT_SCHEMA) - set(OPTIONAL_ROLES)
    if unknown:
        raise ConfigError(f"unknown schema roles: {sorted(unknown)}")
    return out


def _load_graph(path: str) -> TradeGraph:
    try:
        return TradeGraph.from_json(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GgaeError(f"{path}: not valid JSON ({exc})") from exc


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        train_ratio=args.train_ratio,
        hidden_dim=args.hidden_dim,
        train_only_adjacency=not args.full_adjacency,
        center=not args.no_center,
    )


def cmd_ingest(args) -> int:
    schema = {**DEFAULT_SCHEMA, **_parse_schema(args.schema)}
    with open(args.input, "rb") as fh:
        records = parse_gravity_csv(fh, schema)
    kept = filter_complete(records)
    graph = build_graph(kept)
    Path(args.output).write_text(graph.to_json())
    summary = {
        "input": str(args.input),
        "schema": schema,
        "records": len(records),
        "kept": len(kept),
        "dropped": drop_summary(records),
        "nodes": graph.num_nodes,
        "edges": graph.num_edges,
        "output": str(args.output),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_scatter(args) -> int:
    graph = _load_graph(args.graph)
    rows = emit_loglog_scatter(graph)
    with open(args.out, "w", newline="") as fh:
        write_scatter_csv(rows, fh)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _write_table(table: TableReport, out: str) -> None:
    Path(out).write_text(table.to_json())
    Path(out).with_suffix(".txt").write_text(table.to_text())


def cmd_train(args) -> int:
    graph = _load_graph(args.graph)
    config = replace(_model_config(args), pattern=Pattern.parse(args.pattern))
    report = run_experiment(
        graph, config.pattern, args.runs, args.seed, config,
        workers=args.workers, record_divergence=True,
    )
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_DIVERGED if report.failed else EXIT_OK


def cmd_reproduce_table(args) -> int:
    graph = _load_graph(args.graph)
    table = reproduce_table(
        graph, args.runs, args.base_seed, _model_config(args),
        workers=args.workers, record_divergence=True,
    )
    _write_table(table, args.out)
    sys.stdout.write(table.to_text())
    return EXIT_DIVERGED if table.failed else EXIT_OK


def cmd_synth(args) -> int:
    graph = generate_synthetic_gravity(args.n, args.density, args.sigma, args.seed, args.gamma)
    Path(args.output).write_text(graph.to_json())
    print(json.dumps({
        "n": args.n, "density": args.density, "sigma": args.sigma, "seed": args.seed,
        "gamma": args.gamma, "nodes": graph.num_nodes, "edges": graph.num_edges,
        "output": str(args.output),
    }, indent=2, sort_keys=True))
    return EXIT_OK


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    d = ModelConfig()
    p.add_argument("--graph", required=True, help="graph JSON written by ingest or synth")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--train-ratio", type=float, default=d.train_ratio)
    p.add_argument("--hidden-dim", type=int, default=d.hidden_dim)
    p.add_argument("--full-adjacency", action="store_true",
                   help="let test edges take part in message passing")
    p.add_argument("--no-center", action="store_true",
                   help="train on raw log features without mean shifts")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ggae", description="Gravity-informed graph auto-encoder experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="CSV -> graph JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", help="role=column,... or a JSON file")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("scatter", help="graph JSON -> log-log scatter CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scatter)

    p = sub.add_parser("train", help="train one pattern over seeded runs")
    _add_training_flags(p)
    p.add_argument("--pattern", default="P1", help="P1..P5 or full pattern name")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reproduce-table", help="all five patterns, JSON + text table")
    _add_training_flags(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON; the text table goes next to it as .txt")
    p.set_defaults(func=cmd_reproduce_table)

    p = sub.add_parser("synth", help="synthetic gravity graph JSON")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GgaeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
