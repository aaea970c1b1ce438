"""Command-line surface: run orchestration and artifact persistence.

Commands: search, expected-cost, enumerate, eval, export-dot. Artifacts go
to the output directory only; diagnostics are line-oriented JSON on stderr.
Exit codes: 0 success, 1 runtime failure, 2 configuration problem.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema

from .errors import BmtasError, ConfigError
from .eval import MetricRecord, SyntheticTaskSpec, delta_m, generate_tasks
from .graph import (
    SupergraphSpec,
    export_dot,
    structure_from_json,
    structure_to_json,
)
from .nncore import LossWeights
from .partition import Partition, enumerate_partitions
from .relax import TemperatureSchedule
from .resloss import (
    ArchitectureParams,
    brute_force_expected_cost,
    expected_cost,
    grouping_distribution,
)
from .search import SearchConfig, retrain, search
from .seeding import rng_stream

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment", "supergraph", "benchmark"],
    "properties": {
        "experiment": {"type": "string", "minLength": 1},
        "output_dir": {"type": "string", "minLength": 1},
        "seeds": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 1,
        },
        "supergraph": {
            "type": "object",
            "additionalProperties": False,
            "required": ["widths"],
            "properties": {
                "widths": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 2,
                },
                "unit_costs": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 1,
                },
            },
        },
        "benchmark": {
            "type": "object",
            "additionalProperties": False,
            "required": ["num_tasks", "input_dim", "hidden_dim", "target_dim", "relatedness"],
            "properties": {
                "num_tasks": {"type": "integer", "minimum": 1, "maximum": 8},
                "input_dim": {"type": "integer", "minimum": 1},
                "hidden_dim": {"type": "integer", "minimum": 1},
                "target_dim": {"type": "integer", "minimum": 1},
                "relatedness": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 0},
                        "minItems": 1,
                    },
                    "minItems": 1,
                },
                "noise_std": {"type": "number", "minimum": 0},
                "train_samples": {"type": "integer", "minimum": 2},
                "test_samples": {"type": "integer", "minimum": 1},
                "signal_scale": {"type": "number", "exclusiveMinimum": 0},
                "share_private": {"type": "boolean"},
            },
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda": {"type": "number", "minimum": 0},
                "warmup_steps": {"type": "integer", "minimum": 0},
                "search_steps": {"type": "integer", "minimum": 1},
                "alpha_data_fraction": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "exclusiveMaximum": 1,
                },
                "tau_start": {"type": "number", "exclusiveMinimum": 0},
                "tau_end": {"type": "number", "exclusiveMinimum": 0},
                "theta_lr": {"type": "number", "exclusiveMinimum": 0},
                "theta_momentum": {"type": "number", "minimum": 0},
                "theta_weight_decay": {"type": "number", "minimum": 0},
                "alpha_lr": {"type": "number", "exclusiveMinimum": 0},
                "alpha_weight_decay": {"type": "number", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "retrain_steps": {"type": "integer", "minimum": 0},
                "retrain_lr": {"type": "number", "exclusiveMinimum": 0},
                "omega": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 1,
                },
            },
        },
    },
}


def _log(event: str, **fields):
    print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc


def load_config(path) -> dict:
    """Parse and schema-validate a run config; unknown keys are rejected."""
    obj = _load_json(path)
    try:
        jsonschema.validate(obj, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{path}: {exc.json_path}: {exc.message}") from exc
    widths = obj["supergraph"]["widths"]
    if obj["benchmark"]["input_dim"] != widths[0]:
        raise ConfigError("benchmark input_dim must equal the first supergraph width")
    costs = obj["supergraph"].get("unit_costs")
    if costs is not None and len(costs) != len(widths) - 1:
        raise ConfigError("unit_costs must cover every layer")
    max_task = max(t for block in obj["benchmark"]["relatedness"] for t in block)
    if max_task >= obj["benchmark"]["num_tasks"]:
        raise ConfigError("relatedness names a task outside 0..num_tasks-1")
    return obj


def _build_supergraph(cfg: dict) -> SupergraphSpec:
    sg = cfg["supergraph"]
    return SupergraphSpec.chain(
        sg["widths"], cfg["benchmark"]["num_tasks"], sg.get("unit_costs")
    )


def _build_task_spec(cfg: dict) -> SyntheticTaskSpec:
    b = cfg["benchmark"]
    return SyntheticTaskSpec(
        num_tasks=b["num_tasks"],
        input_dim=b["input_dim"],
        hidden_dim=b["hidden_dim"],
        target_dim=b["target_dim"],
        relatedness=Partition.from_json(b["relatedness"]),
        noise_std=b.get("noise_std", 0.01),
        train_samples=b.get("train_samples", 512),
        test_samples=b.get("test_samples", 256),
        signal_scale=b.get("signal_scale", 0.2),
        share_private=b.get("share_private", False),
    )


def _build_search_config(cfg: dict, seed: int) -> SearchConfig:
    s = cfg.get("search", {})
    search_steps = s.get("search_steps", 300)
    schedule = TemperatureSchedule(
        start=s.get("tau_start", 5.0),
        end=s.get("tau_end", 0.1),
        total_steps=max(search_steps - 1, 1),
    )
    omega = s.get("omega")
    return SearchConfig(
        resource_weight=s.get("lambda", 0.0),
        warmup_steps=s.get("warmup_steps", 300),
        search_steps=search_steps,
        alpha_data_fraction=s.get("alpha_data_fraction", 0.2),
        schedule=schedule,
        theta_lr=s.get("theta_lr", 0.3),
        theta_momentum=s.get("theta_momentum", 0.9),
        theta_weight_decay=s.get("theta_weight_decay", 1e-4),
        alpha_lr=s.get("alpha_lr", 0.01),
        alpha_weight_decay=s.get("alpha_weight_decay", 5e-5),
        batch_size=s.get("batch_size", 32),
        retrain_steps=s.get("retrain_steps", 400),
        retrain_lr=s.get("retrain_lr"),
        seed=seed,
        omega=LossWeights(tuple(omega)) if omega else None,
    )


def _trace_csv(result, task_names) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["step", "tau"]
        + [f"loss_{n}" for n in task_names]
        + ["resource_loss", "expected_cost", "structure_hash"]
    )
    for row in result.trace:
        writer.writerow(
            [row.step, row.tau]
            + list(row.task_losses)
            + [row.resource_loss, row.expected_cost, row.structure_hash]
        )
    return buf.getvalue()


def _run_seed(cfg: dict, seed: int) -> dict:
    """One full search + retrain; returns artifact payloads, writes nothing."""
    from .graph import structure_cost, structure_hash

    supergraph = _build_supergraph(cfg)
    task_spec = _build_task_spec(cfg)
    data = generate_tasks(task_spec, rng_stream(seed, "data"))
    data.seed = seed
    config = _build_search_config(cfg, seed)
    result = search(config, supergraph, data)
    metrics = retrain(result.structure, supergraph, data, config, seed)
    result.retrained_metrics = metrics
    return {
        "seed": seed,
        "structure": structure_to_json(result.structure, data.task_names),
        "dot": export_dot(result.structure, data.task_names),
        "trace_csv": _trace_csv(result, data.task_names),
        "metrics": {
            "experiment": cfg["experiment"],
            "seed": seed,
            "lambda": config.resource_weight,
            "structure_hash": structure_hash(result.structure),
            "structure_cost": structure_cost(result.structure, supergraph.cost_table),
            "test_mse": metrics,
        },
    }


def _run_seed_payload(payload) -> dict:
    cfg, seed = payload
    return _run_seed(cfg, seed)


def cmd_search(args) -> int:
    cfg = load_config(args.config)
    seeds = [args.seed] if args.seed is not None else cfg.get("seeds", [0])
    if args.lambda_override is not None:
        cfg.setdefault("search", {})["lambda"] = args.lambda_override
    out_root = Path(args.out or cfg.get("output_dir", "runs")) / cfg["experiment"]

    workers = int(os.environ.get("BMTAS_WORKERS", "1"))
    payloads = [(cfg, seed) for seed in seeds]
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed_payload, payloads))
    else:
        results = [_run_seed_payload(p) for p in payloads]

    for res in results:
        seed_dir = out_root / f"seed{res['seed']}"
        _write_atomic(
            seed_dir / "structure.json",
            json.dumps(res["structure"], sort_keys=True, indent=2) + "\n",
        )
        _write_atomic(seed_dir / "structure.dot", res["dot"])
        _write_atomic(seed_dir / "trace.csv", res["trace_csv"])
        _write_atomic(
            seed_dir / "metrics.json",
            json.dumps(res["metrics"], sort_keys=True, indent=2) + "\n",
        )
        _log(
            "seed_done",
            seed=res["seed"],
            structure_hash=res["metrics"]["structure_hash"],
            structure_cost=res["metrics"]["structure_cost"],
            out=str(seed_dir),
        )
    _log("search_done", experiment=cfg["experiment"], seeds=seeds)
    return 0


def _spec_from_args(args, num_tasks: int, num_layers: int) -> SupergraphSpec:
    if args.unit_costs:
        costs = [float(u) for u in args.unit_costs.split(",")]
        if len(costs) != num_layers:
            raise ConfigError("unit costs must cover every layer")
        return SupergraphSpec.chain(
            [1] * (num_layers + 1), num_tasks, costs
        )
    if args.widths:
        widths = [int(w) for w in args.widths.split(",")]
        if len(widths) != num_layers + 1:
            raise ConfigError("widths must have one more entry than layers")
        return SupergraphSpec.chain(widths, num_tasks)
    return SupergraphSpec.chain([1] * (num_layers + 1), num_tasks, [1.0] * num_layers)


def cmd_expected_cost(args) -> int:
    alpha = ArchitectureParams.from_json(_load_json(args.alpha))
    spec = _spec_from_args(args, alpha.num_tasks, alpha.num_layers)
    cost = expected_cost(alpha, spec)
    dist = grouping_distribution(alpha, spec)
    report = {
        "expected_cost": cost,
        "normalized": cost / spec.cost_table.fully_shared_cost,
        "grouping_distribution": [
            {
                "layer": l + 1,
                "probs": [
                    {"partition": part.blocks(), "prob": float(p)}
                    for part, p in zip(dist.partitions, dist.layers[l])
                    if p > 0
                ],
            }
            for l in range(alpha.num_layers)
        ],
    }
    if args.oracle:
        reference = brute_force_expected_cost(alpha, spec)
        report["oracle"] = reference
        if abs(cost - reference) > 1e-9:
            _log("oracle_mismatch", expected=cost, oracle=reference)
            print(json.dumps(report, sort_keys=True, indent=2))
            return 1
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def cmd_enumerate(args) -> int:
    from .graph import count_structures

    parts = enumerate_partitions(args.tasks)
    if args.unit_costs:
        costs = [float(u) for u in args.unit_costs.split(",")]
        if len(costs) != args.layers:
            raise ConfigError("unit costs must cover every layer")
    else:
        costs = [1.0] * args.layers
    total = sum(costs)
    # cost extremes: one block everywhere vs an immediate full branch
    report = {
        "tasks": args.tasks,
        "layers": args.layers,
        "bell": len(parts),
        "structures": count_structures(args.tasks, args.layers),
        "min_cost": total,
        "max_cost": args.tasks * total,
    }
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def cmd_eval(args) -> int:
    model = MetricRecord.from_json(_load_json(args.model))
    baseline = MetricRecord.from_json(_load_json(args.baseline))
    print(f"{delta_m(model, baseline):.2f}")
    return 0


def cmd_export_dot(args) -> int:
    structure, names = structure_from_json(_load_json(args.structure))
    print(export_dot(structure, names), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bmtas",
        description="Branched multi-task architecture search on a toy supergraph.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run warm-up, search and retraining per seed")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the seed list")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument(
        "--lambda",
        dest="lambda_override",
        type=float,
        default=None,
        help="override the resource weight",
    )
    p.set_defaults(handler=cmd_search)

    p = sub.add_parser("expected-cost", help="expected cost of a logit tensor")
    p.add_argument("--alpha", required=True, help="logits JSON: [task][layer][candidate]")
    p.add_argument("--widths", default=None, help="comma-separated layer widths")
    p.add_argument("--unit-costs", default=None, help="comma-separated per-layer costs")
    p.add_argument(
        "--oracle",
        action="store_true",
        help="cross-check against full enumeration; exit 1 on disagreement",
    )
    p.set_defaults(handler=cmd_expected_cost)

    p = sub.add_parser("enumerate", help="partition and structure counts")
    p.add_argument("--tasks", type=int, required=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--unit-costs", default=None, help="comma-separated per-layer costs")
    p.set_defaults(handler=cmd_enumerate)

    p = sub.add_parser("eval", help="average relative metric vs a baseline")
    p.add_argument("--model", required=True, help="metric record JSON")
    p.add_argument("--baseline", required=True, help="metric record JSON")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("export-dot", help="render a structure JSON as Graphviz")
    p.add_argument("--structure", required=True, help="structure JSON path")
    p.set_defaults(handler=cmd_export_dot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        _log("config_error", error=str(exc))
        return 2
    except BmtasError as exc:
        _log("runtime_error", error=str(exc), kind=type(exc).__name__)
        return 1


if __name__ == "__main__":
    sys.exit(main())
