"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 validation failure.
Canonical outputs are deterministic for a fixed seed; wall-clock timings
go to a separate ``*.timings.json`` sidecar.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .bounds import SizeError, verify_theorem1
from .domain import ConfigError, InputError, money, validate_allocation, validate_instance
from .pipeline import (
    adviser_plan,
    dataset_config_from_dict,
    experiment_config_from_dict,
    make_instance,
    plan_config_from_dict,
    run_experiment,
)
from .baselines import HilpConfig, RwbConfig, hilp_allocate, rwb_allocate
from .serialize import allocation_to_dict, canonical_json, instance_from_dict, instance_to_dict

EXIT_CONFIG = 2
EXIT_VALIDATION = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_CONFIG, f"cannot read {path}: {exc}")


def _load_instance(path: str):
    data = _load_json(path)
    try:
        instance = instance_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"malformed instance file: {exc}")
    bad = validate_instance(instance)
    if bad:
        _fail(EXIT_VALIDATION, "; ".join(str(v) for v in bad[:5]))
    return instance


@click.group()
@click.option("--verbose", is_flag=True, help="log progress to stderr")
def main(verbose: bool):
    """Intervention-allocation planner."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--dataset", type=click.Choice(["d1", "d2"]), default="d1")
@click.option("--size", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--budget", type=float, default=350.0, show_default=True,
              help="budget in currency units")
@click.option("--drive-cap", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
def generate(dataset, size, seed, budget, drive_cap, out):
    """Write a synthetic instance as canonical JSON."""
    try:
        ds = dataset_config_from_dict({"dataset": dataset, "population": size, "seed": seed})
        instance, _ = make_instance(ds, money(budget), drive_cap)
    except (ConfigError, InputError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    Path(out).write_text(canonical_json(instance_to_dict(instance)))
    click.echo(f"wrote {out} ({len(instance.mothers)} mothers)")


@main.command()
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--method", type=click.Choice(["adviser", "hilp", "rwb"]), default="adviser",
              show_default=True)
@click.option("--out", type=click.Path(), required=True)
def plan(instance_path, config_path, method, out):
    """Plan interventions for an instance and write the allocation."""
    instance = _load_instance(instance_path)
    cfg_data = _load_json(config_path) if config_path else None
    try:
        plan_cfg = plan_config_from_dict(cfg_data)
    except (ConfigError, TypeError) as exc:
        _fail(EXIT_CONFIG, f"bad config: {exc}")

    details = None
    if method == "adviser":
        allocation, details = adviser_plan(instance, None, plan_cfg)
    elif method == "hilp":
        allocation = hilp_allocate(instance, instance.probabilities,
                                   HilpConfig(pool=plan_cfg.pool, build=plan_cfg.build,
                                              solve=plan_cfg.solve, seed=0))
    else:
        allocation = rwb_allocate(instance, instance.probabilities, RwbConfig())

    bad = validate_allocation(instance, allocation)
    if bad:
        _fail(EXIT_VALIDATION, "; ".join(str(v) for v in bad[:5]))
    payload = {"method": method, "allocation": allocation_to_dict(instance, allocation)}
    if details is not None:
        payload["solver"] = {"status": details.solver_status, "gap": details.solver_gap,
                             "nodes": details.solver_nodes,
                             "pruned_mothers": details.pruned_count}
    Path(out).write_text(canonical_json(payload))
    click.echo(f"wrote {out} (objective {allocation.objective:.3f})")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="also write the rows as CSV")
def experiment(config_path, out, csv_path):
    """Run a budget sweep for each configured method."""
    data = _load_json(config_path)
    try:
        config = experiment_config_from_dict(data)
        report = run_experiment(config)
    except (ConfigError, InputError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    Path(out).write_text(canonical_json(report.to_dict()))
    timings_path = Path(out).with_suffix(".timings.json")
    timings_path.write_text(json.dumps(report.timings, sort_keys=True, indent=2) + "\n")
    if csv_path:
        Path(csv_path).write_text(report.to_csv())
    click.echo(f"wrote {out} ({len(report.rows)} rows; timings in {timings_path})")


@main.command()
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
def bounds(instance_path, config_path, out):
    """Exhaustively certify the pipeline's gap guarantee on a tiny instance."""
    instance = _load_instance(instance_path)
    cfg_data = _load_json(config_path) if config_path else None
    plan_cfg = plan_config_from_dict(cfg_data)
    from .routing import generate_route_pool

    pool = generate_route_pool(instance, instance.probabilities, None, plan_cfg.pool)
    allocation, details = adviser_plan(instance, None, plan_cfg, route_pool=pool)
    try:
        report = verify_theorem1(instance, instance.probabilities, allocation,
                                 details.prune_state, pool)
    except SizeError as exc:
        _fail(EXIT_CONFIG, str(exc))
    Path(out).write_text(canonical_json(report.to_dict()))
    click.echo(f"wrote {out} (bound holds: {report.theorem_holds})")


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(), default=None,
              help="defaults to $ADVISER_DATA_DIR or ./adviser-data")
def serve(port, host, data_dir):
    """Start the planning HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(data_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
