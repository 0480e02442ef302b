"""Command-line entry points: ingest | train | evaluate | explain | recommend
| prescribe | serve.

Exit codes: 0 success, 2 usage, 3 data problem, 4 bundle problem,
5 training divergence.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click

from ..dataset import (
    DataError,
    InstanceStore,
    WindowGeometry,
    apply_normalizer,
    fit_normalizer,
    load_instances,
    load_units,
    make_windows,
    save_instances,
    select_features,
)
from ..explain import METHOD_IPCA, METHOD_MEAN
from ..models import (
    BundleFormatError,
    TrainConfig,
    TrainingDivergedError,
    load_bundle,
    save_bundle,
)
from ..pipeline import PipelineConfig, evaluate_bundle, held_out_store, train_bundle
from ..prescribe import MODE_FUTURE, MODE_WITHIN_WINDOW, compare_prescription, xyz_prescribe
from . import ops

EXIT_DATA = 3
EXIT_BUNDLE = 4
EXIT_DIVERGED = 5


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TrainingDivergedError as exc:
            _fail(EXIT_DIVERGED, str(exc))
        except BundleFormatError as exc:
            _fail(EXIT_BUNDLE, str(exc))
        except DataError as exc:
            _fail(EXIT_DATA, str(exc))
        except (ValueError, OSError) as exc:
            _fail(EXIT_DATA, str(exc))

    return wrapper


def _open_bundle(path: str):
    try:
        return load_bundle(path)
    except OSError as exc:
        _fail(EXIT_BUNDLE, f"cannot read bundle {path}: {exc}")


def _instance_from_store(bundle, instances_dir: str, index: int):
    store = load_instances(instances_dir)
    if store.geometry != bundle.geometry:
        _fail(EXIT_BUNDLE, f"store geometry {store.geometry} does not match bundle {bundle.geometry}")
    if not 0 <= index < len(store.instances):
        _fail(EXIT_DATA, f"instance {index} out of range (store has {len(store.instances)})")
    return apply_normalizer(store.instances[index], bundle.normalizer)


@click.group()
def main():
    """Prescriptive-maintenance engine: train, explain, prescribe, serve."""


@main.command()
@click.option("--data", required=True, type=click.Path(), help="unit/cycle sensor CSV")
@click.option("--out", required=True, type=click.Path(), help="output instance directory")
@click.option("--window", default=50, show_default=True, help="window length N")
@click.option("--horizon", default=5, show_default=True, help="forecast horizon Z")
@click.option("--stride", default=1, show_default=True)
@click.option("--variance-threshold", default=1e-8, show_default=True)
@click.option("--rul-cap", default=None, type=float, help="cap RUL targets (off by default)")
@guarded
def ingest(data, out, window, horizon, stride, variance_threshold, rul_cap):
    """Cut windows from a sensor CSV and persist them with their statistics."""
    units = load_units(data)
    reduced, retained = select_features(units, variance_threshold)
    geometry = WindowGeometry(N=window, J=len(retained), Z=horizon)
    instances = [
        inst for unit in reduced for inst in make_windows(unit, geometry, stride, rul_cap)
    ]
    if not instances:
        _fail(EXIT_DATA, f"no unit is long enough for N={window}")
    normalizer = fit_normalizer(instances)
    save_instances(out, InstanceStore(instances, normalizer, retained, geometry))
    click.echo(
        f"ingested {len(instances)} windows from {len(units)} units "
        f"({len(retained)} of {units[0].readings.shape[1]} features retained) -> {out}"
    )


@main.command()
@click.option("--data", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(), help="output bundle file")
@click.option("--instances-out", default=None, type=click.Path(), help="also persist held-out windows")
@click.option("--window", default=50, show_default=True)
@click.option("--horizon", default=5, show_default=True)
@click.option("--stride", default=1, show_default=True)
@click.option("--variance-threshold", default=1e-8, show_default=True)
@click.option("--rul-cap", default=None, type=float)
@click.option("--holdout-fraction", default=0.2, show_default=True)
@click.option("--epochs", default=30, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--learning-rate", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@guarded
def train(data, out_path, instances_out, window, horizon, stride, variance_threshold,
          rul_cap, holdout_fraction, epochs, batch_size, learning_rate, seed):
    """Train predictor, forecaster, and conditional model; write one bundle."""
    units = load_units(data)
    config = PipelineConfig(
        window=window,
        horizon=horizon,
        stride=stride,
        variance_threshold=variance_threshold,
        holdout_fraction=holdout_fraction,
        rul_cap=rul_cap,
        train=TrainConfig(
            epochs=epochs, batch_size=batch_size, learning_rate=learning_rate, seed=seed
        ),
    )
    artifacts = train_bundle(units, config)
    save_bundle(artifacts.bundle, out_path)
    losses = artifacts.bundle.metadata["final_losses"]
    click.echo(
        f"trained on {len(artifacts.train_units)} units "
        f"({artifacts.bundle.metadata['window_counts']['pm']} windows); "
        f"final losses pm={losses['pm']:.2e} nf={losses['nf']:.2e} xyz={losses['xyz']:.2e}"
    )
    click.echo(f"bundle -> {out_path}")
    if instances_out:
        store = held_out_store(artifacts)
        save_instances(instances_out, store)
        click.echo(f"{len(store.instances)} held-out windows -> {instances_out}")


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--data", required=True, type=click.Path())
@click.option("--stride", default=1, show_default=True, help="evaluation stride")
@click.option("--max-windows", default=None, type=int, help="limit evaluated windows")
@click.option("--json", "as_json", is_flag=True)
@guarded
def evaluate(bundle_path, data, stride, max_windows, as_json):
    """Report PM error against the mean baseline and NF against SF."""
    bundle = _open_bundle(bundle_path)
    units = load_units(data)
    report = evaluate_bundle(bundle, units, stride=stride, max_windows=max_windows)
    if as_json:
        click.echo(json.dumps(report.to_json(), indent=2))
    else:
        ratio = report.pm_mae / report.baseline_mae if report.baseline_mae else float("nan")
        click.echo(f"pm_mae={report.pm_mae:.4f} baseline_mae={report.baseline_mae:.4f} ratio={ratio:.3f}")
        click.echo(f"nf_mae={report.nf_mae:.4f} sf_mae={report.sf_mae:.4f}")
        click.echo(f"windows={report.pm_window_count} forecast_pairs={report.forecast_pair_count}")


def _explain_one(bundle, instance, method, seed, count):
    explanation, metrics = ops.run_explanation(bundle, instance, method, seed, count)
    return ops.explanation_payload(explanation, metrics, seed)


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--instances", "instances_dir", required=True, type=click.Path())
@click.option("--instance", "index", default=0, show_default=True)
@click.option("--method", default=None, type=click.Choice([METHOD_MEAN, METHOD_IPCA]),
              help="print one method as JSON; omit for a table of both")
@click.option("--seed", default=0, show_default=True)
@click.option("--count", default=ops.DEFAULT_NEIGHBOR_COUNT, show_default=True, help="neighborhood size")
@guarded
def explain(bundle_path, instances_dir, index, method, seed, count):
    """Explain one stored instance's prediction."""
    bundle = _open_bundle(bundle_path)
    instance = _instance_from_store(bundle, instances_dir, index)
    if method is not None:
        click.echo(json.dumps(_explain_one(bundle, instance, method, seed, count), indent=2))
        return
    payloads = {m: _explain_one(bundle, instance, m, seed, count) for m in (METHOD_MEAN, METHOD_IPCA)}
    click.echo(f"instance {index} (unit {instance.unit_id}, end cycle {instance.end_cycle})")
    click.echo(f"{'feature':>8} {'s[mean_agg]':>14} {'s[ipca]':>14}")
    for j in range(bundle.geometry.J):
        mean_s = payloads[METHOD_MEAN]["explanation"]["s"][j]
        ipca_s = payloads[METHOD_IPCA]["explanation"]["s"][j]
        click.echo(f"{j:>8} {mean_s:>14.6f} {ipca_s:>14.6f}")
    for m, payload in payloads.items():
        metrics = payload["metrics"]
        click.echo(
            f"{m}: local={payload['explanation']['local_prediction']:.4f} "
            f"fidelity_mae={metrics['fidelity_mae']:.4f} "
            f"fidelity_r2={metrics['fidelity_r2']} truthfulness={metrics['truthfulness']}"
        )


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--instances", "instances_dir", required=True, type=click.Path())
@click.option("--instance", "index", default=0, show_default=True)
@click.option("--method", default=METHOD_IPCA, type=click.Choice([METHOD_MEAN, METHOD_IPCA]), show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--count", default=ops.DEFAULT_NEIGHBOR_COUNT, show_default=True)
@guarded
def recommend(bundle_path, instances_dir, index, method, seed, count):
    """Print the four best modification recommendations as JSON."""
    bundle = _open_bundle(bundle_path)
    instance = _instance_from_store(bundle, instances_dir, index)
    explanation, _ = ops.run_explanation(bundle, instance, method, seed, count)
    result = ops.run_recommendations(bundle, instance, explanation, seed)
    click.echo(json.dumps(ops.recommendations_to_json(result, seed), indent=2))


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--instances", "instances_dir", required=True, type=click.Path())
@click.option("--instance", "index", default=0, show_default=True)
@click.option("--desired-target", required=True, type=float)
@click.option("--mode", default=MODE_FUTURE, type=click.Choice([MODE_WITHIN_WINDOW, MODE_FUTURE]), show_default=True)
@click.option("--forecaster", default="neural", type=click.Choice(["neural", "static"]), show_default=True)
@guarded
def prescribe(bundle_path, instances_dir, index, desired_target, mode, forecaster):
    """Prescribe a trajectory for a desired RUL and print the three predictions."""
    bundle = _open_bundle(bundle_path)
    instance = _instance_from_store(bundle, instances_dir, index)
    suggestion = xyz_prescribe(bundle, instance, desired_target, mode)
    report = compare_prescription(bundle, instance, suggestion, forecaster, desired_target)
    payload = ops.report_to_json(report)
    payload["mode"] = mode
    payload["forecaster"] = forecaster
    click.echo(json.dumps(payload, indent=2))


@main.command()
@click.option("--bundle", "bundle_paths", required=True, multiple=True, type=click.Path())
@click.option("--instances", "instance_dirs", required=True, multiple=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=None, type=int, help="default: $PRESAGE_PORT or 8000")
@click.option("--ttl", default=1800, show_default=True, help="session idle TTL, seconds")
@click.option("--ui-dir", default=None, type=click.Path(exists=True), help="static web console directory")
@guarded
def serve(bundle_paths, instance_dirs, host, port, ttl, ui_dir):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app, load_engine_state

    if len(bundle_paths) != len(instance_dirs):
        _fail(EXIT_DATA, "--bundle and --instances must be given the same number of times")
    if port is None:
        port = int(os.environ.get("PRESAGE_PORT", "8000"))
    state = load_engine_state(list(zip(bundle_paths, instance_dirs)), ttl)
    app = create_app(state, ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
