"""End-to-end composition: split units, fit the normalizer, train all three
models, and score a bundle against held-out units.  Shared by the CLI and
the test harness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    Instance,
    InstanceStore,
    UnitSeries,
    WindowGeometry,
    apply_normalizer,
    fit_normalizer,
    forecast_pairs,
    make_windows,
    normalize_steps,
    select_features,
)
from .forecast import run_forecaster
from .mathcore import Rng
from .models import ModelBundle, TrainConfig, nf_train, pm_predict, pm_train, xyz_train


@dataclass
class PipelineConfig:
    window: int = 50
    horizon: int = 5
    stride: int = 1
    variance_threshold: float = 1e-8
    holdout_fraction: float = 0.2
    rul_cap: float | None = None
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class TrainArtifacts:
    bundle: ModelBundle
    train_units: list[UnitSeries]  # reduced columns
    held_out_units: list[UnitSeries]
    retained_indices: list[int]
    train_instances: list[Instance]  # normalized


def split_units(units: list[UnitSeries], fraction: float, seed: int) -> tuple[list[UnitSeries], list[UnitSeries]]:
    """Deterministic by-unit split; the held-out block comes first in the permutation."""
    n_hold = int(round(len(units) * fraction))
    order = Rng(seed).child("unit-split").permutation(len(units))
    held_idx = set(int(i) for i in order[:n_hold])
    train = [u for i, u in enumerate(units) if i not in held_idx]
    held = [u for i, u in enumerate(units) if i in held_idx]
    return train, held


def train_bundle(units: list[UnitSeries], config: PipelineConfig) -> TrainArtifacts:
    reduced, retained = select_features(units, config.variance_threshold)
    geometry = WindowGeometry(N=config.window, J=len(retained), Z=config.horizon)
    train_units, held_units = split_units(reduced, config.holdout_fraction, config.train.seed)
    if not train_units:
        raise ValueError("holdout fraction leaves no training units")

    raw_windows = [
        inst
        for unit in train_units
        for inst in make_windows(unit, geometry, config.stride, config.rul_cap)
    ]
    if not raw_windows:
        raise ValueError(f"no unit is long enough for N={geometry.N}")
    normalizer = fit_normalizer(raw_windows)
    train_instances = [apply_normalizer(inst, normalizer) for inst in raw_windows]

    pm = pm_train(train_instances, normalizer.rul_scale, config.train)

    nf_pairs = [
        (apply_normalizer(inst, normalizer), normalize_steps(target, normalizer))
        for unit in train_units
        for inst, target in forecast_pairs(unit, geometry, config.stride)
    ]
    nf = nf_train(nf_pairs, geometry, config.train)
    xyz = xyz_train(train_instances, pm, normalizer.rul_scale, geometry, config.train)

    metadata = {
        "seed": config.train.seed,
        "epochs": config.train.epochs,
        "batch_size": config.train.batch_size,
        "learning_rate": config.train.learning_rate,
        "stride": config.stride,
        "variance_threshold": config.variance_threshold,
        "rul_cap": config.rul_cap,
        "holdout_fraction": config.holdout_fraction,
        "retained_indices": retained,
        "held_out_unit_ids": [u.unit_id for u in held_units],
        "final_losses": {
            "pm": pm.loss_trace[-1],
            "nf": nf.loss_trace[-1],
            "xyz": xyz.loss_trace[-1],
        },
        "window_counts": {"pm": len(train_instances), "nf": len(nf_pairs)},
    }
    bundle = ModelBundle(pm=pm, nf=nf, xyz=xyz, normalizer=normalizer, geometry=geometry, metadata=metadata)
    return TrainArtifacts(
        bundle=bundle,
        train_units=train_units,
        held_out_units=held_units,
        retained_indices=retained,
        train_instances=train_instances,
    )


def held_out_store(artifacts: TrainArtifacts, stride: int = 1) -> InstanceStore:
    """Raw held-out windows (training windows when nothing was held out)."""
    source = artifacts.held_out_units or artifacts.train_units
    geometry = artifacts.bundle.geometry
    rul_cap = artifacts.bundle.metadata.get("rul_cap")
    instances = [
        inst for unit in source for inst in make_windows(unit, geometry, stride, rul_cap)
    ]
    return InstanceStore(
        instances=instances,
        normalizer=artifacts.bundle.normalizer,
        retained_indices=artifacts.retained_indices,
        geometry=geometry,
    )


@dataclass
class EvaluationReport:
    pm_mae: float
    baseline_mae: float
    nf_mae: float
    sf_mae: float
    pm_window_count: int
    forecast_pair_count: int

    def to_json(self) -> dict:
        return {
            "pm_mae": self.pm_mae,
            "baseline_mae": self.baseline_mae,
            "pm_vs_baseline": self.pm_mae / self.baseline_mae if self.baseline_mae else float("nan"),
            "nf_mae": self.nf_mae,
            "sf_mae": self.sf_mae,
            "pm_window_count": self.pm_window_count,
            "forecast_pair_count": self.forecast_pair_count,
        }


def evaluate_bundle(
    bundle: ModelBundle,
    units: list[UnitSeries],
    stride: int = 1,
    max_windows: int | None = None,
) -> EvaluationReport:
    """Score PM against the predict-the-mean baseline and NF against SF.

    `units` are raw (unreduced) source units; the bundle's metadata supplies
    the retained columns and the held-out unit ids.
    """
    retained = bundle.metadata.get("retained_indices")
    if retained is not None and units and units[0].readings.shape[1] != bundle.geometry.J:
        units = [UnitSeries(u.unit_id, u.cycles, u.readings[:, retained].copy()) for u in units]
    held_ids = set(bundle.metadata.get("held_out_unit_ids", []))
    held = [u for u in units if u.unit_id in held_ids] or units
    train_ids = {u.unit_id for u in units} - held_ids
    train_units = [u for u in units if u.unit_id in train_ids] or units

    geometry = bundle.geometry
    rul_cap = bundle.metadata.get("rul_cap")
    norm = bundle.normalizer

    train_ruls = [
        inst.rul_target
        for unit in train_units
        for inst in make_windows(unit, geometry, bundle.metadata.get("stride", 1), rul_cap)
    ]
    train_mean = float(np.mean(train_ruls)) if train_ruls else 0.0

    held_windows = [
        inst for unit in held for inst in make_windows(unit, geometry, stride, rul_cap)
    ]
    if max_windows is not None:
        held_windows = held_windows[:max_windows]
    pm_errors, base_errors = [], []
    for inst in held_windows:
        pred = pm_predict(bundle.pm, apply_normalizer(inst, norm), norm.rul_scale)
        pm_errors.append(abs(pred - inst.rul_target))
        base_errors.append(abs(train_mean - inst.rul_target))

    nf_errors, sf_errors = [], []
    pair_count = 0
    for unit in held:
        for inst, target in forecast_pairs(unit, geometry, stride):
            if max_windows is not None and pair_count >= max_windows:
                break
            pair_count += 1
            normalized = apply_normalizer(inst, norm)
            nf_fc = run_forecaster(bundle, normalized, "neural")
            sf_fc = run_forecaster(bundle, normalized, "static")
            nf_errors.append(np.abs(nf_fc.values - target).mean())
            sf_errors.append(np.abs(sf_fc.values - target).mean())

    return EvaluationReport(
        pm_mae=float(np.mean(pm_errors)),
        baseline_mae=float(np.mean(base_errors)),
        nf_mae=float(np.mean(nf_errors)) if nf_errors else float("nan"),
        sf_mae=float(np.mean(sf_errors)) if sf_errors else float("nan"),
        pm_window_count=len(pm_errors),
        forecast_pair_count=pair_count,
    )
