"""Seed-disciplined compositions shared by the CLI and the HTTP service, so
both interfaces return bit-identical values for identical inputs."""

from __future__ import annotations

import math

import numpy as np

from ..dataset import Instance, denormalize_instance
from ..explain import (
    METHOD_IPCA,
    METHOD_MEAN,
    Explanation,
    MetricReport,
    NeighborConfig,
    evaluate_fidelity,
    evaluate_truthfulness,
    explain_ipca,
    explain_mean,
    explanation_to_json,
    generate_neighbors,
)
from ..mathcore import DEFAULT_RIDGE_LAMBDA, Rng
from ..models import ModelBundle, pm_predict_window
from ..prescribe import RecommendationResult, recommend

DEFAULT_NEIGHBOR_COUNT = 300
TRUTHFULNESS_DELTA = 0.5


def predict_fn(bundle: ModelBundle):
    scale = bundle.normalizer.rul_scale
    return lambda values: pm_predict_window(bundle.pm, values, scale)


def run_explanation(
    bundle: ModelBundle,
    instance: Instance,
    method: str,
    seed: int,
    count: int = DEFAULT_NEIGHBOR_COUNT,
    config: NeighborConfig | None = None,
    lam: float = DEFAULT_RIDGE_LAMBDA,
) -> tuple[Explanation, MetricReport]:
    """Explain a normalized window, returning the explanation and its metrics."""
    if method not in (METHOD_MEAN, METHOD_IPCA):
        raise ValueError(f"unknown explanation method {method!r}")
    predict = predict_fn(bundle)
    rng = Rng(seed)
    neighborhood = generate_neighbors(instance, count, rng.child("hood"), config)
    if method == METHOD_MEAN:
        explanation = explain_mean(predict, neighborhood, lam)
    else:
        explanation = explain_ipca(predict, neighborhood, lam, rng.child("ipca"))
    mae, r2 = evaluate_fidelity(predict, explanation, neighborhood)
    truth, probes = evaluate_truthfulness(predict, instance, explanation, TRUTHFULNESS_DELTA)
    return explanation, MetricReport(mae, r2, truth, probes)


def run_recommendations(
    bundle: ModelBundle,
    instance: Instance,
    explanation: Explanation,
    seed: int,
) -> RecommendationResult:
    return recommend(predict_fn(bundle), instance, explanation, Rng(seed))


def _nullable(x: float):
    return None if isinstance(x, float) and math.isnan(x) else x


def metrics_to_json(report: MetricReport) -> dict:
    return {
        "fidelity_mae": report.fidelity_mae,
        "fidelity_r2": _nullable(report.fidelity_r2),
        "truthfulness": _nullable(report.truthfulness),
        "probe_count": report.probe_count,
    }


def explanation_payload(explanation: Explanation, report: MetricReport, seed: int) -> dict:
    return {
        "seed": seed,
        "explanation": explanation_to_json(explanation),
        "metrics": metrics_to_json(report),
    }


def modification_to_json(mod) -> dict:
    return {
        "feature": mod.feature,
        "start": mod.start,
        "end": mod.end,
        "kind": mod.kind,
        "amplitude": mod.amplitude,
        "seed": mod.seed,
    }


def recommendations_to_json(result: RecommendationResult, seed: int) -> dict:
    return {
        "seed": seed,
        "flags": result.flags,
        "items": [
            {
                "modification": modification_to_json(rec.modification),
                "direction": rec.direction,
                "predicted_rul_after": rec.predicted_rul_after,
                "delta": rec.delta,
            }
            for rec in result.items
        ],
    }


def instance_to_json(instance: Instance, bundle: ModelBundle) -> dict:
    raw = denormalize_instance(instance, bundle.normalizer)
    return {
        "unit_id": instance.unit_id,
        "end_cycle": instance.end_cycle,
        "rul_target": None if math.isnan(instance.rul_target) else instance.rul_target,
        "synthetic": instance.synthetic,
        "values": raw.values.tolist(),
        "normalized": instance.values.tolist(),
    }


def report_to_json(report) -> dict:
    return {
        "original_rul": report.original_rul,
        "future_rul": report.future_rul,
        "mod_rul": report.mod_rul,
        "prescriptive_gain": report.mod_rul - report.future_rul,
        "desired_target": report.desired_target,
        "prescribed": np.asarray(report.prescribed).tolist(),
        "forecast": np.asarray(report.forecast).tolist(),
        "prescribed_normalized": np.asarray(report.prescribed_normalized).tolist(),
        "forecast_normalized": np.asarray(report.forecast_normalized).tolist(),
    }


def geometry_to_json(geometry) -> dict:
    return {"N": geometry.N, "J": geometry.J, "Z": geometry.Z, "X": geometry.X}
