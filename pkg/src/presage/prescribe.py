"""What-if modifications, automatic recommendations, conditional trajectory
prescription, and the original/future/modified prediction report."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Instance, denormalize_steps
from .forecast import Forecast, run_forecaster, slide_window
from .mathcore import Rng
from .models import ModelBundle, pm_predict, xyz_infer

MOD_UNIFORM = "uniform_noise"
MOD_GAUSSIAN = "gaussian_noise"
MOD_MEAN = "replace_mean"
MOD_ZEROS = "replace_zeros"
MOD_KINDS = (MOD_UNIFORM, MOD_GAUSSIAN, MOD_MEAN, MOD_ZEROS)  # tie-break order

MODE_WITHIN_WINDOW = "within_window"
MODE_FUTURE = "future"

RECOMMEND_AMPLITUDE = 0.5  # standardized units, fixed for the 4x4 search


@dataclass(frozen=True)
class Modification:
    """An edit to steps [start, end) of one feature."""

    feature: int
    start: int
    end: int
    kind: str
    amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MOD_KINDS:
            raise ValueError(f"unknown modification kind {self.kind!r}")
        if self.feature < 0:
            raise ValueError("feature index must be nonnegative")
        if not 0 <= self.start < self.end:
            raise ValueError(f"empty or negative range [{self.start}, {self.end})")
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be nonnegative")


@dataclass
class Recommendation:
    modification: Modification
    direction: str  # "increase" | "decrease"
    predicted_rul_after: float
    delta: float  # predicted_rul_after - prediction on the unmodified window


@dataclass
class RecommendationResult:
    items: list[Recommendation]
    flags: list[str] = field(default_factory=list)


@dataclass
class PrescriptionReport:
    original_rul: float
    future_rul: float
    mod_rul: float
    prescribed: np.ndarray  # (Z, J), original units
    forecast: np.ndarray  # (Z, J), original units
    desired_target: float
    prescribed_normalized: np.ndarray | None = None
    forecast_normalized: np.ndarray | None = None


def apply_modification(instance: Instance, mod: Modification, rng: Rng | None = None) -> Instance:
    """Apply one edit, leaving every cell outside (feature, range) untouched.

    Noise draws come from `rng` when given, else from the modification's
    own seed, so replaying a recorded list reproduces the same window.
    """
    j, n = instance.values.shape
    if mod.feature >= j:
        raise ValueError(f"feature {mod.feature} out of range for J={j}")
    if mod.end > n:
        raise ValueError(f"range end {mod.end} out of range for N={n}")
    rng = rng if rng is not None else Rng(mod.seed).child("mod")
    values = instance.values.copy()
    span = mod.end - mod.start
    if mod.kind == MOD_UNIFORM:
        values[mod.feature, mod.start : mod.end] += rng.uniform(-mod.amplitude, mod.amplitude, span)
    elif mod.kind == MOD_GAUSSIAN:
        values[mod.feature, mod.start : mod.end] += rng.normal(mod.amplitude, span)
    elif mod.kind == MOD_MEAN:
        values[mod.feature, mod.start : mod.end] = instance.values[mod.feature].mean()
    else:  # MOD_ZEROS
        values[mod.feature, mod.start : mod.end] = 0.0
    return Instance(values, instance.rul_target, instance.unit_id, instance.end_cycle, instance.synthetic)


def _top_features(s: np.ndarray) -> tuple[list[int], list[int], list[str]]:
    """Two most positive and two most negative importances; ties favor low index."""
    flags: list[str] = []
    order_pos = sorted((j for j in range(len(s)) if s[j] > 0.0), key=lambda j: (-s[j], j))
    order_neg = sorted((j for j in range(len(s)) if s[j] < 0.0), key=lambda j: (s[j], j))
    pos, neg = order_pos[:2], order_neg[:2]
    if len(pos) < 2 or len(neg) < 2:
        flags.append("partial")
    for side, chosen in (("positive", order_pos), ("negative", order_neg)):
        if len(chosen) > 2 and s[chosen[1]] == s[chosen[2]]:
            flags.append(f"ambiguous_{side}_tie")
    return pos, neg, flags


def probe_seed(rng: Rng, feature: int, kind: str) -> int:
    """Deterministic per-cell seed for the recommendation grid."""
    return rng.child("rec", feature, kind).seed


def recommend(
    predict,
    instance: Instance,
    explanation,
    rng: Rng,
    amplitude: float = RECOMMEND_AMPLITUDE,
) -> RecommendationResult:
    """Best full-window modification for each of the four most important features.

    For the two most positive importances the kind maximizing the prediction
    is kept (direction increase); for the two most negative the minimizing
    kind (decrease).  Equal predictions fall back to kind declaration order.
    """
    n = instance.values.shape[1]
    base = predict(instance.values)
    pos, neg, flags = _top_features(np.asarray(explanation.s, dtype=float))

    items: list[Recommendation] = []
    for feature, direction in [(f, "increase") for f in pos] + [(f, "decrease") for f in neg]:
        best: tuple[float, Modification] | None = None
        for kind in MOD_KINDS:
            mod = Modification(
                feature=feature,
                start=0,
                end=n,
                kind=kind,
                amplitude=amplitude if kind in (MOD_UNIFORM, MOD_GAUSSIAN) else 0.0,
                seed=probe_seed(rng, feature, kind),
            )
            predicted = predict(apply_modification(instance, mod).values)
            better = (
                best is None
                or (direction == "increase" and predicted > best[0])
                or (direction == "decrease" and predicted < best[0])
            )
            if better:
                best = (predicted, mod)
        items.append(
            Recommendation(
                modification=best[1],
                direction=direction,
                predicted_rul_after=best[0],
                delta=best[0] - base,
            )
        )
    return RecommendationResult(items=items, flags=flags)


def xyz_prescribe(
    bundle: ModelBundle,
    instance: Instance,
    desired_target: float,
    mode: str = MODE_FUTURE,
) -> Forecast:
    """Ask the conditional model for Z steps that suit the desired target.

    `within_window` conditions on the window's first X steps and suggests
    its last Z; `future` conditions on the most recent X steps so the
    suggestion is the next Z steps beyond the window.
    """
    if desired_target < 0.0:
        raise ValueError("desired target must be nonnegative")
    geo = bundle.geometry
    if mode == MODE_WITHIN_WINDOW:
        lead = instance.values[:, : geo.X]
    elif mode == MODE_FUTURE:
        lead = instance.values[:, geo.Z :]
    else:
        raise ValueError(f"unknown prescription mode {mode!r}")
    normalized = xyz_infer(bundle.xyz, lead, desired_target / bundle.normalizer.rul_scale, geo)
    return Forecast(
        values=denormalize_steps(normalized, bundle.normalizer),
        normalized=normalized,
        source="xyz",
    )


def compare_prescription(
    bundle: ModelBundle,
    instance: Instance,
    suggestion: Forecast,
    forecaster: str = "neural",
    desired_target: float = float("nan"),
) -> PrescriptionReport:
    """The three predictions shown side by side: original, forecast, prescribed."""
    forecast = run_forecaster(bundle, instance, forecaster)
    scale = bundle.normalizer.rul_scale
    return PrescriptionReport(
        original_rul=pm_predict(bundle.pm, instance, scale),
        future_rul=pm_predict(bundle.pm, slide_window(instance, forecast), scale),
        mod_rul=pm_predict(bundle.pm, slide_window(instance, suggestion), scale),
        prescribed=suggestion.values,
        forecast=forecast.values,
        desired_target=desired_target,
        prescribed_normalized=suggestion.normalized,
        forecast_normalized=forecast.normalized,
    )
