"""Forecasting of the next Z steps: a non-neural static extrapolator, the
trained neural forecaster, window sliding, and the future-RUL computation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Instance, Normalizer, denormalize_steps
from .mathcore import DimensionMismatchError
from .models import ModelBundle, flatten_window, mlp_forward, pm_predict, vec_to_steps

SF_MODE_REFLECT = "reflect"
SF_MODE_REVERSE = "reverse"


@dataclass
class Forecast:
    """A Z x J block of future steps.

    `values` is in original sensor units when a normalizer was available;
    `normalized` is the same block in model space and is what window
    sliding consumes.
    """

    values: np.ndarray
    normalized: np.ndarray
    source: str

    @property
    def Z(self) -> int:
        return self.normalized.shape[0]


def static_forecast(
    instance: Instance,
    Z: int,
    normalizer: Normalizer | None = None,
    mode: str = SF_MODE_REFLECT,
) -> Forecast:
    """Extrapolate by mirroring the last Z observed steps.

    Default mode point-reflects the segment through the final observation
    (value at horizon k is 2*v[N-1] - v[N-1-k]), which continues a trend
    without a jump at the window boundary.  `reverse` replays the segment
    backwards instead.
    """
    values = instance.values
    n = values.shape[1]
    if not 1 <= Z < n:
        raise ValueError(f"horizon Z={Z} must satisfy 1 <= Z < N={n}")
    ks = np.arange(1, Z + 1)
    if mode == SF_MODE_REFLECT:
        block = 2.0 * values[:, n - 1][:, None] - values[:, n - 1 - ks]
    elif mode == SF_MODE_REVERSE:
        block = values[:, n - ks]
    else:
        raise ValueError(f"unknown static forecast mode {mode!r}")
    normalized = block.T.copy()  # (Z, J)
    display = denormalize_steps(normalized, normalizer) if normalizer is not None else normalized.copy()
    return Forecast(values=display, normalized=normalized, source="static")


def neural_forecast(bundle: ModelBundle, instance: Instance) -> Forecast:
    """Run the trained forecaster on a normalized window."""
    flat = flatten_window(instance.values)
    if flat.shape[0] != bundle.nf.input_dim:
        raise DimensionMismatchError(
            f"window of {flat.shape[0]} values does not fit forecaster input {bundle.nf.input_dim}"
        )
    normalized = vec_to_steps(mlp_forward(bundle.nf, flat[None, :])[0], bundle.geometry)
    return Forecast(
        values=denormalize_steps(normalized, bundle.normalizer),
        normalized=normalized,
        source="neural",
    )


def slide_window(instance: Instance, forecast: Forecast) -> Instance:
    """Shift the window forward Z steps, appending the forecast columns.

    The result has no observed RUL and is marked synthetic.
    """
    z = forecast.normalized.shape[0]
    j, n = instance.values.shape
    if forecast.normalized.shape != (z, j):
        raise DimensionMismatchError(
            f"forecast shape {forecast.normalized.shape} incompatible with window ({j}, {n})"
        )
    if not 1 <= z < n:
        raise ValueError(f"forecast horizon {z} must satisfy 1 <= Z < N={n}")
    values = np.concatenate([instance.values[:, z:], forecast.normalized.T], axis=1)
    return Instance(
        values=values,
        rul_target=float("nan"),
        unit_id=instance.unit_id,
        end_cycle=instance.end_cycle + z,
        synthetic=True,
    )


ForecasterFn = Callable[[ModelBundle, Instance, int], Forecast]


def _static_entry(bundle: ModelBundle, instance: Instance, Z: int) -> Forecast:
    return static_forecast(instance, Z, bundle.normalizer)


def _neural_entry(bundle: ModelBundle, instance: Instance, Z: int) -> Forecast:
    if Z != bundle.geometry.Z:
        raise DimensionMismatchError(
            f"neural forecaster emits Z={bundle.geometry.Z} steps, requested {Z}"
        )
    return neural_forecast(bundle, instance)


FORECASTERS: dict[str, ForecasterFn] = {
    "static": _static_entry,
    "neural": _neural_entry,
}


def run_forecaster(bundle: ModelBundle, instance: Instance, choice: str, Z: int | None = None) -> Forecast:
    if choice not in FORECASTERS:
        raise ValueError(f"unknown forecaster {choice!r}; have {sorted(FORECASTERS)}")
    return FORECASTERS[choice](bundle, instance, bundle.geometry.Z if Z is None else Z)


def future_rul(bundle: ModelBundle, instance: Instance, choice: str = "neural") -> float:
    """Predicted RUL after Z steps: slide the window over the chosen forecast."""
    forecast = run_forecaster(bundle, instance, choice)
    return pm_predict(bundle.pm, slide_window(instance, forecast), bundle.normalizer.rul_scale)
