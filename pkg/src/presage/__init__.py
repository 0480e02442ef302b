"""Prescriptive-maintenance engine for multivariate sensor windows: RUL
prediction, local surrogate explanations, what-if modifications, and
conditional trajectory prescription."""

from .dataset import Instance, Normalizer, UnitSeries, WindowGeometry
from .mathcore import LinearFit, PcaResult, Rng
from .models import ModelBundle, TrainConfig, load_bundle, save_bundle

__all__ = [
    "Instance",
    "LinearFit",
    "ModelBundle",
    "Normalizer",
    "PcaResult",
    "Rng",
    "TrainConfig",
    "UnitSeries",
    "WindowGeometry",
    "load_bundle",
    "save_bundle",
]

__version__ = "0.1.0"
