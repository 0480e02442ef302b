import numpy as np
import pytest

from presage.dataset import (
    UnitSeries,
    WindowGeometry,
    apply_normalizer,
    fit_normalizer,
    forecast_pairs,
    make_windows,
    normalize_steps,
)
from presage.models import ModelBundle, TrainConfig, nf_train, pm_train, xyz_train

RAMP_GEO = WindowGeometry(N=12, J=2, Z=3)


def build_ramp_bundle():
    """Small trained bundle over units whose features are clean RUL ramps."""
    rng = np.random.default_rng(7)
    units = []
    for u in range(12):
        life = int(rng.integers(40, 60))
        t = np.arange(1, life + 1)
        rul = (life - t).astype(float)
        readings = np.stack(
            [rul / 10.0, 2.0 - rul / 15.0 + 0.02 * rng.normal(size=life)], axis=1
        )
        units.append(UnitSeries(f"u{u}", t, readings))
    windows = [w for u in units for w in make_windows(u, RAMP_GEO)]
    norm = fit_normalizer(windows)
    normalized = [apply_normalizer(w, norm) for w in windows]
    cfg = TrainConfig(epochs=1000, learning_rate=0.03, seed=5)
    # small hidden layers keep the learned map smooth enough to extrapolate
    pm = pm_train(normalized, norm.rul_scale, cfg, hidden=(16, 8))
    nf_pairs = [
        (apply_normalizer(i, norm), normalize_steps(t, norm))
        for u in units
        for i, t in forecast_pairs(u, RAMP_GEO)
    ]
    fast = TrainConfig(epochs=60, learning_rate=0.02, seed=5)
    nf = nf_train(nf_pairs, RAMP_GEO, fast, hidden=(16, 8))
    xyz = xyz_train(normalized, pm, norm.rul_scale, RAMP_GEO, fast, hidden=(16, 8))
    bundle = ModelBundle(pm, nf, xyz, norm, RAMP_GEO)
    return bundle, normalized


@pytest.fixture(scope="session")
def trained_ramp():
    return build_ramp_bundle()


def small_units(count=14, seed=3):
    """Six-feature degradation units: 2 rising + 2 falling signals, 2 noise."""
    rng = np.random.default_rng(seed)
    units = []
    for u in range(count):
        life = int(rng.integers(42, 64))
        t = np.arange(1, life + 1)
        rul = (life - t).astype(float)
        cols = [
            rul / 12.0 + 0.05 * rng.normal(size=life),
            3.0 - rul / 15.0 + 0.05 * rng.normal(size=life),
            0.5 + rul / 25.0 + 0.04 * rng.normal(size=life),
            -1.0 - rul / 30.0 + 0.04 * rng.normal(size=life),
            rng.normal(size=life) * 0.8,
            2.0 + rng.normal(size=life) * 0.5,
        ]
        units.append(UnitSeries(f"u{u}", t, np.stack(cols, axis=1)))
    return units


def write_units_csv(path, units):
    width = units[0].readings.shape[1]
    lines = [",".join(["unit", "cycle"] + [f"s{j}" for j in range(width)])]
    for unit in units:
        for cycle, row in zip(unit.cycles, unit.readings):
            lines.append(",".join([unit.unit_id, str(int(cycle))] + [repr(float(v)) for v in row]))
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture(scope="session")
def small_engine(tmp_path_factory):
    """A trained bundle + instance store on disk, built through the CLI."""
    from click.testing import CliRunner

    from presage.app.cli import main as cli_main

    root = tmp_path_factory.mktemp("engine")
    csv_path = root / "units.csv"
    write_units_csv(csv_path, small_units())
    bundle_path = root / "engine.bundle"
    store_path = root / "engine.instances"
    runner = CliRunner()
    result = runner.invoke(
        cli_main,
        [
            "train",
            "--data", str(csv_path),
            "--out", str(bundle_path),
            "--instances-out", str(store_path),
            "--window", "12",
            "--horizon", "3",
            "--epochs", "60",
            "--learning-rate", "0.02",
            "--seed", "1",
        ],
    )
    assert result.exit_code == 0, result.output
    return {"csv": csv_path, "bundle": bundle_path, "store": store_path}
