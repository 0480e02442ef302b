"""Synthetic degradation benchmark: 80 units, 32 raw sensor columns of which
14 vary (6 monotone degradation signals, 8 pure noise) and 18 are constant,
so the feature-selection stage is exercised.  Run as a script to write the
CSV:  python -m presage.benchmark out.csv
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .dataset import UnitSeries
from .mathcore import Rng

RAW_COLUMNS = 32
DEFAULT_UNITS = 80
DEFAULT_SEED = 2024

# column layout: index -> role; informative signs alternate so explanations
# carry both positive and negative importances
INFORMATIVE = {2: +1, 5: -1, 9: +1, 14: -1, 20: +1, 27: -1}
NOISE = (0, 4, 7, 11, 17, 22, 25, 30)
VARYING = tuple(sorted([*INFORMATIVE, *NOISE]))
CONSTANT = tuple(j for j in range(RAW_COLUMNS) if j not in VARYING)

_POWERS = (1.0, 1.3, 0.8, 1.0, 1.15, 0.9)  # per informative column, in index order
_HEALTH_REF = 100.0

# threshold-crossing degradation: health follows a downward random walk and
# the unit fails when it reaches zero, so recent measurements carry strictly
# more information about the remaining life than old ones
_DRIFT_RANGE = (1.0, 1.5)
_START_RANGE = (130.0, 260.0)
_WALK_STD = 2.0


def _signed_power(x: np.ndarray, p: float) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** p


def generate_units(units: int = DEFAULT_UNITS, seed: int = DEFAULT_SEED,
                   min_life: int = 105, max_life: int = 230,
                   signal_noise: float = 0.06) -> list[UnitSeries]:
    """Simulate run-to-failure units over the fixed 32-column layout."""
    rng = Rng(seed)
    slope_rng = rng.child("slopes")
    informative = sorted(INFORMATIVE)
    slopes = {
        j: INFORMATIVE[j] * float(slope_rng.uniform(0.9, 1.8))
        for j in informative
    }
    bases = {j: float(rng.child("base", j).uniform(-2.0, 2.0)) for j in range(RAW_COLUMNS)}
    noise_scales = {j: float(rng.child("nscale", j).uniform(0.3, 1.0)) for j in NOISE}

    out = []
    for u in range(units):
        health = None
        for attempt in range(64):  # redraw until the life lands in range
            urng = rng.child("unit", u, attempt)
            start = float(urng.child("start").uniform(*_START_RANGE))
            drift = float(urng.child("drift").uniform(*_DRIFT_RANGE))
            steps = urng.child("walk").normal(_WALK_STD, max_life + 1)
            path = start + np.cumsum(-drift + steps)
            crossed = np.nonzero(path <= 0.0)[0]
            if crossed.size and min_life <= crossed[0] + 1 <= max_life:
                life = int(crossed[0] + 1)
                health = path[:life]
                break
        if health is None:
            raise RuntimeError(f"unit {u}: no admissible life after 64 attempts")
        t = np.arange(1, life + 1)
        readings = np.zeros((life, RAW_COLUMNS))
        for j in range(RAW_COLUMNS):
            if j in INFORMATIVE:
                power = _POWERS[informative.index(j)]
                signal = slopes[j] * _signed_power(health / _HEALTH_REF, power)
                jitter = float(urng.child("jitter", j).normal(0.15))
                noise = urng.child("eps", j).normal(signal_noise, life)
                readings[:, j] = bases[j] + jitter + signal + noise
            elif j in NOISE:
                readings[:, j] = bases[j] + urng.child("eps", j).normal(noise_scales[j], life)
            else:
                readings[:, j] = bases[j]
        out.append(UnitSeries(unit_id=str(u + 1), cycles=t.copy(), readings=readings))
    return out


def write_csv(path: str | Path, units: list[UnitSeries]) -> None:
    header = ["unit", "cycle"] + [f"s{j:02d}" for j in range(RAW_COLUMNS)]
    lines = [",".join(header)]
    for unit in units:
        for row, cycle in zip(unit.readings, unit.cycles):
            cells = [unit.unit_id, str(int(cycle))] + [f"{v:.6f}" for v in row]
            lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Write the synthetic degradation benchmark CSV.")
    parser.add_argument("out", help="output CSV path")
    parser.add_argument("--units", type=int, default=DEFAULT_UNITS)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = parser.parse_args(argv)
    write_csv(args.out, generate_units(units=args.units, seed=args.seed))
    print(f"wrote {args.units} units to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
