"""Ingestion of unit/cycle sensor CSVs, feature selection, sliding-window
instance extraction with RUL targets, normalization, and the on-disk
instance store."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mathcore import check_matrix

STORE_MAGIC = b"PRSG"
STORE_VERSION = 1
META_FILENAME = "meta.json"


class DataError(Exception):
    """Base class for ingestion and store failures."""


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, lines: list[int]):
        super().__init__(message)
        self.lines = lines


class FeatureSelectionError(DataError):
    pass


class NormalizerError(DataError):
    pass


class StoreFormatError(DataError):
    pass


@dataclass
class UnitSeries:
    """One monitored unit: cycles 1..len with a constant-width reading row each."""

    unit_id: str
    cycles: np.ndarray  # int, strictly 1,2,...,len
    readings: np.ndarray  # (len, F)


@dataclass
class Instance:
    """A J x N window of sensor values; v[j][n] = feature j at relative step n."""

    values: np.ndarray  # (J, N)
    rul_target: float
    unit_id: str
    end_cycle: int
    synthetic: bool = False  # True for windows assembled from forecasts

    @property
    def J(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]


@dataclass
class Normalizer:
    """Training-set feature statistics plus the RUL scaling constant."""

    mean: np.ndarray  # (J,)
    std: np.ndarray  # (J,)
    rul_scale: float


@dataclass(frozen=True)
class WindowGeometry:
    """Window length N, feature count J, forecast horizon Z; X = N - Z."""

    N: int
    J: int
    Z: int

    def __post_init__(self):
        if self.N < 2 or self.J < 1:
            raise ValueError(f"invalid geometry N={self.N}, J={self.J}")
        if not 1 <= self.Z < self.N:
            raise ValueError(f"horizon Z={self.Z} must satisfy 1 <= Z < N={self.N}")

    @property
    def X(self) -> int:
        return self.N - self.Z


@dataclass
class CsvSchema:
    """Column mapping: names (with a header row) or 0-based indices (without)."""

    unit: str | int = "unit"
    cycle: str | int = "cycle"
    sensors: list[str | int] | None = None  # None: every remaining column


def _split_line(line: str, delimiter: str | None) -> list[str]:
    if delimiter == ",":
        return [cell.strip() for cell in line.split(",")]
    return line.split()


def load_units(path: str | Path, schema: CsvSchema | None = None) -> list[UnitSeries]:
    """Parse a delimited unit/cycle sensor file into cycle-sorted UnitSeries.

    The delimiter (comma or whitespace) and the presence of a header row are
    auto-detected from the first line.  Malformed rows raise ParseError with
    their 1-based line numbers.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    raw_lines = path.read_text().splitlines()
    lines = [(i + 1, ln) for i, ln in enumerate(raw_lines) if ln.strip()]
    if not lines:
        raise DataError(f"empty file: {path}")

    delimiter = "," if "," in lines[0][1] else None
    first_cells = _split_line(lines[0][1], delimiter)

    def _numeric(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    has_header = not all(_numeric(c) for c in first_cells)
    header = first_cells if has_header else None
    data_lines = lines[1:] if has_header else lines
    if not data_lines:
        raise DataError(f"no data rows in {path}")

    def _resolve(col: str | int, what: str) -> int:
        if isinstance(col, int):
            if not 0 <= col < len(first_cells):
                raise SchemaError(f"{what} column index {col} out of range")
            return col
        if header is None:
            raise SchemaError(f"{what} column named {col!r} requires a header row")
        if col not in header:
            raise SchemaError(f"missing {what} column {col!r}")
        return header.index(col)

    unit_idx = _resolve(schema.unit, "unit-id")
    cycle_idx = _resolve(schema.cycle, "cycle")
    if schema.sensors is None:
        sensor_idx = [i for i in range(len(first_cells)) if i not in (unit_idx, cycle_idx)]
    else:
        sensor_idx = [_resolve(c, "sensor") for c in schema.sensors]
    if not sensor_idx:
        raise SchemaError("no sensor columns")

    rows: dict[str, list[tuple[int, np.ndarray]]] = {}
    bad: list[tuple[int, str]] = []
    width = len(first_cells)
    for line_no, line in data_lines:
        cells = _split_line(line, delimiter)
        if len(cells) != width:
            bad.append((line_no, f"expected {width} columns, got {len(cells)}"))
            continue
        try:
            cycle = int(float(cells[cycle_idx]))
            values = np.array([float(cells[i]) for i in sensor_idx])
        except ValueError:
            bad.append((line_no, "non-numeric cell"))
            continue
        rows.setdefault(cells[unit_idx], []).append((cycle, values))
    if bad:
        detail = "; ".join(f"line {n}: {why}" for n, why in bad[:5])
        raise ParseError(f"{len(bad)} malformed row(s): {detail}", [n for n, _ in bad])

    units = []
    for unit_id in sorted(rows, key=lambda u: (len(u), u)):
        entries = sorted(rows[unit_id], key=lambda e: e[0])
        cycles = np.array([c for c, _ in entries], dtype=int)
        if cycles[0] != 1 or np.any(np.diff(cycles) != 1):
            raise DataError(f"unit {unit_id}: cycles must run 1..{len(cycles)} without gaps")
        units.append(
            UnitSeries(
                unit_id=unit_id,
                cycles=cycles,
                readings=check_matrix(np.vstack([v for _, v in entries]), f"unit {unit_id}"),
            )
        )
    return units


def select_features(
    units: list[UnitSeries], variance_threshold: float
) -> tuple[list[UnitSeries], list[int]]:
    """Drop features whose variance pooled over all units is below threshold."""
    if not units:
        raise DataError("no units to select features from")
    pooled = np.vstack([u.readings for u in units])
    variances = pooled.var(axis=0)
    retained = [j for j in range(pooled.shape[1]) if variances[j] >= variance_threshold]
    if not retained:
        raise FeatureSelectionError("variance threshold dropped every feature")
    reduced = [
        UnitSeries(u.unit_id, u.cycles, u.readings[:, retained].copy()) for u in units
    ]
    return reduced, retained


def make_windows(
    unit: UnitSeries,
    geometry: WindowGeometry,
    stride: int = 1,
    rul_cap: float | None = None,
) -> list[Instance]:
    """Cut fixed-length windows at the given stride; RUL counts remaining cycles.

    Units shorter than N yield an empty list.
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    length = len(unit.cycles)
    n = geometry.N
    if unit.readings.shape[1] != geometry.J:
        raise DataError(
            f"unit {unit.unit_id} has {unit.readings.shape[1]} features, geometry expects {geometry.J}"
        )
    instances = []
    for offset in range(0, length - n + 1, stride):
        end_cycle = offset + n
        rul = float(length - end_cycle)
        if rul_cap is not None:
            rul = min(rul, float(rul_cap))
        instances.append(
            Instance(
                values=unit.readings[offset : offset + n].T.copy(),
                rul_target=rul,
                unit_id=unit.unit_id,
                end_cycle=end_cycle,
            )
        )
    return instances


def forecast_pairs(
    unit: UnitSeries, geometry: WindowGeometry, stride: int = 1
) -> list[tuple[Instance, np.ndarray]]:
    """Windows paired with their true next Z steps (as Z x J matrices).

    Windows whose unit ends within Z cycles of the window end are excluded.
    """
    pairs = []
    for inst in make_windows(unit, geometry, stride):
        start = inst.end_cycle  # 0-based row index of the first future step
        if start + geometry.Z <= len(unit.cycles):
            pairs.append((inst, unit.readings[start : start + geometry.Z].copy()))
    return pairs


def fit_normalizer(instances: list[Instance]) -> Normalizer:
    """Per-feature z-score statistics pooled over all windows and steps."""
    if not instances:
        raise NormalizerError("cannot fit a normalizer on an empty training set")
    stacked = np.concatenate([inst.values for inst in instances], axis=1)  # (J, total)
    mean = stacked.mean(axis=1)
    std = stacked.std(axis=1)
    if np.any(std < 1e-12):
        dead = [int(j) for j in np.where(std < 1e-12)[0]]
        raise NormalizerError(f"zero-variance feature(s) {dead}; run select_features first")
    rul_scale = max(inst.rul_target for inst in instances)
    if rul_scale <= 0.0:
        raise NormalizerError("max training RUL must be positive")
    return Normalizer(mean=mean, std=std, rul_scale=float(rul_scale))


def apply_normalizer(instance: Instance, normalizer: Normalizer) -> Instance:
    values = (instance.values - normalizer.mean[:, None]) / normalizer.std[:, None]
    return Instance(values, instance.rul_target, instance.unit_id, instance.end_cycle, instance.synthetic)


def denormalize_instance(instance: Instance, normalizer: Normalizer) -> Instance:
    values = instance.values * normalizer.std[:, None] + normalizer.mean[:, None]
    return Instance(values, instance.rul_target, instance.unit_id, instance.end_cycle, instance.synthetic)


def normalize_steps(steps: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    """Normalize a (Z, J) step-major matrix with per-feature statistics."""
    return (steps - normalizer.mean[None, :]) / normalizer.std[None, :]


def denormalize_steps(steps: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    return steps * normalizer.std[None, :] + normalizer.mean[None, :]


@dataclass
class InstanceStore:
    """A persisted set of raw instances plus the statistics to normalize them."""

    instances: list[Instance]
    normalizer: Normalizer
    retained_indices: list[int]
    geometry: WindowGeometry


def _pack_record(inst: Instance) -> bytes:
    j, n = inst.values.shape
    uid = inst.unit_id.encode()
    return b"".join(
        [
            STORE_MAGIC,
            struct.pack("<H", STORE_VERSION),
            struct.pack("<II", j, n),
            struct.pack("<q", inst.end_cycle),
            struct.pack("<d", inst.rul_target),
            struct.pack("<B", 1 if inst.synthetic else 0),
            struct.pack("<H", len(uid)),
            uid,
            np.ascontiguousarray(inst.values, dtype="<f8").tobytes(),
        ]
    )


def _unpack_record(blob: bytes, name: str) -> Instance:
    try:
        if blob[:4] != STORE_MAGIC:
            raise StoreFormatError(f"{name}: bad magic")
        (version,) = struct.unpack_from("<H", blob, 4)
        if version != STORE_VERSION:
            raise StoreFormatError(f"{name}: unsupported version {version}")
        j, n = struct.unpack_from("<II", blob, 6)
        (end_cycle,) = struct.unpack_from("<q", blob, 14)
        (rul,) = struct.unpack_from("<d", blob, 22)
        (synthetic,) = struct.unpack_from("<B", blob, 30)
        (uid_len,) = struct.unpack_from("<H", blob, 31)
        uid = blob[33 : 33 + uid_len].decode()
        values = np.frombuffer(blob, dtype="<f8", count=j * n, offset=33 + uid_len)
        if values.size != j * n:
            raise StoreFormatError(f"{name}: truncated payload")
        return Instance(values.reshape(j, n).copy(), rul, uid, end_cycle, bool(synthetic))
    except (struct.error, ValueError, IndexError, UnicodeDecodeError) as exc:
        raise StoreFormatError(f"{name}: corrupt record ({exc})") from exc


def save_instances(directory: str | Path, store: InstanceStore) -> None:
    """Persist raw instances as one binary record per file plus a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, inst in enumerate(store.instances):
        if inst.values.shape != (store.geometry.J, store.geometry.N):
            raise StoreFormatError(f"instance {i} shape {inst.values.shape} does not match geometry")
        (directory / f"{i:06d}.prsg").write_bytes(_pack_record(inst))
    meta = {
        "version": STORE_VERSION,
        "count": len(store.instances),
        "geometry": {"N": store.geometry.N, "J": store.geometry.J, "Z": store.geometry.Z},
        "normalizer": {
            "mean": store.normalizer.mean.tolist(),
            "std": store.normalizer.std.tolist(),
            "rul_scale": store.normalizer.rul_scale,
        },
        "retained_indices": list(store.retained_indices),
    }
    (directory / META_FILENAME).write_text(json.dumps(meta, indent=2))


def load_instances(directory: str | Path) -> InstanceStore:
    directory = Path(directory)
    meta_path = directory / META_FILENAME
    if not meta_path.exists():
        raise StoreFormatError(f"missing {META_FILENAME} in {directory}")
    try:
        meta = json.loads(meta_path.read_text())
        geometry = WindowGeometry(**meta["geometry"])
        normalizer = Normalizer(
            mean=np.array(meta["normalizer"]["mean"], dtype=float),
            std=np.array(meta["normalizer"]["std"], dtype=float),
            rul_scale=float(meta["normalizer"]["rul_scale"]),
        )
        retained = [int(i) for i in meta["retained_indices"]]
        count = int(meta["count"])
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise StoreFormatError(f"corrupt sidecar: {exc}") from exc
    instances = []
    for i in range(count):
        record_path = directory / f"{i:06d}.prsg"
        if not record_path.exists():
            raise StoreFormatError(f"missing record {record_path.name}")
        instances.append(_unpack_record(record_path.read_bytes(), record_path.name))
    return InstanceStore(instances, normalizer, retained, geometry)
