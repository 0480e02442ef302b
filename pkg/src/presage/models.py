"""Feed-forward neural substrate and the three trained models: the RUL
predictor, the neural forecaster, and the target-conditioned trajectory
model, with versioned binary persistence."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import Instance, Normalizer, WindowGeometry
from .mathcore import DimensionMismatchError, Rng

BUNDLE_MAGIC = b"PRSGMB"
BUNDLE_VERSION = 1

DEFAULT_HIDDEN = (128, 64)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class BundleFormatError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    validation_fraction: float = 0.0
    patience: int = 5

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class Mlp:
    """Dense network: tanh on hidden layers, identity on the output layer."""

    sizes: list[int]
    weights: list[np.ndarray]  # (d_in, d_out) per layer
    biases: list[np.ndarray]
    loss_trace: list[float] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]


def mlp_init(sizes: list[int], rng: Rng) -> Mlp:
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    weights, biases = [], []
    for i, (din, dout) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = 1.0 / np.sqrt(din)
        weights.append(rng.child("w", i).normal(scale, (din, dout)))
        biases.append(np.zeros(dout))
    return Mlp(sizes=list(sizes), weights=weights, biases=biases)


def mlp_forward(mlp: Mlp, X: np.ndarray) -> np.ndarray:
    """Batch forward pass; X is (M, input_dim)."""
    if X.ndim != 2 or X.shape[1] != mlp.input_dim:
        raise DimensionMismatchError(
            f"input shape {X.shape} incompatible with network input {mlp.input_dim}"
        )
    h = X
    last = len(mlp.weights) - 1
    for i, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = h @ W + b
        h = z if i == last else np.tanh(z)
    return h


def _forward_cached(mlp: Mlp, X: np.ndarray) -> list[np.ndarray]:
    activations = [X]
    last = len(mlp.weights) - 1
    for i, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = activations[-1] @ W + b
        activations.append(z if i == last else np.tanh(z))
    return activations


def mlp_loss_and_gradients(
    mlp: Mlp, X: np.ndarray, Y: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """MSE over all output elements and its gradient for every parameter."""
    acts = _forward_cached(mlp, X)
    pred = acts[-1]
    m, k = pred.shape
    diff = pred - Y
    loss = float(np.mean(diff**2))
    delta = 2.0 * diff / (m * k)
    grads_w = [np.empty(0)] * len(mlp.weights)
    grads_b = [np.empty(0)] * len(mlp.biases)
    for i in range(len(mlp.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ mlp.weights[i].T) * (1.0 - acts[i] ** 2)  # tanh'
    return loss, grads_w, grads_b


def mlp_train(mlp: Mlp, X: np.ndarray, Y: np.ndarray, config: TrainConfig, rng: Rng) -> list[float]:
    """Mini-batch gradient descent; returns the per-epoch loss trace.

    Deterministic for a given rng.  With a validation fraction set, stops
    once the held-out loss fails to improve for `patience` epochs and
    restores the best weights seen.
    """
    m = X.shape[0]
    if Y.shape[0] != m:
        raise DimensionMismatchError("X and Y row counts differ")

    val_X = val_Y = None
    if config.validation_fraction > 0.0 and m >= 2:
        n_val = max(1, int(round(m * config.validation_fraction)))
        order = rng.child("val-split").permutation(m)
        val_idx, train_idx = order[:n_val], order[n_val:]
        if len(train_idx) == 0:
            raise ValueError("validation fraction leaves no training rows")
        val_X, val_Y = X[val_idx], Y[val_idx]
        X, Y = X[train_idx], Y[train_idx]
        m = X.shape[0]

    trace: list[float] = []
    best_val = np.inf
    best_params = None
    stale = 0
    for epoch in range(config.epochs):
        order = rng.child("shuffle", epoch).permutation(m)
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is detected below
            for start in range(0, m, config.batch_size):
                idx = order[start : start + config.batch_size]
                _, grads_w, grads_b = mlp_loss_and_gradients(mlp, X[idx], Y[idx])
                for i in range(len(mlp.weights)):
                    mlp.weights[i] -= config.learning_rate * grads_w[i]
                    mlp.biases[i] -= config.learning_rate * grads_b[i]
            epoch_loss = float(np.mean((mlp_forward(mlp, X) - Y) ** 2))
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch)
        trace.append(epoch_loss)

        if val_X is not None:
            val_loss = float(np.mean((mlp_forward(mlp, val_X) - val_Y) ** 2))
            if val_loss < best_val:
                best_val = val_loss
                best_params = ([w.copy() for w in mlp.weights], [b.copy() for b in mlp.biases])
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best_params is not None:
        mlp.weights, mlp.biases = best_params
    mlp.loss_trace = trace
    return trace


def flatten_window(values: np.ndarray) -> np.ndarray:
    """Row-major flattening of a (J, N) window."""
    return np.ascontiguousarray(values, dtype=float).reshape(-1)


def steps_to_vec(steps: np.ndarray) -> np.ndarray:
    """Row-major flattening of a (Z, J) step block."""
    return np.ascontiguousarray(steps, dtype=float).reshape(-1)


def vec_to_steps(vec: np.ndarray, geometry: WindowGeometry) -> np.ndarray:
    return np.asarray(vec, dtype=float).reshape(geometry.Z, geometry.J)


def pm_train(
    instances: list[Instance],
    rul_scale: float,
    config: TrainConfig,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
) -> Mlp:
    """Train the RUL predictor on normalized windows; targets scaled by rul_scale."""
    if not instances:
        raise ValueError("no training instances")
    X = np.vstack([flatten_window(inst.values) for inst in instances])
    y = np.array([[inst.rul_target / rul_scale] for inst in instances])
    mlp = mlp_init([X.shape[1], *hidden, 1], Rng(config.seed).child("pm-init"))
    mlp_train(mlp, X, y, config, Rng(config.seed).child("pm-train"))
    return mlp


def pm_predict(pm: Mlp, instance: Instance, rul_scale: float) -> float:
    """Denormalized RUL prediction, clamped below at zero."""
    flat = flatten_window(instance.values)
    if flat.shape[0] != pm.input_dim:
        raise DimensionMismatchError(
            f"window of {flat.shape[0]} values does not fit model input {pm.input_dim}"
        )
    out = mlp_forward(pm, flat[None, :])[0, 0]
    return max(0.0, float(out) * rul_scale)


def pm_predict_window(pm: Mlp, values: np.ndarray, rul_scale: float) -> float:
    """pm_predict for a bare (J, N) matrix, used by explainers probing the model."""
    out = mlp_forward(pm, flatten_window(values)[None, :])[0, 0]
    return max(0.0, float(out) * rul_scale)


def nf_train(
    pairs: list[tuple[Instance, np.ndarray]],
    geometry: WindowGeometry,
    config: TrainConfig,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
) -> Mlp:
    """Train the forecaster on (window -> true next Z steps) pairs."""
    if not pairs:
        raise ValueError("no trainable pairs: every unit lacks Z successor cycles")
    X = np.vstack([flatten_window(inst.values) for inst, _ in pairs])
    Y = np.vstack([steps_to_vec(target) for _, target in pairs])
    mlp = mlp_init([geometry.J * geometry.N, *hidden, geometry.J * geometry.Z], Rng(config.seed).child("nf-init"))
    mlp_train(mlp, X, Y, config, Rng(config.seed).child("nf-train"))
    return mlp


def xyz_train(
    instances: list[Instance],
    pm: Mlp,
    rul_scale: float,
    geometry: WindowGeometry,
    config: TrainConfig,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    masked_augmentation: bool = True,
) -> Mlp:
    """Train the conditional trajectory model.

    Each instance contributes one pair: input = first X steps plus the
    predictor's scaled output for the full window, target = last Z steps.

    The lead block alone predicts most of the tail, which starves the
    single conditioning input of gradient and leaves the model unable to
    answer what-if targets far from the lead's own implied one.  With
    `masked_augmentation` each pair is therefore also trained with its
    lead zeroed (a feature-mean window in normalized space), forcing the
    target-conditional map through the conditioning channel.
    """
    if not instances:
        raise ValueError("no training instances")
    x_steps = geometry.X
    rows, targets = [], []
    for inst in instances:
        lead = flatten_window(inst.values[:, :x_steps])
        y_cond = pm_predict(pm, inst, rul_scale) / rul_scale
        rows.append(np.concatenate([lead, [y_cond]]))
        targets.append(steps_to_vec(inst.values[:, x_steps:].T))
    X = np.vstack(rows)
    Y = np.vstack(targets)
    if masked_augmentation:
        masked = X.copy()
        masked[:, :-1] = 0.0
        X = np.vstack([X, masked])
        Y = np.vstack([Y, Y])
    mlp = mlp_init(
        [geometry.J * x_steps + 1, *hidden, geometry.J * geometry.Z],
        Rng(config.seed).child("xyz-init"),
    )
    mlp_train(mlp, X, Y, config, Rng(config.seed).child("xyz-train"))
    return mlp


def xyz_infer(xyz: Mlp, lead_steps: np.ndarray, y_scaled: float, geometry: WindowGeometry) -> np.ndarray:
    """Run the conditional model on a (J, X) lead block; returns normalized (Z, J)."""
    vec = np.concatenate([flatten_window(lead_steps), [y_scaled]])
    if vec.shape[0] != xyz.input_dim:
        raise DimensionMismatchError(
            f"conditional input of {vec.shape[0]} values does not fit model input {xyz.input_dim}"
        )
    return vec_to_steps(mlp_forward(xyz, vec[None, :])[0], geometry)


@dataclass
class ModelBundle:
    """Everything needed to serve one trained engine, persisted together."""

    pm: Mlp
    nf: Mlp
    xyz: Mlp
    normalizer: Normalizer
    geometry: WindowGeometry
    metadata: dict = field(default_factory=dict)  # seeds, epochs, final losses, split

    def __post_init__(self):
        jn = self.geometry.J * self.geometry.N
        jz = self.geometry.J * self.geometry.Z
        jx = self.geometry.J * self.geometry.X + 1
        checks = [
            (self.pm.input_dim == jn and self.pm.output_dim == 1, "pm"),
            (self.nf.input_dim == jn and self.nf.output_dim == jz, "nf"),
            (self.xyz.input_dim == jx and self.xyz.output_dim == jz, "xyz"),
        ]
        for ok, name in checks:
            if not ok:
                raise BundleFormatError(f"{name} dimensions are inconsistent with geometry")


def _pack_mlp(mlp: Mlp) -> bytes:
    parts = [struct.pack("<I", len(mlp.sizes))]
    parts.append(struct.pack(f"<{len(mlp.sizes)}I", *mlp.sizes))
    for W, b in zip(mlp.weights, mlp.biases):
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.blob):
            raise BundleFormatError("truncated bundle file")
        out = struct.unpack_from(fmt, self.blob, self.offset)
        self.offset += size
        return out

    def take_f64(self, count: int) -> np.ndarray:
        size = 8 * count
        if self.offset + size > len(self.blob):
            raise BundleFormatError("truncated bundle file")
        arr = np.frombuffer(self.blob, dtype="<f8", count=count, offset=self.offset)
        self.offset += size
        return arr.astype(float)

    def take_bytes(self, count: int) -> bytes:
        if self.offset + count > len(self.blob):
            raise BundleFormatError("truncated bundle file")
        out = self.blob[self.offset : self.offset + count]
        self.offset += count
        return out


def _unpack_mlp(reader: _Reader) -> Mlp:
    (n_sizes,) = reader.take("<I")
    if not 2 <= n_sizes <= 64:
        raise BundleFormatError(f"implausible layer table length {n_sizes}")
    sizes = list(reader.take(f"<{n_sizes}I"))
    if any(s < 1 or s > 10**7 for s in sizes):
        raise BundleFormatError(f"implausible layer sizes {sizes}")
    weights, biases = [], []
    for din, dout in zip(sizes[:-1], sizes[1:]):
        weights.append(reader.take_f64(din * dout).reshape(din, dout).copy())
        biases.append(reader.take_f64(dout).copy())
    return Mlp(sizes=sizes, weights=weights, biases=biases)


def save_bundle(bundle: ModelBundle, path) -> None:
    geo = bundle.geometry
    norm = bundle.normalizer
    meta_blob = json.dumps(bundle.metadata, sort_keys=True).encode()
    parts = [
        BUNDLE_MAGIC,
        struct.pack("<H", BUNDLE_VERSION),
        struct.pack("<III", geo.N, geo.J, geo.Z),
        np.ascontiguousarray(norm.mean, dtype="<f8").tobytes(),
        np.ascontiguousarray(norm.std, dtype="<f8").tobytes(),
        struct.pack("<d", norm.rul_scale),
        _pack_mlp(bundle.pm),
        _pack_mlp(bundle.nf),
        _pack_mlp(bundle.xyz),
        struct.pack("<Q", len(meta_blob)),
        meta_blob,
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_bundle(path) -> ModelBundle:
    with open(path, "rb") as fh:
        blob = fh.read()
    reader = _Reader(blob)
    if reader.take_bytes(len(BUNDLE_MAGIC)) != BUNDLE_MAGIC:
        raise BundleFormatError("bad magic: not a model bundle")
    (version,) = reader.take("<H")
    if version != BUNDLE_VERSION:
        raise BundleFormatError(f"unsupported bundle version {version}")
    n, j, z = reader.take("<III")
    try:
        geometry = WindowGeometry(N=n, J=j, Z=z)
    except ValueError as exc:
        raise BundleFormatError(f"corrupt geometry: {exc}") from exc
    normalizer = Normalizer(
        mean=reader.take_f64(j).copy(),
        std=reader.take_f64(j).copy(),
        rul_scale=reader.take("<d")[0],
    )
    pm = _unpack_mlp(reader)
    nf = _unpack_mlp(reader)
    xyz = _unpack_mlp(reader)
    (meta_len,) = reader.take("<Q")
    try:
        metadata = json.loads(reader.take_bytes(meta_len).decode())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BundleFormatError(f"corrupt metadata block: {exc}") from exc
    return ModelBundle(pm=pm, nf=nf, xyz=xyz, normalizer=normalizer, geometry=geometry, metadata=metadata)
