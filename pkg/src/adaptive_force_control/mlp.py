"""The adaptation network: (reference, force, stiffness) -> proportional gain.

A small fully connected net, 3 inputs -> 6 -> 3 -> 1, rectifier on every
node including the output.  Supervision comes from solved gain policies
rewritten as feature/label pairs.  Everything here is plain numpy: the
network is tiny and the training loop's determinism matters more than speed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .contact import ContactModel
from .policy import PolicyTable

LAYER_SHAPES = ((6, 3), (3, 6), (1, 3))

# Gains handed to the controller stay inside the solver's input range.
KP_MIN = 0.0
KP_MAX = 1.0


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature standardization fitted on the training set."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        if self.mean.shape != (3,) or self.std.shape != (3,):
            raise ValueError("scaler mean/std must be 3-vectors")
        if not np.all(self.std > 0.0):
            raise ValueError("scaler std components must be positive")

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.std

    def inverse_transform(self, standardized: np.ndarray) -> np.ndarray:
        return standardized * self.std + self.mean


def fit_scaler(features: np.ndarray) -> FeatureScaler:
    """Fit mean/std per column; constant columns get unit scale."""
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return FeatureScaler(mean=mean, std=std)


@dataclass
class MlpParams:
    """Weights and biases of the three affine layers."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ValueError("expected exactly 3 layers")
        for k, (w, b, shape) in enumerate(zip(self.weights, self.biases, LAYER_SHAPES), 1):
            if w.shape != shape:
                raise ValueError(f"layer {k} weight shape {w.shape}, expected {shape}")
            if b.shape != (shape[0],):
                raise ValueError(f"layer {k} bias shape {b.shape}, expected ({shape[0]},)")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} contains non-finite entries")

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_params(seed: int = 0) -> MlpParams:
    """He-style random init; output bias starts positive so the final
    rectifier is not born dead (labels are nonnegative)."""
    rng = np.random.default_rng(seed)
    weights = [
        rng.normal(0.0, math.sqrt(2.0 / shape[1]), shape) for shape in LAYER_SHAPES
    ]
    biases = [np.zeros(6), np.zeros(3), np.full(1, 0.1)]
    return MlpParams(weights=weights, biases=biases)


def forward_trace(params: MlpParams, x_std: np.ndarray):
    """All intermediate activations for a standardized batch (n, 3).

    Returns (z1, a1, z2, a2, z3, a3); a3[:, 0] is the unclamped output.
    """
    w1, w2, w3 = params.weights
    b1, b2, b3 = params.biases
    z1 = x_std @ w1.T + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w2.T + b2
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ w3.T + b3
    a3 = np.maximum(z3, 0.0)
    return z1, a1, z2, a2, z3, a3


def forward(params: MlpParams, scaler: FeatureScaler, features) -> float | np.ndarray:
    """Network output for raw features, clamped to the valid gain range.

    ``features`` is one (r, f, s) triple or an (n, 3) batch.
    """
    arr = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite features")
    single = arr.ndim == 1
    batch = arr[None, :] if single else arr
    if batch.shape[1:] != (3,):
        raise ValueError(f"expected 3 features, got shape {arr.shape}")
    out = forward_trace(params, scaler.transform(batch))[5][:, 0]
    out = np.clip(out, KP_MIN, KP_MAX)
    return float(out[0]) if single else out


def loss_and_gradient(
    params: MlpParams,
    features: np.ndarray,
    labels: np.ndarray,
    scaler: FeatureScaler | None = None,
) -> tuple[float, MlpParams]:
    """Batch MSE and its exact gradient by reverse-mode differentiation.

    The inference clamp is not part of the training path; the output
    rectifier is.  Pass scaler=None when features are already standardized.
    """
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("batch must be a non-empty (n, 3) array")
    x = scaler.transform(features) if scaler is not None else features
    y = np.asarray(labels, dtype=float)
    w1, w2, w3 = params.weights
    z1, a1, z2, a2, z3, a3 = forward_trace(params, x)
    n = x.shape[0]
    resid = a3[:, 0] - y
    mse = float(resid @ resid) / n
    d3 = (2.0 / n) * resid[:, None] * (z3 > 0.0)
    d2 = (d3 @ w3) * (z2 > 0.0)
    d1 = (d2 @ w2) * (z1 > 0.0)
    grads = MlpParams(
        weights=[d1.T @ x, d2.T @ a1, d3.T @ a2],
        biases=[d1.sum(axis=0), d2.sum(axis=0), d3.sum(axis=0)],
    )
    return mse, grads


@dataclass(frozen=True)
class TrainConfig:
    """Supervised training hyperparameters."""

    epochs: int = 200
    learning_rate: float = 1e-4
    batch_size: int = 64
    mini_batches_per_batch: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.mini_batches_per_batch < 1:
            raise ValueError("batch sizes must be positive")
        if self.batch_size % self.mini_batches_per_batch != 0:
            raise ValueError(
                f"batch_size {self.batch_size} not divisible by "
                f"mini_batches_per_batch {self.mini_batches_per_batch}"
            )
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")


@dataclass
class TrainResult:
    """Trained network plus bookkeeping from the run."""

    params: MlpParams
    scaler: FeatureScaler
    loss_history: list[float]
    validation_mse: float


def build_dataset(
    policies: list[PolicyTable], model: ContactModel
) -> tuple[np.ndarray, np.ndarray]:
    """Rewrite solved policies as supervised pairs for one contact zone.

    Every policy node becomes one sample: features (reference, force at the
    node's depth, analytic stiffness there), label the node's gain.  Returns
    (features (n, 3), labels (n,)); concatenate across zones for pooling.
    """
    if not policies:
        raise ValueError("need at least one policy")
    blocks = []
    labels = []
    for table in policies:
        f = model.force_at(table.x_grid)
        s = model.stiffness_at(table.x_grid)
        r = np.full_like(f, table.reference)
        blocks.append(np.column_stack([r, f, s]))
        labels.append(table.kp_values)
    return np.concatenate(blocks), np.concatenate(labels)


def train(features: np.ndarray, labels: np.ndarray, config: TrainConfig) -> TrainResult:
    """Adam/MSE training loop over seeded shuffled mini-batches.

    A seeded fraction of the data is held out and scored once at the end
    (reported, not used for any decision).  Batches of ``batch_size`` are
    drawn per epoch and split into ``mini_batches_per_batch`` consecutive
    slices, one optimizer step each; a trailing partial batch is dropped.
    Bit-reproducible for a fixed config.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if features.ndim != 2 or features.shape[1] != 3:
        raise ValueError("features must be (n, 3)")
    if labels.shape != (features.shape[0],):
        raise ValueError("labels must be (n,)")
    if features.shape[0] < config.batch_size:
        raise ValueError(
            f"dataset of {features.shape[0]} smaller than one batch ({config.batch_size})"
        )
    rng = np.random.default_rng(config.seed)
    n_total = features.shape[0]
    n_val = int(round(config.validation_fraction * n_total))
    split = rng.permutation(n_total)
    val_idx, train_idx = split[:n_val], split[n_val:]
    if train_idx.size < config.batch_size:
        raise ValueError("training split smaller than one batch; lower validation_fraction")

    scaler = fit_scaler(features[train_idx])
    x_train = scaler.transform(features[train_idx])
    y_train = labels[train_idx]

    params = init_params(config.seed)
    m_state = MlpParams(
        weights=[np.zeros_like(w) for w in params.weights],
        biases=[np.zeros_like(b) for b in params.biases],
    )
    v_state = m_state.copy()
    step = 0
    mini = config.batch_size // config.mini_batches_per_batch
    loss_history: list[float] = []
    for _ in range(config.epochs):
        perm = rng.permutation(train_idx.size)
        epoch_losses = []
        for start in range(0, train_idx.size - config.batch_size + 1, config.batch_size):
            batch = perm[start : start + config.batch_size]
            for k in range(config.mini_batches_per_batch):
                sub = batch[k * mini : (k + 1) * mini]
                mse, grads = loss_and_gradient(params, x_train[sub], y_train[sub])
                epoch_losses.append(mse)
                step += 1
                bc1 = 1.0 - config.beta1**step
                bc2 = 1.0 - config.beta2**step
                for group in ("weights", "biases"):
                    for p, g, m, v in zip(
                        getattr(params, group),
                        getattr(grads, group),
                        getattr(m_state, group),
                        getattr(v_state, group),
                    ):
                        m *= config.beta1
                        m += (1.0 - config.beta1) * g
                        v *= config.beta2
                        v += (1.0 - config.beta2) * g * g
                        p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        loss_history.append(float(np.mean(epoch_losses)))

    if n_val > 0:
        x_val = scaler.transform(features[val_idx])
        pred = forward_trace(params, x_val)[5][:, 0]
        val_mse = float(np.mean((pred - labels[val_idx]) ** 2))
    else:
        val_mse = math.nan
    return TrainResult(
        params=params, scaler=scaler, loss_history=loss_history, validation_mse=val_mse
    )


def save_model(path: str | Path, params: MlpParams, scaler: FeatureScaler) -> None:
    """Serialize network and scaler as versioned JSON."""
    doc = {
        "version": 1,
        "scaler": {"mean": scaler.mean.tolist(), "std": scaler.std.tolist()},
        "layers": [
            {"w": w.tolist(), "b": b.tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path: str | Path) -> tuple[MlpParams, FeatureScaler]:
    """Load a model file, validating version, shapes, and finiteness."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"model file {path}: invalid JSON at line {exc.lineno}") from exc
    if doc.get("version") != 1:
        raise ValueError(f"model file {path}: unsupported version {doc.get('version')!r}")
    try:
        scaler = FeatureScaler(
            mean=np.asarray(doc["scaler"]["mean"], dtype=float),
            std=np.asarray(doc["scaler"]["std"], dtype=float),
        )
        layers = doc["layers"]
        weights = [np.asarray(layer["w"], dtype=float) for layer in layers]
        biases = [np.asarray(layer["b"], dtype=float) for layer in layers]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"model file {path}: malformed field ({exc})") from exc
    params = MlpParams(weights=weights, biases=biases)
    return params, scaler


def save_dataset(path: str | Path, features: np.ndarray, labels: np.ndarray) -> None:
    """Write the supervised dataset as CSV (r_n,f_n,dfdx_n_per_m,kp)."""
    lines = ["r_n,f_n,dfdx_n_per_m,kp"]
    for (r, f, s), kp in zip(features, labels):
        lines.append(f"{float(r)!r},{float(f)!r},{float(s)!r},{float(kp)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a dataset CSV written by :func:`save_dataset`."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "r_n,f_n,dfdx_n_per_m,kp":
        raise ValueError(f"{path}: expected header r_n,f_n,dfdx_n_per_m,kp")
    try:
        data = np.asarray([[float(v) for v in line.split(",")] for line in lines[1:] if line])
    except ValueError as exc:
        raise ValueError(f"{path}: bad numeric row ({exc})") from exc
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns, got {data.shape[1]}")
    return data[:, :3], data[:, 3]
