"""Dense and 1-D convolutional softmax classifiers with manual backprop.

Parameters live in one flat float64 vector. Layout: for each weight layer in
forward order, the weight matrix [fan_in, fan_out] flattened row-major, then
its bias [fan_out]. A conv layer is a dense map applied to im2col patches, so
its weight matrix is [kernel * in_channels, out_channels] with the patch
flattened row-major over (kernel offset, channel). Dense nets flatten the
input window row-major over (timestep, channel), matching the standardizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import StandardizationParams, WindowedSample, apply_standardizer, fit_standardizer
from .errors import ConfigurationError, TrainingError
from .seeding import derive_seed


@dataclass(frozen=True)
class NetSpec:
    """Architecture description.

    kind "dense": flatten -> hidden[0] -> hidden[1] -> n_classes (3 weight
    layers). kind "conv": two conv stages (out_channels, kernel, stride) along
    the window axis, no padding or pooling, then the same 3 dense layers on
    the flattened conv output.
    """

    kind: str
    input_shape: tuple[int, int]  # (window, channels)
    n_classes: int
    hidden: tuple[int, int] = (64, 32)
    conv: tuple[tuple[int, int, int], tuple[int, int, int]] = ((8, 5, 1), (16, 5, 1))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "hidden", tuple(int(v) for v in self.hidden))
        object.__setattr__(
            self, "conv", tuple(tuple(int(v) for v in layer) for layer in self.conv)
        )
        if self.kind not in ("dense", "conv"):
            raise ConfigurationError(f"kind must be 'dense' or 'conv', got {self.kind!r}")
        w, c = self.input_shape
        if w < 1 or c < 1:
            raise ConfigurationError(f"input_shape must be positive, got {self.input_shape}")
        if self.n_classes < 2:
            raise ConfigurationError(f"n_classes must be >= 2, got {self.n_classes}")
        if len(self.hidden) != 2 or any(h < 1 for h in self.hidden):
            raise ConfigurationError(f"hidden must be 2 positive sizes, got {self.hidden}")
        if self.kind == "conv":
            if len(self.conv) != 2:
                raise ConfigurationError(f"conv must describe 2 layers, got {len(self.conv)}")
            for out, kern, stride in self.conv:
                if out < 1 or kern < 1 or stride < 1:
                    raise ConfigurationError(f"bad conv layer {(out, kern, stride)}")
            _plan(self)  # raises if a conv stage collapses below length 1

    @property
    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in _weight_shapes(self))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_shape": list(self.input_shape),
            "n_classes": self.n_classes,
            "hidden": list(self.hidden),
            "conv": [list(layer) for layer in self.conv],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NetSpec":
        try:
            return cls(
                kind=doc["kind"],
                input_shape=tuple(doc["input_shape"]),
                n_classes=int(doc["n_classes"]),
                hidden=tuple(doc.get("hidden", (64, 32))),
                conv=tuple(tuple(l) for l in doc.get("conv", ((8, 5, 1), (16, 5, 1)))),
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"bad net spec: {exc}") from None


def conv_output_length(length: int, kernel: int, stride: int) -> int:
    if kernel > length:
        raise ConfigurationError(f"kernel {kernel} exceeds input length {length}")
    return (length - kernel) // stride + 1


def _plan(spec: NetSpec) -> list[tuple]:
    """Ordered layer descriptors: ("conv", kernel, stride, in_ch, out_ch) or
    ("dense", fan_in, fan_out)."""
    w, c = spec.input_shape
    layers: list[tuple] = []
    if spec.kind == "conv":
        length, ch = w, c
        for out, kern, stride in spec.conv:
            new_len = conv_output_length(length, kern, stride)
            layers.append(("conv", kern, stride, ch, out))
            length, ch = new_len, out
        flat = length * ch
    else:
        flat = w * c
    dims = [flat, spec.hidden[0], spec.hidden[1], spec.n_classes]
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        layers.append(("dense", fan_in, fan_out))
    return layers


def _weight_shapes(spec: NetSpec) -> list[tuple[int, int]]:
    shapes = []
    for entry in _plan(spec):
        if entry[0] == "conv":
            _, kern, _, in_ch, out_ch = entry
            shapes.append((kern * in_ch, out_ch))
        else:
            shapes.append((entry[1], entry[2]))
    return shapes


def unpack_parameters(spec: NetSpec, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Flat vector -> [(W, b), ...] views in layer order."""
    if theta.size != spec.param_count:
        raise ConfigurationError(
            f"parameter vector length {theta.size}, expected {spec.param_count}"
        )
    layers = []
    pos = 0
    for fan_in, fan_out in _weight_shapes(spec):
        w = theta[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = theta[pos : pos + fan_out]
        pos += fan_out
        layers.append((w, b))
    return layers


def pack_parameters(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([w.reshape(-1), b.reshape(-1)]) for w, b in layers])


@dataclass(eq=False)
class NetModel:
    spec: NetSpec
    parameters: np.ndarray

    def __post_init__(self):
        self.parameters = np.asarray(self.parameters, dtype=float).reshape(-1)
        if self.parameters.size != self.spec.param_count:
            raise ConfigurationError(
                f"parameter count {self.parameters.size} != spec count {self.spec.param_count}"
            )
        if not np.all(np.isfinite(self.parameters)):
            raise ConfigurationError("model parameters must be finite")


def init_model(spec: NetSpec) -> NetModel:
    """Seeded uniform init scaled by fan-in (relu-friendly); biases zero."""
    rng = np.random.default_rng(spec.seed)
    layers = []
    for fan_in, fan_out in _weight_shapes(spec):
        limit = np.sqrt(6.0 / fan_in)
        layers.append((rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return NetModel(spec=spec, parameters=pack_parameters(layers))


def _as_batch(spec: NetSpec, batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        x = np.asarray(batch, dtype=float)
        if x.ndim == 2:
            x = x[None, :, :]
    else:
        if len(batch) == 0:
            raise ConfigurationError("empty batch")
        x = np.stack([np.asarray(s.features, dtype=float) for s in batch])
    if x.shape[1:] != spec.input_shape:
        raise ConfigurationError(
            f"batch window shape {x.shape[1:]} != spec input {spec.input_shape}"
        )
    return x


def _patch_index(length: int, kernel: int, stride: int) -> np.ndarray:
    out_len = (length - kernel) // stride + 1
    return np.arange(out_len)[:, None] * stride + np.arange(kernel)[None, :]


def _forward_cached(model: NetModel, x: np.ndarray):
    """Returns (logits, caches) with everything backprop needs."""
    weights = unpack_parameters(model.spec, model.parameters)
    plan = _plan(model.spec)
    caches = []
    a = x
    for entry, (w, b) in zip(plan, weights):
        if entry[0] == "conv":
            _, kern, stride, _, _ = entry
            idx = _patch_index(a.shape[1], kern, stride)
            n, out_len = a.shape[0], idx.shape[0]
            patches = a[:, idx, :].reshape(n, out_len, -1)
            z = patches @ w + b
            caches.append(("conv", patches, idx, z, a.shape))
            a = np.maximum(z, 0.0)
        else:
            if a.ndim == 3:
                a = a.reshape(a.shape[0], -1)
            z = a @ w + b
            caches.append(("dense", a, z))
            a = np.maximum(z, 0.0)
    logits = caches[-1][2]  # last layer emits raw logits, relu above is unused
    return logits, caches


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: NetModel, batch) -> np.ndarray:
    """Class probabilities, shape [B, n_classes]; rows sum to 1."""
    x = _as_batch(model.spec, batch)
    logits, _ = _forward_cached(model, x)
    return _softmax(logits)


def _check_labels(spec: NetSpec, labels, n_rows: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size != n_rows:
        raise ConfigurationError(f"{n_rows} samples but {y.size} labels")
    if y.size and (y.min() < 0 or y.max() >= spec.n_classes):
        raise ConfigurationError(f"labels outside [0, {spec.n_classes})")
    return y


def loss_and_gradient(model: NetModel, batch, labels, penalty=None):
    """Mean softmax cross-entropy (plus optional quadratic anchor) and its
    gradient as a flat vector aligned with model.parameters.

    penalty needs fields lam, theta_star, fisher; the term is
    lam/2 * sum(fisher * (theta - theta_star)^2). lam == 0 contributes nothing
    and is skipped outright so a zero-weight run matches the no-penalty code
    path bit for bit.
    """
    x = _as_batch(model.spec, batch)
    y = _check_labels(model.spec, labels, x.shape[0])
    logits, caches = _forward_cached(model, x)
    n = x.shape[0]

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), y]))

    dz = _softmax(logits)
    dz[np.arange(n), y] -= 1.0
    dz /= n

    weights = unpack_parameters(model.spec, model.parameters)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(weights)  # type: ignore
    for i in range(len(weights) - 1, -1, -1):
        w, _ = weights[i]
        cache = caches[i]
        if cache[0] == "dense":
            _, a_in, z = cache
            gw = a_in.T @ dz
            gb = dz.sum(axis=0)
            if i > 0:
                da = dz @ w.T
        else:
            _, patches, idx, z, in_shape = cache
            gw = np.einsum("nlk,nlo->ko", patches, dz)
            gb = dz.sum(axis=(0, 1))
            if i > 0:
                dpatch = dz @ w.T
                da = np.zeros(in_shape)
                np.add.at(
                    da,
                    (slice(None), idx),
                    dpatch.reshape(in_shape[0], idx.shape[0], idx.shape[1], in_shape[2]),
                )
        grads[i] = (gw, gb)
        if i > 0:
            prev = caches[i - 1]
            z_prev = prev[3] if prev[0] == "conv" else prev[2]
            if da.ndim != z_prev.ndim:
                da = da.reshape(z_prev.shape)
            dz = da * (z_prev > 0)

    grad = pack_parameters(grads)

    if penalty is not None and penalty.lam != 0.0:
        theta = model.parameters
        if penalty.theta_star.size != theta.size or penalty.fisher.size != theta.size:
            raise ConfigurationError("penalty vectors do not match parameter count")
        delta = theta - penalty.theta_star
        loss += 0.5 * penalty.lam * float(np.sum(penalty.fisher * delta * delta))
        grad = grad + penalty.lam * penalty.fisher * delta
    return loss, grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.01
    optimizer: str = "sgd_momentum"
    momentum: float = 0.9
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "sgd_momentum"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")


@dataclass(eq=False)
class TrainResult:
    model: NetModel
    epoch_losses: list[float]


def train(
    model: NetModel,
    samples: Sequence[WindowedSample],
    config: TrainConfig,
    penalty=None,
) -> TrainResult:
    """Minibatch SGD over seeded shuffles; deterministic given inputs.

    Labels come from sample.class_id. Records the mean minibatch loss per
    epoch and raises TrainingError the moment a loss stops being finite.
    """
    x = _as_batch(model.spec, samples)
    y = _check_labels(model.spec, [s.class_id for s in samples], x.shape[0])
    rng = np.random.default_rng(config.shuffle_seed)
    theta = model.parameters.copy()
    velocity = np.zeros_like(theta)
    beta = config.momentum if config.optimizer == "sgd_momentum" else 0.0

    current = NetModel(spec=model.spec, parameters=theta)
    losses: list[float] = []
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            sel = order[start : start + config.batch_size]
            loss, grad = loss_and_gradient(current, x[sel], y[sel], penalty)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            if beta > 0.0:
                velocity = beta * velocity + grad
            else:
                velocity = grad
            theta = theta - config.learning_rate * velocity
            if not np.all(np.isfinite(theta)):
                raise TrainingError(
                    f"non-finite parameters at epoch {epoch}, batch {start // config.batch_size}"
                )
            current = NetModel(spec=model.spec, parameters=theta)
            batch_losses.append(loss)
        losses.append(float(np.mean(batch_losses)))
    return TrainResult(model=current, epoch_losses=losses)


def fisher_diagonal(model: NetModel, samples: Sequence[WindowedSample]) -> np.ndarray:
    """Mean over samples of squared per-sample log-likelihood gradients.

    The per-sample gradient of log p(true class | x) is minus the single-row
    cross-entropy gradient; the sign vanishes under squaring.
    """
    if len(samples) == 0:
        raise ConfigurationError("fisher_diagonal needs at least one sample")
    acc = np.zeros_like(model.parameters)
    for s in samples:
        _, grad = loss_and_gradient(model, [s], [s.class_id])
        acc += grad * grad
    return acc / len(samples)


@dataclass(frozen=True)
class EWCPenalty:
    """Quadratic anchor lam/2 * sum(fisher * (theta - theta_star)^2)."""

    lam: float
    theta_star: np.ndarray
    fisher: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float).reshape(-1))
        object.__setattr__(self, "fisher", np.asarray(self.fisher, dtype=float).reshape(-1))
        if self.lam < 0:
            raise ConfigurationError(f"lam must be >= 0, got {self.lam}")
        if self.theta_star.shape != self.fisher.shape:
            raise ConfigurationError("theta_star and fisher must have equal length")
        if not np.all(np.isfinite(self.theta_star)):
            raise ConfigurationError("theta_star must be finite")
        if not np.all(np.isfinite(self.fisher)) or np.any(self.fisher < 0):
            raise ConfigurationError("fisher must be finite and non-negative")


def extend_output(model: NetModel, n_new_classes: int, seed: int) -> NetModel:
    """Append freshly initialized output units; existing weights untouched.

    Old-class logits are unchanged at the moment of extension because every
    shared weight and every pre-existing output column keeps its value.
    """
    if n_new_classes < 1:
        raise ConfigurationError(f"n_new_classes must be >= 1, got {n_new_classes}")
    spec = model.spec
    new_spec = replace(spec, n_classes=spec.n_classes + n_new_classes)
    layers = [(w.copy(), b.copy()) for w, b in unpack_parameters(spec, model.parameters)]
    w_out, b_out = layers[-1]
    fan_in = w_out.shape[0]
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / fan_in)
    w_new = np.concatenate(
        [w_out, rng.uniform(-limit, limit, size=(fan_in, n_new_classes))], axis=1
    )
    b_new = np.concatenate([b_out, np.zeros(n_new_classes)])
    layers[-1] = (w_new, b_new)
    return NetModel(spec=new_spec, parameters=pack_parameters(layers))


def pad_parameters(
    old_spec: NetSpec, new_spec: NetSpec, vector: np.ndarray, fill: float = 0.0
) -> np.ndarray:
    """Re-layout a flat vector of old_spec into new_spec's layout.

    Only output-head growth is supported; coordinates that exist in new_spec
    but not in old_spec (appended output columns and biases) take `fill`.
    Used to carry anchor and fisher vectors across a head extension.
    """
    if replace(old_spec, n_classes=new_spec.n_classes, seed=new_spec.seed) != new_spec:
        raise ConfigurationError("specs differ beyond the output head")
    if new_spec.n_classes < old_spec.n_classes:
        raise ConfigurationError("new spec must not shrink the output head")
    vector = np.asarray(vector, dtype=float).reshape(-1)
    if vector.size != old_spec.param_count:
        raise ConfigurationError("vector length does not match old spec")
    extra = new_spec.n_classes - old_spec.n_classes
    layers = [(w.copy(), b.copy()) for w, b in unpack_parameters(old_spec, vector)]
    w_out, b_out = layers[-1]
    pad_w = np.full((w_out.shape[0], extra), fill)
    pad_b = np.full(extra, fill)
    layers[-1] = (np.concatenate([w_out, pad_w], axis=1), np.concatenate([b_out, pad_b]))
    return pack_parameters(layers)


@dataclass(eq=False)
class Ensemble:
    """Fixed-size committee sharing one standardizer; default 5 members."""

    members: list[NetModel]
    standardizer: StandardizationParams

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError("ensemble needs at least one member")
        n = self.members[0].spec.n_classes
        shape = self.members[0].spec.input_shape
        for m in self.members:
            if m.spec.n_classes != n or m.spec.input_shape != shape:
                raise ConfigurationError("ensemble members disagree on output or input shape")

    @property
    def n_classes(self) -> int:
        return self.members[0].spec.n_classes


def fit_ensemble(
    spec: NetSpec,
    samples: Sequence[WindowedSample],
    config: TrainConfig,
    seed: int,
    n_members: int = 5,
) -> Ensemble:
    """Standardize on the given mix, then train n_members nets that differ
    only in derived init and shuffle seeds."""
    if n_members < 1:
        raise ConfigurationError(f"n_members must be >= 1, got {n_members}")
    standardizer = fit_standardizer(list(samples))
    standardized = [apply_standardizer(standardizer, s) for s in samples]
    members = []
    for m in range(n_members):
        member_spec = replace(spec, seed=derive_seed(seed, "init", m))
        member_cfg = replace(config, shuffle_seed=derive_seed(seed, "shuffle", m))
        result = train(init_model(member_spec), standardized, member_cfg)
        members.append(result.model)
    return Ensemble(members=members, standardizer=standardizer)


def member_probabilities(ensemble: Ensemble, batch: Sequence[WindowedSample]) -> np.ndarray:
    """Per-member softmax outputs on a standardized batch, [members, B, classes]."""
    standardized = [apply_standardizer(ensemble.standardizer, s) for s in batch]
    x = np.stack([s.features for s in standardized])
    return np.stack([forward(m, x) for m in ensemble.members])


def predict(ensemble: Ensemble, batch: Sequence[WindowedSample]) -> np.ndarray:
    """Standardize, average member probabilities, argmax (ties to lower class)."""
    probs = member_probabilities(ensemble, batch).mean(axis=0)
    return np.argmax(probs, axis=1)


# ---------------------------------------------------------------------------
# checkpoints: JSON header plus the flat parameter vector in decimal


def save_model(path: str | Path, model: NetModel, standardizer: StandardizationParams | None = None) -> None:
    doc = {
        "spec": model.spec.to_dict(),
        "standardizer": None
        if standardizer is None
        else {"mean": [float(v) for v in standardizer.mean], "std": [float(v) for v in standardizer.std]},
        "parameters": [float(v) for v in model.parameters],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> tuple[NetModel, StandardizationParams | None]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        spec = NetSpec.from_dict(doc["spec"])
        params = np.array(doc["parameters"], dtype=float)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"{path}: bad checkpoint: {exc}") from None
    if params.size != spec.param_count:
        raise ConfigurationError(
            f"{path}: checkpoint holds {params.size} parameters, spec expects {spec.param_count}"
        )
    std = None
    if doc.get("standardizer") is not None:
        std = StandardizationParams(
            mean=np.array(doc["standardizer"]["mean"], dtype=float),
            std=np.array(doc["standardizer"]["std"], dtype=float),
        )
    return NetModel(spec=spec, parameters=params), std


def save_ensemble(path: str | Path, ensemble: Ensemble) -> None:
    doc = {
        "standardizer": {
            "mean": [float(v) for v in ensemble.standardizer.mean],
            "std": [float(v) for v in ensemble.standardizer.std],
        },
        "members": [
            {"spec": m.spec.to_dict(), "parameters": [float(v) for v in m.parameters]}
            for m in ensemble.members
        ],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_ensemble(path: str | Path) -> Ensemble:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        std = StandardizationParams(
            mean=np.array(doc["standardizer"]["mean"], dtype=float),
            std=np.array(doc["standardizer"]["std"], dtype=float),
        )
        members = []
        for entry in doc["members"]:
            spec = NetSpec.from_dict(entry["spec"])
            params = np.array(entry["parameters"], dtype=float)
            if params.size != spec.param_count:
                raise ConfigurationError(
                    f"{path}: member holds {params.size} parameters, spec expects {spec.param_count}"
                )
            members.append(NetModel(spec=spec, parameters=params))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"{path}: bad ensemble file: {exc}") from None
    return Ensemble(members=members, standardizer=std)
