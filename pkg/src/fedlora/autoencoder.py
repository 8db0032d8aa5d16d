"""Minimal dense autoencoder on numpy.

Encoder and decoder are mirror images: a net with hidden sizes [h1, h2]
runs input -> h1 -> h2 -> h1 -> input, activation on every layer except
the linear output. Parameters live in one flat float64 vector (layer
weight matrices row-major, then biases, encoder first), which is also
the canonical order for weight exchange and serialization. Training is
mini-batch Adam on mean squared reconstruction error. Arithmetic is
64-bit; the wire format stores parameters as 32-bit floats.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid")

_MAGIC = b"AEFL"
_VERSION = 0x01


@dataclass(frozen=True)
class ArchSpec:
    """Autoencoder topology. The production pipeline always uses 5 inputs."""

    input_dim: int = 5
    hidden_sizes: tuple[int, ...] = (32,)
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes must be non-empty positive integers")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    def layer_dims(self) -> list[int]:
        """Unit counts per layer boundary, encoder then mirrored decoder."""
        hidden = list(self.hidden_sizes)
        return [self.input_dim] + hidden + hidden[-2::-1] + [self.input_dim]


def param_count(arch: ArchSpec) -> int:
    """Trainable parameters: sum of fan_in*fan_out + fan_out over layers.

    For a single hidden layer h on 5 inputs this is 11h + 5.
    """
    dims = arch.layer_dims()
    return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


class AutoencoderModel:
    """Parameter storage plus layer views; train() mutates it in place."""

    def __init__(self, arch: ArchSpec, seed: int | None = None):
        self.arch = arch
        self.seed = seed
        self._flat = np.zeros(param_count(arch), dtype=np.float64)
        self.weights, self.biases = _layer_views(self._flat, arch)

    @property
    def n_params(self) -> int:
        return self._flat.size

    def copy(self) -> "AutoencoderModel":
        clone = AutoencoderModel(self.arch, seed=self.seed)
        clone._flat[:] = self._flat
        return clone


def _layer_views(flat: np.ndarray, arch: ArchSpec):
    dims = arch.layer_dims()
    weights, biases, offset = [], [], 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
        biases.append(flat[offset : offset + fan_out])
        offset += fan_out
    return weights, biases


def build_autoencoder(arch: ArchSpec, seed: int) -> AutoencoderModel:
    """Seeded init: weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero."""
    model = AutoencoderModel(arch, seed=seed)
    rng = np.random.default_rng(seed)
    for w in model.weights:
        bound = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[:] = rng.uniform(-bound, bound, size=w.shape)
    return model


def serialized_param_bytes(model: AutoencoderModel) -> int:
    """Raw float32 parameter payload size in bytes (container header excluded)."""
    return model.n_params * 4


def payload_kb(n_params: int) -> float:
    """Parameter payload in KB (1024 bytes) for a given parameter count."""
    return n_params * 4 / 1024.0


def mse(y, y_hat) -> float:
    """Mean squared deviation between two equal-shape arrays."""
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(y_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("mse of empty input is undefined")
    d = a - b
    return float(np.mean(d * d))


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return 1.0 / (1.0 + np.exp(-z))  # sigmoid


def _activation_grad(a: np.ndarray, kind: str) -> np.ndarray:
    # expressed via the activation output a
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (a > 0.0).astype(np.float64)
    return a * (1.0 - a)


def forward(model: AutoencoderModel, batch) -> np.ndarray:
    """Reconstruct a batch; output shape equals input shape."""
    return _forward_cached(model, _check_batch(model, batch))[-1]


def _check_batch(model: AutoencoderModel, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.arch.input_dim:
        raise ValueError(
            f"batch must be (n, {model.arch.input_dim}), got {x.shape}"
        )
    return x


def _forward_cached(model: AutoencoderModel, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    last = len(model.weights) - 1
    kind = model.arch.activation
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        acts.append(z if k == last else _activate(z, kind))
    return acts


def loss_and_gradient(model: AutoencoderModel, batch) -> tuple[float, np.ndarray]:
    """Reconstruction MSE of a batch and its gradient in flat canonical order."""
    x = _check_batch(model, batch)
    grad = np.zeros_like(model._flat)
    g_w, g_b = _layer_views(grad, model.arch)
    loss = _backprop(model, x, g_w, g_b)
    return loss, grad


def _backprop(model, x, g_w, g_b) -> float:
    """Fill per-layer gradient views; returns the batch loss."""
    acts = _forward_cached(model, x)
    err = acts[-1] - x
    loss = float(np.mean(err * err))
    delta = err * (2.0 / err.size)
    kind = model.arch.activation
    for k in range(len(model.weights) - 1, -1, -1):
        np.matmul(acts[k].T, delta, out=g_w[k])
        np.sum(delta, axis=0, out=g_b[k])
        if k:
            delta = delta @ model.weights[k].T
            delta *= _activation_grad(acts[k], kind)
    return loss


@dataclass
class TrainConfig:
    epochs: int = 80
    batch_size: int = 16
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0

    def validate(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class AdamState:
    """Adam moment estimates; reusable across train() calls to continue a run."""

    def __init__(self, n_params: int):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, flat_w: np.ndarray, grad: np.ndarray, cfg: TrainConfig):
        self.t += 1
        self.m *= cfg.beta1
        self.m += (1.0 - cfg.beta1) * grad
        self.v *= cfg.beta2
        self.v += (1.0 - cfg.beta2) * grad * grad
        m_hat = self.m / (1.0 - cfg.beta1**self.t)
        v_hat = self.v / (1.0 - cfg.beta2**self.t)
        flat_w -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


def train(
    model: AutoencoderModel,
    data,
    cfg: TrainConfig,
    optimizer: AdamState | None = None,
    shuffle_rng: np.random.Generator | None = None,
) -> list[float]:
    """Mini-batch Adam training; returns mean training loss per epoch.

    Pass a persistent AdamState and shuffle generator to continue a
    previous run (federated clients do); otherwise both start fresh from
    cfg. The last partial batch is kept.
    """
    cfg.validate()
    x = _check_batch(model, data.values if hasattr(data, "values") else data)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if cfg.epochs == 0:
        return []

    opt = optimizer if optimizer is not None else AdamState(model.n_params)
    rng = shuffle_rng if shuffle_rng is not None else np.random.default_rng(cfg.shuffle_seed)
    grad = np.zeros_like(model._flat)
    g_w, g_b = _layer_views(grad, model.arch)

    trace = []
    n_elems = float(x.size)
    for _ in range(cfg.epochs):
        shuffled = x[rng.permutation(n)]
        sq_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            xb = shuffled[start : start + cfg.batch_size]
            batch_loss = _backprop(model, xb, g_w, g_b)
            sq_sum += batch_loss * xb.size
            opt.step(model._flat, grad, cfg)
        trace.append(sq_sum / n_elems)
    return trace


def get_weights(model: AutoencoderModel) -> np.ndarray:
    """Flat float64 parameter vector, canonical order (copy)."""
    return model._flat.copy()


def set_weights(model: AutoencoderModel, vector) -> None:
    vec = np.asarray(vector, dtype=np.float64)
    if vec.shape != (model.n_params,):
        raise ValueError(
            f"weight vector has length {vec.shape}, model needs ({model.n_params},)"
        )
    model._flat[:] = vec


def serialize(model: AutoencoderModel) -> bytes:
    """Pack the model into the AEFL v1 container.

    Layout: magic "AEFL", version byte, layer count (u8), then rows/cols
    per layer (u16 little-endian each), then every parameter as IEEE-754
    float32 little-endian, weight matrix row-major then bias, encoder
    first.
    """
    parts = [_MAGIC, struct.pack("<BB", _VERSION, len(model.weights))]
    for w in model.weights:
        parts.append(struct.pack("<HH", w.shape[0], w.shape[1]))
    parts.append(model._flat.astype("<f4").tobytes())
    return b"".join(parts)


def deserialize(blob: bytes, activation: str = "tanh") -> AutoencoderModel:
    """Rebuild a model from the AEFL container.

    The container does not record the activation; pass it when the model
    was not built with the default.
    """
    if len(blob) < 6:
        raise ValueError("container truncated: missing header")
    if blob[:4] != _MAGIC:
        raise ValueError("bad container magic")
    version, n_layers = struct.unpack_from("<BB", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported container version {version}")
    if n_layers == 0 or n_layers % 2 != 0:
        raise ValueError("layer count must be a positive even number")

    offset = 6
    shapes = []
    for _ in range(n_layers):
        if offset + 4 > len(blob):
            raise ValueError("container truncated: missing layer shapes")
        shapes.append(struct.unpack_from("<HH", blob, offset))
        offset += 4

    dims = [shapes[0][0]] + [cols for _, cols in shapes]
    for i in range(n_layers):
        if shapes[i][0] != dims[i]:
            raise ValueError("inconsistent layer shapes")
    if dims != list(reversed(dims)):
        raise ValueError("layer stack is not a mirrored autoencoder")

    arch = ArchSpec(
        input_dim=dims[0],
        hidden_sizes=tuple(dims[1 : 1 + n_layers // 2]),
        activation=activation,
    )
    expected = param_count(arch)
    payload = blob[offset:]
    if len(payload) != expected * 4:
        raise ValueError(
            f"container payload holds {len(payload)} bytes, expected {expected * 4}"
        )
    model = AutoencoderModel(arch)
    model._flat[:] = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return model
