"""Two-class (signal / noise) CNN detector with hand-written backprop.

Architecture: conv(1x3, valid, F filters) -> ReLU -> flatten -> dense(H) -> ReLU
-> dropout -> dense(2) -> softmax. Inputs are real ``[2, M]`` I/Q tensors; all
batched functions take ``[B, 2, M]``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from riscovert.signals import as_rng, to_iq

KERNEL = 3
MAGIC = b"RISCNN\x00\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHHHHf")


class Label(enum.IntEnum):
    SIGNAL = 0
    NOISE = 1


class InvalidDatasetError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class DetectorModel:
    conv_weights: np.ndarray  # [F, 1, 3]
    conv_bias: np.ndarray  # [F]
    dense1_weights: np.ndarray  # [H, F*2*(M-2)]
    dense1_bias: np.ndarray  # [H]
    out_weights: np.ndarray  # [2, H]
    out_bias: np.ndarray  # [2]
    dropout_rate: float
    m: int

    PARAMS = ("conv_weights", "conv_bias", "dense1_weights", "dense1_bias", "out_weights", "out_bias")

    @property
    def filters(self) -> int:
        return self.conv_weights.shape[0]

    @property
    def hidden(self) -> int:
        return self.dense1_weights.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAMS}

    def copy(self) -> DetectorModel:
        return DetectorModel(**{k: v.copy() for k, v in self.params().items()},
                             dropout_rate=self.dropout_rate, m=self.m)


@dataclass(frozen=True)
class LabeledExample:
    input: np.ndarray  # [2, M]
    label: Label


@dataclass
class Dataset:
    """Array-backed labelled I/Q dataset; the first ``n_train`` rows train."""

    inputs: np.ndarray  # [n, 2, M] float
    labels: np.ndarray  # [n] int, Label values
    n_train: int

    def __post_init__(self):
        if self.inputs.ndim != 3 or self.inputs.shape[1] != 2:
            raise InvalidDatasetError(f"inputs must be [n, 2, M], got {self.inputs.shape}")
        if len(self.labels) != len(self.inputs):
            raise InvalidDatasetError("inputs and labels differ in length")

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> LabeledExample:
        return LabeledExample(self.inputs[i], Label(int(self.labels[i])))

    @property
    def m(self) -> int:
        return self.inputs.shape[2]

    @classmethod
    def from_examples(cls, examples, n_train=None) -> Dataset:
        examples = list(examples)
        inputs = np.stack([np.asarray(ex.input, dtype=float) for ex in examples])
        labels = np.array([int(ex.label) for ex in examples], dtype=np.int64)
        return cls(inputs, labels, len(examples) if n_train is None else n_train)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass
class TrainResult:
    model: DetectorModel
    initial_loss: float
    history: list[dict] = field(default_factory=list)

    @property
    def train_accuracy(self) -> float:
        return self.history[-1]["train_accuracy"]

    @property
    def val_accuracy(self) -> float | None:
        return self.history[-1]["val_accuracy"]


def init_model(m: int = 16, filters: int = 16, hidden: int = 64, dropout_rate: float = 0.1,
               seed=0) -> DetectorModel:
    """He-uniform weights (limit sqrt(6 / fan_in)), zero biases."""
    if m < KERNEL:
        raise ValueError(f"frame length must be >= {KERNEL}, got {m}")
    if not 0 <= dropout_rate < 1:
        raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    rng = as_rng(seed)
    flat = filters * 2 * (m - KERNEL + 1)

    def he(shape, fan_in):
        lim = np.sqrt(6.0 / fan_in)
        return rng.uniform(-lim, lim, size=shape)

    return DetectorModel(
        conv_weights=he((filters, 1, KERNEL), KERNEL),
        conv_bias=np.zeros(filters),
        dense1_weights=he((hidden, flat), flat),
        dense1_bias=np.zeros(hidden),
        out_weights=he((2, hidden), hidden),
        out_bias=np.zeros(2),
        dropout_rate=float(dropout_rate),
        m=m,
    )


def zero_model(m: int = 16, filters: int = 16, hidden: int = 64) -> DetectorModel:
    model = init_model(m, filters, hidden, seed=0)
    for p in model.params().values():
        p[...] = 0.0
    return model


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dropout_mask(shape, rate: float, rng) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, else ``1/(1-rate)``."""
    if rate == 0:
        return np.ones(shape)
    keep = as_rng(rng).random(shape) >= rate
    return keep / (1.0 - rate)


def _check_batch(model: DetectorModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (2, model.m):
        raise ValueError(f"expected input of shape [2, {model.m}], got {x.shape[-2:] if x.ndim >= 2 else x.shape}")
    return x


def _forward(model: DetectorModel, x: np.ndarray, mask=None):
    patches = sliding_window_view(x, KERNEL, axis=2)  # [B, 2, T, 3]
    z1 = np.einsum("brtk,fk->bfrt", patches, model.conv_weights[:, 0, :])
    z1 += model.conv_bias[None, :, None, None]
    a1 = np.maximum(z1, 0.0).reshape(len(x), -1)
    z2 = a1 @ model.dense1_weights.T + model.dense1_bias
    a2 = np.maximum(z2, 0.0)
    if mask is not None:
        a2 = a2 * mask
    logits = a2 @ model.out_weights.T + model.out_bias
    cache = dict(patches=patches, z1=z1, a1=a1, z2=z2, a2=a2, mask=mask)
    return softmax(logits), cache


def _backward(model: DetectorModel, probs, targets, cache, want_input=False, want_params=True):
    """Gradients of the *summed* cross-entropy over the batch."""
    b = len(probs)
    d3 = probs.copy()
    d3[np.arange(b), targets] -= 1.0
    grads = {}
    if want_params:
        grads["out_weights"] = d3.T @ cache["a2"]
        grads["out_bias"] = d3.sum(axis=0)
    da2 = d3 @ model.out_weights
    if cache["mask"] is not None:
        da2 = da2 * cache["mask"]
    dz2 = da2 * (cache["z2"] > 0)
    if want_params:
        grads["dense1_weights"] = dz2.T @ cache["a1"]
        grads["dense1_bias"] = dz2.sum(axis=0)
    dz1 = (dz2 @ model.dense1_weights).reshape(cache["z1"].shape) * (cache["z1"] > 0)
    if want_params:
        grads["conv_weights"] = np.einsum("bfrt,brtk->fk", dz1, cache["patches"])[:, None, :]
        grads["conv_bias"] = dz1.sum(axis=(0, 2, 3))
    if want_input:
        dpatch = np.einsum("bfrt,fk->brtk", dz1, model.conv_weights[:, 0, :])
        t = dpatch.shape[2]
        dx = np.zeros((b, 2, t + KERNEL - 1))
        for k in range(KERNEL):
            dx[:, :, k:k + t] += dpatch[:, :, :, k]
        grads["input"] = dx
    return grads


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return -np.log(np.clip(probs[np.arange(len(probs)), targets], 1e-300, None))


def forward(model: DetectorModel, x, train_mode: bool = False, seed=None) -> np.ndarray:
    """Class probabilities ``[p_signal, p_noise]`` for one ``[2, M]`` input or a batch."""
    xb = _check_batch(model, x)
    mask = None
    if train_mode and model.dropout_rate > 0:
        mask = dropout_mask((len(xb), model.hidden), model.dropout_rate, seed)
    probs, _ = _forward(model, xb, mask)
    return probs[0] if np.ndim(x) == 2 else probs


def predict_proba(model: DetectorModel, frames) -> np.ndarray:
    """Inference-mode probabilities for complex frames ``[M]`` or ``[B, M]``."""
    return forward(model, to_iq(frames))


def predict_signal(model: DetectorModel, frames) -> np.ndarray:
    """Boolean 'signal' decision per frame; ties go to 'signal'."""
    probs = np.atleast_2d(predict_proba(model, frames))
    return probs[:, Label.SIGNAL] >= probs[:, Label.NOISE]


def predict_label(model: DetectorModel, frame) -> Label:
    return Label.SIGNAL if predict_signal(model, frame)[0] else Label.NOISE


def loss_and_grads(model: DetectorModel, x, labels, mask=None):
    """Mean cross-entropy over a batch and its parameter gradients."""
    xb = _check_batch(model, x)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    probs, cache = _forward(model, xb, mask)
    grads = _backward(model, probs, labels, cache)
    n = len(xb)
    return float(cross_entropy(probs, labels).mean()), {k: v / n for k, v in grads.items()}


def mean_loss(model: DetectorModel, x, labels) -> float:
    xb = _check_batch(model, x)
    probs, _ = _forward(model, xb)
    return float(cross_entropy(probs, np.atleast_1d(labels)).mean())


def input_gradient(model: DetectorModel, x, target_label) -> np.ndarray:
    """d(cross-entropy toward ``target_label``)/d(input), inference mode.

    For a batch, row ``i`` is the gradient of the loss of sample ``i`` alone.
    """
    xb = _check_batch(model, x)
    targets = np.full(len(xb), int(target_label)) if np.ndim(target_label) == 0 else np.asarray(target_label)
    probs, cache = _forward(model, xb)
    dx = _backward(model, probs, targets, cache, want_input=True, want_params=False)["input"]
    return dx[0] if np.ndim(x) == 2 else dx


def complex_input_gradient(model: DetectorModel, frame, target_label) -> np.ndarray:
    """Input gradient repackaged as ``dL/dI + j dL/dQ``.

    With this convention ``Re(conj(g) * delta).sum()`` is the first-order loss
    change for a complex perturbation ``delta``.
    """
    g = input_gradient(model, to_iq(frame), target_label)
    return g[..., 0, :] + 1j * g[..., 1, :]


def accuracy(model: DetectorModel, x, labels, batch: int = 8192) -> float:
    correct = 0
    for start in range(0, len(x), batch):
        probs = forward(model, x[start:start + batch])
        pred = np.where(probs[:, Label.SIGNAL] >= probs[:, Label.NOISE], Label.SIGNAL, Label.NOISE)
        correct += int(np.sum(pred == labels[start:start + batch]))
    return correct / len(x)


def _full_loss(model, x, labels, batch: int = 8192) -> float:
    total = 0.0
    for start in range(0, len(x), batch):
        probs, _ = _forward(model, x[start:start + batch])
        total += float(cross_entropy(probs, labels[start:start + batch]).sum())
    return total / len(x)


def train(dataset, cfg: TrainConfig, filters: int = 16, hidden: int = 64,
          dropout_rate: float = 0.1, log=None) -> TrainResult:
    """Mini-batch Adam on mean cross-entropy. Deterministic given ``cfg.seed``."""
    if not isinstance(dataset, Dataset):
        dataset = Dataset.from_examples(dataset)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    x_tr, y_tr = dataset.inputs[:dataset.n_train], labels[:dataset.n_train]
    x_va, y_va = dataset.inputs[dataset.n_train:], labels[dataset.n_train:]
    if len(np.unique(y_tr)) < 2:
        raise InvalidDatasetError("training data must contain both 'signal' and 'noise' examples")

    rng = as_rng(cfg.seed)
    model = init_model(dataset.m, filters, hidden, dropout_rate, seed=rng)
    m1 = {k: np.zeros_like(v) for k, v in model.params().items()}
    m2 = {k: np.zeros_like(v) for k, v in model.params().items()}
    step = 0
    result = TrainResult(model=model, initial_loss=_full_loss(model, x_tr, y_tr))

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x_tr))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            mask = None
            if model.dropout_rate > 0:
                mask = dropout_mask((len(idx), model.hidden), model.dropout_rate, rng)
            _, grads = loss_and_grads(model, x_tr[idx], y_tr[idx], mask)
            step += 1
            lr_t = cfg.learning_rate * np.sqrt(1 - cfg.beta2 ** step) / (1 - cfg.beta1 ** step)
            for name, p in model.params().items():
                g = grads[name]
                m1[name] = cfg.beta1 * m1[name] + (1 - cfg.beta1) * g
                m2[name] = cfg.beta2 * m2[name] + (1 - cfg.beta2) * g * g
                p -= lr_t * m1[name] / (np.sqrt(m2[name]) + cfg.adam_eps)
        row = {
            "epoch": epoch,
            "train_loss": _full_loss(model, x_tr, y_tr),
            "train_accuracy": accuracy(model, x_tr, y_tr),
            "val_accuracy": accuracy(model, x_va, y_va) if len(x_va) else None,
        }
        result.history.append(row)
        if log is not None:
            log(row)
    return result


def save_model(model: DetectorModel, path) -> None:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, model.m, model.filters, model.hidden,
                          model.dropout_rate)
    body = b"".join(np.asarray(p, dtype="<f4").tobytes() for p in model.params().values())
    Path(path).write_bytes(header + body)


def load_model(path) -> DetectorModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: file too short for a model header")
    magic, version, m, filters, hidden, dropout = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version} (expected {FORMAT_VERSION})")
    flat = filters * 2 * (m - KERNEL + 1)
    shapes = [(filters, 1, KERNEL), (filters,), (hidden, flat), (hidden,), (2, hidden), (2,)]
    expected = _HEADER.size + 4 * sum(int(np.prod(s)) for s in shapes)
    if len(data) != expected:
        raise ModelFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    offset = _HEADER.size
    tensors = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(float)
        tensors.append(arr.reshape(shape))
        offset += 4 * count
    # Stored as float32; round-trip the dropout rate the same way.
    return DetectorModel(*tensors, dropout_rate=float(np.float32(dropout)), m=m)
