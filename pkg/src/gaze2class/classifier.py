"""A small convolutional network trained from scratch with plain SGD.

Architecture: conv 3x3 (8 filters, zero-padded to same size) -> ReLU ->
2x2 max pool -> conv 3x3 (16 filters) -> ReLU -> 2x2 max pool -> flatten ->
affine -> softmax over the two classes. Everything runs in float64 with
analytic gradients; the update rule is w <- w - lr * g with the mini-batch
gradient averaged over the batch.

Checkpoints use the ``GZMDL1`` format: magic, six uint32 LE header fields
(input side, input channels, conv1 filters, conv2 filters, kernel size,
class count), then the parameter tensors in declaration order as float64 LE.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ConfigError, DataError, TrainingError
from .gaze_data import Diagnosis, LabeledDataset, LabeledSample
from .seeding import derive_seed
from .validation import as_image, as_image_stack

CONV1_FILTERS = 8
CONV2_FILTERS = 16
KERNEL_SIZE = 3
N_CLASSES = 2
IN_CHANNELS = 1
PROB_FLOOR = 1e-12

CHECKPOINT_MAGIC = b"GZMDL1"


@dataclass
class ModelParams:
    """All trainable tensors; also reused as the container for gradients."""

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("conv1_w", self.conv1_w),
            ("conv1_b", self.conv1_b),
            ("conv2_w", self.conv2_w),
            ("conv2_b", self.conv2_b),
            ("dense_w", self.dense_w),
            ("dense_b", self.dense_b),
        ]

    def copy(self) -> "ModelParams":
        return ModelParams(*(arr.copy() for _, arr in self.tensors()))

    @property
    def input_side(self) -> int:
        side = 4 * int(round(math.sqrt(self.dense_w.shape[0] / CONV2_FILTERS)))
        return side


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults give 48 iterations/epoch on 480 samples."""

    epochs: int = 10
    batch_size: int = 10
    learning_rate: float = 0.01
    seed: int = 0
    input_side: int = 64

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        # learning_rate 0 is allowed as an explicit no-op training run
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.input_side % 4 != 0 or self.input_side < 4:
            raise ConfigError("input_side must be a positive multiple of 4")
        return self


@dataclass
class Prediction:
    """Softmax output for one image."""

    probabilities: np.ndarray
    argmax_label: Diagnosis


@dataclass
class TrainingCurve:
    """Per-iteration losses plus per-epoch train accuracy (percent)."""

    losses: list[tuple[int, int, float]] = field(default_factory=list)
    epoch_train_accuracy: list[tuple[int, float]] = field(default_factory=list)

    def iterations_in_epoch(self, epoch: int) -> int:
        return sum(1 for e, _, _ in self.losses if e == epoch)

    def epoch_mean_loss(self, epoch: int) -> float:
        vals = [loss for e, _, loss in self.losses if e == epoch]
        return float(np.mean(vals))

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        acc = dict(self.epoch_train_accuracy)
        last_iter = {}
        for e, i, _ in self.losses:
            last_iter[e] = max(last_iter.get(e, 0), i)
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "iteration", "loss", "train_accuracy"])
            for e, i, loss in self.losses:
                cell = repr(acc[e]) if (e in acc and i == last_iter[e]) else ""
                writer.writerow([e, i, repr(loss), cell])


def load_curve_csv(path) -> TrainingCurve:
    path = Path(path)
    if not path.exists():
        raise DataError(f"curve CSV not found: {path}")
    curve = TrainingCurve()
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["epoch", "iteration", "loss", "train_accuracy"]:
            raise DataError(f"{path}: unexpected curve CSV header")
        for row in reader:
            epoch, iteration, loss = int(row[0]), int(row[1]), float(row[2])
            curve.losses.append((epoch, iteration, loss))
            if row[3]:
                curve.epoch_train_accuracy.append((epoch, float(row[3])))
    return curve


# ---------------------------------------------------------------------------
# Layer primitives (batched, float64)
# ---------------------------------------------------------------------------


def _conv_forward(x, w, b):
    """Same-size 3x3 convolution via im2col. Returns (out, cols) with cols cached."""
    batch, _, h, width = x.shape
    f = w.shape[0]
    pad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(pad, (KERNEL_SIZE, KERNEL_SIZE), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(batch * h * width, -1)
    out = cols @ w.reshape(f, -1).T + b
    return out.reshape(batch, h, width, f).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, w, need_dx=True):
    batch, f, h, width = dout.shape
    c = w.shape[1]
    dmat = dout.transpose(0, 2, 3, 1).reshape(batch * h * width, f)
    dw = (dmat.T @ cols).reshape(f, c, KERNEL_SIZE, KERNEL_SIZE)
    db = dmat.sum(axis=0)
    dx = None
    if need_dx:
        # full correlation with spatially flipped kernels, channels swapped
        wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dx, _ = _conv_forward(dout, wflip, np.zeros(c))
    return dw, db, dx


def _maxpool(x):
    b, c, h, w = x.shape
    win = (
        x.reshape(b, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h // 2, w // 2, 4)
    )
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _maxpool_backward(dout, idx, in_shape):
    b, c, h, w = in_shape
    d = np.zeros((b, c, h // 2, w // 2, 4))
    np.put_along_axis(d, idx[..., None], dout[..., None], axis=-1)
    return d.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class _Cache:
    params: ModelParams
    cols1: np.ndarray
    z1: np.ndarray
    idx1: np.ndarray
    cols2: np.ndarray
    z2: np.ndarray
    idx2: np.ndarray
    flat: np.ndarray
    probs: np.ndarray


def _forward_batch(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, _Cache]:
    batch = x.shape[0]
    side = params.input_side
    if x.shape[1:] != (side, side):
        raise ValueError(f"expected input images of shape ({side}, {side}), got {x.shape[1:]}")
    a0 = np.ascontiguousarray(x, dtype=np.float64)[:, None, :, :]
    z1, cols1 = _conv_forward(a0, params.conv1_w, params.conv1_b)
    p1, idx1 = _maxpool(np.maximum(z1, 0.0))
    z2, cols2 = _conv_forward(p1, params.conv2_w, params.conv2_b)
    p2, idx2 = _maxpool(np.maximum(z2, 0.0))
    flat = p2.reshape(batch, -1)
    logits = flat @ params.dense_w + params.dense_b
    probs = _softmax(logits)
    cache = _Cache(params, cols1, z1, idx1, cols2, z2, idx2, flat, probs)
    return probs, cache


def _backward_batch(params: ModelParams, cache: _Cache, y_idx: np.ndarray) -> ModelParams:
    """Gradients of the mean cross-entropy over the batch."""
    batch = len(y_idx)
    dlogits = cache.probs.copy()
    dlogits[np.arange(batch), y_idx] -= 1.0
    dlogits /= batch
    d_dense_w = cache.flat.T @ dlogits
    d_dense_b = dlogits.sum(axis=0)
    dflat = dlogits @ params.dense_w.T
    side4 = params.input_side // 4
    dp2 = dflat.reshape(batch, CONV2_FILTERS, side4, side4)
    da2 = _maxpool_backward(dp2, cache.idx2, cache.z2.shape)
    dz2 = da2 * (cache.z2 > 0.0)
    d_conv2_w, d_conv2_b, dp1 = _conv_backward(dz2, cache.cols2, params.conv2_w)
    da1 = _maxpool_backward(dp1, cache.idx1, cache.z1.shape)
    dz1 = da1 * (cache.z1 > 0.0)
    d_conv1_w, d_conv1_b, _ = _conv_backward(dz1, cache.cols1, params.conv1_w, need_dx=False)
    return ModelParams(d_conv1_w, d_conv1_b, d_conv2_w, d_conv2_b, d_dense_w, d_dense_b)


def _batch_loss(probs: np.ndarray, y_idx: np.ndarray) -> float:
    p_true = np.clip(probs[np.arange(len(y_idx)), y_idx], PROB_FLOOR, 1.0)
    return float(np.mean(-np.log(p_true)))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def init_params(seed: int, input_side: int = 64) -> ModelParams:
    """Fan-in scaled uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    if input_side % 4 != 0 or input_side < 4:
        raise ConfigError("input_side must be a positive multiple of 4")
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = math.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    flat = (input_side // 4) ** 2 * CONV2_FILTERS
    return ModelParams(
        conv1_w=uniform((CONV1_FILTERS, IN_CHANNELS, KERNEL_SIZE, KERNEL_SIZE), 9),
        conv1_b=np.zeros(CONV1_FILTERS),
        conv2_w=uniform((CONV2_FILTERS, CONV1_FILTERS, KERNEL_SIZE, KERNEL_SIZE), 72),
        conv2_b=np.zeros(CONV2_FILTERS),
        dense_w=uniform((flat, N_CLASSES), flat),
        dense_b=np.zeros(N_CLASSES),
    )


def forward(params: ModelParams, img) -> tuple[Prediction, _Cache]:
    """Run the network on one image, keeping the activation cache for backward."""
    img = as_image(img)
    probs, cache = _forward_batch(params, img[None])
    label = Diagnosis.from_index(int(np.argmax(probs[0])))
    return Prediction(probabilities=probs[0], argmax_label=label), cache


def cross_entropy(pred: Prediction, label: Diagnosis) -> float:
    """-log of the probability assigned to the true class, clamped at 1e-12."""
    p = float(pred.probabilities[label.index])
    return -math.log(min(max(p, PROB_FLOOR), 1.0))


def backward(params: ModelParams, cache: _Cache, label: Diagnosis) -> ModelParams:
    """Analytic gradients of cross_entropy(forward(params, img), label)."""
    if cache.params is not params:
        raise ValueError("activation cache was produced by different parameters")
    return _backward_batch(params, cache, np.array([label.index]))


def sgd_step(params: ModelParams, grads: ModelParams, learning_rate: float) -> ModelParams:
    """One gradient-descent update w <- w - lr * g; rejects non-finite gradients."""
    if learning_rate < 0:
        raise ValueError("learning_rate must be >= 0")
    updated = {}
    for (name, w), (_, g) in zip(params.tensors(), grads.tensors()):
        if w.shape != g.shape:
            raise ValueError(f"gradient shape mismatch for {name}: {g.shape} vs {w.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {name}; training diverged")
        updated[name] = w - learning_rate * g
    return ModelParams(**updated)


def predict(params: ModelParams, img) -> Prediction:
    """Forward pass without retaining the activation cache."""
    pred, _ = forward(params, img)
    return pred


# modest batch keeps the im2col scratch buffers small enough for the
# allocator to recycle instead of mmap-ing fresh pages every call
def _predict_probs(params: ModelParams, images: np.ndarray, batch: int = 48) -> np.ndarray:
    out = []
    for start in range(0, len(images), batch):
        probs, _ = _forward_batch(params, images[start : start + batch])
        out.append(probs)
    return np.concatenate(out, axis=0)


def predict_indices(params: ModelParams, images) -> np.ndarray:
    """Argmax class indices for a stack of images (ties go to class 0)."""
    images = as_image_stack(images)
    return np.argmax(_predict_probs(params, images), axis=1)


def train(train_set: LabeledDataset, cfg: TrainConfig) -> tuple[ModelParams, TrainingCurve]:
    """Mini-batch SGD over the training set, seeded and fully deterministic.

    Each epoch reshuffles the sample order, iterates ceil(N / batch_size)
    batches (the last partial batch is kept), and appends the batch loss to
    the curve; train accuracy is recorded at every epoch end.
    """
    cfg.validate()
    if len(train_set) == 0:
        raise DataError("training set is empty")
    images = train_set.images().astype(np.float64, copy=False)
    if images.shape[1:] != (cfg.input_side, cfg.input_side):
        raise ValueError(
            f"training images have shape {images.shape[1:]}, "
            f"expected ({cfg.input_side}, {cfg.input_side})"
        )
    y = train_set.label_indices()
    params = init_params(cfg.seed, cfg.input_side)
    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    curve = TrainingCurve()
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        for it, start in enumerate(range(0, n, cfg.batch_size), start=1):
            idx = order[start : start + cfg.batch_size]
            probs, cache = _forward_batch(params, images[idx])
            loss = _batch_loss(probs, y[idx])
            grads = _backward_batch(params, cache, y[idx])
            params = sgd_step(params, grads, cfg.learning_rate)
            curve.losses.append((epoch, it, loss))
        pred_idx = np.argmax(_predict_probs(params, images), axis=1)
        accuracy = 100.0 * float(np.mean(pred_idx == y))
        curve.epoch_train_accuracy.append((epoch, accuracy))
    return params, curve


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------


def save_params(params: ModelParams, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = struct.pack(
        "<6I",
        params.input_side,
        IN_CHANNELS,
        CONV1_FILTERS,
        CONV2_FILTERS,
        KERNEL_SIZE,
        N_CLASSES,
    )
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(header)
        for _, arr in params.tensors():
            handle.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _expected_shapes(input_side: int) -> list[tuple[str, tuple[int, ...]]]:
    flat = (input_side // 4) ** 2 * CONV2_FILTERS
    return [
        ("conv1_w", (CONV1_FILTERS, IN_CHANNELS, KERNEL_SIZE, KERNEL_SIZE)),
        ("conv1_b", (CONV1_FILTERS,)),
        ("conv2_w", (CONV2_FILTERS, CONV1_FILTERS, KERNEL_SIZE, KERNEL_SIZE)),
        ("conv2_b", (CONV2_FILTERS,)),
        ("dense_w", (flat, N_CLASSES)),
        ("dense_b", (N_CLASSES,)),
    ]


def load_params(path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a GZMDL1 checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    if len(blob) < offset + 24:
        raise DataError(f"{path}: truncated header")
    dims = struct.unpack("<6I", blob[offset : offset + 24])
    input_side, in_ch, c1, c2, kernel, classes = dims
    expected_arch = (IN_CHANNELS, CONV1_FILTERS, CONV2_FILTERS, KERNEL_SIZE, N_CLASSES)
    if (in_ch, c1, c2, kernel, classes) != expected_arch or input_side % 4 or input_side < 4:
        raise DataError(f"{path}: architecture mismatch in header {dims}")
    offset += 24
    tensors = {}
    for name, shape in _expected_shapes(input_side):
        count = int(np.prod(shape))
        chunk = blob[offset : offset + 8 * count]
        if len(chunk) != 8 * count:
            raise DataError(f"{path}: truncated tensor {name}")
        tensors[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        offset += 8 * count
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes")
    return ModelParams(**tensors)


# ---------------------------------------------------------------------------
# sklearn estimator
# ---------------------------------------------------------------------------


class ConvNetClassifier(BaseEstimator, ClassifierMixin):
    """sklearn-style wrapper around the functional training loop.

    fit expects an (n, input_side, input_side) image stack and ASD/TD labels
    (strings or Diagnosis). Fitted state lives in ``params_``, ``curve_``,
    and ``classes_``.
    """

    def __init__(self, epochs=10, batch_size=10, learning_rate=0.01, seed=0, input_side=64):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.input_side = input_side

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            input_side=self.input_side,
        ).validate()

    def fit(self, X, y):
        images = as_image_stack(X)
        labels = [Diagnosis.parse(v) for v in y]
        if len(labels) != len(images):
            raise ValueError(f"got {len(images)} images but {len(labels)} labels")
        dataset = LabeledDataset(
            [LabeledSample(image=img, label=lab) for img, lab in zip(images, labels)]
        )
        self.params_, self.curve_ = train(dataset, self._config())
        self.classes_ = np.array([Diagnosis.ASD.value, Diagnosis.TD.value])
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise ValueError("this ConvNetClassifier instance is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        return _predict_probs(self.params_, as_image_stack(X))

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
