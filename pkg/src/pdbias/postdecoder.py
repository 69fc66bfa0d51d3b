"""Applying the transform matrix and a single linear layer to decoder posteriors."""

import json
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .transform import TransformMatrix

log = logging.getLogger(__name__)

DIST_TOL = 1e-4


class PosteriorError(ValueError):
    pass


@dataclass
class PosteriorTensor:
    """Token probabilities ``[batch, max_len, bpe_size]`` with per-row valid lengths."""

    data: np.ndarray
    lengths: np.ndarray
    utt_ids: List[str]

    def __post_init__(self):
        if self.data.ndim != 3:
            raise PosteriorError(f"expected a 3-d tensor, got shape {self.data.shape}")
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        if self.lengths.shape != (self.batch,):
            raise PosteriorError("one length per batch row required")
        if len(self.utt_ids) != self.batch:
            raise PosteriorError("one utt_id per batch row required")
        if np.any(self.lengths < 0) or np.any(self.lengths > self.max_len):
            raise PosteriorError("lengths must lie in [0, max_len]")

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def max_len(self) -> int:
        return self.data.shape[1]

    @property
    def bpe_size(self) -> int:
        return self.data.shape[2]

    def valid_mask(self) -> np.ndarray:
        return np.arange(self.max_len)[None, :] < self.lengths[:, None]

    def check(self, tol: float = DIST_TOL):
        """Raise if a valid step is not a distribution or a padded step is nonzero."""
        valid = self.valid_mask()
        bad = np.argwhere(valid & (np.abs(self.data.sum(axis=2, dtype=np.float64) - 1.0) > tol))
        if len(bad):
            b, t = bad[0]
            raise PosteriorError(
                f"step [{b},{t}] ({self.utt_ids[b]}) sums to {self.data[b, t].sum():.6g}, not 1"
            )
        neg = np.argwhere(valid & (self.data < 0).any(axis=2))
        if len(neg):
            b, t = neg[0]
            raise PosteriorError(f"step [{b},{t}] ({self.utt_ids[b]}) has negative entries")
        if np.any(self.data[~valid]):
            raise PosteriorError("padded steps must be all-zero")

    @classmethod
    def from_sequences(cls, seqs: Sequence[np.ndarray], utt_ids: Sequence[str], bpe_size=None,
                       dtype=np.float32) -> "PosteriorTensor":
        """Pad a list of ``[len, bpe_size]`` arrays into one tensor."""
        seqs = [np.asarray(s) for s in seqs]
        if bpe_size is None:
            bpe_size = seqs[0].shape[1]
        max_len = max((len(s) for s in seqs), default=0)
        data = np.zeros((len(seqs), max_len, bpe_size), dtype=dtype)
        for b, s in enumerate(seqs):
            data[b, : len(s)] = s
        return cls(data, np.array([len(s) for s in seqs]), list(utt_ids))


@dataclass
class LinearLayer:
    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "LinearLayer":
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "LinearLayer":
        return LinearLayer(self.weight.copy(), self.bias.copy())


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 20
    # initialization is deterministic (identity); the seed is stamped into provenance
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def apply_transform(post: PosteriorTensor, tm: TransformMatrix) -> PosteriorTensor:
    """``out[b,t,:] = post[b,t,:] @ T`` on valid steps; padding stays zero."""
    if post.bpe_size != tm.dim:
        raise PosteriorError(f"bpe_size {post.bpe_size} != matrix dim {tm.dim}")
    post.check()
    valid = post.valid_mask()
    out = np.zeros_like(post.data)
    rows = post.data[valid].astype(np.float64)
    out[valid] = (rows @ tm.T).astype(post.data.dtype)
    return PosteriorTensor(out, post.lengths.copy(), list(post.utt_ids))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _affine_softmax(x: np.ndarray, layer: LinearLayer) -> np.ndarray:
    return softmax(x @ layer.weight.T + layer.bias)


def linear_forward(post: PosteriorTensor, layer: LinearLayer) -> PosteriorTensor:
    """``softmax(W x + b)`` at each valid step."""
    if post.bpe_size != layer.dim:
        raise PosteriorError(f"bpe_size {post.bpe_size} != layer dim {layer.dim}")
    valid = post.valid_mask()
    q = _affine_softmax(post.data[valid].astype(np.float64), layer)
    if not np.all(np.isfinite(q)):
        raise PosteriorError("linear layer produced non-finite output")
    out = np.zeros_like(post.data)
    out[valid] = q.astype(post.data.dtype)
    return PosteriorTensor(out, post.lengths.copy(), list(post.utt_ids))


def cross_entropy(layer: LinearLayer, x: np.ndarray, y: np.ndarray) -> float:
    """Mean ``-log softmax(W x + b)[y]`` over rows of ``x``."""
    z = x @ layer.weight.T + layer.bias
    z = z - z.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logz - z[np.arange(len(y)), y]))


def ce_gradient(layer: LinearLayer, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`cross_entropy` w.r.t. (weight, bias)."""
    q = _affine_softmax(x, layer)
    q[np.arange(len(y)), y] -= 1.0
    q /= len(y)
    return q.T @ x, q.sum(axis=0)


def stack_training_data(inputs: Sequence[PosteriorTensor], refs) -> Tuple[np.ndarray, np.ndarray]:
    """Flatten valid steps and their reference ids.

    ``refs`` maps utt_id -> token-id sequence, or is a list aligned with the
    batch rows of all inputs in order.
    """
    xs, ys = [], []
    row = 0
    for post in inputs:
        for b in range(post.batch):
            uid = post.utt_ids[b]
            ref = refs[uid] if isinstance(refs, dict) else refs[row]
            row += 1
            n = int(post.lengths[b])
            if len(ref) != n:
                raise PosteriorError(f"{uid}: reference has {len(ref)} tokens, posterior has {n} valid steps")
            xs.append(post.data[b, :n].astype(np.float64))
            ys.append(np.asarray(ref, dtype=np.int64))
    if not xs:
        raise PosteriorError("no training data")
    return np.concatenate(xs), np.concatenate(ys)


@dataclass
class TrainResult:
    layer: LinearLayer
    losses: List[float] = field(default_factory=list)


def train_linear(inputs: Sequence[PosteriorTensor], refs, config: TrainConfig = TrainConfig(),
                 init: LinearLayer = None) -> TrainResult:
    """Full-batch gradient descent on mean cross-entropy over valid steps.

    ``losses[e]`` is the loss before epoch ``e``; the last entry is the
    loss of the returned layer.
    """
    x, y = stack_training_data(inputs, refs)
    dim = x.shape[1]
    if np.any((y < 0) | (y >= dim)):
        raise PosteriorError("reference token id out of range")
    layer = init.copy() if init is not None else LinearLayer.identity(dim)
    losses = [cross_entropy(layer, x, y)]
    for epoch in range(config.epochs):
        gw, gb = ce_gradient(layer, x, y)
        layer.weight -= config.learning_rate * gw
        layer.bias -= config.learning_rate * gb
        losses.append(cross_entropy(layer, x, y))
        log.debug("epoch %d loss %.6f", epoch + 1, losses[-1])
    if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
        raise PosteriorError("training diverged (non-finite weights)")
    return TrainResult(layer, losses)


def grad_check(layer: LinearLayer, x: np.ndarray, ref: int, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every weight and bias coordinate is perturbed; meant for small (<= 8) dims.
    """
    if not (0 < eps <= 1e-2):
        raise ValueError("eps must lie in (0, 1e-2]")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    y = np.array([ref])
    gw, gb = ce_gradient(layer, x, y)
    probe = layer.copy()
    worst = 0.0
    for param, grad in ((probe.weight, gw), (probe.bias, gb)):
        for idx in np.ndindex(param.shape):
            orig = param[idx]
            param[idx] = orig + eps
            up = cross_entropy(probe, x, y)
            param[idx] = orig - eps
            down = cross_entropy(probe, x, y)
            param[idx] = orig
            fd = (up - down) / (2 * eps)
            denom = max(abs(fd), abs(grad[idx]), 1e-8)
            worst = max(worst, abs(fd - grad[idx]) / denom)
    return worst


# --------------------------------------------------------------------------
# PDBT / PDBL file formats
# --------------------------------------------------------------------------

TENSOR_MAGIC = b"PDBT"
LAYER_MAGIC = b"PDBL"
FORMAT_VERSION = 1


def save_posteriors(path, post: PosteriorTensor, extra: dict = None):
    head = np.array([FORMAT_VERSION, post.batch, post.max_len, post.bpe_size], dtype="<u4")
    meta = {"utt_ids": list(post.utt_ids)}
    meta.update(extra or {})
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(head.tobytes())
        fh.write(post.lengths.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(post.data, dtype="<f4").tobytes())
        fh.write(json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8"))


def load_posteriors(path) -> PosteriorTensor:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != TENSOR_MAGIC:
        raise PosteriorError(f"{path}: not a posterior file (bad magic)")
    version, batch, max_len, bpe = (int(v) for v in np.frombuffer(data, "<u4", 4, 4))
    if version != FORMAT_VERSION:
        raise PosteriorError(f"{path}: unsupported version {version}")
    off = 20
    lengths = np.frombuffer(data, "<u4", batch, off).astype(np.int64)
    off += 4 * batch
    n = batch * max_len * bpe
    if len(data) < off + 4 * n:
        raise PosteriorError(f"{path}: truncated tensor body")
    arr = np.frombuffer(data, "<f4", n, off).reshape(batch, max_len, bpe).astype(np.float32)
    meta = json.loads(data[off + 4 * n:].decode("utf-8") or "{}")
    utt_ids = meta.get("utt_ids") or [str(i) for i in range(batch)]
    return PosteriorTensor(arr, lengths, utt_ids)


def save_layer(path, layer: LinearLayer):
    with open(path, "wb") as fh:
        fh.write(LAYER_MAGIC)
        fh.write(np.array([FORMAT_VERSION, layer.dim], dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_layer(path) -> LinearLayer:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != LAYER_MAGIC:
        raise ValueError(f"{path}: not a layer file (bad magic)")
    version, dim = (int(v) for v in np.frombuffer(data, "<u4", 2, 4))
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if len(data) != 12 + 8 * dim * (dim + 1):
        raise ValueError(f"{path}: size does not match dim {dim}")
    w = np.frombuffer(data, "<f8", dim * dim, 12).reshape(dim, dim).copy()
    b = np.frombuffer(data, "<f8", dim, 12 + 8 * dim * dim).copy()
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
        raise ValueError(f"{path}: non-finite layer parameters")
    return LinearLayer(w, b)
