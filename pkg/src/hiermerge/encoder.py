"""Shared-backbone classifier with swappable linear heads, in plain numpy.

The backbone is a fully connected network whose hidden layers use a
rectifier; its last layer is linear and produces the embedding that the
heads (and the clustering step) consume.  Gradients are derived by hand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = "v1"
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ShapeError(ValueError):
    pass


@dataclass
class BackboneParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def dim(self) -> int:
        """Embedding dimension D."""
        return self.weights[-1].shape[1]

    @property
    def widths(self) -> list[int]:
        return [self.d_in] + [W.shape[1] for W in self.weights]

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "BackboneParams":
        return BackboneParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def equals(self, other: "BackboneParams") -> bool:
        mine, theirs = self.arrays(), other.arrays()
        return len(mine) == len(theirs) and all(np.array_equal(a, b) for a, b in zip(mine, theirs))


@dataclass
class HeadParams:
    weight: np.ndarray  # (D, C)
    bias: np.ndarray  # (C,)

    @property
    def num_classes(self) -> int:
        return self.weight.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def copy(self) -> "HeadParams":
        return HeadParams(self.weight.copy(), self.bias.copy())


def param_count(widths) -> int:
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def init_backbone(widths, seed: int) -> BackboneParams:
    """Glorot-uniform weights, zero biases.  ``widths`` = [d_in, h_1, ..., D]."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or min(widths) < 1:
        raise ShapeError(f"backbone widths must list d_in and at least one layer, got {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return BackboneParams(weights, biases)


def new_head(D: int, C: int, seed: int) -> HeadParams:
    if D < 1 or C < 1:
        raise ShapeError("head dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    limit = math.sqrt(6.0 / (D + C))
    return HeadParams(rng.uniform(-limit, limit, size=(D, C)), np.zeros(C))


def _check(backbone: BackboneParams, head: HeadParams | None, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != backbone.d_in:
        raise ShapeError(f"batch has shape {X.shape}, backbone expects width {backbone.d_in}")
    if head is not None and head.weight.shape[0] != backbone.dim:
        raise ShapeError(f"head expects embedding {head.weight.shape[0]}, backbone gives {backbone.dim}")


def embed(backbone: BackboneParams, X: np.ndarray) -> np.ndarray:
    _check(backbone, None, X)
    h = X
    last = len(backbone.weights) - 1
    for k, (W, b) in enumerate(zip(backbone.weights, backbone.biases)):
        h = h @ W + b
        if k < last:
            h = np.maximum(h, 0.0)
    return h


def forward(backbone: BackboneParams, head: HeadParams, X: np.ndarray):
    """Return ``(embeddings, logits)`` for a batch."""
    X = np.asarray(X, dtype=np.float64)
    _check(backbone, head, X)
    emb = embed(backbone, X)
    return emb, emb @ head.weight + head.bias


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels):
    """Mean negative log-likelihood of the true class, plus the softmax."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    C = logits.shape[1]
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError("one label per logit row is required")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"label out of range [0, {C})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    logp_true = z[np.arange(len(labels)), labels] - log_norm
    probs = np.exp(z - log_norm[:, None])
    return float(-logp_true.mean()), probs


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_weight: np.ndarray
    head_bias: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        pairs = [a for pair in zip(self.weights, self.biases) for a in pair]
        return pairs + [self.head_weight, self.head_bias]


def loss_and_grads(backbone: BackboneParams, head: HeadParams, X, labels):
    X = np.asarray(X, dtype=np.float64)
    _check(backbone, head, X)
    labels = np.asarray(labels, dtype=np.int64)
    B = X.shape[0]
    acts = [X]
    h = X
    last = len(backbone.weights) - 1
    for k, (W, b) in enumerate(zip(backbone.weights, backbone.biases)):
        h = h @ W + b
        if k < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    logits = h @ head.weight + head.bias
    loss, probs = cross_entropy(logits, labels)

    delta = probs
    delta[np.arange(B), labels] -= 1.0
    delta /= B
    g_head_w = acts[-1].T @ delta
    g_head_b = delta.sum(axis=0)
    delta = delta @ head.weight.T
    g_w = [None] * len(backbone.weights)
    g_b = [None] * len(backbone.weights)
    for k in range(last, -1, -1):
        if k < last:
            # rectifier derivative, taken as 0 at 0
            delta = delta * (acts[k + 1] > 0)
        g_w[k] = acts[k].T @ delta
        g_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ backbone.weights[k].T
    return loss, Gradients(g_w, g_b, g_head_w, g_head_b)


def backward(backbone: BackboneParams, head: HeadParams, X, labels) -> Gradients:
    """Analytic gradients of the mean cross-entropy w.r.t. every parameter."""
    return loss_and_grads(backbone, head, X, labels)[1]


def cosine_lr(base_lr: float, t: float, t_max: float, eta_min: float = 0.0) -> float:
    if t < 0 or t > t_max:
        raise ValueError(f"step {t} outside schedule [0, {t_max}]")
    if t_max == 0:
        return base_lr
    return eta_min + (base_lr - eta_min) * (1.0 + math.cos(math.pi * t / t_max)) / 2.0


@dataclass
class OptimizerState:
    base_lr: float
    t_max: int | None = None  # None: constant rate
    eta_min: float = 0.0
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    def current_lr(self) -> float:
        if self.t_max is None:
            return self.base_lr
        return cosine_lr(self.base_lr, min(self.t, self.t_max), self.t_max, self.eta_min)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState):
    """In-place Adam update; the rate comes from the schedule at the current step."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    lr = state.current_lr()
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class StageConfig:
    stage: int
    num_classes: int
    epochs: int = 15
    batch_size: int = 32
    base_lr: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise ValueError("stage index must be 1, 2 or 3")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")


def mean_loss(backbone, head, X, y, chunk: int = 4096) -> float:
    total = 0.0
    for start in range(0, len(y), chunk):
        _, logits = forward(backbone, head, X[start:start + chunk])
        loss, _ = cross_entropy(logits, y[start:start + chunk])
        total += loss * len(y[start:start + chunk])
    return total / len(y)


def predict(backbone, head, X) -> np.ndarray:
    _, logits = forward(backbone, head, X)
    return logits.argmax(axis=1)


def train_stage(backbone: BackboneParams, stage: StageConfig, X, y, X_val=None, y_val=None, head=None):
    """Fit a fresh head (and the backbone) with mini-batch Adam.

    The backbone is copied, never mutated.  Returns ``(backbone, head,
    history)`` where ``history`` holds one dict per epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("empty training data")
    if y.min() < 0 or y.max() >= stage.num_classes:
        raise ValueError(f"training label out of range [0, {stage.num_classes})")
    backbone = backbone.copy()
    if head is None:
        head = new_head(backbone.dim, stage.num_classes, seed=stage.seed)
    else:
        head = head.copy()
    if stage.epochs == 0:
        return backbone, head, []

    n = len(y)
    per_epoch = math.ceil(n / stage.batch_size)
    opt = OptimizerState(base_lr=stage.base_lr, t_max=stage.epochs * per_epoch)
    params = backbone.arrays() + head.arrays()
    rng = np.random.default_rng(stage.seed)
    history = []
    has_val = X_val is not None and len(y_val) > 0
    for epoch in range(stage.epochs):
        order = rng.permutation(n)
        running = 0.0
        for start in range(0, n, stage.batch_size):
            idx = order[start:start + stage.batch_size]
            loss, grads = loss_and_grads(backbone, head, X[idx], y[idx])
            running += loss * len(idx)
            adam_step(params, grads.arrays(), opt)
        entry = {"epoch": epoch, "train_loss": running / n}
        entry["val_loss"] = mean_loss(backbone, head, np.asarray(X_val, np.float64), np.asarray(y_val, np.int64)) if has_val else None
        history.append(entry)
    return backbone, head, history


def _tensor_json(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _tensor_from_json(obj) -> np.ndarray:
    return np.array(obj["data"], dtype=np.float64).reshape(obj["shape"])


def model_to_json(backbone: BackboneParams, head: HeadParams | None = None, seed: int | None = None, **extra) -> dict:
    out = {
        "version": CHECKPOINT_VERSION,
        "widths": backbone.widths,
        "activation": "relu-hidden-linear-embedding",
        "seed": seed,
        "optimizer": {"name": "adam", "beta1": ADAM_BETA1, "beta2": ADAM_BETA2, "eps": ADAM_EPS},
        "backbone": {
            "weights": [_tensor_json(W) for W in backbone.weights],
            "biases": [_tensor_json(b) for b in backbone.biases],
        },
        "head": None if head is None else {"weight": _tensor_json(head.weight), "bias": _tensor_json(head.bias)},
    }
    out.update(extra)
    return out


def model_from_json(obj: dict):
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {obj.get('version')!r}")
    bb = obj["backbone"]
    backbone = BackboneParams(
        [_tensor_from_json(W) for W in bb["weights"]], [_tensor_from_json(b) for b in bb["biases"]]
    )
    if backbone.widths != list(obj["widths"]):
        raise ShapeError("checkpoint widths disagree with its tensors")
    head = None
    if obj.get("head") is not None:
        head = HeadParams(_tensor_from_json(obj["head"]["weight"]), _tensor_from_json(obj["head"]["bias"]))
    return backbone, head


def save_checkpoint(path, backbone, head=None, seed=None, **extra) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(model_to_json(backbone, head, seed, **extra)) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Return ``(backbone, head, raw_json)``."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    backbone, head = model_from_json(obj)
    return backbone, head, obj
