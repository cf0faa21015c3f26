"""Fully-connected network with hand-written backprop and task-keyed feature encoding.

Every hidden activation is passed through a fixed, task-seeded permutation
(the feature encoding layer) before reaching the next layer. The input and the
logits are never permuted. All arrays are float64; batch inputs are 2-d with
one sample per row, single samples may be passed as 1-d vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .dense import MASK64, DetRng, DimensionError, rng_permutation

FEL_SEED_PRIME = 0x100000001B3
ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class NetworkSpec:
    layer_widths: tuple[int, ...]
    hidden_activation: str = "relu"
    init_seed: int = 0
    init_scale: float = 1.0
    use_fel: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("need at least input and output widths")
        if min(self.layer_widths) < 1:
            raise ValueError(f"all layer widths must be >= 1, got {self.layer_widths}")
        if self.hidden_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def with_seed(self, seed: int) -> "NetworkSpec":
        return replace(self, init_seed=seed & MASK64)


@dataclass
class Network:
    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Network":
        return Network(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend([w.ravel(), b])
        return np.concatenate(parts)


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass (always stored batch-major).

    inputs[l] is what layer l consumed: the raw x for l=0, otherwise the
    permuted activation of layer l-1. pre[l] and post[l] are z_l and act(z_l)
    for hidden layers; pre[-1] holds the logits.
    """

    task: int
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]
    single: bool = False


@dataclass
class LayerGrad:
    dW: np.ndarray
    db: np.ndarray
    delta: np.ndarray  # dL/dz per sample, shape (n, out)
    inputs: np.ndarray  # what the layer consumed, shape (n, in)


@dataclass
class LayerGrads:
    layers: list[LayerGrad] = field(default_factory=list)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i) -> LayerGrad:
        return self.layers[i]


def init_network(spec: NetworkSpec) -> Network:
    """Fan-in scaled uniform weights from DetRng(init_seed), zero biases.

    Weights are drawn layer by layer in row-major order.
    """
    rng = DetRng(spec.init_seed)
    weights, biases = [], []
    widths = spec.layer_widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = spec.init_scale / math.sqrt(fan_in)
        draws = [rng.uniform() for _ in range(fan_in * fan_out)]
        w = (2.0 * np.array(draws) - 1.0) * limit
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    return Network(spec, weights, biases)


@lru_cache(maxsize=4096)
def _fel_permutation(layer: int, task: int, width: int) -> np.ndarray:
    if task == 1:
        perm = np.arange(width)
    else:
        perm = rng_permutation(DetRng(((task * FEL_SEED_PRIME) ^ layer) & MASK64), width)
    perm.setflags(write=False)
    return perm


def fel_permutation(layer: int, task: int, width: int) -> np.ndarray:
    """Task-keyed feature permutation applied to the output of hidden `layer`.

    Permuted features are h[perm]; the permutation never changes for a given
    (layer, task, width). Task 1 keeps the identity wiring, so a network that
    only ever sees task 1 trains exactly as one without encoding.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    return _fel_permutation(int(layer), int(task), int(width))


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else z


def _activation_grad(kind: str, z: np.ndarray) -> np.ndarray:
    # relu subgradient at 0 is 0
    return (z > 0.0).astype(np.float64) if kind == "relu" else np.ones_like(z)


def _batch(x: np.ndarray, width: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise DimensionError(f"input of shape {x.shape} does not match width {width}")
    return x, single


def forward(net: Network, x, task: int) -> tuple[np.ndarray, ForwardCache]:
    spec = net.spec
    h, single = _batch(x, spec.layer_widths[0])
    cache = ForwardCache(task=task, inputs=[], pre=[], post=[], single=single)
    last = net.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(h)
        z = h @ w.T + b
        cache.pre.append(z)
        if l == last:
            break
        a = _activate(spec.hidden_activation, z)
        cache.post.append(a)
        h = a[:, fel_permutation(l, task, a.shape[1])] if spec.use_fel else a
    logits = cache.pre[-1]
    return (logits[0] if single else logits), cache


def backprop_deltas(net: Network, cache: ForwardCache, dlogits) -> list[np.ndarray]:
    """dL/dz_l for every layer, batch-major, by plain reverse mode."""
    delta = np.asarray(dlogits, dtype=np.float64)
    if delta.ndim == 1:
        delta = delta[None, :]
    if delta.shape != cache.pre[-1].shape:
        raise DimensionError(f"dlogits shape {delta.shape} != logits shape {cache.pre[-1].shape}")
    deltas = [delta]
    for l in range(net.n_layers - 1, 0, -1):
        grad_in = delta @ net.weights[l]
        if net.spec.use_fel:
            grad_h = np.empty_like(grad_in)
            grad_h[:, fel_permutation(l - 1, cache.task, grad_in.shape[1])] = grad_in
        else:
            grad_h = grad_in
        delta = grad_h * _activation_grad(net.spec.hidden_activation, cache.pre[l - 1])
        deltas.append(delta)
    deltas.reverse()
    return deltas


def weight_grad(delta: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Batch mean of outer(delta_i, input_i)."""
    if delta.shape[0] == 1:
        return np.outer(delta[0], inputs[0])
    return delta.T @ inputs / delta.shape[0]


def backward(net: Network, cache: ForwardCache, dlogits) -> LayerGrads:
    """Per-layer gradients; with a batch, dW and db are averaged over samples."""
    deltas = backprop_deltas(net, cache, dlogits)
    return LayerGrads([
        LayerGrad(dW=weight_grad(d, x), db=d.mean(axis=0), delta=d, inputs=x)
        for d, x in zip(deltas, cache.inputs)
    ])


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_ce_loss(logits, label):
    """Cross-entropy of softmax(logits) against integer labels.

    For a single vector returns (loss, dlogits). For a batch returns the mean
    loss and the per-sample dlogits rows (unaveraged; backward averages).
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    z2 = z[None, :] if single else z
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if np.any(labels < 0) or np.any(labels >= z2.shape[1]):
        raise ValueError(f"label out of range for {z2.shape[1]} classes")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z2.shape[0])
    losses = log_norm - shifted[rows, labels]
    dlogits = softmax(z2)
    dlogits[rows, labels] -= 1.0
    if single:
        return float(losses[0]), dlogits[0]
    return float(losses.mean()), dlogits


def softmax_second_derivative(logits) -> np.ndarray:
    """Hessian of the cross-entropy w.r.t. the logits: diag(a) - a a^T."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ValueError("need a single logit vector with at least 2 classes")
    a = softmax(z)
    return np.diag(a) - np.outer(a, a)


def logit_backprop(net: Network, cache: ForwardCache, cls) -> list[np.ndarray]:
    """Gradient of logit `cls` w.r.t. each layer's pre-activation.

    `cls` may be a single index or one index per cached sample. Results are
    1-d per layer for a single-sample cache, else (n, out_l).
    """
    n, n_classes = cache.pre[-1].shape
    classes = np.broadcast_to(np.asarray(cls, dtype=np.int64), (n,))
    if np.any(classes < 0) or np.any(classes >= n_classes):
        raise ValueError(f"class index out of range for {n_classes} classes")
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), classes] = 1.0
    deltas = backprop_deltas(net, cache, onehot)
    return [d[0] for d in deltas] if cache.single else deltas
