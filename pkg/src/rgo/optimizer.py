"""Recursive gradient optimization: per-layer projectors and their recursive update.

Each layer keeps an SPD matrix P_l over its output features. Training steps
project the pre-activation gradients through P_l (rescaled so its trace equals
its dimension); at the end of a task, P_l absorbs the task's curvature through
rank-one Sherman-Morrison downdates, so P_l stays equal to
(I + sum g g^T / alpha)^-1 without ever inverting anything.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dense
from .network import (
    LayerGrad,
    LayerGrads,
    Network,
    forward,
    logit_backprop,
    softmax,
    weight_grad,
)


class ProjectionError(ArithmeticError):
    pass


@dataclass
class ProjectionState:
    projections: list[np.ndarray]
    alpha: float = 1.0
    samples_absorbed: int = 0

    def copy(self) -> "ProjectionState":
        return ProjectionState([p.copy() for p in self.projections], self.alpha, self.samples_absorbed)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    steps_per_task: int = 300
    batch_size: int = 10
    eta_max: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.steps_per_task < 0:
            raise ValueError("steps_per_task must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eta_max is None:
            object.__setattr__(self, "eta_max", self.learning_rate)


def init_projections(net: Network, alpha: float = 1.0) -> ProjectionState:
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    return ProjectionState([np.eye(w.shape[0]) for w in net.weights], alpha=alpha)


def effective_projector(p: np.ndarray) -> np.ndarray:
    """P rescaled so that trace equals dimension."""
    tr = dense.trace(p)
    if not tr > 0:
        raise ProjectionError(f"projector trace {tr} is not positive")
    return (p.shape[0] / tr) * p


def modify_grads(state: ProjectionState, grads: LayerGrads) -> LayerGrads:
    """Project every layer's delta through its normalized P_l.

    The weight gradient is rebuilt from the projected deltas and the layer
    inputs, so P never multiplies a full weight-gradient matrix.
    """
    if len(grads) != len(state.projections):
        raise dense.DimensionError("grads and projections disagree on layer count")
    out = []
    for p, g in zip(state.projections, grads):
        if p.shape[0] != g.delta.shape[1]:
            raise dense.DimensionError(f"projector {p.shape} vs delta width {g.delta.shape[1]}")
        tr = dense.trace(p)
        if not tr > 0:
            raise ProjectionError(f"projector trace {tr} is not positive")
        scale = p.shape[0] / tr
        delta = scale * (g.delta @ p.T)
        out.append(LayerGrad(dW=weight_grad(delta, g.inputs), db=delta.mean(axis=0),
                             delta=delta, inputs=g.inputs))
    return LayerGrads(out)


def rls_update(p: np.ndarray, g, alpha: float = 1.0) -> np.ndarray:
    """P - k g^T P with gain k = P g / (alpha + g^T P g)."""
    g = dense.as_vector(g)
    pg = p @ g
    denom = alpha + float(g @ pg)
    # outer(pg, pg) keeps the result bitwise symmetric when P is
    return p - np.outer(pg, pg) / denom


def consolidate_task(state: ProjectionState, net: Network, xs, labels, task: int,
                     chunk: int = 512) -> ProjectionState:
    """Absorb a finished task into the projectors.

    Per sample, the local gradient of layer l is sqrt(l''[y, y]) times the
    gradient of the true-class logit w.r.t. z_l; each is folded in with one
    rls_update, in data order.
    """
    new = state.copy()
    xs = np.asarray(xs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    for start in range(0, len(labels), chunk):
        x, y = xs[start:start + chunk], labels[start:start + chunk]
        logits, cache = forward(net, x, task)
        a_true = softmax(logits)[np.arange(len(y)), y]
        curvature = np.sqrt(np.maximum(a_true - a_true * a_true, 0.0))
        local = [curvature[:, None] * d for d in logit_backprop(net, cache, y)]
        for i in range(len(y)):
            for l, p in enumerate(new.projections):
                new.projections[l] = rls_update(p, local[l][i], new.alpha)
        new.samples_absorbed += len(y)
    return new


def sgd_step(net: Network, grads: LayerGrads, lr: float) -> Network:
    return Network(
        net.spec,
        [w - lr * g.dW for w, g in zip(net.weights, grads)],
        [b - lr * g.db for b, g in zip(net.biases, grads)],
    )


def materialize_hbar(state: ProjectionState, layer: int) -> np.ndarray:
    """alpha * P_l^-1, i.e. alpha I plus the absorbed outer products (diagnostic only)."""
    return state.alpha * dense.invert(state.projections[layer])


def rll_value(theta, theta_prev, hbar) -> float:
    """Quadratic forgetting surrogate 0.5 d^T H d with d = theta - theta_prev."""
    d = dense.as_vector(theta) - dense.as_vector(theta_prev)
    h = dense.as_matrix(hbar)
    if h.shape != (d.shape[0], d.shape[0]):
        raise dense.DimensionError(f"hbar {h.shape} does not match parameter length {d.shape[0]}")
    return 0.5 * float(d @ dense.mat_vec(h, d))


def projected_curvature(p, hbar) -> float:
    """Largest eigenvalue of P H for SPD P and PSD H.

    P H is similar to L^T H L with P = L L^T, which is symmetric, so power
    iteration runs on that instead of the non-symmetric product.
    """
    chol = np.linalg.cholesky(dense.as_matrix(p))
    m = chol.T @ dense.as_matrix(hbar) @ chol
    return dense.max_eigenvalue(0.5 * (m + m.T))


def rll_upper_bound(n_k: int, eta_m: float, p, hbar, loss_prev: float) -> float:
    if loss_prev < 0:
        raise ValueError("loss_prev must be >= 0")
    return 0.5 * n_k * eta_m * projected_curvature(p, hbar) * loss_prev

