"""Task streams, the continual training loop, baselines and ACC/BWT metrics."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dense import MASK64, DetRng, rng_permutation
from .network import Network, NetworkSpec, backward, forward, init_network, softmax_ce_loss
from .optimizer import (
    ProjectionState,
    TrainConfig,
    consolidate_task,
    init_projections,
    modify_grads,
    sgd_step,
)

GOLDEN = 0x9E3779B97F4A7C15
ARMS = ("rgo", "sgd", "stl")


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    n_classes: int

    @property
    def input_dim(self) -> int:
        return self.train_x.shape[1]


@dataclass
class Task:
    id: int
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


@dataclass
class TaskStream:
    tasks: list[Task]
    n_classes: int
    input_dim: int

    def __post_init__(self):
        for t in self.tasks:
            if len(t.train_y) == 0 or len(t.test_y) == 0:
                raise ValueError(f"task {t.id} needs at least one train and one test sample")
            for x, y in ((t.train_x, t.train_y), (t.test_x, t.test_y)):
                if x.shape[1] != self.input_dim:
                    raise ValueError(f"task {t.id} has inputs of width {x.shape[1]}")
                if y.min() < 0 or y.max() >= self.n_classes:
                    raise ValueError(f"task {t.id} has labels outside [0, {self.n_classes})")

    def __len__(self):
        return len(self.tasks)


def _as_dataset_arrays(x, y):
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)


def gen_permuted_tasks(base: Dataset, K: int, seed: int) -> TaskStream:
    """Task 1 is `base` as is; task k > 1 shuffles input features with DetRng(seed ^ k)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    tasks = []
    for k in range(1, K + 1):
        if k == 1:
            perm = np.arange(base.input_dim)
        else:
            perm = rng_permutation(DetRng((seed ^ k) & MASK64), base.input_dim)
        tasks.append(Task(k, base.train_x[:, perm], base.train_y.copy(),
                          base.test_x[:, perm], base.test_y.copy()))
    return TaskStream(tasks, base.n_classes, base.input_dim)


def gen_split_tasks(base: Dataset, K: int) -> TaskStream:
    """Contiguous class groups, one per task, with labels remapped to start at 0."""
    if K < 1 or base.n_classes % K:
        raise ValueError(f"{base.n_classes} classes cannot be split into {K} tasks")
    per_task = base.n_classes // K
    tasks = []
    for k in range(K):
        lo = k * per_task
        tr = (base.train_y >= lo) & (base.train_y < lo + per_task)
        te = (base.test_y >= lo) & (base.test_y < lo + per_task)
        tasks.append(Task(k + 1, base.train_x[tr], base.train_y[tr] - lo,
                          base.test_x[te], base.test_y[te] - lo))
    return TaskStream(tasks, per_task, base.input_dim)


def gen_synth_gaussian_tasks(K: int, dim: int, classes: int, n_train: int, n_test: int,
                             seed: int, noise: float = 0.3) -> TaskStream:
    """Gaussian class blobs; each task draws fresh class means in [-1, 1]^dim.

    Labels cycle 0, 1, ..., classes-1 so every split is balanced. One DetRng
    stream feeds means, then train samples, then test samples, task by task.
    """
    if min(K, dim, classes, n_train, n_test) < 1:
        raise ValueError("all counts must be >= 1")
    rng = DetRng(seed)

    def draw(n, means):
        y = np.arange(n) % classes
        x = np.array([[means[c, j] + noise * rng.gaussian() for j in range(dim)] for c in y])
        return x.reshape(n, dim), y.astype(np.int64)

    tasks = []
    for k in range(1, K + 1):
        means = np.array([2.0 * rng.uniform() - 1.0 for _ in range(classes * dim)]).reshape(classes, dim)
        train_x, train_y = draw(n_train, means)
        test_x, test_y = draw(n_test, means)
        tasks.append(Task(k, train_x, train_y, test_x, test_y))
    return TaskStream(tasks, classes, dim)


class AccuracyMatrix:
    """Lower-triangular grid: rows[T][k] is accuracy on task k after training task T."""

    def __init__(self, rows=None):
        self.rows: list[list[float]] = [list(map(float, r)) for r in (rows or [])]

    def append_row(self, row) -> None:
        self.rows.append([float(v) for v in row])

    @property
    def n_tasks(self) -> int:
        return len(self.rows)

    def validate(self) -> None:
        for t, row in enumerate(self.rows):
            if len(row) != t + 1:
                raise ValueError(f"row {t} has {len(row)} entries, expected {t + 1}")
            if any(not 0.0 <= v <= 1.0 for v in row):
                raise ValueError(f"row {t} has accuracies outside [0, 1]")

    def __eq__(self, other):
        return isinstance(other, AccuracyMatrix) and self.rows == other.rows

    def __repr__(self):
        return f"AccuracyMatrix({self.rows!r})"


def acc_bwt(R: AccuracyMatrix) -> tuple[float, float]:
    """ACC over the last row; BWT as mean of final minus just-learned accuracy."""
    if R.n_tasks < 1:
        raise ValueError("empty accuracy matrix")
    R.validate()
    T = R.n_tasks
    last = R.rows[-1]
    acc = sum(last) / T
    if T == 1:
        return acc, 0.0
    bwt = sum(last[k] - R.rows[k][k] for k in range(T - 1)) / (T - 1)
    return acc, bwt


@dataclass
class RunReport:
    acc_matrix: AccuracyMatrix
    acc: float
    bwt: float
    optimizer: str
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0
    networks: list[Network] = field(default_factory=list, repr=False)
    projections: ProjectionState | None = field(default=None, repr=False)


def evaluate(net: Network, xs, labels, task: int) -> float:
    """Fraction of samples whose argmax logit (lowest index on ties) is the label."""
    xs, labels = _as_dataset_arrays(xs, labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate on empty data")
    logits, _ = forward(net, xs.reshape(len(labels), -1), task)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def _batches(n: int, batch_size: int, rng: DetRng):
    """Endless mini-batches over a fresh DetRng shuffle each epoch."""
    order, pos = [], 0
    while True:
        batch = []
        while len(batch) < batch_size:
            if pos == len(order):
                order, pos = rng_permutation(rng, n).tolist(), 0
            take = min(batch_size - len(batch), len(order) - pos)
            batch.extend(order[pos:pos + take])
            pos += take
        yield np.array(batch)


def shuffle_rng(seed: int, task: int) -> DetRng:
    return DetRng((seed ^ (task * GOLDEN)) & MASK64)


def train_task(net: Network, task: Task, config: TrainConfig, seed: int,
               state: ProjectionState | None = None) -> Network:
    """Mini-batch SGD on one task; gradients are projected when `state` is given."""
    batches = _batches(len(task.train_y), config.batch_size, shuffle_rng(seed, task.id))
    for _ in range(config.steps_per_task):
        idx = next(batches)
        logits, cache = forward(net, task.train_x[idx], task.id)
        _, dlogits = softmax_ce_loss(logits, task.train_y[idx])
        grads = backward(net, cache, dlogits)
        if state is not None:
            grads = modify_grads(state, grads)
        net = sgd_step(net, grads, config.learning_rate)
    return net


def _snapshot(spec: NetworkSpec, config: TrainConfig, stream: TaskStream) -> dict:
    snap = {"network": asdict(spec), "train": asdict(config)}
    snap["network"]["layer_widths"] = list(spec.layer_widths)
    snap["n_tasks"] = len(stream)
    return snap


def _check_widths(spec: NetworkSpec, stream: TaskStream) -> None:
    if spec.layer_widths[0] != stream.input_dim:
        raise ValueError(f"input width {spec.layer_widths[0]} != stream input dim {stream.input_dim}")
    if spec.layer_widths[-1] != stream.n_classes:
        raise ValueError(f"output width {spec.layer_widths[-1]} != {stream.n_classes} classes")


def run_continual(spec: NetworkSpec, stream: TaskStream, optimizer: str, config: TrainConfig,
                  alpha: float = 1.0) -> RunReport:
    """Train one network through the whole stream, evaluating seen tasks after each."""
    if optimizer not in ("rgo", "sgd"):
        raise ValueError(f"run_continual supports rgo and sgd, not {optimizer!r}")
    _check_widths(spec, stream)
    started = time.perf_counter()
    net = init_network(spec)
    state = init_projections(net, alpha) if optimizer == "rgo" else None
    R = AccuracyMatrix()
    for i, task in enumerate(stream.tasks):
        net = train_task(net, task, config, spec.init_seed, state)
        if state is not None:
            state = consolidate_task(state, net, task.train_x, task.train_y, task.id)
        R.append_row(evaluate(net, t.test_x, t.test_y, t.id) for t in stream.tasks[:i + 1])
    acc, bwt = acc_bwt(R)
    return RunReport(R, acc, bwt, optimizer, _snapshot(spec, config, stream),
                     time.perf_counter() - started, networks=[net], projections=state)


def stl_seed(seed: int, task_index: int) -> int:
    """Initial seed of the model for the task at 0-based position `task_index`."""
    return (seed ^ task_index) & MASK64


def run_stl(spec: NetworkSpec, stream: TaskStream, config: TrainConfig) -> RunReport:
    """One freshly initialized network per task; earlier models are never touched again."""
    _check_widths(spec, stream)
    started = time.perf_counter()
    nets, own_acc = [], []
    R = AccuracyMatrix()
    for i, task in enumerate(stream.tasks):
        task_spec = spec.with_seed(stl_seed(spec.init_seed, i))
        net = train_task(init_network(task_spec), task, config, task_spec.init_seed)
        nets.append(net)
        own_acc.append(evaluate(net, task.test_x, task.test_y, task.id))
        R.append_row(own_acc)
    acc, bwt = acc_bwt(R)
    return RunReport(R, acc, bwt, "stl", _snapshot(spec, config, stream),
                     time.perf_counter() - started, networks=nets)


def arm_spec(arm: str, spec: NetworkSpec, baseline_fel: bool = False) -> NetworkSpec:
    """RGO always runs with feature encoding; the baselines only on request."""
    if arm not in ARMS:
        raise ValueError(f"unknown arm {arm!r}")
    return replace(spec, use_fel=arm == "rgo" or baseline_fel)


def run_arm(arm: str, spec: NetworkSpec, stream: TaskStream, config: TrainConfig,
            alpha: float = 1.0, baseline_fel: bool = False) -> RunReport:
    spec = arm_spec(arm, spec, baseline_fel)
    if arm == "stl":
        return run_stl(spec, stream, config)
    return run_continual(spec, stream, arm, config, alpha)
