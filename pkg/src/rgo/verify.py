"""Self-contained oracle suite behind `rgo verify`.

Each check compares an implementation path against an independent route
(explicit inverse, finite differences, loop sums, Monte-Carlo, ...) and raises
CheckFailed on disagreement. Everything is seeded, so the outcome is fixed.
"""
from __future__ import annotations

import io
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import dense
from .bench import (
    AccuracyMatrix,
    acc_bwt,
    evaluate,
    gen_permuted_tasks,
    gen_synth_gaussian_tasks,
    run_arm,
)
from .network import (
    NetworkSpec,
    backprop_deltas,
    backward,
    fel_permutation,
    forward,
    init_network,
    softmax_ce_loss,
    softmax_second_derivative,
)
from .optimizer import (
    TrainConfig,
    effective_projector,
    init_projections,
    materialize_hbar,
    modify_grads,
    rll_upper_bound,
    rll_value,
    rls_update,
)
from .results import read_acc_matrix, write_acc_matrix


class CheckFailed(AssertionError):
    pass


def require(ok, message: str) -> None:
    if not ok:
        raise CheckFailed(message)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


CHECKS: list[tuple[str, Callable]] = []


def check(name: str):
    def register(fn):
        CHECKS.append((name, fn))
        return fn
    return register


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng(20240 + tag)


def conditioned_matrix(rng, n: int, cond: float) -> np.ndarray:
    """Random n x n matrix with singular values spread log-uniformly up to `cond`."""
    u, _ = np.linalg.qr(rng.standard_normal((n, n)))
    v, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = np.logspace(0, -np.log10(cond), n)
    return u @ np.diag(s) @ v.T


def central_difference(f, x: np.ndarray, i, h: float) -> float:
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (f(xp) - f(xm)) / (2 * h)


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) if scale < floor else abs(a - b) / scale


# dense core

@check("dense: invert(invert(A)) == A for cond < 1e6")
def _invert_roundtrip(fault=None):
    rng = _rng(1)
    worst = 0.0
    for n in (2, 3, 5, 8):
        for _ in range(5):
            a = conditioned_matrix(rng, n, 1e5)
            worst = max(worst, np.abs(dense.invert(dense.invert(a)) - a).max())
    require(worst < 1e-8, f"max abs error {worst:.2e}")
    return f"max abs error {worst:.2e}"


@check("dense: A invert(A) == I for SPD A")
def _invert_residual(fault=None):
    rng = _rng(2)
    worst = 0.0
    for _ in range(10):
        b = rng.standard_normal((6, 6))
        a = b @ b.T + np.eye(6)
        worst = max(worst, np.abs(a @ dense.invert(a) - np.eye(6)).max())
    require(worst < 1e-9, f"residual {worst:.2e}")
    return f"residual {worst:.2e}"


@check("dense: rng_permutation is a bijection and matches the golden value")
def _permutation(fault=None):
    for seed in range(20):
        for n in (1, 2, 7, 64):
            perm = dense.rng_permutation(dense.DetRng(seed), n)
            require(sorted(perm.tolist()) == list(range(n)), f"seed {seed} n {n} not a bijection")
    golden = dense.rng_permutation(dense.DetRng(1), 4).tolist()
    require(golden == [2, 0, 3, 1], f"n=4 seed=1 gave {golden}")
    return "80 permutations, golden [2, 0, 3, 1]"


@check("dense: max_eigenvalue bounds every Rayleigh quotient")
def _rayleigh(fault=None):
    rng = _rng(3)
    for _ in range(5):
        b = rng.standard_normal((6, 6))
        a = b @ b.T
        lam = dense.max_eigenvalue(a)
        x = rng.standard_normal((100, 6))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        quotients = np.einsum("ij,jk,ik->i", x, a, x)
        require(lam >= quotients.max() - 1e-8, f"{lam} < {quotients.max()}")
    return "500 unit vectors"


@check("dense: mat_vec is linear and trace is cyclic")
def _linearity(fault=None):
    rng = _rng(4)
    for _ in range(20):
        a = rng.standard_normal((5, 4))
        x, y = rng.standard_normal(4), rng.standard_normal(4)
        err = np.abs(dense.mat_vec(a, x + y) - dense.mat_vec(a, x) - dense.mat_vec(a, y)).max()
        require(err < 1e-12, f"distributivity error {err:.2e}")
        p, q = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
        require(abs(dense.trace(p @ q) - dense.trace(q @ p)) < 1e-12, "trace(AB) != trace(BA)")
    return "20 trials"


# network

def _small_net(widths=(16, 12, 8, 4), seed=7, activation="relu"):
    return init_network(NetworkSpec(widths, activation, seed, 1.0, use_fel=True))


@check("net: FEL permutations are deterministic and invertible")
def _fel(fault=None):
    rng = _rng(5)
    for task in range(1, 6):
        for layer in range(3):
            perm = fel_permutation(layer, task, 32)
            require(np.array_equal(perm, fel_permutation(layer, task, 32)), "not deterministic")
            v = rng.standard_normal(32)
            back = np.empty_like(v)
            back[perm] = v[perm]
            require(np.array_equal(back, v), "round trip is not the identity")
    require(not np.array_equal(fel_permutation(0, 1, 64), fel_permutation(0, 2, 64)),
            "tasks 1 and 2 share a permutation")
    return "15 (layer, task) pairs"


@check("net: backward matches central finite differences (FEL on)")
def _finite_difference(fault=None):
    rng = _rng(6)
    net = _small_net()
    x, label, task = rng.standard_normal(16), 2, 3
    _, cache = forward(net, x, task)
    _, dlogits = softmax_ce_loss(cache.pre[-1][0], label)
    grads = backward(net, cache, dlogits)
    worst = 0.0
    for l, w in enumerate(net.weights):
        flat = w.ravel()

        def loss_at(values, l=l):
            probe = net.copy()
            probe.weights[l] = values.reshape(w.shape)
            return softmax_ce_loss(forward(probe, x, task)[0], label)[0]

        for i in rng.choice(flat.size, size=min(20, flat.size), replace=False):
            numeric = central_difference(loss_at, flat, i, 1e-5)
            worst = max(worst, relative_error(grads[l].dW.ravel()[i], numeric))
    require(worst < 1e-6, f"max relative error {worst:.2e}")
    return f"max relative error {worst:.2e}"


@check("net: backward is the adjoint of the forward input Jacobian")
def _adjoint(fault=None):
    rng = _rng(7)
    net = _small_net((5, 4, 3), seed=3)
    worst = 0.0
    for _ in range(10):
        x, u, v = rng.standard_normal(5), rng.standard_normal(3), rng.standard_normal(5)
        h = 1e-6
        logits, cache = forward(net, x, 2)
        jv = (forward(net, x + h * v, 2)[0] - logits) / h
        jtu = backprop_deltas(net, cache, u)[0][0] @ net.weights[0]
        worst = max(worst, abs(u @ jv - jtu @ v))
    require(worst < 1e-9, f"adjoint mismatch {worst:.2e}")
    return f"adjoint mismatch {worst:.2e}"


@check("net: softmax curvature is symmetric, zero-row-sum and matches differences")
def _softmax_curvature(fault=None):
    rng = _rng(8)
    exact = softmax_second_derivative(np.zeros(2))
    require(np.abs(exact - [[0.25, -0.25], [-0.25, 0.25]]).max() <= 1e-15, "closed form at (0, 0)")
    worst = 0.0
    for c in (2, 3, 4, 5):
        for _ in range(5):
            z = rng.standard_normal(c) * 2
            hess = softmax_second_derivative(z)
            require(np.abs(hess - hess.T).max() == 0.0, "not symmetric")
            require(np.abs(hess.sum(axis=1)).max() < 1e-12, "rows do not sum to 0")
            d = np.diag(hess)
            require(d.min() >= 0.0 and d.max() <= 0.25, "diagonal outside [0, 0.25]")
            for j in range(c):
                col = (softmax_ce_loss(z + 1e-5 * np.eye(c)[j], 0)[1]
                       - softmax_ce_loss(z - 1e-5 * np.eye(c)[j], 0)[1]) / 2e-5
                worst = max(worst, np.abs(col - hess[:, j]).max())
    require(worst < 1e-6, f"difference mismatch {worst:.2e}")
    return f"difference mismatch {worst:.2e}"


@check("net: dW is exactly outer(delta, layer input)")
def _dw_reconstruction(fault=None):
    rng = _rng(9)
    net = _small_net()
    _, cache = forward(net, rng.standard_normal(16), 4)
    grads = backward(net, cache, rng.standard_normal(4))
    for g in grads:
        require(np.array_equal(g.dW, dense.outer(g.delta[0], g.inputs[0])), "dW differs bitwise")
    return "3 layers, bitwise"


# optimizer

@check("opt: iterated rls_update equals the batch inverse (Sherman-Morrison)")
def _sherman_morrison(fault=None):
    rng = _rng(10)
    worst = 0.0
    for trial in range(20):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 51))
        alpha = float(rng.uniform(0.5, 2.0))
        gs = rng.standard_normal((m, n))
        p = np.eye(n)
        for g in gs:
            p = rls_update(p, g, alpha)
        oracle = dense.invert(np.eye(n) + gs.T @ gs / alpha)
        worst = max(worst, np.abs(p - oracle).max())
    require(worst < 1e-7, f"max abs error {worst:.2e}")
    return f"max abs error {worst:.2e}"


@check("opt: projectors stay symmetric over 1000 updates")
def _symmetry(fault=None):
    rng = _rng(11)
    p = np.eye(16)
    for i in range(1000):
        p = rls_update(p, rng.standard_normal(16) * 0.3)
        if fault == "symmetry" and i == 500:
            p[0, 1] += 1e-3
    asym = np.abs(p - p.T).max()
    require(asym < 1e-9, f"asymmetry {asym:.2e}")
    require(np.linalg.eigvalsh(p).min() > 0, "lost positive definiteness")
    return f"asymmetry {asym:.2e}"


@check("opt: effective projector has trace equal to its dimension")
def _trace_normalization(fault=None):
    rng = _rng(12)
    for n in (1, 3, 8, 16):
        p = np.eye(n)
        for _ in range(40):
            p = rls_update(p, rng.standard_normal(n) * 2)
            err = abs(dense.trace(effective_projector(p)) - n)
            require(err < 1e-9, f"dim {n}: trace off by {err:.2e}")
    return "160 projectors"


def isotropic_rate_ratio(p_hat: np.ndarray, n_samples: int, seed: int) -> float:
    """mean(g^T P g) / mean(g^T g) over standard Gaussian g."""
    g = np.random.default_rng(seed).standard_normal((n_samples, p_hat.shape[0]))
    return float(np.einsum("ij,jk,ik->", g, p_hat, g) / np.einsum("ij,ij->", g, g))


def random_projector(rng, n: int, updates: int = 30) -> np.ndarray:
    p = np.eye(n)
    for _ in range(updates):
        p = rls_update(p, rng.standard_normal(n) * rng.uniform(0.1, 3.0))
    return p


@check("opt: trace-normalized projector keeps the expected step size (Monte-Carlo)")
def _isotropic(fault=None):
    p_hat = effective_projector(random_projector(_rng(13), 8))
    ratio = isotropic_rate_ratio(p_hat, 100_000, 13)
    require(abs(ratio - 1.0) <= 0.02, f"ratio {ratio:.4f}")
    return f"ratio {ratio:.4f}"


@check("opt: rank-one downdates never grow the quadratic form along g")
def _contraction(fault=None):
    rng = _rng(14)
    p = np.eye(6)
    for _ in range(200):
        g = rng.standard_normal(6)
        new = rls_update(p, g)
        require(g @ new @ g <= g @ p @ g + 1e-12, "quadratic form increased")
        p = new
    return "200 updates"


@check("opt: gradient projection can be applied before the outer product")
def _left_to_right(fault=None):
    rng = _rng(15)
    p = random_projector(rng, 6)
    delta, x = rng.standard_normal(6), rng.standard_normal(4)
    lhs = dense.outer(p @ delta, x)
    rhs = p @ dense.outer(delta, x)
    err = np.abs(lhs - rhs).max()
    require(err < 1e-12, f"difference {err:.2e}")
    return f"difference {err:.2e}"


@check("opt: materialized curvature equals alpha I plus the absorbed outer products")
def _materialize(fault=None):
    rng = _rng(16)
    net = init_network(NetworkSpec((3, 5)))
    state = init_projections(net)
    gs = rng.standard_normal((20, 5))
    for g in gs:
        state.projections[0] = rls_update(state.projections[0], g, state.alpha)
    err = np.abs(materialize_hbar(state, 0) - (np.eye(5) + gs.T @ gs)).max()
    require(err < 1e-6, f"max abs error {err:.2e}")
    return f"max abs error {err:.2e}"


def quadratic_bound_instance(rng: np.random.Generator) -> tuple[float, float]:
    """Two least-squares tasks; returns (realized forgetting, its upper bound).

    Task 1 is solved exactly and absorbed into a projector. Task 2 is then
    trained from task 1's optimum with projected full-batch gradient steps.
    """
    dim = int(rng.integers(2, 9))
    n_k = int(rng.integers(10, 101))
    eta = float(rng.uniform(0.01, 0.1))
    m = 3 * dim

    g1, y1 = rng.standard_normal((m, dim)), rng.standard_normal(m)
    g2, y2 = rng.standard_normal((m, dim)), rng.standard_normal(m)
    theta1 = np.linalg.lstsq(g1, y1, rcond=None)[0]

    p = np.eye(dim)
    for row in g1 / np.sqrt(m):
        p = rls_update(p, row)
    hbar = dense.invert(p)
    p_hat = effective_projector(p)

    def loss2(theta):
        r = g2 @ theta - y2
        return 0.5 * float(r @ r) / m

    theta = theta1.copy()
    for _ in range(n_k):
        theta = theta - eta * (p_hat @ (g2.T @ (g2 @ theta - y2) / m))
    realized = rll_value(theta, theta1, hbar)
    bound = rll_upper_bound(n_k, eta, p_hat, hbar, loss2(theta1))
    return realized, bound


@check("opt: realized forgetting stays under the upper bound on quadratics")
def _upper_bound(fault=None):
    rng = _rng(17)
    slack = np.inf
    for _ in range(10):
        realized, bound = quadratic_bound_instance(rng)
        require(realized <= bound + 1e-9, f"realized {realized:.4g} > bound {bound:.4g}")
        slack = min(slack, bound - realized)
    return f"smallest slack {slack:.3g}"


def first_task_gap(steps: int = 50) -> float:
    stream = gen_synth_gaussian_tasks(1, 12, 3, 60, 30, seed=5)
    spec = NetworkSpec((12, 10, 3), init_seed=11)
    config = TrainConfig(0.1, steps, 10)
    rgo = run_arm("rgo", spec, stream, config)
    sgd = run_arm("sgd", spec, stream, config)
    return float(np.abs(rgo.networks[0].flat_params() - sgd.networks[0].flat_params()).max())


@check("opt: first task under RGO is plain SGD")
def _first_task(fault=None):
    gap = first_task_gap()
    require(gap <= 1e-12, f"max parameter gap {gap:.2e}")
    return f"max parameter gap {gap:.2e}"


# benchmark

def _small_stream():
    return gen_synth_gaussian_tasks(3, 16, 4, 80, 40, seed=3)


@check("bench: identical seeds give identical reports")
def _determinism(fault=None):
    spec = NetworkSpec((16, 16, 4), init_seed=2)
    config = TrainConfig(0.1, 60, 10)
    for arm in ("rgo", "sgd", "stl"):
        a = run_arm(arm, spec, _small_stream(), config)
        b = run_arm(arm, spec, _small_stream(), config)
        require(a.acc_matrix == b.acc_matrix and a.acc == b.acc and a.bwt == b.bwt, f"{arm} differs")
    return "3 arms"


@check("bench: every trained task beats chance and metrics recompute exactly")
def _diagonal(fault=None):
    spec = NetworkSpec((16, 16, 4), init_seed=2)
    report = run_arm("rgo", spec, _small_stream(), TrainConfig(0.1, 100, 10))
    diag = [report.acc_matrix.rows[k][k] for k in range(3)]
    require(min(diag) > 0.25, f"diagonal {diag}")
    require(acc_bwt(report.acc_matrix) == (report.acc, report.bwt), "metrics do not recompute")
    return f"diagonal {[round(d, 3) for d in diag]}"


@check("bench: another task's feature encoding drops accuracy to chance")
def _decoupling(fault=None):
    from .data import load_digits_base

    stream = gen_permuted_tasks(load_digits_base(), 3, seed=0)
    spec = NetworkSpec((64, 64, 10), init_seed=0)
    report = run_arm("rgo", spec, stream, TrainConfig(0.1, 300, 10))
    task1 = stream.tasks[0]
    own = evaluate(report.networks[0], task1.test_x, task1.test_y, 1)
    crossed = evaluate(report.networks[0], task1.test_x, task1.test_y, 3)
    require(abs(crossed - 0.1) <= 0.1, f"crossed accuracy {crossed:.3f}")
    return f"own {own:.3f}, crossed {crossed:.3f}"


@check("bench: ACC/BWT equal their loop definitions")
def _metrics(fault=None):
    rng = _rng(18)
    R = AccuracyMatrix([rng.uniform(0, 1, t + 1) for t in range(4)])
    acc, bwt = acc_bwt(R)
    loop_acc = 0.0
    for k in range(4):
        loop_acc += R.rows[3][k]
    loop_bwt = 0.0
    for k in range(3):
        loop_bwt += R.rows[3][k] - R.rows[k][k]
    require(abs(acc - loop_acc / 4) < 1e-12 and abs(bwt - loop_bwt / 3) < 1e-12, "metric mismatch")
    return "4x4 matrix"


@check("cli: accuracy-matrix CSV round-trips exactly")
def _csv_roundtrip(fault=None):
    rng = _rng(19)
    R = AccuracyMatrix([rng.uniform(0, 1, t + 1) for t in range(5)])
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "m.csv"
        write_acc_matrix(path, R)
        require(read_acc_matrix(path) == R, "values changed on round trip")
    return "5x5 matrix"


def run_verify(fault: str | None = None, out: io.TextIOBase | None = None) -> tuple[int, list[CheckResult]]:
    """Run every check, print one line each; exit status 0 iff all pass.

    `fault` is a test-only hook that corrupts state inside the named check.
    """
    write = (lambda s: print(s, file=out)) if out is not None else print
    results = []
    for name, fn in CHECKS:
        started = time.perf_counter()
        try:
            detail, passed = fn(fault=fault), True
        except CheckFailed as exc:
            detail, passed = str(exc), False
        results.append(CheckResult(name, passed, detail, time.perf_counter() - started))
        write(f"{'PASS' if passed else 'FAIL'}  {name}  ({detail}; {results[-1].seconds:.2f}s)")
    failed = [r for r in results if not r.passed]
    if failed:
        write(f"FAILED: {failed[0].name}")
        return 1, results
    write(f"all {len(results)} checks passed")
    return 0, results
