"""Training: reverse-mode gradients, Adam, the spectral closed form for
the linear limit, and the fixed-point mask analysis.

The backward pass traverses the unrolled graph with the recorded ReLU
masks (derivative 0 at exactly 0); weight-sharing sums the per-iteration
contributions into the single weight set.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import NonFiniteError, TrainingFailureError
from .network import ProximalStack
from .operators import SensingOperator, StepParams, apply_operator, step_matrices

# dense grid for full-scale experiments; the default keeps desk runs fast
FULL_LR_GRID = (
    0.0075, 0.005, 0.0025, 0.001, 0.00075,
    0.0005, 0.00025, 0.0001, 0.000075, 0.00005,
)
DEFAULT_LR_GRID = (3e-4, 1e-3, 3e-3)


def flatten_weights(stack: ProximalStack) -> list[np.ndarray]:
    """Deterministic flat view: iteration-major, layer-major, W then Wbar."""
    out = []
    for layers in stack.weights:
        for W, Wbar in layers:
            out.append(W)
            if Wbar is not None:
                out.append(Wbar)
    return out


def stack_with_weights(stack: ProximalStack, arrays) -> ProximalStack:
    """Rebuild a stack from a flat array list in flatten_weights order."""
    it = iter(arrays)
    its = []
    for layers in stack.weights:
        new_layers = []
        for _, Wbar in layers:
            W_new = next(it)
            Wb_new = None if Wbar is None else next(it)
            new_layers.append((W_new, Wb_new))
        its.append(tuple(new_layers))
    return replace(stack, weights=tuple(its))


def _forward_cached(stack, Y, op, step, G_x, G_y):
    """Batched forward keeping what the backward pass needs."""
    x = apply_operator(op, Y, "adjoint")
    cache = []
    for t in range(stack.T):
        s = x @ G_x.T + Y @ G_y.T
        h = s
        layer_cache = []
        for W, Wbar in stack.layer_weights(t):
            Wb = W if Wbar is None else Wbar
            z = h @ Wb.T
            D = z > 0.0
            a = D * z
            h_next = (h - a @ W) if Wbar is None else (h + a @ W)
            layer_cache.append((h, z, D))
            h = h_next
        cache.append(layer_cache)
        x = h
    return x, cache


def loss_and_gradients(
    stack: ProximalStack,
    x_true,
    y,
    op: SensingOperator,
    step: StepParams,
):
    """Mean squared batch loss and gradients for every stored weight.

    x_true is (B, n), y is (B, m). Returns (loss, grads) with grads in
    flatten_weights order.
    """
    X = np.atleast_2d(np.asarray(x_true, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise ValueError("batch of (x, y) pairs must be nonempty and aligned")
    B = X.shape[0]
    G_x, G_y = step_matrices(op, step)
    xhat, cache = _forward_cached(stack, Y, op, step, G_x, G_y)
    diff = xhat - X
    loss = float(np.sum(diff**2) / B)
    if not np.isfinite(loss):
        bad = int(np.flatnonzero(~np.isfinite(np.sum(diff**2, axis=1)))[0])
        raise NonFiniteError(f"non-finite loss at batch sample {bad}")

    grads = {}  # (iteration set index, layer, slot) -> array
    g = 2.0 * diff / B
    for t in reversed(range(stack.T)):
        wi = 0 if stack.mode == "ws" else t
        layers = stack.layer_weights(t)
        for k in reversed(range(len(layers))):
            W, Wbar = layers[k]
            h_in, z, D = cache[t][k]
            a = D * z
            if Wbar is None:
                dz = D * (-(g @ W.T))
                gW = -(a.T @ g) + dz.T @ h_in
                g = g + dz @ W
                key = (wi, k, 0)
                grads[key] = grads.get(key, 0.0) + gW
            else:
                dz = D * (g @ W.T)
                gW = a.T @ g
                gWbar = dz.T @ h_in
                g = g + dz @ Wbar
                for slot, val in ((0, gW), (1, gWbar)):
                    key = (wi, k, slot)
                    grads[key] = grads.get(key, 0.0) + val
        g = g @ G_x
    flat = []
    for wi in range(len(stack.weights)):
        for k, (_, Wbar) in enumerate(stack.weights[wi]):
            flat.append(grads[(wi, k, 0)])
            if Wbar is not None:
                flat.append(grads[(wi, k, 1)])
    return loss, flat


@dataclass
class OptimizerState:
    """Adam accumulators shaped like the flat weight list."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step_count: int = 0

    @classmethod
    def for_weights(cls, weights, lr, **kwargs):
        return cls(
            lr=lr,
            m=[np.zeros_like(w) for w in weights],
            v=[np.zeros_like(w) for w in weights],
            **kwargs,
        )


def adam_step(state: OptimizerState, weights, grads):
    """Bias-corrected Adam update; returns (new_weights, new_state)."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient passed to Adam")
    t = state.step_count + 1
    new_m, new_v, new_w = [], [], []
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for w, g, m, v in zip(weights, grads, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        new_m.append(m)
        new_v.append(v)
        new_w.append(w - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return new_w, OptimizerState(
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        m=new_m,
        v=new_v,
        step_count=t,
    )


@dataclass
class TrainRunResult:
    """Outcome of one training cell after learning-rate selection."""

    stack: ProximalStack
    train_loss: list[float]
    test_mse: list[float]
    lr: float
    seed: int
    epochs: int
    init_std: float
    diverged_lrs: list[float] = field(default_factory=list)


def _init_stack(n, hidden, T, mode, symmetric, rng) -> ProximalStack:
    std = 1.0 / np.sqrt(n)
    reps = 1 if mode == "ws" else T
    its = []
    for _ in range(reps):
        layers = []
        for width in hidden:
            W = std * rng.standard_normal((width, n))
            Wbar = None if symmetric else std * rng.standard_normal((width, n))
            layers.append((W, Wbar))
        its.append(tuple(layers))
    return ProximalStack(n=n, T=T, mode=mode, symmetric=symmetric, weights=tuple(its))


def train(
    x_train,
    y_train,
    x_test,
    y_test,
    op: SensingOperator,
    step: StepParams,
    hidden,
    T: int,
    mode: str = "ws",
    symmetric: bool = True,
    lr_grid=DEFAULT_LR_GRID,
    epochs: int = 20,
    batch: int = 8,
    anneal_at: int | None = None,
    max_steps: int | None = None,
    seed: int = 0,
) -> TrainRunResult:
    """Minibatch Adam over a learning-rate grid; keeps the run with the
    lowest final held-out MSE. Fully deterministic given the seed."""
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    x_test = np.asarray(x_test, dtype=np.float64)
    y_test = np.asarray(y_test, dtype=np.float64)
    if len(x_train) == 0:
        raise ValueError("empty training set")
    n = x_train.shape[1]
    N = len(x_train)
    G_x, G_y = step_matrices(op, step)

    best = None
    diverged = []
    histories = {}
    for li, lr in enumerate(lr_grid):
        init_rng = np.random.default_rng([seed, li, 2])
        order_rng = np.random.default_rng([seed, li, 3])
        stack = _init_stack(n, hidden, T, mode, symmetric, init_rng)
        weights = flatten_weights(stack)
        state = OptimizerState.for_weights(weights, lr)
        loss_hist, mse_hist = [], []
        steps_done = 0
        failed = False
        for epoch in range(epochs):
            if anneal_at is not None and epoch == anneal_at:
                state.lr = lr * 0.1
            order = order_rng.permutation(N)
            epoch_loss = 0.0
            seen = 0
            for start in range(0, N, batch):
                if max_steps is not None and steps_done >= max_steps:
                    break
                idx = order[start : start + batch]
                stack = stack_with_weights(stack, weights)
                try:
                    loss, grads = loss_and_gradients(
                        stack, x_train[idx], y_train[idx], op, step
                    )
                except NonFiniteError:
                    failed = True
                    break
                weights, state = adam_step(state, weights, grads)
                epoch_loss += loss * len(idx)
                seen += len(idx)
                steps_done += 1
            if failed:
                break
            if seen == 0:
                break
            stack = stack_with_weights(stack, weights)
            xhat, _ = _forward_cached(stack, y_test, op, step, G_x, G_y)
            loss_hist.append(epoch_loss / seen)
            mse_hist.append(float(np.mean((xhat - x_test) ** 2)))
            if max_steps is not None and steps_done >= max_steps:
                break
        if failed or not mse_hist or not np.isfinite(mse_hist[-1]):
            diverged.append(lr)
            histories[lr] = loss_hist
            continue
        if best is None or mse_hist[-1] < best[0]:
            best = (
                mse_hist[-1],
                TrainRunResult(
                    stack=stack_with_weights(stack, weights),
                    train_loss=loss_hist,
                    test_mse=mse_hist,
                    lr=lr,
                    seed=seed,
                    epochs=len(loss_hist),
                    init_std=1.0 / np.sqrt(n),
                ),
            )
    if best is None:
        raise TrainingFailureError(histories)
    result = best[1]
    result.diverged_lrs = diverged
    return result


# --- linear limit (PCA) -------------------------------------------------


def projection_objective(W: np.ndarray, C: np.ndarray, sigma2: float) -> float:
    """tr(P_W (C - sigma^2 I)) for the row-space projector of W."""
    if W.shape[0] == 0:
        return 0.0
    P = W.T @ np.linalg.pinv(W.T)
    return float(np.trace(P @ (C - sigma2 * np.eye(C.shape[0]))))


def pca_closed_form(dataset: Dataset, sigma2: float):
    """Closed-form weights of the infinite-iteration linear limit.

    The rows of W are the eigenvectors of the sample correlation matrix
    whose eigenvalues fall strictly below sigma2 (ties are retained in
    the signal, i.e. kept out of W), so the end-to-end limit map
    I - P_W annihilates exactly the below-noise directions. Returns
    (W, dof_spectral) with dof_spectral = #{sigma_i >= sigma2}.
    """
    if dataset.N < 1:
        raise ValueError("empty dataset")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    X = dataset.samples
    C = (X.T @ X) / dataset.N
    eigvals, eigvecs = np.linalg.eigh(C)
    below = eigvals < sigma2
    W = eigvecs[:, below].T
    dof_spectral = int(np.sum(~below))
    return W, dof_spectral


# --- fixed-point mask analysis ------------------------------------------


@dataclass
class FixedPointResult:
    x: np.ndarray
    support: np.ndarray  # active row indices (tail-window union)
    mask: np.ndarray  # boolean indicator of support
    dof: int  # n - |support|
    converged: bool
    iterations: int
    projector_residual: float
    tail_margin: float  # min |pre-activation| over the tail window


def mask_fixed_point(
    W: np.ndarray,
    y,
    tol: float = 1e-9,
    max_iter: int = 10000,
    tail: int = 10,
) -> FixedPointResult:
    """Iterate x <- (I - W^H D(x) W) x until the state stops moving.

    The support is the union of active indices over the last `tail`
    iterations: exact fixed points drive active pre-activations to zero
    from above, where the instantaneous 1{>0} mask flickers off.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(y, dtype=np.float64).copy()
    tail_masks = []
    tail_z = []
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        z = W @ x
        D = z > 0.0
        x_new = x - W.T @ (D * z)
        tail_masks.append(D)
        tail_z.append(np.abs(z))
        if len(tail_masks) > tail:
            tail_masks.pop(0)
            tail_z.pop(0)
        delta = float(np.linalg.norm(x_new - x))
        x = x_new
        iterations = it
        if delta < tol:
            converged = True
            break
    mask = np.logical_or.reduce(tail_masks)
    support = np.flatnonzero(mask)
    W_s = W[support]
    if len(support):
        proj = np.eye(len(x)) - W_s.T @ np.linalg.pinv(W_s.T)
        target = proj @ np.asarray(y, dtype=np.float64)
    else:
        target = np.asarray(y, dtype=np.float64)
    tail_margin = float(min(z.min() for z in tail_z)) if len(W) else np.inf
    return FixedPointResult(
        x=x,
        support=support,
        mask=mask,
        dof=len(x) - len(support),
        converged=converged,
        iterations=iterations,
        projector_residual=float(np.linalg.norm(x - target)),
        tail_margin=tail_margin,
    )


def fixed_point_jacobian(W: np.ndarray, y, iterations: int) -> np.ndarray:
    """Product of instantaneous stage matrices along the orbit from y."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(y, dtype=np.float64).copy()
    n = len(x)
    J = np.eye(n)
    for _ in range(iterations):
        z = W @ x
        D = (z > 0.0).astype(np.float64)
        M = np.eye(n) - W.T @ (D[:, None] * W)
        J = M @ J
        x = x - W.T @ (D * z)
    return J
