"""Residual-unit proximal stacks and the unrolled forward pass.

A stack holds, per effective iteration, K residual units h -> h + W^H
relu(Wbar h). In the symmetric case Wbar is tied to W with the unit
acting as h -> (I - W^H D W) h, where the mask D = 1{W h > 0} so the
stage matrix is the exact local Jacobian. ReLU at exactly zero counts
as inactive.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, DatasetHeaderError, DatasetTruncatedError
from .operators import SensingOperator, StepParams, apply_operator, apply_step, step_matrices

MAGIC = b"SUNW1"


@dataclass(frozen=True)
class ProximalStack:
    """Trainable weights of the unrolled network.

    weights[i][k] is the pair (W, Wbar) for effective iteration i and
    layer k; Wbar is None when the stack is symmetric. Weight-sharing
    stacks store one iteration entry reused for all T outer iterations.
    """

    n: int
    T: int
    mode: str  # "ws" | "wc"
    symmetric: bool
    weights: tuple  # tuple[tuple[(W, Wbar | None), ...], ...]

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("stack needs n >= 1")
        if self.T < 1:
            raise ValueError("stack needs T >= 1")
        if self.mode not in ("ws", "wc"):
            raise ValueError(f"mode must be 'ws' or 'wc', got {self.mode!r}")
        expected = 1 if self.mode == "ws" else self.T
        if len(self.weights) != expected:
            raise ValueError(
                f"{self.mode} stack must store {expected} weight sets, "
                f"got {len(self.weights)}"
            )
        for layers in self.weights:
            if len(layers) == 0:
                raise ValueError("each iteration needs at least one layer")
            for W, Wbar in layers:
                if W.ndim != 2 or W.shape[1] != self.n:
                    raise ValueError("every W must be (l_k, n)")
                if self.symmetric:
                    if Wbar is not None:
                        raise ValueError("symmetric stacks derive Wbar from W")
                elif Wbar is None or Wbar.shape != W.shape:
                    raise ValueError("Wbar must match the shape of W")

    @property
    def K(self) -> int:
        return len(self.weights[0])

    def layer_weights(self, t: int):
        """Weight list for outer iteration t (0-based)."""
        return self.weights[0 if self.mode == "ws" else t]

    def widths(self) -> tuple[int, ...]:
        return tuple(W.shape[0] for W, _ in self.weights[0])


def random_stack(
    n: int,
    hidden,
    T: int,
    mode: str = "ws",
    symmetric: bool = True,
    seed: int = 0,
    scale: float | None = None,
) -> ProximalStack:
    """Gaussian-initialized stack; default std 1/sqrt(n) keeps stages near identity."""
    rng = np.random.default_rng(seed)
    std = (1.0 / np.sqrt(n)) if scale is None else scale
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


def residual_unit_forward(h, W, Wbar=None):
    """One residual unit on the last axis; returns (h', mask).

    General: h' = h + W^H (D * (Wbar h)), D = 1{Wbar h > 0}.
    Symmetric (Wbar None): h' = h - W^H (D * (W h)), D = 1{W h > 0}.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != W.shape[1]:
        raise DimensionMismatchError("residual unit input", W.shape[1], h.shape[-1])
    if Wbar is None:
        z = h @ W.T
        D = z > 0.0
        return h - (D * z) @ W, D
    if Wbar.shape != W.shape:
        raise DimensionMismatchError("Wbar rows", W.shape[0], Wbar.shape[0])
    z = h @ Wbar.T
    D = z > 0.0
    return h + (D * z) @ W, D


@dataclass
class ForwardTrace:
    """States, pre-proximal states, and activation masks of one forward pass."""

    states: list  # x^0 .. x^T
    pre_prox: list  # s^1 .. s^T
    layer_inputs: list  # layer_inputs[t][k] = h fed to unit k at iteration t+1
    masks: list  # masks[t][k] boolean array of layer width
    converged: bool = False
    converged_at: int | None = None
    tol: float = 0.0


def unroll_forward(
    y,
    stack: ProximalStack,
    op: SensingOperator,
    step: StepParams,
    record: bool = True,
    tol: float = 1e-9,
):
    """Run the unrolled network on y; returns (x^T, trace or None).

    Accepts a single (m,) vector or a batch (B, m); the trace is only
    recorded for single vectors.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != op.m:
        raise DimensionMismatchError("measurement", op.m, y.shape[-1])
    if record and y.ndim != 1:
        raise ValueError("trace recording needs a single input vector")

    x = apply_operator(op, y, "adjoint")
    trace = ForwardTrace([x], [], [], [], tol=tol) if record else None
    for t in range(stack.T):
        s = apply_step(x, y, op, step)
        h = s
        if record:
            trace.pre_prox.append(s)
            trace.layer_inputs.append([])
            trace.masks.append([])
        for W, Wbar in stack.layer_weights(t):
            if record:
                trace.layer_inputs[-1].append(h)
            h, D = residual_unit_forward(h, W, Wbar)
            if record:
                trace.masks[-1].append(D)
        x_new = h
        if record:
            trace.states.append(x_new)
            if not trace.converged and np.linalg.norm(x_new - x) < tol:
                trace.converged = True
                trace.converged_at = t + 1
        x = x_new
    return x, trace


def stage_matrix(W, Wbar, mask) -> np.ndarray:
    """Pseudo-linear matrix of one unit with the mask frozen."""
    d = mask.astype(np.float64)
    if Wbar is None:
        return np.eye(W.shape[1]) - W.T @ (d[:, None] * W)
    return np.eye(W.shape[1]) + W.T @ (d[:, None] * Wbar)


def replay_from_trace(
    trace: ForwardTrace,
    stack: ProximalStack,
    op: SensingOperator,
    step: StepParams,
    y,
) -> np.ndarray:
    """Rebuild x^T from the recorded masks via pseudo-linear stage products."""
    y = np.asarray(y, dtype=np.float64)
    G_x, G_y = step_matrices(op, step)
    x = apply_operator(op, y, "adjoint")
    for t in range(stack.T):
        s = G_x @ x + G_y @ y
        for (W, Wbar), mask in zip(stack.layer_weights(t), trace.masks[t]):
            s = stage_matrix(W, Wbar, mask) @ s
        x = s
    return x


def forward_map(stack: ProximalStack, op: SensingOperator, step: StepParams):
    """End-to-end map y -> x^T as a plain callable (batched on the last axis)."""

    def h(y):
        out, _ = unroll_forward(y, stack, op, step, record=False)
        return out

    return h


def save_stack(stack: ProximalStack, path) -> None:
    """Write the SUNW1 weight container.

    Layout: magic "SUNW1"; little-endian u32 mode (0 ws / 1 wc), u32
    symmetric flag, u32 T, u32 K; per layer u32 l_k, u32 n_k; then
    row-major float64 payloads in iteration-major, layer-major order
    (W, then Wbar when present).
    """
    header = [MAGIC]
    header.append(struct.pack("<4I", 0 if stack.mode == "ws" else 1,
                              1 if stack.symmetric else 0, stack.T, stack.K))
    for W, _ in stack.weights[0]:
        header.append(struct.pack("<2I", W.shape[0], W.shape[1]))
    payload = []
    for layers in stack.weights:
        for W, Wbar in layers:
            payload.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
            if Wbar is not None:
                payload.append(np.ascontiguousarray(Wbar, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(header) + b"".join(payload))


def load_stack(path) -> ProximalStack:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 16 or blob[: len(MAGIC)] != MAGIC:
        raise DatasetHeaderError("not a SUNW1 weight container")
    off = len(MAGIC)
    mode_u, sym_u, T, K = struct.unpack_from("<4I", blob, off)
    off += 16
    shapes = []
    for _ in range(K):
        if off + 8 > len(blob):
            raise DatasetTruncatedError("weight container header truncated")
        l_k, n_k = struct.unpack_from("<2I", blob, off)
        off += 8
        shapes.append((l_k, n_k))
    mode = "ws" if mode_u == 0 else "wc"
    symmetric = bool(sym_u)
    n = shapes[0][1]
    reps = 1 if mode == "ws" else T
    its = []
    for _ in range(reps):
        layers = []
        for l_k, n_k in shapes:
            count = l_k * n_k
            mats = []
            for _ in range(1 if symmetric else 2):
                end = off + 8 * count
                if end > len(blob):
                    raise DatasetTruncatedError("weight payload truncated")
                mats.append(
                    np.frombuffer(blob, dtype="<f8", count=count, offset=off)
                    .reshape(l_k, n_k)
                    .copy()
                )
                off = end
            layers.append((mats[0], mats[1] if not symmetric else None))
        its.append(tuple(layers))
    if off != len(blob):
        raise DatasetHeaderError("trailing bytes after declared weight payload")
    return ProximalStack(n=n, T=T, mode=mode, symmetric=symmetric, weights=tuple(its))
