"""Linear measurement operators and data-consistency steps.

All operators act on the last axis of their argument, so a batch of row
vectors with shape (B, n) works the same as a single (n,) vector.
Everything is real float64; the subsampled-DFT operator exposes its
complex coefficients as stacked real/imaginary channels so the rest of
the pipeline never sees complex numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, SingularSystemError

VALID_KINDS = ("identity", "dense", "circular", "dft")
STEP_KINDS = ("gradient", "ls", "deblur")


@dataclass(frozen=True)
class SensingOperator:
    """Forward map with kind in {identity, dense, circular, dft}.

    Immutable after construction; use the factory functions below.
    """

    kind: str
    n: int
    m: int
    matrix: np.ndarray | None = field(default=None, repr=False)
    kernel: np.ndarray | None = field(default=None, repr=False)
    grid: tuple[int, int] | None = None
    omega: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.n <= 0:
            raise ValueError("operator needs n >= 1")


def identity_operator(n: int) -> SensingOperator:
    return SensingOperator("identity", n=n, m=n)


def dense_operator(matrix) -> SensingOperator:
    A = np.asarray(matrix, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("dense operator needs a 2-D real matrix")
    m, n = A.shape
    return SensingOperator("dense", n=n, m=m, matrix=A)


def circular_operator(kernel, n: int | None = None, grid=None) -> SensingOperator:
    """Circular convolution with a 1-D kernel, or 2-D on a flattened grid."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim == 1:
        if n is None:
            raise ValueError("1-D circular operator needs n")
        if len(k) > n:
            raise ValueError("kernel longer than the signal")
        pad = np.zeros(n)
        pad[: len(k)] = k
        return SensingOperator("circular", n=n, m=n, kernel=pad)
    if k.ndim == 2:
        if grid is None:
            raise ValueError("2-D circular operator needs grid=(h, w)")
        h, w = grid
        if k.shape[0] > h or k.shape[1] > w:
            raise ValueError("kernel larger than the grid")
        pad = np.zeros((h, w))
        pad[: k.shape[0], : k.shape[1]] = k
        return SensingOperator("circular", n=h * w, m=h * w, kernel=pad, grid=(h, w))
    raise ValueError("kernel must be 1-D or 2-D")


def dft_operator(n: int, omega) -> SensingOperator:
    """Subsampled unitary DFT with conjugate-symmetric frequency set.

    The sampled index set is symmetrized (each k paired with -k mod n) so
    that the normal map Phi^H Phi is an orthogonal projection and real
    inputs stay real. Output stacks real parts then imaginary parts, so
    m = 2 * |Omega|.
    """
    idx = np.asarray(omega, dtype=np.int64) % n
    sym = np.union1d(idx, (-idx) % n)
    return SensingOperator("dft", n=n, m=2 * len(sym), omega=sym)


def _check_len(u, expected, what):
    if u.shape[-1] != expected:
        raise DimensionMismatchError(what, expected, u.shape[-1])


def apply_operator(op: SensingOperator, u, direction: str = "forward") -> np.ndarray:
    """Apply Phi (forward) or Phi^H (adjoint) along the last axis."""
    u = np.asarray(u, dtype=np.float64)
    if direction not in ("forward", "adjoint"):
        raise ValueError(f"direction must be forward or adjoint, got {direction!r}")
    forward = direction == "forward"
    _check_len(u, op.n if forward else op.m, f"{op.kind} {direction} input")

    if op.kind == "identity":
        return u.copy()

    if op.kind == "dense":
        A = op.matrix
        return u @ (A.T if forward else A)

    if op.kind == "circular":
        if op.grid is None:
            kf = np.fft.fft(op.kernel)
            uf = np.fft.fft(u, axis=-1)
            mul = kf if forward else np.conj(kf)
            return np.fft.ifft(uf * mul, axis=-1).real
        h, w = op.grid
        shape = u.shape[:-1] + (h, w)
        kf = np.fft.fft2(op.kernel)
        uf = np.fft.fft2(u.reshape(shape))
        mul = kf if forward else np.conj(kf)
        out = np.fft.ifft2(uf * mul).real
        return out.reshape(u.shape)

    # subsampled unitary DFT, real/imaginary stacked channels
    p = len(op.omega)
    root_n = np.sqrt(op.n)
    if forward:
        z = np.fft.fft(u, axis=-1)[..., op.omega] / root_n
        return np.concatenate([z.real, z.imag], axis=-1)
    z = u[..., :p] + 1j * u[..., p:]
    full = np.zeros(u.shape[:-1] + (op.n,), dtype=np.complex128)
    full[..., op.omega] = z
    return (np.fft.ifft(full, axis=-1) * root_n).real


def operator_matrix(op: SensingOperator) -> np.ndarray:
    """Materialize Phi as an m-by-n matrix."""
    return apply_operator(op, np.eye(op.n)).T


def gram_matrix(op: SensingOperator) -> np.ndarray:
    """Materialize the normal map Phi^H Phi as an n-by-n matrix."""
    return apply_operator(op, apply_operator(op, np.eye(op.n)), "adjoint").T


@dataclass(frozen=True)
class StepParams:
    """Data-consistency step: kind in {gradient, ls, deblur} with scalar alpha."""

    kind: str = "gradient"
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if self.kind == "ls" and not 0.0 <= self.alpha <= 1.0:
            raise ValueError("mixing least-squares step needs 0 <= alpha <= 1")
        if self.kind == "deblur" and self.alpha <= 0.0:
            raise ValueError("deblur least-squares step needs alpha > 0")


def gradient_step(x, y, op: SensingOperator, alpha: float):
    """alpha * Phi^H y + (I - alpha * Phi^H Phi) x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_len(x, op.n, "gradient step state")
    if alpha == 0.0:
        return x.copy()
    back = apply_operator(op, y, "adjoint")
    return x + alpha * (back - apply_operator(op, apply_operator(op, x), "adjoint"))


def _solve(system: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve system @ out = rhs along the last axis of rhs."""
    if np.linalg.cond(system) > 1e12:
        raise SingularSystemError(
            "least-squares system matrix is numerically singular"
        )
    if rhs.ndim == 1:
        return np.linalg.solve(system, rhs)
    n = rhs.shape[-1]
    flat = rhs.reshape(-1, n)
    return np.linalg.solve(system, flat.T).T.reshape(rhs.shape)


def least_squares_step(x, y, op: SensingOperator, alpha: float, kind: str = "mixing"):
    """Proximal least-squares update on the Gram matrix Phi^H Phi.

    mixing: (alpha G + (1-alpha) I)^-1 (alpha Phi^H y + (1-alpha) x)
    deblur: (G + alpha I)^-1 (Phi^H y + alpha x)
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_len(x, op.n, "least-squares step state")
    G = gram_matrix(op)
    back = apply_operator(op, y, "adjoint")
    if kind == "mixing":
        system = alpha * G + (1.0 - alpha) * np.eye(op.n)
        rhs = alpha * back + (1.0 - alpha) * x
    elif kind == "deblur":
        system = G + alpha * np.eye(op.n)
        rhs = back + alpha * x
    else:
        raise ValueError(f"unknown least-squares kind {kind!r}")
    return _solve(system, rhs)


def step_matrices(op: SensingOperator, step: StepParams):
    """Jacobians (G_x, G_y) of the data-consistency step s = G_x x + G_y y."""
    n = op.n
    eye = np.eye(n)
    adj = operator_matrix(op).T  # n x m
    if step.kind == "gradient":
        G = gram_matrix(op)
        return eye - step.alpha * G, step.alpha * adj
    G = gram_matrix(op)
    if step.kind == "ls":
        system = step.alpha * G + (1.0 - step.alpha) * eye
        if np.linalg.cond(system) > 1e12:
            raise SingularSystemError("least-squares system matrix is singular")
        inv = np.linalg.inv(system)
        return (1.0 - step.alpha) * inv, step.alpha * (inv @ adj)
    system = G + step.alpha * eye
    if np.linalg.cond(system) > 1e12:
        raise SingularSystemError("deblur system matrix is singular")
    inv = np.linalg.inv(system)
    return step.alpha * inv, inv @ adj


def apply_step(x, y, op: SensingOperator, step: StepParams):
    """Run the configured data-consistency step."""
    if step.kind == "gradient":
        return gradient_step(x, y, op, step.alpha)
    if step.kind == "ls":
        return least_squares_step(x, y, op, step.alpha, "mixing")
    return least_squares_step(x, y, op, step.alpha, "deblur")


def adjoint_gap(op: SensingOperator, rng: np.random.Generator) -> float:
    """|<Phi u, v> - <u, Phi^H v>| / (||u|| ||v||) for one random pair."""
    u = rng.standard_normal(op.n)
    v = rng.standard_normal(op.m)
    lhs = float(apply_operator(op, u) @ v)
    rhs = float(u @ apply_operator(op, v, "adjoint"))
    return abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v))
