"""SURE risk decomposition: RSS, degrees of freedom, and reference MSE.

For Gaussian denoising y = x + v with known sigma,
SURE(y) = -n sigma^2 + ||h(y) - y||^2 + 2 sigma^2 * div_y h(y)
is an unbiased estimate of the test MSE. The divergence (DOF) comes
from the exact Jacobian trace, coordinate finite differences, or a
seeded Monte-Carlo probe estimator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError


def rss(y, xhat) -> float:
    """Squared distance between the network output and its noisy input."""
    y = np.asarray(y, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if y.shape != xhat.shape:
        raise DimensionMismatchError("rss", y.shape[-1], xhat.shape[-1])
    return float(np.sum((xhat - y) ** 2))


def dof_exact(J) -> float:
    """Trace of the assembled end-to-end Jacobian."""
    J = np.asarray(J)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"dof_exact needs a square Jacobian, got {J.shape}")
    return float(np.trace(J))


def default_fd_delta(y) -> float:
    return 1e-6 * (1.0 + float(np.max(np.abs(y))))


def dof_finite_difference(h, y, delta: float | None = None) -> float:
    """Coordinate divergence sum_i [h(y + d e_i)_i - h(y)_i] / d.

    Exact for linear maps; n + 1 forward passes, batched.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[-1]
    if delta is None:
        delta = default_fd_delta(y)
    if delta <= 0:
        raise ValueError("delta must be positive")
    base = h(y)
    shifted = h(y[None, :] + delta * np.eye(n))
    diag = np.diagonal(shifted) - np.asarray(base)
    if not np.all(np.isfinite(diag)):
        bad = int(np.flatnonzero(~np.isfinite(diag))[0])
        raise NonFiniteError(f"non-finite output at coordinate {bad}")
    return float(np.sum(diag) / delta)


def default_mc_delta(y) -> float:
    # larger than the fd default so probes stay within one linear region
    # with high probability relative to their norm
    return 1e-4 * (1.0 + float(np.max(np.abs(y))))


def dof_monte_carlo(
    h,
    y,
    K: int,
    delta: float | None = None,
    probe_dist: str = "rademacher",
    seed: int = 0,
):
    """Probe estimator (1/K) sum_k e_k^T [h(y + d e_k) - h(y)] / d.

    Probe k is drawn from a generator seeded with seed XOR k, so the
    estimate is deterministic and order-independent. Returns
    (estimate, standard error).
    """
    if K < 1:
        raise ValueError("need at least one probe")
    if probe_dist not in ("rademacher", "gaussian"):
        raise ValueError(f"unknown probe distribution {probe_dist!r}")
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[-1]
    if delta is None:
        delta = default_mc_delta(y)
    probes = np.empty((K, n))
    for k in range(K):
        rng = np.random.default_rng(seed ^ k)
        if probe_dist == "rademacher":
            probes[k] = rng.integers(0, 2, size=n) * 2.0 - 1.0
        else:
            probes[k] = rng.standard_normal(n)
    base = h(y)
    diffs = (h(y[None, :] + delta * probes) - base) / delta
    if not np.all(np.isfinite(diffs)):
        raise NonFiniteError("non-finite output during Monte-Carlo probing")
    samples = np.einsum("ki,ki->k", probes, diffs)
    estimate = float(samples.mean())
    std_error = float(samples.std(ddof=1) / math.sqrt(K)) if K > 1 else 0.0
    return estimate, std_error


def sure(rss_value: float, dof: float, n: int, sigma: float) -> float:
    """-n sigma^2 + RSS + 2 sigma^2 DOF."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return -n * sigma**2 + rss_value + 2.0 * sigma**2 * dof


def mse_psnr(xhat, x_true):
    """Per-coordinate MSE and PSNR = -10 log10(MSE); zero MSE maps to +inf."""
    xhat = np.asarray(xhat, dtype=np.float64)
    x_true = np.asarray(x_true, dtype=np.float64)
    if xhat.shape != x_true.shape:
        raise DimensionMismatchError("mse", x_true.shape[-1], xhat.shape[-1])
    mse = float(np.mean((xhat - x_true) ** 2))
    psnr = math.inf if mse == 0.0 else -10.0 * math.log10(mse)
    return mse, psnr


def residual_identity(J, y):
    """Both sides of ||Jy - y||^2 = ||Jy||^2 - 2 y^H J y + ||y||^2.

    This is the exact algebraic identity behind the RSS decomposition of
    a mask-frozen linearization; returns (lhs, rhs).
    """
    J = np.asarray(J, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Jy = J @ y
    lhs = float(np.sum((Jy - y) ** 2))
    rhs = float(Jy @ Jy - 2.0 * (y @ Jy) + y @ y)
    return lhs, rhs


@dataclass
class SureReport:
    """RSS, DOF estimates, SURE, and the ground-truth reference for one input."""

    n: int
    sigma: float
    rss: float
    dof_exact: float | None = None
    dof_fd: float | None = None
    dof_mc: float | None = None
    mc_std_error: float | None = None
    mc_probes: int | None = None
    primary_dof: str = "exact"
    sure: float = math.nan
    mse_vs_truth: float | None = None
    psnr: float | None = None
    output_norm: float | None = None  # ||x^T||, reported instead of renormalizing
    # RSS/SURE use un-normalized sums; MSE/PSNR use the per-coordinate mean.
    rss_normalization: str = "sum"
    mse_normalization: str = "mean"

    def to_json(self) -> str:
        def clean(v):
            if v is None:
                return None
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        return json.dumps(
            {k: clean(v) for k, v in self.__dict__.items()}, sort_keys=True
        )


def sure_report(
    h,
    y,
    sigma: float,
    J=None,
    x_true=None,
    mc_probes: int | None = None,
    mc_seed: int = 0,
    primary_dof: str = "exact",
) -> SureReport:
    """Evaluate the full SURE decomposition for one input."""
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[-1]
    xhat = h(y)
    report = SureReport(n=n, sigma=sigma, rss=rss(y, xhat), primary_dof=primary_dof)
    report.output_norm = float(np.linalg.norm(xhat))
    if J is not None:
        report.dof_exact = dof_exact(J)
    if primary_dof == "fd" or J is None:
        report.dof_fd = dof_finite_difference(h, y)
    if mc_probes:
        report.dof_mc, report.mc_std_error = dof_monte_carlo(
            h, y, mc_probes, seed=mc_seed
        )
        report.mc_probes = mc_probes
    chosen = {
        "exact": report.dof_exact,
        "fd": report.dof_fd,
        "mc": report.dof_mc,
    }[primary_dof]
    if chosen is None:
        raise ValueError(f"primary DOF estimator {primary_dof!r} was not computed")
    report.sure = sure(report.rss, chosen, n, sigma)
    if x_true is not None:
        report.mse_vs_truth, report.psnr = mse_psnr(xhat, x_true)
    return report
