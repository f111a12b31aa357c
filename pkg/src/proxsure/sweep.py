"""Sweep orchestration: train/evaluate one cell per (mode, sigma, N, seed),
emit deterministic CSV/JSON artifacts, and reshape them for plotting.

Artifacts are pure functions of (config, seeds): per-cell JSON files are
written atomically and reused on resume, and the aggregate CSV carries
no timestamps. Wall-clock timings go to a separate timings.csv that is
excluded from the determinism contract.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data as datamod
from .config import ExperimentConfig, build_operator, build_step, config_to_text
from .errors import ProxsureError, TrainingFailureError
from .jacobian import (
    accumulate_jacobian,
    dof_surrogate,
    incoherence,
    jacobian_trace_exact,
    path_expansion,
)
from .network import forward_map, unroll_forward
from .risk import dof_monte_carlo, mse_psnr, sure
from .train import train

COLUMNS = [
    "seed",
    "mode",
    "sigma",
    "n_train",
    "status",
    "test_mse",
    "psnr",
    "rss_mean",
    "dof_exact_mean",
    "dof_mc_mean",
    "sure_mean",
    "mu_w",
    "rho_max",
    "epsilon",
    "dof_surrogate",
    "theorem1_bound",
]

COLUMN_DOCS = {
    "seed": "run seed for data, initialization, and shuffling",
    "mode": "weight sharing (ws) or weight changing (wc)",
    "sigma": "noise standard deviation on unit-normalized data",
    "n_train": "number of training pairs in the cell",
    "status": "ok, or the failure class recorded for the cell",
    "test_mse": "per-coordinate mean squared error against ground truth",
    "psnr": "-10 log10(test_mse)",
    "rss_mean": "mean squared residual ||h(y) - y||^2 over the test set",
    "dof_exact_mean": "mean Jacobian trace over the test set",
    "dof_mc_mean": "mean Monte-Carlo divergence estimate (nan if disabled)",
    "sure_mean": "mean of -n sigma^2 + rss + 2 sigma^2 dof",
    "mu_w": "largest off-diagonal inner product of the shared W",
    "rho_max": "largest mean per-iteration activation count",
    "epsilon": "mu_w * rho_max^(3/2)",
    "dof_surrogate": "mean alternating path-sparsity sum",
    "theorem1_bound": "(1 + epsilon)^T - 1 - epsilon T",
}


def _generate(cfg: ExperimentConfig, N: int, seed_seq, offset: int = 0):
    if cfg.data_kind == "subspace":
        return datamod.generate_subspace_data(
            cfg.n, cfg.data_rank, N, seed=seed_seq, offset=offset
        )
    return datamod.generate_sparse_data(
        cfg.n, cfg.data_dict_size, cfg.data_sparsity, N, seed=seed_seq, offset=offset
    )


def run_cell(cfg: ExperimentConfig, mode: str, sigma: float, n_train: int, seed: int) -> dict:
    """Train and evaluate one sweep cell; returns a SweepRow dict."""
    op = build_operator(cfg)
    step = build_step(cfg)
    train_set = _generate(cfg, n_train, (seed, 10))
    test_set = _generate(cfg, cfg.n_test, (seed, 10), offset=datamod.TEST_OFFSET)
    y_train = datamod.add_noise(train_set.samples, sigma, seed=(seed, 12))
    y_test = datamod.add_noise(test_set.samples, sigma, seed=(seed, 13))
    from .operators import apply_operator

    m_train = apply_operator(op, y_train)
    m_test = apply_operator(op, y_test)

    row = {c: math.nan for c in COLUMNS}
    row.update(seed=seed, mode=mode, sigma=sigma, n_train=n_train, status="ok")
    try:
        result = train(
            train_set.samples,
            m_train,
            test_set.samples,
            m_test,
            op,
            step,
            hidden=cfg.model_hidden,
            T=cfg.model_iterations,
            mode=mode,
            symmetric=cfg.model_symmetric,
            lr_grid=cfg.opt_lr_grid,
            epochs=cfg.opt_epochs,
            batch=cfg.opt_batch,
            anneal_at=None if cfg.opt_anneal_at < 0 else cfg.opt_anneal_at,
            max_steps=None if cfg.opt_max_steps < 0 else cfg.opt_max_steps,
            seed=seed,
        )
    except TrainingFailureError:
        row["status"] = "training-failure"
        return row

    stack = result.stack
    h = forward_map(stack, op, step)
    xhat = h(m_test)
    mse, psnr = mse_psnr(xhat, test_set.samples)
    row["test_mse"] = mse
    row["psnr"] = psnr

    n = cfg.n
    if op.m == op.n:
        rss_vals = np.sum((xhat - m_test) ** 2, axis=1)
    else:
        rss_vals = np.sum((xhat - apply_operator(op, m_test, "adjoint")) ** 2, axis=1)
    row["rss_mean"] = float(rss_vals.mean())

    dof_vals = []
    surrogates = []
    rho_sum = None
    analyzable = (
        cfg.model_symmetric
        and len(cfg.model_hidden) == 1
        and mode == "ws"
        and cfg.model_iterations <= cfg.path_cap
        and op.m == op.n
    )
    mu = incoherence(stack.weights[0][0][0]) if analyzable else math.nan
    for i in range(len(m_test)):
        _, tr = unroll_forward(m_test[i], stack, op, step, record=True)
        J = accumulate_jacobian(tr, stack, op, step)
        if op.m == op.n:
            dof_vals.append(jacobian_trace_exact(J))
        if analyzable:
            terms = path_expansion(tr, stack, max_T=cfg.path_cap)
            surrogates.append(
                float(n)
                + sum((-1.0) ** len(t.index_set) * t.path_sparsity for t in terms)
            )
            rho = np.array([tr.masks[t][0].sum() for t in range(stack.T)], dtype=float)
            rho_sum = rho if rho_sum is None else rho_sum + rho
    if dof_vals:
        row["dof_exact_mean"] = float(np.mean(dof_vals))
        row["sure_mean"] = float(
            np.mean([sure(r, d, n, sigma) for r, d in zip(rss_vals, dof_vals)])
        )
    if cfg.dof_estimator == "mc":
        mc = [
            dof_monte_carlo(h, m_test[i], cfg.dof_probes, seed=seed ^ (i << 16))[0]
            for i in range(len(m_test))
        ]
        row["dof_mc_mean"] = float(np.mean(mc))
    if analyzable and surrogates:
        rho_mean = rho_sum / len(m_test)
        rho_max = float(rho_mean.max())
        eps = float(mu * rho_max**1.5)
        row["mu_w"] = mu
        row["rho_max"] = rho_max
        row["epsilon"] = eps
        row["dof_surrogate"] = float(np.mean(surrogates))
        row["theorem1_bound"] = float((1.0 + eps) ** stack.T - 1.0 - eps * stack.T)
    return row


def _cell_name(mode, sigma, n_train, seed) -> str:
    return f"cell_{mode}_{sigma:g}_{n_train}_{seed}.json"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_sweep(cfg: ExperimentConfig, out_dir, workers: int = 1) -> str:
    """Run all cells, resuming from existing per-cell files.

    Returns the path of the aggregate CSV. Also writes summary.json,
    schema.json, the echoed config, and (non-deterministic) timings.csv.
    """
    os.makedirs(out_dir, exist_ok=True)
    cells = [
        (mode, sigma, n_train, seed)
        for mode in cfg.modes()
        for sigma in cfg.sigma
        for n_train in cfg.n_train_grid
        for seed in cfg.seeds
    ]

    timings = {}

    def compute(cell):
        mode, sigma, n_train, seed = cell
        path = os.path.join(out_dir, _cell_name(*cell))
        if os.path.exists(path):
            with open(path) as f:
                return json.load(f)
        started = time.perf_counter()
        row = run_cell(cfg, mode, sigma, n_train, seed)
        timings[_cell_name(*cell)] = time.perf_counter() - started
        tmp = path + ".tmp"
        with open(tmp, "w") as f:
            json.dump(row, f, sort_keys=True)
        os.replace(tmp, path)
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(compute, cells))
    else:
        rows = [compute(c) for c in cells]

    rows.sort(key=lambda r: (r["mode"], r["sigma"], r["n_train"], r["seed"]))
    csv_path = os.path.join(out_dir, "sweep.csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in COLUMNS])
    with open(csv_path, "w") as f:
        f.write(buf.getvalue())

    summary = {}
    for row in rows:
        key = f"{row['mode']}|{row['sigma']:g}|{row['n_train']}"
        summary.setdefault(key, []).append(row)
    summary_out = {}
    for key, group in sorted(summary.items()):
        agg = {}
        for col in COLUMNS:
            if col in ("seed", "mode", "status"):
                continue
            vals = [g[col] for g in group if isinstance(g[col], (int, float))]
            finite = [v for v in vals if math.isfinite(v)]
            if not finite:
                agg[col] = {"mean": "nan", "std_error": "nan"}
                continue
            mean = float(np.mean(finite))
            se = (
                float(np.std(finite, ddof=1) / math.sqrt(len(finite)))
                if len(finite) > 1
                else 0.0
            )
            agg[col] = {"mean": mean, "std_error": se}
        summary_out[key] = agg
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary_out, f, sort_keys=True, indent=1)
    with open(os.path.join(out_dir, "schema.json"), "w") as f:
        json.dump({"columns": COLUMNS, "docs": COLUMN_DOCS}, f, sort_keys=True, indent=1)
    with open(os.path.join(out_dir, "config.echo"), "w") as f:
        f.write(config_to_text(cfg))
    if timings:
        with open(os.path.join(out_dir, "timings.csv"), "w") as f:
            f.write("cell,wallclock_s\n")
            for name in sorted(timings):
                f.write(f"{name},{timings[name]:.3f}\n")
    return csv_path


def report_plots(csv_path, out_dir) -> list[str]:
    """Reshape a sweep CSV into long-format per-figure files.

    One file per y-quantity with columns (n_train, mode, value), value
    averaged across seeds. Raises on missing columns.
    """
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        rows = list(reader)
    if not rows:
        raise ProxsureError("empty sweep CSV")
    needed = {"n_train", "mode", "seed", "psnr", "rss_mean", "dof_exact_mean"}
    missing = needed - set(rows[0].keys())
    if missing:
        raise ProxsureError(f"sweep CSV missing columns: {sorted(missing)}")
    os.makedirs(out_dir, exist_ok=True)
    outputs = []
    for quantity in ("psnr", "rss_mean", "dof_exact_mean"):
        groups = {}
        for row in rows:
            key = (int(row["n_train"]), row["mode"])
            val = float(row[quantity])
            if math.isfinite(val):
                groups.setdefault(key, []).append(val)
        path = os.path.join(out_dir, f"fig_{quantity}.csv")
        with open(path, "w") as f:
            f.write("n_train,mode,value\n")
            for (n_train, mode), vals in sorted(groups.items()):
                f.write(f"{n_train},{mode},{_fmt(float(np.mean(vals)))}\n")
        outputs.append(path)
    return outputs
