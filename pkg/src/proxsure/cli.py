"""Command-line front end.

Exit codes: 0 success, 1 usage/config error, 2 verification failure,
3 runtime/numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import data as datamod
from .config import ExperimentConfig, build_operator, build_step, parse_config
from .errors import ConfigError, ProxsureError
from .jacobian import jacobian_report
from .network import forward_map, load_stack, save_stack, unroll_forward
from .risk import sure_report
from .spectrum import spectrum, spectrum_csv
from .sweep import report_plots, run_sweep
from .train import train
from .verify import COMMANDS as VERIFY_COMMANDS

log = logging.getLogger("proxsure")


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        cfg = ExperimentConfig()
    else:
        with open(args.config) as f:
            cfg = parse_config(f.read())
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _cmd_generate_data(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seeds[0]
    if cfg.data_kind == "subspace":
        dataset = datamod.generate_subspace_data(cfg.n, cfg.data_rank, args.count, seed=seed)
    else:
        dataset = datamod.generate_sparse_data(
            cfg.n, cfg.data_dict_size, cfg.data_sparsity, args.count, seed=seed
        )
    os.makedirs(os.path.dirname(args.path) or ".", exist_ok=True)
    datamod.save_dataset(dataset, args.path)
    log.info("wrote %d samples to %s", dataset.N, args.path)
    return 0


def _train_cell(cfg: ExperimentConfig, seed: int):
    op = build_operator(cfg)
    step = build_step(cfg)
    sigma = cfg.sigma[0]
    n_train = cfg.n_train_grid[-1]
    if cfg.data_kind == "subspace":
        train_set = datamod.generate_subspace_data(cfg.n, cfg.data_rank, n_train, seed=(seed, 10))
        test_set = datamod.generate_subspace_data(
            cfg.n, cfg.data_rank, cfg.n_test, seed=(seed, 10), offset=datamod.TEST_OFFSET
        )
    else:
        train_set = datamod.generate_sparse_data(
            cfg.n, cfg.data_dict_size, cfg.data_sparsity, n_train, seed=(seed, 10)
        )
        test_set = datamod.generate_sparse_data(
            cfg.n, cfg.data_dict_size, cfg.data_sparsity, cfg.n_test,
            seed=(seed, 10), offset=datamod.TEST_OFFSET,
        )
    from .operators import apply_operator

    y_train = apply_operator(op, datamod.add_noise(train_set.samples, sigma, seed=(seed, 12)))
    y_test = apply_operator(op, datamod.add_noise(test_set.samples, sigma, seed=(seed, 13)))
    result = train(
        train_set.samples, y_train, test_set.samples, y_test, op, step,
        hidden=cfg.model_hidden, T=cfg.model_iterations,
        mode=cfg.modes()[0], symmetric=cfg.model_symmetric,
        lr_grid=cfg.opt_lr_grid, epochs=cfg.opt_epochs, batch=cfg.opt_batch,
        anneal_at=None if cfg.opt_anneal_at < 0 else cfg.opt_anneal_at,
        max_steps=None if cfg.opt_max_steps < 0 else cfg.opt_max_steps,
        seed=seed,
    )
    return result, op, step, test_set, y_test, sigma


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    result, *_ = _train_cell(cfg, cfg.seeds[0])
    os.makedirs(cfg.out, exist_ok=True)
    weights_path = os.path.join(cfg.out, "weights.bin")
    save_stack(result.stack, weights_path)
    summary = {
        "lr": result.lr,
        "epochs": result.epochs,
        "final_train_loss": result.train_loss[-1],
        "final_test_mse": result.test_mse[-1],
        "diverged_lrs": result.diverged_lrs,
        "weights": weights_path,
    }
    with open(os.path.join(cfg.out, "train.json"), "w") as f:
        json.dump(summary, f, sort_keys=True)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    stack = load_stack(args.weights)
    op = build_operator(cfg)
    step = build_step(cfg)
    sigma = cfg.sigma[0]
    seed = cfg.seeds[0]
    if cfg.data_kind == "subspace":
        test_set = datamod.generate_subspace_data(
            cfg.n, cfg.data_rank, cfg.n_test, seed=(seed, 10), offset=datamod.TEST_OFFSET
        )
    else:
        test_set = datamod.generate_sparse_data(
            cfg.n, cfg.data_dict_size, cfg.data_sparsity, cfg.n_test,
            seed=(seed, 10), offset=datamod.TEST_OFFSET,
        )
    from .operators import apply_operator
    from .jacobian import accumulate_jacobian

    y_test = apply_operator(op, datamod.add_noise(test_set.samples, sigma, seed=(seed, 13)))
    h = forward_map(stack, op, step)
    reports = []
    for i in range(test_set.N):
        J = None
        if op.m == op.n:
            _, tr = unroll_forward(y_test[i], stack, op, step, record=True)
            J = accumulate_jacobian(tr, stack, op, step)
        reports.append(
            sure_report(h, y_test[i], sigma, J=J, x_true=test_set.samples[i],
                        primary_dof="exact" if J is not None else "fd")
        )
    mean = {
        "n_test": len(reports),
        "sigma": sigma,
        "rss_mean": float(np.mean([r.rss for r in reports])),
        "sure_mean": float(np.mean([r.sure for r in reports])),
        "mse_mean": float(np.mean([r.mse_vs_truth for r in reports])),
        "psnr_mean": float(np.mean([r.psnr for r in reports])),
    }
    dofs = [r.dof_exact for r in reports if r.dof_exact is not None]
    if dofs:
        mean["dof_exact_mean"] = float(np.mean(dofs))
    print(json.dumps(mean, sort_keys=True))
    if args.per_input:
        for r in reports:
            print(r.to_json())
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    csv_path = run_sweep(cfg, cfg.out, workers=args.workers)
    print(csv_path)
    return 0


def _cmd_verify(args) -> int:
    fn = VERIFY_COMMANDS[args.check]
    kwargs = {}
    if args.trials is not None:
        kwargs["trials"] = args.trials
    if args.seed is not None and args.check in ("jacobian", "theorem1", "lemma3", "lemma4"):
        kwargs["seed"] = args.seed
    report = fn(**kwargs)
    print(report.to_json())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"verify_{args.check}.json"), "w") as f:
            f.write(report.to_json())
    return 0 if report.passed else 2


def _cmd_jacobian_report(args) -> int:
    cfg = _load_config(args)
    stack = load_stack(args.weights)
    op = build_operator(cfg)
    step = build_step(cfg)
    y = np.asarray(json.loads(args.input), dtype=np.float64)
    _, tr = unroll_forward(y, stack, op, step, record=True)
    print(jacobian_report(tr, stack, op, step, max_T=cfg.path_cap).to_json())
    return 0


def _cmd_spectrum(args) -> int:
    with open(args.kernels) as f:
        kernels = json.load(f)
    grid, label, ratio = spectrum(kernels, args.pad)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    grid_path = os.path.join(out_dir, "spectrum.csv")
    with open(grid_path, "w") as f:
        f.write(spectrum_csv(grid))
    print(json.dumps(
        {"classification": label, "low_frequency_ratio": ratio,
         "pad": args.pad, "grid": grid_path},
        sort_keys=True,
    ))
    return 0


def _cmd_report(args) -> int:
    outputs = report_plots(args.csv, args.out or os.path.dirname(args.csv) or ".")
    for path in outputs:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxsure",
        description="Unrolled proximal networks with SURE-based risk analysis.",
    )
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key = value config file")
    common.add_argument("--seed", type=int, help="override the config seed list")
    common.add_argument("--out", help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", parents=[common], help="write a dataset container")
    p.add_argument("path", help="output .bin path")
    p.add_argument("--count", type=int, default=256, help="number of samples")
    p.set_defaults(fn=_cmd_generate_data)

    p = sub.add_parser("train", parents=[common], help="train one cell and save weights")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="SURE decomposition on the test set")
    p.add_argument("weights", help="SUNW1 weight container")
    p.add_argument("--per-input", action="store_true", help="also print per-input reports")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="run the full experiment grid")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="numerical theory checks")
    p.add_argument("check", choices=sorted(VERIFY_COMMANDS))
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("jacobian-report", parents=[common],
                       help="path expansion for one input")
    p.add_argument("weights")
    p.add_argument("input", help="JSON array, the measurement vector")
    p.set_defaults(fn=_cmd_jacobian_report)

    p = sub.add_parser("spectrum", parents=[common], help="filter bank spectrum analysis")
    p.add_argument("kernels", help="JSON file: list of 2-D kernel arrays")
    p.add_argument("--pad", type=int, default=64)
    p.set_defaults(fn=_cmd_spectrum)

    p = sub.add_parser("report", parents=[common], help="reshape a sweep CSV for plotting")
    p.add_argument("csv")
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    logging.basicConfig(level=args.log_level.upper())
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProxsureError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
