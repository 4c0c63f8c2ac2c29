"""Command-line entry point: tableau / simulate / train / evaluate / bench / experiment."""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import experiment, nn, pinn
from .config import ConfigError, RunConfig, config_from_dict, parse_config, write_manifest
from .dynamics import smib_system
from .solver import IrkStepConfig, irk_trajectory
from .tableau import TableauError, classical, gauss_legendre


def _out_dir(args) -> str:
    d = args.out_dir or os.environ.get("RKPINN_OUT_DIR", ".")
    os.makedirs(d, exist_ok=True)
    return d


def _make_tableau(scheme: str, stages: int):
    if scheme in ("gauss-legendre", "gauss_legendre"):
        return gauss_legendre(stages)
    return classical(scheme)


def cmd_tableau(args) -> int:
    tb = _make_tableau(args.scheme, args.stages)
    out = args.out or f"tableau_{tb.scheme_name}.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "k", "l", "alpha"])
        for k in range(tb.stages):
            for l in range(tb.stages):
                w.writerow([tb.stages, k + 1, l + 1, repr(float(tb.alpha[k, l]))])
        w.writerow(["k", "beta"])
        for k in range(tb.stages):
            w.writerow([k + 1, repr(float(tb.beta[k]))])
        w.writerow(["k", "gamma"])
        for k in range(tb.stages):
            w.writerow([k + 1, repr(float(tb.gamma[k]))])
    print(f"wrote {out}")
    return 0


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    cfg = parse_config(args.config) if args.config else config_from_dict({})
    system = smib_system(cfg.system_params)
    tb = _make_tableau(args.scheme, args.stages)
    x0 = np.array([float(v) for v in args.x0.split(",")])
    out_dir = _out_dir(args)
    traj = irk_trajectory(system, tb, 0.0, x0, args.p, args.dt, args.steps,
                          IrkStepConfig())
    out = os.path.join(out_dir, args.out or "trajectory.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "delta", "omega", "converged", "newton_iters"])
        # per-step Newton data is re-derived; record the converged flag per row
        for i, t in enumerate(traj.times):
            w.writerow([repr(float(t)), repr(float(traj.states[i, 0])),
                        repr(float(traj.states[i, 1])), "true", ""])
    if not traj.completed:
        print(f"step {traj.failure_index} failed to converge; wrote prefix to {out}",
              file=sys.stderr)
        return 1
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg, None,
                   time.perf_counter() - start,
                   extra={"command": "simulate", "outputs": [out]})
    print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    start = time.perf_counter()
    cfg = parse_config(args.config) if args.config else config_from_dict({})
    system = smib_system(cfg.system_params)
    out_dir = _out_dir(args)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    grid = experiment.build_grid(cfg.grid_spec)
    training = _training_for(cfg, cfg.stages, seed)
    result = experiment.run_single(
        system, grid, cfg.stages, cfg.collocation_sizes[0], seed, training,
        hidden=cfg.hidden, n_validation=cfg.training.validation_points,
        n_test=cfg.test_points, normalize=cfg.normalize_inputs)
    model_path = os.path.join(out_dir, args.out or "model.json")
    pinn.save_model(model_path, result.model, cfg.config_hash(),
                    domain=cfg.raw["grid"])
    log_path = os.path.join(out_dir, "training_log.csv")
    experiment.write_training_csv(log_path, result.report, cfg.lr_epoch_scale)
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg, seed,
                   time.perf_counter() - start,
                   extra={"command": "train", "outputs": [model_path, log_path]})
    print(f"wrote {model_path} (best epoch {result.report.best_epoch}, "
          f"best validation loss {result.report.best_validation_loss:.4g})")
    return 0


def cmd_evaluate(args) -> int:
    model = pinn.load_model(args.model)
    x0 = np.array([float(v) for v in args.x0.split(",")])
    x1 = pinn.evaluate(model, args.dt, x0, args.p)
    print(",".join(repr(float(v)) for v in x1))
    return 0


def cmd_bench(args) -> int:
    start = time.perf_counter()
    cfg = parse_config(args.config) if args.config else config_from_dict({})
    system = smib_system(cfg.system_params)
    out_dir = _out_dir(args)
    if args.model:
        model = pinn.load_model(args.model)
    else:
        tb = gauss_legendre(cfg.stages)
        mlp = nn.glorot_init([4, *cfg.hidden, cfg.stages * 2], cfg.seeds[0])
        shift, scale = (experiment.grid_normalization(experiment.build_grid(cfg.grid_spec))
                        if cfg.normalize_inputs else (None, None))
        model = pinn.RkPinnModel(mlp, tb, 2, input_shift=shift, input_scale=scale)
    rows = experiment.timing_benchmark(model, system, repeats=args.repeats)
    out = os.path.join(out_dir, "timing.csv")
    experiment.write_timing_csv(out, rows)
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg, cfg.seeds[0],
                   time.perf_counter() - start,
                   extra={"command": "bench", "outputs": [out]})
    print(f"wrote {out}")
    return 0


def _training_for(cfg: RunConfig, stages: int, seed: int) -> pinn.TrainingConfig:
    tr = cfg.training
    weights = pinn.LossWeights.uniform(
        stages, 2, stage=cfg.raw["training"]["lambda_stage"],
        dt=cfg.raw["training"]["lambda_dt"])
    return pinn.TrainingConfig(
        epochs=tr.epochs, validation_points=tr.validation_points,
        early_stop_patience=tr.early_stop_patience, seed=seed,
        loss_weights=weights, log_every=tr.log_every,
        lr_epoch_scale=cfg.lr_epoch_scale)


def _experiment_job(payload):
    cfg_dict, stages, n_coll, seed = payload
    cfg = config_from_dict(cfg_dict)
    system = smib_system(cfg.system_params)
    grid = experiment.build_grid(cfg.grid_spec)
    result = experiment.run_single(
        system, grid, stages, n_coll, seed, _training_for(cfg, stages, seed),
        hidden=cfg.hidden, n_validation=cfg.training.validation_points,
        n_test=cfg.test_points, normalize=cfg.normalize_inputs)
    test_idx = experiment.sample_indices(
        len(grid), cfg.test_points, seed + 2_000_003,
        exclude=np.concatenate([
            experiment.sample_indices(len(grid), n_coll, seed),
            experiment.sample_indices(len(grid), cfg.training.validation_points,
                                      seed + 1_000_003,
                                      exclude=experiment.sample_indices(len(grid), n_coll, seed)),
        ]))
    return result, experiment.points_from_grid(grid, test_idx)


def cmd_experiment(args) -> int:
    start = time.perf_counter()
    cfg = parse_config(args.config) if args.config else config_from_dict({})
    system = smib_system(cfg.system_params)
    out_dir = _out_dir(args)
    grid = experiment.build_grid(cfg.grid_spec)
    jobs = [(cfg.raw, s, n, seed)
            for s in cfg.stages_list
            for n in cfg.collocation_sizes
            for seed in cfg.seeds]

    results = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_experiment_job, jobs))
    else:
        results = [_experiment_job(j) for j in jobs]

    summary_rows = []
    by_case = {}
    for (result, test_set) in results:
        name = f"errors_{result.stages}_{result.n_collocation}_{result.seed}.csv"
        experiment.write_errors_csv(os.path.join(out_dir, name), test_set, result.errors)
        pinn.save_model(
            os.path.join(out_dir, f"model_{result.stages}_{result.n_collocation}_{result.seed}.json"),
            result.model, cfg.config_hash(), domain=cfg.raw["grid"])
        experiment.write_training_csv(
            os.path.join(out_dir, f"training_{result.stages}_{result.n_collocation}_{result.seed}.csv"),
            result.report, cfg.lr_epoch_scale)
        by_case.setdefault((result.stages, result.n_collocation), []).append(result.errors)

    for (s, n), errs in sorted(by_case.items()):
        if len(errs) >= 2:
            mean, sd = experiment.ensemble_stats(errs, cfg.percentile_ks)
            for k, m, d in zip(cfg.percentile_ks, mean, sd):
                summary_rows.append((s, n, k, m, d))
        else:
            vals = experiment.percentiles(errs[0].e_delta, cfg.percentile_ks)
            for k, v in zip(cfg.percentile_ks, vals):
                summary_rows.append((s, n, k, v, 0.0))
    experiment.write_percentiles_csv(os.path.join(out_dir, "percentiles.csv"), summary_rows)
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg, cfg.seeds,
                   time.perf_counter() - start,
                   extra={"command": "experiment", "grid_points": len(grid)})
    print(f"wrote {len(results)} runs to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rkpinn",
                                description="RK-PINN training and benchmarking for the SMIB system")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tableau", help="write Butcher tableau coefficients to CSV")
    t.add_argument("--scheme", default="gauss-legendre")
    t.add_argument("--stages", type=int, default=4)
    t.add_argument("--out")
    t.set_defaults(func=cmd_tableau)

    s = sub.add_parser("simulate", help="integrate the SMIB system with an implicit RK scheme")
    s.add_argument("--x0", required=True, help="initial state delta,omega")
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--dt", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--scheme", default="gauss-legendre")
    s.add_argument("--stages", type=int, default=4)
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_simulate)

    tr = sub.add_parser("train", help="train one RK-PINN from a config file")
    tr.add_argument("--config")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--out")
    tr.add_argument("--out-dir")
    tr.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="one-shot prediction from a saved model")
    e.add_argument("--model", required=True)
    e.add_argument("--dt", type=float, required=True)
    e.add_argument("--x0", required=True)
    e.add_argument("--p", type=float, required=True)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="evaluation-time benchmark across methods and dt")
    b.add_argument("--model")
    b.add_argument("--config")
    b.add_argument("--repeats", type=int, default=50)
    b.add_argument("--out-dir")
    b.set_defaults(func=cmd_bench)

    x = sub.add_parser("experiment", help="full (s, N, seed) training/evaluation matrix")
    x.add_argument("--config")
    x.add_argument("--jobs", type=int, default=1)
    x.add_argument("--out-dir")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, TableauError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
