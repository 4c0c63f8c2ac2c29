"""Experiment pipeline: input grid, sampling, prediction-error statistics, timing."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import pinn
from .dynamics import InputDomain, OdeSystem
from .solver import IrkStepConfig, irk_step, reference_solution, rk45_solve
from .tableau import gauss_legendre

GRID_COLUMNS = ("dt", "delta0", "omega0", "p")


@dataclass(frozen=True)
class GridSpec:
    dt_step: float = 0.1
    p_step: float = 0.004
    delta0_step: float = np.pi / 50
    domain: InputDomain = field(default_factory=InputDomain)

    def __post_init__(self):
        if self.dt_step <= 0 or self.p_step <= 0 or self.delta0_step <= 0:
            raise ValueError("grid steps must be positive")
        for step, (lo, hi), name in ((self.dt_step, self.domain.dt_range, "dt"),
                                     (self.p_step, self.domain.p_range, "p"),
                                     (self.delta0_step, self.domain.delta0_range, "delta0")):
            n = (hi - lo) / step
            if abs(n - round(n)) > 1e-9:
                raise ValueError(f"{name} step {step} does not divide range [{lo}, {hi}]")


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return np.linspace(lo, hi, n + 1)


def build_grid(spec: GridSpec = GridSpec()) -> np.ndarray:
    """Full input database: rows (dt, delta0, omega0, p), Cartesian product.

    dt varies slowest, then delta0, then p; omega0 is fixed. The default spec
    yields 101 * 51 * 51 = 262701 points.
    """
    dts = _axis(*spec.domain.dt_range, spec.dt_step)
    deltas = _axis(*spec.domain.delta0_range, spec.delta0_step)
    ps = _axis(*spec.domain.p_range, spec.p_step)
    dt_g, d_g, p_g = np.meshgrid(dts, deltas, ps, indexing="ij")
    grid = np.column_stack([dt_g.ravel(), d_g.ravel(),
                            np.full(dt_g.size, spec.domain.omega0), p_g.ravel()])
    return grid


def sample_indices(n_grid: int, n: int, seed: int, exclude=None) -> np.ndarray:
    """Uniform sample of n distinct grid indices, optionally avoiding `exclude`."""
    rng = np.random.default_rng(seed)
    if exclude is None or len(exclude) == 0:
        if n > n_grid:
            raise ValueError(f"cannot sample {n} from {n_grid} grid points")
        return rng.choice(n_grid, size=n, replace=False)
    mask = np.ones(n_grid, dtype=bool)
    mask[np.asarray(exclude)] = False
    pool = np.flatnonzero(mask)
    if n > pool.size:
        raise ValueError(f"cannot sample {n} disjoint points from pool of {pool.size}")
    return pool[rng.choice(pool.size, size=n, replace=False)]


def points_from_grid(grid: np.ndarray, indices) -> pinn.CollocationSet:
    rows = grid[np.asarray(indices)]
    return pinn.CollocationSet(rows[:, 0], rows[:, 1:3], rows[:, 3])


def sample_collocation(grid: np.ndarray, n: int, seed: int,
                       exclude=None) -> pinn.CollocationSet:
    """Sample n grid points without replacement, deterministic per seed."""
    return points_from_grid(grid, sample_indices(len(grid), n, seed, exclude))


def grid_normalization(grid: np.ndarray):
    """Shift/scale mapping each grid column onto [-1, 1] (constant columns centred).

    Column layout matches the variable-dt network input (dt, delta0, omega0, p).
    """
    lo = grid.min(axis=0)
    hi = grid.max(axis=0)
    half = (hi - lo) / 2.0
    return (lo + hi) / 2.0, np.where(half > 0, half, 1.0)


@dataclass
class ErrorStats:
    """Per-point squared rotor-angle (and speed) prediction errors."""

    e_delta: np.ndarray
    e_omega: np.ndarray

    def percentile_table(self, ks=(100, 90, 50, 10)) -> dict[float, float]:
        vals = percentiles(self.e_delta, ks)
        return dict(zip(ks, vals))

    def percentile_curve(self, n: int = 101):
        ks = np.linspace(0, 100, n)
        return ks, percentiles(self.e_delta, ks)


def percentiles(errors, ks) -> np.ndarray:
    """Linear-interpolation percentiles; k=100 is the max, k=0 the min."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("cannot take percentiles of an empty error set")
    return np.percentile(errors, ks, method="linear")


def prediction_error(model: pinn.RkPinnModel, system: OdeSystem,
                     test_set: pinn.CollocationSet,
                     reference_tol: float = 1e-12) -> ErrorStats:
    """Squared prediction errors against the high-accuracy reference solver.

    Reference trajectories are shared across test points with the same
    (x0, u): one integration serves all their query times.
    """
    n = len(test_set)
    truth = np.empty((n, model.state_dim))
    keys = np.column_stack([test_set.x0, test_set.u])
    _, group_ids = np.unique(keys, axis=0, return_inverse=True)
    for g in np.unique(group_ids):
        idx = np.flatnonzero(group_ids == g)
        truth[idx] = reference_solution(system, test_set.x0[idx[0]],
                                        test_set.u[idx[0], 0],
                                        test_set.dt[idx], tol=reference_tol)
    pred = pinn.evaluate(model, test_set.dt, test_set.x0, test_set.u[:, 0])
    sq = (truth - pred) ** 2
    return ErrorStats(e_delta=sq[:, 0], e_omega=sq[:, 1])


def ensemble_stats(run_results: list, ks=(100, 90, 50, 10)):
    """Mean and sample SD of each k-th percentile across ensemble runs."""
    if len(run_results) < 2:
        raise ValueError("ensemble statistics require at least 2 runs")
    table = np.stack([percentiles(r.e_delta, ks) for r in run_results])
    return table.mean(axis=0), table.std(axis=0, ddof=1)


# --- timing -------------------------------------------------------------------

@dataclass(frozen=True)
class TimingRow:
    method: str
    dt: float
    seconds_per_point: float
    converged: bool


def _median_time(fn, repeats: int, warmup: int = 100) -> float:
    for _ in range(warmup):
        fn()
    samples = np.empty(repeats)
    for i in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples[i] = time.perf_counter() - t0
    return float(np.median(samples))


DEFAULT_TIMING_DTS = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)


def timing_benchmark(model: pinn.RkPinnModel, system: OdeSystem,
                     methods=("pinn", "irk4", "irk32", "rk45"),
                     dt_list=DEFAULT_TIMING_DTS, repeats: int = 50,
                     x0=(-0.69, 0.1), u: float = 0.1,
                     solver_tol: float = 1e-13) -> list[TimingRow]:
    """Median wall time per single-point evaluation for each method and time step.

    Convergence failures are recorded (converged=False) and not timed.
    """
    if repeats < 10:
        raise ValueError("repeats must be at least 10")
    x0 = np.asarray(x0, dtype=float)
    cfg = IrkStepConfig(newton_tol=solver_tol)
    tableaus = {"irk4": gauss_legendre(4), "irk32": gauss_legendre(32)}
    rows = []
    for method in methods:
        for dt in dt_list:
            if method == "pinn":
                fn = lambda: pinn.evaluate(model, dt, x0, u)
                ok = True
            elif method in tableaus:
                tb = tableaus[method]
                ok = irk_step(system, tb, 0.0, x0, u, dt, cfg).converged
                fn = lambda: irk_step(system, tb, 0.0, x0, u, dt, cfg)
            elif method == "rk45":
                fn = lambda: rk45_solve(system, 0.0, x0, u, dt,
                                        rel_tol=solver_tol, abs_tol=solver_tol)
                ok = True
            else:
                raise ValueError(f"unknown timing method {method!r}")
            if not ok:
                rows.append(TimingRow(method, dt, float("nan"), False))
                continue
            rows.append(TimingRow(method, dt, _median_time(fn, repeats), True))
    return rows


def write_timing_csv(path, rows: list[TimingRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "dt", "seconds_per_point", "converged"])
        for r in rows:
            w.writerow([r.method, repr(r.dt), repr(r.seconds_per_point),
                        str(r.converged).lower()])


# --- orchestration --------------------------------------------------------------

@dataclass
class RunResult:
    stages: int
    n_collocation: int
    seed: int
    model: pinn.RkPinnModel
    report: pinn.TrainingReport
    errors: ErrorStats


def run_single(system: OdeSystem, grid: np.ndarray, stages: int, n_collocation: int,
               seed: int, training: pinn.TrainingConfig, hidden=(50,),
               n_validation: int = 1000, n_test: int = 2000,
               state_dim: int = 2, normalize: bool = True) -> RunResult:
    """One (s, N, seed) training run: sample, train, measure test error."""
    coll_idx = sample_indices(len(grid), n_collocation, seed)
    val_idx = sample_indices(len(grid), n_validation, seed + 1_000_003,
                             exclude=coll_idx)
    test_idx = sample_indices(len(grid), n_test, seed + 2_000_003,
                              exclude=np.concatenate([coll_idx, val_idx]))
    coll = points_from_grid(grid, coll_idx)
    val = points_from_grid(grid, val_idx)
    test = points_from_grid(grid, test_idx)

    from . import nn
    tb = gauss_legendre(stages)
    layer_sizes = [1 + state_dim + 1, *hidden, stages * state_dim]
    mlp = nn.glorot_init(layer_sizes, seed)
    shift, scale = grid_normalization(grid) if normalize else (None, None)
    model = pinn.RkPinnModel(mlp, tb, state_dim,
                             input_shift=shift, input_scale=scale)
    trained, report = pinn.train(model, system, coll, val, training)
    errors = prediction_error(trained, system, test)
    return RunResult(stages, n_collocation, seed, trained, report, errors)


def write_errors_csv(path, test_set: pinn.CollocationSet, stats: ErrorStats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dt", "delta0", "p", "e_delta", "e_omega"])
        for i in range(len(test_set)):
            w.writerow([repr(float(test_set.dt[i])), repr(float(test_set.x0[i, 0])),
                        repr(float(test_set.u[i, 0])), repr(float(stats.e_delta[i])),
                        repr(float(stats.e_omega[i]))])


def write_training_csv(path, report: pinn.TrainingReport,
                       lr_epoch_scale: float = 1.0) -> None:
    """Training log: epoch, lr, training loss, and validation loss where logged."""
    from . import nn
    val = dict(report.validation_loss_history)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "lr", "train_loss", "val_loss", "stage_loss", "dt_loss"])
        for e, loss in enumerate(report.training_loss_history):
            v = val.get(e, "")
            w.writerow([e, repr(float(nn.lr_schedule(lr_epoch_scale * e))), repr(float(loss)),
                        repr(float(v)) if v != "" else "",
                        repr(float(report.stage_loss_history[e])),
                        repr(float(report.dt_loss_history[e]))])


def write_percentiles_csv(path, summary_rows) -> None:
    """summary_rows: iterables (s, N, k, mean, sd)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "N", "k", "mean", "sd"])
        for s, n, k, mean, sd in summary_rows:
            w.writerow([s, n, k, repr(float(mean)), repr(float(sd))])
