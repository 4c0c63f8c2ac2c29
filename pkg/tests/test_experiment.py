import csv

import numpy as np
import pytest

from rkpinn import experiment, nn, pinn, tableau
from rkpinn.dynamics import smib_system


@pytest.fixture(scope="module")
def grid():
    return experiment.build_grid()


def test_grid_shape_and_corners(grid):
    assert grid.shape == (101 * 51 * 51, 4)
    assert grid[0] == pytest.approx([0.0, -np.pi / 2, 0.1, 0.0])
    assert grid[-1] == pytest.approx([10.0, np.pi / 2, 0.1, 0.2])


def test_grid_axis_order(grid):
    # p varies fastest, then delta0, then dt
    assert grid[1] == pytest.approx([0.0, -np.pi / 2, 0.1, 0.004])
    assert grid[51] == pytest.approx([0.0, -np.pi / 2 + np.pi / 50, 0.1, 0.0])
    assert grid[51 * 51] == pytest.approx([0.1, -np.pi / 2, 0.1, 0.0])


def test_grid_spacing(grid):
    dts = np.unique(grid[:, 0])
    assert dts.size == 101
    assert np.max(np.abs(np.diff(dts) - 0.1)) < 1e-12
    ps = np.unique(grid[:, 3])
    assert ps.size == 51
    assert np.max(np.abs(np.diff(ps) - 0.004)) < 1e-12


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        experiment.GridSpec(dt_step=0.0)
    with pytest.raises(ValueError):
        experiment.GridSpec(dt_step=0.3)  # does not divide [0, 10]


def test_sample_indices_deterministic_and_distinct():
    a = experiment.sample_indices(1000, 100, seed=5)
    b = experiment.sample_indices(1000, 100, seed=5)
    c = experiment.sample_indices(1000, 100, seed=6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.unique(a).size == 100


def test_sample_indices_respects_exclusion():
    first = experiment.sample_indices(500, 200, seed=1)
    second = experiment.sample_indices(500, 200, seed=2, exclude=first)
    assert np.intersect1d(first, second).size == 0


def test_sample_indices_overflow():
    with pytest.raises(ValueError):
        experiment.sample_indices(10, 11, seed=0)
    with pytest.raises(ValueError):
        experiment.sample_indices(10, 6, seed=0,
                                  exclude=np.arange(5))


def test_sample_collocation_columns(grid):
    pts = experiment.sample_collocation(grid, 50, seed=3)
    assert len(pts) == 50
    assert np.all(pts.x0[:, 1] == 0.1)
    assert pts.dt.min() >= 0.0 and pts.dt.max() <= 10.0
    assert pts.u.min() >= 0.0 and pts.u.max() <= 0.2


def test_grid_normalization_maps_box_to_unit(grid):
    shift, scale = experiment.grid_normalization(grid)
    assert shift == pytest.approx([5.0, 0.0, 0.1, 0.1])
    assert scale == pytest.approx([5.0, np.pi / 2, 1.0, 0.1])
    z = (grid - shift) / scale
    assert z.min() >= -1.0 - 1e-12 and z.max() <= 1.0 + 1e-12
    assert np.all(z[:, 2] == 0.0)  # constant omega0 column centred


def test_percentiles_linear_interpolation():
    data = np.array([1.0, 2.0, 3.0, 4.0])
    assert experiment.percentiles(data, [100]) == pytest.approx([4.0])
    assert experiment.percentiles(data, [0]) == pytest.approx([1.0])
    assert experiment.percentiles(data, [50]) == pytest.approx([2.5])
    # 10th percentile of 4 points: 1 + 0.3 * (2 - 1)
    assert experiment.percentiles(data, [10]) == pytest.approx([1.3])
    with pytest.raises(ValueError):
        experiment.percentiles(np.array([]), [50])


def test_percentile_table_and_curve():
    stats = experiment.ErrorStats(np.arange(1.0, 101.0), np.zeros(100))
    table = stats.percentile_table((100, 50))
    assert table[100] == pytest.approx(100.0)
    assert table[50] == pytest.approx(50.5)
    ks, vals = stats.percentile_curve(11)
    assert ks[0] == 0 and ks[-1] == 100
    assert vals[0] == pytest.approx(1.0) and vals[-1] == pytest.approx(100.0)


def test_ensemble_stats_hand_computed():
    runs = [experiment.ErrorStats(np.array([0.0, 2.0]), np.zeros(2)),
            experiment.ErrorStats(np.array([0.0, 4.0]), np.zeros(2))]
    mean, sd = experiment.ensemble_stats(runs, ks=(100,))
    assert mean == pytest.approx([3.0])
    assert sd == pytest.approx([np.sqrt(2.0)])  # sample SD of {2, 4}
    with pytest.raises(ValueError):
        experiment.ensemble_stats(runs[:1], ks=(100,))


def test_prediction_error_zero_dt(grid):
    # structural exactness: any model has zero error at dt = 0
    system = smib_system()
    mlp = nn.glorot_init([4, 10, 8], 0)
    model = pinn.RkPinnModel(mlp, tableau.gauss_legendre(4), 2)
    rng = np.random.default_rng(0)
    n = 100
    test = pinn.CollocationSet(
        np.zeros(n),
        np.column_stack([rng.uniform(-1.5, 1.5, n), np.full(n, 0.1)]),
        rng.uniform(0, 0.2, n))
    stats = experiment.prediction_error(model, system, test)
    assert np.all(stats.e_delta == 0.0)
    assert np.all(stats.e_omega == 0.0)


def test_prediction_error_against_direct_reference(grid):
    from rkpinn.solver import reference_solution
    system = smib_system()
    mlp = nn.glorot_init([4, 10, 8], 1)
    model = pinn.RkPinnModel(mlp, tableau.gauss_legendre(4), 2)
    test = experiment.sample_collocation(grid, 20, seed=8)
    stats = experiment.prediction_error(model, system, test)
    pred = pinn.evaluate(model, test.dt, test.x0, test.u[:, 0])
    for i in range(5):
        ref = reference_solution(system, test.x0[i], test.u[i, 0], [test.dt[i]])[0]
        assert stats.e_delta[i] == pytest.approx((ref[0] - pred[i, 0]) ** 2,
                                                 rel=1e-6, abs=1e-12)


def test_timing_benchmark_small():
    system = smib_system()
    mlp = nn.glorot_init([4, 10, 8], 0)
    model = pinn.RkPinnModel(mlp, tableau.gauss_legendre(4), 2)
    rows = experiment.timing_benchmark(model, system, methods=("pinn", "irk4"),
                                       dt_list=(0.5, 1.0), repeats=10)
    assert len(rows) == 4
    for r in rows:
        assert r.converged
        assert r.seconds_per_point > 0
    with pytest.raises(ValueError):
        experiment.timing_benchmark(model, system, repeats=5)


def test_csv_writers_roundtrip(tmp_path):
    test_set = pinn.CollocationSet(np.array([0.5, 1.0]),
                                   np.array([[0.1, 0.1], [0.2, 0.1]]),
                                   np.array([0.05, 0.1]))
    stats = experiment.ErrorStats(np.array([1e-3, 2e-3]), np.array([1e-4, 2e-4]))
    epath = tmp_path / "errors.csv"
    experiment.write_errors_csv(epath, test_set, stats)
    with open(epath) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["dt"] for r in rows] == ["0.5", "1.0"]
    assert float(rows[1]["e_delta"]) == 2e-3

    ppath = tmp_path / "pct.csv"
    experiment.write_percentiles_csv(ppath, [(4, 1000, 100, 0.1, 0.05)])
    with open(ppath) as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0] == {"s": "4", "N": "1000", "k": "100",
                       "mean": "0.1", "sd": "0.05"}

    tpath = tmp_path / "timing.csv"
    experiment.write_timing_csv(tpath, [experiment.TimingRow("pinn", 1.0, 2e-5, True)])
    with open(tpath) as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["method"] == "pinn"
    assert rows[0]["converged"] == "true"


def test_training_csv_layout(tmp_path):
    report = pinn.TrainingReport(
        best_epoch=0, best_validation_loss=1.0,
        training_loss_history=np.array([3.0, 2.0]),
        stage_loss_history=np.array([2.0, 1.5]),
        dt_loss_history=np.array([1.0, 0.5]),
        validation_loss_history=[(0, 2.5)],
        stopped_early=False, diverged=False, wall_time=0.1)
    path = tmp_path / "log.csv"
    experiment.write_training_csv(path, report)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0].keys()) == ["epoch", "lr", "train_loss", "val_loss",
                                    "stage_loss", "dt_loss"]
    assert float(rows[0]["lr"]) == pytest.approx(0.05)
    assert rows[0]["val_loss"] == "2.5"
    assert rows[1]["val_loss"] == ""
    assert float(rows[1]["dt_loss"]) == 0.5


def test_run_single_smoke(grid):
    system = smib_system()
    cfg = pinn.TrainingConfig(epochs=5, log_every=5, validation_points=20)
    result = experiment.run_single(system, grid, 2, 30, seed=0, training=cfg,
                                   hidden=(10,), n_validation=20, n_test=15)
    assert result.stages == 2
    assert result.errors.e_delta.shape == (15,)
    assert len(result.report.training_loss_history) == 5
    shift, scale = experiment.grid_normalization(grid)
    assert np.array_equal(result.model.input_shift, shift)
    assert np.array_equal(result.model.input_scale, scale)
    raw = experiment.run_single(system, grid, 2, 30, seed=0, training=cfg,
                                hidden=(10,), n_validation=20, n_test=15,
                                normalize=False)
    assert raw.model.input_shift is None and raw.model.input_scale is None
