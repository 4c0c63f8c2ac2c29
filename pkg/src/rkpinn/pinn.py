"""RK-PINN: a network that emits implicit RK stage vectors, trained on physics residuals.

The network maps (dt, x0, u) to the s stage vectors of a Butcher tableau.
Training minimizes the squared stage-equation residuals plus, in
variable-time-step mode, a consistency residual between the dt-sensitivity
of the predicted state and the ODE right-hand side. No simulated data is
used anywhere.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dynamics import OdeSystem
from .tableau import ButcherTableau


@dataclass
class RkPinnModel:
    mlp: nn.MlpParameters
    tableau: ButcherTableau
    state_dim: int
    control_dim: int = 1
    mode: str = "variable_dt"       # or "fixed_dt"
    fixed_dt: float | None = None
    # Optional affine input normalization: the network sees
    # (input - input_shift) / input_scale. None means identity.
    input_shift: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("variable_dt", "fixed_dt"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "fixed_dt" and self.fixed_dt is None:
            raise ValueError("fixed_dt mode requires a time-step value")
        if self.mlp.n_in != self.input_dim:
            raise ValueError(f"MLP input size {self.mlp.n_in} != expected {self.input_dim}")
        if self.mlp.n_out != self.tableau.stages * self.state_dim:
            raise ValueError(
                f"MLP output size {self.mlp.n_out} != stages*state_dim "
                f"{self.tableau.stages * self.state_dim}")
        if (self.input_shift is None) != (self.input_scale is None):
            raise ValueError("input_shift and input_scale must be set together")
        if self.input_scale is not None:
            shift = np.asarray(self.input_shift, dtype=float)
            scale = np.asarray(self.input_scale, dtype=float)
            if shift.shape != (self.input_dim,) or scale.shape != (self.input_dim,):
                raise ValueError("normalization vectors must match the input size")
            if (scale <= 0).any():
                raise ValueError("input_scale entries must be positive")
            object.__setattr__(self, "input_shift", shift)
            object.__setattr__(self, "input_scale", scale)

    @property
    def input_dim(self) -> int:
        extra = 1 if self.mode == "variable_dt" else 0
        return extra + self.state_dim + self.control_dim

    @property
    def dt_input_scale(self) -> float:
        """Jacobian factor d(network input 0)/d(dt) under the normalization."""
        if self.mode != "variable_dt":
            raise ValueError("dt input scale requires a variable-dt model")
        return 1.0 if self.input_scale is None else 1.0 / float(self.input_scale[0])


def _network_input(model: RkPinnModel, X: np.ndarray) -> np.ndarray:
    if model.input_scale is None:
        return X
    return (X - model.input_shift) / model.input_scale


@dataclass(frozen=True)
class LossWeights:
    """Per-stage/state weights on the stage residuals and per-state weights on the dt residual."""

    lambda_stage: np.ndarray  # (s, n), broadcastable
    lambda_dt: np.ndarray     # (n,)

    @classmethod
    def uniform(cls, stages: int, state_dim: int,
                stage: float = 1.0, dt: float = 1.0) -> "LossWeights":
        return cls(np.full((stages, state_dim), float(stage)),
                   np.full(state_dim, float(dt)))

    def __post_init__(self):
        object.__setattr__(self, "lambda_stage", np.asarray(self.lambda_stage, dtype=float))
        object.__setattr__(self, "lambda_dt", np.asarray(self.lambda_dt, dtype=float))
        if (self.lambda_stage < 0).any() or (self.lambda_dt < 0).any():
            raise ValueError("loss weights must be non-negative")
        if not ((self.lambda_stage > 0).any() or (self.lambda_dt > 0).any()):
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class CollocationSet:
    """Sampled inputs (dt, x0, u); carries no target values."""

    dt: np.ndarray   # (N,)
    x0: np.ndarray   # (N, n)
    u: np.ndarray    # (N, m)

    def __post_init__(self):
        dt = np.atleast_1d(np.asarray(self.dt, dtype=float))
        x0 = np.atleast_2d(np.asarray(self.x0, dtype=float))
        u = np.asarray(self.u, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "u", u)
        if dt.size == 0:
            raise ValueError("collocation set must be non-empty")
        if not (len(dt) == len(x0) == len(u)):
            raise ValueError("dt, x0, u must have equal lengths")

    def __len__(self) -> int:
        return self.dt.size


@dataclass
class TrainingConfig:
    epochs: int = 100_000
    validation_points: int = 1000
    early_stop_patience: int = 5000
    seed: int = 0
    loss_weights: LossWeights | None = None
    log_every: int = 100
    # Compresses the epoch-indexed learning-rate decay for runs shorter than
    # the nominal 100k epochs: the rate at epoch e is lr_schedule(scale * e).
    lr_epoch_scale: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.lr_epoch_scale <= 0:
            raise ValueError("lr_epoch_scale must be positive")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be at least 1")
        if self.log_every < 1:
            raise ValueError("log_every must be at least 1")


@dataclass
class TrainingReport:
    best_epoch: int
    best_validation_loss: float
    training_loss_history: np.ndarray            # loss before each epoch's step
    stage_loss_history: np.ndarray
    dt_loss_history: np.ndarray
    validation_loss_history: list                # (epoch, loss) pairs
    stopped_early: bool
    diverged: bool
    wall_time: float


def assemble_input(model: RkPinnModel, dt, x0, u) -> np.ndarray:
    """Network input: [dt, x0, u] in variable mode, [x0, u] in fixed mode."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if model.mode == "fixed_dt":
        if dt is not None:
            raise ValueError("dt must not be supplied to a fixed-dt model input")
        return np.concatenate([x0, u])
    return np.concatenate([[float(dt)], x0, u])


def assemble_inputs(model: RkPinnModel, points: CollocationSet) -> np.ndarray:
    """Batched input assembly, one row per collocation point."""
    if model.mode == "fixed_dt":
        return np.hstack([points.x0, points.u])
    return np.hstack([points.dt[:, None], points.x0, points.u])


def _point_dts(model: RkPinnModel, points: CollocationSet) -> np.ndarray:
    if model.mode == "fixed_dt":
        return np.full(len(points), model.fixed_dt)
    return points.dt


def predict_stages(model: RkPinnModel, inputs) -> np.ndarray:
    """MLP output reshaped stage-major: (..., s, n)."""
    y = nn.forward(model.mlp, _network_input(model, np.asarray(inputs, dtype=float)))
    return y.reshape(y.shape[:-1] + (model.tableau.stages, model.state_dim))


def predict_state(model: RkPinnModel, dt, x0, stages) -> np.ndarray:
    """x1 = x0 + dt * sum_k beta_k h^k; exactly x0 at dt = 0."""
    stages = np.asarray(stages, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    dt = np.asarray(dt, dtype=float)
    weighted = np.einsum('k,...ki->...i', model.tableau.beta, stages)
    return x0 + dt[..., None] * weighted


def stage_residuals(model: RkPinnModel, system: OdeSystem, dt, x0, u, stages) -> np.ndarray:
    """eps^k = h^k - f(t0 + gamma_k dt, x0 + dt sum_l alpha_kl h^l; u), per stage."""
    stages = np.asarray(stages, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    dt = np.asarray(dt, dtype=float)
    u = np.asarray(u, dtype=float)
    tb = model.tableau
    coupled = np.einsum('kl,...li->...ki', tb.alpha, stages)
    stage_states = x0[..., None, :] + dt[..., None, None] * coupled
    stage_times = dt[..., None] * tb.gamma
    f = system.rhs(stage_times, stage_states, u[..., None] if u.ndim == dt.ndim else u)
    return stages - f


def _stage_values(model, system, points: CollocationSet, with_tangent: bool):
    """Forward pass over a batch: network inputs, stages, and (optionally) their dt-tangents.

    The returned tangents are with respect to the raw dt, i.e. the chain-rule
    factor of any input normalization is already applied.
    """
    Z = _network_input(model, assemble_inputs(model, points))
    s, n = model.tableau.stages, model.state_dim
    if with_tangent:
        Y, Ydot = nn.forward_tangent(model.mlp, Z, 0)
        Ydot = Ydot * model.dt_input_scale
        return Z, Y.reshape(-1, s, n), Ydot.reshape(-1, s, n)
    Y = nn.forward(model.mlp, Z)
    return Z, Y.reshape(-1, s, n), None


def dt_residual(model: RkPinnModel, system: OdeSystem, dt, x0, u) -> np.ndarray:
    """xi = d(x1)/d(dt) - f(t0 + dt, x1; u); variable-dt mode only."""
    if model.mode != "variable_dt":
        raise ValueError("dt_residual requires a variable-dt model")
    points = CollocationSet(np.atleast_1d(dt), np.atleast_2d(x0),
                            np.atleast_1d(np.asarray(u, dtype=float)))
    single = np.asarray(dt).ndim == 0
    _, H, Hdot = _stage_values(model, system, points, with_tangent=True)
    beta = model.tableau.beta
    weighted = np.einsum('k,Nki->Ni', beta, H)
    x1 = points.x0 + points.dt[:, None] * weighted
    dx1_ddt = weighted + points.dt[:, None] * np.einsum('k,Nki->Ni', beta, Hdot)
    xi = dx1_ddt - system.rhs(points.dt, x1, points.u[:, 0])
    return xi[0] if single else xi


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    stage_loss: float
    dt_loss: float


def _loss_terms(model, system, points, weights, need_grad):
    """Shared loss/gradient assembly; returns (breakdown, grads or None)."""
    tb = model.tableau
    s, n = tb.stages, model.state_dim
    dts = _point_dts(model, points)
    use_dt_term = model.mode == "variable_dt" and np.any(weights.lambda_dt > 0)

    X, H, Hdot = _stage_values(model, system, points, with_tangent=use_dt_term)
    x0, u = points.x0, points.u[:, 0]

    coupled = np.einsum('kl,Nli->Nki', tb.alpha, H)
    stage_states = x0[:, None, :] + dts[:, None, None] * coupled
    stage_times = dts[:, None] * tb.gamma
    eps = H - system.rhs(stage_times, stage_states, u[:, None])
    stage_loss = float(np.sum(weights.lambda_stage * np.sum(eps ** 2, axis=0)))

    if use_dt_term:
        weighted = np.einsum('k,Nki->Ni', tb.beta, H)
        x1 = x0 + dts[:, None] * weighted
        dx1_ddt = weighted + dts[:, None] * np.einsum('k,Nki->Ni', tb.beta, Hdot)
        xi = dx1_ddt - system.rhs(dts, x1, u)
        dt_loss = float(np.sum(weights.lambda_dt * np.sum(xi ** 2, axis=0)))
    else:
        dt_loss = 0.0
    breakdown = LossBreakdown(stage_loss + dt_loss, stage_loss, dt_loss)
    if not need_grad:
        return breakdown, None

    # Cotangent on the stages through the stage residuals:
    #   dL/dH^m = 2 lam eps^m - dt sum_k alpha_km J_f(X^k)^T (2 lam eps^k)
    a_cot = 2.0 * weights.lambda_stage * eps
    jac_stage = system.jacobian(stage_times, stage_states, u[:, None])
    gH = a_cot - dts[:, None, None] * np.einsum(
        'km,Nkji,Nkj->Nmi', tb.alpha, jac_stage, a_cot)

    if use_dt_term:
        # Through xi: stages enter via both d(x1)/d(dt) and f(x1);
        # the stage tangents enter linearly with weight dt * beta.
        c = 2.0 * weights.lambda_dt * xi
        jac_x1 = system.jacobian(dts, x1, u)
        pull = c - dts[:, None] * np.einsum('Nji,Nj->Ni', jac_x1, c)
        gH = gH + tb.beta[None, :, None] * pull[:, None, :]
        gHdot = (dts[:, None] * tb.beta[None, :])[:, :, None] * c[:, None, :]
        grads = nn.tangent_backward(
            model.mlp, X, 0, gH.reshape(-1, s * n),
            gHdot.reshape(-1, s * n) * model.dt_input_scale)
    else:
        grads, _ = nn.backward(model.mlp, X, gH.reshape(-1, s * n))
    return breakdown, grads


def total_loss(model: RkPinnModel, system: OdeSystem, collocation: CollocationSet,
               weights: LossWeights) -> LossBreakdown:
    """Weighted sum (not mean) of squared stage and dt residuals over all points."""
    breakdown, _ = _loss_terms(model, system, collocation, weights, need_grad=False)
    return breakdown


def loss_gradient(model: RkPinnModel, system: OdeSystem, collocation: CollocationSet,
                  weights: LossWeights):
    """Exact gradient of total_loss w.r.t. every MLP weight and bias.

    Returns ((weight_grads, bias_grads), LossBreakdown). The dt-residual
    contribution differentiates the forward-mode dt-derivative with respect
    to the parameters (forward-over-reverse); no finite differences anywhere.
    """
    breakdown, grads = _loss_terms(model, system, collocation, weights, need_grad=True)
    for g in (*grads[0], *grads[1]):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite loss gradient")
    return grads, breakdown


def evaluate(model: RkPinnModel, dt, x0, u) -> np.ndarray:
    """Predicted next state: single forward pass plus the beta-weighted stage sum."""
    dt_arr = np.asarray(dt, dtype=float)
    single = dt_arr.ndim == 0
    points = CollocationSet(np.atleast_1d(dt_arr), np.atleast_2d(x0),
                            np.atleast_1d(np.asarray(u, dtype=float)))
    X = assemble_inputs(model, points)
    stages = predict_stages(model, X)
    dts = _point_dts(model, points)
    x1 = predict_state(model, dts, points.x0, stages)
    return x1[0] if single else x1


def train(model: RkPinnModel, system: OdeSystem, collocation: CollocationSet,
          validation: CollocationSet, config: TrainingConfig):
    """Full-batch Adam with the decaying learning rate and validation-based early stopping.

    Returns (model with best-validation parameters, TrainingReport).
    """
    weights = config.loss_weights
    if weights is None:
        weights = LossWeights.uniform(model.tableau.stages, model.state_dim)
    start = time.perf_counter()
    params = model.mlp
    state = nn.AdamState.zeros_like(params)
    best_params = params
    best_loss = np.inf
    best_epoch = 0
    train_history = np.empty(config.epochs)
    stage_history = np.empty(config.epochs)
    dt_history = np.empty(config.epochs)
    val_history = []
    stopped_early = False
    diverged = False
    epochs_run = 0

    for epoch in range(config.epochs):
        work = RkPinnModel(params, model.tableau, model.state_dim,
                           model.control_dim, model.mode, model.fixed_dt,
                           model.input_shift, model.input_scale)
        try:
            grads, breakdown = loss_gradient(work, system, collocation, weights)
        except FloatingPointError:
            diverged = True
            break
        train_history[epoch] = breakdown.total
        stage_history[epoch] = breakdown.stage_loss
        dt_history[epoch] = breakdown.dt_loss
        if not np.isfinite(breakdown.total):
            diverged = True
            break
        if epoch % config.log_every == 0:
            val = total_loss(work, system, validation, weights).total
            val_history.append((epoch, val))
            if val < best_loss:
                best_loss = val
                best_params = params
                best_epoch = epoch
            elif epoch - best_epoch > config.early_stop_patience:
                stopped_early = True
                epochs_run = epoch + 1
                break
        params, state = nn.adam_step(
            params, grads, state, nn.lr_schedule(config.lr_epoch_scale * epoch))
        epochs_run = epoch + 1

    trained = RkPinnModel(best_params, model.tableau, model.state_dim,
                          model.control_dim, model.mode, model.fixed_dt,
                          model.input_shift, model.input_scale)
    report = TrainingReport(
        best_epoch=best_epoch,
        best_validation_loss=float(best_loss),
        training_loss_history=train_history[:epochs_run].copy(),
        stage_loss_history=stage_history[:epochs_run].copy(),
        dt_loss_history=dt_history[:epochs_run].copy(),
        validation_loss_history=val_history,
        stopped_early=stopped_early,
        diverged=diverged,
        wall_time=time.perf_counter() - start,
    )
    return trained, report


# --- model serialization ------------------------------------------------------

def save_model(path, model: RkPinnModel, config_hash: str = "",
               domain: dict | None = None) -> None:
    extra = {
        "tableau": {
            "scheme_name": model.tableau.scheme_name,
            "stages": model.tableau.stages,
            "alpha": model.tableau.alpha.tolist(),
            "beta": model.tableau.beta.tolist(),
            "gamma": model.tableau.gamma.tolist(),
        },
        "mode": model.mode,
        "fixed_dt": model.fixed_dt,
        "state_dim": model.state_dim,
        "control_dim": model.control_dim,
        "input_shift": None if model.input_shift is None else model.input_shift.tolist(),
        "input_scale": None if model.input_scale is None else model.input_scale.tolist(),
        "domain": domain or {},
    }
    nn.save_checkpoint(path, model.mlp, config_hash, extra)


def load_model(path) -> RkPinnModel:
    doc = nn.load_checkpoint_dict(path)
    params = nn.MlpParameters([np.array(w) for w in doc["weights"]],
                              [np.array(b) for b in doc["biases"]])
    tb = doc["tableau"]
    tableau = ButcherTableau(tb["stages"], np.array(tb["alpha"]), np.array(tb["beta"]),
                             np.array(tb["gamma"]), scheme_name=tb["scheme_name"])
    shift = doc.get("input_shift")
    scale = doc.get("input_scale")
    return RkPinnModel(params, tableau, doc["state_dim"], doc["control_dim"],
                       doc["mode"], doc["fixed_dt"],
                       None if shift is None else np.array(shift),
                       None if scale is None else np.array(scale))
