"""Reference integrators: Newton-based fully-implicit RK and adaptive Dormand-Prince RK45."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import OdeSystem
from .tableau import ButcherTableau


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class IrkStepConfig:
    newton_tol: float = 1e-13
    max_newton_iters: int = 50
    initial_stage_guess: str = "rhs_at_x0"  # or "zero"

    def __post_init__(self):
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")
        if self.initial_stage_guess not in ("zero", "rhs_at_x0"):
            raise ValueError(f"unknown stage guess {self.initial_stage_guess!r}")


@dataclass(frozen=True)
class StepOutcome:
    next_state: np.ndarray
    converged: bool
    newton_iterations: int
    final_residual: float
    stages: np.ndarray  # (s, n) stage vectors of the final iterate


def _stage_residual(system, tableau, t0, x0, u, dt, stages):
    stage_states = x0[None, :] + dt * (tableau.alpha @ stages)
    stage_times = t0 + tableau.gamma * dt
    f = np.stack([system.rhs(stage_times[k], stage_states[k], u)
                  for k in range(tableau.stages)])
    return stages - f, stage_states, stage_times


def irk_step(system: OdeSystem, tableau: ButcherTableau, t0: float, x0, u,
             dt: float, cfg: IrkStepConfig = IrkStepConfig()) -> StepOutcome:
    """One implicit RK step: solve the s*n stage system by full Newton iteration."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x0 = np.asarray(x0, dtype=float)
    s, n = tableau.stages, x0.size

    if cfg.initial_stage_guess == "zero":
        stages = np.zeros((s, n))
    else:
        stages = np.tile(system.rhs(t0, x0, u), (s, 1))

    eye_block = np.eye(n)
    residual, stage_states, stage_times = _stage_residual(
        system, tableau, t0, x0, u, dt, stages)
    res_norm = np.max(np.abs(residual))
    iters = 0
    converged = res_norm <= cfg.newton_tol
    while not converged and iters < cfg.max_newton_iters:
        # Block Jacobian of the residual: (k,l) block = delta_kl I - dt alpha_kl J_f(X^k)
        jac_f = np.stack([system.jacobian(stage_times[k], stage_states[k], u)
                          for k in range(s)])
        big = (np.einsum('kl,ij->kilj', np.eye(s), eye_block)
               - dt * np.einsum('kl,kij->kilj', tableau.alpha, jac_f))
        big = big.reshape(s * n, s * n)
        try:
            delta = np.linalg.solve(big, residual.reshape(-1))
        except np.linalg.LinAlgError:
            return StepOutcome(x0 + dt * (tableau.beta @ stages), False,
                               iters, float(res_norm), stages)
        stages = stages - delta.reshape(s, n)
        if not np.all(np.isfinite(stages)):
            return StepOutcome(np.full_like(x0, np.nan), False,
                               iters + 1, float('nan'), stages)
        residual, stage_states, stage_times = _stage_residual(
            system, tableau, t0, x0, u, dt, stages)
        res_norm = np.max(np.abs(residual))
        iters += 1
        converged = res_norm <= cfg.newton_tol

    next_state = x0 + dt * (tableau.beta @ stages)
    return StepOutcome(next_state, bool(converged), iters, float(res_norm), stages)


@dataclass(frozen=True)
class TrajectoryResult:
    times: np.ndarray
    states: np.ndarray  # (n_recorded, n), states[0] = x0
    completed: bool
    failure_index: int | None = None  # first non-converged step, if any


def irk_trajectory(system: OdeSystem, tableau: ButcherTableau, t0: float, x0, u,
                   dt: float, n_steps: int,
                   cfg: IrkStepConfig = IrkStepConfig()) -> TrajectoryResult:
    """Repeated irk_step; aborts at the first non-converged step."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be at least 1, got {n_steps}")
    x = np.asarray(x0, dtype=float)
    times = [t0]
    states = [x]
    for i in range(n_steps):
        out = irk_step(system, tableau, t0 + i * dt, x, u, dt, cfg)
        if not out.converged:
            return TrajectoryResult(np.array(times), np.stack(states), False, i)
        x = out.next_state
        times.append(t0 + (i + 1) * dt)
        states.append(x)
    return TrajectoryResult(np.array(times), np.stack(states), True, None)


# Dormand-Prince 5(4) coefficients
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
])
_DP_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_DP_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass(frozen=True)
class Rk45Result:
    times: np.ndarray
    states: np.ndarray
    endpoint: np.ndarray
    n_steps: int
    n_rejected: int
    eval_states: np.ndarray | None = None  # states at requested t_eval points


def rk45_solve(system: OdeSystem, t0: float, x0, u, t_end: float,
               rel_tol: float = 1e-8, abs_tol: float = 1e-8,
               t_eval=None, max_steps: int = 1_000_000) -> Rk45Result:
    """Adaptive Dormand-Prince 5(4) with PI step-size control.

    If t_eval is given, the step size is clipped so every evaluation time is
    hit exactly; the matching states are returned in eval_states.
    """
    if t_end <= t0:
        raise ValueError("t_end must exceed t0")
    if rel_tol <= 0 or abs_tol <= 0:
        raise ValueError("tolerances must be positive")
    x = np.asarray(x0, dtype=float)
    stops = None
    if t_eval is not None:
        stops = np.asarray(t_eval, dtype=float)
        if stops.size and (stops.min() < t0 - 1e-12 or stops.max() > t_end + 1e-12):
            raise ValueError("t_eval outside integration interval")

    t = t0
    times = [t]
    states = [x]
    f0 = system.rhs(t, x, u)
    # crude initial step from the rhs scale
    scale = abs_tol + rel_tol * np.abs(x)
    d0 = np.sqrt(np.mean((x / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h = min(t_end - t0, 0.01 * d0 / d1 if d1 > 1e-10 else 1e-3)
    h = max(h, 1e-8)

    err_prev = 1.0
    n_acc = n_rej = 0
    stop_idx = 0
    if stops is not None:
        order = np.argsort(stops)
        sorted_stops = stops[order]
        eval_states = np.empty((stops.size, x.size))
        # t_eval entries equal to t0 resolve to the initial state exactly
        while stop_idx < sorted_stops.size and sorted_stops[stop_idx] <= t0:
            eval_states[order[stop_idx]] = x
            stop_idx += 1
    else:
        eval_states = None
        sorted_stops = order = None

    k = np.empty((7, x.size))
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        if n_acc + n_rej >= max_steps:
            raise SolverError(f"rk45 exceeded {max_steps} steps at t={t}")
        h = min(h, t_end - t)
        hit_stop = False
        if sorted_stops is not None and stop_idx < sorted_stops.size:
            gap = sorted_stops[stop_idx] - t
            if gap <= h * (1 + 1e-12):
                h = gap
                hit_stop = True
        if h < 1e-14 * max(1.0, abs(t)):
            if hit_stop:  # degenerate duplicate stop
                eval_states[order[stop_idx]] = x
                stop_idx += 1
                continue
            raise SolverError(f"step size underflow at t={t}")

        k[0] = f0
        for i in range(1, 6):
            k[i] = system.rhs(t + _DP_C[i] * h, x + h * (_DP_A[i, :i] @ k[:i]), u)
        x5 = x + h * (_DP_B5[:6] @ k[:6])
        k[6] = system.rhs(t + h, x5, u)
        err_vec = h * ((_DP_B5 - _DP_B4) @ k)
        scale = abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(x5))
        err = np.sqrt(np.mean((err_vec / scale) ** 2))

        if err <= 1.0 or h <= 1e-13:
            t = t + h
            x = x5
            f0 = k[6]  # FSAL
            times.append(t)
            states.append(x)
            n_acc += 1
            if hit_stop:
                eval_states[order[stop_idx]] = x
                stop_idx += 1
                while (stop_idx < sorted_stops.size
                       and sorted_stops[stop_idx] <= t + 1e-14 * max(1.0, abs(t))):
                    eval_states[order[stop_idx]] = x
                    stop_idx += 1
            err_use = max(err, 1e-10)
            factor = 0.9 * err_use ** -0.14 * err_prev ** 0.08
            err_prev = err_use
        else:
            n_rej += 1
            factor = max(0.9 * err ** -0.2, 0.2)
        h = h * min(max(factor, 0.2), 5.0)

    return Rk45Result(np.array(times), np.stack(states), x, n_acc, n_rej, eval_states)


def reference_solution(system: OdeSystem, x0, u, dt_query, tol: float = 1e-12) -> np.ndarray:
    """High-accuracy states at the query times (ground truth for prediction error)."""
    q = np.atleast_1d(np.asarray(dt_query, dtype=float))
    if q.size == 0:
        return np.empty((0, np.asarray(x0).size))
    if q.min() < 0 or q.max() > 10.0 + 1e-9:
        raise ValueError("query times must lie within [0, 10] s")
    x0 = np.asarray(x0, dtype=float)
    t_max = q.max()
    if t_max <= 0:
        return np.tile(x0, (q.size, 1))
    res = rk45_solve(system, 0.0, x0, u, t_max, rel_tol=tol, abs_tol=tol, t_eval=q)
    return res.eval_states
