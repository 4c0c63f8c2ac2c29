"""Parameterized ODE interface and the single-machine infinite-bus swing equation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class SmibParams:
    """Machine and network parameters of the SMIB system (per-unit)."""

    m: float = 0.4    # inertia constant
    d: float = 0.15   # damping coefficient
    b12: float = 0.2  # line susceptance
    v1: float = 1.0
    v2: float = 1.0

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError(f"inertia m must be positive, got {self.m}")
        if self.d < 0:
            raise ValueError(f"damping d must be non-negative, got {self.d}")
        if self.b12 <= 0 or self.v1 <= 0 or self.v2 <= 0:
            raise ValueError("b12, v1, v2 must be positive")


@dataclass(frozen=True)
class InputDomain:
    """Training-input box: time step, power injection, initial rotor angle; fixed omega0."""

    dt_range: tuple[float, float] = (0.0, 10.0)
    p_range: tuple[float, float] = (0.0, 0.2)
    delta0_range: tuple[float, float] = (-np.pi / 2, np.pi / 2)
    omega0: float = 0.1

    def __post_init__(self):
        for name, (lo, hi) in (("dt_range", self.dt_range),
                               ("p_range", self.p_range),
                               ("delta0_range", self.delta0_range)):
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")

    def contains(self, dt, delta0, p, atol: float = 1e-9) -> np.ndarray:
        dt, delta0, p = np.asarray(dt), np.asarray(delta0), np.asarray(p)
        return ((dt >= self.dt_range[0] - atol) & (dt <= self.dt_range[1] + atol)
                & (p >= self.p_range[0] - atol) & (p <= self.p_range[1] + atol)
                & (delta0 >= self.delta0_range[0] - atol)
                & (delta0 <= self.delta0_range[1] + atol))


@dataclass(frozen=True)
class OdeSystem:
    """Autonomous ODE dx/dt = f(t, x; u) with analytic state Jacobian.

    rhs and jacobian are vectorized: x has shape (..., n), u shape (...) or
    scalar; rhs returns (..., n) and jacobian (..., n, n).
    """

    name: str
    state_dim: int
    rhs: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    jacobian: Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def default_params() -> SmibParams:
    """Parameter values of the case study: m=0.4, d=0.15, B12=0.2, V1=V2=1."""
    return SmibParams()


def smib_rhs(t, x, u, params: SmibParams) -> np.ndarray:
    """Swing equation right-hand side [omega, (P - V1 V2 B12 sin(delta) - d omega) / m].

    Autonomous: t is accepted for interface uniformity and ignored.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(u, dtype=float)
    delta = x[..., 0]
    omega = x[..., 1]
    accel = (p - params.v1 * params.v2 * params.b12 * np.sin(delta)
             - params.d * omega) / params.m
    return np.stack([omega, accel], axis=-1)


def smib_jacobian(x, params: SmibParams) -> np.ndarray:
    """State Jacobian [[0, 1], [-(V1 V2 B12 / m) cos(delta), -d/m]]."""
    x = np.asarray(x, dtype=float)
    delta = x[..., 0]
    jac = np.zeros(x.shape[:-1] + (2, 2))
    jac[..., 0, 1] = 1.0
    jac[..., 1, 0] = -(params.v1 * params.v2 * params.b12 / params.m) * np.cos(delta)
    jac[..., 1, 1] = -params.d / params.m
    return jac


def smib_system(params: SmibParams | None = None) -> OdeSystem:
    params = params if params is not None else default_params()
    return OdeSystem(
        name="smib",
        state_dim=2,
        rhs=lambda t, x, u: smib_rhs(t, x, u, params),
        jacobian=lambda t, x, u: smib_jacobian(x, params),
    )


def smib_energy(x, params: SmibParams) -> np.ndarray:
    """Energy function 0.5 m omega^2 - V1 V2 B12 cos(delta); conserved when d = P = 0."""
    x = np.asarray(x, dtype=float)
    return (0.5 * params.m * x[..., 1] ** 2
            - params.v1 * params.v2 * params.b12 * np.cos(x[..., 0]))
