"""Butcher tableaus: Gauss-Legendre collocation schemes and a small classical catalog."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_GL_STAGES = 64


class TableauError(ValueError):
    pass


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients (alpha, beta, gamma) of an s-stage Runge-Kutta scheme.

    alpha is the s x s stage-coupling matrix, beta the length-s quadrature
    weights, gamma the abscissae in [0, 1]. A tableau is implicit iff alpha
    is not strictly lower-triangular.
    """

    stages: int
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    scheme_name: str = "custom"

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        s = self.stages
        if s < 1:
            raise TableauError(f"stage count must be positive, got {s}")
        if alpha.shape != (s, s) or beta.shape != (s,) or gamma.shape != (s,):
            raise TableauError(
                f"inconsistent coefficient shapes for s={s}: "
                f"alpha {alpha.shape}, beta {beta.shape}, gamma {gamma.shape}"
            )
        if not (np.isfinite(alpha).all() and np.isfinite(beta).all() and np.isfinite(gamma).all()):
            raise TableauError("non-finite tableau coefficients")
        if abs(beta.sum() - 1.0) > 1e-12:
            raise TableauError(f"beta does not sum to 1 (sum={beta.sum()!r})")
        if gamma.min() < -1e-12 or gamma.max() > 1 + 1e-12:
            raise TableauError("gamma abscissae outside [0, 1]")
        # Classical schemes (e.g. the RK4 tableau) repeat abscissae, so only
        # monotonicity is required here; Gauss-Legendre nodes are strictly
        # increasing by construction.
        if np.any(np.diff(gamma) < -1e-12):
            raise TableauError("gamma abscissae must be non-decreasing")

    @property
    def is_implicit(self) -> bool:
        return bool(np.any(np.abs(np.triu(self.alpha)) > 0.0))


def _shifted_legendre(s: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and derivative of the degree-s Legendre polynomial shifted to [0, 1]."""
    t = 2.0 * x - 1.0
    p_prev = np.ones_like(t)
    p = t.copy()
    if s == 0:
        return p_prev, np.zeros_like(t)
    for k in range(1, s):
        p_next = ((2 * k + 1) * t * p - k * p_prev) / (k + 1)
        p_prev, p = p, p_next
    # P_s'(t) from the standard relation; chain rule gives factor 2 for x.
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = s * (t * p - p_prev) / (t * t - 1.0)
    return p, 2.0 * dp


def legendre_roots(s: int, tol: float = 1e-14, max_iters: int = 100) -> np.ndarray:
    """Roots of the degree-s shifted Legendre polynomial on [0, 1].

    Newton iteration from Chebyshev-node initial guesses; deterministic.
    """
    k = np.arange(1, s + 1)
    x = 0.5 * (1.0 - np.cos((2 * k - 1) * np.pi / (2 * s)))
    for _ in range(max_iters):
        p, dp = _shifted_legendre(s, x)
        step = p / dp
        x = x - step
        if np.max(np.abs(step)) < tol:
            break
    else:
        p, _ = _shifted_legendre(s, x)
        raise TableauError(
            f"Legendre root finding did not converge for s={s}; "
            f"max residual {np.max(np.abs(p)):.3e}"
        )
    return np.sort(x)


def _legendre_table(max_degree: int, x: np.ndarray) -> np.ndarray:
    """Shifted Legendre values P~_j(x) for j = 0..max_degree, shape (max_degree+1, len(x))."""
    t = 2.0 * x - 1.0
    table = np.empty((max_degree + 1, len(x)))
    table[0] = 1.0
    if max_degree >= 1:
        table[1] = t
    for j in range(1, max_degree):
        table[j + 1] = ((2 * j + 1) * t * table[j] - j * table[j - 1]) / (j + 1)
    return table


def gauss_legendre(s: int) -> ButcherTableau:
    """s-stage Gauss-Legendre collocation tableau (classical order 2s)."""
    if not 1 <= s <= MAX_GL_STAGES:
        raise TableauError(f"stage count must be in [1, {MAX_GL_STAGES}], got {s}")
    gamma = legendre_roots(s)
    # Collocation conditions expressed in the shifted-Legendre basis:
    #   sum_l row_l * P~_j(gamma_l) = integral of P~_j over the target interval
    # for j = 0..s-1. A monomial Vandermonde solve loses all accuracy past
    # s ~ 20; this basis stays well-conditioned through s = 64.
    table = _legendre_table(s, gamma)
    mat = table[:s]
    rhs_beta = np.zeros(s)
    rhs_beta[0] = 1.0  # integral of P~_j over [0, 1] is delta_j0
    beta = np.linalg.solve(mat, rhs_beta)
    # integral of P~_j over [0, gamma_k] via (P_{j+1} - P_{j-1}) / (2(2j+1))
    rhs_alpha = np.empty((s, s))
    rhs_alpha[0] = gamma
    for j in range(1, s):
        rhs_alpha[j] = (table[j + 1] - table[j - 1]) / (2 * (2 * j + 1))
    alpha = np.linalg.solve(mat, rhs_alpha).T
    return ButcherTableau(s, alpha, beta, gamma, scheme_name=f"gauss-legendre-{s}")


_CLASSICAL = {
    "forward_euler": (
        [[0.0]],
        [1.0],
        [0.0],
    ),
    "backward_euler": (
        [[1.0]],
        [1.0],
        [1.0],
    ),
    "trapezoidal": (
        [[0.0, 0.0], [0.5, 0.5]],
        [0.5, 0.5],
        [0.0, 1.0],
    ),
    "rk4_classic": (
        [[0.0, 0.0, 0.0, 0.0],
         [0.5, 0.0, 0.0, 0.0],
         [0.0, 0.5, 0.0, 0.0],
         [0.0, 0.0, 1.0, 0.0]],
        [1 / 6, 1 / 3, 1 / 3, 1 / 6],
        [0.0, 0.5, 0.5, 1.0],
    ),
}


def classical(name: str) -> ButcherTableau:
    """Textbook tableau by name: forward_euler, backward_euler, trapezoidal, rk4_classic."""
    try:
        alpha, beta, gamma = _CLASSICAL[name]
    except KeyError:
        raise TableauError(
            f"unknown scheme {name!r}; known: {sorted(_CLASSICAL)}"
        ) from None
    return ButcherTableau(len(beta), np.array(alpha), np.array(beta), np.array(gamma),
                          scheme_name=name)


def verify_order_conditions(t: ButcherTableau, max_order: int) -> dict[int, float]:
    """Max absolute residual of the B(q) and C(q) simplifying conditions per order q.

    B(q): sum_k beta_k gamma_k^(q-1) = 1/q
    C(q): sum_l alpha_kl gamma_l^(q-1) = gamma_k^q / q for every stage k
    """
    if max_order > 2 * t.stages:
        raise TableauError(
            f"max_order {max_order} exceeds attainable order {2 * t.stages}"
        )
    report = {}
    for q in range(1, max_order + 1):
        b_res = abs(np.dot(t.beta, t.gamma ** (q - 1)) - 1.0 / q)
        c_res = np.max(np.abs(t.alpha @ (t.gamma ** (q - 1)) - t.gamma ** q / q))
        # C(q) only needs to hold up to the stage count for a collocation
        # scheme of order 2s; beyond q = s it cannot and is not required.
        report[q] = max(b_res, c_res) if q <= t.stages else b_res
    return report
