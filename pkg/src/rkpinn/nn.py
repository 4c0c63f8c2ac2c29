"""Dense tanh feed-forward network with hand-rolled automatic differentiation.

Provides reverse-mode parameter gradients, forward-mode directional input
derivatives, the combined forward-over-reverse pass needed to differentiate
the directional derivative with respect to the parameters, Glorot
initialization, Adam, and the decaying learning-rate schedule. Everything is
64-bit and vectorized across a leading batch axis.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MlpParameters:
    """Weight matrices (n_out x n_in per layer) and bias vectors of the MLP."""

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty, same length")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input size does not match previous layer")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "MlpParameters":
        return MlpParameters([w.copy() for w in self.weights],
                             [b.copy() for b in self.biases])


def glorot_init(layer_sizes, seed: int) -> MlpParameters:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    sizes = list(layer_sizes)
    if len(sizes) < 3:
        raise ValueError("need at least one hidden layer (3 entries in layer_sizes)")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-lim, lim, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MlpParameters(weights, biases)


def _as_batch(x, n_in):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[-1] != n_in:
        raise ValueError(f"input width {x.shape[-1]} != network input size {n_in}")
    return x, single


def _forward_cache(params: MlpParameters, x: np.ndarray) -> list:
    """Activations per layer: [input, hidden outputs..., final output]."""
    acts = [x]
    a = x
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = z if i == n_layers - 1 else np.tanh(z)
        acts.append(a)
    return acts


def forward(params: MlpParameters, x) -> np.ndarray:
    """tanh hidden layers, linear output layer."""
    xb, single = _as_batch(x, params.n_in)
    y = _forward_cache(params, xb)[-1]
    return y[0] if single else y


def backward(params: MlpParameters, x, cotangent):
    """Exact reverse-mode gradients of <cotangent, forward(params, x)>.

    Returns ((weight_grads, bias_grads), input_grad). Parameter gradients are
    summed over the batch axis; input_grad matches the shape of x.
    """
    xb, single = _as_batch(x, params.n_in)
    cot = np.asarray(cotangent, dtype=float)
    if single:
        cot = cot[None, :]
    if cot.shape != (xb.shape[0], params.n_out):
        raise ValueError(f"cotangent shape {cot.shape} does not match "
                         f"batch x output size ({xb.shape[0]}, {params.n_out})")
    acts = _forward_cache(params, xb)
    n_layers = len(params.weights)
    w_grads = [None] * n_layers
    b_grads = [None] * n_layers
    g = cot
    for i in range(n_layers - 1, -1, -1):
        if i != n_layers - 1:
            g = g * (1.0 - acts[i + 1] ** 2)  # through tanh
        w_grads[i] = g.T @ acts[i]
        b_grads[i] = g.sum(axis=0)
        g = g @ params.weights[i]
    input_grad = g[0] if single else g
    return (w_grads, b_grads), input_grad


def _forward_tangent_cache(params: MlpParameters, x: np.ndarray, direction: int):
    """Primal and tangent activations for a unit tangent on input coordinate `direction`."""
    acts = [x]
    tangents = [np.zeros_like(x)]
    tangents[0][..., direction] = 1.0
    a, adot = x, tangents[0]
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        zdot = adot @ w.T
        if i == n_layers - 1:
            a, adot = z, zdot
        else:
            a = np.tanh(z)
            adot = (1.0 - a ** 2) * zdot
        acts.append(a)
        tangents.append(adot)
    return acts, tangents


def forward_tangent(params: MlpParameters, x, direction: int):
    """Forward-mode pass: (output, d output / d input[direction]); derivative exact."""
    if not 0 <= direction < params.n_in:
        raise ValueError(f"direction {direction} out of range for {params.n_in} inputs")
    xb, single = _as_batch(x, params.n_in)
    acts, tangents = _forward_tangent_cache(params, xb, direction)
    y, ydot = acts[-1], tangents[-1]
    return (y[0], ydot[0]) if single else (y, ydot)


def tangent_backward(params: MlpParameters, x, direction: int, cot_primal, cot_tangent):
    """Parameter gradients of <cot_primal, y> + <cot_tangent, dy/dx_direction>.

    Reverse pass over the forward-mode computation (forward-over-reverse);
    this differentiates the directional derivative itself with respect to
    every weight and bias. Gradients are summed over the batch axis.
    """
    xb, single = _as_batch(x, params.n_in)
    gy = np.asarray(cot_primal, dtype=float)
    gydot = np.asarray(cot_tangent, dtype=float)
    if single:
        gy, gydot = gy[None, :], gydot[None, :]
    acts, tangents = _forward_tangent_cache(params, xb, direction)
    n_layers = len(params.weights)
    w_grads = [None] * n_layers
    b_grads = [None] * n_layers
    g, gdot = gy, gydot
    for i in range(n_layers - 1, -1, -1):
        if i != n_layers - 1:
            a, adot = acts[i + 1], tangents[i + 1]
            u = 1.0 - a ** 2
            # adot = u * zdot, so the cotangent on the pre-activation is
            # (g - 2 a zdot gdot) u = g u - 2 a adot gdot, with no division.
            g = g * u - 2.0 * a * adot * gdot
            gdot = gdot * u
        w_grads[i] = g.T @ acts[i] + gdot.T @ tangents[i]
        b_grads[i] = g.sum(axis=0)
        g = g @ params.weights[i]
        gdot = gdot @ params.weights[i]
    return w_grads, b_grads


@dataclass
class AdamState:
    m_weights: list
    v_weights: list
    m_biases: list
    v_biases: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: MlpParameters, **kwargs) -> "AdamState":
        return cls([np.zeros_like(w) for w in params.weights],
                   [np.zeros_like(w) for w in params.weights],
                   [np.zeros_like(b) for b in params.biases],
                   [np.zeros_like(b) for b in params.biases],
                   **kwargs)


def adam_step(params: MlpParameters, grads, state: AdamState, lr: float):
    """Standard Adam update with bias correction; rejects non-finite gradients."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    w_grads, b_grads = grads
    for g in (*w_grads, *b_grads):
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient; Adam step rejected")
    t = state.step_count + 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t

    def update(p, g, m, v):
        m_new = b1 * m + (1 - b1) * g
        v_new = b2 * v + (1 - b2) * g * g
        p_new = p - lr * (m_new / c1) / (np.sqrt(v_new / c2) + eps)
        return p_new, m_new, v_new

    new_w, new_mw, new_vw = [], [], []
    for p, g, m, v in zip(params.weights, w_grads, state.m_weights, state.v_weights):
        pn, mn, vn = update(p, g, m, v)
        new_w.append(pn); new_mw.append(mn); new_vw.append(vn)
    new_b, new_mb, new_vb = [], [], []
    for p, g, m, v in zip(params.biases, b_grads, state.m_biases, state.v_biases):
        pn, mn, vn = update(p, g, m, v)
        new_b.append(pn); new_mb.append(mn); new_vb.append(vn)
    return (MlpParameters(new_w, new_b),
            AdamState(new_mw, new_vw, new_mb, new_vb, t, b1, b2, eps))


def lr_schedule(epoch: int) -> float:
    """Decaying learning rate 0.05 * 0.995^(epoch / 100)."""
    return 0.05 * 0.995 ** (epoch / 100.0)


# --- checkpoint serialization -------------------------------------------------

CHECKPOINT_FORMAT_VERSION = 1


def _format_floats(obj) -> str:
    """JSON text with every float rendered as 17-significant-digit scientific notation."""
    if isinstance(obj, float):
        return format(obj, ".16e")
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_format_floats(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(
            json.dumps(str(k)) + ":" + _format_floats(v) for k, v in obj.items()) + "}"
    return json.dumps(obj)


def checkpoint_dict(params: MlpParameters, config_hash: str = "", extra: dict | None = None) -> dict:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "layer_sizes": params.layer_sizes,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "config_hash": config_hash,
    }
    if extra:
        doc.update(extra)
    return doc


def save_checkpoint(path, params: MlpParameters, config_hash: str = "",
                    extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(_format_floats(checkpoint_dict(params, config_hash, extra)))
        fh.write("\n")


def load_checkpoint_dict(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format: {doc.get('format_version')!r}")
    return doc


def load_checkpoint(path) -> MlpParameters:
    doc = load_checkpoint_dict(path)
    params = MlpParameters([np.array(w) for w in doc["weights"]],
                           [np.array(b) for b in doc["biases"]])
    if params.layer_sizes != list(doc["layer_sizes"]):
        raise ValueError("checkpoint layer_sizes inconsistent with stored arrays")
    return params


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()
