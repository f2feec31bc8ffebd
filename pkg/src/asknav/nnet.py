"""Minimal dense network kernel: MLP forward/backward, losses, Adam.

Hidden layers use tanh, the output layer is identity. Forward and backward
are pure; adam_step returns fresh parameter and optimizer values. Weight
matrices are stored row-per-output-unit, so a layer computes
``a @ W.T + b`` and works for single vectors and batches alike.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

WEIGHT_FORMAT_VERSION = 1


class ShapeMismatch(ValueError):
    """Input, gradient, or accumulator shape disagrees with the parameters."""


class LabelOutOfRange(IndexError):
    """Cross-entropy label index exceeds the logit vector."""


@dataclass
class MlpParams:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # weights[l] has shape (layer_sizes[l+1], layer_sizes[l])
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeMismatch("weights/biases do not chain with layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if w.shape != want or b.shape != (want[0],):
                raise ShapeMismatch(f"layer {l}: weight {w.shape} / bias {b.shape}, expected {want}")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def num_layers(self) -> int:
        return len(self.weights)


class Grads(NamedTuple):
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class OptState:
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_params(layer_sizes: list[int], rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(layer_sizes=list(layer_sizes), weights=weights, biases=biases)


def zero_grads(params: MlpParams) -> Grads:
    return Grads([np.zeros_like(w) for w in params.weights],
                 [np.zeros_like(b) for b in params.biases])


def init_opt_state(params: MlpParams, learning_rate: float = 3e-4, beta1: float = 0.9,
                   beta2: float = 0.999, epsilon: float = 1e-8) -> OptState:
    return OptState(
        m_w=[np.zeros_like(w) for w in params.weights],
        v_w=[np.zeros_like(w) for w in params.weights],
        m_b=[np.zeros_like(b) for b in params.biases],
        v_b=[np.zeros_like(b) for b in params.biases],
        learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon,
    )


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns (output, cache). Accepts a vector or a (batch, in) matrix.

    The cache holds the input plus every post-activation layer output, which
    is exactly what the backward pass needs.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.layer_sizes[0]:
        raise ShapeMismatch(f"input width {x.shape[-1]}, expected {params.layer_sizes[0]}")
    cache = [x]
    a = x
    last = params.num_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = z if l == last else np.tanh(z)
        cache.append(a)
    return a, cache


def mlp_backward_with_input(params: MlpParams, cache: list[np.ndarray],
                            output_grad: np.ndarray) -> tuple[Grads, np.ndarray]:
    """mlp_backward plus the gradient w.r.t. the network input, for chaining
    through an upstream network."""
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != cache[-1].shape:
        raise ShapeMismatch(f"output_grad shape {g.shape}, expected {cache[-1].shape}")
    gw = [None] * params.num_layers
    gb = [None] * params.num_layers
    for l in range(params.num_layers - 1, -1, -1):
        if l < params.num_layers - 1:
            g = g * (1.0 - cache[l + 1] ** 2)  # through tanh
        a_prev = cache[l]
        g2 = np.atleast_2d(g)
        gw[l] = g2.T @ np.atleast_2d(a_prev)
        gb[l] = g2.sum(axis=0)
        g = g @ params.weights[l]
    return Grads(gw, gb), g


def mlp_backward(params: MlpParams, cache: list[np.ndarray],
                 output_grad: np.ndarray) -> Grads:
    """Exact reverse-mode gradients of sum(output * output_grad) w.r.t.
    every parameter. Batched output_grad rows are summed."""
    return mlp_backward_with_input(params, cache, output_grad)[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """loss = -log softmax(logits)[label]; gradient = softmax - one_hot."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise LabelOutOfRange(f"label {label} out of range for {logits.shape[-1]} logits")
    logp = log_softmax(logits)
    grad = np.exp(logp)
    grad[label] -= 1.0
    return float(-logp[label]), grad


def adam_step(params: MlpParams, grads: Grads, opt: OptState) -> tuple[MlpParams, OptState]:
    """Bias-corrected adaptive-moment update; returns new params and state."""
    if len(grads.weights) != params.num_layers:
        raise ShapeMismatch("gradient layer count mismatch")
    for g, w in zip(grads.weights, params.weights):
        if g.shape != w.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} vs weight {w.shape}")
    t = opt.step + 1
    b1, b2, eps, lr = opt.beta1, opt.beta2, opt.epsilon, opt.learning_rate
    new_w, new_b = [], []
    m_w, v_w, m_b, v_b = [], [], [], []
    for l in range(params.num_layers):
        mw = b1 * opt.m_w[l] + (1 - b1) * grads.weights[l]
        vw = b2 * opt.v_w[l] + (1 - b2) * grads.weights[l] ** 2
        mb = b1 * opt.m_b[l] + (1 - b1) * grads.biases[l]
        vb = b2 * opt.v_b[l] + (1 - b2) * grads.biases[l] ** 2
        mw_hat = mw / (1 - b1 ** t)
        vw_hat = vw / (1 - b2 ** t)
        mb_hat = mb / (1 - b1 ** t)
        vb_hat = vb / (1 - b2 ** t)
        new_w.append(params.weights[l] - lr * mw_hat / (np.sqrt(vw_hat) + eps))
        new_b.append(params.biases[l] - lr * mb_hat / (np.sqrt(vb_hat) + eps))
        m_w.append(mw); v_w.append(vw); m_b.append(mb); v_b.append(vb)
    params2 = MlpParams(layer_sizes=list(params.layer_sizes), weights=new_w, biases=new_b,
                        activation=params.activation)
    opt2 = OptState(m_w=m_w, v_w=v_w, m_b=m_b, v_b=v_b, step=t,
                    learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps)
    return params2, opt2


def params_to_dict(params: MlpParams) -> dict:
    return {
        "format_version": WEIGHT_FORMAT_VERSION,
        "layer_sizes": list(params.layer_sizes),
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "activation": params.activation,
    }


def params_from_dict(d: dict) -> MlpParams:
    return MlpParams(
        layer_sizes=[int(s) for s in d["layer_sizes"]],
        weights=[np.array(w, dtype=np.float64) for w in d["weights"]],
        biases=[np.array(b, dtype=np.float64) for b in d["biases"]],
        activation=d.get("activation", "tanh"),
    )


def save_params(params: MlpParams, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(params_to_dict(params), f)


def load_params(path) -> MlpParams:
    with open(path, encoding="utf-8") as f:
        return params_from_dict(json.load(f))


def params_hash(params: MlpParams) -> str:
    blob = json.dumps(params_to_dict(params), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def clone_params(params: MlpParams) -> MlpParams:
    return MlpParams(layer_sizes=list(params.layer_sizes),
                     weights=[w.copy() for w in params.weights],
                     biases=[b.copy() for b in params.biases],
                     activation=params.activation)
