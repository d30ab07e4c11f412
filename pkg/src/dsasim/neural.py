"""Plain-numpy feedforward network: ReLU hidden layers, linear output head,
mean-squared-error loss on the taken action's output only, hand-derived
backpropagation, and Adam updates. Everything is float64 so reference
comparisons can use tight tolerances."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_VERSION = 1


@dataclass
class NetworkParams:
    """Weight matrices (fan_in, fan_out) and bias vectors, one pair per layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class OptState:
    """Adam accumulators, shaped like the parameters they update."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: NetworkParams) -> "OptState":
        return cls(
            m_weights=[np.zeros_like(w) for w in params.weights],
            v_weights=[np.zeros_like(w) for w in params.weights],
            m_biases=[np.zeros_like(b) for b in params.biases],
            v_biases=[np.zeros_like(b) for b in params.biases],
            step=0,
        )


def init_network(
    input_dim: int,
    hidden_dim: int,
    output_dim: int,
    rng: np.random.Generator,
    hidden_layers: int = 3,
) -> NetworkParams:
    """Zero-mean gaussian weights scaled by 1/sqrt(fan_in), zero biases."""
    if input_dim < 1 or output_dim < 1 or (hidden_layers > 0 and hidden_dim < 1):
        raise ValueError(f"layer dimensions must be >= 1, got input={input_dim}, hidden={hidden_dim}, output={output_dim}")
    if hidden_layers < 0:
        raise ValueError(f"hidden_layers must be >= 0, got {hidden_layers}")
    dims = [input_dim] + [hidden_dim] * hidden_layers + [output_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return NetworkParams(weights=weights, biases=biases)


def forward(params: NetworkParams, inputs: np.ndarray) -> np.ndarray:
    """Network outputs for one input vector or a (batch, input_dim) matrix."""
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input width {x.shape[1]} does not match network input dim {params.weights[0].shape[0]}")
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    out = h @ params.weights[-1] + params.biases[-1]
    return out[0] if single else out


def loss_and_gradients(
    params: NetworkParams,
    batch_inputs: np.ndarray,
    batch_actions: np.ndarray,
    batch_targets: np.ndarray,
) -> tuple[float, tuple[list[np.ndarray], list[np.ndarray]]]:
    """Mean squared error between targets and the taken actions' outputs,
    with analytic gradients. Per sample only the taken action's output unit
    carries gradient; all other output units contribute nothing."""
    x = np.asarray(batch_inputs, dtype=np.float64)
    actions = np.asarray(batch_actions, dtype=np.int64)
    targets = np.asarray(batch_targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch_inputs must be a nonempty (batch, input_dim) matrix")
    if actions.shape != (x.shape[0],) or targets.shape != (x.shape[0],):
        raise ValueError("batch_actions and batch_targets must match the batch size")
    if not np.all(np.isfinite(targets)):
        raise ValueError("batch_targets must be finite")

    batch = x.shape[0]
    pre_activations = []
    activations = [x]
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        pre = h @ w + b
        pre_activations.append(pre)
        h = np.maximum(pre, 0.0)
        activations.append(h)
    out = h @ params.weights[-1] + params.biases[-1]

    rows = np.arange(batch)
    diff = out[rows, actions] - targets
    loss = float(np.mean(diff**2))

    grad_out = np.zeros_like(out)
    grad_out[rows, actions] = 2.0 * diff / batch

    grad_weights: list[np.ndarray] = [np.empty(0)] * len(params.weights)
    grad_biases: list[np.ndarray] = [np.empty(0)] * len(params.biases)
    delta = grad_out
    for layer in range(len(params.weights) - 1, -1, -1):
        grad_weights[layer] = activations[layer].T @ delta
        grad_biases[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer].T) * (pre_activations[layer - 1] > 0.0)
    return loss, (grad_weights, grad_biases)


def adam_step(
    params: NetworkParams,
    grads: tuple[list[np.ndarray], list[np.ndarray]],
    opt: OptState,
    lr: float,
) -> tuple[NetworkParams, OptState]:
    """One Adam update with bias correction; returns fresh params and state."""
    if lr <= 0.0:
        raise ValueError(f"lr must be positive, got {lr}")
    grad_weights, grad_biases = grads
    for g in [*grad_weights, *grad_biases]:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient passed to adam_step")
    t = opt.step + 1
    correct1 = 1.0 - ADAM_BETA1**t
    correct2 = 1.0 - ADAM_BETA2**t

    def update(value, grad, m, v):
        m_new = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
        v_new = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad**2
        step = lr * (m_new / correct1) / (np.sqrt(v_new / correct2) + ADAM_EPS)
        return value - step, m_new, v_new

    new_weights, new_biases = [], []
    new_mw, new_vw, new_mb, new_vb = [], [], [], []
    for w, g, m, v in zip(params.weights, grad_weights, opt.m_weights, opt.v_weights):
        w_new, m_new, v_new = update(w, g, m, v)
        new_weights.append(w_new)
        new_mw.append(m_new)
        new_vw.append(v_new)
    for b, g, m, v in zip(params.biases, grad_biases, opt.m_biases, opt.v_biases):
        b_new, m_new, v_new = update(b, g, m, v)
        new_biases.append(b_new)
        new_mb.append(m_new)
        new_vb.append(v_new)
    return (
        NetworkParams(weights=new_weights, biases=new_biases),
        OptState(m_weights=new_mw, v_weights=new_vw, m_biases=new_mb, v_biases=new_vb, step=t),
    )


def save_params(params: NetworkParams, path: str | Path) -> None:
    """Versioned checkpoint; float64 arrays round-trip bit-exactly."""
    payload = {
        "version": np.array(CHECKPOINT_VERSION),
        "n_layers": np.array(len(params.weights)),
        "layer_dims": np.array(params.layer_dims),
    }
    for idx, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"weight_{idx}"] = w
        payload[f"bias_{idx}"] = b
    np.savez(path, **payload)


def load_params(path: str | Path) -> NetworkParams:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
        n_layers = int(data["n_layers"])
        weights = [data[f"weight_{idx}"] for idx in range(n_layers)]
        biases = [data[f"bias_{idx}"] for idx in range(n_layers)]
    return NetworkParams(weights=weights, biases=biases)
