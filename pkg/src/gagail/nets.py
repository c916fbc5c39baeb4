"""Small dense networks with hand-derived gradients.

Everything here is deliberately minimal: fixed MLP topology (ReLU hidden
layers, identity or sigmoid output), exact analytic backprop, a
DQN-flavored RMSProp with global gradient-norm clipping, and a central
finite-difference gradient checker used by the test suite.

Parameters are stored as a flat list of float64 arrays alternating
``[W0, b0, W1, b1, ...]`` where ``W`` has shape ``(fan_in, fan_out)``.
Checkpoints are JSON so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError

ParamSet = list  # list[np.ndarray], layout [W0, b0, W1, b1, ...]

_ACTIVATIONS = ("identity", "sigmoid")


@dataclass(frozen=True)
class MlpSpec:
    """Topology of a dense network: widths input -> hidden... -> output."""

    layer_widths: tuple
    output_activation: str = "identity"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 3:
            raise ConfigurationError(
                f"need at least one hidden layer, got widths {widths}"
            )
        if any(w < 1 for w in widths):
            raise ConfigurationError(f"all layer widths must be >= 1, got {widths}")
        if self.output_activation not in _ACTIVATIONS:
            raise ConfigurationError(
                f"unknown output activation {self.output_activation!r}"
            )

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def layer_count(self) -> int:
        return len(self.layer_widths) - 1


def init_params(spec: MlpSpec, rng: np.random.Generator) -> ParamSet:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    params = []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(rng.uniform(-bound, bound, size=(fan_out,)))
    return params


def _check_input(spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigurationError(
            f"input width {x.shape[-1]} does not match spec input {spec.input_dim}"
        )
    return x


def forward(spec: MlpSpec, params: ParamSet, x: np.ndarray) -> np.ndarray:
    """Batch forward pass; returns (B, output_dim)."""
    out, _ = forward_cached(spec, params, x)
    return out


def forward_cached(spec: MlpSpec, params: ParamSet, x: np.ndarray):
    """Forward pass keeping per-layer inputs and pre-activations for backward."""
    h = _check_input(spec, x)
    inputs = []
    preacts = []
    n_layers = spec.layer_count
    for layer in range(n_layers):
        w, b = params[2 * layer], params[2 * layer + 1]
        inputs.append(h)
        z = h @ w + b
        preacts.append(z)
        if layer < n_layers - 1:
            h = np.maximum(z, 0.0)
        elif spec.output_activation == "sigmoid":
            # clip the exponent so the output stays strictly inside (0, 1)
            h = 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))
        else:
            h = z
    return h, (inputs, preacts, h)


def backward(
    spec: MlpSpec, params: ParamSet, cache, grad_output: np.ndarray
) -> ParamSet:
    """Exact gradients w.r.t. every parameter.

    ``grad_output`` is dLoss/dOutput (post-activation), shape (B, output_dim);
    pass the gradient of a batch-mean loss to get batch-mean parameter
    gradients. Returns a list of arrays matching the parameter layout.
    """
    inputs, preacts, out = cache
    n_layers = spec.layer_count
    grads: ParamSet = [None] * (2 * n_layers)
    if spec.output_activation == "sigmoid":
        delta = grad_output * out * (1.0 - out)
    else:
        delta = np.asarray(grad_output, dtype=np.float64)
    for layer in range(n_layers - 1, -1, -1):
        w = params[2 * layer]
        grads[2 * layer] = inputs[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ w.T) * (preacts[layer - 1] > 0.0)
    return grads


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_gradients(grads: Sequence[np.ndarray], max_norm: float):
    """Scale gradients so their global norm is at most ``max_norm``.

    Already-compliant gradients are returned unchanged (identity). Returns
    (clipped_grads, raw_norm).
    """
    norm = global_norm(grads)
    if norm <= max_norm:
        return list(grads), norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


@dataclass
class RmsProp:
    """RMSProp as used for the discriminators and the generator network.

    ``momentum`` is the decay rate of the squared-gradient running average;
    ``epsilon`` is added inside the square root (a floor on the squared
    gradient). Gradients are clipped to a global norm of ``clip_norm``
    before the update. With zero gradients the parameters stay put and the
    accumulators merely decay.
    """

    learning_rate: float = 0.00025
    momentum: float = 0.95
    epsilon: float = 0.01
    clip_norm: float = 5.0
    _acc: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be > 0")
        if self.clip_norm <= 0:
            raise ConfigurationError("clip_norm must be > 0")

    def step(self, params: ParamSet, grads: ParamSet) -> ParamSet:
        """One clipped RMSProp update; returns the new parameter list."""
        if len(params) != len(grads):
            raise ConfigurationError("gradient layout does not match parameters")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise DivergenceError("non-finite gradient; run has diverged")
        grads, _ = clip_gradients(grads, self.clip_norm)
        if not self._acc:
            self._acc = [np.zeros_like(p) for p in params]
        new_params = []
        for i, (p, g) in enumerate(zip(params, grads)):
            acc = self._acc[i]
            acc *= self.momentum
            acc += (1.0 - self.momentum) * g * g
            new_params.append(p - self.learning_rate * g / np.sqrt(acc + self.epsilon))
        return new_params

    def reset(self):
        self._acc = []


# ---------------------------------------------------------------------------
# Loss helpers (value + gradient w.r.t. predictions, batch-mean convention)
# ---------------------------------------------------------------------------

def squared_error_loss(pred: np.ndarray, target: np.ndarray):
    """Mean over batch of summed squared errors; returns (loss, dloss/dpred)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    diff = pred - target
    n = pred.shape[0]
    loss = float(np.sum(diff * diff)) / n
    return loss, 2.0 * diff / n


def binary_cross_entropy_loss(p: np.ndarray, labels: np.ndarray):
    """Mean BCE for probabilities ``p`` in (0,1); returns (loss, dloss/dp)."""
    p = np.asarray(p, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = p.shape[0]
    loss = float(np.sum(-labels * np.log(p) - (1.0 - labels) * np.log(1.0 - p))) / n
    grad = (p - labels) / (p * (1.0 - p)) / n
    return loss, grad


def softmax_cross_entropy_loss(logits: np.ndarray, class_ids: np.ndarray):
    """Mean cross-entropy of integer classes under softmax(logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-log_probs[np.arange(n), class_ids].sum()) / n
    grad = np.exp(log_probs)
    grad[np.arange(n), class_ids] -= 1.0
    return loss, grad / n


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    param_count: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(
    spec: MlpSpec,
    params: ParamSet,
    inputs: np.ndarray,
    loss_fn: Callable[[np.ndarray], tuple],
    tolerance: float = 1e-4,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(outputs) -> (loss, dloss/doutputs)`` defines the scalar loss.
    The analytic side runs through :func:`backward`; the numeric side
    re-evaluates the loss at ``theta +- step`` for every single parameter,
    so keep the spec small. Relative error uses a 1e-6 denominator floor so
    near-zero gradient pairs do not register as spurious failures.
    """
    out, cache = forward_cached(spec, params, inputs)
    _, grad_out = loss_fn(out)
    analytic = backward(spec, params, cache, grad_out)

    max_rel = 0.0
    count = 0
    for i, p in enumerate(params):
        flat = p.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up, _ = loss_fn(forward(spec, params, inputs))
            flat[j] = orig - step
            down, _ = loss_fn(forward(spec, params, inputs))
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            a = analytic[i].reshape(-1)[j]
            denom = max(abs(a), abs(numeric), 1e-6)
            max_rel = max(max_rel, abs(a - numeric) / denom)
            count += 1
    return GradCheckReport(max_rel_error=max_rel, param_count=count, tolerance=tolerance)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "mlp-params-v1"


def params_to_dict(spec: MlpSpec, params: ParamSet) -> dict:
    layers = []
    for layer in range(spec.layer_count):
        layers.append(
            {
                "w": params[2 * layer].tolist(),
                "b": params[2 * layer + 1].tolist(),
            }
        )
    return {
        "format": CHECKPOINT_FORMAT,
        "layer_widths": list(spec.layer_widths),
        "output_activation": spec.output_activation,
        "layers": layers,
    }


def params_from_dict(payload: dict):
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"unknown checkpoint format {payload.get('format')!r}")
    spec = MlpSpec(
        layer_widths=tuple(payload["layer_widths"]),
        output_activation=payload["output_activation"],
    )
    params: ParamSet = []
    for layer in payload["layers"]:
        params.append(np.asarray(layer["w"], dtype=np.float64))
        params.append(np.asarray(layer["b"], dtype=np.float64))
    return spec, params


def save_params(path, spec: MlpSpec, params: ParamSet) -> None:
    Path(path).write_text(json.dumps(params_to_dict(spec, params)))


def load_params(path):
    return params_from_dict(json.loads(Path(path).read_text()))
