"""
Minimal dense/convolutional layer kernels with hand-written reverse-mode gradients.

Tensors are float64 numpy arrays in row-major order. Convolution tensors use the
channels-last layout: inputs are H x W x C, kernels K x K x C x F. Every kernel also
accepts a leading batch axis, which is how minibatches flow through training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Literal, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from primnav.common import ConfigurationError, TrainingError, get_logger

logger = get_logger(__name__)

REAL = np.float64

Activation = Literal["relu", "none"]


def conv_output_dim(in_dim: int, kernel: int, stride: int) -> int:
    """Valid-padding output size: floor((in - kernel) / stride) + 1."""
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if kernel < 1 or kernel > in_dim:
        raise ConfigurationError(f"kernel {kernel} does not fit input size {in_dim}")
    return (in_dim - kernel) // stride + 1


@dataclass(frozen=True)
class LayerSpec:
    kind: Literal["convolution", "dense"]
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    activation: Activation = "relu"
    kernel_size: int | None = None
    stride: int | None = None

    @classmethod
    def convolution(
        cls,
        input_shape: tuple[int, int, int],
        filters: int,
        kernel_size: int,
        stride: int = 1,
        activation: Activation = "relu",
    ) -> LayerSpec:
        height, width, _ = input_shape
        output_shape = (
            conv_output_dim(height, kernel_size, stride),
            conv_output_dim(width, kernel_size, stride),
            filters,
        )
        return cls("convolution", tuple(input_shape), output_shape, activation, kernel_size, stride)

    @classmethod
    def dense(cls, n_in: int, n_out: int, activation: Activation = "relu") -> LayerSpec:
        if n_in < 1 or n_out < 1:
            raise ConfigurationError(f"dense layer needs positive sizes, got {n_in}->{n_out}")
        return cls("dense", (n_in,), (n_out,), activation)

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "convolution":
            return (self.kernel_size, self.kernel_size, self.input_shape[2], self.output_shape[2])
        return (self.input_shape[0], self.output_shape[0])

    @property
    def bias_shape(self) -> tuple[int]:
        return (self.output_shape[-1],)

    @property
    def fan_in(self) -> int:
        return int(np.prod(self.weight_shape[:-1]))

    @property
    def num_params(self) -> int:
        return int(np.prod(self.weight_shape)) + self.bias_shape[0]

    def init_params(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Uniform weights in +-sqrt(6 / fan_in), zero biases."""
        limit = np.sqrt(6.0 / self.fan_in)
        weights = rng.uniform(-limit, limit, size=self.weight_shape).astype(REAL)
        return weights, np.zeros(self.bias_shape, dtype=REAL)


def _as_batch(x: np.ndarray, rank: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=REAL)
    if x.ndim == rank:
        return x[np.newaxis], True
    if x.ndim == rank + 1:
        return x, False
    raise ConfigurationError(f"expected a rank-{rank} tensor (optionally batched), got shape {x.shape}")


def _windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    # (B, H, W, C) -> (B, H', W', C, K, K)
    return sliding_window_view(x, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]


def _check_conv(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int) -> None:
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise ConfigurationError(f"kernels must be K x K x C x F, got {kernels.shape}")
    if kernels.shape[2] != x.shape[-1]:
        raise ConfigurationError(
            f"kernel channels {kernels.shape[2]} do not match input channels {x.shape[-1]}"
        )
    if bias.shape != (kernels.shape[3],):
        raise ConfigurationError(f"bias shape {bias.shape} does not match {kernels.shape[3]} filters")
    conv_output_dim(x.shape[1], kernels.shape[0], stride)
    conv_output_dim(x.shape[2], kernels.shape[0], stride)


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid-padding 2-D convolution (cross-correlation) of an H x W x C input."""
    batch, single = _as_batch(x, 3)
    _check_conv(batch, kernels, bias, stride)
    windows = _windows(batch, kernels.shape[0], stride)
    out = np.tensordot(windows, kernels, axes=([4, 5, 3], [0, 1, 2])) + bias
    return out[0] if single else out


def conv2d_backward(
    x: np.ndarray,
    kernels: np.ndarray,
    grad_out: np.ndarray,
    stride: int = 1,
    need_input_grad: bool = True,
) -> tuple[np.ndarray | None, np.ndarray, np.ndarray]:
    """Return (d_input, d_kernels, d_bias) given the upstream gradient of the output."""
    batch, single = _as_batch(x, 3)
    grad, _ = _as_batch(grad_out, 3)
    kernel = kernels.shape[0]
    windows = _windows(batch, kernel, stride)
    grad_kernels = np.tensordot(windows, grad, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
    grad_bias = grad.sum(axis=(0, 1, 2))
    if not need_input_grad:
        return None, grad_kernels, grad_bias

    grad_x = np.zeros_like(batch)
    out_h, out_w = grad.shape[1], grad.shape[2]
    row_span = stride * (out_h - 1) + 1
    col_span = stride * (out_w - 1) + 1
    for k in range(kernel):
        for l in range(kernel):
            grad_x[:, k : k + row_span : stride, l : l + col_span : stride, :] += grad @ kernels[k, l].T
    return (grad_x[0] if single else grad_x), grad_kernels, grad_bias


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """output[j] = sum_i x[i] * weights[i][j] + bias[j]."""
    batch, single = _as_batch(x, 1)
    if weights.ndim != 2 or weights.shape[0] != batch.shape[1]:
        raise ConfigurationError(f"weights {weights.shape} do not accept input length {batch.shape[1]}")
    if bias.shape != (weights.shape[1],):
        raise ConfigurationError(f"bias shape {bias.shape} does not match {weights.shape[1]} outputs")
    out = batch @ weights + bias
    return out[0] if single else out


def dense_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    batch, single = _as_batch(x, 1)
    grad, _ = _as_batch(grad_out, 1)
    grad_x = grad @ weights.T
    return (grad_x[0] if single else grad_x), batch.T @ grad, grad.sum(axis=0)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def relu_backward(activated: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # The mask of the activated output equals the mask of the pre-activation.
    return grad_out * (activated > 0.0)


def huber_loss(prediction, target, delta: float = 1.0):
    """
    Huber loss and its derivative with respect to the prediction.

    Works elementwise on scalars or arrays: 0.5 e^2 inside |e| <= delta,
    delta (|e| - 0.5 delta) outside, gradient e clipped to [-delta, delta].
    """
    error = np.asarray(prediction, dtype=REAL) - np.asarray(target, dtype=REAL)
    if not np.all(np.isfinite(error)):
        raise TrainingError("non-finite input to huber_loss")
    magnitude = np.abs(error)
    loss = np.where(magnitude <= delta, 0.5 * error**2, delta * (magnitude - 0.5 * delta))
    grad = np.clip(error, -delta, delta)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-8

    @classmethod
    def fresh(cls, params: Sequence[np.ndarray], learning_rate: float = 0.001, **kwargs) -> AdamState:
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
            **kwargs,
        )

    def copy(self) -> AdamState:
        return AdamState(
            first_moment=[m.copy() for m in self.first_moment],
            second_moment=[v.copy() for v in self.second_moment],
            step_count=self.step_count,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon_hat=self.epsilon_hat,
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """
    Apply one bias-corrected Adam update.

    `params` and the moment buffers of `state` are updated in place; the same state
    object is returned with its step count incremented. Nothing is modified when a
    gradient is non-finite.
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ConfigurationError("gradients, parameters and optimizer state are not aligned")
    for p, g, m in zip(params, grads, state.first_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ConfigurationError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter of shape {p.shape}")

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon_hat)
    return state


@dataclass
class GradientCheckReport:
    tolerance: float
    relative_errors: list[np.ndarray] = field(default_factory=list)
    skipped: int = 0

    @property
    def max_relative_error(self) -> float:
        if not self.relative_errors:
            return 0.0
        return float(max(np.max(err) if err.size else 0.0 for err in self.relative_errors))

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def gradient_check(
    loss_fn: Callable[[], float],
    params: Sequence[np.ndarray],
    analytic_grads: Sequence[np.ndarray],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    max_entries_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    region_fn: Callable[[], Hashable] | None = None,
) -> GradientCheckReport:
    """
    Compare analytic gradients against central finite differences.

    `loss_fn` re-evaluates the scalar loss from the current contents of `params`;
    each checked entry is perturbed in place by +-`step` and restored afterwards.
    With `max_entries_per_param`, a random subset of entries per tensor is checked.
    Relative error is |analytic - numeric| / max(1, |analytic|, |numeric|).

    For piecewise-linear networks, `region_fn` returns the current activation
    pattern; entries whose +-`step` probes land in different patterns straddle a
    kink, so they are skipped and counted in `report.skipped`.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    report = GradientCheckReport(tolerance=tolerance)
    for p, g in zip(params, analytic_grads):
        if not p.flags.c_contiguous or not p.flags.writeable:
            raise ConfigurationError("gradient_check perturbs parameters in place; pass writeable contiguous arrays")
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g, dtype=REAL).reshape(-1)
        indices = np.arange(flat_p.size)
        if max_entries_per_param is not None and flat_p.size > max_entries_per_param:
            indices = np.sort(rng.choice(flat_p.size, size=max_entries_per_param, replace=False))
        errors = np.empty(indices.size, dtype=REAL)
        for n, index in enumerate(indices):
            original = flat_p[index]
            flat_p[index] = original + step
            loss_plus = loss_fn()
            region_plus = region_fn() if region_fn is not None else None
            flat_p[index] = original - step
            loss_minus = loss_fn()
            region_minus = region_fn() if region_fn is not None else None
            flat_p[index] = original
            if region_plus != region_minus:
                errors[n] = 0.0
                report.skipped += 1
                continue
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            analytic = flat_g[index]
            errors[n] = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
        report.relative_errors.append(errors)
    logger.debug(f"Gradient check over {len(params)} tensors: max relative error {report.max_relative_error:.3e}")
    return report
