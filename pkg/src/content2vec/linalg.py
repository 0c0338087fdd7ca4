"""Dense float64 vector/matrix primitives, the Adam optimizer, and a
finite-difference gradient oracle.

Everything here is a pure function of its inputs; arrays are float64
throughout so that gradient checks against central differences are
meaningful. There is no autodiff graph anywhere in this package: each model
writes its own backward pass and verifies it against `finite_diff_grad`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch

# 1-D / 2-D float64 ndarrays; aliases for readability in signatures.
Vector = np.ndarray
Matrix = np.ndarray


def as_vector(values) -> Vector:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_matrix(values) -> Matrix:
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def sigmoid(x):
    """Numerically stable logistic function, elementwise on arrays.

    Never evaluates exp of a large positive argument, so it is safe for
    |x| well beyond 700 (it saturates to 0.0 / 1.0).
    """
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if np.ndim(x) == 0:
        return float(out)
    return out


def inner_product(u: Vector, v: Vector) -> float:
    u = as_vector(u)
    v = as_vector(v)
    if u.shape[0] != v.shape[0]:
        raise DimensionMismatch(
            f"inner_product: dim {u.shape[0]} vs dim {v.shape[0]}"
        )
    return float(np.dot(u, v))


def relu_layer_forward(W: Matrix, b: Vector, x: Vector) -> Vector:
    """max(0, W @ x + b)."""
    W = as_matrix(W)
    b = as_vector(b)
    x = as_vector(x)
    if W.shape[1] != x.shape[0]:
        raise DimensionMismatch(
            f"relu_layer_forward: W has {W.shape[1]} columns, x has dim {x.shape[0]}"
        )
    if W.shape[0] != b.shape[0]:
        raise DimensionMismatch(
            f"relu_layer_forward: W has {W.shape[0]} rows, b has dim {b.shape[0]}"
        )
    return np.maximum(W @ x + b, 0.0)


def relu_layer_backward(
    W: Matrix, b: Vector, x: Vector, upstream_grad: Vector
) -> tuple[Matrix, Vector, Vector]:
    """Gradients of <upstream_grad, relu(Wx + b)> w.r.t. (W, b, x).

    The subgradient at a pre-activation of exactly zero is taken as zero,
    so no gradient flows through units with Wx + b <= 0.
    """
    W = as_matrix(W)
    b = as_vector(b)
    x = as_vector(x)
    g = as_vector(upstream_grad)
    if W.shape[1] != x.shape[0] or W.shape[0] != b.shape[0] or g.shape[0] != b.shape[0]:
        raise DimensionMismatch(
            f"relu_layer_backward: W {W.shape}, b {b.shape}, x {x.shape}, "
            f"upstream {g.shape}"
        )
    pre = W @ x + b
    gated = np.where(pre > 0.0, g, 0.0)
    grad_W = np.outer(gated, x)
    grad_b = gated
    grad_x = W.T @ gated
    return grad_W, grad_b, grad_x


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus the optimizer hyperparameters.

    Owned by exactly one trainer at a time; `adam_step` returns a fresh
    state rather than mutating this one.
    """

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n: int, learning_rate: float, **kwargs) -> "AdamState":
        return cls(
            first_moment=np.zeros(n),
            second_moment=np.zeros(n),
            step_count=0,
            learning_rate=learning_rate,
            **kwargs,
        )


def adam_step(
    params: Vector, grads: Vector, state: AdamState
) -> tuple[Vector, AdamState]:
    """One Adam update with bias correction: returns (new_params, new_state)."""
    params = as_vector(params)
    grads = as_vector(grads)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise DimensionMismatch(
            f"adam_step: params {params.shape}, grads {grads.shape}, "
            f"moments {state.first_moment.shape}"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(
        first_moment=m,
        second_moment=v,
        step_count=t,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_params, new_state


def finite_diff_grad(
    f: Callable[[Vector], float], x: Vector, eps: float = 1e-5
) -> Vector:
    """Central-difference gradient estimate of a scalar function.

    This is the independent oracle every hand-written backward pass in the
    package is checked against; it must never share code with them.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = as_vector(x).copy()
    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        orig = x[i]
        x[i] = orig + eps
        hi = f(x)
        x[i] = orig - eps
        lo = f(x)
        x[i] = orig
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad
