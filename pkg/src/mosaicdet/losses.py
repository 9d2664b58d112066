"""Classification, confidence and smoothing loss kernels with analytic gradients.

BCE-with-logits works on unbounded logits and is evaluated through softplus so
it never overflows. Focal and quality focal loss take probabilities, matching
the form they are usually written in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np


class DomainError(ValueError):
    """Raised when a loss is evaluated where it is infinite or undefined."""


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"focal alpha must lie in [0, 1], got {self.alpha}")
        if self.gamma < 0.0:
            raise DomainError(f"focal gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class QFLParams:
    beta: float = 2.0

    def __post_init__(self) -> None:
        if self.beta < 0.0:
            raise DomainError(f"QFL beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class SmoothingParams:
    label_smoothing: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.label_smoothing < 1.0:
            raise DomainError(f"label smoothing must lie in [0, 1), got {self.label_smoothing}")


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + exp(x)) without overflow
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _bce_arrays(x, y, weight, pos_weight):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(x) if weight is None else np.asarray(weight, dtype=np.float64)
    if pos_weight is None:
        pc = np.ones(x.shape[-1:] if x.ndim else (), dtype=np.float64)
    else:
        pc = np.asarray(pos_weight, dtype=np.float64)
    if y.shape != x.shape or w.shape != x.shape:
        raise ValueError(f"shape mismatch: logits {x.shape}, targets {y.shape}, weights {w.shape}")
    if x.ndim and pc.shape not in ((), (x.shape[-1],)):
        raise ValueError(f"pos_weight shape {pc.shape} does not match class axis {x.shape[-1:]}")
    if np.any((y < 0.0) | (y > 1.0)):
        raise ValueError("targets must lie in [0, 1]")
    if np.any(w < 0.0):
        raise ValueError("sample weights must be non-negative")
    if np.any(pc <= 0.0):
        raise ValueError("positive-class weights must be > 0")
    return x, y, w, pc


def _reduce(values: np.ndarray, reduction: str):
    if reduction == "none":
        return values
    if reduction == "sum":
        return float(np.sum(values.ravel()))
    if reduction == "mean":
        return float(np.sum(values.ravel()) / max(values.size, 1))
    raise ValueError(f"unknown reduction {reduction!r}")


def bce_with_logits(x, y, weight=None, pos_weight=None, reduction: str = "mean"):
    """Weighted binary cross-entropy on logits.

    ``l = -w * [p_c * y * log(sigmoid(x)) + (1 - y) * log(1 - sigmoid(x))]``,
    evaluated as ``w * [p_c * y * softplus(-x) + (1 - y) * softplus(x)]``.
    ``pos_weight`` broadcasts along the last (class) axis.
    """
    x, y, w, pc = _bce_arrays(x, y, weight, pos_weight)
    losses = w * (pc * y * _softplus(-x) + (1.0 - y) * _softplus(x))
    return _reduce(losses, reduction)


def bce_with_logits_grad(x, y, weight=None, pos_weight=None, reduction: str = "mean") -> np.ndarray:
    """Gradient of :func:`bce_with_logits` with respect to the logits."""
    x, y, w, pc = _bce_arrays(x, y, weight, pos_weight)
    s = _sigmoid(x)
    # d/dx [softplus(-x)] = s - 1 ; d/dx [softplus(x)] = s
    g = w * (pc * y * (s - 1.0) + (1.0 - y) * s)
    if reduction == "mean":
        g = g / max(g.size, 1)
    elif reduction not in ("none", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    return g


def binary_cross_entropy(p: float, y: float) -> float:
    """Plain BCE on a probability, with ``0 * log 0 = 0``."""
    total = 0.0
    if y != 0.0:
        if p <= 0.0:
            raise DomainError(f"log(0) with target {y}")
        total -= y * math.log(p)
    if y != 1.0:
        if p >= 1.0:
            raise DomainError(f"log(0) with target {y}")
        total -= (1.0 - y) * math.log1p(-p)
    return total


def _p_t(p: float, y: int) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {p}")
    if y == 1:
        return p
    if y in (0, -1):
        return 1.0 - p
    raise DomainError(f"focal target must be 1 or 0 (or -1), got {y}")


def focal_loss(p: float, y: int, params: FocalParams = FocalParams()) -> float:
    """``-alpha * (1 - p_t)**gamma * log(p_t)`` with ``p_t = p`` for positives."""
    pt = _p_t(p, y)
    if pt <= 0.0:
        raise DomainError(f"focal loss is infinite at p_t = 0 (p={p}, y={y})")
    return -params.alpha * (1.0 - pt) ** params.gamma * math.log(pt) + 0.0


def focal_loss_grad(p: float, y: int, params: FocalParams = FocalParams()) -> float:
    """Derivative of :func:`focal_loss` with respect to ``p``."""
    pt = _p_t(p, y)
    if pt <= 0.0:
        raise DomainError(f"focal loss is infinite at p_t = 0 (p={p}, y={y})")
    a, g = params.alpha, params.gamma
    modulated = 0.0
    if g > 0.0 and pt < 1.0:
        modulated = a * g * (1.0 - pt) ** (g - 1.0) * math.log(pt)
    d_pt = modulated - a * (1.0 - pt) ** g / pt
    return d_pt if y == 1 else -d_pt


def _qfl_check(sigma: float, y: float) -> None:
    if not 0.0 <= sigma <= 1.0:
        raise DomainError(f"sigma must lie in [0, 1], got {sigma}")
    if not 0.0 <= y <= 1.0:
        raise DomainError(f"QFL target must lie in [0, 1], got {y}")
    if (sigma == 0.0 and y != 0.0) or (sigma == 1.0 and y != 1.0):
        raise DomainError(f"QFL is infinite at sigma={sigma} with target y={y}")


def quality_focal_loss(sigma: float, y: float, params: QFLParams = QFLParams()) -> float:
    """``-|y - sigma|**beta * ((1 - y) log(1 - sigma) + y log(sigma))``."""
    _qfl_check(sigma, y)
    # 0 ** 0 == 1 in Python, as required at beta = 0
    modulator = abs(y - sigma) ** params.beta
    return modulator * binary_cross_entropy(sigma, y)


def quality_focal_loss_grad(sigma: float, y: float, params: QFLParams = QFLParams()) -> float:
    """Derivative of :func:`quality_focal_loss` with respect to ``sigma``."""
    _qfl_check(sigma, y)
    beta = params.beta
    gap = sigma - y
    modulator = abs(gap) ** beta
    d_ce = 0.0
    if y != 0.0:
        d_ce -= y / sigma
    if y != 1.0:
        d_ce += (1.0 - y) / (1.0 - sigma)
    d_mod = 0.0
    if beta > 0.0 and gap != 0.0:
        d_mod = beta * abs(gap) ** (beta - 1.0) * math.copysign(1.0, gap)
    if d_mod == 0.0:
        return modulator * d_ce
    return d_mod * binary_cross_entropy(sigma, y) + modulator * d_ce


def smooth_labels(y_true, params: SmoothingParams = SmoothingParams()):
    """``y * (1 - ls) + 0.5 * ls``; pulls hard targets toward 0.5."""
    ls = params.label_smoothing
    # same affine map, arranged so (1, 0.1) -> 0.95 and (0, 0.1) -> 0.05 round exactly
    return y_true - ls * (y_true - 0.5)


def smooth_labels_grad(y_true, params: SmoothingParams = SmoothingParams()) -> float:
    return 1.0 - params.label_smoothing


def finite_difference_gradient(
    f: Callable[[np.ndarray], float],
    point: Sequence[float],
    eps: Union[float, Sequence[float]] = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of a scalar function of ``k`` reals.

    ``eps`` may be a scalar or one step per coordinate.
    """
    x = np.array(point, dtype=np.float64).ravel()
    steps = np.broadcast_to(np.asarray(eps, dtype=np.float64), x.shape)
    grad = np.empty_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += steps[i]
        lo[i] -= steps[i]
        try:
            f_hi, f_lo = float(f(hi)), float(f(lo))
        except DomainError as exc:
            raise DomainError(f"coordinate {i}: {exc}") from exc
        if not (math.isfinite(f_hi) and math.isfinite(f_lo)):
            raise DomainError(f"coordinate {i}: non-finite evaluation near {x[i]!r}")
        grad[i] = (f_hi - f_lo) / (2.0 * steps[i])
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-12) -> float:
    a = np.atleast_1d(np.asarray(analytic, dtype=np.float64))
    n = np.atleast_1d(np.asarray(numeric, dtype=np.float64))
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))
