"""Accuracy <-> cross-entropy conversion for n-class tasks.

The fitted map is

    H(a, n) = b0 + b1 a + b2 a^2 + b3 a^3 + g1 a ln a + g2 (1-a) ln(1-a)
              + d1 a ln n + d2 ln n + d3 / n

and is only used above chance, on ``a in (1/n, 1]``, where it is strictly
decreasing.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DomainError, OutOfRange

COEF_NAMES = ("beta0", "beta1", "beta2", "beta3", "gamma1", "gamma2", "delta1", "delta2", "delta3")

# grid used for the construction-time monotonicity check
_CHECK_N = np.geomspace(2.0, 5000.0, 41)
_CHECK_U = np.linspace(0.0, 1.0, 401)[1:]


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def design_matrix(a, n) -> np.ndarray:
    """Feature columns matching :data:`COEF_NAMES`."""
    a = np.asarray(a, dtype=float)
    n = np.asarray(n, dtype=float)
    a, n = np.broadcast_arrays(a, n)
    ln_n = np.log(n)
    return np.column_stack([
        np.ones_like(a), a, a ** 2, a ** 3,
        _xlogx(a), _xlogx(1.0 - a),
        a * ln_n, ln_n, 1.0 / n,
    ])


@dataclass(frozen=True)
class EntropyFitParams:
    """Coefficients of the accuracy-to-loss map (published fit, R^2 0.98).

    Construction verifies that the map decreases strictly in accuracy above
    chance for class counts in [2, 5000]; pass ``validate=False`` to skip
    the check for exploratory refits.
    """

    beta0: float = 2.86
    beta1: float = 14.22
    beta2: float = -27.10
    beta3: float = 10.48
    gamma1: float = 11.99
    gamma2: float = -1.82
    delta1: float = -0.70
    delta2: float = 0.61
    delta3: float = -0.62
    validate: bool = True

    def __post_init__(self):
        if self.validate and not self.is_monotone():
            raise DomainError("accuracy-to-loss map is not strictly decreasing above chance")

    @classmethod
    def from_dict(cls, values, validate: bool = True) -> "EntropyFitParams":
        return cls(**{k: float(values[k]) for k in COEF_NAMES}, validate=validate)

    @classmethod
    def from_array(cls, values, validate: bool = True) -> "EntropyFitParams":
        return cls(*[float(v) for v in values], validate=validate)

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in COEF_NAMES])

    def to_dict(self) -> dict[str, float]:
        d = asdict(self)
        d.pop("validate")
        return d

    def slope(self, a, n):
        """dH/da; the log-limit terms contribute their one-sided derivative."""
        a = np.asarray(a, dtype=float)
        ln_n = np.log(n)
        with np.errstate(divide="ignore"):
            return (self.beta1 + 2 * self.beta2 * a + 3 * self.beta3 * a ** 2
                    + self.gamma1 * (np.log(a) + 1.0)
                    - self.gamma2 * (np.log1p(-a) + 1.0)
                    + self.delta1 * ln_n)

    def is_monotone(self) -> bool:
        for n in _CHECK_N:
            a = 1.0 / n + (1.0 - 1.0 / n) * _CHECK_U[:-1]
            if not np.all(self.slope(a, n) < 0):
                return False
        return True


DEFAULT_ENTROPY_PARAMS = EntropyFitParams()


@dataclass(frozen=True)
class AccuracySpec:
    """Survey accuracy requirements for one task.

    ``required_accuracy`` is the task-level accuracy; it is split across
    ``num_subtasks`` subtasks by :func:`required_accuracy_per_subtask`.
    """

    required_accuracy: float
    random_guess_error: float
    n_class: float
    num_subtasks: int = 1

    def __post_init__(self):
        if not 0 < self.required_accuracy <= 1:
            raise OutOfRange(f"required accuracy must be in (0, 1], got {self.required_accuracy}")
        if not 0 <= self.random_guess_error < 1:
            raise OutOfRange(f"random-guess error must be in [0, 1), got {self.random_guess_error}")
        if not self.n_class >= 2:
            raise OutOfRange(f"n_class must be >= 2, got {self.n_class}")
        if not self.num_subtasks >= 1:
            raise OutOfRange(f"num_subtasks must be >= 1, got {self.num_subtasks}")
        if not (1.0 - self.required_accuracy) < self.random_guess_error:
            raise OutOfRange("required error must be below the random-guess error")


def entropy_from_accuracy(a, n, params: EntropyFitParams = DEFAULT_ENTROPY_PARAMS):
    """Cross-entropy (nats) implied by accuracy ``a`` on an ``n``-class task.

    Accepts scalars or arrays. ``x ln x`` terms take their limit 0 at the
    endpoints.
    """
    a_arr = np.asarray(a, dtype=float)
    if np.any(~(a_arr > 0)) or np.any(a_arr > 1):
        raise DomainError("accuracy must lie in (0, 1]")
    if np.any(~(np.asarray(n, dtype=float) >= 2)):
        raise DomainError("n must be >= 2")
    h = design_matrix(a_arr, n) @ params.to_array()
    if np.ndim(a) == 0 and np.ndim(n) == 0:
        return float(h[0])
    return h.reshape(np.broadcast(a_arr, np.asarray(n)).shape)


def entropy_bracket(n, params: EntropyFitParams = DEFAULT_ENTROPY_PARAMS) -> tuple[float, float]:
    """Loss range ``(low, high)`` over which the map can be inverted."""
    low = entropy_from_accuracy(1.0 - 1e-6, n, params)
    high = entropy_from_accuracy(1.0 / n + 1e-6, n, params)
    return low, high


def accuracy_from_entropy(h: float, n: float, params: EntropyFitParams = DEFAULT_ENTROPY_PARAMS,
                          *, xtol: float = 1e-14) -> float:
    """Invert the map on its monotone branch by bracketed root finding."""
    low, high = entropy_bracket(n, params)
    if not low <= h <= high:
        raise OutOfRange(f"loss {h} outside invertible range [{low}, {high}] for n={n}")
    a_lo, a_hi = 1.0 / n + 1e-6, 1.0 - 1e-6
    if h == high:
        return a_lo
    if h == low:
        return a_hi

    def f(a):
        return entropy_from_accuracy(a, n, params) - h

    return float(brentq(f, a_lo, a_hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200))


def task_entropy(random_guess_error: float, n: float,
                 params: EntropyFitParams = DEFAULT_ENTROPY_PARAMS) -> float:
    """No-information baseline loss of a task.

    The smaller of the loss at the survey's random-guess accuracy and the
    loss at uniform guessing.
    """
    if not 0 <= random_guess_error < 1:
        raise DomainError(f"random-guess error must be in [0, 1), got {random_guess_error}")
    return min(entropy_from_accuracy(1.0 - random_guess_error, n, params),
               entropy_from_accuracy(1.0 / n, n, params))


def required_accuracy_per_subtask(required_accuracy: float, num_subtasks: int) -> float:
    """Split the task-level error rate evenly across subtasks.

    ``1 - a_sub = (1 - a_task) / m``, a first-order approximation of
    requiring all ``m`` subtasks to be correct.
    """
    if not num_subtasks >= 1:
        raise OutOfRange("num_subtasks must be >= 1")
    if not 0 < required_accuracy <= 1:
        raise OutOfRange("required accuracy must be in (0, 1]")
    return 1.0 - (1.0 - required_accuracy) / num_subtasks


def required_entropy(spec: AccuracySpec, params: EntropyFitParams = DEFAULT_ENTROPY_PARAMS) -> float:
    """Loss the model must reach for each subtask to meet the requirement."""
    a_sub = required_accuracy_per_subtask(spec.required_accuracy, spec.num_subtasks)
    return entropy_from_accuracy(a_sub, spec.n_class, params)


def fit_entropy_map(a, n, h):
    """Ordinary least squares fit of the map's coefficients.

    Returns
    -------
    params : EntropyFitParams
        Unvalidated coefficients.
    r2 : float
        In-sample coefficient of determination.
    """
    X = design_matrix(a, n)
    h = np.asarray(h, dtype=float)
    coef, *_ = np.linalg.lstsq(X, h, rcond=None)
    resid = h - X @ coef
    r2 = 1.0 - np.sum(resid ** 2) / np.sum((h - h.mean()) ** 2)
    return EntropyFitParams.from_array(coef, validate=False), float(r2)


def calibrated_entropy(a, n):
    """Loss of a calibrated classifier that puts ``a`` on its top class.

    The remaining ``1 - a`` is spread evenly over the other ``n - 1``
    classes, so ``H = -a ln a - (1 - a) ln((1 - a) / (n - 1))``.
    """
    a = np.asarray(a, dtype=float)
    n = np.asarray(n, dtype=float)
    rest = 1.0 - a
    h = -_xlogx(a) - _xlogx(rest) + rest * np.log(n - 1.0)
    return float(h) if h.ndim == 0 else h


def calibrated_accuracy(h: float, n: float) -> float:
    """Inverse of :func:`calibrated_entropy` on ``[1/n, 1]``.

    Raises
    ------
    OutOfRange
        If ``h`` is negative or above ``ln n``.
    """
    if not 0 <= h <= math.log(n):
        raise OutOfRange(f"loss {h} outside [0, ln {n}]")
    if h == 0:
        return 1.0
    return float(brentq(lambda a: calibrated_entropy(a, n) - h, 1.0 / n, 1.0, xtol=1e-15))


def calibrated_triples(losses, n):
    """``(a, n, h)`` arrays for the losses a calibrated classifier can reach.

    Losses at or above ``ln n`` (no better than uniform) are dropped.
    """
    losses = np.asarray(losses, dtype=float)
    n = np.broadcast_to(np.asarray(n, dtype=float), losses.shape)
    keep = (losses >= 0) & (losses < np.log(n))
    a = np.array([calibrated_accuracy(h, k) for h, k in zip(losses[keep], n[keep])])
    return a, n[keep].copy(), losses[keep].copy()


class EntropyMapRegressor(RegressorMixin, BaseEstimator):
    """OLS estimator for the accuracy-to-loss map.

    ``X`` has columns ``accuracy, n_class``; ``y`` is the loss in nats.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("X must have 2 columns: accuracy, n_class")
        self.params_, self.r2_ = fit_entropy_map(X[:, 0], X[:, 1], y)
        self.coef_ = self.params_.to_array()
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return design_matrix(X[:, 0], X[:, 1]) @ self.coef_
