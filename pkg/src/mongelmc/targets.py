"""Target densities with analytic log-density, gradient and Hessian.

Each target exposes ``log_density``, ``gradient`` and ``hessian`` plus a fused
``evaluate`` that returns all three and shares intermediate work. The
integrator only ever calls ``evaluate``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mongelmc.errors import NonFiniteEvaluation, NonPositiveDefinite, OriginSingularity

LOG_2PI = math.log(2.0 * math.pi)

# Observations for the banana target: 10 draws from N(1, 0.5), i.e. the model
# at x1 = 0, x2 = 1, generated with Generator(Philox(20240516)).
BANANA_Y = np.array([
    1.7482006683747344, 0.6838018202066298, 1.1918035989516254,
    1.5925731625959507, 0.2894817790876847, 1.9292783647636673,
    0.18409577857827597, 1.9681010811845674, 0.963575735458003,
    0.1399296388537199,
])


class TargetDensity(ABC):
    """Unnormalised log-density on R^D with analytic derivatives."""

    name = "target"

    @property
    @abstractmethod
    def dimension(self) -> int:
        ...

    @abstractmethod
    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """Return ``(log_density, gradient, hessian)`` at ``x``."""

    def log_density(self, x) -> float:
        return self.evaluate(np.asarray(x, dtype=float))[0]

    def gradient(self, x) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float))[1]

    def hessian(self, x) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float))[2]


def _spd_inverse(covariance) -> tuple[np.ndarray, np.ndarray, float]:
    cov = np.array(covariance, dtype=float, ndmin=2)
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, rtol=1e-12, atol=0.0):
        raise NonPositiveDefinite("covariance must be a symmetric square matrix")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite("covariance is not positive-definite") from None
    inv_chol = np.linalg.inv(chol)
    precision = inv_chol.T @ inv_chol
    precision = 0.5 * (precision + precision.T)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return cov, precision, log_det


class GaussianTarget(TargetDensity):
    name = "gaussian"

    def __init__(self, mean, covariance):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.covariance, self.precision, log_det = _spd_inverse(covariance)
        if self.covariance.shape[0] != self.mean.shape[0]:
            raise ValueError("mean and covariance dimensions differ")
        self._const = -0.5 * (self.mean.shape[0] * LOG_2PI + log_det)
        self._neg_precision = -self.precision

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    def evaluate(self, x):
        grad = self._neg_precision @ (x - self.mean)
        ell = self._const + 0.5 * float((x - self.mean) @ grad)
        return ell, grad, self._neg_precision


def gaussian_target(mean, covariance) -> GaussianTarget:
    """Multivariate normal N(mean, covariance).

    Raises:
        NonPositiveDefinite: if ``covariance`` is not symmetric positive-definite.
    """
    return GaussianTarget(mean, covariance)


def _softplus(a: float) -> float:
    return a + math.log1p(math.exp(-a)) if a > 0 else math.log1p(math.exp(a))


def _sigmoid(a: float) -> float:
    if a >= 0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


class FunnelTarget(TargetDensity):
    """Funnel over ``(x_1..x_D, a)``; ``softplus(a)`` is the variance of each x_i."""

    name = "funnel"

    def __init__(self, dim_x: int, mu: float = 0.0, sigma2_a: float = 15.0):
        if dim_x < 1:
            raise ValueError("dim_x must be at least 1")
        if sigma2_a <= 0:
            raise ValueError("sigma2_a must be positive")
        self.dim_x = int(dim_x)
        self.mu = float(mu)
        self.sigma2_a = float(sigma2_a)
        self._const_a = -0.5 * (LOG_2PI + math.log(self.sigma2_a))

    @property
    def dimension(self) -> int:
        return self.dim_x + 1

    def evaluate(self, x):
        d = self.dim_x
        xs = x[:d]
        a = float(x[d])
        s = _softplus(a)
        if s == 0.0:
            raise NonFiniteEvaluation(f"softplus({a}) underflows to zero")
        q = _sigmoid(a)
        # q / s tends to 1 as a -> -inf; using it avoids powers of a tiny s
        r = q / s
        sq = float(xs @ xs)
        ell = (-0.5 * d * (LOG_2PI + math.log(s)) - 0.5 * sq / s
               + self._const_a - 0.5 * (a - self.mu) ** 2 / self.sigma2_a)

        grad = np.empty(d + 1)
        grad[:d] = -xs / s
        grad[d] = r * (0.5 * sq / s - 0.5 * d) - (a - self.mu) / self.sigma2_a

        hess = np.zeros((d + 1, d + 1))
        idx = np.arange(d)
        hess[idx, idx] = -1.0 / s
        cross = xs * (r / s)
        hess[:d, d] = cross
        hess[d, :d] = cross
        hess[d, d] = (-0.5 * d * (r * (1.0 - q) - r * r)
                      + 0.5 * sq * (r * (1.0 - q) - 2.0 * r * r) / s
                      - 1.0 / self.sigma2_a)
        return ell, grad, hess

    def marginal_log_pdf(self, a):
        """Exact log-density of the ``a`` marginal, N(mu, sigma2_a)."""
        a = np.asarray(a, dtype=float)
        return self._const_a - 0.5 * (a - self.mu) ** 2 / self.sigma2_a


def funnel_target(dim_x: int, mu: float = 0.0, sigma2_a: float = 15.0) -> FunnelTarget:
    return FunnelTarget(dim_x, mu, sigma2_a)


class BananaTarget(TargetDensity):
    r"""Posterior of (x1, x2) with y_i ~ N(x1 + x2^2, sigma2_y), x ~ N(0, sigma2 I)."""

    name = "banana"

    def __init__(self, y_data=BANANA_Y, sigma2_y: float = 0.5, sigma2: float = 0.5):
        if sigma2_y <= 0 or sigma2 <= 0:
            raise ValueError("variances must be positive")
        self.y_data = np.atleast_1d(np.asarray(y_data, dtype=float))
        self.sigma2_y = float(sigma2_y)
        self.sigma2 = float(sigma2)
        self._n = self.y_data.shape[0]
        self._ysum = float(self.y_data.sum())

    @property
    def dimension(self) -> int:
        return 2

    def evaluate(self, x):
        x1, x2 = float(x[0]), float(x[1])
        r = self.y_data - (x1 + x2 * x2)
        rsum = self._ysum - self._n * (x1 + x2 * x2)
        sy, s = self.sigma2_y, self.sigma2
        ell = -0.5 * float(r @ r) / sy - 0.5 * (x1 * x1 + x2 * x2) / s
        grad = np.array([rsum / sy - x1 / s, 2.0 * x2 * rsum / sy - x2 / s])
        h12 = -2.0 * self._n * x2 / sy
        hess = np.array([
            [-self._n / sy - 1.0 / s, h12],
            [h12, (2.0 * rsum - 4.0 * self._n * x2 * x2) / sy - 1.0 / s],
        ])
        return ell, grad, hess


def banana_target(y_data=BANANA_Y, sigma2_y: float = 0.5, sigma2: float = 0.5) -> BananaTarget:
    return BananaTarget(y_data, sigma2_y, sigma2)


class RingTarget(TargetDensity):
    """Radius ~ N(mu, sigma2), angle uniform, written in Cartesian coordinates."""

    name = "ring"
    origin_tol = 1e-12

    def __init__(self, mu: float = 12.0, sigma2: float = 0.12):
        if mu <= 0 or sigma2 <= 0:
            raise ValueError("mu and sigma2 must be positive")
        self.mu = float(mu)
        self.sigma2 = float(sigma2)
        self._const = -LOG_2PI - 0.5 * (LOG_2PI + math.log(self.sigma2))

    @property
    def dimension(self) -> int:
        return 2

    def evaluate(self, x):
        r = math.hypot(float(x[0]), float(x[1]))
        if r < self.origin_tol:
            raise OriginSingularity("ring density is singular at the origin")
        dev = r - self.mu
        ell = self._const - 0.5 * dev * dev / self.sigma2 - math.log(r)
        d1 = -dev / self.sigma2 - 1.0 / r
        d2 = -1.0 / self.sigma2 + 1.0 / (r * r)
        u = x / r
        grad = d1 * u
        uu = np.outer(u, u)
        hess = d2 * uu + (d1 / r) * (np.eye(2) - uu)
        return ell, grad, hess


def ring_target(mu: float = 12.0, sigma2: float = 0.12) -> RingTarget:
    return RingTarget(mu, sigma2)


SQUIGGLE_COVARIANCE = ((10.0, 0.01), (0.01, 0.001))


class SquiggleTarget(TargetDensity):
    """Gaussian in the warped coordinates ``(x1, x2 + sin(a x1))``."""

    name = "squiggle"

    def __init__(self, a: float = 1.0, covariance=SQUIGGLE_COVARIANCE):
        if a < 0:
            raise ValueError("a must be non-negative")
        self.a = float(a)
        self.covariance, self.precision, log_det = _spd_inverse(covariance)
        if self.covariance.shape != (2, 2):
            raise ValueError("squiggle covariance must be 2x2")
        self._const = -0.5 * (2 * LOG_2PI + log_det)

    @property
    def dimension(self) -> int:
        return 2

    def evaluate(self, x):
        a = self.a
        x1 = float(x[0])
        sin_ax, cos_ax = math.sin(a * x1), math.cos(a * x1)
        y = np.array([x1, float(x[1]) + sin_ax])
        py = self.precision @ y
        ell = self._const - 0.5 * float(y @ py)
        jac = np.array([[1.0, 0.0], [a * cos_ax, 1.0]])
        grad = -(jac.T @ py)
        hess = -(jac.T @ self.precision @ jac)
        hess[0, 0] += py[1] * a * a * sin_ax
        return ell, grad, hess


def squiggle_target(a: float = 1.0, covariance=SQUIGGLE_COVARIANCE) -> SquiggleTarget:
    return SquiggleTarget(a, covariance)


@dataclass(frozen=True)
class ClassificationDataset:
    """Design matrix (intercept column included) and binary labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.array(self.features, dtype=float, ndmin=2)
        labels = np.asarray(self.labels, dtype=float).ravel()
        if features.shape[0] < 1:
            raise ValueError("dataset needs at least one observation")
        if features.shape[0] != labels.shape[0]:
            raise ValueError("features and labels have different row counts")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if not np.all((labels == 0.0) | (labels == 1.0)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_file(cls, path, *, delimiter: str = ",", header: bool = False,
                  intercept: bool = True) -> ClassificationDataset:
        """Load rows of ``features..., label`` from delimited text.

        Blank delimiter means any whitespace.
        """
        raw = np.loadtxt(Path(path), delimiter=delimiter or None,
                         skiprows=1 if header else 0, ndmin=2)
        if raw.shape[1] < 2:
            raise ValueError(f"{path}: need at least one feature column and a label column")
        features, labels = raw[:, :-1], raw[:, -1]
        if intercept:
            features = np.column_stack([np.ones(features.shape[0]), features])
        return cls(features, labels)


class LogisticRegressionTarget(TargetDensity):
    """Bayesian logistic regression with an isotropic Gaussian prior."""

    name = "logistic"

    def __init__(self, data: ClassificationDataset, prior_var: float = 100.0):
        if prior_var <= 0:
            raise ValueError("prior_var must be positive")
        self.data = data
        self.prior_var = float(prior_var)
        self._X = data.features
        self._y = data.labels
        self._prior_prec = np.eye(self._X.shape[1]) / self.prior_var

    @property
    def dimension(self) -> int:
        return self._X.shape[1]

    def evaluate(self, theta):
        X = self._X
        eta = X @ theta
        # sigma(eta) and sigma(eta)(1 - sigma(eta)) without overflow
        p = np.exp(-np.logaddexp(0.0, -eta))
        w = np.exp(-np.logaddexp(0.0, -eta) - np.logaddexp(0.0, eta))
        ell = (float(self._y @ eta - np.logaddexp(0.0, eta).sum())
               - 0.5 * float(theta @ theta) / self.prior_var)
        grad = X.T @ (self._y - p) - theta / self.prior_var
        hess = -(X.T * w) @ X - self._prior_prec
        return ell, grad, hess


def logistic_regression_target(data: ClassificationDataset,
                               prior_var: float = 100.0) -> LogisticRegressionTarget:
    return LogisticRegressionTarget(data, prior_var)


def synthetic_classification(n: int, dim: int, seed: int) -> ClassificationDataset:
    """Draw a logistic-model dataset with an intercept plus ``dim - 1`` features."""
    rng = np.random.Generator(np.random.Philox(seed))
    feats = rng.standard_normal((n, dim - 1))
    X = np.column_stack([np.ones(n), feats])
    theta = rng.normal(0.0, 1.0, dim)
    p = 1.0 / (1.0 + np.exp(-(X @ theta)))
    y = (rng.random(n) < p).astype(float)
    return ClassificationDataset(X, y)


def finite_difference_derivatives(target: TargetDensity, x, h: float = 1e-5):
    """Central-difference gradient and Hessian of ``target.log_density``.

    The step along coordinate ``i`` is ``h * max(1, |x_i|)``. The Hessian
    uses the four-point mixed stencil and is returned symmetrised.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    steps = h * np.maximum(1.0, np.abs(x))
    f = target.log_density
    f0 = f(x)
    grad = np.empty(d)
    hess = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = steps[i]
        fp, fm = f(x + ei), f(x - ei)
        grad[i] = (fp - fm) / (2 * steps[i])
        hess[i, i] = (fp - 2 * f0 + fm) / steps[i] ** 2
        for j in range(i):
            ej = np.zeros(d)
            ej[j] = steps[j]
            val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej))
            hess[i, j] = hess[j, i] = val / (4 * steps[i] * steps[j])
    return grad, hess


def finite_difference_hessian_from_gradient(target: TargetDensity, x, h: float = 1e-5):
    """Hessian as central differences of the analytic gradient."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    hess = np.empty((d, d))
    for i in range(d):
        step = h * max(1.0, abs(x[i]))
        e = np.zeros(d)
        e[i] = step
        hess[:, i] = (target.gradient(x + e) - target.gradient(x - e)) / (2 * step)
    return 0.5 * (hess + hess.T)


REGISTRY = {
    "gaussian": GaussianTarget,
    "funnel": FunnelTarget,
    "banana": BananaTarget,
    "ring": RingTarget,
    "squiggle": SquiggleTarget,
    "logistic": LogisticRegressionTarget,
}
