"""Closed-form linear algebra for the Monge metric ``G = I + alpha^2 g g^T``.

``g`` is the gradient of the log-density. Every operation here costs at most
one Hessian-vector product; nothing materialises a D x D matrix except
:func:`metric_tensor`, :func:`christoffel` and :meth:`RankOneMetric.dense`,
which exist for inspection and testing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from mongelmc.errors import DegenerateDenominator, DegenerateDeterminant, NonFiniteEvaluation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MongeConfig:
    """Embedding scale and numerical floors.

    Attributes:
        alpha: Scale of the log-density coordinate in the embedding; 0 gives
            the Euclidean metric.
        grad_norm_floor: Below this squared gradient norm the square root of
            the inverse metric uses its small-gradient limit.
        denom_floor: Smallest admissible magnitude for rank-one inverse
            denominators and shifted determinants.
    """

    alpha: float = 1.0
    grad_norm_floor: float = 1e-10
    denom_floor: float = 1e-12

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not (self.grad_norm_floor > 0 and self.denom_floor > 0):
            raise ValueError("floors must be positive")

    @property
    def alpha2(self) -> float:
        return self.alpha * self.alpha


@dataclass(frozen=True)
class DifferentiablePoint:
    """Log-density and its first two derivatives cached at one position."""

    x: np.ndarray
    ell: float
    grad: np.ndarray
    hess: np.ndarray
    grad_sq: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "grad_sq", float(self.grad @ self.grad))

    @property
    def dimension(self) -> int:
        return self.x.shape[0]

    def l_alpha(self, alpha: float) -> float:
        """``1 + alpha^2 |grad|^2``: determinant and top eigenvalue of G."""
        return 1.0 + alpha * alpha * self.grad_sq


def evaluate_point(target, x) -> DifferentiablePoint:
    """Evaluate ``target`` at ``x`` and cache the result.

    The Hessian is symmetrised. Raises :class:`NonFiniteEvaluation` when any
    returned value is NaN or infinite.
    """
    x = np.array(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != target.dimension:
        raise ValueError(f"expected a vector of length {target.dimension}, got shape {x.shape}")
    try:
        ell, grad, hess = target.evaluate(x)
    except (OverflowError, ZeroDivisionError, FloatingPointError) as exc:
        # plain-float arithmetic inside a target raises instead of returning inf
        raise NonFiniteEvaluation(f"arithmetic failure at x={x}: {exc}") from exc
    ell = float(ell)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    if not (math.isfinite(ell) and np.isfinite(grad).all() and np.isfinite(hess).all()):
        raise NonFiniteEvaluation(f"non-finite log-density or derivatives at x={x}")
    hess = 0.5 * (hess + hess.T)
    return DifferentiablePoint(x, ell, grad, hess)


@dataclass(frozen=True)
class RankOneMetric:
    """``base_scale * I + alpha^2 * outer_vector outer_vector^T`` in factored form."""

    outer_vector: np.ndarray
    alpha: float
    base_scale: float = 1.0

    def dense(self) -> np.ndarray:
        u = self.outer_vector
        return self.base_scale * np.eye(u.shape[0]) + self.alpha ** 2 * np.outer(u, u)

    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues from the rank-one structure."""
        d = self.outer_vector.shape[0]
        top = self.base_scale + self.alpha ** 2 * float(self.outer_vector @ self.outer_vector)
        return np.array([self.base_scale] * (d - 1) + [top])


def rank_one_metric(pt: DifferentiablePoint, cfg: MongeConfig) -> RankOneMetric:
    return RankOneMetric(pt.grad, cfg.alpha)


def metric_tensor(pt: DifferentiablePoint, cfg: MongeConfig) -> np.ndarray:
    return rank_one_metric(pt, cfg).dense()


def metric_inverse_apply(pt: DifferentiablePoint, cfg: MongeConfig, w) -> np.ndarray:
    """Apply ``G^{-1} = I - alpha^2 g g^T / L_alpha`` to ``w`` (Sherman-Morrison)."""
    w = np.asarray(w, dtype=float)
    if cfg.alpha == 0.0:
        return w.copy()
    g = pt.grad
    return w - (cfg.alpha2 * float(g @ w) / pt.l_alpha(cfg.alpha)) * g


def metric_log_det(pt: DifferentiablePoint, cfg: MongeConfig) -> float:
    return math.log1p(cfg.alpha2 * pt.grad_sq)


def inverse_sqrt_coefficient(grad_sq: float, cfg: MongeConfig) -> float:
    """Scalar ``c`` with ``(I + c g g^T)^2 = G^{-1}``.

    The exact expression ``(L^{-1/2} - 1) / |g|^2`` is 0/0 at a mode, so below
    ``grad_norm_floor`` the limit ``-alpha^2 / 2`` is returned instead. Above
    it the equivalent ``-alpha^2 / (sqrt(L) (1 + sqrt(L)))`` is used, which
    avoids cancellation for small gradients.
    """
    if grad_sq < cfg.grad_norm_floor:
        return -0.5 * cfg.alpha2
    root = math.sqrt(1.0 + cfg.alpha2 * grad_sq)
    return -cfg.alpha2 / (root * (1.0 + root))


def metric_inverse_sqrt_apply(pt: DifferentiablePoint, cfg: MongeConfig, z) -> np.ndarray:
    """Apply the symmetric square root ``A`` of ``G^{-1}`` to ``z``.

    ``z`` may also be an ``(N, D)`` batch, transformed row by row.
    """
    z = np.asarray(z, dtype=float)
    if cfg.alpha == 0.0:
        return z.copy()
    g = pt.grad
    return z + inverse_sqrt_coefficient(pt.grad_sq, cfg) * np.multiply.outer(z @ g, g)


def grad_log_det(pt: DifferentiablePoint, cfg: MongeConfig) -> np.ndarray:
    """Gradient of ``log det G``, equal to ``(2 alpha^2 / L_alpha) H g``."""
    if cfg.alpha == 0.0:
        return np.zeros_like(pt.grad)
    return (2.0 * cfg.alpha2 / pt.l_alpha(cfg.alpha)) * (pt.hess @ pt.grad)


def christoffel(pt: DifferentiablePoint, cfg: MongeConfig, k: int) -> np.ndarray:
    """Christoffel matrix ``Gamma^k_{ij}``; ``k`` is a 0-based index."""
    if not 0 <= k < pt.dimension:
        raise IndexError(f"k={k} out of range for dimension {pt.dimension}")
    scale = cfg.alpha2 / pt.l_alpha(cfg.alpha) * pt.grad[k]
    return scale * pt.hess


def omega_factors(pt: DifferentiablePoint, v, cfg: MongeConfig):
    """Factors ``(s, a, b)`` with ``Omega(x, v) = s * outer(a, b)``.

    ``Omega_ij = sum_k v_k Gamma^i_{kj}`` collapses to
    ``alpha^2 / L_alpha * g (H v)^T``.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != pt.grad.shape:
        raise ValueError("velocity and gradient lengths differ")
    return cfg.alpha2 / pt.l_alpha(cfg.alpha), pt.grad, pt.hess @ v


def shifted_log_det(pt: DifferentiablePoint, v, cfg: MongeConfig, sign: int, eps: float) -> float:
    """``log |det(G + sign * eps/2 * G Omega)| = log |L_alpha + sign * eps alpha^2 / 2 <g, H v>|``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if cfg.alpha == 0.0:
        return 0.0
    v = np.asarray(v, dtype=float)
    arg = pt.l_alpha(cfg.alpha) + sign * 0.5 * eps * cfg.alpha2 * float(pt.grad @ (pt.hess @ v))
    if abs(arg) < cfg.denom_floor:
        raise DegenerateDeterminant(f"shifted determinant {arg!r} below floor")
    if arg < 0:
        logger.debug("negative shifted determinant %g; using its magnitude", arg)
    return math.log(abs(arg))


def rank_one_solve_hv(pt: DifferentiablePoint, hv: np.ndarray, cfg: MongeConfig,
                      eps: float, w: np.ndarray) -> np.ndarray:
    """:func:`rank_one_system_solve` with ``H v`` supplied by the caller."""
    if cfg.alpha == 0.0:
        return w.copy()
    g = pt.grad
    b = g + (0.5 * eps) * hv
    a2 = cfg.alpha2
    # alpha^2 * d, with d = b.g + 1/alpha^2; keeps 1/alpha^2 out of the arithmetic
    scaled = a2 * float(b @ g) + 1.0
    if abs(scaled) < cfg.denom_floor * a2:
        raise DegenerateDenominator(f"rank-one denominator {scaled / a2!r} below floor")
    return w - (a2 * float(b @ w) / scaled) * g


def rank_one_system_solve(pt: DifferentiablePoint, v, cfg: MongeConfig, eps: float, w) -> np.ndarray:
    """Solve ``(G + eps/2 * G Omega(x, v)) y = w`` in O(D) after one Hessian-vector product.

    The system matrix is ``I + alpha^2 g (g + eps/2 H v)^T``; its inverse
    follows from Sherman-Morrison.

    Raises:
        DegenerateDenominator: if ``|(g + eps/2 H v).g + 1/alpha^2|`` is below
            ``cfg.denom_floor``.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if cfg.alpha == 0.0:
        return w.copy()
    return rank_one_solve_hv(pt, pt.hess @ v, cfg, eps, w)
