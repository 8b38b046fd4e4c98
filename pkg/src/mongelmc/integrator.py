"""Explicit Lagrangian integrator in the Monge metric, plus the Euclidean leapfrog.

One LMC step is velocity half-step, position full step, velocity half-step.
The map is not volume preserving, so every step contributes four shifted
log-determinants to the Jacobian correction used at acceptance time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from mongelmc.errors import (
    DegenerateDeterminant,
    DivergenceError,
    NonFiniteEnergy,
    NonFiniteEvaluation,
)
from mongelmc.metric import (
    DifferentiablePoint,
    MongeConfig,
    evaluate_point,
    rank_one_solve_hv,
)

DEFAULT_DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class IntegratorConfig:
    eps: float
    l_f: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if int(self.l_f) != self.l_f or self.l_f < 1:
            raise ValueError(f"l_f must be a positive integer, got {self.l_f}")


@dataclass(frozen=True)
class PhaseState:
    point: DifferentiablePoint
    velocity: np.ndarray

    def __post_init__(self):
        if self.velocity.shape != self.point.x.shape:
            raise ValueError("velocity and position lengths differ")
        if not np.isfinite(self.velocity).all():
            raise NonFiniteEvaluation("non-finite velocity")


@dataclass(frozen=True)
class EuclideanPhaseState:
    position: np.ndarray
    momentum: np.ndarray


@dataclass
class TrajectoryResult:
    """Outcome of one simulated trajectory.

    When ``diverged`` is set the energies and Jacobian term are whatever was
    reached before the failure and must not be used for acceptance.
    """

    final_state: Optional[PhaseState]
    log_det_jacobian: float
    energy_start: float
    energy_end: float
    diverged: bool = False
    reason: str = ""
    trace: Optional[list] = field(default=None, repr=False)

    @property
    def energy_change(self) -> float:
        return self.energy_end - self.energy_start


def energy(state: PhaseState, cfg: MongeConfig) -> float:
    """``-ell - log(L_alpha)/2 + |v|^2/2 + alpha^2 <g, v>^2 / 2``."""
    pt, v = state.point, state.velocity
    a2 = cfg.alpha2
    gv = float(pt.grad @ v)
    e = -pt.ell - 0.5 * math.log1p(a2 * pt.grad_sq) + 0.5 * float(v @ v) + 0.5 * a2 * gv * gv
    if not math.isfinite(e):
        raise NonFiniteEnergy(f"energy is {e}")
    return e


def hamiltonian(state: PhaseState, cfg: MongeConfig) -> float:
    """Quantity conserved by the continuous dynamics.

    ``-ell + log(L_alpha)/2 + v^T G v / 2``: the potential ``phi`` carries
    ``+log det G / 2``. It differs from :func:`energy` by ``log L_alpha``,
    which is the change of variables from momentum to velocity. Acceptance
    uses :func:`energy` together with the Jacobian term, while conservation
    checks use this.
    """
    pt, v = state.point, state.velocity
    a2 = cfg.alpha2
    gv = float(pt.grad @ v)
    h = -pt.ell + 0.5 * math.log1p(a2 * pt.grad_sq) + 0.5 * float(v @ v) + 0.5 * a2 * gv * gv
    if not math.isfinite(h):
        raise NonFiniteEnergy(f"hamiltonian is {h}")
    return h


def _half_step(pt: DifferentiablePoint, v: np.ndarray, hv: np.ndarray,
               cfg: MongeConfig, eps: float) -> np.ndarray:
    g = pt.grad
    if cfg.alpha == 0.0:
        return v + (0.5 * eps) * g
    a2 = cfg.alpha2
    rhs = ((a2 * float(g @ v) + 0.5 * eps) * g
           - (eps * a2 / (2.0 * pt.l_alpha(cfg.alpha))) * (pt.hess @ g)
           + v)
    return rank_one_solve_hv(pt, hv, cfg, eps, rhs)


def velocity_half_step(state: PhaseState, cfg: MongeConfig, eps: float) -> np.ndarray:
    """Half-step velocity update, free of dense solves.

    Equivalent to ``(G + eps/2 * G Omega(x, v))^{-1} (G v - eps/2 grad phi)``
    with ``grad phi = -g + grad(log det G) / 2``. For ``alpha = 0`` this is
    exactly the Euclidean half-kick ``v + eps/2 * g``.
    """
    pt, v = state.point, state.velocity
    hv = pt.hess @ v if cfg.alpha != 0.0 else None
    return _half_step(pt, v, hv, cfg, eps)


def position_full_step(state: PhaseState, eps: float) -> np.ndarray:
    return state.point.x + eps * state.velocity


def _log_abs_factor(pt: DifferentiablePoint, hv: np.ndarray, cfg: MongeConfig,
                    eps: float, sign: float) -> float:
    # log|1 + sign * eps alpha^2 / (2 L) <g, H v>|; the L factors cancel in each ratio
    if cfg.alpha == 0.0:
        return 0.0
    arg = 1.0 + sign * eps * cfg.alpha2 / (2.0 * pt.l_alpha(cfg.alpha)) * float(pt.grad @ hv)
    if abs(arg) < cfg.denom_floor:
        raise DegenerateDeterminant(f"Jacobian factor {arg!r} below floor")
    return math.log(abs(arg))


def integrate_trajectory(target, start: PhaseState, mcfg: MongeConfig,
                         icfg: IntegratorConfig, record_trace: bool = False,
                         divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD,
                         ) -> TrajectoryResult:
    """Run ``icfg.l_f`` explicit LMC steps from ``start``.

    ``log_det_jacobian`` accumulates, per step,
    ``-log|1 + c <g, H v_n>| + log|1 - c <g, H v_half>|`` at ``x_n`` and the
    same pair at ``x_{n+1}`` with ``(v_half, v_{n+1})``, where
    ``c = eps alpha^2 / (2 L_alpha)``.

    Any :class:`DivergenceError` raised along the way, or an energy error
    larger than ``divergence_threshold``, ends the trajectory as divergent.
    """
    eps = icfg.eps
    pt, v = start.point, start.velocity
    trace = [pt.x.copy()] if record_trace else None
    e_start = energy(start, mcfg)
    log_det = 0.0
    euclid = mcfg.alpha == 0.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            for _ in range(icfg.l_f):
                if euclid:
                    v_half = v + (0.5 * eps) * pt.grad
                else:
                    hv = pt.hess @ v
                    log_det -= _log_abs_factor(pt, hv, mcfg, eps, 1.0)
                    v_half = _half_step(pt, v, hv, mcfg, eps)
                    log_det += _log_abs_factor(pt, pt.hess @ v_half, mcfg, eps, -1.0)

                pt = evaluate_point(target, pt.x + eps * v_half)

                if euclid:
                    v = v_half + (0.5 * eps) * pt.grad
                else:
                    hv = pt.hess @ v_half
                    log_det -= _log_abs_factor(pt, hv, mcfg, eps, 1.0)
                    v = _half_step(pt, v_half, hv, mcfg, eps)
                    log_det += _log_abs_factor(pt, pt.hess @ v, mcfg, eps, -1.0)
                if not np.isfinite(v).all():
                    raise NonFiniteEvaluation("non-finite velocity")
                if trace is not None:
                    trace.append(pt.x.copy())
            final = PhaseState(pt, v)
            e_end = energy(final, mcfg)
        except DivergenceError as exc:
            return TrajectoryResult(None, log_det, e_start, math.nan, True,
                                    f"{type(exc).__name__}: {exc}", trace)
    if abs(e_end - e_start) > divergence_threshold:
        return TrajectoryResult(final, log_det, e_start, e_end, True,
                                f"energy error {e_end - e_start:.3g} exceeds threshold", trace)
    return TrajectoryResult(final, log_det, e_start, e_end, False, "", trace)


def geodesic_trace(target, start: PhaseState, mcfg: MongeConfig, icfg: IntegratorConfig,
                   divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD):
    """Positions along the Lagrangian flow from ``start``, with the energy drift.

    Returns ``(positions, drift, result)`` where ``positions`` is an
    ``(n + 1, D)`` array of the steps completed and ``drift`` is the change
    in :func:`hamiltonian` over the path (NaN if the trajectory diverged).
    """
    result = integrate_trajectory(target, start, mcfg, icfg, record_trace=True,
                                  divergence_threshold=divergence_threshold)
    drift = math.nan
    if result.final_state is not None:
        drift = hamiltonian(result.final_state, mcfg) - hamiltonian(start, mcfg)
    return np.array(result.trace), drift, result


def mh_accept(e_start: float, e_end: float, log_det_jacobian: float, u: float) -> bool:
    """Metropolis-Hastings test with the Jacobian correction: ``log u < -dE + log|det J|``."""
    log_u = math.log(u) if u > 0.0 else -math.inf
    return log_u < (e_start - e_end) + log_det_jacobian


def euclidean_energy(target, state: EuclideanPhaseState) -> float:
    ell = target.evaluate(state.position)[0]
    return -ell + 0.5 * float(state.momentum @ state.momentum)


def euclidean_leapfrog(target, start: EuclideanPhaseState, icfg: IntegratorConfig,
                       record_trace: bool = False):
    """Standard leapfrog with unit mass matrix.

    Returns the final :class:`EuclideanPhaseState`, or ``(state, trace)`` when
    ``record_trace`` is set. Non-finite values raise
    :class:`NonFiniteEvaluation`.
    """
    eps = icfg.eps
    pt = evaluate_point(target, start.position)
    p = np.array(start.momentum, dtype=float)
    trace = [pt.x.copy()] if record_trace else None
    for _ in range(icfg.l_f):
        p_half = p + (0.5 * eps) * pt.grad
        pt = evaluate_point(target, pt.x + eps * p_half)
        p = p_half + (0.5 * eps) * pt.grad
        if not np.isfinite(p).all():
            raise NonFiniteEvaluation("non-finite momentum")
        if trace is not None:
            trace.append(pt.x.copy())
    final = EuclideanPhaseState(pt.x, p)
    return (final, trace) if record_trace else final
