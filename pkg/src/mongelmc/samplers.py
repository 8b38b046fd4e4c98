"""MCMC chains: LMC in the Monge metric and Euclidean HMC."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from mongelmc.errors import DivergenceError, InitialPointInvalid
from mongelmc.integrator import (
    DEFAULT_DIVERGENCE_THRESHOLD,
    IntegratorConfig,
    PhaseState,
    integrate_trajectory,
    mh_accept,
)
from mongelmc.metric import (
    DifferentiablePoint,
    MongeConfig,
    evaluate_point,
    metric_inverse_sqrt_apply,
)

logger = logging.getLogger(__name__)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator; distinct seeds give independent streams."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SamplerConfig:
    alpha: float = 1.0
    eps: float = 0.1
    l_f: int = 10
    n_samples: int = 1000
    warmup: int = 0
    seed: int = 0
    divergence_energy_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if int(self.l_f) != self.l_f or self.l_f < 1:
            raise ValueError("l_f must be a positive integer")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValueError("n_samples must be a positive integer")
        if int(self.warmup) != self.warmup or self.warmup < 0:
            raise ValueError("warmup must be a non-negative integer")
        if not self.divergence_energy_threshold > 0:
            raise ValueError("divergence_energy_threshold must be positive")

    def monge(self) -> MongeConfig:
        return MongeConfig(alpha=self.alpha)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(eps=self.eps, l_f=self.l_f)


@dataclass
class Chain:
    """Post-warmup output of one chain.

    ``energies`` holds ``(E_start, E_end)`` per transition, with NaN for
    ``E_end`` on divergent transitions. ``accept_prob`` is
    ``min(1, exp(log ratio))`` (0 for divergences).
    """

    samples: np.ndarray
    accepted: np.ndarray
    energies: np.ndarray
    accept_prob: np.ndarray
    divergence_count: int = 0
    divergent: np.ndarray = field(default=None, repr=False)
    wall_time: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))


def sample_velocity(pt: DifferentiablePoint, cfg: MongeConfig, rng) -> np.ndarray:
    """Draw ``v ~ N(0, G^{-1})`` as ``sqrt(G^{-1}) z``."""
    z = rng.standard_normal(pt.dimension)
    return metric_inverse_sqrt_apply(pt, cfg, z)


def _initial_point(target, x0) -> DifferentiablePoint:
    try:
        return evaluate_point(target, x0)
    except DivergenceError as exc:
        raise InitialPointInvalid(f"cannot start a chain at {x0}: {exc}") from exc


class _Recorder:
    def __init__(self, cfg: SamplerConfig, dim: int):
        n = cfg.n_samples
        self.warmup = cfg.warmup
        self.samples = np.empty((n, dim))
        self.accepted = np.zeros(n, dtype=bool)
        self.divergent = np.zeros(n, dtype=bool)
        self.energies = np.full((n, 2), np.nan)
        self.accept_prob = np.zeros(n)

    def record(self, it, x, accepted, diverged, e0, e1, prob):
        i = it - self.warmup
        if i < 0:
            return
        self.samples[i] = x
        self.accepted[i] = accepted
        self.divergent[i] = diverged
        self.energies[i] = (e0, e1)
        self.accept_prob[i] = prob

    def finish(self, wall_time) -> Chain:
        count = int(self.divergent.sum())
        n = self.samples.shape[0]
        if count > 0.01 * n:
            logger.warning("%d of %d transitions diverged (%.1f%%)", count, n, 100.0 * count / n)
        return Chain(self.samples, self.accepted, self.energies, self.accept_prob,
                     count, self.divergent, wall_time)


def _accept_prob(log_ratio: float) -> float:
    return 1.0 if log_ratio >= 0 else math.exp(log_ratio)


def lmc_monge_sample(target, cfg: SamplerConfig, x0, rng=None) -> Chain:
    """Lagrangian Monte Carlo in the Monge metric.

    Each transition draws a fresh velocity from ``N(0, G^{-1}(x))``, runs
    the explicit integrator and applies the Jacobian-corrected MH test.
    Divergent proposals are rejected without drawing the uniform.

    Raises:
        InitialPointInvalid: if the log-density or its derivatives are not
            finite at ``x0``.
    """
    rng = make_rng(cfg.seed) if rng is None else rng
    mcfg, icfg = cfg.monge(), cfg.integrator()
    pt = _initial_point(target, x0)
    rec = _Recorder(cfg, pt.dimension)
    t0 = time.perf_counter()
    for it in range(cfg.warmup + cfg.n_samples):
        start = PhaseState(pt, sample_velocity(pt, mcfg, rng))
        res = integrate_trajectory(target, start, mcfg, icfg,
                                   divergence_threshold=cfg.divergence_energy_threshold)
        accepted, prob = False, 0.0
        if not res.diverged:
            prob = _accept_prob(res.energy_start - res.energy_end + res.log_det_jacobian)
            if mh_accept(res.energy_start, res.energy_end, res.log_det_jacobian, rng.random()):
                accepted = True
                pt = res.final_state.point
        rec.record(it, pt.x, accepted, res.diverged, res.energy_start,
                   math.nan if res.diverged else res.energy_end, prob)
    return rec.finish(time.perf_counter() - t0)


def hmc_euclidean_sample(target, cfg: SamplerConfig, x0, rng=None) -> Chain:
    """Hamiltonian Monte Carlo with identity mass matrix.

    ``cfg.alpha`` is ignored. With the same seed this consumes random numbers
    in the same order as :func:`lmc_monge_sample`, so the two chains coincide
    when ``alpha = 0``.
    """
    rng = make_rng(cfg.seed) if rng is None else rng
    eps, l_f = cfg.eps, cfg.l_f
    pt = _initial_point(target, x0)
    rec = _Recorder(cfg, pt.dimension)
    t0 = time.perf_counter()
    for it in range(cfg.warmup + cfg.n_samples):
        p = rng.standard_normal(pt.dimension)
        e0 = -pt.ell + 0.5 * float(p @ p)
        new = pt
        diverged = False
        e1 = math.nan
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            try:
                for _ in range(l_f):
                    p = p + (0.5 * eps) * new.grad
                    new = evaluate_point(target, new.x + eps * p)
                    p = p + (0.5 * eps) * new.grad
                e1 = -new.ell + 0.5 * float(p @ p)
                if not math.isfinite(e1) or abs(e1 - e0) > cfg.divergence_energy_threshold:
                    diverged = True
            except DivergenceError:
                diverged = True
        accepted, prob = False, 0.0
        if not diverged:
            prob = _accept_prob(e0 - e1)
            if mh_accept(e0, e1, 0.0, rng.random()):
                accepted = True
                pt = new
        rec.record(it, pt.x, accepted, diverged, e0, e1 if not diverged else math.nan, prob)
    return rec.finish(time.perf_counter() - t0)


SAMPLERS = {
    "lmc-monge": lmc_monge_sample,
    "hmc": hmc_euclidean_sample,
}
