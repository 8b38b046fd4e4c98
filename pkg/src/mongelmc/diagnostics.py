"""Chain diagnostics: autocorrelation, ESS, histogram KL, summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from mongelmc.errors import EmptyRange, ZeroVariance

ESS_POLICIES = ("first-negative", "paper-exact")


def _centred(series) -> np.ndarray:
    x = np.asarray(series, dtype=float).ravel()
    xc = x - x.mean()
    if not np.any(xc):
        raise ZeroVariance("series is constant")
    return xc


def autocorrelation(series, lag: int) -> float:
    """Lag-``lag`` autocorrelation.

    The lag-t autocovariance averages over the ``N - t`` available products,
    and the result is divided by the lag-0 value.
    """
    xc = _centred(series)
    n = xc.shape[0]
    if not 0 <= lag <= n - 2:
        raise ValueError(f"lag must be in [0, {n - 2}], got {lag}")
    c0 = float(xc @ xc) / n
    ct = float(xc[: n - lag] @ xc[lag:]) / (n - lag)
    return ct / c0


def autocorrelation_function(series) -> np.ndarray:
    """All lags ``0..N-1`` at once via FFT, same normalisation as :func:`autocorrelation`."""
    xc = _centred(series)
    n = xc.shape[0]
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    acov /= np.arange(n, 0, -1)
    return acov / acov[0]


def effective_sample_size(series, policy: str = "first-negative") -> float:
    """``N / (1 + 2 sum_t rho_t)`` clamped to ``(0, N]``.

    ``policy="paper-exact"`` sums every lag from 1 to ``N - 2``;
    ``"first-negative"`` stops before the first negative autocorrelation.
    """
    if policy not in ESS_POLICIES:
        raise ValueError(f"unknown ESS policy {policy!r}; choose from {ESS_POLICIES}")
    x = np.asarray(series, dtype=float).ravel()
    n = x.shape[0]
    if n < 4:
        raise ValueError("need at least 4 draws for an ESS estimate")
    rho = autocorrelation_function(x)[1 : n - 1]
    if policy == "first-negative":
        neg = np.flatnonzero(rho < 0)
        if neg.size:
            rho = rho[: neg[0]]
    tau = 1.0 + 2.0 * float(rho.sum())
    if not tau > 0:
        return float(n)
    return float(min(n, n / tau))


def histogram_kl(samples, true_log_pdf, n_bins: int = 40, range=None) -> float:
    """Discrete KL divergence ``sum_k P_k log(P_k / Q_k)`` over equal-width bins.

    ``P_k`` is the true density at the bin midpoint times the bin width,
    renormalised over ``range``. ``Q_k = (count_k + 0.5) / (n_in + 0.5 n_bins)``
    where ``n_in`` counts the samples inside ``range``.

    Raises:
        EmptyRange: if no sample lands inside ``range``.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    if range is None:
        raise ValueError("range is required")
    lo, hi = float(range[0]), float(range[1])
    if not hi > lo:
        raise ValueError("range must have positive length")
    samples = np.asarray(samples, dtype=float).ravel()
    edges = np.linspace(lo, hi, n_bins + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    logp = np.asarray(true_log_pdf(mids), dtype=float) + np.log(edges[1] - edges[0])
    logp -= np.logaddexp.reduce(logp)
    counts, _ = np.histogram(samples, bins=edges)
    n_in = int(counts.sum())
    if n_in == 0:
        raise EmptyRange(f"no samples inside [{lo}, {hi}]")
    logq = np.log(counts + 0.5) - np.log(n_in + 0.5 * n_bins)
    return float(np.sum(np.exp(logp) * (logp - logq)))


def gaussian_kl_range(mean: float, var: float, width: float = 4.0):
    sd = float(np.sqrt(var))
    return mean - width * sd, mean + width * sd


@dataclass
class ChainSummary:
    mean: list
    variance: list
    ess: list
    mcse: list
    ess_min: float
    ess_mean: float
    ess_median: float
    acceptance_rate: float
    mean_accept_prob: float
    divergence_count: int
    n_samples: int
    wall_time: float
    ess_policy: str

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(chain, ess_policy: str = "first-negative") -> ChainSummary:
    """Per-dimension moments, ESS and MCSE plus chain-level rates.

    A constant dimension gets ``None`` for its ESS and MCSE; the ESS
    aggregates then cover the remaining dimensions (or are ``None``).
    """
    samples = np.asarray(chain.samples, dtype=float)
    if samples.shape[0] == 0:
        raise ValueError("empty chain")
    mean = samples.mean(axis=0)
    var = samples.var(axis=0, ddof=1) if samples.shape[0] > 1 else np.zeros(samples.shape[1])
    ess, mcse = [], []
    for j in np.arange(samples.shape[1]):
        try:
            e = effective_sample_size(samples[:, j], ess_policy)
        except (ZeroVariance, ValueError):
            ess.append(None)
            mcse.append(None)
            continue
        ess.append(e)
        mcse.append(float(np.sqrt(var[j] / e)))
    known = [e for e in ess if e is not None]
    agg = (float(np.min(known)), float(np.mean(known)), float(np.median(known))) if known else (None,) * 3
    return ChainSummary(
        mean=mean.tolist(),
        variance=var.tolist(),
        ess=ess,
        mcse=mcse,
        ess_min=agg[0],
        ess_mean=agg[1],
        ess_median=agg[2],
        acceptance_rate=float(np.mean(chain.accepted)),
        mean_accept_prob=float(np.mean(chain.accept_prob)),
        divergence_count=int(chain.divergence_count),
        n_samples=int(samples.shape[0]),
        wall_time=float(getattr(chain, "wall_time", 0.0)),
        ess_policy=ess_policy,
    )
