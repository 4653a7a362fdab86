"""Reference modulations on the identical diffusive channel.

On-off keying, binary concentration shift keying and binary molecule
shift keying are evaluated in closed form by enumerating all 2^L bit
histories and integrating Gaussian arrival tails; release-time shift
keying rides a first-arrival timing channel whose delay is Levy
distributed and is estimated by Monte Carlo.  All four consume
:mod:`mrsk.channel`, so the comparison against the ratio scheme shares
one physics implementation.

Threshold conventions: counts at a threshold decide upward (consistent
with the ratio detector's tie-break), and frames where neither or both
molecule-shift counts clear the threshold are resolved by a fair coin,
which keeps every error rate at or below one half on uniform bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .channel import ChannelParams, cir

__all__ = [
    "OokConfig",
    "CskConfig",
    "MoskConfig",
    "RtskConfig",
    "ook_ber",
    "csk_ber",
    "mosk_ber",
    "rtsk_ber",
    "rtsk_error_counts",
    "optimize_ook_alpha",
    "optimize_mosk_lambda",
    "levy_scale",
    "levy_cdf",
    "levy_median",
    "sample_levy",
]


@dataclass(frozen=True)
class OokConfig:
    """On-off keying: Q molecules for bit 1, none for bit 0; threshold alpha*Q."""

    Q: float = 1000.0
    alpha: float = 0.78

    def __post_init__(self) -> None:
        if self.Q <= 0:
            raise ValueError("Q must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"threshold fraction must lie in [0, 1), got {self.alpha}")


@dataclass(frozen=True)
class CskConfig:
    """Binary concentration shift keying with amplitudes Q and Gamma*Q."""

    Q: float = 1000.0
    Gamma: float = 2.0

    def __post_init__(self) -> None:
        if self.Q <= 0:
            raise ValueError("Q must be positive")
        if self.Gamma <= 1.0:
            raise ValueError(f"amplitude ratio must exceed 1, got {self.Gamma}")


@dataclass(frozen=True)
class MoskConfig:
    """Binary molecule shift keying with per-type threshold Lambda."""

    Q: float = 1000.0
    Lambda: float = 340.0

    def __post_init__(self) -> None:
        if self.Q <= 0:
            raise ValueError("Q must be positive")
        if self.Lambda <= 0:
            raise ValueError(f"per-type threshold must be positive, got {self.Lambda}")


@dataclass(frozen=True)
class RtskConfig:
    """Release-time shift keying over the first-arrival timing channel.

    Bits map to release offsets {0, Delta} within the symbol interval;
    the single first-arrival delay follows a Levy law with scale
    (d-r)^2 / (2D).
    """

    Delta: float = 0.5
    detector: str = "ml"

    def __post_init__(self) -> None:
        if self.Delta <= 0:
            raise ValueError("release offset must be positive")
        if self.detector not in ("ml", "linear"):
            raise ValueError(f"detector must be 'ml' or 'linear', got {self.detector!r}")


# ---------------------------------------------------------------------------
# shared enumeration helpers
# ---------------------------------------------------------------------------


def _histories(L: int) -> np.ndarray:
    """All 2^L bit histories as rows, oldest interval first."""
    n = 1 << L
    bits = (np.arange(n)[:, None] >> np.arange(L - 1, -1, -1)) & 1
    return bits.astype(float)


def _history_moments(levels: np.ndarray, taps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of the received count for each emission history."""
    w = taps[::-1]
    mu = levels @ w
    var = levels @ (w * (1.0 - taps[::-1]))
    return mu, var


def _p_above(threshold: float, mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """P(count >= threshold) under the Gaussian arrival model.

    Zero-variance histories are deterministic: the boundary decides
    upward, matching the count detectors' tie-break.
    """
    sigma = np.sqrt(var)
    out = np.empty_like(mu)
    deterministic = sigma == 0.0
    out[deterministic] = (mu[deterministic] >= threshold).astype(float)
    ok = ~deterministic
    out[ok] = special.ndtr((mu[ok] - threshold) / sigma[ok])
    return out


def ook_ber(config: OokConfig, channel: ChannelParams, t_b: float) -> float:
    """Closed-form OOK error rate with threshold alpha*Q.

    Averages the Gaussian tail against the threshold over every bit
    history of length L (one bit per symbol interval t_b).
    """
    taps = cir(replace(channel, Ts=t_b)).array
    hist = _histories(channel.L)
    levels = config.Q * hist
    mu, var = _history_moments(levels, taps)
    p1 = _p_above(config.alpha * config.Q, mu, var)
    current = hist[:, -1]
    err = np.where(current == 1.0, 1.0 - p1, p1)
    return float(err.mean())


def csk_ber(config: CskConfig, channel: ChannelParams, t_b: float) -> float:
    """Closed-form binary CSK error rate.

    Amplitudes are Q (bit 0) and Gamma*Q (bit 1); the threshold is the
    geometric mean of the two expected isolated-pulse counts.
    """
    taps = cir(replace(channel, Ts=t_b)).array
    hist = _histories(channel.L)
    levels = config.Q * np.where(hist == 1.0, config.Gamma, 1.0)
    mu, var = _history_moments(levels, taps)
    threshold = math.sqrt(config.Gamma) * config.Q * taps[0]
    p1 = _p_above(threshold, mu, var)
    current = hist[:, -1]
    err = np.where(current == 1.0, 1.0 - p1, p1)
    return float(err.mean())


def mosk_ber(config: MoskConfig, channel: ChannelParams, t_b: float) -> float:
    """Closed-form binary MoSK error rate.

    Each bit releases Q molecules of its own type.  A symbol decodes
    correctly when exactly the transmitted type's count clears Lambda;
    when neither or both clear it the receiver guesses, contributing a
    half error, and when only the wrong type clears it the bit is lost.
    """
    taps = cir(replace(channel, Ts=t_b)).array
    hist = _histories(channel.L)
    # type emissions: transmitted type follows the history bits
    levels_1 = config.Q * hist          # molecule type encoding bit 1
    levels_0 = config.Q * (1.0 - hist)  # molecule type encoding bit 0
    mu1, var1 = _history_moments(levels_1, taps)
    mu0, var0 = _history_moments(levels_0, taps)
    p1_above = _p_above(config.Lambda, mu1, var1)
    p0_above = _p_above(config.Lambda, mu0, var0)
    current = hist[:, -1]
    pt = np.where(current == 1.0, p1_above, p0_above)
    po = np.where(current == 1.0, p0_above, p1_above)
    wrong_only = (1.0 - pt) * po
    ambiguous = pt * po + (1.0 - pt) * (1.0 - po)
    return float((wrong_only + 0.5 * ambiguous).mean())


def optimize_ook_alpha(
    channel: ChannelParams,
    t_b: float,
    Q: float = 1000.0,
    grid=None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sweep the OOK threshold fraction; returns (best alpha, grid, BERs)."""
    alphas = np.asarray(grid if grid is not None else np.arange(0.02, 0.99, 0.02))
    bers = np.array([ook_ber(OokConfig(Q=Q, alpha=float(a)), channel, t_b) for a in alphas])
    return float(alphas[int(np.argmin(bers))]), alphas, bers


def optimize_mosk_lambda(
    channel: ChannelParams,
    t_b: float,
    Q: float = 1000.0,
    grid=None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sweep the MoSK per-type threshold; returns (best Lambda, grid, BERs)."""
    lambdas = np.asarray(grid if grid is not None else Q * np.arange(0.02, 0.99, 0.02))
    bers = np.array([mosk_ber(MoskConfig(Q=Q, Lambda=float(l)), channel, t_b) for l in lambdas])
    return float(lambdas[int(np.argmin(bers))]), lambdas, bers


# ---------------------------------------------------------------------------
# release-time shift keying
# ---------------------------------------------------------------------------


def levy_scale(channel: ChannelParams) -> float:
    """Levy scale (d-r)^2 / (2D) of the first-arrival delay."""
    return (channel.d - channel.r) ** 2 / (2.0 * channel.D)


def levy_cdf(t, c: float):
    """CDF of the one-sided Levy law: erfc(sqrt(c / 2t)) for t > 0."""
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros_like(t_arr)
    pos = t_arr > 0
    out[pos] = special.erfc(np.sqrt(c / (2.0 * t_arr[pos])))
    return out if out.ndim else float(out)


def levy_median(c: float) -> float:
    """Median delay: c / (2 * erfcinv(1/2)^2)."""
    return c / (2.0 * special.erfcinv(0.5) ** 2)


def _levy_logpdf(t: np.ndarray, c: float) -> np.ndarray:
    out = np.full(t.shape, -np.inf)
    pos = t > 0
    tp = t[pos]
    out[pos] = 0.5 * math.log(c / (2.0 * math.pi)) - 1.5 * np.log(tp) - c / (2.0 * tp)
    return out


def sample_levy(c: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Levy draws via the reciprocal-square of a standard normal."""
    z = rng.standard_normal(n)
    with np.errstate(divide="ignore"):
        return c / (z * z)


def rtsk_error_counts(
    config: RtskConfig,
    channel: ChannelParams,
    t_b: float,
    n_symbols: int,
    seed: int = 0,
) -> tuple[int, int]:
    """Monte Carlo bit errors of RTSK over n_symbols; returns (errors, n).

    A symbol releases at offset 0 (bit 0) or Delta (bit 1); the receiver
    sees offset plus one Levy delay.  Arrivals past the symbol window are
    erasures decided by a fair coin.  The linear detector thresholds the
    arrival time midway between the two conditional medians; the ML
    detector compares the two Levy likelihoods.
    """
    if not config.Delta < t_b:
        raise ValueError(f"release offset {config.Delta} must lie inside the bit interval {t_b}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    c = levy_scale(channel)
    bits = rng.integers(0, 2, size=n_symbols)
    arrivals = config.Delta * bits + sample_levy(c, n_symbols, rng)
    erased = arrivals > t_b
    if config.detector == "linear":
        midpoint = config.Delta / 2.0 + levy_median(c)
        decided = (arrivals >= midpoint).astype(np.int64)
    else:
        ll0 = _levy_logpdf(arrivals, c)
        ll1 = _levy_logpdf(arrivals - config.Delta, c)
        decided = (ll1 > ll0).astype(np.int64)
    coin = rng.integers(0, 2, size=n_symbols)
    decided = np.where(erased, coin, decided)
    return int(np.count_nonzero(decided != bits)), n_symbols


def rtsk_ber(
    config: RtskConfig,
    channel: ChannelParams,
    t_b: float,
    n_symbols: int = 10**6,
    seed: int = 0,
) -> float:
    """Monte Carlo RTSK error rate; independent of any molecule count."""
    errors, n = rtsk_error_counts(config, channel, t_b, n_symbols, seed)
    return errors / n
