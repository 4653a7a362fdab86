"""Diffusive point-to-sphere channel: hit probabilities and arrival statistics.

Models an unbounded 3D fluid with a point transmitter and a perfectly
absorbing spherical receiver.  Everything downstream (modem, analysis,
simulation engines) consumes the per-interval hit probabilities computed
here, so all schemes share one physics implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "ChannelParams",
    "Cir",
    "ArrivalMoments",
    "hit_fraction",
    "cir",
    "arrival_moments",
    "sample_arrival",
    "sample_arrival_binomial",
]


@dataclass(frozen=True)
class ChannelParams:
    """Geometry and physics of one diffusive link.

    d: transmitter to receiver-center distance (um)
    r: receiver radius (um)
    D: diffusion coefficient (um^2/s)
    Ts: symbol interval (s)
    L: channel memory length (number of intervals kept in the FIR model)
    """

    d: float = 10.0
    r: float = 5.0
    D: float = 79.4
    Ts: float = 0.5
    L: int = 5

    def __post_init__(self) -> None:
        if not self.d > self.r > 0:
            raise ValueError(f"need d > r > 0, got d={self.d}, r={self.r}")
        if self.D <= 0:
            raise ValueError(f"diffusion coefficient must be positive, got {self.D}")
        if self.Ts <= 0:
            raise ValueError(f"symbol interval must be positive, got {self.Ts}")
        if self.L < 1:
            raise ValueError(f"channel memory must be >= 1, got {self.L}")


@dataclass(frozen=True)
class Cir:
    """Per-interval hit probabilities p_hit[k], k = 1..L."""

    p_hit: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.p_hit) < 1:
            raise ValueError("impulse response must have at least one tap")
        if any(not 0.0 <= p < 1.0 for p in self.p_hit):
            raise ValueError(f"hit probabilities must lie in [0, 1), got {self.p_hit}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.p_hit, dtype=float)

    def __len__(self) -> int:
        return len(self.p_hit)


@dataclass(frozen=True)
class ArrivalMoments:
    """Mean and variance of the absorbed-molecule count in one interval."""

    mu: float
    var: float

    def __post_init__(self) -> None:
        if self.mu < 0 or self.var < 0:
            raise ValueError(f"moments must be nonnegative, got mu={self.mu}, var={self.var}")


def hit_fraction(t, params: ChannelParams):
    """Fraction of emitted molecules absorbed by time ``t`` after release.

    Equals (r/d) * erfc((d - r) / sqrt(4 D t)); 0 at t = 0 and r/d as
    t -> infinity.  Accepts scalars or arrays.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be nonnegative")
    out = np.zeros_like(t_arr)
    pos = t_arr > 0
    if np.any(pos):
        arg = (params.d - params.r) / np.sqrt(4.0 * params.D * t_arr[pos])
        out[pos] = (params.r / params.d) * special.erfc(arg)
    return out if out.ndim else float(out)


def cir(params: ChannelParams) -> Cir:
    """Channel impulse response: absorption probability per symbol interval.

    p_hit[k] = F(k*Ts) - F((k-1)*Ts) where F is the hit-time CDF, so the
    taps telescope back to hit_fraction(L*Ts) exactly.
    """
    edges = hit_fraction(np.arange(params.L + 1) * params.Ts, params)
    return Cir(tuple(float(p) for p in np.diff(edges)))


def arrival_moments(emission_history, channel_cir: Cir) -> ArrivalMoments:
    """Gaussian moments of the received count given the last L emissions.

    ``emission_history`` holds the emitted counts s[k-L+1 .. k], oldest
    first and the current interval last; entries older than the history
    are the caller's zeros (cold start).
    """
    s = np.asarray(emission_history, dtype=float)
    p = channel_cir.array
    if s.shape != p.shape:
        raise ValueError(f"history length {s.shape} does not match memory length {p.shape}")
    if np.any(s < 0):
        raise ValueError("emission counts must be nonnegative")
    s_rev = s[::-1]
    mu = float(np.dot(p, s_rev))
    var = float(np.dot(p * (1.0 - p), s_rev))
    return ArrivalMoments(mu=mu, var=var)


def sample_arrival(moments: ArrivalMoments, rng: np.random.Generator) -> float:
    """One Gaussian draw of the absorbed count.

    Kept real-valued (possibly negative) to match the analytic arrival
    model; use :func:`sample_arrival_binomial` for integer-exact checks.
    """
    if moments.var == 0.0:
        return moments.mu
    return float(rng.normal(moments.mu, np.sqrt(moments.var)))


def sample_arrival_binomial(emission_history, channel_cir: Cir, rng: np.random.Generator) -> int:
    """Exact arrival model: sum of per-tap binomial draws."""
    s = np.asarray(emission_history)
    p = channel_cir.array
    if s.shape != p.shape:
        raise ValueError(f"history length {s.shape} does not match memory length {p.shape}")
    if np.any(s < 0):
        raise ValueError("emission counts must be nonnegative")
    s_int = np.asarray(np.rint(s), dtype=np.int64)
    if not np.allclose(s, s_int):
        raise ValueError("binomial arrivals need integer emission counts")
    return int(rng.binomial(s_int[::-1], p).sum())
