"""MRSK modem: ratio alphabet, bit mapping, emission quantities, detectors.

A symbol encodes M*(N-1) bits into the N-1 consecutive concentration
ratios of N molecule types.  Ratios live on a geometric grid spanning
[Omega^-1, Omega]; detection buckets each received ratio against the
geometric-mean thresholds (FTD), optionally after subtracting the
estimated one-tap interference of the previous symbol (ADMC), or jointly
over a window by a Viterbi search of the ratio log-likelihood (MLSD).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import Cir
from .errors import CapacityError

__all__ = [
    "MrskConfig",
    "RatioSymbol",
    "EmissionVector",
    "ReceivedFrame",
    "DetectorStats",
    "ratio_alphabet",
    "thresholds",
    "codewords",
    "encode_bits",
    "decode_bits",
    "quantities",
    "average_molecules_per_bit",
    "role_rotation",
    "detect_ftd",
    "detect_admc",
    "detect_mlsd",
    "symbol_index_combos",
    "symbol_quantities",
]

_CODINGS = ("binary", "gray")
_DETECTORS = ("ftd", "admc", "mlsd")
_MLSD_METRICS = ("solid", "gaussian")


@dataclass(frozen=True)
class MrskConfig:
    """Modulation parameters.

    N: number of molecule types (>= 2)
    M: bits carried per ratio (>= 1)
    Omega: ratio-range base; the alphabet spans [Omega^-1, Omega]
    Q: reference molecule count of the first type
    coding: bit-to-index mapping, "binary" or "gray"
    detector: "ftd", "admc" or "mlsd"
    mlsd_window: maximum window length handed to the sequence detector
    mlsd_metric: branch metric, "solid" or "gaussian"
    rotate_roles: cyclically permute molecule roles symbol by symbol so
        reservoir usage balances; both ends apply the same deterministic
        schedule (off by default)
    denom_eps_scale: ratio denominators at or below denom_eps_scale * Q
        mark a frame degenerate
    """

    N: int = 2
    M: int = 1
    Omega: float = math.e
    Q: float = 1000.0
    coding: str = "gray"
    detector: str = "ftd"
    mlsd_window: int = 1 << 20
    mlsd_metric: str = "solid"
    rotate_roles: bool = False
    denom_eps_scale: float = 1e-6

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError(f"need at least two molecule types, got N={self.N}")
        if self.M < 1:
            raise ValueError(f"need at least one bit per ratio, got M={self.M}")
        if self.Omega <= 1.0:
            raise ValueError(f"ratio-range base must exceed 1, got {self.Omega}")
        if self.Q <= 0:
            raise ValueError(f"reference count must be positive, got {self.Q}")
        if self.coding not in _CODINGS:
            raise ValueError(f"coding must be one of {_CODINGS}, got {self.coding!r}")
        if self.detector not in _DETECTORS:
            raise ValueError(f"detector must be one of {_DETECTORS}, got {self.detector!r}")
        if self.mlsd_metric not in _MLSD_METRICS:
            raise ValueError(f"mlsd_metric must be one of {_MLSD_METRICS}, got {self.mlsd_metric!r}")
        if self.mlsd_window < 1:
            raise ValueError("mlsd_window must be positive")

    @property
    def bits_per_symbol(self) -> int:
        return self.M * (self.N - 1)

    @property
    def alphabet_size(self) -> int:
        return 1 << self.M

    @property
    def symbol_count(self) -> int:
        return self.alphabet_size ** (self.N - 1)

    @property
    def denom_eps(self) -> float:
        return self.denom_eps_scale * self.Q


@dataclass(frozen=True)
class RatioSymbol:
    """One symbol: N-1 alphabet indices, each 1-based in 1..2^M."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.indices) < 1 or any(i < 1 for i in self.indices):
            raise ValueError(f"indices must be 1-based positive, got {self.indices}")


@dataclass(frozen=True)
class EmissionVector:
    """Molecule counts released for one symbol, first type fixed at Q."""

    quantities: tuple[float, ...]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.quantities, dtype=float)


@dataclass(frozen=True)
class ReceivedFrame:
    """Received counts for one symbol interval plus the derived ratios.

    Ratios are stored with denominators clamped at the degeneracy
    epsilon; ``degenerate`` records whether any clamp fired.
    """

    counts: tuple[float, ...]
    ratios: tuple[float, ...]
    degenerate: bool

    @classmethod
    def from_counts(cls, counts, config: MrskConfig) -> "ReceivedFrame":
        c = np.asarray(counts, dtype=float)
        if c.shape != (config.N,):
            raise ValueError(f"expected {config.N} counts, got shape {c.shape}")
        den = c[:-1]
        degenerate = bool(np.any(den <= config.denom_eps))
        ratios = c[1:] / np.maximum(den, config.denom_eps)
        return cls(tuple(float(v) for v in c), tuple(float(v) for v in ratios), degenerate)

    @property
    def ratio_array(self) -> np.ndarray:
        return np.asarray(self.ratios, dtype=float)


@dataclass
class DetectorStats:
    """Caller-owned diagnostic counters shared across detector calls."""

    degenerate_frames: int = 0
    admc_clamps: int = 0


# ---------------------------------------------------------------------------
# symbol construction
# ---------------------------------------------------------------------------


def ratio_alphabet(config: MrskConfig) -> np.ndarray:
    """The 2^M admissible ratio values Omega^(-1 + 2(i-1)/(2^M - 1)).

    Strictly increasing and geometric; for M = 1 this is {Omega^-1, Omega}.
    """
    k = config.alphabet_size
    if k == 2:
        exponents = np.array([-1.0, 1.0])
    else:
        exponents = -1.0 + 2.0 * np.arange(k) / (k - 1)
    return config.Omega**exponents


def thresholds(config: MrskConfig) -> np.ndarray:
    """Decision thresholds E_i = Omega^(-1 + (2i-1)/(2^M - 1)), i = 1..2^M-1.

    E_i is the geometric mean of adjacent alphabet entries; for M = 1 the
    single threshold is exactly 1.
    """
    k = config.alphabet_size
    exponents = -1.0 + (2.0 * np.arange(1, k) - 1.0) / (k - 1)
    return config.Omega**exponents


def codewords(M: int, coding: str) -> np.ndarray:
    """Codeword value carried by each 0-based alphabet index.

    Binary coding is the identity; gray coding maps index i to
    i ^ (i >> 1) so adjacent indices differ in exactly one bit.
    """
    idx = np.arange(1 << M)
    if coding == "binary":
        return idx
    if coding == "gray":
        return idx ^ (idx >> 1)
    raise ValueError(f"unknown coding {coding!r}")


def _value_to_index(M: int, coding: str) -> np.ndarray:
    """Inverse of :func:`codewords`: bit-group value -> 0-based index."""
    codes = codewords(M, coding)
    inv = np.empty_like(codes)
    inv[codes] = np.arange(codes.size)
    return inv


def encode_bits_to_indices(bits, config: MrskConfig) -> np.ndarray:
    """Bits -> (n_symbols, N-1) array of 0-based alphabet indices."""
    b = np.asarray(bits)
    if b.ndim != 1:
        raise ValueError("bits must be one-dimensional")
    if np.any((b != 0) & (b != 1)):
        raise ValueError("bits must be 0/1")
    bps = config.bits_per_symbol
    if b.size == 0 or b.size % bps != 0:
        raise ValueError(
            f"bit count {b.size} is not a positive multiple of {bps} bits per symbol"
        )
    groups = b.astype(np.int64).reshape(-1, config.M)
    weights = 1 << np.arange(config.M - 1, -1, -1)
    values = groups @ weights
    indices = _value_to_index(config.M, config.coding)[values]
    return indices.reshape(-1, config.N - 1)


def decode_indices_to_bits(indices, config: MrskConfig) -> np.ndarray:
    """(n_symbols, N-1) 0-based alphabet indices -> bits."""
    idx = np.asarray(indices, dtype=np.int64)
    values = codewords(config.M, config.coding)[idx.reshape(-1)]
    shifts = np.arange(config.M - 1, -1, -1)
    bits = (values[:, None] >> shifts) & 1
    return bits.reshape(-1).astype(np.uint8)


def encode_bits(bits, config: MrskConfig) -> list[RatioSymbol]:
    """Map a bit string onto ratio symbols, M bits per ratio position.

    The bit count must be an exact multiple of M*(N-1); no implicit
    padding, so error-rate accounting stays unambiguous.
    """
    indices = encode_bits_to_indices(bits, config)
    return [RatioSymbol(tuple(int(i) + 1 for i in row)) for row in indices]


def decode_bits(symbols: Sequence[RatioSymbol], config: MrskConfig) -> np.ndarray:
    """Exact inverse of :func:`encode_bits` under the same coding."""
    idx = np.array([[i - 1 for i in s.indices] for s in symbols], dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= config.alphabet_size):
        raise ValueError("symbol index out of range for this alphabet")
    return decode_indices_to_bits(idx, config)


def quantities(symbol: RatioSymbol, config: MrskConfig) -> EmissionVector:
    """Molecule counts for one symbol: Q times the cumulative ratio product."""
    if len(symbol.indices) != config.N - 1:
        raise ValueError(f"expected {config.N - 1} ratio indices, got {len(symbol.indices)}")
    if any(i > config.alphabet_size for i in symbol.indices):
        raise ValueError("symbol index out of range for this alphabet")
    alphabet = ratio_alphabet(config)
    ratios = alphabet[[i - 1 for i in symbol.indices]]
    qty = config.Q * np.concatenate(([1.0], np.cumprod(ratios)))
    return EmissionVector(tuple(float(v) for v in qty))


def average_molecules_per_bit(config: MrskConfig) -> float:
    """Expected total emission per symbol under uniform bits, per bit.

    Ratios are i.i.d. uniform over the alphabet, so the expected count of
    type i is Q * mean(alphabet)^(i-1) and the total is a geometric sum.
    """
    m1 = float(ratio_alphabet(config).mean())
    total = config.Q * float(np.sum(m1 ** np.arange(config.N)))
    return total / config.bits_per_symbol


def role_rotation(symbol_position: int, config: MrskConfig) -> int:
    """Cyclic shift of molecule roles for the symbol at this position."""
    if not config.rotate_roles:
        return 0
    return symbol_position % config.N


def symbol_index_combos(config: MrskConfig) -> np.ndarray:
    """All symbols as (symbol_count, N-1) 0-based index rows.

    Row s is the mixed-radix digits of s, first ratio position most
    significant; every module enumerating symbols shares this order.
    """
    k = config.alphabet_size
    n_pos = config.N - 1
    s = np.arange(config.symbol_count)
    combos = np.empty((s.size, n_pos), dtype=np.int64)
    for j in range(n_pos - 1, -1, -1):
        combos[:, j] = s % k
        s = s // k
    return combos


def symbol_quantities(config: MrskConfig) -> np.ndarray:
    """Emission quantities for every symbol id, shape (symbol_count, N)."""
    alphabet = ratio_alphabet(config)
    ratios = alphabet[symbol_index_combos(config)]
    qty = np.concatenate(
        [np.ones((ratios.shape[0], 1)), np.cumprod(ratios, axis=1)], axis=1
    )
    return config.Q * qty


# ---------------------------------------------------------------------------
# detectors
# ---------------------------------------------------------------------------


def _bucket(ratios: np.ndarray, config: MrskConfig) -> np.ndarray:
    """0-based alphabet indices for received ratios; ties go upward."""
    return np.searchsorted(thresholds(config), ratios, side="right")


def detect_ftd(
    frame: ReceivedFrame,
    config: MrskConfig,
    stats: Optional[DetectorStats] = None,
) -> RatioSymbol:
    """Fixed-threshold detection: bucket each ratio independently.

    Thresholds depend only on the ratio alphabet, never on the channel.
    A degenerate frame (near-zero denominator) yields the all-lowest-index
    symbol and bumps the diagnostic counter so Monte Carlo batches stay
    total.
    """
    if frame.degenerate:
        if stats is not None:
            stats.degenerate_frames += 1
        return RatioSymbol((1,) * (config.N - 1))
    idx0 = _bucket(frame.ratio_array, config)
    return RatioSymbol(tuple(int(i) + 1 for i in idx0))


def detect_admc(
    frame: ReceivedFrame,
    previous_detected: Optional[RatioSymbol],
    channel_cir: Cir,
    config: MrskConfig,
    stats: Optional[DetectorStats] = None,
) -> RatioSymbol:
    """Adaptive detection with one-tap memory cancellation.

    Subtracts p_hit[2] times the previous symbol's estimated emissions
    (reconstructed from the previous decision) from the received counts,
    then applies fixed-threshold detection to the adjusted ratios.  The
    first symbol of a burst has no predecessor and uses zero correction.
    Non-positive adjusted counts are clamped at the degeneracy epsilon
    and counted.
    """
    if len(channel_cir) < 2:
        raise ValueError("memory cancellation needs channel memory L >= 2")
    counts = np.asarray(frame.counts, dtype=float)
    if previous_detected is not None:
        counts = counts - channel_cir.p_hit[1] * quantities(previous_detected, config).array
    eps = config.denom_eps
    low = counts <= eps
    if np.any(low):
        if stats is not None:
            stats.admc_clamps += int(low.sum())
        counts = np.maximum(counts, eps)
    idx0 = _bucket(counts[1:] / counts[:-1], config)
    return RatioSymbol(tuple(int(i) + 1 for i in idx0))


class _MlsdMetric:
    """Cached branch-metric evaluator over symbol windows."""

    def __init__(self, config: MrskConfig, taps: np.ndarray):
        self.config = config
        self.taps = np.asarray(taps, dtype=float)
        self.var_taps = self.taps * (1.0 - self.taps)
        self.qty = symbol_quantities(config)
        self.metric = config.mlsd_metric
        self._cache: dict[tuple[int, ...], list[tuple[float, ...]]] = {}

    def _constants(self, window: tuple[int, ...]) -> list[tuple[float, ...]]:
        cached = self._cache.get(window)
        if cached is not None:
            return cached
        emissions = self.qty[list(window)]
        n = len(window)
        mu = self.taps[:n][::-1] @ emissions
        var = self.var_taps[:n][::-1] @ emissions
        consts: list[tuple[float, ...]] = []
        for j in range(self.config.N - 1):
            mu_d, var_d = float(mu[j]), float(var[j])
            mu_n, var_n = float(mu[j + 1]), float(var[j + 1])
            if self.metric == "solid":
                lnerf = math.log(math.erf(mu_d / math.sqrt(2.0 * var_d)))
                consts.append((mu_n, var_n, mu_d, var_d, lnerf))
            else:
                beta = mu_n / mu_d
                lam2 = beta * beta * (var_n / (mu_n * mu_n) + var_d / (mu_d * mu_d))
                consts.append((beta, lam2, 0.5 * math.log(lam2)))
        self._cache[window] = consts
        return consts

    def __call__(self, window: tuple[int, ...], z: np.ndarray) -> float:
        consts = self._constants(window)
        total = 0.0
        if self.metric == "solid":
            for j, (mu_n, var_n, mu_d, var_d, lnerf) in enumerate(consts):
                zj = z[j]
                a = mu_d * var_n + mu_n * var_d * zj
                b = var_n + var_d * zj * zj
                if a <= 0.0:
                    return -1e300
                total += math.log(a) - 1.5 * math.log(b) - (mu_d * zj - mu_n) ** 2 / (2.0 * b) - lnerf
        else:
            for j, (beta, lam2, half_ln_lam2) in enumerate(consts):
                dz = z[j] - beta
                total += -half_ln_lam2 - dz * dz / (2.0 * lam2)
        return total


def _viterbi_symbol_ids(
    ratios: np.ndarray,
    config: MrskConfig,
    taps: np.ndarray,
    state_cap: int = 1 << 16,
) -> list[int]:
    """Viterbi search over symbol ids for a (T, N-1) ratio array."""
    L = len(taps)
    S = config.symbol_count
    n_states = S ** (L - 1)
    if n_states > state_cap:
        raise CapacityError(
            f"sequence detection needs {n_states} trellis states "
            f"(2^(M(N-1)(L-1))), exceeding the configured cap of {state_cap}; "
            f"raise state_cap to at least {n_states} or reduce N, M or L"
        )
    metric = _MlsdMetric(config, taps)
    mem = L - 1

    # scores: state tuple (last up-to-mem symbol ids) -> accumulated metric
    scores: dict[tuple[int, ...], float] = {(): 0.0}
    backptr: list[dict[tuple[int, ...], tuple[tuple[int, ...], int]]] = []
    for k in range(ratios.shape[0]):
        z = ratios[k]
        nxt: dict[tuple[int, ...], float] = {}
        bp: dict[tuple[int, ...], tuple[tuple[int, ...], int]] = {}
        for state in sorted(scores):
            base = scores[state]
            for sym in range(S):
                window = state + (sym,)
                if len(window) > L:
                    window = window[-L:]
                new_state = (state + (sym,))[-mem:] if mem > 0 else ()
                cand = base + metric(window, z)
                best = nxt.get(new_state)
                if best is None or cand > best:
                    nxt[new_state] = cand
                    bp[new_state] = (state, sym)
        scores = nxt
        backptr.append(bp)

    state = max(sorted(scores), key=lambda s: scores[s])
    detected: list[int] = []
    for bp in reversed(backptr):
        state, sym = bp[state]
        detected.append(sym)
    detected.reverse()
    return detected


def detect_mlsd(
    ratio_frames,
    config: MrskConfig,
    channel_cir: Cir,
    state_cap: int = 1 << 16,
) -> list[RatioSymbol]:
    """Maximum-likelihood sequence detection over a window of frames.

    Runs a Viterbi search whose states are the last L-1 symbols; the
    branch metric is the log ratio-density (solid approximation by
    default, Gaussian behind ``mlsd_metric``) evaluated with the
    signal-dependent moments of each candidate window.  The window starts
    cold: intervals before the first frame carry zero emissions.
    """
    ratios = np.atleast_2d(
        np.array(
            [f.ratios if isinstance(f, ReceivedFrame) else f for f in ratio_frames],
            dtype=float,
        )
    )
    if ratios.shape[0] > config.mlsd_window:
        raise ValueError(
            f"window of {ratios.shape[0]} frames exceeds mlsd_window={config.mlsd_window}"
        )
    ids = _viterbi_symbol_ids(ratios, config, channel_cir.array, state_cap)
    combos = symbol_index_combos(config)
    return [RatioSymbol(tuple(int(i) + 1 for i in combos[s])) for s in ids]
