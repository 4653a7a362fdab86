"""Closed-form bit-error-rate evaluation for fixed-threshold detection.

Enumerates every length-L symbol sequence, computes the signal-dependent
arrival moments it induces, and integrates the solid-approximation ratio
law over the decision buckets.  The erf argument of the bucket
probabilities uses the ratio-normalized form (mu_den * E - mu_num); the
unnormalized variant fails the quadrature and Monte Carlo oracles
whenever the expected ratio differs from one.

Error rates for adaptive memory cancellation are deliberately not
derived here: the conditioning on past decisions makes the exact
recursion grow combinatorially, so that detector is evaluated by
simulation only (see :mod:`mrsk.simulate`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .channel import ChannelParams, Cir, cir
from .errors import CapacityError
from .modem import (
    MrskConfig,
    RatioSymbol,
    codewords,
    symbol_index_combos,
    symbol_quantities,
    thresholds,
)

__all__ = [
    "SequenceSpace",
    "BerResult",
    "hamming",
    "hamming_table",
    "ftd_detection_prob",
    "ftd_ber",
    "admc_ber",
]

DEFAULT_SEQUENCE_CAP = 1 << 24
_CHUNK = 1 << 15


@dataclass(frozen=True)
class SequenceSpace:
    """Size bookkeeping for the exhaustive sequence enumeration."""

    L: int
    symbol_count: int

    @property
    def total(self) -> int:
        return self.symbol_count**self.L

    def require_within(self, cap: int) -> None:
        if self.total > cap:
            raise CapacityError(
                f"enumerating {self.total} symbol sequences "
                f"(symbol_count={self.symbol_count}, L={self.L}) exceeds the "
                f"configured cap of {cap}; raise the cap to at least "
                f"{self.total} or use the simulation path"
            )


@dataclass(frozen=True)
class BerResult:
    """Analytic BER, optionally with the per-sequence error breakdown."""

    ber: float
    per_sequence_errors: Optional[dict[tuple[tuple[int, ...], ...], float]] = None


def hamming(a: int, b: int, M: int, coding: str = "binary") -> int:
    """Bit differences between the codewords of alphabet indices a, b (1-based)."""
    if not (1 <= a <= 1 << M and 1 <= b <= 1 << M):
        raise ValueError(f"indices must lie in 1..{1 << M}, got {a}, {b}")
    codes = codewords(M, coding)
    return int(bin(int(codes[a - 1]) ^ int(codes[b - 1])).count("1"))


def hamming_table(M: int, coding: str) -> np.ndarray:
    """(2^M, 2^M) table of codeword bit differences, 0-based indices."""
    codes = codewords(M, coding)
    x = codes[:, None] ^ codes[None, :]
    return np.vectorize(lambda v: bin(v).count("1"))(x).astype(np.int64)


def _bucket_probs(
    mu_num: np.ndarray,
    var_num: np.ndarray,
    mu_den: np.ndarray,
    var_den: np.ndarray,
    edges: np.ndarray,
) -> np.ndarray:
    """P(received ratio falls in each threshold bucket), vectorized.

    Evaluates the solid-approximation CDF at the interior thresholds with
    the moments substituted; the outer edges are -inf and +inf, where the
    CDF is exactly 0 and 1.
    """
    mu_num = np.atleast_1d(np.asarray(mu_num, dtype=float))
    e = edges[None, :]
    mn, vn = mu_num[:, None], np.atleast_1d(var_num)[:, None]
    md, vd = np.atleast_1d(mu_den)[:, None], np.atleast_1d(var_den)[:, None]
    g = (md * e - mn) / np.sqrt(2.0 * (vn + vd * e * e))
    q = md / np.sqrt(2.0 * vd)
    cdf = 0.5 * (1.0 + special.erf(g) / special.erf(q))
    cdf = np.concatenate(
        [np.zeros((cdf.shape[0], 1)), cdf, np.ones((cdf.shape[0], 1))], axis=1
    )
    return np.diff(cdf, axis=1)


def _sequence_ids_to_symbols(seq_ids: np.ndarray, symbol_count: int, L: int) -> np.ndarray:
    """Sequence ids -> (n, L) symbol ids, oldest interval first."""
    out = np.empty((seq_ids.size, L), dtype=np.int64)
    s = seq_ids.copy()
    for pos in range(L - 1, -1, -1):
        out[:, pos] = s % symbol_count
        s //= symbol_count
    return out


def _sequence_error_probs(
    seq_symbols: np.ndarray,
    config: MrskConfig,
    taps: np.ndarray,
) -> np.ndarray:
    """Per-bit error probability of the newest symbol for each sequence."""
    qty = symbol_quantities(config)
    combos = symbol_index_combos(config)
    edges = thresholds(config)
    ham = hamming_table(config.M, config.coding)
    var_taps = taps * (1.0 - taps)

    emissions = qty[seq_symbols]  # (n, L, N)
    w = taps[::-1]
    mu = np.einsum("m,cmn->cn", w, emissions)
    var = np.einsum("m,cmn->cn", var_taps[::-1], emissions)

    current = seq_symbols[:, -1]
    true_idx0 = combos[current]  # (n, N-1)
    err_bits = np.zeros(seq_symbols.shape[0])
    for j in range(config.N - 1):
        probs = _bucket_probs(mu[:, j + 1], var[:, j + 1], mu[:, j], var[:, j], edges)
        err_bits += np.einsum("ci,ci->c", probs, ham[true_idx0[:, j]])
    return err_bits / config.bits_per_symbol


def ftd_detection_prob(
    j: int,
    i: int,
    sequence: Sequence[RatioSymbol],
    channel_cir: Cir,
    config: MrskConfig,
) -> float:
    """P(ratio position j of the newest symbol is detected as index i).

    ``sequence`` lists the L transmitted symbols oldest first; j and i
    are 1-based.  The probabilities over i partition the real line, so
    they sum to one for any sequence.
    """
    if not 1 <= j <= config.N - 1:
        raise ValueError(f"ratio position must lie in 1..{config.N - 1}, got {j}")
    if not 1 <= i <= config.alphabet_size:
        raise ValueError(f"alphabet index must lie in 1..{config.alphabet_size}, got {i}")
    taps = channel_cir.array
    if len(sequence) != taps.size:
        raise ValueError(f"sequence length {len(sequence)} must equal channel memory {taps.size}")
    combos = symbol_index_combos(config)
    k = config.alphabet_size
    ids = []
    for sym in sequence:
        idx0 = [v - 1 for v in sym.indices]
        ids.append(int(np.ravel_multi_index(idx0, (k,) * (config.N - 1))))
    seq_symbols = np.asarray(ids, dtype=np.int64)[None, :]
    qty = symbol_quantities(config)
    emissions = qty[seq_symbols]
    mu = np.einsum("m,cmn->cn", taps[::-1], emissions)
    var = np.einsum("m,cmn->cn", (taps * (1 - taps))[::-1], emissions)
    probs = _bucket_probs(
        mu[:, j], var[:, j], mu[:, j - 1], var[:, j - 1], thresholds(config)
    )
    return float(probs[0, i - 1])


def ftd_ber(
    config: MrskConfig,
    channel: ChannelParams,
    sequence_cap: int = DEFAULT_SEQUENCE_CAP,
    per_sequence: bool = False,
) -> BerResult:
    """Exact BER of fixed-threshold detection under the FIR channel model.

    Averages the per-bit error probability of the newest symbol over all
    symbol_count^L equally likely transmit sequences.  Enumeration runs
    in fixed-size chunks, so memory stays flat and partial sums combine
    associatively regardless of partitioning.
    """
    space = SequenceSpace(L=channel.L, symbol_count=config.symbol_count)
    space.require_within(sequence_cap)
    taps = cir(channel).array

    total = space.total
    acc = 0.0
    per_seq: Optional[dict] = {} if per_sequence else None
    combos = symbol_index_combos(config)
    for start in range(0, total, _CHUNK):
        ids = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        seq_symbols = _sequence_ids_to_symbols(ids, space.symbol_count, space.L)
        pe = _sequence_error_probs(seq_symbols, config, taps)
        acc += float(pe.sum())
        if per_seq is not None:
            for row, val in zip(seq_symbols, pe):
                key = tuple(tuple(int(v) + 1 for v in combos[s]) for s in row)
                per_seq[key] = float(val)
    return BerResult(ber=acc / total, per_sequence_errors=per_seq)


def admc_ber(*_args, **_kwargs):
    """Analytic error rate for memory cancellation is intentionally absent.

    The exact expression conditions on every past decision, which blows
    up combinatorially; estimate it with
    ``simulate.run_link(..., detector="admc")`` instead.
    """
    raise NotImplementedError(
        "no closed form for the memory-cancellation detector; "
        "use simulate.run_link with detector='admc'"
    )
