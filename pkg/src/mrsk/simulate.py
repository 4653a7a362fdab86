"""Monte Carlo link engines, a Brownian particle simulator, and sweeps.

Three arrival engines share one transmit/detect pipeline: ``statistical``
draws Gaussian counts from the FIR moments, ``binomial`` draws the exact
per-tap binomial counts, and ``particle`` integrates every molecule's
Brownian path against the absorbing receiver.  Bit streams are split
into fixed-size frames with independently derived random streams, so
results are bit-for-bit reproducible for a given seed no matter how the
frames are scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal

from .channel import ChannelParams, cir
from .errors import CapacityError
from .modem import (
    MrskConfig,
    encode_bits_to_indices,
    ratio_alphabet,
    role_rotation,
    thresholds,
    _viterbi_symbol_ids,
    symbol_index_combos,
)
from .analysis import ftd_ber, hamming_table

__all__ = [
    "SimConfig",
    "BerEstimate",
    "BerCurve",
    "run_link",
    "sweep",
    "ParticleState",
    "new_particle_state",
    "release_molecules",
    "particle_step",
    "particle_hit_fraction",
    "ber_confidence",
    "SWEEPABLE_PARAMS",
]

SWEEPABLE_PARAMS = ("t_b", "Q", "d", "Omega", "N", "M")
_Z95 = 1.959963984540054
# particle frames stay short so the live molecule population (which is
# never pruned) remains bounded per independent burst
_PARTICLE_FRAME_CAP = 64


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run parameters.

    n_bits: bits to simulate (at least 1000 so interval reporting is
        meaningful); rounded up to whole symbols
    seed: master seed; every frame derives its own child stream
    engine: "statistical", "binomial" or "particle"
    particle_dt: Brownian time step (particle engine only)
    trials_cap: refusal bound on the requested bit count
    frame_symbols: symbols per independent frame (fixed partitioning
        keeps results worker-count independent)
    workers: process count for frame execution
    """

    n_bits: int = 100_000
    seed: int = 0
    engine: str = "statistical"
    particle_dt: float = 1e-3
    trials_cap: int = 10**9
    frame_symbols: int = 8192
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n_bits < 1000:
            raise ValueError(f"need at least 1000 bits for interval reporting, got {self.n_bits}")
        if self.engine not in ("statistical", "binomial", "particle"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.particle_dt <= 0:
            raise ValueError("particle_dt must be positive")
        if self.frame_symbols < 1 or self.workers < 1:
            raise ValueError("frame_symbols and workers must be positive")


@dataclass(frozen=True)
class BerEstimate:
    """Bit-error estimate with a 95% confidence interval.

    Analytic results are carried with bits=0 and a collapsed interval.
    """

    errors: int
    bits: int
    ber: float
    ci_low: float
    ci_high: float
    degenerate_frames: int = 0
    notes: tuple[str, ...] = ()

    @classmethod
    def from_counts(
        cls, errors: int, bits: int, degenerate_frames: int = 0, notes: tuple[str, ...] = ()
    ) -> "BerEstimate":
        lo, hi = ber_confidence(errors, bits)
        return cls(
            errors=errors,
            bits=bits,
            ber=errors / bits,
            ci_low=lo,
            ci_high=hi,
            degenerate_frames=degenerate_frames,
            notes=notes,
        )

    @classmethod
    def exact(cls, ber: float) -> "BerEstimate":
        return cls(errors=0, bits=0, ber=ber, ci_low=ber, ci_high=ber)


@dataclass(frozen=True)
class BerCurve:
    """One swept parameter against aligned BER estimates."""

    param_name: str
    param_values: tuple[float, ...]
    estimates: tuple[BerEstimate, ...]
    scheme: str = "mrsk"
    detector: str = "ftd"
    coding: str = "gray"

    def __post_init__(self) -> None:
        if len(self.param_values) != len(self.estimates):
            raise ValueError("values and estimates must align")


def wilson_interval(errors: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    phat = errors / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def ber_confidence(errors: int, bits: int) -> tuple[float, float]:
    """95% interval: rule of three at zero errors, Wilson below 30, normal above."""
    if bits <= 0:
        raise ValueError("need simulated bits to build an interval")
    if errors == 0:
        return 0.0, min(1.0, 3.0 / bits)
    if errors < 30:
        return wilson_interval(errors, bits)
    p = errors / bits
    half = _Z95 * math.sqrt(p * (1 - p) / bits)
    return max(0.0, p - half), min(1.0, p + half)


# ---------------------------------------------------------------------------
# particle engine
# ---------------------------------------------------------------------------


@dataclass
class ParticleState:
    """Mutable Brownian-dynamics state.

    The receiver sphere sits at the origin; the transmitter point is at
    (d, 0, 0).  ``interval_counts`` accumulates absorptions per molecule
    type since the last reset.
    """

    channel: ChannelParams
    positions: np.ndarray
    types: np.ndarray
    interval_counts: np.ndarray
    time: float = 0.0
    bridge_absorption: bool = True

    @property
    def alive(self) -> int:
        return self.positions.shape[0]


def new_particle_state(
    channel: ChannelParams, n_types: int, bridge_absorption: bool = True
) -> ParticleState:
    return ParticleState(
        channel=channel,
        positions=np.empty((0, 3)),
        types=np.empty(0, dtype=np.int64),
        interval_counts=np.zeros(n_types, dtype=np.int64),
        bridge_absorption=bridge_absorption,
    )


def release_molecules(state: ParticleState, counts_by_type) -> None:
    """Release molecules of each type at the transmitter point."""
    counts = np.asarray(counts_by_type, dtype=np.int64)
    if np.any(counts < 0):
        raise ValueError("release counts must be nonnegative")
    n = int(counts.sum())
    if n == 0:
        return
    pos = np.zeros((n, 3))
    pos[:, 0] = state.channel.d
    state.positions = np.concatenate([state.positions, pos])
    state.types = np.concatenate([state.types, np.repeat(np.arange(counts.size), counts)])


def particle_step(state: ParticleState, dt: float, rng: np.random.Generator) -> ParticleState:
    """Advance every molecule by one Brownian step and absorb hits.

    Each coordinate gains an independent N(0, 2 D dt) increment; any
    molecule ending within the receiver radius is removed and tallied.
    With ``bridge_absorption`` the within-step crossing probability
    exp(-delta0*delta1 / (D dt)) of the straddling Brownian bridge is
    also applied, which removes most of the finite-step undercount.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.alive == 0:
        state.time += dt
        return state
    ch = state.channel
    dist0 = np.sqrt(np.einsum("ij,ij->i", state.positions, state.positions))
    scale = math.sqrt(2.0 * ch.D * dt)
    if scale > 0.0:
        state.positions = state.positions + rng.normal(0.0, scale, size=state.positions.shape)
    dist1 = np.sqrt(np.einsum("ij,ij->i", state.positions, state.positions))
    absorbed = dist1 <= ch.r
    if state.bridge_absorption and ch.D > 0.0:
        outside = ~absorbed
        expo = (dist0[outside] - ch.r) * (dist1[outside] - ch.r) / (ch.D * dt)
        crossing = rng.random(expo.size) < np.exp(-np.minimum(expo, 700.0))
        absorbed[np.flatnonzero(outside)[crossing]] = True
    if np.any(absorbed):
        state.interval_counts += np.bincount(
            state.types[absorbed], minlength=state.interval_counts.size
        )
        keep = ~absorbed
        state.positions = state.positions[keep]
        state.types = state.types[keep]
    state.time += dt
    return state


def particle_hit_fraction(
    n_molecules: int,
    t: float,
    channel: ChannelParams,
    dt: float,
    rng: np.random.Generator,
    bridge_absorption: bool = True,
) -> float:
    """Absorbed fraction of a single burst after time t (particle oracle)."""
    state = new_particle_state(channel, 1, bridge_absorption)
    release_molecules(state, [n_molecules])
    for _ in range(int(round(t / dt))):
        particle_step(state, dt, rng)
    return float(state.interval_counts[0]) / n_molecules


def _arrivals_particle(
    emissions: np.ndarray,
    channel: ChannelParams,
    dt: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-interval absorbed counts for a frame of emissions (K, N)."""
    k_symbols, n_types = emissions.shape
    state = new_particle_state(channel, n_types)
    n_steps = max(1, int(round(channel.Ts / dt)))
    counts = np.zeros((k_symbols, n_types))
    for k in range(k_symbols):
        release_molecules(state, np.rint(emissions[k]).astype(np.int64))
        for _ in range(n_steps):
            particle_step(state, dt, rng)
        counts[k] = state.interval_counts
        state.interval_counts = np.zeros(n_types, dtype=np.int64)
    return counts


# ---------------------------------------------------------------------------
# statistical / binomial engines and the link pipeline
# ---------------------------------------------------------------------------


def _arrivals_statistical(
    emissions: np.ndarray, taps: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    mu = signal.lfilter(taps, [1.0], emissions, axis=0)
    var = signal.lfilter(taps * (1.0 - taps), [1.0], emissions, axis=0)
    return mu + np.sqrt(var) * rng.standard_normal(emissions.shape)


def _arrivals_binomial(
    emissions: np.ndarray, taps: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    e_int = np.rint(emissions).astype(np.int64)
    k_symbols = e_int.shape[0]
    counts = np.zeros(e_int.shape, dtype=np.int64)
    for m, p in enumerate(taps):
        if m >= k_symbols:
            break
        counts[m:] += rng.binomial(e_int[: k_symbols - m], p)
    return counts.astype(float)


def _detect_ftd_bulk(counts: np.ndarray, config: MrskConfig) -> tuple[np.ndarray, int]:
    eps = config.denom_eps
    den = counts[:, :-1]
    degenerate = np.any(den <= eps, axis=1)
    ratios = counts[:, 1:] / np.maximum(den, eps)
    idx0 = np.searchsorted(thresholds(config), ratios, side="right")
    idx0[degenerate] = 0
    return idx0, int(degenerate.sum())


def _detect_admc_bulk(
    counts: np.ndarray, config: MrskConfig, taps: np.ndarray
) -> tuple[np.ndarray, int]:
    if taps.size < 2:
        raise ValueError("memory cancellation needs channel memory L >= 2")
    alphabet = ratio_alphabet(config)
    edges = thresholds(config)
    eps = config.denom_eps
    p2 = taps[1]
    out = np.empty((counts.shape[0], config.N - 1), dtype=np.int64)
    clamped_frames = 0
    prev_qty = None
    for k in range(counts.shape[0]):
        c = counts[k].copy()
        if prev_qty is not None:
            c -= p2 * prev_qty
        low = c <= eps
        if low.any():
            clamped_frames += 1
            c = np.maximum(c, eps)
        i0 = np.searchsorted(edges, c[1:] / c[:-1], side="right")
        out[k] = i0
        prev_qty = config.Q * np.concatenate(([1.0], np.cumprod(alphabet[i0])))
    return out, clamped_frames


def _detect_mlsd_bulk(
    counts: np.ndarray, config: MrskConfig, taps: np.ndarray
) -> tuple[np.ndarray, int]:
    eps = config.denom_eps
    den = counts[:, :-1]
    degenerate = np.any(den <= eps, axis=1)
    ratios = counts[:, 1:] / np.maximum(den, eps)
    combos = symbol_index_combos(config)
    out = np.empty((counts.shape[0], config.N - 1), dtype=np.int64)
    for start in range(0, counts.shape[0], config.mlsd_window):
        stop = min(start + config.mlsd_window, counts.shape[0])
        ids = _viterbi_symbol_ids(ratios[start:stop], config, taps)
        out[start:stop] = combos[ids]
    return out, int(degenerate.sum())


def _simulate_frame(
    mrsk: MrskConfig,
    channel: ChannelParams,
    sim: SimConfig,
    frame_index: int,
    n_symbols: int,
) -> tuple[int, int, int]:
    """Simulate one independent frame; returns (errors, bits, degenerate)."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=sim.seed, spawn_key=(frame_index,)))
    bits = rng.integers(0, 2, size=n_symbols * mrsk.bits_per_symbol, dtype=np.uint8)
    idx0 = encode_bits_to_indices(bits, mrsk)
    alphabet = ratio_alphabet(mrsk)
    emissions = mrsk.Q * np.concatenate(
        [np.ones((n_symbols, 1)), np.cumprod(alphabet[idx0], axis=1)], axis=1
    )
    if mrsk.rotate_roles:
        shifts = np.array([role_rotation(k, mrsk) for k in range(n_symbols)])
        for s in range(1, mrsk.N):
            rows = shifts == s
            emissions[rows] = np.roll(emissions[rows], s, axis=1)

    taps = cir(channel).array
    if sim.engine == "statistical":
        counts = _arrivals_statistical(emissions, taps, rng)
    elif sim.engine == "binomial":
        counts = _arrivals_binomial(emissions, taps, rng)
    else:
        counts = _arrivals_particle(emissions, channel, sim.particle_dt, rng)

    if mrsk.rotate_roles:
        for s in range(1, mrsk.N):
            rows = shifts == s
            counts[rows] = np.roll(counts[rows], -s, axis=1)

    if mrsk.detector == "ftd":
        det_idx0, degenerate = _detect_ftd_bulk(counts, mrsk)
    elif mrsk.detector == "admc":
        det_idx0, degenerate = _detect_admc_bulk(counts, mrsk, taps)
    else:
        det_idx0, degenerate = _detect_mlsd_bulk(counts, mrsk, taps)

    ham = hamming_table(mrsk.M, mrsk.coding)
    errors = int(ham[idx0, det_idx0].sum())
    return errors, bits.size, degenerate


def run_link(mrsk: MrskConfig, channel: ChannelParams, sim: SimConfig) -> BerEstimate:
    """End-to-end Monte Carlo BER of one link configuration.

    Generates uniform bits, encodes, superposes the full L-tap
    interference through the chosen arrival engine, detects with the
    configured detector and counts bit errors.  Frames are independent
    bursts (cold channel at each frame start), so partial results add
    associatively and the estimate is identical for any worker count.
    """
    if sim.n_bits > sim.trials_cap:
        raise CapacityError(
            f"requested {sim.n_bits} bits exceeds trials_cap={sim.trials_cap}; "
            f"raise the cap to at least {sim.n_bits}"
        )
    bps = mrsk.bits_per_symbol
    n_symbols = -(-sim.n_bits // bps)
    frame_symbols = sim.frame_symbols
    if sim.engine == "particle":
        frame_symbols = min(frame_symbols, _PARTICLE_FRAME_CAP)
    frames = []
    start = 0
    while start < n_symbols:
        size = min(frame_symbols, n_symbols - start)
        frames.append((len(frames), size))
        start += size

    notes: tuple[str, ...] = ()
    if sim.engine == "particle":
        step_rms = math.sqrt(2.0 * channel.D * sim.particle_dt)
        if step_rms > channel.r / 5.0:
            notes = (
                f"particle step rms {step_rms:.3g} um exceeds r/5 = {channel.r / 5.0:.3g} um; "
                "absorption accuracy degrades at this dt",
            )

    if sim.workers > 1 and len(frames) > 1:
        with ProcessPoolExecutor(max_workers=sim.workers) as pool:
            results = list(
                pool.map(
                    _simulate_frame,
                    [mrsk] * len(frames),
                    [channel] * len(frames),
                    [sim] * len(frames),
                    [i for i, _ in frames],
                    [n for _, n in frames],
                )
            )
    else:
        results = [_simulate_frame(mrsk, channel, sim, i, n) for i, n in frames]

    errors = sum(r[0] for r in results)
    bits = sum(r[1] for r in results)
    degenerate = sum(r[2] for r in results)
    return BerEstimate.from_counts(errors, bits, degenerate_frames=degenerate, notes=notes)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _child_seed(seed: int, index: int) -> int:
    return int(
        np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(1, np.uint64)[0]
    )


def _configs_for(
    param: str,
    value: float,
    mrsk: MrskConfig,
    channel: ChannelParams,
    t_b: float,
) -> tuple[MrskConfig, ChannelParams]:
    if param == "t_b":
        m, tb = mrsk, float(value)
    elif param == "Q":
        m, tb = replace(mrsk, Q=float(value)), t_b
    elif param == "Omega":
        m, tb = replace(mrsk, Omega=float(value)), t_b
    elif param == "N":
        m, tb = replace(mrsk, N=int(value)), t_b
    elif param == "M":
        m, tb = replace(mrsk, M=int(value)), t_b
    elif param == "d":
        m, tb = mrsk, t_b
        channel = replace(channel, d=float(value))
    else:
        raise ValueError(f"unknown sweep parameter {param!r}; valid names: {', '.join(SWEEPABLE_PARAMS)}")
    # bit-time normalization: symbol time tracks M(N-1) so schemes compare
    # at equal data rate
    channel = replace(channel, Ts=m.bits_per_symbol * tb)
    return m, channel


def sweep(
    param_name: str,
    values,
    mrsk: MrskConfig,
    channel: ChannelParams,
    sim: SimConfig,
    engine: str | None = None,
    t_b: float | None = None,
) -> BerCurve:
    """BER against one swept parameter, everything else held at base.

    ``engine`` may name any simulation engine or "analytic" (closed-form
    fixed-threshold BER).  The base bit time defaults to the one implied
    by the base channel and modem configuration.
    """
    values = list(values)
    if param_name not in SWEEPABLE_PARAMS:
        raise ValueError(
            f"unknown sweep parameter {param_name!r}; valid names: {', '.join(SWEEPABLE_PARAMS)}"
        )
    if not values:
        raise ValueError("sweep needs at least one value")
    engine = engine or sim.engine
    if t_b is None:
        t_b = channel.Ts / mrsk.bits_per_symbol
    estimates = []
    for i, value in enumerate(values):
        m, ch = _configs_for(param_name, value, mrsk, channel, t_b)
        if engine == "analytic":
            if m.detector != "ftd":
                raise ValueError("the analytic path covers the fixed-threshold detector only")
            estimates.append(BerEstimate.exact(ftd_ber(m, ch).ber))
        else:
            sim_i = replace(sim, engine=engine, seed=_child_seed(sim.seed, i))
            estimates.append(run_link(m, ch, sim_i))
    return BerCurve(
        param_name=param_name,
        param_values=tuple(float(v) for v in values),
        estimates=tuple(estimates),
        scheme="mrsk",
        detector=mrsk.detector,
        coding=mrsk.coding,
    )
