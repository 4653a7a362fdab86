import itertools
import math

import numpy as np
import pytest

from mrsk.channel import ChannelParams, Cir, cir
from mrsk.errors import CapacityError
from mrsk.modem import (
    DetectorStats,
    MrskConfig,
    RatioSymbol,
    ReceivedFrame,
    _MlsdMetric,
    _viterbi_symbol_ids,
    average_molecules_per_bit,
    codewords,
    decode_bits,
    detect_admc,
    detect_ftd,
    detect_mlsd,
    encode_bits,
    quantities,
    ratio_alphabet,
    symbol_index_combos,
    symbol_quantities,
    thresholds,
)

CH = ChannelParams(Ts=1.0, L=5)


def mlsd_exhaustive(ratios: np.ndarray, config: MrskConfig, taps: np.ndarray) -> list[int]:
    """Brute-force oracle: score every symbol sequence, keep the best."""
    L, S = len(taps), config.symbol_count
    metric = _MlsdMetric(config, taps)
    best_score, best_seq = -np.inf, None
    for seq in itertools.product(range(S), repeat=ratios.shape[0]):
        score = 0.0
        for k in range(ratios.shape[0]):
            window = seq[max(0, k - L + 1) : k + 1]
            score = score + metric(tuple(window), ratios[k])
        if score > best_score:
            best_score, best_seq = score, list(seq)
    return best_seq


def exact_mean_ratios(history: list[int], config: MrskConfig, taps: np.ndarray) -> np.ndarray:
    """Noise-free received ratios for a symbol-id history (cold start)."""
    qty = symbol_quantities(config)
    T = len(history)
    out = np.empty((T, config.N - 1))
    for k in range(T):
        window = history[max(0, k - len(taps) + 1) : k + 1]
        emissions = qty[window]
        mu = taps[: len(window)][::-1] @ emissions
        out[k] = mu[1:] / mu[:-1]
    return out


class TestAlphabet:
    def test_binary_alphabet(self):
        a = ratio_alphabet(MrskConfig(M=1))
        assert a == pytest.approx([math.exp(-1), math.e], rel=1e-15)

    def test_m3_exponent_ladder(self):
        a = ratio_alphabet(MrskConfig(M=3))
        expected = np.exp(-1.0 + 2.0 * np.arange(8) / 7.0)
        assert a == pytest.approx(expected, rel=1e-14)

    def test_endpoints_product_is_one(self):
        for M in (1, 2, 3, 4):
            for omega in (1.5, math.e, 3.0):
                a = ratio_alphabet(MrskConfig(M=M, Omega=omega))
                assert a[0] * a[-1] == pytest.approx(1.0, abs=1e-15)

    def test_geometric_spacing(self):
        for M in (2, 3):
            a = ratio_alphabet(MrskConfig(M=M, Omega=2.0))
            factors = a[1:] / a[:-1]
            assert factors == pytest.approx(2.0 ** (2.0 / (2**M - 1)), rel=1e-12)

    def test_strictly_increasing(self):
        a = ratio_alphabet(MrskConfig(M=3, Omega=1.8))
        assert np.all(np.diff(a) > 0)


class TestThresholds:
    def test_single_threshold_exactly_one(self):
        assert thresholds(MrskConfig(M=1))[0] == 1.0

    def test_m3_values(self):
        e = thresholds(MrskConfig(M=3))
        expected = [math.exp(-1.0 + (2 * i - 1) / 7.0) for i in range(1, 8)]
        assert np.max(np.abs(e - np.array(expected))) < 1e-15
        assert e[0] == pytest.approx(0.4244, abs=1e-4)

    def test_geometric_mean_property(self):
        for M in (1, 2, 3):
            cfg = MrskConfig(M=M, Omega=2.3)
            a, e = ratio_alphabet(cfg), thresholds(cfg)
            assert e**2 == pytest.approx(a[:-1] * a[1:], rel=1e-12)

    def test_interleaving(self):
        cfg = MrskConfig(M=3, Omega=math.e)
        a, e = ratio_alphabet(cfg), thresholds(cfg)
        assert np.all(a[:-1] < e) and np.all(e < a[1:])


class TestCoding:
    def test_binary_bit_one_maps_to_upper_index(self):
        cfg = MrskConfig(N=2, M=1, coding="binary")
        assert encode_bits([1], cfg)[0].indices == (2,)
        assert encode_bits([0], cfg)[0].indices == (1,)

    def test_gray_m2_sequence(self):
        cfg = MrskConfig(N=2, M=2, coding="gray")
        carried = [tuple(decode_bits([RatioSymbol((i,))], cfg)) for i in range(1, 5)]
        assert carried == [(0, 0), (0, 1), (1, 1), (1, 0)]

    def test_roundtrip_both_codings(self):
        rng = np.random.default_rng(0)
        for N in (2, 3, 4):
            for M in (1, 2, 3):
                for coding in ("binary", "gray"):
                    cfg = MrskConfig(N=N, M=M, coding=coding)
                    bits = rng.integers(0, 2, size=cfg.bits_per_symbol * 40, dtype=np.uint8)
                    assert np.array_equal(decode_bits(encode_bits(bits, cfg), cfg), bits)

    def test_gray_differs_from_binary(self):
        cfg_b = MrskConfig(N=2, M=2, coding="binary")
        cfg_g = MrskConfig(N=2, M=2, coding="gray")
        bits = np.array([1, 0], dtype=np.uint8)
        assert encode_bits(bits, cfg_b)[0] != encode_bits(bits, cfg_g)[0]

    def test_gray_adjacency(self):
        for M in (2, 3, 4):
            codes = codewords(M, "gray")
            diffs = [bin(int(codes[i]) ^ int(codes[i + 1])).count("1") for i in range(len(codes) - 1)]
            assert all(d == 1 for d in diffs)
            binary = codewords(M, "binary")
            bdiffs = [bin(int(binary[i]) ^ int(binary[i + 1])).count("1") for i in range(len(binary) - 1)]
            assert max(bdiffs) > 1

    def test_length_must_divide(self):
        with pytest.raises(ValueError):
            encode_bits([1, 0, 1], MrskConfig(N=2, M=2))

    def test_rejects_non_bits(self):
        with pytest.raises(ValueError):
            encode_bits([0, 2], MrskConfig(N=2, M=1))


class TestQuantities:
    def test_binary_symbols(self):
        cfg = MrskConfig(N=2, M=1, Q=1000.0)
        up = quantities(encode_bits([1], cfg)[0], cfg)
        down = quantities(encode_bits([0], cfg)[0], cfg)
        assert up.quantities == pytest.approx((1000.0, 2718.2818284590453), rel=1e-12)
        assert down.quantities == pytest.approx((1000.0, 367.87944117144233), rel=1e-12)

    def test_cumulative_product(self):
        cfg = MrskConfig(N=3, M=1, Q=1000.0)
        v = quantities(RatioSymbol((2, 2)), cfg)
        assert v.quantities == pytest.approx(
            (1000.0, 1000.0 * math.e, 1000.0 * math.e**2), rel=1e-12
        )

    def test_reference_count_and_range(self):
        rng = np.random.default_rng(4)
        cfg = MrskConfig(N=4, M=2, Q=500.0)
        for _ in range(20):
            sym = RatioSymbol(tuple(rng.integers(1, 5, size=3)))
            q = quantities(sym, cfg).array
            assert q[0] == cfg.Q
            assert np.all(q >= cfg.Q * cfg.Omega ** -(cfg.N - 1) - 1e-9)
            assert np.all(q <= cfg.Q * cfg.Omega ** (cfg.N - 1) + 1e-9)

    def test_wrong_arity_rejected(self):
        with pytest.raises(ValueError):
            quantities(RatioSymbol((1, 1)), MrskConfig(N=2, M=1))


class TestAverageMolecules:
    def test_binary_reference_value(self):
        # mean of the two symbol totals: (3718.28 + 1367.88) / 2
        val = average_molecules_per_bit(MrskConfig(N=2, M=1, Q=1000.0))
        assert val == pytest.approx(2543.0806348152437, rel=1e-12)

    def test_matches_direct_enumeration(self):
        for N in (2, 3):
            for M in (1, 2):
                cfg = MrskConfig(N=N, M=M, Q=700.0)
                totals = symbol_quantities(cfg).sum(axis=1)
                assert average_molecules_per_bit(cfg) == pytest.approx(
                    totals.mean() / cfg.bits_per_symbol, rel=1e-12
                )

    def test_scales_linearly_in_q(self):
        a = average_molecules_per_bit(MrskConfig(N=3, M=2, Q=100.0))
        b = average_molecules_per_bit(MrskConfig(N=3, M=2, Q=900.0))
        assert b == pytest.approx(9 * a, rel=1e-12)


class TestFtd:
    def test_basic_buckets(self):
        cfg = MrskConfig(N=2, M=1)
        frame = ReceivedFrame.from_counts([1000.0, 900.0], cfg)  # ratio 0.9
        assert detect_ftd(frame, cfg).indices == (1,)
        frame = ReceivedFrame.from_counts([1000.0, 2500.0], cfg)  # ratio 2.5
        assert detect_ftd(frame, cfg).indices == (2,)

    def test_boundary_goes_up(self):
        cfg = MrskConfig(N=2, M=1)
        frame = ReceivedFrame.from_counts([1000.0, 1000.0], cfg)  # ratio exactly 1
        assert detect_ftd(frame, cfg).indices == (2,)

    def test_scale_invariance(self):
        rng = np.random.default_rng(8)
        cfg = MrskConfig(N=3, M=2)
        for _ in range(50):
            counts = rng.uniform(50.0, 5000.0, size=3)
            base = detect_ftd(ReceivedFrame.from_counts(counts, cfg), cfg)
            for c in (0.25, 3.0, 1234.5):
                scaled = detect_ftd(ReceivedFrame.from_counts(c * counts, cfg), cfg)
                assert scaled == base

    def test_degenerate_frame(self):
        cfg = MrskConfig(N=2, M=1)
        stats = DetectorStats()
        frame = ReceivedFrame.from_counts([0.0, 500.0], cfg)
        assert frame.degenerate
        assert detect_ftd(frame, cfg, stats).indices == (1,)
        assert stats.degenerate_frames == 1


class TestAdmc:
    def test_zero_second_tap_equals_ftd(self):
        cfg = MrskConfig(N=2, M=1)
        taps = Cir((0.3, 0.0))
        rng = np.random.default_rng(12)
        prev = RatioSymbol((2,))
        for _ in range(30):
            frame = ReceivedFrame.from_counts(rng.uniform(100, 3000, size=2), cfg)
            assert detect_admc(frame, prev, taps, cfg) == detect_ftd(frame, cfg)

    def test_first_symbol_equals_ftd(self):
        cfg = MrskConfig(N=2, M=1)
        taps = cir(CH)
        frame = ReceivedFrame.from_counts([400.0, 380.0], cfg)
        assert detect_admc(frame, None, taps, cfg) == detect_ftd(frame, cfg)

    def test_exact_interference_cancellation(self):
        # counts at the exact two-tap means: previous symbol carried ratio e,
        # current carries 1/e; the adjusted ratio recovers 1/e exactly
        cfg = MrskConfig(N=2, M=1, Q=1000.0)
        taps = cir(CH)
        p1, p2 = taps.p_hit[0], taps.p_hit[1]
        prev_qty = quantities(RatioSymbol((2,)), cfg).array
        cur_qty = quantities(RatioSymbol((1,)), cfg).array
        counts = p1 * cur_qty + p2 * prev_qty
        frame = ReceivedFrame.from_counts(counts, cfg)
        raw_ratio = counts[1] / counts[0]
        adjusted = counts - p2 * prev_qty
        assert adjusted[1] / adjusted[0] == pytest.approx(math.exp(-1), rel=1e-12)
        assert abs(adjusted[1] / adjusted[0] - math.exp(-1)) < abs(raw_ratio - math.exp(-1))
        assert detect_admc(frame, RatioSymbol((2,)), taps, cfg).indices == (1,)

    def test_clamp_counted(self):
        cfg = MrskConfig(N=2, M=1, Q=1000.0)
        taps = cir(CH)
        stats = DetectorStats()
        frame = ReceivedFrame.from_counts([10.0, 10.0], cfg)
        detect_admc(frame, RatioSymbol((2,)), taps, cfg, stats)
        assert stats.admc_clamps > 0

    def test_requires_memory(self):
        cfg = MrskConfig(N=2, M=1)
        with pytest.raises(ValueError):
            detect_admc(
                ReceivedFrame.from_counts([1.0, 1.0], cfg), None, Cir((0.3,)), cfg
            )

    def test_equalizes_ratio_residuals(self):
        # over 10^4 symbols at the default link, cancelling the one-tap
        # memory must not widen the spread of (received - transmitted) ratio
        cfg = MrskConfig(N=2, M=1, Q=1000.0)
        ch = ChannelParams(Ts=0.5, L=5)
        taps = cir(ch).array
        rng = np.random.default_rng(31)
        n = 10_000
        alphabet = ratio_alphabet(cfg)
        idx0 = rng.integers(0, 2, size=n)
        emissions = np.column_stack([np.full(n, cfg.Q), cfg.Q * alphabet[idx0]])
        from scipy.signal import lfilter

        mu = lfilter(taps, [1.0], emissions, axis=0)
        var = lfilter(taps * (1 - taps), [1.0], emissions, axis=0)
        counts = mu + np.sqrt(var) * rng.standard_normal(emissions.shape)
        raw_residual = counts[:, 1] / counts[:, 0] - alphabet[idx0]

        adj_residual = np.empty(n)
        prev = None
        for k in range(n):
            frame = ReceivedFrame.from_counts(counts[k], cfg)
            c = counts[k].copy()
            if prev is not None:
                c = c - taps[1] * quantities(prev, cfg).array
            c = np.maximum(c, cfg.denom_eps)
            adj_residual[k] = c[1] / c[0] - alphabet[idx0[k]]
            prev = detect_admc(frame, prev, cir(ch), cfg)
        assert adj_residual.var() <= raw_residual.var()


class TestMlsd:
    def test_memoryless_equals_ftd_on_exact_means(self):
        cfg = MrskConfig(N=2, M=1, mlsd_metric="gaussian")
        taps = cir(ChannelParams(Ts=1.0, L=1)).array
        for hist in itertools.product(range(2), repeat=4):
            z = exact_mean_ratios(list(hist), cfg, taps)
            ids = _viterbi_symbol_ids(z, cfg, taps)
            ftd_ids = [
                detect_ftd(
                    ReceivedFrame.from_counts([1.0, float(r)], cfg), cfg
                ).indices[0]
                - 1
                for r in z[:, 0]
            ]
            assert ids == ftd_ids == list(hist)

    def test_noiseless_recovery_all_histories(self):
        cfg = MrskConfig(N=2, M=1)
        taps = cir(ChannelParams(Ts=0.5, L=3)).array
        for hist in itertools.product(range(2), repeat=3):
            z = exact_mean_ratios(list(hist), cfg, taps)
            assert _viterbi_symbol_ids(z, cfg, taps) == list(hist)

    @pytest.mark.parametrize("metric", ["solid", "gaussian"])
    def test_trellis_equals_exhaustive(self, metric):
        cfg = MrskConfig(N=2, M=1, mlsd_metric=metric)
        taps = cir(ChannelParams(Ts=0.5, L=3)).array
        rng = np.random.default_rng(5)
        for _ in range(100):
            z = np.exp(rng.normal(0.0, 1.2, size=(6, 1)))
            assert _viterbi_symbol_ids(z, cfg, taps) == mlsd_exhaustive(z, cfg, taps)

    def test_returns_ratio_symbols(self):
        cfg = MrskConfig(N=2, M=1)
        taps = cir(ChannelParams(Ts=0.5, L=3))
        frames = [ReceivedFrame.from_counts([300.0, 900.0], cfg) for _ in range(4)]
        out = detect_mlsd(frames, cfg, taps)
        assert len(out) == 4 and all(isinstance(s, RatioSymbol) for s in out)

    def test_state_cap_refusal_names_requirement(self):
        cfg = MrskConfig(N=4, M=3)
        taps = cir(ChannelParams(Ts=0.5, L=5))
        frames = np.ones((2, 3))
        with pytest.raises(CapacityError, match=str(cfg.symbol_count ** 4)):
            detect_mlsd(frames, cfg, taps, state_cap=1 << 16)

    def test_window_limit_enforced(self):
        cfg = MrskConfig(N=2, M=1, mlsd_window=2)
        taps = cir(ChannelParams(Ts=0.5, L=3))
        with pytest.raises(ValueError):
            detect_mlsd(np.ones((3, 1)), cfg, taps)


class TestEndToEnd:
    def test_noiseless_identity_memoryless(self):
        # encode -> quantities -> exact arrival means -> detect -> decode
        rng = np.random.default_rng(77)
        ch = ChannelParams(Ts=1.0, L=1)
        p1 = cir(ch).p_hit[0]
        for N in (2, 3, 4):
            for M in (1, 2, 3):
                cfg = MrskConfig(N=N, M=M)
                bits = rng.integers(0, 2, size=cfg.bits_per_symbol * 25, dtype=np.uint8)
                symbols = encode_bits(bits, cfg)
                detected = []
                for sym in symbols:
                    counts = p1 * quantities(sym, cfg).array
                    detected.append(detect_ftd(ReceivedFrame.from_counts(counts, cfg), cfg))
                assert np.array_equal(decode_bits(detected, cfg), bits)

    def test_symbol_table_order_matches_combos(self):
        cfg = MrskConfig(N=3, M=2)
        combos = symbol_index_combos(cfg)
        alphabet = ratio_alphabet(cfg)
        qty = symbol_quantities(cfg)
        for sid in (0, 5, 13, 15):
            sym = RatioSymbol(tuple(int(i) + 1 for i in combos[sid]))
            assert quantities(sym, cfg).array == pytest.approx(qty[sid], rel=1e-14)
        assert combos.shape == (16, 2)
        assert np.all(alphabet[combos[0]] == alphabet[0])
