"""Oracle tests for the CRC gate and the turbo coding chain."""

import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import logsumexp

from dapilot.channel import ConfigError
from dapilot.codec import (
    CodeConfig,
    crc16_append,
    crc16_check,
    crc16_check_batch,
    crc16_remainder,
    encode_block,
    interleaver_permutation,
    payload_bits_per_block,
    reconstruct_block,
    turbo_decode,
    turbo_encode,
)
from dapilot.modulation import make_qam4
from dapilot.turbo import build_trellis, component_llrs, rsc_encode

# z^16 + z^15 + z^2 + 1, highest power first
CRC_POLY_BITS = [1, 1] + [0] * 12 + [1, 0, 1]


def crc_long_division(bits):
    """Textbook polynomial long division over GF(2); the CRC oracle."""
    work = list(bits) + [0] * 16
    for i in range(len(bits)):
        if work[i]:
            for j, p in enumerate(CRC_POLY_BITS):
                work[i + j] ^= p
    return int("".join(str(b) for b in work[-16:]), 2)


def rsc_reference(bits, terminate):
    """Hand-written (15, 13) octal RSC: a_k = u ^ a_{k-2} ^ a_{k-3}, p_k = a_k ^ a_{k-1} ^ a_{k-3}."""
    r = [0, 0, 0]
    par = []
    for u in bits:
        a = int(u) ^ r[1] ^ r[2]
        par.append(a ^ r[0] ^ r[2])
        r = [a, r[0], r[1]]
    tail_s, tail_p = [], []
    if terminate:
        for _ in range(3):
            u = r[1] ^ r[2]
            tail_s.append(u)
            tail_p.append(r[0] ^ r[2])  # parity with a = 0
            r = [0, r[0], r[1]]
        assert r == [0, 0, 0]
    return par, tail_s, tail_p


def brute_force_llrs(l_sys, l_par, l_apr, l_tail_sys=None, l_tail_par=None):
    """Exact posterior LLRs by summing over every input sequence."""
    k_info = len(l_sys)
    terminated = l_tail_sys is not None
    seqs = list(itertools.product([0, 1], repeat=k_info))
    scores = np.empty(len(seqs))
    for i, u in enumerate(seqs):
        par, ts, tp = rsc_reference(u, terminated)
        s = sum(
            0.5 * (1 - 2 * u[k]) * (l_sys[k] + l_apr[k]) + 0.5 * (1 - 2 * par[k]) * l_par[k]
            for k in range(k_info)
        )
        if terminated:
            s += sum(
                0.5 * (1 - 2 * ts[t]) * l_tail_sys[t] + 0.5 * (1 - 2 * tp[t]) * l_tail_par[t]
                for t in range(3)
            )
        scores[i] = s
    out = np.empty(k_info)
    for k in range(k_info):
        mask = np.array([u[k] == 0 for u in seqs])
        out[k] = logsumexp(scores[mask]) - logsumexp(scores[~mask])
    return out


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8)).astype(np.int8)


class TestCrc16:
    def test_catalog_vector(self):
        bits = bytes_to_bits(b"123456789")
        assert crc16_remainder(bits) == 0xFEE8
        assert crc_long_division(bits) == 0xFEE8

    def test_matches_long_division_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            bits = rng.integers(0, 2, size=int(rng.integers(1, 200))).astype(np.int8)
            assert crc16_remainder(bits) == crc_long_division(bits)

    def test_append_check_round_trip(self):
        rng = np.random.default_rng(22)
        for _ in range(1000):
            bits = rng.integers(0, 2, size=64).astype(np.int8)
            assert crc16_check(crc16_append(bits))

    def test_single_bit_flips_detected(self):
        block = crc16_append(np.ones(48, dtype=np.int8))
        for i in range(block.size):
            flipped = block.copy()
            flipped[i] ^= 1
            assert not crc16_check(flipped)

    def test_undetected_error_rate_smoke(self):
        """Random nonzero corruptions slip through at roughly 2^-16, not more."""
        rng = np.random.default_rng(23)
        n_trials = 100_000
        block = crc16_append(rng.integers(0, 2, size=496).astype(np.int8))
        errors = rng.integers(0, 2, size=(n_trials, block.size)).astype(np.int8)
        errors[errors.sum(axis=1) == 0, 0] = 1  # force nonzero patterns
        undetected = crc16_check_batch(block[None, :] ^ errors).sum()
        assert undetected / n_trials < 1e-4

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            crc16_remainder(np.empty(0, dtype=np.int8))


class TestTrellis:
    def test_encoder_matches_reference(self):
        trellis = build_trellis(0o15, 0o13)
        rng = np.random.default_rng(31)
        for terminate in (False, True):
            bits = rng.integers(0, 2, size=50).astype(np.int8)
            par, ts, tp = rsc_encode(bits, trellis, terminate)
            ref_par, ref_ts, ref_tp = rsc_reference(bits, terminate)
            assert par.tolist() == ref_par
            assert ts.tolist() == ref_ts
            assert tp.tolist() == ref_tp

    def test_component_bcjr_matches_brute_force(self):
        """Exhaustive 2^8 enumeration pins the exact log-domain BCJR."""
        trellis = build_trellis(0o15, 0o13)
        rng = np.random.default_rng(32)
        for case in range(4):
            l_sys = rng.normal(0, 3, size=8)
            l_par = rng.normal(0, 3, size=8)
            l_apr = rng.normal(0, 1, size=8) if case % 2 else np.zeros(8)
            got = component_llrs(l_sys, l_par, l_apr, trellis)
            want = brute_force_llrs(l_sys, l_par, l_apr)
            assert_allclose(got, want, atol=1e-8)

    def test_component_bcjr_terminated_matches_brute_force(self):
        trellis = build_trellis(0o15, 0o13)
        rng = np.random.default_rng(33)
        l_sys = rng.normal(0, 3, size=8)
        l_par = rng.normal(0, 3, size=8)
        l_apr = rng.normal(0, 1, size=8)
        l_ts = rng.normal(0, 3, size=3)
        l_tp = rng.normal(0, 3, size=3)
        got = component_llrs(l_sys, l_par, l_apr, trellis, l_ts, l_tp)
        want = brute_force_llrs(l_sys, l_par, l_apr, l_ts, l_tp)
        assert_allclose(got, want, atol=1e-8)


class TestTurbo:
    cfg = CodeConfig()

    def test_rate_half_structure(self):
        info = np.random.default_rng(41).integers(0, 2, size=512).astype(np.int8)
        coded = turbo_encode(info, self.cfg)
        assert coded.size == 1024
        assert np.array_equal(coded[:512], info)

    def test_all_zero_input(self):
        coded = turbo_encode(np.zeros(512, dtype=np.int8), self.cfg)
        assert not coded.any()

    def test_deterministic(self):
        info = np.random.default_rng(42).integers(0, 2, size=512).astype(np.int8)
        assert np.array_equal(turbo_encode(info, self.cfg), turbo_encode(info, self.cfg))

    def test_interleaver_is_a_permutation(self):
        perm = interleaver_permutation(self.cfg, 512)
        assert sorted(perm.tolist()) == list(range(512))

    def test_noiseless_round_trip(self):
        rng = np.random.default_rng(43)
        for _ in range(5):
            info = rng.integers(0, 2, size=512).astype(np.int8)
            coded = turbo_encode(info, self.cfg)
            llrs = 50.0 * (1 - 2 * coded.astype(np.float64))
            assert np.array_equal(turbo_decode(llrs, self.cfg), info)

    def test_all_zero_llrs_decode_to_zero(self):
        assert not turbo_decode(np.zeros(1024), self.cfg).any()

    def test_monte_carlo_6db_bpsk(self):
        """200 blocks through BPSK AWGN at Eb/N0 = 6 dB decode error-free."""
        rng = np.random.default_rng(44)
        esn0 = 0.5 * 10 ** 0.6  # rate-1/2 coded-bit SNR
        noise_var = 1.0 / (2.0 * esn0)
        errors = 0
        for _ in range(200):
            info = rng.integers(0, 2, size=512).astype(np.int8)
            coded = turbo_encode(info, self.cfg)
            y = (1.0 - 2.0 * coded) + rng.normal(0.0, np.sqrt(noise_var), size=coded.size)
            decoded = turbo_decode(2.0 * y / noise_var, self.cfg)
            errors += not np.array_equal(decoded, info)
        assert errors == 0

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            CodeConfig(rsc_feedforward=0o17)
        with pytest.raises(ConfigError):
            CodeConfig(code_rate=0.25)
        with pytest.raises(ConfigError):
            CodeConfig(decoder_iterations=0)


class TestBlockPipeline:
    cfg = CodeConfig()
    const = make_qam4()

    def test_payload_budget(self):
        assert payload_bits_per_block(1024) == 496

    def test_reconstruct_equals_transmit(self):
        rng = np.random.default_rng(51)
        payload = rng.integers(0, 2, size=496).astype(np.int8)
        info, x = encode_block(payload, self.cfg, n_tx=2, const=self.const)
        assert info.size == 512 and x.shape == (2, 256)
        assert crc16_check(info)
        assert np.array_equal(reconstruct_block(info, self.cfg, 2, self.const), x)

    def test_crc_passing_corruption_changes_symbols(self):
        """An error pattern divisible by the CRC polynomial evades the gate."""
        rng = np.random.default_rng(52)
        payload = rng.integers(0, 2, size=496).astype(np.int8)
        info, x = encode_block(payload, self.cfg, n_tx=2, const=self.const)
        corrupted = info.copy()
        for j, p in enumerate(CRC_POLY_BITS):
            corrupted[100 + j] ^= p
        assert crc16_check(corrupted)
        assert not np.array_equal(corrupted, info)
        x_rec = reconstruct_block(corrupted, self.cfg, 2, self.const)
        assert not np.array_equal(x_rec, x)
