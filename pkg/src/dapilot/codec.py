"""Bit-level transmit chain: CRC-16 gate, turbo coding, and symbol (re)construction.

Frame budget for the default system: 256 data slots x 2 antennas x 2 bits
= 1024 coded bits per block, so 512 info bits of which 496 are payload and
16 are CRC.

Coded-bit layout for info length K and encoder memory m (K = 512, m = 3):
positions [0, K) carry the systematic bits, [K, 2K - 2m) alternate
parity-1 (even offsets) and parity-2 (odd offsets) in their natural
production order, the last 2m positions carry the first encoder's
termination bits (m systematic, m parity). All other parity bits are
punctured and enter the decoder as zero LLRs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .channel import ConfigError
from .modulation import Constellation, map_bits_to_symbols
from .turbo import Trellis, build_trellis, component_llrs, rsc_encode

CRC_BITS = 16
_CRC_POLY = 0x8005  # z^16 + z^15 + z^2 + 1, the z^16 term implicit


@dataclass(frozen=True)
class CodeConfig:
    """Pinned code parameters; polynomial fields are validated, not tunable."""

    crc_polynomial: int = _CRC_POLY
    rsc_feedforward: int = 0o15
    rsc_feedback: int = 0o13
    code_rate: float = 0.5
    decoder_iterations: int = 8
    interleaver_seed: int = 24287

    def __post_init__(self):
        if self.crc_polynomial != _CRC_POLY:
            raise ConfigError("crc_polynomial is fixed to 0x8005 (z^16+z^15+z^2+1)")
        if (self.rsc_feedforward, self.rsc_feedback) != (0o15, 0o13):
            raise ConfigError("RSC generators are fixed to (15, 13) octal")
        if self.code_rate != 0.5:
            raise ConfigError("code rate is fixed to 1/2")
        if self.decoder_iterations < 1:
            raise ConfigError("decoder_iterations must be >= 1")


@njit(cache=True)
def _crc16_register(bits, poly):
    reg = 0
    for i in range(bits.shape[0]):
        fb = ((reg >> 15) & 1) ^ bits[i]
        reg = (reg << 1) & 0xFFFF
        if fb:
            reg ^= poly
    return reg


@njit(cache=True)
def _crc16_register_batch(bits_mat, poly):
    out = np.empty(bits_mat.shape[0], dtype=np.int64)
    for r in range(bits_mat.shape[0]):
        reg = 0
        for i in range(bits_mat.shape[1]):
            fb = ((reg >> 15) & 1) ^ bits_mat[r, i]
            reg = (reg << 1) & 0xFFFF
            if fb:
                reg ^= poly
        out[r] = reg
    return out


def crc16_remainder(bits: np.ndarray) -> int:
    """CRC-16 register value after shifting in `bits` MSB-first.

    Register convention: initial value 0, no reflection, no final XOR.
    """
    bits = np.ascontiguousarray(bits, dtype=np.int8)
    if bits.size == 0:
        raise ValueError("empty bit sequence")
    return int(_crc16_register(bits, _CRC_POLY))


def crc16_append(bits: np.ndarray) -> np.ndarray:
    """Input bits followed by their 16-bit remainder (MSB first)."""
    rem = crc16_remainder(bits)
    tail = (rem >> np.arange(15, -1, -1)) & 1
    return np.concatenate([np.asarray(bits, dtype=np.int8), tail.astype(np.int8)])

def crc16_check(bits: np.ndarray) -> bool:
    """True iff the sequence (payload followed by CRC) has zero remainder."""
    return crc16_remainder(bits) == 0


def crc16_check_batch(bits_mat: np.ndarray) -> np.ndarray:
    """Vectorized crc16_check over the rows of a bit matrix."""
    mat = np.ascontiguousarray(bits_mat, dtype=np.int8)
    return _crc16_register_batch(mat, _CRC_POLY) == 0


@lru_cache(maxsize=4)
def _trellis_for(feedforward: int, feedback: int) -> Trellis:
    return build_trellis(feedforward, feedback)


@lru_cache(maxsize=8)
def _interleaver(seed: int, k: int) -> np.ndarray:
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return gen.permutation(k)


def interleaver_permutation(cfg: CodeConfig, k: int) -> np.ndarray:
    """The seeded-shuffle interleaver shared by encoder and decoder."""
    return _interleaver(cfg.interleaver_seed, k)


def _alt_length(k: int, mem: int) -> int:
    n_alt = k - 2 * mem
    if n_alt <= 0:
        raise ConfigError(f"info length {k} too short for termination overhead")
    return n_alt


def turbo_encode(info_bits: np.ndarray, cfg: CodeConfig) -> np.ndarray:
    """Encode K info bits into 2K coded bits (layout in the module docstring)."""
    info = np.ascontiguousarray(info_bits, dtype=np.int8)
    k = info.size
    trellis = _trellis_for(cfg.rsc_feedforward, cfg.rsc_feedback)
    n_alt = _alt_length(k, trellis.mem)
    perm = interleaver_permutation(cfg, k)

    par1, tail_sys, tail_par1 = rsc_encode(info, trellis, terminate=True)
    par2, _, _ = rsc_encode(info[perm], trellis, terminate=False)

    coded = np.empty(2 * k, dtype=np.int8)
    coded[:k] = info
    even = np.arange(n_alt) % 2 == 0
    coded[k : k + n_alt] = np.where(even, par1[:n_alt], par2[:n_alt])
    coded[k + n_alt : k + n_alt + trellis.mem] = tail_sys
    coded[k + n_alt + trellis.mem :] = tail_par1
    return coded


def turbo_decode(bit_llrs: np.ndarray, cfg: CodeConfig) -> np.ndarray:
    """Iterative decode of 2K coded-bit LLRs down to K hard info bits.

    LLRs are log(P(bit=0)/P(bit=1)); punctured positions must carry 0.
    Ties in the final posterior decode to bit 0.
    """
    llr = np.ascontiguousarray(bit_llrs, dtype=np.float64)
    if llr.size % 2 != 0:
        raise ConfigError(f"coded length {llr.size} is not even")
    k = llr.size // 2
    trellis = _trellis_for(cfg.rsc_feedforward, cfg.rsc_feedback)
    mem = trellis.mem
    n_alt = _alt_length(k, mem)
    perm = interleaver_permutation(cfg, k)

    l_sys = llr[:k]
    l_par1 = np.zeros(k)
    l_par2i = np.zeros(k)  # indexed in the second encoder's (interleaved) order
    alt = llr[k : k + n_alt]
    even = np.arange(n_alt) % 2 == 0
    l_par1[:n_alt][even] = alt[even]
    l_par2i[:n_alt][~even] = alt[~even]
    l_tail_sys = llr[k + n_alt : k + n_alt + mem]
    l_tail_par1 = llr[k + n_alt + mem :]

    e2_deint = np.zeros(k)
    e1 = np.zeros(k)
    zeros = np.zeros(k)
    for _ in range(cfg.decoder_iterations):
        lam1 = component_llrs(l_sys, l_par1, e2_deint, trellis, l_tail_sys, l_tail_par1)
        e1 = lam1 - l_sys - e2_deint
        lam2 = component_llrs(l_sys[perm], l_par2i, e1[perm], trellis)
        e2 = lam2 - l_sys[perm] - e1[perm]
        e2_deint = np.empty(k)
        e2_deint[perm] = e2
    posterior = l_sys + e1 + e2_deint
    return (posterior < 0).astype(np.int8)


def payload_bits_per_block(coded_bits: int) -> int:
    """Payload size once the rate-1/2 expansion and the CRC are paid for."""
    if coded_bits % 2 != 0:
        raise ConfigError(f"coded budget {coded_bits} is not even")
    return coded_bits // 2 - CRC_BITS


def encode_block(
    payload_bits: np.ndarray, cfg: CodeConfig, n_tx: int, const: Constellation
) -> tuple[np.ndarray, np.ndarray]:
    """Transmit pipeline for one data block: CRC, turbo encode, symbol map.

    Returns (info_bits, X) with X of shape (n_tx, t_d).
    """
    info = crc16_append(payload_bits)
    coded = turbo_encode(info, cfg)
    return info, map_bits_to_symbols(coded, n_tx, const)


def reconstruct_block(
    info_bits: np.ndarray, cfg: CodeConfig, n_tx: int, const: Constellation
) -> np.ndarray:
    """Re-encode and re-map decoded info bits into their symbol matrix.

    Callers gate this on a successful CRC check; it shares the transmitter's
    encode and map code paths, so correct bits reproduce the transmitted
    symbols exactly.
    """
    coded = turbo_encode(info_bits, cfg)
    return map_bits_to_symbols(coded, n_tx, const)
