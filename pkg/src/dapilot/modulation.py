"""Gray-mapped constellations and bit/symbol packing for multi-antenna slots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Constellation:
    """A unit-energy constellation with its Gray bit labels.

    ``points[v]`` is the symbol whose label bits, read MSB first, encode the
    integer v. The set is zero mean, has average energy 1, and is closed
    under negation.
    """

    name: str
    points: np.ndarray
    bits_per_symbol: int

    @property
    def order(self) -> int:
        return self.points.size

    def labels(self) -> np.ndarray:
        """(order, bits_per_symbol) array of label bits, MSB first."""
        v = np.arange(self.order)
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return ((v[:, None] >> shifts[None, :]) & 1).astype(np.int8)


def make_qam4() -> Constellation:
    """Gray 4-QAM: first bit picks the real sign, second the imaginary sign.

    00 -> (+1+1j)/sqrt2, 01 -> (+1-1j)/sqrt2,
    10 -> (-1+1j)/sqrt2, 11 -> (-1-1j)/sqrt2.
    """
    s = 1.0 / np.sqrt(2.0)
    pts = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j], dtype=np.complex128) * s
    return Constellation(name="4qam", points=pts, bits_per_symbol=2)


_REGISTRY = {"4qam": make_qam4}


def constellation_by_name(name: str) -> Constellation:
    try:
        return _REGISTRY[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}") from None


def map_bits_to_symbols(bits: np.ndarray, n_tx: int, const: Constellation) -> np.ndarray:
    """Pack a bit sequence into (n_tx, n_slots) symbol vectors.

    Bits are consumed slot by slot, antenna 0 first, MSB first within each
    symbol label.

    Raises:
        ValueError: if the bit count is not a multiple of n_tx * bits_per_symbol.
    """
    bits = np.asarray(bits, dtype=np.int8).reshape(-1)
    per_slot = n_tx * const.bits_per_symbol
    if bits.size % per_slot != 0:
        raise ValueError(
            f"bit count {bits.size} is not a multiple of {per_slot} "
            f"(n_tx={n_tx} x {const.bits_per_symbol} bits/symbol)"
        )
    shifts = np.arange(const.bits_per_symbol - 1, -1, -1)
    values = (bits.reshape(-1, const.bits_per_symbol) << shifts).sum(axis=1)
    return const.points[values].reshape(-1, n_tx).T


def symbols_to_bits(x: np.ndarray, const: Constellation) -> np.ndarray:
    """Invert map_bits_to_symbols by nearest-point demapping.

    Accepts an (n_tx, n_slots) block or a single symbol vector and returns
    the flat bit sequence in transmit order.
    """
    x = np.asarray(x, dtype=np.complex128)
    cols = x.T.reshape(-1) if x.ndim == 2 else x.reshape(-1)
    idx = np.argmin(np.abs(cols[:, None] - const.points[None, :]), axis=1)
    return const.labels()[idx].reshape(-1)
