"""Frame layout, block-fading Rayleigh channel, pilots, and noisy transmission.

The channel convention throughout is y = H^H x + z with H of shape
(n_tx, n_rx), so the r-th column of H is the channel vector h_r seen by
receive antenna r.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .modulation import Constellation, make_qam4
from .numerics import RngStream


class ConfigError(ValueError):
    """Raised for inconsistent or unsupported system parameters."""


def _pilot_base_order(n_tx: int) -> int:
    k = 1
    while k < n_tx:
        k *= 2
    return k


@dataclass(frozen=True)
class SystemConfig:
    """Link-level parameters for one simulated system.

    noise_var is the per-receive-antenna complex noise variance sigma^2.
    """

    n_tx: int = 2                     # transmit antennas
    n_rx: int = 4                     # receive antennas
    t_p: int = 8                      # pilot slots per frame
    t_d: int = 256                    # data slots per block
    n_b: int = 20                     # data blocks per frame
    noise_var: float = 0.5            # sigma^2, linear scale
    constellation: Constellation = field(default_factory=make_qam4)

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "t_p", "t_d", "n_b"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.t_p < self.n_tx:
            raise ConfigError(f"t_p={self.t_p} < n_tx={self.n_tx}")
        if self.noise_var <= 0:
            raise ConfigError("noise_var must be > 0")
        k = _pilot_base_order(self.n_tx)
        if self.t_p % k != 0:
            raise ConfigError(
                f"t_p={self.t_p} is not a multiple of the pilot base order {k} "
                f"for n_tx={self.n_tx}"
            )

    @property
    def bits_per_slot(self) -> int:
        return self.n_tx * self.constellation.bits_per_symbol

    @property
    def coded_bits_per_block(self) -> int:
        return self.t_d * self.bits_per_slot


@dataclass(frozen=True)
class FrameLayout:
    """Slot bookkeeping: pilots first, then n_b contiguous data blocks."""

    t_p: int
    t_d: int
    n_b: int

    @property
    def n_slots(self) -> int:
        return self.t_p + self.n_b * self.t_d

    def pilot_slots(self) -> np.ndarray:
        return np.arange(self.t_p)

    def data_slots(self, b: int) -> np.ndarray:
        """Slot indices of data block b (0-based)."""
        if not 0 <= b < self.n_b:
            raise IndexError(f"block {b} out of range [0, {self.n_b})")
        start = self.t_p + b * self.t_d
        return np.arange(start, start + self.t_d)


def frame_layout(cfg: SystemConfig) -> FrameLayout:
    return FrameLayout(t_p=cfg.t_p, t_d=cfg.t_d, n_b=cfg.n_b)


def sample_channel(cfg: SystemConfig, rng: RngStream) -> np.ndarray:
    """Draw H (n_tx, n_rx) with i.i.d. CN(0, 1) entries.

    Each column h_r is then CN(0, I), constant for the frame.
    """
    return rng.standard_complex_normal((cfg.n_tx, cfg.n_rx))


def make_pilots(cfg: SystemConfig) -> np.ndarray:
    """Row-orthogonal +/-1 pilot matrix X_p of shape (n_tx, t_p).

    Built by tiling a Hadamard design of the smallest power-of-two order
    >= n_tx, keeping the first n_tx rows. Guarantees X_p X_p^H = t_p * I
    and per-column energy n_tx exactly; t_p must be a multiple of the
    base order (enforced by SystemConfig).
    """
    k = _pilot_base_order(cfg.n_tx)
    base = hadamard(k)[: cfg.n_tx, :]
    reps = cfg.t_p // k
    return np.tile(base, (1, reps)).astype(np.complex128)


def transmit(H: np.ndarray, x: np.ndarray, noise_var: float, rng: RngStream) -> np.ndarray:
    """One channel use: y = H^H x + z with z ~ CN(0, noise_var * I).

    noise_var = 0 is accepted as the noiseless surrogate (z = 0).
    """
    n_rx = H.shape[1]
    y = H.conj().T @ x
    if noise_var > 0:
        y = y + np.sqrt(noise_var) * rng.standard_complex_normal(n_rx)
    return y


def transmit_block(H: np.ndarray, X: np.ndarray, noise_var: float, rng: RngStream) -> np.ndarray:
    """Vectorized transmit of the columns of X: returns Y (n_rx, n_slots)."""
    n_rx = H.shape[1]
    Y = H.conj().T @ X
    if noise_var > 0:
        Y = Y + np.sqrt(noise_var) * rng.standard_complex_normal((n_rx, X.shape[1]))
    return Y


def snr_to_noise_var(ebn0_db: float, const: Constellation) -> float:
    """sigma^2 = 1 / (bits_per_symbol * 10^(EbN0_dB / 10))."""
    return 1.0 / (const.bits_per_symbol * 10.0 ** (ebn0_db / 10.0))
