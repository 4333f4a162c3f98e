"""Exhaustive MAP detection over all candidate symbol vectors.

With K = |constellation|^n_tx candidates (16 for 4-QAM on two antennas),
the detector evaluates every candidate's a-posteriori probability under
equal priors, then derives hard decisions, soft symbols, and the bitwise
LLRs handed to the channel decoder.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .modulation import Constellation

LLR_CLAMP = 40.0


@dataclass(frozen=True)
class CandidateSet:
    """All transmit vectors in odometer order (antenna 0 most significant)."""

    matrix: np.ndarray  # (n_tx, K) candidate columns
    labels: np.ndarray  # (K, n_tx * bits_per_symbol) Gray bits per candidate
    n_tx: int

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    @property
    def bits_per_vector(self) -> int:
        return self.labels.shape[1]


_candidate_cache: dict[tuple[str, int], CandidateSet] = {}


def make_candidates(const: Constellation, n_tx: int) -> CandidateSet:
    key = (const.name, n_tx)
    if key not in _candidate_cache:
        idx = np.array(list(itertools.product(range(const.order), repeat=n_tx)), dtype=np.int64)
        idx = idx.reshape(-1, n_tx)
        matrix = const.points[idx].T
        labels = const.labels()[idx].reshape(idx.shape[0], -1)
        _candidate_cache[key] = CandidateSet(matrix=matrix, labels=labels, n_tx=n_tx)
    return _candidate_cache[key]


@dataclass(frozen=True)
class SlotDetection:
    """Per-slot detector output: APPs, hard decision, soft symbol."""

    theta: np.ndarray        # (K,) nonnegative, sums to 1
    x_hat_index: int         # argmax candidate, ties toward the lowest index
    x_hat: np.ndarray        # (n_tx,) the winning candidate column
    x_tilde: np.ndarray      # (n_tx,) theta-weighted candidate average


@dataclass(frozen=True)
class BlockDetection:
    """Vectorized detection of a whole block of slots against one estimate."""

    theta: np.ndarray        # (n_slots, K)
    x_hat_index: np.ndarray  # (n_slots,)
    x_tilde: np.ndarray      # (n_tx, n_slots)
    bit_llrs: np.ndarray     # (n_slots * bits_per_vector,) in transmit bit order

    def slot(self, n: int, cands: CandidateSet) -> SlotDetection:
        k = int(self.x_hat_index[n])
        return SlotDetection(
            theta=self.theta[n],
            x_hat_index=k,
            x_hat=cands.matrix[:, k].copy(),
            x_tilde=self.x_tilde[:, n].copy(),
        )


def _log_theta_rows(y_cols: np.ndarray, h_est: np.ndarray, noise_var: float, cands: CandidateSet):
    """Unnormalized log APPs, one row per slot, shifted so each row max is 0."""
    s = h_est.conj().T @ cands.matrix
    y_energy = np.sum(np.abs(y_cols) ** 2, axis=0)
    s_energy = np.sum(np.abs(s) ** 2, axis=0)
    cross = (y_cols.conj().T @ s).real
    dist = y_energy[:, None] + s_energy[None, :] - 2.0 * cross
    logt = -dist / noise_var
    return logt - logt.max(axis=1, keepdims=True)


def compute_apps(y: np.ndarray, h_est: np.ndarray, noise_var: float, cands: CandidateSet) -> np.ndarray:
    """APP vector theta for one received slot, exact up to normalization.

    theta_k is proportional to exp(-||y - H^H x_k||^2 / noise_var) under
    equal priors; evaluated in the log domain with max subtraction.
    """
    diff = y[:, None] - h_est.conj().T @ cands.matrix
    logt = -np.sum(np.abs(diff) ** 2, axis=0) / noise_var
    logt -= logt.max()
    theta = np.exp(logt)
    return theta / theta.sum()


def hard_decision(theta: np.ndarray) -> int:
    """Index of the maximal APP; exact ties go to the lowest index."""
    return int(np.argmax(theta))


def soft_symbol(theta: np.ndarray, cands: CandidateSet) -> np.ndarray:
    """APP-weighted candidate average x_tilde."""
    return cands.matrix @ theta


def bit_llrs(theta: np.ndarray, cands: CandidateSet, clamp: float = LLR_CLAMP) -> np.ndarray:
    """log(P(bit=0)/P(bit=1)) per mapped bit, clamped to +/-clamp."""
    with np.errstate(divide="ignore"):
        logt = np.log(theta)
    out = np.empty(cands.bits_per_vector)
    for i in range(cands.bits_per_vector):
        mask = cands.labels[:, i] == 0
        out[i] = logsumexp(logt[mask]) - logsumexp(logt[~mask])
    return np.clip(out, -clamp, clamp)


def detect_slot(y: np.ndarray, h_est: np.ndarray, noise_var: float, cands: CandidateSet) -> SlotDetection:
    theta = compute_apps(y, h_est, noise_var, cands)
    k = hard_decision(theta)
    return SlotDetection(
        theta=theta,
        x_hat_index=k,
        x_hat=cands.matrix[:, k].copy(),
        x_tilde=soft_symbol(theta, cands),
    )


def detect_block(
    y_cols: np.ndarray, h_est: np.ndarray, noise_var: float, cands: CandidateSet
) -> BlockDetection:
    """Detect every column of y_cols against a single channel estimate.

    The Gram-expansion distance formula and one (n_slots x K) product make
    this the hot path; bit LLRs come out flattened in transmit order (slot
    major, antenna 0 first, MSB first), ready for the channel decoder.
    """
    logt = _log_theta_rows(y_cols, h_est, noise_var, cands)
    theta = np.exp(logt)
    theta /= theta.sum(axis=1, keepdims=True)

    n_bits = cands.bits_per_vector
    llr = np.empty((y_cols.shape[1], n_bits))
    for i in range(n_bits):
        mask = cands.labels[:, i] == 0
        llr[:, i] = logsumexp(logt[:, mask], axis=1) - logsumexp(logt[:, ~mask], axis=1)
    np.clip(llr, -LLR_CLAMP, LLR_CLAMP, out=llr)

    return BlockDetection(
        theta=theta,
        x_hat_index=np.argmax(theta, axis=1),
        x_tilde=cands.matrix @ theta.T,
        bit_llrs=llr.reshape(-1),
    )
