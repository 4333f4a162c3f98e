"""Dense complex linear algebra helpers and reproducible random streams.

Everything here operates on small Hermitian systems (transmit-antenna
sized, typically 2x2 to 4x4) and is deterministic given its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SingularMatrixError(Exception):
    """Raised when a regularized Gram matrix is not invertible."""


class DowndateError(Exception):
    """Raised when a rank-one downdate would leave positive definiteness."""


def regularized_gram_inverse(x: np.ndarray, noise_var: float) -> np.ndarray:
    """Return (X X^H + noise_var * I)^-1 for an n x L matrix X.

    Uses a Cholesky factorization of the Hermitian Gram; the sizes involved
    are tiny, so a direct factorization is both exact and cheap.

    Raises:
        SingularMatrixError: if noise_var == 0 and X is row-rank deficient.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {x.shape}")
    n = x.shape[0]
    a = x @ x.conj().T + noise_var * np.eye(n, dtype=np.complex128)
    return hermitian_inverse(a)


def hermitian_inverse(a: np.ndarray) -> np.ndarray:
    """Invert a Hermitian positive-definite matrix via Cholesky."""
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            "Gram matrix is not positive definite; with zero noise this "
            "means the symbol matrix is row-rank deficient"
        ) from exc
    inv_low = np.linalg.solve(low, np.eye(a.shape[0], dtype=np.complex128))
    q = inv_low.conj().T @ inv_low
    # Symmetrize to keep the Hermitian invariant tight under roundoff.
    return 0.5 * (q + q.conj().T)


def rank_one_inverse_update(
    q: np.ndarray, x: np.ndarray, sign: int = 1, tol: float = 1e-12
) -> np.ndarray:
    """Sherman-Morrison step: return (Q^-1 + sign * x x^H)^-1.

    sign=+1 accounts for appending column x to the underlying Gram,
    sign=-1 for removing it. The downdate refuses to proceed when
    1 - x^H Q x <= tol, because the result would no longer be positive
    definite; the caller is expected to re-factorize from scratch.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    t = q @ x
    gamma = float(np.real(x.conj() @ t))
    if sign == 1:
        denom = 1.0 + gamma
    else:
        denom = 1.0 - gamma
        if denom <= tol:
            raise DowndateError(
                f"downdate would break positive definiteness (1 - x^H Q x = {denom:.3e})"
            )
    out = q - sign * np.outer(t, t.conj()) / denom
    return 0.5 * (out + out.conj().T)


@dataclass
class RngStream:
    """Deterministic substream of a master seed.

    Identical (master_seed, stream_id) pairs reproduce the same draws;
    distinct stream ids give statistically independent streams.
    """

    master_seed: int
    stream_id: int
    gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(seq))

    def standard_complex_normal(self, shape=()) -> np.ndarray:
        """CN(0, 1) draws: (g1 + i*g2)/sqrt(2) with g1, g2 standard normal."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        g1 = self.gen.standard_normal(size=shape)
        g2 = self.gen.standard_normal(size=shape)
        return (g1 + 1j * g2) / np.sqrt(2.0)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self.gen.integers(low, high, size=size)


def rng_substream(master_seed: int, stream_id: int) -> RngStream:
    """Create the substream identified by (master_seed, stream_id)."""
    return RngStream(master_seed=master_seed, stream_id=stream_id)
