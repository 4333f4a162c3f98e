"""LMMSE channel estimation from pilots plus promoted data columns.

The estimation state tracks two symbol matrices over the same columns: X
holds what was actually transmitted (when known) and X_hat holds what the
receiver uses as pilots. Online they coincide; genie evaluation and the
error-covariance analysis exercise the general X != X_hat case.

For a state with pilot columns X_hat and per-antenna received rows y_r,
the estimate is h_r = (X_hat X_hat^H + s2 I)^{-1} X_hat y_r^H, and its
error covariance for h ~ CN(0, I) has the closed form

    C_e = s2 Q - s2^2 Q^2 + (Q D)(Q D)^H,
    Q = (X_hat X_hat^H + s2 I)^{-1},   D = X_hat (X_hat - X)^H + s2 I,

which collapses to the familiar s2 Q when X_hat = X.
"""

from __future__ import annotations

import numpy as np

from .numerics import hermitian_inverse


class EstimatorState:
    """Pilot-plus-promoted-column state with O(1) running aggregates.

    Maintains the column matrices alongside three small running products:
    gram = X_hat X_hat^H, mismatch = X_hat (X_hat - X)^H, and
    cross = X_hat Y_bar^H, so estimation and policy evaluation never
    rescan the full column history. Instances are single-owner mutable
    values; use copy() before branching.
    """

    def __init__(self, pilots: np.ndarray, y_pilots: np.ndarray, capacity: int | None = None):
        pilots = np.asarray(pilots, dtype=np.complex128)
        y_pilots = np.asarray(y_pilots, dtype=np.complex128)
        n_tx, t_p = pilots.shape
        n_rx = y_pilots.shape[0]
        if y_pilots.shape[1] != t_p:
            raise ValueError("pilot and observation column counts differ")
        cap = max(capacity or 0, 2 * t_p, 16)
        self.n_tx = n_tx
        self.n_rx = n_rx
        self.t_p = t_p
        self._x = np.zeros((n_tx, cap), dtype=np.complex128)
        self._x_hat = np.zeros((n_tx, cap), dtype=np.complex128)
        self._y = np.zeros((n_rx, cap), dtype=np.complex128)
        self._x[:, :t_p] = pilots
        self._x_hat[:, :t_p] = pilots
        self._y[:, :t_p] = y_pilots
        self._len = t_p
        self.promoted_slots: list[int] = []
        self.gram = pilots @ pilots.conj().T
        self.mismatch = np.zeros((n_tx, n_tx), dtype=np.complex128)
        self.cross = pilots @ y_pilots.conj().T

    @property
    def n_cols(self) -> int:
        return self._len

    @property
    def X(self) -> np.ndarray:
        return self._x[:, : self._len]

    @property
    def X_hat(self) -> np.ndarray:
        return self._x_hat[:, : self._len]

    @property
    def Y_bar(self) -> np.ndarray:
        return self._y[:, : self._len]

    def copy(self) -> "EstimatorState":
        dup = EstimatorState(self._x_hat[:, : self.t_p], self._y[:, : self.t_p], self._x.shape[1])
        dup._x[:, : self._len] = self._x[:, : self._len]
        dup._x_hat[:, : self._len] = self._x_hat[:, : self._len]
        dup._y[:, : self._len] = self._y[:, : self._len]
        dup._len = self._len
        dup.promoted_slots = list(self.promoted_slots)
        dup.gram = self.gram.copy()
        dup.mismatch = self.mismatch.copy()
        dup.cross = self.cross.copy()
        return dup

    def _grow(self, extra: int) -> None:
        need = self._len + extra
        cap = self._x.shape[1]
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        for name in ("_x", "_x_hat", "_y"):
            old = getattr(self, name)
            new = np.zeros((old.shape[0], cap), dtype=np.complex128)
            new[:, : self._len] = old[:, : self._len]
            setattr(self, name, new)

    def _check_slot(self, slot: int) -> None:
        if self.promoted_slots and slot <= self.promoted_slots[-1]:
            raise ValueError(
                f"slot {slot} not after last promoted slot {self.promoted_slots[-1]}"
            )

    def append_observation(
        self, x_used: np.ndarray, y: np.ndarray, slot: int, x_true: np.ndarray | None = None
    ) -> "EstimatorState":
        """Promote one slot: X_hat gains x_used, X gains x_true (or x_used).

        Passing x_true=None is the tracked-state convention: the receiver
        assumes its decision was correct. Slots must arrive in increasing
        order. Returns self (mutated).
        """
        self._check_slot(slot)
        self._grow(1)
        i = self._len
        x_eff = x_used if x_true is None else np.asarray(x_true, dtype=np.complex128)
        self._x[:, i] = x_eff
        self._x_hat[:, i] = x_used
        self._y[:, i] = y
        self._len = i + 1
        self.promoted_slots.append(slot)
        self.gram += np.outer(x_used, x_used.conj())
        self.cross += np.outer(x_used, y.conj())
        if x_true is not None:
            self.mismatch += np.outer(x_used, (x_used - x_eff).conj())
        return self

    def append_block(
        self,
        x_used: np.ndarray,
        y: np.ndarray,
        slots: np.ndarray,
        x_true: np.ndarray | None = None,
    ) -> "EstimatorState":
        """Promote a whole block of columns at once (one pass of matrix math)."""
        slots = list(map(int, slots))
        if slots != sorted(set(slots)):
            raise ValueError("block slots must be strictly increasing")
        self._check_slot(slots[0])
        m = x_used.shape[1]
        self._grow(m)
        i = self._len
        x_eff = x_used if x_true is None else np.asarray(x_true, dtype=np.complex128)
        self._x[:, i : i + m] = x_eff
        self._x_hat[:, i : i + m] = x_used
        self._y[:, i : i + m] = y
        self._len = i + m
        self.promoted_slots.extend(slots)
        self.gram += x_used @ x_used.conj().T
        self.cross += x_used @ y.conj().T
        if x_true is not None:
            self.mismatch += x_used @ (x_used - x_eff).conj().T
        return self


def state_from_pilots(
    pilots: np.ndarray, y_pilots: np.ndarray, capacity: int | None = None
) -> EstimatorState:
    """Fresh state holding only the pilot block (the M = empty state)."""
    return EstimatorState(pilots, y_pilots, capacity)


def lmmse_from_state(state: EstimatorState, noise_var: float) -> np.ndarray:
    """LMMSE estimate of H (n_tx, n_rx) from every column in the state."""
    q = hermitian_inverse(state.gram + noise_var * np.eye(state.n_tx))
    return q @ state.cross


def error_covariance_from_grams(
    gram_hat: np.ndarray, mismatch: np.ndarray, noise_var: float
) -> np.ndarray:
    """Closed-form C_e given X_hat X_hat^H and X_hat (X_hat - X)^H."""
    n = gram_hat.shape[0]
    q = hermitian_inverse(gram_hat + noise_var * np.eye(n))
    d = mismatch + noise_var * np.eye(n)
    qd = q @ d
    c = noise_var * q - noise_var**2 * (q @ q) + qd @ qd.conj().T
    return 0.5 * (c + c.conj().T)


def error_covariance(x: np.ndarray, x_hat: np.ndarray, noise_var: float) -> np.ndarray:
    """Closed-form error covariance of the estimate built from (x, x_hat).

    x holds the transmitted columns, x_hat the columns used as pilots; the
    expectation is over h ~ CN(0, I) and the observation noise with both
    matrices held fixed.
    """
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    gram_hat = x_hat @ x_hat.conj().T
    mismatch = x_hat @ (x_hat - x).conj().T
    return error_covariance_from_grams(gram_hat, mismatch, noise_var)


def state_error_covariance(state: EstimatorState, noise_var: float) -> np.ndarray:
    """error_covariance evaluated from the state's running aggregates."""
    return error_covariance_from_grams(state.gram, state.mismatch, noise_var)


def mse_trace(c: np.ndarray) -> float:
    """Tr[C_e], the (real) mean squared error per receive antenna."""
    return float(np.trace(c).real)
