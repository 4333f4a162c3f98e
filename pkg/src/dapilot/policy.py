"""Closed-form promote/skip policy for detected symbol vectors, plus its oracle.

Each data slot offers a binary choice: promote the detected vector x_hat to
pilot status or skip it. The value of a choice is the expected end-of-block
estimation MSE, evaluated on a virtual continuation in which every pending
slot contributes its soft symbol as if promoted. Comparing the two actions
reduces, after telescoping, to the sign of

    num - den,
    num = s2 (1 + a) + s2^2 ||t||^2 + ||v||^2,
    den = 2 s2^2 b + delta + ||e - u + v||^2,

with t = Q x_hat, a = x_hat^H Q x_hat, u = D^H t, e = x_hat - x_tilde,
v = (1 + a) D^H Q t / ||t||^2, b = (1 + a) t^H Q t / ||t||^2, and
delta = sum_j theta_j ||x_hat - x_j||^2 - ||x_hat - x_tilde||^2 >= 0.
Here Q is the regularized Gram inverse of the promoted columns plus all
pending soft symbols, and D = X_hat (X_hat - X)^H + s2 I (just s2 I in the
online tracked state). Ties (num = den) promote.

The brute-force oracle re-derives the same decision from first principles:
it materializes all K + 1 virtual end states, evaluates each one's
closed-form error covariance with a fresh inverse, and returns the
probability-weighted trace difference. Sign agreement between the two is
the package's central correctness property.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import BlockDetection, CandidateSet, SlotDetection
from .estimator import EstimatorState, error_covariance, mse_trace
from .numerics import DowndateError, hermitian_inverse, rank_one_inverse_update

_dist2_tables: dict[int, np.ndarray] = {}


def _candidate_dist2(cands: CandidateSet) -> np.ndarray:
    """(K, K) table of squared candidate distances; cands instances are cached."""
    key = id(cands)
    if key not in _dist2_tables:
        diff = cands.matrix[:, :, None] - cands.matrix[:, None, :]
        _dist2_tables[key] = np.sum(np.abs(diff) ** 2, axis=0)
    return _dist2_tables[key]


class QTracker:
    """Per-slot maintenance of Q across a block: one downdate as a pending
    slot's soft symbol leaves the future sum, one update when a detection is
    promoted, with a full refactorization every `refactor_every` rank-one
    operations and whenever a downdate loses positive definiteness.

    Callers must append a promoted slot to the estimator state before
    calling advance, so rebuilds see a consistent Gram.
    """

    def __init__(
        self,
        state: EstimatorState,
        soft_block: np.ndarray,
        noise_var: float,
        refactor_every: int = 64,
    ):
        self.state = state
        self.soft = soft_block
        self.noise_var = noise_var
        self.refactor_every = refactor_every
        self.idx = 0
        self._rebuild()

    @property
    def q(self) -> np.ndarray:
        return self._q

    def _rebuild(self) -> None:
        fut = self.soft[:, self.idx + 1 :]
        gram = self.state.gram + fut @ fut.conj().T
        self._q = hermitian_inverse(gram + self.noise_var * np.eye(self.state.n_tx))
        self._ops = 0

    def advance(self, accepted_x: np.ndarray | None = None) -> None:
        """Consume the current slot and move Q to the next decision."""
        nxt = self.idx + 1
        try:
            q = self._q
            if accepted_x is not None:
                q = rank_one_inverse_update(q, accepted_x, sign=1)
                self._ops += 1
            if nxt < self.soft.shape[1]:
                q = rank_one_inverse_update(q, self.soft[:, nxt], sign=-1)
                self._ops += 1
            self._q = q
            self.idx = nxt
            if self._ops >= self.refactor_every:
                self._rebuild()
        except DowndateError:
            self.idx = nxt
            self._rebuild()


@dataclass(frozen=True)
class PolicyIntermediates:
    """Every quantity entering the closed-form comparison, for inspection."""

    q: np.ndarray
    d: np.ndarray
    t: np.ndarray
    u: np.ndarray
    e: np.ndarray
    v: np.ndarray
    alpha: float
    beta: float
    delta: float
    num: float
    den: float

    @property
    def margin(self) -> float:
        return self.num - self.den

    @property
    def ratio(self) -> float:
        return self.num / self.den


def policy_decide(
    state: EstimatorState,
    det: SlotDetection,
    q_n: np.ndarray,
    noise_var: float,
    cands: CandidateSet,
) -> tuple[bool, PolicyIntermediates]:
    """Closed-form promote/skip decision for one detected slot.

    Evaluated in difference form (num - den >= 0) rather than as a ratio,
    which is equivalent and avoids amplifying a tiny denominator; equality
    promotes.
    """
    s2 = noise_var
    x_hat = det.x_hat
    t = q_n @ x_hat
    t_norm2 = float((t.conj() @ t).real)
    if t_norm2 <= 0.0:
        raise RuntimeError("degenerate decision: Q x_hat vanished")
    alpha = float((x_hat.conj() @ t).real)
    d = state.mismatch + s2 * np.eye(state.n_tx)
    d_h = d.conj().T
    u = d_h @ t
    e = x_hat - det.x_tilde
    qt = q_n @ t
    scale = (1.0 + alpha) / t_norm2
    v = scale * (d_h @ qt)
    beta = scale * float((t.conj() @ qt).real)
    delta = float(det.theta @ _candidate_dist2(cands)[det.x_hat_index]) - float(
        (e.conj() @ e).real
    )

    num = s2 * (1.0 + alpha) + s2**2 * t_norm2 + float((v.conj() @ v).real)
    w = e - u + v
    den = 2.0 * s2**2 * beta + delta + float((w.conj() @ w).real)
    inter = PolicyIntermediates(
        q=q_n, d=d, t=t, u=u, e=e, v=v, alpha=alpha, beta=beta, delta=delta, num=num, den=den
    )
    return inter.margin >= 0.0, inter


@dataclass(frozen=True)
class VirtualEndState:
    """Block-end state reached by one (action, candidate) branch: the already
    promoted columns, then the branch's slot-n columns, then every pending
    slot's soft symbol on both sides."""

    x_end: np.ndarray
    x_hat_end: np.ndarray
    m_end: tuple[int, ...]


def build_virtual_end_state(
    state: EstimatorState,
    action: int,
    candidate: int | None,
    det: SlotDetection,
    soft_future: np.ndarray,
    cands: CandidateSet,
    slot: int = -1,
    future_slots: tuple[int, ...] = (),
) -> VirtualEndState:
    """Materialize the end state for action a and candidate j (None for a=0)."""
    if action == 0:
        if candidate is not None:
            raise ValueError("skip branch admits no candidate")
        x_end = np.hstack([state.X, soft_future])
        x_hat_end = np.hstack([state.X_hat, soft_future])
        m_end = tuple(state.promoted_slots) + tuple(future_slots)
    elif action == 1:
        if candidate is None or not 0 <= candidate < cands.size:
            raise ValueError(f"promote branch needs a candidate in [0, {cands.size})")
        x_end = np.hstack([state.X, cands.matrix[:, [candidate]], soft_future])
        x_hat_end = np.hstack([state.X_hat, det.x_hat[:, None], soft_future])
        m_end = tuple(state.promoted_slots) + (slot,) + tuple(future_slots)
    else:
        raise ValueError(f"action must be 0 or 1, got {action}")
    return VirtualEndState(x_end=x_end, x_hat_end=x_hat_end, m_end=m_end)


def q_difference_oracle(
    state: EstimatorState,
    det: SlotDetection,
    soft_future: np.ndarray,
    noise_var: float,
    cands: CandidateSet,
    slot: int | None = None,
    future_slots: tuple[int, ...] | None = None,
) -> float:
    """Brute-force value difference between promoting and skipping.

    Builds all K + 1 virtual end states explicitly and evaluates each error
    covariance from scratch; positive means promoting lowers the expected
    end-of-block MSE. Entirely independent of the incremental machinery it
    validates, and deliberately unoptimized.
    """
    if slot is None:
        slot = (state.promoted_slots[-1] + 1) if state.promoted_slots else state.t_p
    if future_slots is None:
        future_slots = tuple(range(slot + 1, slot + 1 + soft_future.shape[1]))

    skip = build_virtual_end_state(state, 0, None, det, soft_future, cands, slot, future_slots)
    t_skip = mse_trace(error_covariance(skip.x_end, skip.x_hat_end, noise_var))
    t_promote = 0.0
    for j in range(cands.size):
        end = build_virtual_end_state(state, 1, j, det, soft_future, cands, slot, future_slots)
        t_promote += det.theta[j] * mse_trace(
            error_covariance(end.x_end, end.x_hat_end, noise_var)
        )
    return t_skip - t_promote


@dataclass(frozen=True)
class BlockDecisionTrace:
    """Per-slot record of one block's promote/skip decisions."""

    crc_passed: bool
    actions: np.ndarray    # (t_d,) int8, 1 = promoted
    chosen: np.ndarray     # (t_d,) promoted candidate index, -1 where skipped
    ratios: np.ndarray     # (t_d,) closed-form num/den, NaN on the CRC-pass path
    margins: np.ndarray    # (t_d,) num - den, NaN on the CRC-pass path
    oracle: np.ndarray | None = None  # optional q_difference_oracle values


def process_block(
    state: EstimatorState,
    det: BlockDetection,
    y_block: np.ndarray,
    slots: np.ndarray,
    noise_var: float,
    cands: CandidateSet,
    crc_ok: bool,
    reconstructed: np.ndarray | None = None,
    with_oracle: bool = False,
) -> BlockDecisionTrace:
    """Advance the state through one data block (mutates `state`).

    A successful CRC promotes every reconstructed column at once. Otherwise
    each slot runs the closed-form policy in sequence: promotions append the
    detected vector under the tracked-state convention and immediately
    influence later decisions through Q and the estimator state.
    """
    t_d = y_block.shape[1]
    if crc_ok:
        if reconstructed is None:
            raise ValueError("CRC-pass path needs the reconstructed block")
        state.append_block(reconstructed, y_block, slots)
        nan = np.full(t_d, np.nan)
        return BlockDecisionTrace(
            crc_passed=True,
            actions=np.ones(t_d, dtype=np.int8),
            chosen=np.full(t_d, -1, dtype=np.int64),
            ratios=nan,
            margins=nan.copy(),
        )

    actions = np.zeros(t_d, dtype=np.int8)
    chosen = np.full(t_d, -1, dtype=np.int64)
    ratios = np.empty(t_d)
    margins = np.empty(t_d)
    oracle = np.full(t_d, np.nan) if with_oracle else None
    tracker = QTracker(state, det.x_tilde, noise_var)
    for i in range(t_d):
        sdet = det.slot(i, cands)
        if with_oracle:
            oracle[i] = q_difference_oracle(
                state, sdet, det.x_tilde[:, i + 1 :], noise_var, cands,
                slot=int(slots[i]), future_slots=tuple(int(s) for s in slots[i + 1 :]),
            )
        accept, inter = policy_decide(state, sdet, tracker.q, noise_var, cands)
        margins[i] = inter.margin
        ratios[i] = inter.ratio
        if accept:
            actions[i] = 1
            chosen[i] = sdet.x_hat_index
            state.append_observation(sdet.x_hat, y_block[:, i], slot=int(slots[i]))
            tracker.advance(sdet.x_hat)
        else:
            tracker.advance(None)
    return BlockDecisionTrace(
        crc_passed=False, actions=actions, chosen=chosen, ratios=ratios, margins=margins,
        oracle=oracle,
    )
