"""Rate-1/2 parallel concatenated convolutional code on the (15, 13) octal RSC pair.

Both constituent encoders are recursive systematic convolutional codes with
feedforward 15 (octal) and feedback 13 (octal), read MSB-first so that the
most significant generator bit is the D^0 coefficient. Decoding runs the
exact log-domain BCJR (max* with the log1p correction, no max-log shortcut)
with extrinsic exchange between the two component decoders.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit


class Trellis(NamedTuple):
    """Tabulated RSC trellis: transitions, parity outputs, terminating inputs."""

    next_state: np.ndarray  # (n_states, 2) int64
    par_bit: np.ndarray     # (n_states, 2) int64
    term_in: np.ndarray     # (n_states,) int64, input that drives the register toward 0
    mem: int
    n_states: int


def build_trellis(feedforward: int = 0o15, feedback: int = 0o13) -> Trellis:
    """Build transition tables for one RSC encoder.

    Generator bit k (from the MSB) is the D^k coefficient; both generators
    must have a leading 1 (a D^0 term) and equal degree.
    """
    length = max(feedforward.bit_length(), feedback.bit_length())
    mem = length - 1
    n_states = 1 << mem
    state_mask = n_states - 1
    ff_state = feedforward & state_mask
    fb_state = feedback & state_mask
    if not (feedforward >> mem) & 1 or not (feedback >> mem) & 1:
        raise ValueError("generators must include a D^0 term")

    next_state = np.zeros((n_states, 2), dtype=np.int64)
    par_bit = np.zeros((n_states, 2), dtype=np.int64)
    term_in = np.zeros(n_states, dtype=np.int64)
    for s in range(n_states):
        fb_par = (s & fb_state).bit_count() & 1
        ff_par = (s & ff_state).bit_count() & 1
        for u in (0, 1):
            a = u ^ fb_par
            next_state[s, u] = (a << (mem - 1)) | (s >> 1)
            par_bit[s, u] = a ^ ff_par
        term_in[s] = fb_par
    return Trellis(next_state, par_bit, term_in, mem, n_states)


@njit(cache=True)
def _rsc_encode(bits, next_state, par_bit, term_in, mem, terminate):
    n = bits.shape[0]
    par = np.empty(n, dtype=np.int8)
    s = 0
    for i in range(n):
        u = bits[i]
        par[i] = par_bit[s, u]
        s = next_state[s, u]
    n_tail = mem if terminate else 0
    tail_sys = np.empty(n_tail, dtype=np.int8)
    tail_par = np.empty(n_tail, dtype=np.int8)
    for t in range(n_tail):
        u = term_in[s]
        tail_sys[t] = u
        tail_par[t] = par_bit[s, u]
        s = next_state[s, u]
    return par, tail_sys, tail_par


def rsc_encode(bits: np.ndarray, trellis: Trellis, terminate: bool):
    """Parity stream of one RSC encoder, plus termination bits when requested.

    Returns (parity, tail_sys, tail_par); tails are empty when terminate is
    False. The terminated register always ends in state 0.
    """
    bits = np.ascontiguousarray(bits, dtype=np.int8)
    return _rsc_encode(
        bits, trellis.next_state, trellis.par_bit, trellis.term_in, trellis.mem, terminate
    )


@njit(cache=True, inline="always")
def _maxstar(a, b):
    if a < b:
        a, b = b, a
    d = a - b
    if d > 37.0:
        return a
    return a + np.log1p(np.exp(-d))


@njit(cache=True)
def _log_bcjr(l_sys, l_par, l_apr, l_tail_sys, l_tail_par, next_state, par_bit, term_in, terminated):
    """Posterior info-bit LLRs (log P0/P1) of one RSC component.

    The forward/backward recursions run over the K info steps plus the
    forced-input tail steps when terminated; branch metrics use the
    (1-2b)*L/2 convention so that positive LLRs favour bit 0.
    """
    k_info = l_sys.shape[0]
    n_tail = l_tail_sys.shape[0]
    n_states = next_state.shape[0]
    neg = -1.0e30

    # branch metric halves; gamma(k, s, u) = g_sys[k, u] + g_par[k, par_bit[s, u]]
    g_sys = np.empty((k_info, 2))
    g_par = np.empty((k_info, 2))
    for k in range(k_info):
        a0 = 0.5 * (l_sys[k] + l_apr[k])
        b0 = 0.5 * l_par[k]
        g_sys[k, 0] = a0
        g_sys[k, 1] = -a0
        g_par[k, 0] = b0
        g_par[k, 1] = -b0

    alpha = np.full((k_info + n_tail + 1, n_states), neg)
    alpha[0, 0] = 0.0
    for k in range(k_info):
        for s in range(n_states):
            a = alpha[k, s]
            if a < -1.0e29:
                continue
            for u in range(2):
                ns = next_state[s, u]
                v = a + g_sys[k, u] + g_par[k, par_bit[s, u]]
                alpha[k + 1, ns] = _maxstar(alpha[k + 1, ns], v)
        m = alpha[k + 1, 0]
        for s in range(1, n_states):
            if alpha[k + 1, s] > m:
                m = alpha[k + 1, s]
        for s in range(n_states):
            alpha[k + 1, s] -= m
    for t in range(n_tail):
        k = k_info + t
        gs = 0.5 * l_tail_sys[t]
        gp = 0.5 * l_tail_par[t]
        for s in range(n_states):
            a = alpha[k, s]
            if a < -1.0e29:
                continue
            u = term_in[s]
            ns = next_state[s, u]
            v = a + (1.0 - 2.0 * u) * gs + (1.0 - 2.0 * par_bit[s, u]) * gp
            alpha[k + 1, ns] = _maxstar(alpha[k + 1, ns], v)

    beta = np.full((k_info + n_tail + 1, n_states), neg)
    if terminated:
        beta[k_info + n_tail, 0] = 0.0
    else:
        for s in range(n_states):
            beta[k_info + n_tail, s] = 0.0
    for t in range(n_tail - 1, -1, -1):
        k = k_info + t
        gs = 0.5 * l_tail_sys[t]
        gp = 0.5 * l_tail_par[t]
        for s in range(n_states):
            u = term_in[s]
            ns = next_state[s, u]
            nb = beta[k + 1, ns]
            if nb < -1.0e29:
                beta[k, s] = neg
            else:
                beta[k, s] = nb + (1.0 - 2.0 * u) * gs + (1.0 - 2.0 * par_bit[s, u]) * gp
    for k in range(k_info - 1, -1, -1):
        m = neg
        for s in range(n_states):
            b = neg
            for u in range(2):
                ns = next_state[s, u]
                nb = beta[k + 1, ns]
                if nb < -1.0e29:
                    continue
                b = _maxstar(b, nb + g_sys[k, u] + g_par[k, par_bit[s, u]])
            beta[k, s] = b
            if b > m:
                m = b
        for s in range(n_states):
            beta[k, s] -= m

    llr = np.empty(k_info)
    for k in range(k_info):
        num = neg
        den = neg
        for s in range(n_states):
            a = alpha[k, s]
            if a < -1.0e29:
                continue
            for u in range(2):
                ns = next_state[s, u]
                nb = beta[k + 1, ns]
                if nb < -1.0e29:
                    continue
                v = a + g_sys[k, u] + g_par[k, par_bit[s, u]] + nb
                if u == 0:
                    num = _maxstar(num, v)
                else:
                    den = _maxstar(den, v)
        llr[k] = num - den
    return llr


def component_llrs(
    l_sys: np.ndarray,
    l_par: np.ndarray,
    l_apr: np.ndarray,
    trellis: Trellis,
    l_tail_sys: np.ndarray | None = None,
    l_tail_par: np.ndarray | None = None,
) -> np.ndarray:
    """One exact BCJR pass; tail LLR arrays switch on trellis termination."""
    terminated = l_tail_sys is not None
    if l_tail_sys is None:
        l_tail_sys = np.empty(0)
        l_tail_par = np.empty(0)
    return _log_bcjr(
        np.ascontiguousarray(l_sys, dtype=np.float64),
        np.ascontiguousarray(l_par, dtype=np.float64),
        np.ascontiguousarray(l_apr, dtype=np.float64),
        np.ascontiguousarray(l_tail_sys, dtype=np.float64),
        np.ascontiguousarray(l_tail_par, dtype=np.float64),
        trellis.next_state,
        trellis.par_bit,
        trellis.term_in,
        terminated,
    )
