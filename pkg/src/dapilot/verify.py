"""Self-contained oracle and property checks, runnable from the CLI.

Each check pits a closed-form quantity against an independent brute-force
or Monte-Carlo oracle and reports pass/fail with the observed worst case.
The same properties are enforced (with more machinery) by the test suite;
this module exists so an installed copy can audit itself without pytest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .channel import SystemConfig, make_pilots, sample_channel, snr_to_noise_var, transmit_block
from .detector import SlotDetection, detect_block, make_candidates
from .estimator import (
    error_covariance,
    lmmse_from_state,
    state_from_pilots,
)
from .modulation import make_qam4
from .numerics import hermitian_inverse, rng_substream
from .policy import QTracker, policy_decide, q_difference_oracle

_CONST = make_qam4()
_CANDS = make_candidates(_CONST, n_tx=2)
_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _cnormal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / _SQRT2


def _qam_columns(rng: np.random.Generator, n_cols: int) -> np.ndarray:
    return _CONST.points[rng.integers(0, 4, size=(2, n_cols))]


def _random_state(rng: np.random.Generator):
    """One randomized decision context mirroring live operating conditions."""
    noise_var = float(rng.uniform(0.1, 2.0))
    n_promoted = int(rng.integers(0, 33))
    n_future = int(rng.integers(0, 65))
    pilots = make_pilots(SystemConfig(n_tx=2, t_p=8))
    state = state_from_pilots(pilots, _cnormal(rng, (4, 8)))
    for i in range(n_promoted):
        x_used = _qam_columns(rng, 1)[:, 0]
        x_true = x_used if rng.random() < 0.7 else _qam_columns(rng, 1)[:, 0]
        state.append_observation(x_used, _cnormal(rng, 4), slot=8 + i, x_true=x_true)

    def theta():
        conc = 0.08 if rng.random() < 0.5 else 1.0
        return rng.dirichlet(np.full(_CANDS.size, conc))

    fut = (
        np.stack([_CANDS.matrix @ theta() for _ in range(n_future)], axis=1)
        if n_future
        else np.zeros((2, 0), dtype=complex)
    )
    th = theta()
    k = int(np.argmax(th))
    det = SlotDetection(
        theta=th, x_hat_index=k, x_hat=_CANDS.matrix[:, k].copy(), x_tilde=_CANDS.matrix @ th
    )
    q_n = hermitian_inverse(state.gram + fut @ fut.conj().T + noise_var * np.eye(2))
    return state, det, fut, noise_var, q_n


def check_policy_sign_agreement(n_states: int = 5000, seed: int = 7_2026) -> CheckResult:
    """Closed-form decision vs the explicit end-state value difference."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mismatches = 0
    decisive = accepts = 0
    for _ in range(n_states):
        state, det, fut, s2, q_n = _random_state(rng)
        accept, _ = policy_decide(state, det, q_n, s2, _CANDS)
        value = q_difference_oracle(state, det, fut, s2, _CANDS)
        accepts += accept
        if abs(value) >= 1e-9:
            decisive += 1
            if accept != (value > 0):
                mismatches += 1
    dt = time.perf_counter() - t0
    return CheckResult(
        name="policy sign agreement",
        passed=mismatches == 0 and dt < 60.0,
        detail=(
            f"{n_states} states, {decisive} decisive, {mismatches} sign mismatches, "
            f"{accepts} promotions, {dt:.1f}s"
        ),
        seconds=dt,
    )


def _mc_covariance(x, x_hat, noise_var, n_draws, rng, n_rx=4, chunk=20_000):
    n_tx, n_cols = x.shape
    q = hermitian_inverse(x_hat @ x_hat.conj().T + noise_var * np.eye(n_tx))
    acc = np.zeros((n_tx, n_tx), dtype=complex)
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        h = _cnormal(rng, (m, n_tx, n_rx))
        z = np.sqrt(noise_var) * _cnormal(rng, (m, n_rx, n_cols))
        y = h.conj().transpose(0, 2, 1) @ x + z
        h_est = q @ (x_hat @ y.conj().transpose(0, 2, 1))
        v = (h_est - h).transpose(0, 2, 1).reshape(-1, n_tx)
        acc += np.einsum("ki,kj->ij", v, v.conj())
        done += m
    return acc / (n_draws * n_rx)


def check_covariance_oracle(
    n_pairs: int = 20, n_draws: int = 100_000, seed: int = 11_2026
) -> CheckResult:
    """Closed-form estimation error covariance vs Monte-Carlo, plus the
    exact collapse to s2 Q when the promoted symbols are all correct."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_rel = 0.0
    worst_collapse = 0.0
    for _ in range(n_pairs):
        n_cols = int(rng.integers(4, 25))
        noise_var = float(rng.uniform(0.2, 1.5))
        x = _qam_columns(rng, n_cols)
        x_hat = x.copy()
        wrong = rng.random(n_cols) < 0.3
        x_hat[:, wrong] = _qam_columns(rng, int(wrong.sum()))
        closed = error_covariance(x, x_hat, noise_var)
        mc = _mc_covariance(x, x_hat, noise_var, n_draws, rng)
        scale = float(np.trace(closed).real) / x.shape[0]
        worst_rel = max(worst_rel, float(np.abs(mc - closed).max()) / scale)
        q = hermitian_inverse(x @ x.conj().T + noise_var * np.eye(2))
        collapse = error_covariance(x, x, noise_var) - noise_var * q
        worst_collapse = max(worst_collapse, float(np.abs(collapse).max()))
    dt = time.perf_counter() - t0
    return CheckResult(
        name="covariance oracle",
        passed=worst_rel < 0.02 and worst_collapse < 1e-10,
        detail=(
            f"{n_pairs} pairs x {n_draws} draws, worst rel dev {worst_rel:.4f} "
            f"(tol 0.02), worst collapse residual {worst_collapse:.2e} (tol 1e-10)"
        ),
        seconds=dt,
    )


def check_conventional_calibration(
    n_trials: int = 100_000, seed: int = 13_2026
) -> CheckResult:
    """Empirical pilot-only NMSE vs the analytic value s2 tr(Q_p) / n_tx."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    cfg = SystemConfig(n_tx=2, n_rx=4, t_p=8, noise_var=0.5)
    pilots = make_pilots(cfg).astype(complex)
    q = hermitian_inverse(pilots @ pilots.conj().T + cfg.noise_var * np.eye(cfg.n_tx))
    analytic = cfg.noise_var * float(np.trace(q).real) / cfg.n_tx
    err_sum = chan_sum = 0.0
    done = 0
    while done < n_trials:
        m = min(20_000, n_trials - done)
        h = _cnormal(rng, (m, cfg.n_tx, cfg.n_rx))
        z = np.sqrt(cfg.noise_var) * _cnormal(rng, (m, cfg.n_rx, cfg.t_p))
        y = h.conj().transpose(0, 2, 1) @ pilots + z
        h_est = q @ (pilots @ y.conj().transpose(0, 2, 1))
        err_sum += float(np.sum(np.abs(h_est - h) ** 2))
        chan_sum += float(np.sum(np.abs(h) ** 2))
        done += m
    empirical = err_sum / chan_sum
    rel = abs(empirical - analytic) / analytic
    dt = time.perf_counter() - t0
    return CheckResult(
        name="conventional calibration",
        passed=rel < 0.01,
        detail=(
            f"{n_trials} trials, empirical {empirical:.6f} vs analytic {analytic:.6f}, "
            f"rel dev {rel:.4f} (tol 0.01)"
        ),
        seconds=dt,
    )


def check_numerical_hygiene(seed: int = 17_2026) -> CheckResult:
    """Q drift over a full 256-slot block and APP finiteness at sweep SNRs."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    pilots = make_pilots(SystemConfig(n_tx=2, t_p=8))
    state = state_from_pilots(pilots, _cnormal(rng, (4, 8)))
    soft = np.stack(
        [_CANDS.matrix @ rng.dirichlet(np.full(16, 0.3)) for _ in range(256)], axis=1
    )
    tracker = QTracker(state, soft, 0.5)
    drift = 0.0
    for i in range(256):
        fut = soft[:, i + 1 :]
        fresh = hermitian_inverse(state.gram + fut @ fut.conj().T + 0.5 * np.eye(2))
        drift = max(drift, float(np.abs(tracker.q - fresh).max()))
        if rng.random() < 0.3:
            x_hat = _qam_columns(rng, 1)[:, 0]
            state.append_observation(x_hat, _cnormal(rng, 4), slot=8 + i)
            tracker.advance(x_hat)
        else:
            tracker.advance(None)

    bad_apps = 0
    stream = rng_substream(seed, 0)
    for ebn0_db in (-6.0, -4.0, -2.0, 0.0):
        cfg = SystemConfig(n_tx=2, n_rx=4, t_p=8, t_d=64,
                           noise_var=snr_to_noise_var(ebn0_db, _CONST))
        h = sample_channel(cfg, stream)
        y_p = transmit_block(h, make_pilots(cfg), cfg.noise_var, stream)
        x_b = _qam_columns(rng, cfg.t_d)
        y_b = transmit_block(h, x_b, cfg.noise_var, stream)
        est = lmmse_from_state(state_from_pilots(make_pilots(cfg), y_p), cfg.noise_var)
        det = detect_block(y_b, est, cfg.noise_var, _CANDS)
        if not (np.isfinite(det.theta).all() and np.isfinite(det.bit_llrs).all()):
            bad_apps += 1
    dt = time.perf_counter() - t0
    return CheckResult(
        name="numerical hygiene",
        passed=drift < 1e-9 and bad_apps == 0,
        detail=f"max Q drift {drift:.2e} over 256 slots (tol 1e-9), "
        f"{bad_apps} non-finite APP blocks",
        seconds=dt,
    )


def run_all(seed: int = 1) -> list[CheckResult]:
    """Run every check; seeds are offset from `seed` for variety."""
    return [
        check_policy_sign_agreement(seed=seed + 7_2026),
        check_covariance_oracle(seed=seed + 11_2026),
        check_conventional_calibration(seed=seed + 13_2026),
        check_numerical_hygiene(seed=seed + 17_2026),
    ]
