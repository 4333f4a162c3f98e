"""Monte-Carlo experiment runner: paired estimator arms, metrics, persistence.

A trial is one frame processed end to end by every requested arm over the
same channel, noise, and payload realizations (common random numbers), so
arm comparisons are paired. Trials map to independent RNG substreams keyed
by trial id, which makes sweep outputs independent of worker count and
completion order.
"""

from __future__ import annotations

import dataclasses
import json
import multiprocessing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import (
    ConfigError,
    SystemConfig,
    frame_layout,
    make_pilots,
    sample_channel,
    snr_to_noise_var,
    transmit_block,
)
from .codec import (
    CodeConfig,
    crc16_check,
    encode_block,
    payload_bits_per_block,
    reconstruct_block,
    turbo_decode,
)
from .detector import detect_block, make_candidates
from .estimator import lmmse_from_state, state_from_pilots
from .numerics import rng_substream
from .policy import BlockDecisionTrace, process_block

ARM_ORDER = ("conventional", "soft", "proposed", "genie")


def nmse(h_est: np.ndarray, h: np.ndarray) -> float:
    """Estimate error energy over channel energy, pooled across antennas."""
    if h_est.shape != h.shape:
        raise ValueError(f"shape mismatch: {h_est.shape} vs {h.shape}")
    ref = float(np.sum(np.abs(h) ** 2))
    if ref == 0.0:
        raise ValueError("NMSE is undefined for an all-zero channel")
    return float(np.sum(np.abs(h_est - h) ** 2)) / ref


@dataclass(frozen=True)
class SweepConfig:
    """Full description of one experiment: grid, arms, budget, seed, paths."""

    ebn0_db_list: tuple[float, ...]
    pilot_lengths: tuple[int, ...]
    arms: tuple[str, ...]
    frames_per_point: int
    master_seed: int
    cfg: SystemConfig
    code: CodeConfig
    output_dir: Path

    def __post_init__(self):
        object.__setattr__(self, "ebn0_db_list", tuple(float(e) for e in self.ebn0_db_list))
        object.__setattr__(self, "pilot_lengths", tuple(int(t) for t in self.pilot_lengths))
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if not self.ebn0_db_list:
            raise ConfigError("ebn0_db_list must be nonempty")
        if not self.pilot_lengths:
            raise ConfigError("pilot_lengths must be nonempty")
        if not self.arms:
            raise ConfigError("arms must be nonempty")
        unknown = [a for a in self.arms if a not in ARM_ORDER]
        if unknown:
            raise ConfigError(f"unknown arms {unknown}; choose from {ARM_ORDER}")
        if len(set(self.arms)) != len(self.arms):
            raise ConfigError("arms must not repeat")
        if self.frames_per_point < 1:
            raise ConfigError("frames_per_point must be >= 1")

    @property
    def points(self) -> list[tuple[float, int]]:
        """(ebn0_db, t_p) grid in declaration order."""
        return [(e, t) for e in self.ebn0_db_list for t in self.pilot_lengths]


def system_for_point(base: SystemConfig, ebn0_db: float, t_p: int) -> SystemConfig:
    """The per-point system: pilot length and noise variance swapped in."""
    return dataclasses.replace(
        base, t_p=t_p, noise_var=snr_to_noise_var(ebn0_db, base.constellation)
    )


@dataclass(frozen=True)
class FrameData:
    """Everything random in one frame, drawn once and shared by all arms."""

    h: np.ndarray         # (n_tx, n_rx)
    payloads: np.ndarray  # (n_b, payload_bits) int8
    infos: np.ndarray     # (n_b, k) int8, payload plus CRC
    x_blocks: np.ndarray  # (n_b, n_tx, t_d)
    y_pilot: np.ndarray   # (n_rx, t_p)
    y_blocks: np.ndarray  # (n_b, n_rx, t_d)


def make_frame_data(cfg: SystemConfig, code: CodeConfig, rng) -> FrameData:
    """Draw one frame's channel, payloads, and noisy observations.

    Draw order is fixed (channel, payloads, pilot noise, block noise in
    block order) so a given substream always produces the same frame.
    """
    n_payload = payload_bits_per_block(cfg.coded_bits_per_block)
    h = sample_channel(cfg, rng)
    payloads = rng.integers(0, 2, size=(cfg.n_b, n_payload)).astype(np.int8)
    infos = np.empty((cfg.n_b, cfg.coded_bits_per_block // 2), dtype=np.int8)
    x_blocks = np.empty((cfg.n_b, cfg.n_tx, cfg.t_d), dtype=complex)
    for b in range(cfg.n_b):
        infos[b], x_blocks[b] = encode_block(payloads[b], code, cfg.n_tx, cfg.constellation)
    y_pilot = transmit_block(h, make_pilots(cfg), cfg.noise_var, rng)
    y_blocks = np.stack(
        [transmit_block(h, x_blocks[b], cfg.noise_var, rng) for b in range(cfg.n_b)]
    )
    return FrameData(
        h=h, payloads=payloads, infos=infos, x_blocks=x_blocks,
        y_pilot=y_pilot, y_blocks=y_blocks,
    )


@dataclass(frozen=True)
class ArmResult:
    """One arm's outcome over a frame."""

    nmse: np.ndarray          # (n_b + 1,); index 0 is the pilot-only estimate
    block_errors: np.ndarray  # (n_b,) bool, decoded payload != transmitted
    crc_ok: np.ndarray        # (n_b,) bool
    promoted: np.ndarray      # (n_b,) promoted column count per block
    traces: tuple[BlockDecisionTrace, ...] | None = None


def process_frame(
    cfg: SystemConfig,
    code: CodeConfig,
    data: FrameData,
    arms: tuple[str, ...],
    collect_traces: bool = False,
) -> dict[str, ArmResult]:
    """Run every requested arm over one frame of shared realizations.

    Arms differ only in how the estimator state evolves after each block:
    conventional never updates, soft promotes every soft symbol, proposed
    runs the CRC gate plus the per-slot policy, genie promotes the truth.
    """
    layout = frame_layout(cfg)
    cands = make_candidates(cfg.constellation, cfg.n_tx)
    pilots = make_pilots(cfg)
    s2 = cfg.noise_var
    n_payload = data.payloads.shape[1]
    out: dict[str, ArmResult] = {}
    for arm in arms:
        state = state_from_pilots(pilots, data.y_pilot)
        h_est = lmmse_from_state(state, s2)
        nm = np.empty(cfg.n_b + 1)
        nm[0] = nmse(h_est, data.h)
        errs = np.zeros(cfg.n_b, dtype=bool)
        crcs = np.zeros(cfg.n_b, dtype=bool)
        promoted = np.zeros(cfg.n_b, dtype=np.int64)
        traces: list[BlockDecisionTrace] = []
        for b in range(cfg.n_b):
            y_b = data.y_blocks[b]
            det = detect_block(y_b, h_est, s2, cands)
            info_hat = turbo_decode(det.bit_llrs, code)
            crc_pass = crc16_check(info_hat)
            crcs[b] = crc_pass
            errs[b] = not np.array_equal(info_hat[:n_payload], data.payloads[b])
            slots = layout.data_slots(b)
            if arm == "soft":
                state.append_block(det.x_tilde, y_b, slots)
                promoted[b] = cfg.t_d
            elif arm == "genie":
                state.append_block(data.x_blocks[b], y_b, slots)
                promoted[b] = cfg.t_d
            elif arm == "proposed":
                recon = (
                    reconstruct_block(info_hat, code, cfg.n_tx, cfg.constellation)
                    if crc_pass
                    else None
                )
                trace = process_block(
                    state, det, y_b, slots, s2, cands, crc_ok=crc_pass, reconstructed=recon
                )
                promoted[b] = int(trace.actions.sum())
                if collect_traces:
                    traces.append(trace)
            if arm == "conventional":
                nm[b + 1] = nm[0]
            else:
                h_est = lmmse_from_state(state, s2)
                nm[b + 1] = nmse(h_est, data.h)
        out[arm] = ArmResult(
            nmse=nm, block_errors=errs, crc_ok=crcs, promoted=promoted,
            traces=tuple(traces) if collect_traces and arm == "proposed" else None,
        )
    return out


@dataclass(frozen=True)
class TrialResult:
    """One frame's results for all arms at one sweep point."""

    trial_id: int
    ebn0_db: float
    t_p: int
    arms: dict[str, ArmResult]


def run_trial(
    sweep: SweepConfig,
    point: tuple[float, int],
    trial_id: int,
    collect_traces: bool = False,
) -> TrialResult:
    """One frame end to end for every arm, from substream `trial_id`."""
    ebn0_db, t_p = point
    cfg = system_for_point(sweep.cfg, ebn0_db, t_p)
    rng = rng_substream(sweep.master_seed, trial_id)
    data = make_frame_data(cfg, sweep.code, rng)
    arms = process_frame(cfg, sweep.code, data, sweep.arms, collect_traces)
    return TrialResult(trial_id=trial_id, ebn0_db=ebn0_db, t_p=t_p, arms=arms)


@dataclass(frozen=True)
class SweepRecord:
    """One aggregated row: an (arm, SNR, pilot length, block index) cell."""

    arm: str
    ebn0_db: float
    t_p: int
    b: int
    nmse_mean: float
    nmse_se: float
    blocks_err: int
    blocks_total: int


def aggregate_trials(trials: list[TrialResult]) -> list[SweepRecord]:
    """Reduce per-trial results to sorted records; order-independent.

    Trials are sorted by id before any floating-point accumulation, so the
    aggregate is bitwise identical however trial execution interleaved.
    """
    buckets: dict[tuple[str, float, int], list[TrialResult]] = {}
    for tr in sorted(trials, key=lambda t: t.trial_id):
        for arm in tr.arms:
            buckets.setdefault((arm, tr.ebn0_db, tr.t_p), []).append(tr)
    records: list[SweepRecord] = []
    for (arm, ebn0_db, t_p) in sorted(buckets):
        group = buckets[(arm, ebn0_db, t_p)]
        nm = np.stack([t.arms[arm].nmse for t in group])         # (N, n_b + 1)
        errs = np.stack([t.arms[arm].block_errors for t in group])  # (N, n_b)
        n = nm.shape[0]
        for b in range(nm.shape[1]):
            se = float(nm[:, b].std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            records.append(
                SweepRecord(
                    arm=arm, ebn0_db=ebn0_db, t_p=t_p, b=b,
                    nmse_mean=float(nm[:, b].mean()), nmse_se=se,
                    blocks_err=int(errs[:, b - 1].sum()) if b >= 1 else 0,
                    blocks_total=n if b >= 1 else 0,
                )
            )
    return records


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def results_csv_text(records: list[SweepRecord]) -> str:
    lines = ["arm,ebn0_db,t_p,b,nmse_mean,nmse_se,blocks_err,blocks_total"]
    for r in records:
        lines.append(
            f"{r.arm},{_fmt(r.ebn0_db)},{r.t_p},{r.b},"
            f"{_fmt(r.nmse_mean)},{_fmt(r.nmse_se)},{r.blocks_err},{r.blocks_total}"
        )
    return "\n".join(lines) + "\n"


def fig1_dat_text(records: list[SweepRecord]) -> str:
    """NMSE vs block index, one two-column dataset per (arm, SNR, t_p)."""
    chunks = []
    for (arm, ebn0_db, t_p) in sorted({(r.arm, r.ebn0_db, r.t_p) for r in records}):
        rows = [r for r in records if (r.arm, r.ebn0_db, r.t_p) == (arm, ebn0_db, t_p)]
        lines = [f"# arm={arm} ebn0_db={_fmt(ebn0_db)} t_p={t_p}"]
        for r in sorted(rows, key=lambda r: r.b):
            lines.append(f"{r.b} {_fmt(r.nmse_mean)}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"


def bler_by_point(records: list[SweepRecord]) -> dict[tuple[str, float, int], float]:
    """Pooled block error rate per (arm, SNR, t_p), all blocks and frames."""
    out: dict[tuple[str, float, int], float] = {}
    for (arm, ebn0_db, t_p) in sorted({(r.arm, r.ebn0_db, r.t_p) for r in records}):
        rows = [r for r in records if (r.arm, r.ebn0_db, r.t_p) == (arm, ebn0_db, t_p)]
        err = sum(r.blocks_err for r in rows)
        tot = sum(r.blocks_total for r in rows)
        out[(arm, ebn0_db, t_p)] = err / tot if tot else float("nan")
    return out


def fig2_dat_text(records: list[SweepRecord]) -> str:
    """BLER vs SNR, one two-column dataset per (arm, t_p)."""
    bler = bler_by_point(records)
    chunks = []
    for (arm, t_p) in sorted({(a, t) for (a, _, t) in bler}):
        lines = [f"# arm={arm} t_p={t_p}"]
        for (a, ebn0_db, t) in sorted(bler):
            if (a, t) == (arm, t_p):
                lines.append(f"{_fmt(ebn0_db)} {_fmt(bler[(a, ebn0_db, t)])}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"


def trace_lines(trials: list[TrialResult]) -> list[str]:
    """One JSON object per (trial, arm): enough to re-derive every aggregate."""
    lines = []
    for tr in sorted(trials, key=lambda t: t.trial_id):
        for arm, res in tr.arms.items():
            lines.append(
                json.dumps(
                    {
                        "trial_id": tr.trial_id,
                        "arm": arm,
                        "ebn0_db": tr.ebn0_db,
                        "t_p": tr.t_p,
                        "nmse": [float(v) for v in res.nmse],
                        "block_errors": [int(v) for v in res.block_errors],
                        "crc_ok": [int(v) for v in res.crc_ok],
                        "promoted": [int(v) for v in res.promoted],
                    }
                )
            )
    return lines


def _trial_task(args) -> TrialResult:
    sweep, ebn0_db, t_p, trial_id = args
    return run_trial(sweep, (ebn0_db, t_p), trial_id)


def run_sweep(
    sweep: SweepConfig, workers: int = 1, trace: bool = False
) -> list[SweepRecord]:
    """Run the full grid and persist CSV, figure data, and the manifest.

    Trials are embarrassingly parallel; results are keyed by trial id and
    reduced in sorted order, so any worker count yields identical bytes.
    """
    from .config import manifest_text  # local import; config depends on this module

    tasks = []
    for p_idx, (ebn0_db, t_p) in enumerate(sweep.points):
        for f in range(sweep.frames_per_point):
            tasks.append((sweep, ebn0_db, t_p, p_idx * sweep.frames_per_point + f))

    if workers <= 1:
        trials = [_trial_task(t) for t in tasks]
    else:
        with multiprocessing.Pool(workers) as pool:
            trials = list(pool.imap_unordered(_trial_task, tasks))
    records = aggregate_trials(trials)

    out = sweep.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output dir {out}: {exc}") from exc
    _write_text(out / "results.csv", results_csv_text(records))
    _write_text(out / "fig1_nmse_vs_block.dat", fig1_dat_text(records))
    _write_text(out / "fig2_bler_vs_snr.dat", fig2_dat_text(records))
    _write_text(out / "manifest.txt", manifest_text(sweep))
    if trace:
        _write_text(out / "trace.jsonl", "\n".join(trace_lines(trials)) + "\n")
    return records
