"""Command-line front end: full sweeps, single traced trials, self-checks."""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

from .config import load_sweep
from .harness import bler_by_point, run_sweep, run_trial, trace_lines


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(s) for s in raw.replace(",", " ").split())


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(s) for s in raw.replace(",", " ").split())


def _names(raw: str) -> tuple[str, ...]:
    return tuple(s for s in raw.replace(",", " ").split())


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", metavar="PATH", default=None,
                    help="INI config file (system/code/sweep sections)")
    sp.add_argument("--ebn0", metavar="LIST", default=None,
                    help="comma-separated Eb/N0 values in dB")
    sp.add_argument("--pilot-len", metavar="LIST", default=None,
                    help="comma-separated pilot lengths")
    sp.add_argument("--arms", metavar="LIST", default=None,
                    help="subset of conventional,soft,proposed,genie")
    sp.add_argument("--frames", metavar="N", type=int, default=None,
                    help="frames per sweep point")
    sp.add_argument("--seed", metavar="N", type=int, default=None, help="master seed")
    sp.add_argument("--out", metavar="DIR", default=None, help="output directory")
    sp.add_argument("--trace", action="store_true",
                    help="also write trace.jsonl decision/metric dumps")


def _sweep_from_args(args) -> "SweepConfig":
    return load_sweep(
        args.config,
        ebn0_db=_floats(args.ebn0) if args.ebn0 else None,
        pilot_lengths=_ints(args.pilot_len) if args.pilot_len else None,
        arms=_names(args.arms) if args.arms else None,
        frames_per_point=args.frames,
        master_seed=args.seed,
        output_dir=args.out,
    )


def _cmd_sweep(args) -> int:
    sweep = _sweep_from_args(args)
    records = run_sweep(sweep, workers=args.workers, trace=args.trace)
    from .figures import render_all  # deferred: pulls in matplotlib

    figs = render_all(records, sweep.output_dir)
    bler = bler_by_point(records)
    last_b = max(r.b for r in records)
    for (arm, ebn0_db, t_p) in sorted(bler):
        end = next(
            r for r in records
            if (r.arm, r.ebn0_db, r.t_p, r.b) == (arm, ebn0_db, t_p, last_b)
        )
        print(
            f"{arm:>12s}  ebn0={ebn0_db:+.1f} dB  t_p={t_p:<3d} "
            f"bler={bler[(arm, ebn0_db, t_p)]:.4f}  nmse_b{last_b}={end.nmse_mean:.5f}"
        )
    names = ["results.csv", "fig1_nmse_vs_block.dat", "fig2_bler_vs_snr.dat", "manifest.txt"]
    if args.trace:
        names.append("trace.jsonl")
    written = [str(sweep.output_dir / n) for n in names] + [str(p) for p in figs]
    print("wrote: " + ", ".join(written))
    return 0


def _finite(v: float) -> float | None:
    return float(v) if math.isfinite(v) else None


def _cmd_trial(args) -> int:
    sweep = _sweep_from_args(args)
    point = sweep.points[0]
    res = run_trial(sweep, point, args.trial_id, collect_traces=True)
    n_b = sweep.cfg.n_b
    for arm, r in res.arms.items():
        print(
            f"{arm:>12s}  nmse_b0={r.nmse[0]:.5f}  nmse_b{n_b}={r.nmse[-1]:.5f}  "
            f"blocks_err={int(r.block_errors.sum())}/{n_b}  "
            f"crc_ok={int(r.crc_ok.sum())}/{n_b}  promoted={int(r.promoted.sum())}"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = trace_lines([res])
        proposed = res.arms.get("proposed")
        if proposed is not None and proposed.traces is not None:
            for b, tr in enumerate(proposed.traces):
                lines.append(json.dumps({
                    "trial_id": res.trial_id,
                    "arm": "proposed",
                    "block": b,
                    "crc_passed": bool(tr.crc_passed),
                    "actions": [int(a) for a in tr.actions],
                    "chosen": [int(c) for c in tr.chosen],
                    "ratios": [_finite(v) for v in tr.ratios],
                    "margins": [_finite(v) for v in tr.margins],
                }))
        path = out / "trace.jsonl"
        path.write_text("\n".join(lines) + "\n")
        print(f"wrote: {path}")
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_all  # deferred: keeps --help fast

    seed = args.seed if args.seed is not None else 1
    failures = 0
    for res in run_all(seed=seed):
        tag = "PASS" if res.passed else "FAIL"
        print(f"{tag}  {res.name}: {res.detail}")
        failures += not res.passed
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dapilot",
        description="Link-level MIMO simulator with decision-directed LMMSE "
        "channel estimation and a closed-form pilot promotion policy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="run the full experiment grid")
    _add_common(sp)
    sp.add_argument("--workers", metavar="N", type=int, default=1,
                    help="parallel worker processes (results identical for any N)")
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("trial", help="run one frame with a decision trace")
    _add_common(sp)
    sp.add_argument("--trial-id", metavar="N", type=int, default=0,
                    help="substream id of the frame to run")
    sp.set_defaults(func=_cmd_trial)

    sp = sub.add_parser("verify", help="run the built-in oracle/property checks")
    _add_common(sp)
    sp.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
