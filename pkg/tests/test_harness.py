"""Harness tests: metrics, pairing discipline, aggregation, persistence."""

import csv
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dapilot.channel import ConfigError, SystemConfig
from dapilot.cli import main as cli_main
from dapilot.codec import CodeConfig
from dapilot.config import load_sweep, manifest_text
from dapilot.figures import render_all
from dapilot.harness import (
    SweepConfig,
    aggregate_trials,
    make_frame_data,
    nmse,
    process_frame,
    results_csv_text,
    run_sweep,
    run_trial,
    system_for_point,
)
from dapilot.numerics import rng_substream


def small_system(**kw) -> SystemConfig:
    base = dict(n_tx=2, n_rx=4, t_p=4, t_d=16, n_b=3, noise_var=0.5)
    base.update(kw)
    return SystemConfig(**base)


def small_sweep(out, **kw) -> SweepConfig:
    base = dict(
        ebn0_db_list=(-2.0,),
        pilot_lengths=(4,),
        arms=("conventional", "soft", "proposed", "genie"),
        frames_per_point=3,
        master_seed=77,
        cfg=small_system(),
        code=CodeConfig(),
        output_dir=out,
    )
    base.update(kw)
    return SweepConfig(**base)


class TestNmse:
    def test_identity_and_zero_estimate(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
        assert nmse(h, h) == 0.0
        assert nmse(np.zeros_like(h), h) == pytest.approx(1.0, rel=1e-12)

    def test_matches_elementwise_recomputation(self):
        rng = np.random.default_rng(1)
        h = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        e = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        num = math.fsum(abs(e[i, j] - h[i, j]) ** 2 for i in range(3) for j in range(5))
        den = math.fsum(abs(h[i, j]) ** 2 for i in range(3) for j in range(5))
        assert nmse(e, h) == pytest.approx(num / den, rel=1e-12)

    def test_rejects_zero_channel_and_bad_shapes(self):
        with pytest.raises(ValueError):
            nmse(np.ones((2, 4), dtype=complex), np.zeros((2, 4), dtype=complex))
        with pytest.raises(ValueError):
            nmse(np.ones((2, 4)), np.ones((2, 3)))


class TestSweepConfigValidation:
    def test_rejects_bad_fields(self, tmp_path):
        with pytest.raises(ConfigError):
            small_sweep(tmp_path, arms=())
        with pytest.raises(ConfigError):
            small_sweep(tmp_path, arms=("conventional", "psychic"))
        with pytest.raises(ConfigError):
            small_sweep(tmp_path, arms=("soft", "soft"))
        with pytest.raises(ConfigError):
            small_sweep(tmp_path, frames_per_point=0)
        with pytest.raises(ConfigError):
            small_sweep(tmp_path, ebn0_db_list=())
        with pytest.raises(ConfigError):
            small_sweep(tmp_path, pilot_lengths=())

    def test_point_grid_order(self, tmp_path):
        sw = small_sweep(tmp_path, ebn0_db_list=(-4.0, -2.0), pilot_lengths=(4, 8))
        assert sw.points == [(-4.0, 4), (-4.0, 8), (-2.0, 4), (-2.0, 8)]


class TestRunTrial:
    def test_same_trial_id_is_identical(self, tmp_path):
        sw = small_sweep(tmp_path)
        a = run_trial(sw, sw.points[0], trial_id=5)
        b = run_trial(sw, sw.points[0], trial_id=5)
        for arm in sw.arms:
            assert np.array_equal(a.arms[arm].nmse, b.arms[arm].nmse)
            assert np.array_equal(a.arms[arm].block_errors, b.arms[arm].block_errors)
            assert np.array_equal(a.arms[arm].crc_ok, b.arms[arm].crc_ok)
            assert np.array_equal(a.arms[arm].promoted, b.arms[arm].promoted)

    def test_different_trial_ids_differ(self, tmp_path):
        sw = small_sweep(tmp_path)
        a = run_trial(sw, sw.points[0], trial_id=5)
        b = run_trial(sw, sw.points[0], trial_id=6)
        assert not np.array_equal(a.arms["genie"].nmse, b.arms["genie"].nmse)

    def test_common_random_numbers_pair_the_arms(self, tmp_path):
        """Identical pilots and channel: every arm starts from the same
        estimate, and NMSE at b=0 is the conventional value exactly."""
        sw = small_sweep(tmp_path)
        res = run_trial(sw, sw.points[0], trial_id=3)
        b0 = {arm: res.arms[arm].nmse[0] for arm in sw.arms}
        assert len(set(b0.values())) == 1
        conv = res.arms["conventional"].nmse
        assert np.all(conv == conv[0])

    def test_promotion_accounting(self, tmp_path):
        sw = small_sweep(tmp_path)
        res = run_trial(sw, sw.points[0], trial_id=4, collect_traces=True)
        t_d = sw.cfg.t_d
        assert np.all(res.arms["conventional"].promoted == 0)
        assert np.all(res.arms["soft"].promoted == t_d)
        assert np.all(res.arms["genie"].promoted == t_d)
        prop = res.arms["proposed"]
        assert np.all((prop.promoted >= 0) & (prop.promoted <= t_d))
        assert prop.traces is not None and len(prop.traces) == sw.cfg.n_b
        for b, tr in enumerate(prop.traces):
            assert int(tr.actions.sum()) == prop.promoted[b]

    def test_genie_beats_conventional_in_most_trials(self, tmp_path):
        sw = small_sweep(
            tmp_path,
            ebn0_db_list=(0.0,),
            arms=("conventional", "genie"),
            cfg=small_system(t_d=16, n_b=3),
        )
        wins = 0
        n = 60
        for t in range(n):
            res = run_trial(sw, sw.points[0], trial_id=t)
            wins += res.arms["genie"].nmse[-1] <= res.arms["conventional"].nmse[-1]
        assert wins >= 0.95 * n

    def test_frame_data_is_consistent(self, tmp_path):
        sw = small_sweep(tmp_path)
        cfg = system_for_point(sw.cfg, *sw.points[0])
        data = make_frame_data(cfg, sw.code, rng_substream(sw.master_seed, 9))
        assert data.payloads.shape == (cfg.n_b, cfg.coded_bits_per_block // 2 - 16)
        assert data.x_blocks.shape == (cfg.n_b, cfg.n_tx, cfg.t_d)
        assert data.y_blocks.shape == (cfg.n_b, cfg.n_rx, cfg.t_d)
        energy = np.mean(np.abs(data.x_blocks) ** 2)
        assert energy == pytest.approx(1.0, abs=1e-12)


@pytest.fixture(scope="module")
def sweep_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    sw = small_sweep(
        out,
        ebn0_db_list=(-3.0, -1.0),
        arms=("conventional", "proposed"),
        frames_per_point=3,
    )
    records = run_sweep(sw, workers=1, trace=True)
    return sw, records


class TestAggregationAndPersistence:
    def test_csv_structure(self, sweep_outputs):
        sw, records = sweep_outputs
        text = (sw.output_dir / "results.csv").read_text()
        lines = text.strip().split("\n")
        assert lines[0] == "arm,ebn0_db,t_p,b,nmse_mean,nmse_se,blocks_err,blocks_total"
        n_points = len(sw.points)
        assert len(lines) - 1 == len(sw.arms) * n_points * (sw.cfg.n_b + 1)
        rows = list(csv.DictReader(text.splitlines()))
        keys = [(r["arm"], float(r["ebn0_db"]), int(r["t_p"]), int(r["b"])) for r in rows]
        assert keys == sorted(keys)
        for r in rows:
            if int(r["b"]) == 0:
                assert r["blocks_total"] == "0" and r["blocks_err"] == "0"
            else:
                assert int(r["blocks_total"]) == sw.frames_per_point

    def test_aggregation_matches_trace_recomputation(self, sweep_outputs):
        """The CSV aggregates must be re-derivable from the per-trial dump."""
        sw, records = sweep_outputs
        groups = {}
        with open(sw.output_dir / "trace.jsonl") as f:
            for line in f:
                rec = json.loads(line)
                key = (rec["arm"], rec["ebn0_db"], rec["t_p"])
                groups.setdefault(key, []).append(rec)
        assert len(records) == len(groups) * (sw.cfg.n_b + 1)
        for r in records:
            grp = sorted(groups[(r.arm, r.ebn0_db, r.t_p)], key=lambda g: g["trial_id"])
            vals = np.array([g["nmse"][r.b] for g in grp])
            n = len(vals)
            assert r.nmse_mean == pytest.approx(vals.mean(), rel=1e-12, abs=1e-15)
            want_se = vals.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
            assert r.nmse_se == pytest.approx(want_se, rel=1e-12, abs=1e-15)
            if r.b >= 1:
                assert r.blocks_err == sum(g["block_errors"][r.b - 1] for g in grp)
                assert r.blocks_total == n
            else:
                assert r.blocks_err == 0 and r.blocks_total == 0

    def test_csv_text_roundtrips_through_9_digits(self, sweep_outputs):
        sw, records = sweep_outputs
        text = results_csv_text(records)
        rows = list(csv.DictReader(text.splitlines()))
        for row, rec in zip(rows, records):
            assert float(row["nmse_mean"]) == pytest.approx(rec.nmse_mean, rel=5e-9)
            assert float(row["nmse_se"]) == pytest.approx(rec.nmse_se, rel=5e-9, abs=1e-15)

    def test_fig_dat_files(self, sweep_outputs):
        sw, _ = sweep_outputs
        fig1 = (sw.output_dir / "fig1_nmse_vs_block.dat").read_text()
        datasets = [c for c in fig1.split("\n\n") if c.strip()]
        assert len(datasets) == len(sw.arms) * len(sw.points)
        body = [l for l in datasets[0].splitlines() if not l.startswith("#")]
        assert len(body) == sw.cfg.n_b + 1
        assert all(len(l.split()) == 2 for l in body)
        fig2 = (sw.output_dir / "fig2_bler_vs_snr.dat").read_text()
        datasets = [c for c in fig2.split("\n\n") if c.strip()]
        assert len(datasets) == len(sw.arms) * len(sw.pilot_lengths)
        body = [l for l in datasets[0].splitlines() if not l.startswith("#")]
        assert len(body) == len(sw.ebn0_db_list)

    def test_manifest_reloads_to_same_sweep(self, sweep_outputs):
        sw, _ = sweep_outputs
        again = load_sweep(sw.output_dir / "manifest.txt")
        assert again.ebn0_db_list == sw.ebn0_db_list
        assert again.pilot_lengths == sw.pilot_lengths
        assert again.arms == sw.arms
        assert again.frames_per_point == sw.frames_per_point
        assert again.master_seed == sw.master_seed
        for name in ("n_tx", "n_rx", "t_d", "n_b"):
            assert getattr(again.cfg, name) == getattr(sw.cfg, name)
        assert again.cfg.constellation.name == sw.cfg.constellation.name
        assert again.code == sw.code
        assert manifest_text(again) == manifest_text(sw)

    def test_worker_count_does_not_change_bytes(self, sweep_outputs, tmp_path):
        sw, _ = sweep_outputs
        base = (sw.output_dir / "results.csv").read_bytes()
        sw2 = load_sweep(sw.output_dir / "manifest.txt", output_dir=tmp_path / "w2")
        run_sweep(sw2, workers=2, trace=True)
        assert (tmp_path / "w2" / "results.csv").read_bytes() == base
        trace = (sw.output_dir / "trace.jsonl").read_bytes()
        assert (tmp_path / "w2" / "trace.jsonl").read_bytes() == trace

    def test_figures_rendered(self, sweep_outputs, tmp_path):
        _, records = sweep_outputs
        paths = render_all(records, tmp_path)
        for p in paths:
            blob = p.read_bytes()
            assert blob[:8] == b"\x89PNG\r\n\x1a\n" and len(blob) > 1000


class TestConfigFile:
    def test_defaults_and_overrides(self):
        sw = load_sweep(None, ebn0_db=(-1.0,), frames_per_point=7, output_dir="x")
        assert sw.ebn0_db_list == (-1.0,)
        assert sw.frames_per_point == 7
        assert sw.cfg.n_tx == 2 and sw.cfg.n_rx == 4
        assert sw.arms == ("conventional", "soft", "proposed", "genie")

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError):
            load_sweep(None, snr=(1.0,))

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_sweep(tmp_path / "nope.ini")

    def test_full_file_parse(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text(
            "[system]\nn_tx = 2\nn_rx = 4\nt_d = 16\nn_b = 2\nconstellation = 4qam\n"
            "[code]\ndecoder_iterations = 4\ninterleaver_seed = 99\n"
            "[sweep]\nebn0_db = -3, -1\npilot_lengths = 4, 8\narms = conventional, genie\n"
            "frames_per_point = 2\nmaster_seed = 42\noutput_dir = somewhere\n"
        )
        sw = load_sweep(path)
        assert sw.cfg.t_d == 16 and sw.cfg.n_b == 2
        assert sw.code.decoder_iterations == 4 and sw.code.interleaver_seed == 99
        assert sw.ebn0_db_list == (-3.0, -1.0)
        assert sw.pilot_lengths == (4, 8)
        assert sw.arms == ("conventional", "genie")
        assert sw.master_seed == 42
        assert sw.output_dir.as_posix() == "somewhere"

    def test_pinned_code_fields_still_validated(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[code]\ncrc_polynomial = 0x1021\n")
        with pytest.raises(ConfigError):
            load_sweep(path)


class TestCli:
    def test_sweep_subcommand(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text("[system]\nt_d = 16\nn_b = 2\n")
        rc = cli_main([
            "sweep", "--config", str(cfg), "--ebn0", "-2", "--pilot-len", "4",
            "--arms", "conventional,proposed", "--frames", "2", "--seed", "3",
            "--out", str(tmp_path / "run"),
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "bler=" in out and "wrote:" in out
        for name in ("results.csv", "fig1_nmse_vs_block.dat", "fig2_bler_vs_snr.dat",
                     "manifest.txt", "fig1_nmse_vs_block.png", "fig2_bler_vs_snr.png"):
            assert (tmp_path / "run" / name).exists()
        assert not (tmp_path / "run" / "trace.jsonl").exists()

    def test_trial_subcommand_with_trace(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text("[system]\nt_d = 16\nn_b = 2\n")
        rc = cli_main([
            "trial", "--config", str(cfg), "--ebn0", "-4", "--pilot-len", "4",
            "--seed", "3", "--trial-id", "1", "--out", str(tmp_path / "tr"),
        ])
        assert rc == 0
        assert "proposed" in capsys.readouterr().out
        lines = [json.loads(l) for l in (tmp_path / "tr" / "trace.jsonl").read_text().splitlines()]
        summaries = [l for l in lines if "block" not in l]
        details = [l for l in lines if "block" in l]
        assert {l["arm"] for l in summaries} == {"conventional", "soft", "proposed", "genie"}
        assert len(details) == 2
        assert all(len(d["actions"]) == 16 for d in details)
