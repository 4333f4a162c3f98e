"""INI-backed configuration and run manifests.

Three sections mirror the three config dataclasses field for field:
[system] for the link parameters, [code] for the channel code, [sweep] for
the experiment grid. A run's manifest.txt is written in the same format, so
`dapilot sweep --config manifest.txt` reproduces the run exactly.
"""

from __future__ import annotations

import configparser
import io
from pathlib import Path

from . import __version__
from .channel import ConfigError, SystemConfig
from .codec import CodeConfig
from .harness import SweepConfig
from .modulation import constellation_by_name


def _parse_list(raw: str, convert):
    items = [s.strip() for s in raw.replace(",", " ").split()]
    return tuple(convert(s) for s in items if s)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


_SWEEP_DEFAULTS = {
    "ebn0_db": (-4.0, -2.0),
    "pilot_lengths": (8,),
    "arms": ("conventional", "soft", "proposed", "genie"),
    "frames_per_point": 200,
    "master_seed": 1,
    "output_dir": "runs",
}


def load_sweep(path: str | Path | None = None, **overrides) -> SweepConfig:
    """Build a SweepConfig from an optional INI file plus keyword overrides.

    Recognized overrides (all optional, None means "no override"): ebn0_db,
    pilot_lengths, arms, frames_per_point, master_seed, output_dir.
    """
    parser = configparser.ConfigParser()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)

    sys_kw = {}
    if parser.has_section("system"):
        sec = parser["system"]
        for name in ("n_tx", "n_rx", "t_d", "n_b"):
            if name in sec:
                sys_kw[name] = sec.getint(name)
        if "constellation" in sec:
            sys_kw["constellation"] = constellation_by_name(sec["constellation"])
    cfg = SystemConfig(**sys_kw)

    code_kw = {}
    if parser.has_section("code"):
        sec = parser["code"]
        for name, base in (
            ("crc_polynomial", 16),
            ("rsc_feedforward", 8),
            ("rsc_feedback", 8),
        ):
            if name in sec:
                code_kw[name] = int(sec[name], 0)
        if "code_rate" in sec:
            code_kw["code_rate"] = sec.getfloat("code_rate")
        for name in ("decoder_iterations", "interleaver_seed"):
            if name in sec:
                code_kw[name] = sec.getint(name)
    code = CodeConfig(**code_kw)

    sweep_kw = dict(_SWEEP_DEFAULTS)
    if parser.has_section("sweep"):
        sec = parser["sweep"]
        if "ebn0_db" in sec:
            sweep_kw["ebn0_db"] = _parse_list(sec["ebn0_db"], float)
        if "pilot_lengths" in sec:
            sweep_kw["pilot_lengths"] = _parse_list(sec["pilot_lengths"], int)
        if "arms" in sec:
            sweep_kw["arms"] = _parse_list(sec["arms"], str)
        if "frames_per_point" in sec:
            sweep_kw["frames_per_point"] = sec.getint("frames_per_point")
        if "master_seed" in sec:
            sweep_kw["master_seed"] = sec.getint("master_seed")
        if "output_dir" in sec:
            sweep_kw["output_dir"] = sec["output_dir"]
    for key, value in overrides.items():
        if key not in sweep_kw:
            raise ConfigError(f"unknown override {key!r}")
        if value is not None:
            sweep_kw[key] = value

    return SweepConfig(
        ebn0_db_list=sweep_kw["ebn0_db"],
        pilot_lengths=sweep_kw["pilot_lengths"],
        arms=sweep_kw["arms"],
        frames_per_point=int(sweep_kw["frames_per_point"]),
        master_seed=int(sweep_kw["master_seed"]),
        cfg=cfg,
        code=code,
        output_dir=Path(sweep_kw["output_dir"]),
    )


def manifest_text(sweep: SweepConfig) -> str:
    """Serialize a sweep back to loadable INI, stamped with the version."""
    parser = configparser.ConfigParser()
    parser["system"] = {
        "n_tx": str(sweep.cfg.n_tx),
        "n_rx": str(sweep.cfg.n_rx),
        "t_d": str(sweep.cfg.t_d),
        "n_b": str(sweep.cfg.n_b),
        "constellation": sweep.cfg.constellation.name,
    }
    parser["code"] = {
        "crc_polynomial": f"0x{sweep.code.crc_polynomial:04x}",
        "rsc_feedforward": f"0o{sweep.code.rsc_feedforward:o}",
        "rsc_feedback": f"0o{sweep.code.rsc_feedback:o}",
        "code_rate": _fmt(sweep.code.code_rate),
        "decoder_iterations": str(sweep.code.decoder_iterations),
        "interleaver_seed": str(sweep.code.interleaver_seed),
    }
    parser["sweep"] = {
        "ebn0_db": ", ".join(_fmt(e) for e in sweep.ebn0_db_list),
        "pilot_lengths": ", ".join(str(t) for t in sweep.pilot_lengths),
        "arms": ", ".join(sweep.arms),
        "frames_per_point": str(sweep.frames_per_point),
        "master_seed": str(sweep.master_seed),
        "output_dir": sweep.output_dir.as_posix(),
    }
    buf = io.StringIO()
    buf.write(f"# dapilot {__version__} run manifest\n")
    buf.write("# reload with: dapilot sweep --config <this file>\n\n")
    parser.write(buf)
    return buf.getvalue()
