"""``mami-bench`` command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 constraint failure, 3 no
synchronization peak.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import linksim, planner, sync
from .constellation import Modulation
from .errors import ConfigError, Infeasible, MamiError, NoPeak, NoTurnaround, ScheduleError
from .mimoproc import Detector, Precoder
from .ofdm import FrameSchedule, OfdmParams, default_frame

EXIT_OK, EXIT_CONFIG, EXIT_CONSTRAINT, EXIT_NO_PEAK = 0, 1, 2, 3


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    """Comma list, or ``start:stop:step`` with the stop included."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("range step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(start + i * step) for i in range(max(n, 0)))
    return tuple(float(x) for x in text.split(","))


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


def _str(text: str) -> str:
    return text.strip()


OFDM_KEYS: dict[str, Callable] = {
    "fft_size": int, "used_subcarriers": int, "cp_len": int, "sample_rate_hz": float,
}

PLAN_KEYS: dict[str, Callable] = {
    "m": int, "k": int, **OFDM_KEYS, "n_ant": int, "word_bytes": int, "word_bytes_ant": int,
    "fc_hz": float, "f_sub_hz": _opt_float, "n_sub": int, "n_co": int,
    "sdr_max_rate_Bps": float, "sdr_max_links": int, "co_max_rate_Bps": float,
    "co_max_links": int, "rf_tx_delay_s": float, "rf_rx_delay_s": float, "fft_delay_s": float,
    "extras_Bps": float, "host_links": int, "schedule": _str,
}

SWEEP_KEYS: dict[str, Callable] = {
    "m": int, "k": int, "scheme": _str, "detector": _str, "precoder": _str,
    "beta_dec": float, "beta_pre": float, "engine": _str, "neumann_terms": int,
    "modulation": _str, "gain_grid_db": _floats, "bits_per_point": int, "seed": int,
    "channel_mode": _str, "ul_power_db": _floats, "direction": _str, "csi": _str,
    "used_subcarriers": int, "hardware": _str, "calibrate": _bool, "doppler_hz": float,
    "ul_pilot_gain_db": float, "pilot_boost": _opt_float, "noise_power": float,
    "max_frames": int, "schedule": _str,
}

SIMULATE_KEYS: dict[str, Callable] = {**SWEEP_KEYS, "ul_gain_db": float, "dl_gain_db": float}

SYNC_KEYS: dict[str, Callable] = {
    "root": int, "length": int, "threshold": float, "track_window": int,
    "cfo_grid_hz": _floats, "sample_rate_hz": float, "n_samples": int, "offset": int,
    "cfo_hz": float, "snr_db": _opt_float, "noise_only": _bool, "input": _str, "seed": int,
}

KEYS = {"plan": PLAN_KEYS, "simulate": SIMULATE_KEYS, "sweep": SWEEP_KEYS, "sync": SYNC_KEYS}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    config_path: Path | None
    output_path: Path | None
    seed: int | None
    overrides: tuple[str, ...] = ()
    schedule: str | None = None

    def load(self) -> dict:
        """Merge file, ``--set`` overrides, ``--seed`` and ``--schedule``; type-convert."""
        raw: dict[str, str] = {}
        if self.config_path is not None:
            try:
                raw.update(parse_config_text(Path(self.config_path).read_text()))
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        for item in self.overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, value = (s.strip() for s in item.split("=", 1))
            raw[key] = value
        if self.seed is not None:
            raw["seed"] = str(self.seed)
        if self.schedule is not None:
            raw["schedule"] = self.schedule
        schema = KEYS[self.subcommand]
        unknown = sorted(set(raw) - set(schema))
        if unknown:
            raise ConfigError(f"unknown keys for {self.subcommand}: {', '.join(unknown)}")
        out = {}
        for key, value in raw.items():
            try:
                out[key] = schema[key](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
        return out


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _schedule(cfg: dict) -> FrameSchedule:
    if "schedule" not in cfg:
        return default_frame()
    try:
        return FrameSchedule.from_string(cfg["schedule"])
    except ScheduleError as exc:
        raise ConfigError(f"invalid schedule: {exc}") from exc


def _ofdm(cfg: dict) -> OfdmParams:
    kw = {k: cfg[k] for k in OFDM_KEYS if k in cfg}
    try:
        return OfdmParams(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_plan(cfg: dict, out: Path | None) -> int:
    missing = [k for k in ("m", "k") if k not in cfg]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    try:
        params = planner.SystemParams(
            m=cfg["m"], k=cfg["k"], ofdm=_ofdm(cfg), n_ant=cfg.get("n_ant", 2),
            word_bytes=cfg.get("word_bytes", 3), word_bytes_ant=cfg.get("word_bytes_ant", 4),
            fc_hz=cfg.get("fc_hz", 3.7e9), f_sub_override=cfg.get("f_sub_hz"))
        hw_keys = ("sdr_max_rate_Bps", "sdr_max_links", "co_max_rate_Bps", "co_max_links",
                   "rf_tx_delay_s", "rf_rx_delay_s", "fft_delay_s")
        hw = planner.HardwareProfile(**{k: cfg[k] for k in hw_keys if k in cfg})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        n_co = cfg.get("n_co") or planner.min_coprocessors(params, hw)
        n_sub = cfg.get("n_sub") or planner.max_subsystem_size(params, hw, n_co)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    try:
        report = planner.validate(params, n_sub, n_co, hw, cfg.get("extras_Bps", 0.0),
                                  cfg.get("host_links", 0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    latency_ok = True
    try:
        lat = planner.latency_budget(_schedule(cfg), params, hw)
        report = planner.PlanReport(report.processing, report.shuffling, report.n_sub,
                                    report.n_co, report.checks, report.notes, lat)
        latency_ok = lat.feasible
    except NoTurnaround as exc:
        report = planner.PlanReport(report.processing, report.shuffling, report.n_sub,
                                    report.n_co, report.checks,
                                    report.notes + (f"latency: {exc}",))
    sys.stdout.write(report.to_text())
    _emit(report.to_csv(), out)
    return EXIT_OK if report.all_pass and latency_ok else EXIT_CONSTRAINT


def sweep_config(cfg: dict) -> linksim.SweepConfig:
    scheme = cfg.get("scheme", "").lower()
    det = cfg.get("detector", scheme or "zf")
    pre = cfg.get("precoder", {"mrc": "mrt"}.get(scheme, scheme) or "zf")
    engine = cfg.get("engine", "direct")
    terms = cfg.get("neumann_terms", 3)
    try:
        kw = dict(
            scheme_ul=Detector(det, cfg.get("beta_dec", 0.0), engine, terms),
            scheme_dl=Precoder(pre, cfg.get("beta_pre", 0.0), None, engine, terms),
            modulation=Modulation.parse(cfg.get("modulation", "qpsk")),
        )
        passthrough = ("m", "k", "gain_grid_db", "bits_per_point", "seed", "channel_mode",
                       "ul_power_db", "csi", "used_subcarriers", "hardware", "calibrate",
                       "doppler_hz", "ul_pilot_gain_db", "pilot_boost", "noise_power",
                       "max_frames")
        kw.update({k: cfg[k] for k in passthrough if k in cfg})
        if "direction" in cfg:
            kw["direction"] = cfg["direction"].upper()
        return linksim.SweepConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_sweep(cfg: dict, out: Path | None) -> int:
    sc = sweep_config(cfg)
    try:
        records = linksim.ber_sweep(sc, _schedule(cfg))
    except ScheduleError as exc:
        raise ConfigError(str(exc)) from exc
    _emit(linksim.records_to_csv(records), out)
    return EXIT_OK


def cmd_simulate(cfg: dict, out: Path | None) -> int:
    sc = sweep_config(cfg)
    ul = cfg.get("ul_gain_db", sc.gain_grid_db[0])
    dl = cfg.get("dl_gain_db", sc.gain_grid_db[0])
    state = linksim.new_frame_state(sc, np.random.SeedSequence([sc.seed, 0, 0]))
    try:
        outcomes = linksim.run_tdd_frame(state, _schedule(cfg), sc, ul, dl)
    except ScheduleError as exc:
        raise ConfigError(str(exc)) from exc
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["symbol", "type", "user", "errors", "bits"])
    for o in outcomes:
        if o.errors is None:
            w.writerow([o.index, o.kind.value, "", "", 0])
            continue
        for user, e in enumerate(o.errors):
            w.writerow([o.index, o.kind.value, user, int(e), o.bits])
    _emit(buf.getvalue(), out)
    return EXIT_OK


def cmd_sync(cfg: dict, out: Path | None) -> int:
    try:
        pss_kw = {k: cfg[k] for k in ("root", "length", "threshold", "track_window",
                                     "cfo_grid_hz") if k in cfg}
        pss = sync.PssConfig(**pss_kw)
    except (ValueError, MamiError) as exc:
        raise ConfigError(str(exc)) from exc
    fs = cfg.get("sample_rate_hz", 30.72e6)
    seed = cfg.get("seed", 0)
    if "input" in cfg:
        try:
            x = sync.read_iq(cfg["input"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read samples: {exc}") from exc
    else:
        n = cfg.get("n_samples", 30720)
        if cfg.get("noise_only", False):
            rng = np.random.default_rng(seed)
            x = np.sqrt(0.5) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        else:
            try:
                x = sync.embed_pss(n, cfg.get("offset", 1234), pss, fs, cfg.get("cfo_hz", 0.0),
                                   cfg.get("snr_db"), seed)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
    try:
        res = sync.acquire(x, pss, fs)
    except NoPeak as exc:
        print(f"no peak: {exc}", file=sys.stderr)
        return EXIT_NO_PEAK
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _emit("timing_offset,cfo_hz,peak_metric\n"
          f"{res.timing_offset},{res.cfo_hz:g},{res.peak_metric:.6f}\n", out)
    return EXIT_OK


COMMANDS = {"plan": cmd_plan, "simulate": cmd_simulate, "sweep": cmd_sweep, "sync": cmd_sync}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are configuration errors, not constraint failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mami-bench",
                                 description="Massive-MIMO baseband simulator and system planner")
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="flat key=value config file")
    ap.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--schedule", help="frame schedule string, one letter per symbol (PUpDG)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    run = RunConfig(args.subcommand, args.config, args.out, args.seed,
                    tuple(args.overrides), args.schedule)
    try:
        cfg = run.load()
        return COMMANDS[run.subcommand](cfg, run.output_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
