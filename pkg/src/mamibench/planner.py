"""Dimensioning of a distributed massive-MIMO base station.

Processing (Gops/s), data-shuffling rates, subsystem sizing, co-processor
counts, link budgets and the TDD turnaround budget, evaluated against a
hardware profile. Rates are bytes/s internally; reports print MB/s
(1 MB = 1e6 bytes) next to the raw figure.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .errors import Infeasible, NoTurnaround
from .ofdm import FrameSchedule, OfdmParams, SymbolType

MB = 1e6
GOPS = 1e9


@dataclass(frozen=True)
class SystemParams:
    """System dimensions and wordlengths.

    ``f_sub_override`` replaces the derived subcarrier rate
    ``F_s · N_used / (N_FFT + N_cp)`` when a design is specified with a
    rounded figure; ``None`` keeps the derived value.
    """

    m: int = 100
    k: int = 12
    ofdm: OfdmParams = field(default_factory=OfdmParams)
    n_ant: int = 2
    word_bytes: int = 3
    word_bytes_ant: int = 4
    fc_hz: float = 3.7e9
    f_sub_override: float | None = None

    def __post_init__(self):
        if self.m < 0 or self.k < 0:
            raise ValueError("m and k must be non-negative")
        if self.n_ant < 1 or self.word_bytes < 1 or self.word_bytes_ant < 1:
            raise ValueError("n_ant and wordlengths must be positive")
        if self.f_sub_override is not None and self.f_sub_override <= 0:
            raise ValueError("f_sub_override must be positive")

    @property
    def t_ofdm(self) -> float:
        return self.ofdm.symbol_duration_s

    @property
    def f_sub_derived(self) -> float:
        o = self.ofdm
        return o.sample_rate_hz * o.used_subcarriers / (o.fft_size + o.cp_len)

    @property
    def f_sub(self) -> float:
        return self.f_sub_derived if self.f_sub_override is None else self.f_sub_override

    @classmethod
    def lumami(cls, m: int = 100) -> SystemParams:
        """The 100-antenna, 12-user testbed with its rounded 16.8 MS/s subcarrier rate."""
        return cls(m=m, k=12, n_ant=2, word_bytes=3, f_sub_override=16.8e6)


@dataclass(frozen=True)
class HardwareProfile:
    sdr_max_rate_Bps: float = 830e6
    sdr_max_links: int = 15
    co_max_rate_Bps: float = 2400e6
    co_max_links: int = 32
    rf_tx_delay_s: float = 2.25e-6
    rf_rx_delay_s: float = 2.25e-6
    fft_delay_s: float = 35e-6

    def __post_init__(self):
        if min(self.sdr_max_rate_Bps, self.co_max_rate_Bps) <= 0:
            raise ValueError("rate limits must be positive")
        if min(self.sdr_max_links, self.co_max_links) <= 0:
            raise ValueError("link limits must be positive")
        if min(self.rf_tx_delay_s, self.rf_rx_delay_s, self.fft_delay_s) < 0:
            raise ValueError("delays must be non-negative")


# Pseudo-inverse figure printed alongside the formula in the reference design.
PRINTED_PINV_GOPS = 1080.0


def processing_requirements(p: SystemParams) -> dict[str, float]:
    """Real operations per second for each baseband function (complex mult = 4 ops).

    The pseudo-inverse has two OFDM symbols to finish, hence ``2 t_OFDM``.
    """
    o, t = p.ofdm, p.t_ofdm
    mk = 4 * p.m * p.k * o.used_subcarriers / t
    return {
        "fft_ifft": 4 * p.m * math.log2(o.fft_size) * o.fft_size / t,
        "detection": mk,
        "precoding": mk,
        "recip_cal": mk,
        "pseudo_inverse": 4 * o.used_subcarriers * (2 * p.m * p.k**2 + p.k**3) / (2 * t),
    }


def shuffling_requirements(p: SystemParams) -> dict[str, float]:
    """Link count to central processing and the antenna/subcarrier/information rates (bytes/s)."""
    return {
        "links_central": 2 * p.m,
        "antenna_rate_Bps": p.word_bytes_ant * p.m * p.ofdm.sample_rate_hz,
        "subcarrier_rate_Bps": p.word_bytes * p.m * p.f_sub,
        "information_rate_Bps": p.k * p.f_sub,
    }


def sdr_rate(p: SystemParams, n_sub: int) -> float:
    """Router SDR throughput ``n_ant · n_sub · w · F_sub``."""
    return p.n_ant * n_sub * p.word_bytes * p.f_sub


def co_rate(p: SystemParams, n_co: int, extras_Bps: float = 0.0) -> float:
    """Per co-processor throughput ``(M w + K) F_sub / n_co`` plus any host traffic."""
    return (p.m * p.word_bytes + p.k) * p.f_sub / n_co + extras_Bps


def max_subsystem_size(p: SystemParams, hw: HardwareProfile, n_co: int | None = None) -> int:
    """Largest ``n_sub`` meeting the SDR rate limit (and link limit if ``n_co`` is given).

    Raises
    ------
    Infeasible
        If even a single SDR per subsystem violates a limit.
    """
    unit = sdr_rate(p, 1)
    n = math.floor(hw.sdr_max_rate_Bps / unit)
    while n > 0 and sdr_rate(p, n) >= hw.sdr_max_rate_Bps:
        n -= 1
    if n_co is not None:
        n = min(n, hw.sdr_max_links - n_co - 1)
    if n < 1:
        raise Infeasible("no subsystem size satisfies the SDR constraints")
    return n


def min_coprocessors(p: SystemParams, hw: HardwareProfile) -> int:
    """Smallest ``n_co`` with ``(M w + K) F_sub / n_co < R_CO,max``."""
    total = (p.m * p.word_bytes + p.k) * p.f_sub
    n = max(1, math.floor(total / hw.co_max_rate_Bps) + 1)
    while n > 1 and co_rate(p, n - 1) < hw.co_max_rate_Bps:
        n -= 1
    return n


def detection_matrix_rate(p: SystemParams) -> float:
    """Detection matrices per second with one matrix per K subcarriers."""
    return p.f_sub / p.k


def host_visualization_rate(subcarriers_per_co: int, frame_ms: float) -> float:
    """Host visualization traffic in bytes/s for one co-processor.

    Per frame the host receives 2-byte decimated constellation points and
    4-byte raw samples of two symbols for every subcarrier of the sub-band;
    the per-subcarrier payload is counted in kilobytes (it covers the whole
    antenna array), so 300 subcarriers at a 10 ms frame give 300 MB/s.
    """
    if subcarriers_per_co < 0 or frame_ms <= 0:
        raise ValueError("need non-negative subcarriers and a positive frame period")
    payload_kb = subcarriers_per_co * 2 + 2 * subcarriers_per_co * 4
    return payload_kb * 1e3 / (frame_ms * 1e-3)


def subsystem_count(p: SystemParams, n_sub: int) -> int:
    return math.ceil(p.m / (n_sub * p.n_ant))


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    rhs: float
    unit: str

    @property
    def passed(self) -> bool:
        return self.lhs < self.rhs


@dataclass(frozen=True)
class PlanReport:
    processing: dict[str, float]
    shuffling: dict[str, float]
    n_sub: int
    n_co: int
    checks: tuple[Check, ...]
    notes: tuple[str, ...] = ()
    latency: LatencyBudget | None = None

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_csv(self) -> str:
        """One row per constraint; rates in MB/s, link counts as integers."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check_name", "lhs", "rhs", "pass"])
        for c in self.checks:
            scale = MB if c.unit == "MBps" else 1.0
            w.writerow([c.name, _fmt(c.lhs / scale), _fmt(c.rhs / scale),
                        "pass" if c.passed else "fail"])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = ["Processing requirements"]
        for name, v in self.processing.items():
            lines.append(f"  {name:<16} {v / GOPS:>12.4f} Gops/s")
        lines.append("Data shuffling")
        for name, v in self.shuffling.items():
            if name.endswith("_Bps"):
                lines.append(f"  {name[:-4]:<20} {v / MB:>12.4f} MB/s   ({v:.6g} B/s)")
            else:
                lines.append(f"  {name:<20} {v:>12g}")
        lines.append(f"Partitioning: n_sub = {self.n_sub}, n_co = {self.n_co}")
        lines.append("Constraints (lhs < rhs)")
        for c in self.checks:
            scale = MB if c.unit == "MBps" else 1.0
            unit = "MB/s" if c.unit == "MBps" else "links"
            status = "pass" if c.passed else "FAIL"
            lines.append(f"  {c.name:<8} {c.lhs / scale:>12.6g} < {c.rhs / scale:<10.6g} {unit:<6} {status}")
        if self.latency is not None:
            lines.append("Turnaround budget")
            for name, v in self.latency.terms().items():
                lines.append(f"  {name:<16} {v * 1e6:>10.3f} us")
            lines.append(f"  feasible: {'yes' if self.latency.feasible else 'no'}")
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def validate(p: SystemParams, n_sub: int, n_co: int, hw: HardwareProfile,
             extras_Bps: float = 0.0, host_links: int = 0) -> PlanReport:
    """Evaluate the four partitioning constraints.

    ``extras_Bps`` is host traffic added per direction to each co-processor;
    ``host_links`` adds host connections to the co-processor link count.
    The co-processor link count uses the number of subsystems (one link per
    subsystem and direction, plus two); the per-SDR count is reported as a
    note for comparison.
    """
    if n_sub < 1 or n_co < 1:
        raise ValueError("n_sub and n_co must be positive")
    n_subsys = subsystem_count(p, n_sub) if p.m else 0
    p2p_co = 2 * n_subsys + 2 + host_links
    checks = (
        Check("R_SDR", sdr_rate(p, n_sub), hw.sdr_max_rate_Bps, "MBps"),
        Check("P2P_SDR", n_co + n_sub, hw.sdr_max_links, "links"),
        Check("R_CO", co_rate(p, n_co, extras_Bps), hw.co_max_rate_Bps, "MBps"),
        Check("P2P_CO", p2p_co, hw.co_max_links, "links"),
    )
    proc = processing_requirements(p)
    literal = 2 * math.ceil(p.m / n_sub) + 2
    notes = [
        f"P2P_CO from {n_subsys} subsystems = {p2p_co}; "
        f"2*ceil(M/n_sub)+2 = {literal}",
        f"pseudo-inverse formula gives {proc['pseudo_inverse'] / GOPS:.1f} Gops/s "
        f"(reference figure {PRINTED_PINV_GOPS:g})",
    ]
    if extras_Bps:
        notes.append(f"R_CO without host traffic = {_fmt(co_rate(p, n_co) / MB)} MB/s")
    return PlanReport(proc, shuffling_requirements(p), n_sub, n_co, checks, tuple(notes))


@dataclass(frozen=True)
class LatencyBudget:
    """TDD turnaround decomposition (seconds)."""

    window: float
    rf: float
    ofdm: float
    window_symbols: int

    @property
    def remaining(self) -> float:
        """Time left for CSI estimation, precoder computation and routing."""
        return self.window - self.rf - self.ofdm

    @property
    def feasible(self) -> bool:
        return self.remaining > 0

    def terms(self) -> dict[str, float]:
        return {"window": self.window, "rf_tx_rx": self.rf, "fft_ifft": self.ofdm,
                "remaining": self.remaining}


def latency_budget(schedule: FrameSchedule, p: SystemParams, hw: HardwareProfile) -> LatencyBudget:
    """Turnaround window between a UL pilot and the next DL symbol, minus fixed delays.

    The window counts whole symbols from the end of a UL pilot to the start
    of the first DL symbol (pilot or data) before the next UL pilot; the
    tightest such pair sets the budget. RF delays count once per direction and
    the FFT (RX) plus IFFT (TX) each take ``fft_delay_s``.

    Raises
    ------
    NoTurnaround
        If no UL pilot is followed by a DL symbol.
    """
    gaps = []
    pilot = None
    for i, s in enumerate(schedule.symbols):
        if s is SymbolType.UL_PILOT:
            pilot = i
        elif s.direction == "DL" and pilot is not None:
            gaps.append(i - pilot - 1)
            pilot = None
    if not gaps:
        raise NoTurnaround("schedule has no UL pilot followed by a DL symbol")
    n = min(gaps)
    return LatencyBudget(window=n * p.t_ofdm, rf=hw.rf_tx_delay_s + hw.rf_rx_delay_s,
                         ofdm=2 * hw.fft_delay_s, window_symbols=n)
