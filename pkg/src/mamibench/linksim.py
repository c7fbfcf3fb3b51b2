"""End-to-end TDD frame simulation and Monte-Carlo BER sweeps.

The link is simulated per subcarrier in the frequency domain. Because the
OFDM transform is unitary and the cyclic prefix absorbs the channel, this is
the same as running every symbol through :func:`ofdm.ofdm_modulate` /
:func:`ofdm.ofdm_demodulate`; the time-domain path is kept out of the inner
loop for speed.

Power convention: noise is CN(0, ``noise_power``) per antenna and subcarrier
and a gain of ``γ`` dB means ``Eb/N0 = γ`` per transmit stream, i.e. the
per-symbol transmit energy is ``10^(γ/10) · bits_per_symbol``. With one
antenna and a unit channel, QPSK then gives ``BER = Q(√(2γ))``.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal

import numpy as np

from .channel import (HardwareFront, PropagationChannel, SeedLike, complex_normal,
                      compose_dl, compose_ul, evolve_channel, jakes_correlation)
from .constellation import Modulation, demap, map_bits
from .errors import BufferOverrun, ScheduleError
from .mimoproc import (CsiEstimate, Detector, Precoder, calibration_matrix, detect_matrix,
                       equalize, ls_estimate, precode_matrix, ue_equalize_dl)
from .ofdm import FrameSchedule, OfdmParams, PilotAllocation, SymbolType

ChannelMode = Literal["iid", "flat_block", "unit"]
CHANNEL_MODES = ("iid", "flat_block", "unit")


@dataclass(frozen=True)
class SweepConfig:
    """Everything that defines a BER sweep.

    ``pilot_boost`` is the per-subcarrier power gain of a comb pilot relative
    to a data subcarrier; ``None`` means K, i.e. a UE spends the same energy
    on its pilot symbol (on 1/K of the subcarriers) as on a data symbol.
    ``ul_pilot_gain_db`` is the UL pilot gain held fixed during DL sweeps.
    """

    m: int = 8
    k: int = 2
    scheme_ul: Detector = field(default_factory=Detector)
    scheme_dl: Precoder = field(default_factory=Precoder)
    modulation: Modulation = Modulation.QPSK
    gain_grid_db: tuple[float, ...] = (0.0,)
    bits_per_point: int = 100_000
    seed: int = 0
    channel_mode: ChannelMode = "flat_block"
    ul_power_db: tuple[float, ...] = ()
    direction: Literal["UL", "DL"] = "UL"
    csi: Literal["ls", "perfect"] = "ls"
    used_subcarriers: int = 1200
    hardware: Literal["ideal", "random"] = "ideal"
    calibrate: bool = True
    doppler_hz: float = 0.0
    ul_pilot_gain_db: float = 20.0
    pilot_boost: float | None = None
    noise_power: float = 1.0
    ofdm: OfdmParams = field(default_factory=OfdmParams)
    max_frames: int = 100_000

    def __post_init__(self):
        if not self.m >= self.k >= 1:
            raise ValueError("need m >= k >= 1")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"unknown channel mode {self.channel_mode!r}")
        if self.direction not in ("UL", "DL"):
            raise ValueError("direction must be UL or DL")
        if self.csi not in ("ls", "perfect"):
            raise ValueError("csi must be 'ls' or 'perfect'")
        if self.hardware not in ("ideal", "random"):
            raise ValueError("hardware must be 'ideal' or 'random'")
        if self.ul_power_db and len(self.ul_power_db) != self.k:
            raise ValueError("ul_power_db needs one entry per user")
        if not self.gain_grid_db:
            raise ValueError("empty gain grid")
        if self.bits_per_point < 1:
            raise ValueError("bits_per_point must be positive")
        if self.used_subcarriers < self.k:
            raise ValueError("need at least K used subcarriers")
        object.__setattr__(self, "gain_grid_db", tuple(float(g) for g in self.gain_grid_db))
        object.__setattr__(self, "ul_power_db", tuple(float(g) for g in self.ul_power_db))

    @property
    def boost(self) -> float:
        return float(self.k if self.pilot_boost is None else self.pilot_boost)

    @property
    def user_offsets_db(self) -> np.ndarray:
        return np.asarray(self.ul_power_db or (0.0,) * self.k)

    def draw_hardware(self) -> HardwareFront:
        if self.hardware == "ideal":
            return HardwareFront.ideal(self.m, self.k)
        return HardwareFront.random(self.m, self.k, np.random.SeedSequence([self.seed, 0x4857]))


@dataclass
class FrameState:
    """Mutable per-frame simulation state.

    ``prop`` holds one propagation matrix per channel unit (K x M each) and
    ``unit_of`` maps every used subcarrier to its unit. Random draws come from
    three independent streams: channel, bits and noise.
    """

    prop: np.ndarray
    unit_of: np.ndarray
    hw: HardwareFront
    rng_channel: np.random.Generator
    rng_bits: np.random.Generator
    rng_noise: np.random.Generator
    csi: CsiEstimate | None = None
    w_ul: np.ndarray | None = None
    p_dl: np.ndarray | None = None
    dl_gain_est: np.ndarray | None = None
    _g: np.ndarray | None = None
    _h: np.ndarray | None = None

    def ul_channel(self) -> np.ndarray:
        """Per-subcarrier up-link channels, shape (used, M, K)."""
        if self._g is None:
            self._g = compose_ul(PropagationChannel(self.prop), self.hw)[self.unit_of]
        return self._g

    def dl_channel(self) -> np.ndarray:
        """Per-subcarrier down-link channels, shape (used, K, M)."""
        if self._h is None:
            self._h = compose_dl(PropagationChannel(self.prop), self.hw)[self.unit_of]
        return self._h

    def advance(self, rho: float) -> None:
        if rho < 1.0:
            self.prop = evolve_channel(self.prop, rho, self.rng_channel)
            self._g = self._h = None


def new_frame_state(cfg: SweepConfig, seed: SeedLike = None,
                    hw: HardwareFront | None = None) -> FrameState:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    c_seed, b_seed, n_seed = ss.spawn(3)
    rng_channel = np.random.default_rng(c_seed)
    used, k, m = cfg.used_subcarriers, cfg.k, cfg.m
    if cfg.channel_mode == "unit":
        prop = np.ones((1, k, m), dtype=np.complex128)
        unit_of = np.zeros(used, dtype=int)
    elif cfg.channel_mode == "flat_block":
        n_blocks = -(-used // k)
        prop = complex_normal(rng_channel, (n_blocks, k, m))
        unit_of = np.arange(used) // k
    else:
        prop = complex_normal(rng_channel, (used, k, m))
        unit_of = np.arange(used)
    return FrameState(prop=prop, unit_of=unit_of, hw=hw or cfg.draw_hardware(),
                      rng_channel=rng_channel, rng_bits=np.random.default_rng(b_seed),
                      rng_noise=np.random.default_rng(n_seed))


@dataclass(frozen=True)
class SymbolOutcome:
    index: int
    kind: SymbolType
    errors: np.ndarray | None = None
    bits: int = 0


def _power(gain_db: float, cfg: SweepConfig) -> float:
    return 10 ** (gain_db / 10) * cfg.modulation.bits_per_symbol


def _ul_pilot(state: FrameState, cfg: SweepConfig, alloc: PilotAllocation, gain_db: float):
    used = cfg.used_subcarriers
    owner = alloc.owner_of(used)
    amp = np.sqrt(_power(gain_db, cfg) * 10 ** (cfg.user_offsets_db / 10) * cfg.boost)
    g = state.ul_channel()
    rx = g[np.arange(used), :, owner].T * amp[owner]
    rx = rx + complex_normal(state.rng_noise, rx.shape, cfg.noise_power)
    if cfg.csi == "perfect":
        # genie CSI: one matrix per channel unit (block-flat channels need no hold error)
        units = compose_ul(PropagationChannel(state.prop), state.hw) * amp[None, None, :]
        hold = {"unit": used, "flat_block": cfg.k, "iid": 1}[cfg.channel_mode]
        csi = CsiEstimate(g_hat=units, hold_block=hold)
    else:
        csi = ls_estimate(rx, np.ones(cfg.k), alloc)
    state.csi = csi
    w = detect_matrix(csi.g_hat, cfg.scheme_ul)
    # unbias each stream and undo the pilot boost so decisions see unit-energy symbols
    bias = np.einsum("bkm,bmk->bk", w, csi.g_hat)
    state.w_ul = w * (np.sqrt(cfg.boost) / bias)[..., None]
    precoder = cfg.scheme_dl
    if cfg.calibrate:
        precoder = replace(precoder, calibration=calibration_matrix(state.hw))
    else:
        precoder = replace(precoder, calibration=None)
    state.p_dl = precode_matrix(csi.g_hat, precoder)


def _ul_data(state: FrameState, cfg: SweepConfig, gain_db: float):
    used, k = cfg.used_subcarriers, cfg.k
    nbits = used * cfg.modulation.bits_per_symbol
    bits = state.rng_bits.integers(0, 2, (k, nbits))
    z = map_bits(bits, cfg.modulation)
    amp = np.sqrt(_power(gain_db, cfg) * 10 ** (cfg.user_offsets_db / 10))
    g = state.ul_channel()
    r = np.einsum("smk,ks->ms", g, amp[:, None] * z)
    r = r + complex_normal(state.rng_noise, r.shape, cfg.noise_power)
    w = state.w_ul[state.csi.block_of(used)]
    z_hat = equalize(w, r.T).T
    errors = np.sum(demap(z_hat, cfg.modulation) != bits, axis=1)
    return errors, nbits


def _dl_transmit(state: FrameState, cfg: SweepConfig, u: np.ndarray, gain_db: float):
    used = cfg.used_subcarriers
    p = state.p_dl[state.csi.block_of(used)]
    x = np.sqrt(_power(gain_db, cfg)) * np.einsum("smk,ks->sm", p, u)
    y = np.einsum("skm,sm->ks", state.dl_channel(), x)
    return y + complex_normal(state.rng_noise, y.shape, cfg.noise_power)


def _dl_pilot(state: FrameState, cfg: SweepConfig, alloc: PilotAllocation, gain_db: float):
    used, k = cfg.used_subcarriers, cfg.k
    owner = alloc.owner_of(used)
    u = np.zeros((k, used), dtype=np.complex128)
    u[owner, np.arange(used)] = np.sqrt(cfg.boost)
    y = _dl_transmit(state, cfg, u, gain_db)
    # each UE holds the LS estimate from its own comb subcarrier over the block
    est = CsiEstimate(g_hat=ls_estimate(y, np.full(k, np.sqrt(cfg.boost)), alloc).g_hat,
                      hold_block=k)
    idx = np.arange(k)
    state.dl_gain_est = est.g_hat[:, idx, idx].T  # (K, n_blocks)


def _dl_data(state: FrameState, cfg: SweepConfig, gain_db: float):
    used, k = cfg.used_subcarriers, cfg.k
    if state.dl_gain_est is None:
        raise ScheduleError("DL data symbol before any DL pilot")
    nbits = used * cfg.modulation.bits_per_symbol
    bits = state.rng_bits.integers(0, 2, (k, nbits))
    u = map_bits(bits, cfg.modulation)
    y = _dl_transmit(state, cfg, u, gain_db)
    h_eff = state.dl_gain_est[:, np.arange(used) // k]
    u_hat = ue_equalize_dl(y, h_eff)
    errors = np.sum(demap(u_hat, cfg.modulation) != bits, axis=1)
    return errors, nbits


_FIRST_POINT = object()


def run_tdd_frame(state: FrameState, schedule: FrameSchedule, cfg: SweepConfig,
                  ul_gain_db=_FIRST_POINT, dl_gain_db=_FIRST_POINT) -> list[SymbolOutcome]:
    """Process one frame symbol by symbol.

    UL pilots refresh the CSI estimate and the per-block detection and
    precoding matrices; UL data is transmitted, detected and demapped; DL
    pilots let each UE estimate its effective gain; DL data is precoded,
    received and equalized at the UEs; guards only let time pass. The channel
    evolves after every symbol by a Gauss-Markov step whose correlation is the
    Jakes correlation at one symbol spacing.

    ``dl_gain_db = None`` skips DL symbols (no random draws for them), which
    is what a UL sweep uses; ``ul_gain_db = None`` skips UL data and sends UL
    pilots at ``cfg.ul_pilot_gain_db``. Both default to the first grid point.
    """
    if ul_gain_db is _FIRST_POINT:
        ul_gain_db = cfg.gain_grid_db[0]
    if dl_gain_db is _FIRST_POINT:
        dl_gain_db = cfg.gain_grid_db[0]
    alloc = PilotAllocation(cfg.k)
    rho = jakes_correlation(cfg.doppler_hz, cfg.ofdm.symbol_duration_s)
    pilot_gain = cfg.ul_pilot_gain_db if ul_gain_db is None else ul_gain_db
    out = []
    for i, kind in enumerate(schedule.symbols):
        errors, nbits = None, 0
        if kind is SymbolType.UL_PILOT:
            _ul_pilot(state, cfg, alloc, pilot_gain)
        elif kind is SymbolType.UL_DATA and ul_gain_db is not None:
            if state.csi is None:
                raise ScheduleError("UL data symbol before any UL pilot")
            errors, nbits = _ul_data(state, cfg, ul_gain_db)
        elif kind is SymbolType.DL_PILOT and dl_gain_db is not None:
            if state.csi is None:
                raise ScheduleError("DL pilot before any UL pilot")
            _dl_pilot(state, cfg, alloc, dl_gain_db)
        elif kind is SymbolType.DL_DATA and dl_gain_db is not None:
            errors, nbits = _dl_data(state, cfg, dl_gain_db)
        out.append(SymbolOutcome(i, kind, errors, nbits))
        state.advance(rho)
    return out


def wilson_interval(errors: int, n: int, z: float = 1.959963984540054,
                    design_effect: float = 1.0) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    ``design_effect`` (>= 1) deflates the sample size when bits are not
    independent, e.g. when many bits share one fade or one channel estimate.
    """
    if design_effect < 1:
        raise ValueError("design_effect must be >= 1")
    n_eff = n / design_effect
    if n_eff <= 0:
        return 0.0, 1.0
    p = errors / n
    denom = 1 + z * z / n_eff
    centre = (p + z * z / (2 * n_eff)) / denom
    half = z * np.sqrt(p * (1 - p) / n_eff + z * z / (4 * n_eff * n_eff)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class BerRecord:
    gain_db: float
    per_user_ber: tuple[float, ...]
    per_user_errors: tuple[int, ...]
    bits_counted: int
    direction: str

    def interval(self, user: int, z: float = 1.959963984540054,
                 design_effect: float = 1.0) -> tuple[float, float]:
        return wilson_interval(self.per_user_errors[user], self.bits_counted, z, design_effect)


def ber_sweep(cfg: SweepConfig, schedule: FrameSchedule) -> list[BerRecord]:
    """Measure per-user BER at every gain point of ``cfg.gain_grid_db``.

    UL sweeps scale the UE transmit gain (pilots included); DL sweeps scale
    the BS transmit gain with UL pilots held at ``cfg.ul_pilot_gain_db``.
    Frame ``b`` of point ``i`` is seeded from ``(seed, i, b)``, so results do
    not depend on evaluation order.
    """
    want = SymbolType.UL_DATA if cfg.direction == "UL" else SymbolType.DL_DATA
    if schedule.count(want) == 0:
        raise ScheduleError(f"schedule carries no {cfg.direction} data")
    hw = cfg.draw_hardware()
    records = []
    for idx, gain in enumerate(cfg.gain_grid_db):
        errors = np.zeros(cfg.k, dtype=np.int64)
        bits = 0
        batch = 0
        while bits < cfg.bits_per_point:
            if batch >= cfg.max_frames:
                raise RuntimeError("max_frames reached before enough bits were counted")
            state = new_frame_state(cfg, np.random.SeedSequence([cfg.seed, idx, batch]), hw)
            if cfg.direction == "UL":
                outcomes = run_tdd_frame(state, schedule, cfg, gain, None)
            else:
                outcomes = run_tdd_frame(state, schedule, cfg, None, gain)
            for o in outcomes:
                if o.kind is want and o.errors is not None:
                    errors += o.errors
                    bits += o.bits
            batch += 1
        records.append(BerRecord(gain, tuple(float(e) / bits for e in errors),
                                 tuple(int(e) for e in errors), bits, cfg.direction))
    return records


def records_to_csv(records: list[BerRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["direction", "gain_db", "user", "ber", "bits", "errors"])
    for r in records:
        for user, (ber, err) in enumerate(zip(r.per_user_ber, r.per_user_errors)):
            w.writerow([r.direction, f"{r.gain_db:g}", user, f"{ber:.8g}", r.bits_counted, err])
    return buf.getvalue()


@dataclass(frozen=True)
class SnrEstimate:
    """Per-user SNR from two channel estimates; ``non_positive`` flags unusable users."""

    snr: np.ndarray
    non_positive: np.ndarray

    @property
    def snr_db(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.non_positive, -np.inf, 10 * np.log10(self.snr))


def snr_from_consecutive_estimates(h1, h2) -> SnrEstimate:
    """Estimate per-user SNR from two estimates of a static channel.

    The difference carries only noise (power ``‖h1 - h2‖²/2``) and the sum
    carries signal plus noise (``‖h1 + h2‖²/4``); SNR is
    ``(signal+noise - noise) / noise`` per user column. Identical estimates
    give ``inf``.
    """
    h1 = np.asarray(h1, dtype=np.complex128)
    h2 = np.asarray(h2, dtype=np.complex128)
    if h1.shape != h2.shape:
        raise ValueError("estimates must have the same shape")
    axes = tuple(range(h1.ndim - 1))
    noise = np.sum(np.abs(h1 - h2) ** 2, axis=axes) / 2
    sig_noise = np.sum(np.abs(h1 + h2) ** 2, axis=axes) / 4
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(noise > 0, (sig_noise - noise) / noise, np.inf)
    snr = np.where((noise == 0) & (sig_noise == 0), 0.0, snr)
    return SnrEstimate(snr=snr, non_positive=snr <= 0)


GIB = 2**31


@dataclass
class CsiRecorder:
    """Bounded CSI snapshot buffer (one per co-processor).

    Each snapshot stores ``blocks x m x k`` complex entries of
    ``bytes_per_entry`` bytes; the default packs two 20-bit components.
    """

    m: int
    k: int
    blocks: int
    capacity_bytes: int = GIB
    bytes_per_entry: int = 5
    timestamps_ms: list[float] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)

    @property
    def bytes_per_snapshot(self) -> int:
        return self.blocks * self.m * self.k * self.bytes_per_entry

    def bytes_for(self, n_snapshots: int) -> int:
        return n_snapshots * self.bytes_per_snapshot


@dataclass(frozen=True)
class CsiTrace:
    interval_ms: float
    timestamps_ms: np.ndarray
    bytes_required: int
    data: np.ndarray | None = None


def csi_snapshot(ring: CsiRecorder, interval_ms: float, duration_s: float,
                 source: Callable[[float], np.ndarray] | None = None) -> CsiTrace:
    """Record CSI every ``interval_ms`` for ``duration_s`` into ``ring``.

    The capacity check runs before anything is recorded. ``source(t_ms)``
    returns a ``(blocks, m, k)`` array; without a source only the timing and
    byte accounting are produced.
    """
    if interval_ms <= 0 or duration_s < 0:
        raise ValueError("interval must be positive and duration non-negative")
    n = int(np.floor(duration_s * 1e3 / interval_ms + 1e-9))
    need = ring.bytes_for(n)
    if ring.bytes_for(len(ring.snapshots)) + need > ring.capacity_bytes:
        raise BufferOverrun(f"trace needs {need} bytes, capacity is {ring.capacity_bytes}")
    times = np.arange(n) * interval_ms
    data = None
    if source is not None:
        frames = []
        for t in times:
            snap = np.asarray(source(float(t)), dtype=np.complex128)
            if snap.shape != (ring.blocks, ring.m, ring.k):
                raise ValueError(f"source returned {snap.shape}")
            frames.append(snap)
        ring.snapshots.extend(frames)
        ring.timestamps_ms.extend(times.tolist())
        data = np.stack(frames) if frames else np.zeros((0, ring.blocks, ring.m, ring.k), complex)
    return CsiTrace(interval_ms, times, need, data)


TRACE_MAGIC = b"LMMT"
TRACE_VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")


def write_trace(path: str | Path, trace: CsiTrace) -> None:
    """Write a CSI trace: header then float64 interleaved I/Q.

    Header fields (little-endian 32-bit): magic ``LMMT``, version, M, K,
    blocks, interval_ms (float32). Each snapshot follows in block-major order
    (block, then antenna, then user).
    """
    if trace.data is None:
        raise ValueError("trace has no recorded data")
    n, blocks, m, k = trace.data.shape
    flat = trace.data.reshape(-1)
    body = np.empty(2 * flat.size, dtype="<f8")
    body[0::2] = flat.real
    body[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TRACE_MAGIC, TRACE_VERSION, m, k, blocks, trace.interval_ms))
        fh.write(body.tobytes())


def read_trace(path: str | Path) -> CsiTrace:
    raw = Path(path).read_bytes()
    magic, version, m, k, blocks, interval = _HEADER.unpack_from(raw)
    if magic != TRACE_MAGIC:
        raise ValueError("not a CSI trace file")
    if version != TRACE_VERSION:
        raise ValueError(f"unsupported trace version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    per = blocks * m * k
    if body.size % (2 * per):
        raise ValueError("truncated trace body")
    data = (body[0::2] + 1j * body[1::2]).reshape(-1, blocks, m, k)
    n = data.shape[0]
    return CsiTrace(float(interval), np.arange(n) * float(interval),
                    n * per * 8 * 2, data)
