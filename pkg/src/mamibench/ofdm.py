"""OFDM numerology, modulation, TDD frame schedules and pilot combs."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect
from scipy.special import j0, jn_zeros

from .errors import LengthMismatch, NoRoot, ScheduleError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class OfdmParams:
    fft_size: int = 2048
    used_subcarriers: int = 1200
    cp_len: int = 144
    sample_rate_hz: float = 30.72e6

    def __post_init__(self):
        if self.used_subcarriers > self.fft_size - 1:
            raise ValueError("used subcarriers must leave room for the DC null")
        if not 0 <= self.cp_len < self.fft_size:
            raise ValueError("cp_len must be in [0, fft_size)")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def symbol_duration_s(self) -> float:
        return self.symbol_len / self.sample_rate_hz

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.sample_rate_hz / self.fft_size


def used_bins(p: OfdmParams) -> np.ndarray:
    """FFT bin index of each used subcarrier.

    Used subcarrier ``i`` maps to signed frequency ``i - n/2`` for the lower
    half and ``i - n/2 + 1`` for the upper half, so DC stays empty.
    """
    n = p.used_subcarriers
    lower = n // 2
    signed = np.concatenate([np.arange(-lower, 0), np.arange(1, n - lower + 1)])
    return signed % p.fft_size


def signed_frequencies(p: OfdmParams) -> np.ndarray:
    n = p.used_subcarriers
    lower = n // 2
    return np.concatenate([np.arange(-lower, 0), np.arange(1, n - lower + 1)])


def ofdm_modulate(freq_symbols, p: OfdmParams) -> np.ndarray:
    """Map used subcarriers, take a unitary IFFT and prepend the cyclic prefix."""
    x = np.asarray(freq_symbols, dtype=np.complex128)
    if x.shape[-1] != p.used_subcarriers:
        raise LengthMismatch(f"expected {p.used_subcarriers} symbols, got {x.shape[-1]}")
    grid = np.zeros(x.shape[:-1] + (p.fft_size,), dtype=np.complex128)
    grid[..., used_bins(p)] = x
    t = np.fft.ifft(grid, norm="ortho")
    return np.concatenate([t[..., p.fft_size - p.cp_len:], t], axis=-1)


def ofdm_demodulate(time_samples, p: OfdmParams) -> np.ndarray:
    """Strip the cyclic prefix, unitary FFT, and extract the used subcarriers."""
    y = np.asarray(time_samples, dtype=np.complex128)
    if y.shape[-1] != p.symbol_len:
        raise LengthMismatch(f"expected {p.symbol_len} samples, got {y.shape[-1]}")
    f = np.fft.fft(y[..., p.cp_len:], norm="ortho")
    return f[..., used_bins(p)]


class SymbolType(enum.Enum):
    UL_PILOT = "P"
    UL_DATA = "U"
    DL_PILOT = "p"
    DL_DATA = "D"
    GUARD = "G"

    @property
    def direction(self) -> str | None:
        if self in (SymbolType.UL_PILOT, SymbolType.UL_DATA):
            return "UL"
        if self in (SymbolType.DL_PILOT, SymbolType.DL_DATA):
            return "DL"
        return None


@dataclass(frozen=True)
class FrameSchedule:
    """Ordered OFDM symbol types making up one TDD frame."""

    symbols: tuple[SymbolType, ...]
    slot_len: int
    slots_per_subframe: int = 1
    subframes: int = 1

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(SymbolType(s) for s in self.symbols))
        expected = self.slot_len * self.slots_per_subframe * self.subframes
        if len(self.symbols) != expected or expected == 0:
            raise ScheduleError(
                f"{len(self.symbols)} symbols but layout implies {expected}")

    def __len__(self) -> int:
        return len(self.symbols)

    @classmethod
    def from_string(cls, text: str, slot_len: int | None = None,
                    slots_per_subframe: int = 1, strict: bool = True) -> FrameSchedule:
        """Parse a one-letter-per-symbol schedule (``P U p D G``; whitespace ignored)."""
        letters = "".join(text.split())
        try:
            symbols = tuple(SymbolType(c) for c in letters)
        except ValueError as exc:
            raise ScheduleError(f"bad schedule letter in {text!r}") from exc
        if not symbols:
            raise ScheduleError("empty schedule")
        if slot_len is None:
            slot_len = len(symbols)
        per_subframe = slot_len * slots_per_subframe
        if len(symbols) % per_subframe:
            raise ScheduleError("schedule length is not a whole number of subframes")
        sched = cls(symbols, slot_len, slots_per_subframe, len(symbols) // per_subframe)
        if strict:
            problems = sched.violations()
            if problems:
                raise ScheduleError("; ".join(problems))
        return sched

    def to_string(self) -> str:
        return "".join(s.value for s in self.symbols)

    def count(self, kind: SymbolType) -> int:
        return sum(1 for s in self.symbols if s is kind)

    def violations(self) -> list[str]:
        """Framing rule violations (empty when the schedule is valid).

        Rules: every DL data symbol has a UL pilot earlier in the frame, and
        every change of link direction (cyclically, since frames repeat) has a
        guard symbol in between.
        """
        problems = []
        seen_pilot = False
        for i, s in enumerate(self.symbols):
            if s is SymbolType.UL_PILOT:
                seen_pilot = True
            if s in (SymbolType.DL_DATA, SymbolType.DL_PILOT) and not seen_pilot:
                problems.append(f"DL symbol {i} has no preceding UL pilot")
                break
        n = len(self.symbols)
        dirs = [s.direction for s in self.symbols]
        for i in range(n):
            a, b = dirs[i], dirs[(i + 1) % n]
            if a and b and a != b and n > 1:
                problems.append(f"direction change at symbol {i} without a guard")
        return problems

    def pilot_gaps(self) -> list[int]:
        """Number of symbols separating consecutive UL pilots (cyclic)."""
        idx = [i for i, s in enumerate(self.symbols) if s is SymbolType.UL_PILOT]
        if len(idx) < 2:
            return []
        n = len(self.symbols)
        return [((idx[(j + 1) % len(idx)] - idx[j]) % n) - 1 for j in range(len(idx))]


DEFAULT_SLOT = "PUUGDDG"
FIRST_DATA_SLOT = "PUUGpDG"


def default_frame() -> FrameSchedule:
    """The default 140-symbol TDD frame.

    Subframe 0 carries control/synchronization and is modelled as guard
    symbols. Subframe 1 carries one DL pilot and one DL data symbol per slot;
    subframes 2-9 carry two DL data symbols per slot. Consecutive UL pilots
    are separated by six symbols.
    """
    control = "G" * 14
    text = control + FIRST_DATA_SLOT * 2 + DEFAULT_SLOT * 16
    return FrameSchedule.from_string(text, slot_len=7, slots_per_subframe=2)


@dataclass(frozen=True)
class PilotAllocation:
    num_users: int
    offsets: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.num_users < 1:
            raise ValueError("need at least one user")
        offsets = tuple(self.offsets) or tuple(range(self.num_users))
        if sorted(offsets) != list(range(self.num_users)):
            raise ValueError("comb offsets must be a permutation of 0..K-1")
        object.__setattr__(self, "offsets", offsets)

    def owner_of(self, used: int) -> np.ndarray:
        """User index owning each of ``used`` subcarriers."""
        inverse = np.empty(self.num_users, dtype=int)
        inverse[list(self.offsets)] = np.arange(self.num_users)
        return inverse[np.arange(used) % self.num_users]


def pilot_grid(alloc: PilotAllocation, used: int) -> list[np.ndarray]:
    """Subcarrier indices of each user's pilot comb (every K-th subcarrier)."""
    k = alloc.num_users
    return [np.arange(off, used, k) for off in alloc.offsets]


def mobility_limit(tp_s: float, corr_threshold: float = 0.9,
                   fc_hz: float = 3.7e9) -> tuple[float, float]:
    """Largest Doppler (Hz) and UE speed (m/s) keeping pilot correlation above a threshold.

    Solves ``J0(2π ν tp) = corr_threshold`` on J0's first decreasing branch.
    """
    if tp_s <= 0:
        raise ValueError("pilot spacing must be positive")
    if not 0 < corr_threshold < 1:
        raise NoRoot(f"threshold {corr_threshold} outside (0, 1)")
    hi = jn_zeros(0, 1)[0] / (2 * np.pi * tp_s)
    nu = bisect(lambda v: j0(2 * np.pi * v * tp_s) - corr_threshold, 0.0, hi,
                xtol=1e-12, rtol=1e-10)
    return float(nu), float(SPEED_OF_LIGHT * nu / fc_hz)
