"""Zadoff-Chu PSS generation and two-step time/frequency acquisition.

Acquisition runs a bank of frequency-shifted replica correlators. The coarse
step scans every offset of the frame on a copy decimated to 1.92 MS/s (the
PSS only occupies the centre ~1 MHz), the tracking step re-evaluates all
branches at the full rate in a narrow window around the coarse peak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sfft
from scipy.signal import resample_poly

from .channel import SeedLike, complex_normal
from .errors import InvalidRoot, NoPeak

LTE_SPACING_HZ = 15e3
COARSE_FFT = 128


def zadoff_chu(root: int, length: int) -> np.ndarray:
    """Odd-length Zadoff-Chu sequence ``exp(-jπ u n (n+1) / N)``."""
    if length < 1 or length % 2 == 0:
        raise InvalidRoot(f"length must be odd and positive, got {length}")
    if not 0 < root < length or math.gcd(root, length) != 1:
        raise InvalidRoot(f"root {root} is not coprime with {length}")
    n = np.arange(length)
    return np.exp(-1j * np.pi * root * n * (n + 1) / length)


@dataclass(frozen=True)
class PssConfig:
    root: int = 25
    length: int = 63
    occupied_bw_hz: float = 62 * LTE_SPACING_HZ
    cfo_grid_hz: tuple[float, ...] = field(
        default_factory=lambda: tuple(np.linspace(-7500.0, 7500.0, 19)))
    track_window: int = 32
    threshold: float = 0.3

    def __post_init__(self):
        if self.length % 2 == 0:
            raise InvalidRoot("PSS length must be odd")
        if math.gcd(self.root, self.length) != 1:
            raise InvalidRoot(f"root {self.root} is not coprime with {self.length}")
        object.__setattr__(self, "cfo_grid_hz", tuple(float(f) for f in self.cfo_grid_hz))
        if not self.cfo_grid_hz:
            raise ValueError("empty CFO grid")


@dataclass(frozen=True)
class SyncResult:
    timing_offset: int
    cfo_hz: float
    peak_metric: float


def pss_frequency(cfg: PssConfig) -> np.ndarray:
    """Frequency-domain PSS: the ZC sequence with its centre element punctured."""
    zc = zadoff_chu(cfg.root, cfg.length)
    mid = cfg.length // 2
    return np.delete(zc, mid)


def pss_waveform(cfg: PssConfig, sample_rate_hz: float) -> np.ndarray:
    """Time-domain PSS symbol (with normal cyclic prefix) at ``sample_rate_hz``."""
    nfft = int(round(sample_rate_hz / LTE_SPACING_HZ))
    if nfft < cfg.length + 1 or abs(nfft * LTE_SPACING_HZ - sample_rate_hz) > 1e-6 * sample_rate_hz:
        raise ValueError(f"sample rate {sample_rate_hz} is not a usable multiple of 15 kHz")
    d = pss_frequency(cfg)
    half = d.size // 2
    k = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
    grid = np.zeros(nfft, dtype=np.complex128)
    grid[k % nfft] = d
    t = np.fft.ifft(grid, norm="ortho")
    cp = int(round(144 * nfft / 2048))
    return np.concatenate([t[nfft - cp:], t])


def _bank(replica: np.ndarray, cfo_grid: np.ndarray, rate: float) -> np.ndarray:
    n = np.arange(replica.size)
    return replica[None, :] * np.exp(2j * np.pi * cfo_grid[:, None] * n[None, :] / rate)


def _best(metric: np.ndarray, cfo_grid: np.ndarray, offsets: np.ndarray) -> tuple[int, int]:
    """Argmax over (offset, branch); ties go to lower |cfo|, then lower offset."""
    top = metric.max()
    rows, cols = np.nonzero(metric == top)
    order = np.lexsort((cfo_grid[cols], offsets[rows], np.abs(cfo_grid[cols])))
    return rows[order[0]], cols[order[0]]


def _normalized(corr: np.ndarray, window_energy: np.ndarray, replica_energy: float) -> np.ndarray:
    denom = np.broadcast_to(window_energy * replica_energy, corr.shape)
    out = np.zeros(corr.shape, dtype=float)
    # windows that are numerically empty (zero padding, filter leakage) score zero
    ok = denom > max(1e-300, 1e-12 * float(denom.max(initial=0.0)))
    out[ok] = np.abs(corr[ok]) ** 2 / denom[ok]
    return np.minimum(out, 1.0)


def _coarse(x: np.ndarray, replica: np.ndarray, cfo_grid: np.ndarray, rate: float) -> int:
    L = replica.size
    n_off = x.size - L + 1
    bank = _bank(replica, cfo_grid, rate)
    nfft = sfft.next_fast_len(x.size + L - 1)
    X = sfft.fft(x, nfft)
    C = sfft.fft(np.conj(bank[:, ::-1]), nfft, axis=-1)
    corr = sfft.ifft(X[None, :] * C, axis=-1)[:, L - 1:L - 1 + n_off]
    csum = np.concatenate([[0.0], np.cumsum(np.abs(x) ** 2)])
    energy = csum[L:] - csum[:-L]
    metric = _normalized(corr.T, energy[:n_off, None], float(np.sum(np.abs(replica) ** 2)))
    row, _ = _best(metric, cfo_grid, np.arange(n_off))
    return int(row)


def acquire(signal, cfg: PssConfig, sample_rate_hz: float) -> SyncResult:
    """Locate the PSS in ``signal`` and pick the best CFO branch.

    Returns the sample index where the PSS symbol (including its cyclic
    prefix) starts, the CFO grid value of the winning branch, and the
    normalized correlation ``|Σ r c*|² / (‖r‖² ‖c‖²)`` at the peak.

    Raises
    ------
    NoPeak
        If the best normalized correlation is below ``cfg.threshold``.
    """
    x = np.asarray(signal, dtype=np.complex128).ravel()
    replica = pss_waveform(cfg, sample_rate_hz)
    L = replica.size
    if x.size < L:
        raise ValueError("signal shorter than one PSS symbol")
    grid = np.asarray(cfg.cfo_grid_hz)

    nfft = int(round(sample_rate_hz / LTE_SPACING_HZ))
    dec = nfft // COARSE_FFT if nfft % COARSE_FFT == 0 and nfft > COARSE_FFT else 1
    if dec > 1:
        coarse_rate = sample_rate_hz / dec
        xd = resample_poly(x, 1, dec)
        coarse = _coarse(xd, pss_waveform(cfg, coarse_rate), grid, coarse_rate) * dec
    else:
        coarse = _coarse(x, replica, grid, sample_rate_hz)

    lo = max(0, coarse - cfg.track_window)
    hi = min(x.size - L, coarse + cfg.track_window)
    offsets = np.arange(lo, hi + 1)
    windows = sliding_window_view(x, L)[lo:hi + 1]
    bank = _bank(replica, grid, sample_rate_hz)
    corr = windows @ np.conj(bank).T
    energy = np.sum(np.abs(windows) ** 2, axis=-1)
    metric = _normalized(corr, energy[:, None], float(np.sum(np.abs(replica) ** 2)))
    row, col = _best(metric, grid, offsets)
    best = float(metric[row, col])
    if best < cfg.threshold:
        raise NoPeak(f"best normalized correlation {best:.3f} < {cfg.threshold}")
    return SyncResult(int(offsets[row]), float(grid[col]), best)


def embed_pss(n_samples: int, offset: int, cfg: PssConfig, sample_rate_hz: float,
              cfo_hz: float = 0.0, snr_db: float | None = None,
              seed: SeedLike = None) -> np.ndarray:
    """Build a test stream: one PSS at ``offset`` with CFO, plus optional AWGN.

    ``snr_db`` is the PSS sample power over the noise power per sample at
    ``sample_rate_hz``; ``None`` means noiseless.
    """
    pss = pss_waveform(cfg, sample_rate_hz)
    if offset < 0 or offset + pss.size > n_samples:
        raise ValueError("PSS does not fit in the stream")
    x = np.zeros(n_samples, dtype=np.complex128)
    x[offset:offset + pss.size] = pss
    n = np.arange(n_samples)
    x *= np.exp(2j * np.pi * cfo_hz * n / sample_rate_hz)
    if snr_db is not None:
        power = np.mean(np.abs(pss) ** 2)
        rng = np.random.default_rng(seed)
        x += complex_normal(rng, n_samples, power / 10 ** (snr_db / 10))
    return x


def read_iq(path: str | Path) -> np.ndarray:
    """Read interleaved little-endian float64 I/Q samples."""
    raw = np.fromfile(path, dtype="<f8")
    if raw.size % 2:
        raise ValueError(f"{path}: odd number of float64 values")
    return raw[0::2] + 1j * raw[1::2]


def write_iq(path: str | Path, samples) -> None:
    s = np.asarray(samples, dtype=np.complex128)
    out = np.empty(2 * s.size, dtype="<f8")
    out[0::2] = s.real
    out[1::2] = s.imag
    out.tofile(path)
