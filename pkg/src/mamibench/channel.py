"""Propagation and transceiver hardware models.

The propagation matrix ``B`` is stored in down-link orientation (K x M, users
by base-station antennas) so that the up-link channel is
``G = R_B Bᵀ T_U`` (M x K) and the down-link channel is ``H = R_U B T_B``
(K x M). One stored matrix serves both directions, so propagation is
reciprocal by construction; only the hardware diagonals break reciprocity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

from .errors import DimensionMismatch, SingularDiagonal

SeedLike = int | np.random.Generator | np.random.SeedSequence | None


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Draw i.i.d. CN(0, variance) samples."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_rayleigh(m: int, k: int, seed: SeedLike = None, batch: tuple[int, ...] = ()) -> np.ndarray:
    """i.i.d. unit-variance Rayleigh matrix of shape ``batch + (m, k)``."""
    if m < 1 or k < 1:
        raise ValueError("m and k must be >= 1")
    rng = np.random.default_rng(seed)
    return complex_normal(rng, tuple(batch) + (m, k))


@dataclass(frozen=True)
class DiagonalTransfer:
    """Complex diagonal of a transceiver response (or the calibration matrix)."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.complex128).ravel()
        if np.any(e == 0):
            raise SingularDiagonal("diagonal transfer has a zero entry")
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return self.entries.size

    @classmethod
    def identity(cls, n: int) -> DiagonalTransfer:
        return cls(np.ones(n, dtype=np.complex128))

    def matrix(self) -> np.ndarray:
        return np.diag(self.entries)


@dataclass(frozen=True)
class HardwareFront:
    r_bs: DiagonalTransfer
    t_bs: DiagonalTransfer
    r_ue: DiagonalTransfer
    t_ue: DiagonalTransfer

    def __post_init__(self):
        if len(self.r_bs) != len(self.t_bs) or len(self.r_ue) != len(self.t_ue):
            raise DimensionMismatch("RX/TX diagonals must have equal lengths per side")

    @property
    def m(self) -> int:
        return len(self.r_bs)

    @property
    def k(self) -> int:
        return len(self.r_ue)

    @classmethod
    def ideal(cls, m: int, k: int) -> HardwareFront:
        return cls(DiagonalTransfer.identity(m), DiagonalTransfer.identity(m),
                   DiagonalTransfer.identity(k), DiagonalTransfer.identity(k))

    @classmethod
    def random(cls, m: int, k: int, seed: SeedLike = None,
               mag_std_db: float = 1.0) -> HardwareFront:
        """Uniform random phases with log-normal magnitudes (``mag_std_db`` spread)."""
        rng = np.random.default_rng(seed)

        def diag(n):
            mag = 10 ** (rng.normal(0.0, mag_std_db, n) / 20)
            return DiagonalTransfer(mag * np.exp(2j * np.pi * rng.random(n)))

        return cls(diag(m), diag(m), diag(k), diag(k))


@dataclass(frozen=True)
class PropagationChannel:
    """Reciprocal propagation matrix ``b`` (K x M, or stacked ``(..., K, M)``)."""

    b: np.ndarray
    subcarrier_index: int = 0

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.complex128)
        if b.ndim < 2:
            raise DimensionMismatch("b must be at least 2-D")
        if not np.all(np.isfinite(b)):
            raise ValueError("b has non-finite entries")
        object.__setattr__(self, "b", b)

    @property
    def k(self) -> int:
        return self.b.shape[-2]

    @property
    def m(self) -> int:
        return self.b.shape[-1]


def _check_dims(prop: PropagationChannel, hw: HardwareFront) -> None:
    if prop.m != hw.m or prop.k != hw.k:
        raise DimensionMismatch(
            f"propagation is {prop.k}x{prop.m} (KxM) but hardware is M={hw.m}, K={hw.k}")


def compose_ul(prop: PropagationChannel, hw: HardwareFront) -> np.ndarray:
    """Up-link radio channel ``G = R_B Bᵀ T_U`` (M x K)."""
    _check_dims(prop, hw)
    bt = np.swapaxes(prop.b, -1, -2)
    return hw.r_bs.entries[:, None] * bt * hw.t_ue.entries[None, :]


def compose_dl(prop: PropagationChannel, hw: HardwareFront) -> np.ndarray:
    """Down-link radio channel ``H = R_U B T_B`` (K x M)."""
    _check_dims(prop, hw)
    return hw.r_ue.entries[:, None] * prop.b * hw.t_bs.entries[None, :]


def awgn(signal, noise_power: float, seed: SeedLike = None) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise of the given power."""
    if noise_power < 0:
        raise ValueError("noise_power must be >= 0")
    x = np.asarray(signal, dtype=np.complex128)
    if noise_power == 0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return x + complex_normal(rng, x.shape, noise_power)


def jakes_correlation(doppler_hz: float, dt_s: float) -> float:
    """Temporal channel correlation ``J0(2π ν Δt)`` under Jakes' isotropic model."""
    if doppler_hz < 0 or dt_s < 0:
        raise ValueError("doppler and time lag must be non-negative")
    return float(j0(2 * np.pi * doppler_hz * dt_s))


def evolve_channel(g_prev, rho: float, seed: SeedLike = None) -> np.ndarray:
    """One Gauss-Markov step ``ρ g + √(1-ρ²) w`` with ``w`` i.i.d. CN(0, 1)."""
    if abs(rho) > 1:
        raise ValueError("|rho| must be <= 1")
    g_prev = np.asarray(g_prev, dtype=np.complex128)
    if rho == 1:
        return g_prev.copy()
    rng = np.random.default_rng(seed)
    return rho * g_prev + np.sqrt(1 - rho**2) * complex_normal(rng, g_prev.shape)
