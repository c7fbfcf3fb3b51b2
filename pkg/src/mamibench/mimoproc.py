"""Linear detection/precoding matrices, LS channel estimation and calibration.

Every matrix function accepts a single channel ``(M, K)`` or a stack
``(..., M, K)``; per-subcarrier-block processing is simply a stacked call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .channel import DiagonalTransfer, HardwareFront
from .errors import DimensionMismatch, LengthMismatch, SingularDiagonal, ZeroPilot
from .matrixkit import ENGINES, Engine, hermitian, regularized_pinv
from .ofdm import PilotAllocation, pilot_grid

DetectScheme = Literal["mrc", "zf", "rzf"]
PrecodeScheme = Literal["mrt", "zf", "rzf"]


def default_beta(k: int, snr_db: float | None = None) -> float:
    """MMSE-motivated regularization ``K / SNR``; zero when no SNR hint is given."""
    if snr_db is None:
        return 0.0
    return k / 10 ** (snr_db / 10)


@dataclass(frozen=True)
class Detector:
    scheme: DetectScheme = "zf"
    beta_dec: float = 0.0
    engine: Engine = "direct"
    neumann_terms: int = 3

    def __post_init__(self):
        object.__setattr__(self, "scheme", self.scheme.lower())
        object.__setattr__(self, "engine", self.engine.lower())
        if self.scheme not in ("mrc", "zf", "rzf"):
            raise ValueError(f"unknown detector {self.scheme!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.beta_dec < 0:
            raise ValueError("beta_dec must be >= 0")


@dataclass(frozen=True)
class Precoder:
    scheme: PrecodeScheme = "zf"
    beta_pre: float = 0.0
    calibration: DiagonalTransfer | None = None
    engine: Engine = "direct"
    neumann_terms: int = 3

    def __post_init__(self):
        object.__setattr__(self, "scheme", self.scheme.lower())
        object.__setattr__(self, "engine", self.engine.lower())
        if self.scheme not in ("mrt", "zf", "rzf"):
            raise ValueError(f"unknown precoder {self.scheme!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.beta_pre < 0:
            raise ValueError("beta_pre must be >= 0")


def _check_tall(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.complex128)
    if g.ndim < 2 or g.shape[-2] < g.shape[-1]:
        raise DimensionMismatch(f"expected an M x K channel with M >= K, got {g.shape}")
    return g


def detect_matrix(g, d: Detector) -> np.ndarray:
    """K x M up-link weighting matrix: ``Gᴴ``, ``(GᴴG)⁻¹Gᴴ`` or ``(GᴴG + βI)⁻¹Gᴴ``."""
    g = _check_tall(g)
    if d.scheme == "mrc":
        return hermitian(g)
    beta = d.beta_dec if d.scheme == "rzf" else 0.0
    return regularized_pinv(g, beta, d.engine, d.neumann_terms)


def precode_matrix(g, p: Precoder) -> np.ndarray:
    """M x K down-link precoder built from the up-link channel estimate.

    MRT is ``C G*``, ZF is ``C G* (GᴴG)⁻ᵀ`` and RZF adds ``β I`` inside the
    inverse. The result is scaled so that ``‖P‖_F² = K`` per matrix.
    """
    g = _check_tall(g)
    m, k = g.shape[-2:]
    if p.scheme == "mrt":
        w = np.conj(g)
    else:
        beta = p.beta_pre if p.scheme == "rzf" else 0.0
        # G* (GᴴG + βI)⁻ᵀ is the transpose of the regularized pseudo-inverse
        w = np.swapaxes(regularized_pinv(g, beta, p.engine, p.neumann_terms), -1, -2)
    if p.calibration is not None:
        c = p.calibration.entries
        if c.size != m:
            raise DimensionMismatch(f"calibration has {c.size} entries, need {m}")
        w = c[:, None] * w
    norm = np.sqrt(np.sum(np.abs(w) ** 2, axis=(-2, -1), keepdims=True))
    return w * (np.sqrt(k) / norm)


def calibration_matrix(hw: HardwareFront) -> DiagonalTransfer:
    """Reciprocity calibration diagonal ``C = R_B T_B⁻¹``."""
    t = hw.t_bs.entries
    if np.any(np.abs(t) < 1e-14):
        raise SingularDiagonal("BS transmit response is not invertible")
    return DiagonalTransfer(hw.r_bs.entries / t)


@dataclass(frozen=True)
class CsiEstimate:
    """Up-link channel estimate held constant over blocks of ``hold_block`` subcarriers.

    ``g_hat`` has shape ``(n_blocks, M, K)``.
    """

    g_hat: np.ndarray
    hold_block: int

    @property
    def n_blocks(self) -> int:
        return self.g_hat.shape[0]

    def block_of(self, used: int) -> np.ndarray:
        return np.arange(used) // self.hold_block

    def per_subcarrier(self, used: int) -> np.ndarray:
        return self.g_hat[self.block_of(used)]


def ls_estimate(rx_pilot_subcarriers, tx_pilots, alloc: PilotAllocation) -> CsiEstimate:
    """Least-squares CSI from a comb UL pilot symbol with zeroth-order hold.

    Parameters
    ----------
    rx_pilot_subcarriers : (M, used) array
        Received pilot OFDM symbol after demodulation.
    tx_pilots : (K,) or (used,) array
        Known pilot values, either one per user or one per subcarrier
        (read as per-user when ``used == K``).
    alloc : PilotAllocation
        Comb assignment; user ``k`` owns subcarriers ``offset_k + jK``.

    Each block of K adjacent subcarriers holds one pilot per user, and that
    user's estimate is reused for the whole block. A trailing partial block
    reuses the previous block's estimate for users whose pilot falls outside.
    """
    rx = np.asarray(rx_pilot_subcarriers, dtype=np.complex128)
    if rx.ndim != 2:
        raise DimensionMismatch("rx must be M x used")
    m, used = rx.shape
    k = alloc.num_users
    tx = np.asarray(tx_pilots, dtype=np.complex128).ravel()
    if tx.size not in (k, used):
        raise LengthMismatch(f"tx_pilots must have {k} or {used} entries, got {tx.size}")
    if np.any(tx == 0):
        raise ZeroPilot("pilot value is zero")
    n_blocks = -(-used // k)
    g_hat = np.full((n_blocks, m, k), np.nan + 0j)
    for user, comb in enumerate(pilot_grid(alloc, used)):
        p = tx[user] if tx.size == k else tx[comb]
        g_hat[comb // k, :, user] = (rx[:, comb] / p).T
    for b in range(1, n_blocks):
        gap = np.isnan(g_hat[b, 0, :])
        g_hat[b, :, gap] = g_hat[b - 1, :, gap]
    if np.isnan(g_hat).any():
        raise LengthMismatch("some user has no pilot subcarrier")
    return CsiEstimate(g_hat=g_hat, hold_block=k)


def equalize(w, r) -> np.ndarray:
    """Linear filtering ``ẑ = w r`` (stacked on leading dimensions)."""
    w = np.asarray(w, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    if w.shape[-1] != r.shape[-1]:
        raise DimensionMismatch(f"w is {w.shape}, r has length {r.shape[-1]}")
    return np.einsum("...km,...m->...k", w, r)


def ue_equalize_dl(rx, dl_pilot_est) -> np.ndarray:
    """Single-tap ZF at the UE: divide by the LS-estimated effective DL gain."""
    rx = np.asarray(rx, dtype=np.complex128)
    h = np.asarray(dl_pilot_est, dtype=np.complex128)
    if np.any(h == 0):
        raise ZeroPilot("effective DL channel estimate is zero")
    return rx / h
