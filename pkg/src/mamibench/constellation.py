"""Gray-mapped square QAM with unit average energy."""

from __future__ import annotations

import enum

import numpy as np


class Modulation(enum.Enum):
    QPSK = 2
    QAM16 = 4
    QAM64 = 6

    @property
    def bits_per_symbol(self) -> int:
        return self.value

    @classmethod
    def parse(cls, name: str) -> Modulation:
        key = name.strip().upper().replace("-", "")
        aliases = {"QPSK": cls.QPSK, "4QAM": cls.QPSK, "QAM4": cls.QPSK,
                   "QAM16": cls.QAM16, "16QAM": cls.QAM16,
                   "QAM64": cls.QAM64, "64QAM": cls.QAM64}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown modulation {name!r}") from None


def _pam_levels(bits_per_dim: int) -> tuple[np.ndarray, float]:
    n = 2**bits_per_dim
    levels = np.arange(-(n - 1), n, 2, dtype=float)
    # average energy of the 2-D square constellation
    scale = np.sqrt(2 * np.mean(levels**2))
    return levels, scale


def _gray_to_index(bits: np.ndarray) -> np.ndarray:
    """Bits (..., b) in Gray order -> natural PAM index."""
    b = bits.shape[-1]
    binary = bits.copy()
    for i in range(1, b):
        binary[..., i] ^= binary[..., i - 1]
    weights = 1 << np.arange(b - 1, -1, -1)
    return binary @ weights


def _index_to_gray(index: np.ndarray, b: int) -> np.ndarray:
    gray = index ^ (index >> 1)
    shifts = np.arange(b - 1, -1, -1)
    return (gray[..., None] >> shifts) & 1


def map_bits(bits, mod: Modulation) -> np.ndarray:
    """Map a bit array (..., n·b) to symbols (..., n)."""
    bits = np.asarray(bits, dtype=np.int64)
    b = mod.bits_per_symbol
    half = b // 2
    if bits.shape[-1] % b:
        raise ValueError(f"bit count not a multiple of {b}")
    groups = bits.reshape(bits.shape[:-1] + (-1, b))
    levels, scale = _pam_levels(half)
    i = levels[_gray_to_index(groups[..., :half])]
    q = levels[_gray_to_index(groups[..., half:])]
    return (i + 1j * q) / scale


def demap(symbols, mod: Modulation) -> np.ndarray:
    """Hard-decision demapping back to bits (..., n·b)."""
    s = np.asarray(symbols, dtype=np.complex128)
    b = mod.bits_per_symbol
    half = b // 2
    levels, scale = _pam_levels(half)
    n = levels.size

    def nearest(x):
        x = np.nan_to_num(x, nan=0.0, posinf=1e9, neginf=-1e9)
        idx = np.rint(np.clip((x * scale + (n - 1)) / 2, -1, n)).astype(np.int64)
        return np.clip(idx, 0, n - 1)

    bi = _index_to_gray(nearest(s.real), half)
    bq = _index_to_gray(nearest(s.imag), half)
    out = np.concatenate([bi, bq], axis=-1)
    return out.reshape(s.shape[:-1] + (-1,))
