"""Complex linear-algebra kernels used by detection and precoding.

All functions take numpy arrays and accept an optional stack of leading batch
dimensions, i.e. ``a`` may be ``(M, K)`` or ``(..., M, K)``. Matrices are
handled in complex128 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, RankDeficient, SingularDiagonal

RANK_TOL = 1e-12
DIAG_TOL = 1e-14

Engine = Literal["qr", "neumann", "direct"]
ENGINES = ("qr", "neumann", "direct")


def hermitian(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim < 2:
        raise DimensionMismatch(f"expected a matrix, got shape {a.shape}")
    if a.shape[-1] == 0 or a.shape[-2] == 0:
        raise DimensionMismatch("empty matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def gram(a) -> np.ndarray:
    """Return the Gram matrix ``aᴴa`` (cols x cols, Hermitian PSD)."""
    a = _as_matrix(a)
    g = hermitian(a) @ a
    # symmetrize to kill rounding asymmetry
    return 0.5 * (g + hermitian(g))


@dataclass(frozen=True)
class QrFactors:
    q: np.ndarray
    r: np.ndarray


def qr_mgs(a) -> QrFactors:
    """Thin QR factorization by modified Gram-Schmidt.

    Columns are orthogonalized one at a time with a single pass (no
    reorthogonalization). The diagonal of ``r`` is real and non-negative.

    Raises
    ------
    RankDeficient
        If a pivot falls below ``RANK_TOL`` times its original column norm.
    """
    a = _as_matrix(a)
    m, n = a.shape[-2:]
    if m < n:
        raise DimensionMismatch(f"need rows >= cols, got {m}x{n}")
    batch = a.shape[:-2]
    q = np.zeros(batch + (m, n), dtype=np.complex128)
    r = np.zeros(batch + (n, n), dtype=np.complex128)
    for j in range(n):
        v = a[..., :, j].copy()
        col_norm = np.linalg.norm(v, axis=-1)
        for i in range(j):
            rij = np.sum(np.conj(q[..., :, i]) * v, axis=-1)
            r[..., i, j] = rij
            v -= rij[..., None] * q[..., :, i]
        rjj = np.linalg.norm(v, axis=-1)
        if np.any(rjj <= RANK_TOL * col_norm) or np.any(col_norm == 0):
            raise RankDeficient(f"pivot collapsed at column {j}")
        r[..., j, j] = rjj
        q[..., :, j] = v / rjj[..., None]
    return QrFactors(q=q, r=r)


def neumann_inverse(a, terms: int) -> np.ndarray:
    """Approximate ``a⁻¹`` by a truncated Neumann series.

    Uses the diagonal preconditioner ``X0 = D⁻¹`` (``D = diag(a)``) and
    returns ``Σ_{n<terms} (X0 (D - a))ⁿ X0``. Exact for diagonal ``a``.
    """
    a = _as_matrix(a)
    if a.shape[-1] != a.shape[-2]:
        raise DimensionMismatch("neumann_inverse needs a square matrix")
    if terms < 1:
        raise ValueError("terms must be >= 1")
    d = np.diagonal(a, axis1=-2, axis2=-1)
    if np.any(np.abs(d) < DIAG_TOL):
        raise SingularDiagonal("zero on the diagonal")
    x0 = 1.0 / d
    # E = X0 (D - A) = I - X0 A
    e = -x0[..., :, None] * a
    idx = np.arange(a.shape[-1])
    e[..., idx, idx] = 0.0
    term = np.zeros_like(a)
    term[..., idx, idx] = x0
    total = term.copy()
    for _ in range(terms - 1):
        term = e @ term
        total += term
    return total


def _check_rank(g: np.ndarray) -> None:
    s = np.linalg.svd(g, compute_uv=False)
    if np.any(s[..., -1] <= RANK_TOL * s[..., 0]):
        raise RankDeficient("channel matrix is rank deficient")


def regularized_pinv(g, beta: float = 0.0, via: Engine = "direct",
                     terms: int = 3) -> np.ndarray:
    """Regularized pseudo-inverse ``(gᴴg + βI)⁻¹ gᴴ`` of an M x K matrix.

    ``beta = 0`` gives the zero-forcing pseudo-inverse. ``via`` selects the
    engine: ``"qr"`` factors the augmented ``[g; √β I]`` matrix by MGS,
    ``"neumann"`` approximates the inverse with ``terms`` series terms and
    ``"direct"`` uses a dense LU solve.
    """
    g = _as_matrix(g)
    m, k = g.shape[-2:]
    if m < k:
        raise DimensionMismatch(f"need M >= K, got {m}x{k}")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    eye = np.eye(k)
    if via == "qr":
        if beta > 0:
            reg = np.broadcast_to(np.sqrt(beta) * eye, g.shape[:-2] + (k, k))
            aug = np.concatenate([g, reg], axis=-2)
        else:
            aug = g
        f = qr_mgs(aug)
        q1 = f.q[..., :m, :]
        # (gᴴg + βI)⁻¹gᴴ = R⁻¹ Q1ᴴ
        if f.r.ndim == 2:
            return solve_triangular(f.r, hermitian(q1))
        out = np.empty(g.shape[:-2] + (k, m), dtype=np.complex128)
        for i in np.ndindex(*g.shape[:-2]):
            out[i] = solve_triangular(f.r[i], hermitian(q1[i]))
        return out
    if via == "neumann":
        if beta == 0:
            _check_rank(g)
        return neumann_inverse(gram(g) + beta * eye, terms) @ hermitian(g)
    if via == "direct":
        if beta == 0:
            _check_rank(g)
        return np.linalg.solve(gram(g) + beta * eye, hermitian(g))
    raise ValueError(f"unknown engine {via!r}")
