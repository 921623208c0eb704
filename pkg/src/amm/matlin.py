"""Dense Hermitian linear algebra helpers.

Everything here operates on plain ``numpy`` arrays; complex matrices are
``complex128`` and Hermitian inputs are assumed (not enforced) unless a
function says otherwise.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "LinAlgError",
    "kron",
    "partial_trace",
    "eig_hermitian",
    "pinv_sqrt",
    "is_psd",
    "hermitian_part",
    "dagger",
    "ket",
    "proj",
]


class LinAlgError(ValueError):
    """Raised on shape mismatches or inputs outside an operation's domain."""


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dagger(m))


def ket(v) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape(-1)


def proj(v) -> np.ndarray:
    """Rank-one operator |v><v| (no normalisation)."""
    v = ket(v)
    return np.outer(v, v.conj())


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, ``(a (x) b)[i*p + k, j*q + l] = a[i, j] * b[k, l]``."""
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    return np.kron(a, b)


def partial_trace(m: np.ndarray, dims: tuple[int, int], subsystem: str | int = "first") -> np.ndarray:
    """Trace out one factor of a bipartite operator.

    Parameters
    ----------
    m : (dA*dB, dA*dB) array
    dims : (dA, dB)
    subsystem : ``"first"``/0 traces out A, ``"second"``/1 traces out B.
    """
    m = np.asarray(m)
    d_a, d_b = (int(d) for d in dims)
    if m.shape != (d_a * d_b, d_a * d_b):
        raise LinAlgError(f"matrix of shape {m.shape} does not match dims {dims}")
    t = m.reshape(d_a, d_b, d_a, d_b)
    if subsystem in ("first", 0, "A"):
        return np.einsum("ijik->jk", t)
    if subsystem in ("second", 1, "B"):
        return np.einsum("ijkj->ik", t)
    raise LinAlgError(f"unknown subsystem {subsystem!r}")


def eig_hermitian(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix.

    LAPACK's divide-and-conquer driver (``numpy.linalg.eigh``) does the work;
    non-convergence surfaces as :class:`LinAlgError`.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise LinAlgError(f"expected a square matrix, got shape {m.shape}")
    try:
        w, v = np.linalg.eigh(hermitian_part(m))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise LinAlgError(str(exc)) from exc
    return w, v


def pinv_sqrt(m: np.ndarray, rank_tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Pseudo-inverse square root and the projector onto the range.

    Eigenvalues above ``rank_tol`` are inverted; the default threshold is
    ``1e-9 * max eigenvalue``. Eigenvalues below ``-rank_tol`` mean the input
    is not PSD and raise :class:`LinAlgError`.
    """
    w, v = eig_hermitian(m)
    scale = max(float(np.max(np.abs(w))), 0.0) if w.size else 0.0
    tol = 1e-9 * scale if rank_tol is None else float(rank_tol)
    if w.size and w[0] < -max(tol, 1e-14):
        raise LinAlgError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    keep = w > tol
    vk = v[:, keep]
    root = (vk * (1.0 / np.sqrt(w[keep]))) @ dagger(vk)
    return root, vk @ dagger(vk)


def is_psd(m: np.ndarray, tol: float = 1e-9) -> bool:
    w = np.linalg.eigvalsh(hermitian_part(np.asarray(m)))
    return bool(w.size == 0 or w[0] >= -tol)
