"""Dense real-symmetric linear algebra shared by the physics modules.

Everything here works on plain ``numpy`` arrays. Hamiltonians are real
symmetric, so a single LAPACK ``syevd`` call gives the full spectrum that the
eigenbasis QFI formulas need.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

# 2**15 dense float64 is 8 GiB; nothing at desk scale needs more.
MAX_DENSE_DIM = 2**15


class EigensolverError(RuntimeError):
    """LAPACK failed to converge on a finite input."""


def as_symmetric(a, *, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite, exactly symmetric real square matrix."""
    m = np.asarray(a)
    if np.iscomplexobj(m):
        if np.any(m.imag != 0):
            raise ValueError(f"{name} must be real")
        m = m.real
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    if not np.array_equal(m, m.T):
        raise ValueError(f"{name} is not exactly symmetric")
    return m


def symmetrize(a) -> np.ndarray:
    """Return ``(a + a.T) / 2``, which is symmetric bit-for-bit."""
    m = np.asarray(a, dtype=float)
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues in ascending order and orthonormal eigenvectors as columns.

    ``eigenvectors[:, mu]`` holds the expansion coefficients of the
    interacting eigenstate ``mu`` in the basis the matrix was written in.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def spectral_width(self) -> float:
        return float(self.eigenvalues[-1] - self.eigenvalues[0])

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T

    def to_eigenbasis_vector(self, psi) -> np.ndarray:
        """Amplitudes ``a_mu = <psi_mu|psi>`` of a state given in the original basis."""
        return self.eigenvectors.T @ np.asarray(psi)

    def from_eigenbasis_vector(self, amplitudes) -> np.ndarray:
        return self.eigenvectors @ np.asarray(amplitudes)


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each one's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigh(h) -> EigenSystem:
    """Full eigendecomposition of a real symmetric matrix.

    Eigenvector signs are fixed by :func:`fix_signs`, so repeated calls on the
    same nondegenerate matrix give identical output. Inside a degenerate block
    any orthonormal basis is returned.
    """
    m = as_symmetric(h, name="H")
    try:
        w, v = scipy.linalg.eigh(m, driver="evd", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise EigensolverError(
            f"eigh failed for dim={m.shape[0]}, max|H|={np.max(np.abs(m)):.3e}, "
            f"trace={np.trace(m):.6e}: {exc}"
        ) from exc
    return EigenSystem(eigenvalues=w, eigenvectors=fix_signs(v))


def kron(a, b) -> np.ndarray:
    """Kronecker product with a dense-size guard.

    ``out[i*db + k, j*db + l] == a[i, j] * b[k, l]``.
    """
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    if a.ndim != 2 or b.ndim != 2 or 0 in a.shape or 0 in b.shape:
        raise ValueError("kron needs two non-empty 2-d arrays")
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if max(rows, cols) > MAX_DENSE_DIM:
        raise ValueError(
            f"kron output {rows}x{cols} exceeds the dense limit {MAX_DENSE_DIM}"
        )
    return np.kron(a, b)


def to_eigenbasis(m, es: EigenSystem) -> np.ndarray:
    """Matrix elements ``<psi_mu|M|psi_nu>`` in the interacting eigenbasis (V^T M V)."""
    m = np.asarray(m)
    if m.shape != (es.dim, es.dim):
        raise ValueError(f"operator shape {m.shape} does not match eigensystem dim {es.dim}")
    v = es.eigenvectors
    d = np.diagonal(m)
    if not np.iscomplexobj(m) and np.count_nonzero(m) == np.count_nonzero(d):
        # diagonal operator: one matrix product instead of two
        out = (v * d[:, None]).T @ v
    else:
        out = v.T @ m @ v
    if not np.iscomplexobj(out) and np.array_equal(m, m.T):
        out = symmetrize(out)
    return out


def normalized(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / nrm


def check_normalized(amplitudes, atol: float = 1e-10) -> None:
    nrm = np.linalg.norm(amplitudes)
    if abs(nrm - 1.0) > atol:
        raise ValueError(f"state norm {nrm:.15f} deviates from 1 by more than {atol}")
