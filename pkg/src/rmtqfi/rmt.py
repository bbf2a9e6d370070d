"""Deutsch random-matrix model: diagonal ``H0`` plus a GOE perturbation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import EigenSystem, eigh


def realization_rng(master_seed: int, k: int) -> np.random.Generator:
    """Independent stream for realization ``k`` of a run seeded with ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(k),))
    return np.random.default_rng(ss)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class RmtModelSpec:
    N: int
    omega: float = 1.0
    g: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")

    @classmethod
    def from_width_ratio(cls, N: int, ratio: float, omega: float = 1.0, seed: int = 0) -> "RmtModelSpec":
        """Spec whose coupling gives ``gamma_width(g, N, omega) / omega == ratio``."""
        g = np.sqrt(ratio * N * omega**2 / np.pi)
        return cls(N=N, omega=omega, g=float(g), seed=seed)

    @property
    def gamma(self) -> float:
        return gamma_width(self.g, self.N, self.omega)

    @property
    def basis_energies(self) -> np.ndarray:
        return self.omega * np.arange(1, self.N + 1, dtype=float)

    def with_seed(self, seed: int) -> "RmtModelSpec":
        return RmtModelSpec(N=self.N, omega=self.omega, g=self.g, seed=seed)


def sample_goe(N: int, g: float, seed) -> np.ndarray:
    """GOE matrix with off-diagonal variance g^2/N and diagonal variance 2 g^2/N."""
    if N < 2:
        raise ValueError("N must be >= 2")
    if not g > 0:
        raise ValueError("g must be positive")
    x = _rng(seed).normal(scale=g / np.sqrt(N), size=(N, N))
    # x + x.T is symmetric exactly; the sqrt(2) restores the off-diagonal variance.
    return (x + x.T) / np.sqrt(2.0)


def build_deutsch_hamiltonian(spec: RmtModelSpec, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(H0, H)`` with ``H0 = diag(alpha * omega)``, alpha = 1..N."""
    h0 = np.diag(spec.basis_energies)
    h = h0 + sample_goe(spec.N, spec.g, spec.seed if rng is None else rng)
    return h0, h


def sample_eigensystem(spec: RmtModelSpec, rng=None) -> EigenSystem:
    return eigh(build_deutsch_hamiltonian(spec, rng)[1])


def gamma_width(g: float, N: int, omega: float) -> float:
    """Wave-function width pi g^2 / (N omega)."""
    if not (g > 0 and N > 0 and omega > 0):
        raise ValueError("g, N and omega must be positive")
    return float(np.pi * g**2 / (N * omega))


def lorentzian(e_mu, e_alpha, gamma: float, omega: float):
    """Ensemble-averaged overlap (omega Gamma/pi) / ((E_mu - E_alpha)^2 + Gamma^2)."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    d = np.subtract(e_mu, e_alpha)
    return (omega * gamma / np.pi) / (d * d + gamma * gamma)


@dataclass(frozen=True)
class LorentzianProfile:
    gamma: float
    omega: float

    def __post_init__(self):
        if not self.gamma > 0 or not self.omega > 0:
            raise ValueError("gamma and omega must be positive")

    @property
    def peak(self) -> float:
        return self.omega / (np.pi * self.gamma)

    def __call__(self, e_mu, e_alpha):
        return lorentzian(e_mu, e_alpha, self.gamma, self.omega)


def profile_histogram(
    eigensystems, basis_energies, gamma: float, *, window: float = 3.0, nbins: int = 13,
    states: slice | None = None,
):
    """Bin ``|c_mu(alpha)|^2`` by ``E_mu - E_alpha`` over several realizations.

    Returns ``(centers, mean_weight, stderr, counts)``. Only interacting states
    in ``states`` (default: the middle half of the spectrum) contribute, which
    keeps the band edges out of the fit.
    """
    basis_energies = np.asarray(basis_energies, dtype=float)
    edges = np.linspace(-window * gamma, window * gamma, nbins + 1)
    per_real = []
    counts = np.zeros(nbins)
    for es in eigensystems:
        n = es.dim
        sl = states if states is not None else slice(n // 4, 3 * n // 4)
        e_mu = es.eigenvalues[sl]
        w = es.eigenvectors[:, sl] ** 2
        d = e_mu[None, :] - basis_energies[:, None]
        idx = np.digitize(d, edges) - 1
        ok = (idx >= 0) & (idx < nbins)
        s = np.bincount(idx[ok], weights=w[ok], minlength=nbins)
        c = np.bincount(idx[ok], minlength=nbins).astype(float)
        counts += c
        per_real.append(s / np.maximum(c, 1))
    per_real = np.array(per_real)
    mean = per_real.mean(axis=0)
    stderr = per_real.std(axis=0, ddof=1) / np.sqrt(len(per_real)) if len(per_real) > 1 else np.full(nbins, np.nan)
    centers = 0.5 * (edges[1:] + edges[:-1])
    return centers, mean, stderr, counts


def half_width_at_half_maximum(centers, weights) -> float:
    """HWHM of a peaked profile sampled on ``centers`` by linear interpolation."""
    centers = np.asarray(centers, dtype=float)
    weights = np.asarray(weights, dtype=float)
    i0 = int(np.argmax(weights))
    half = weights[i0] / 2
    widths = []
    for step in (1, -1):
        i = i0
        while 0 <= i + step < len(weights) and weights[i + step] > half:
            i += step
        j = i + step
        if not 0 <= j < len(weights):
            raise ValueError("profile does not fall to half maximum inside the window")
        x = np.interp(half, [weights[j], weights[i]], [centers[j], centers[i]])
        widths.append(abs(x - centers[i0]))
    return float(np.mean(widths))
