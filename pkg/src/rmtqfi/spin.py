"""Non-integrable spin chain: system spin(s) coupled to an Ising-type bath.

Site 1 is the leftmost tensor factor. System spins occupy sites
``1..n_system``; the bath is everything after them, with open boundaries.
Computational basis: local index 0 is spin up (sigma^z = +1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .linalg import MAX_DENSE_DIM, EigenSystem, eigh, fix_signs

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

_PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "y": np.array([[0.0, -1j], [1j, 0.0]]),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]]),
    "+": np.array([[0.0, 1.0], [0.0, 0.0]]),
    "-": np.array([[0.0, 0.0], [1.0, 0.0]]),
}


@dataclass(frozen=True)
class SpinChainSpec:
    """Couplings of H = H_S + H_B + H_SB.

    ``couplings`` lists ``(system_site, bath_site)`` pairs with absolute
    1-based site indices.
    """

    N: int
    B: float = 0.01
    Bx_bath: float = 0.3
    Jx: float = 1.0
    Jz_sb: float = 0.2
    Jx_sb: float = 0.4
    couplings: tuple[tuple[int, int], ...] = ((1, 5),)
    n_system: int = 1

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple((int(s), int(r)) for s, r in self.couplings))
        if int(self.N) != self.N or self.N < 3:
            raise ValueError(f"N must be an integer >= 3, got {self.N}")
        if 2**self.N > MAX_DENSE_DIM:
            raise ValueError(f"N={self.N} exceeds the dense limit 2**{int(math.log2(MAX_DENSE_DIM))}")
        if self.n_system not in (1, 2):
            raise ValueError("n_system must be 1 or 2")
        if not self.couplings:
            raise ValueError("at least one system-bath coupling is required")
        for s, r in self.couplings:
            if not 1 <= s <= self.n_system:
                raise ValueError(f"coupling system site {s} is not a system site")
            if not self.n_system + 1 <= r <= self.N:
                raise ValueError(f"coupling bath site {r} outside [{self.n_system + 1}, {self.N}]")
        for name in ("B", "Bx_bath", "Jx", "Jz_sb", "Jx_sb"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def dim(self) -> int:
        return 2**self.N

    @property
    def bath_sites(self) -> range:
        return range(self.n_system + 1, self.N + 1)

    def with_(self, **changes) -> "SpinChainSpec":
        return replace(self, **changes)


def _site_op(q: str, j: int, N: int) -> sp.csr_matrix:
    if q not in _PAULI:
        raise ValueError(f"unknown Pauli label {q!r}")
    if not 1 <= j <= N:
        raise ValueError(f"site {j} outside [1, {N}]")
    left = sp.identity(2 ** (j - 1), format="csr")
    right = sp.identity(2 ** (N - j), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(_PAULI[q])), right, format="csr")


def pauli_site(q: str, j: int, N: int) -> np.ndarray:
    """Dense ``sigma^q`` acting on site ``j`` (1-based) of an ``N``-site chain."""
    return _site_op(q, j, N).toarray()


def _flip_flop(j: int, k: int, N: int) -> sp.csr_matrix:
    return _site_op("+", j, N) @ _site_op("-", k, N) + _site_op("-", j, N) @ _site_op("+", k, N)


def _bath_terms(spec: SpinChainSpec, N: int, offset: int) -> sp.csr_matrix:
    """H_B on an N-site register whose site ``offset + 1`` is the first bath spin."""
    h = sp.csr_matrix((2**N, 2**N))
    sites = [k - spec.n_system + offset for k in spec.bath_sites]
    for k in sites:
        h = h + spec.Bx_bath * _site_op("x", k, N)
    for k in sites[:-1]:
        h = h + spec.Jx * _flip_flop(k, k + 1, N)
    return h


def _system_terms(spec: SpinChainSpec) -> sp.csr_matrix:
    return spec.B * _h0_prime_sparse(spec)


def _h0_prime_sparse(spec: SpinChainSpec) -> sp.csr_matrix:
    h = sp.csr_matrix((spec.dim, spec.dim))
    for s in range(1, spec.n_system + 1):
        h = h + _site_op("z", s, spec.N)
    return h


def _interaction(spec: SpinChainSpec) -> sp.csr_matrix:
    h = sp.csr_matrix((spec.dim, spec.dim))
    for s, r in spec.couplings:
        h = h + spec.Jz_sb * (_site_op("z", s, spec.N) @ _site_op("z", r, spec.N))
        h = h + spec.Jx_sb * _flip_flop(s, r, spec.N)
    return h


def _dense_real(m: sp.spmatrix) -> np.ndarray:
    d = m.toarray()
    if np.iscomplexobj(d):
        d = d.real
    out = np.ascontiguousarray(d, dtype=float)
    # every term is symmetric; enforce it bit-for-bit after sparse summation
    return np.triu(out) + np.triu(out, 1).T


def build_h0(spec: SpinChainSpec) -> np.ndarray:
    """Non-interacting part H_S + H_B."""
    return _dense_real(_system_terms(spec) + _bath_terms(spec, spec.N, spec.n_system))


def build_interaction(spec: SpinChainSpec) -> np.ndarray:
    return _dense_real(_interaction(spec))


def build_hamiltonian(spec: SpinChainSpec) -> np.ndarray:
    """Full chain Hamiltonian as a dense real symmetric matrix."""
    total = _system_terms(spec) + _bath_terms(spec, spec.N, spec.n_system) + _interaction(spec)
    return _dense_real(total)


def build_h0_prime(spec: SpinChainSpec) -> np.ndarray:
    """dH/dB, the sum of sigma^z over the system sites."""
    return _dense_real(_h0_prime_sparse(spec))


def system_observable(spec: SpinChainSpec, label: str) -> np.ndarray:
    """Diagonal system observables: ``"z1"``, ``"z2"`` or ``"z1z2"``."""
    return np.diag(system_observable_diagonal(spec, label))


def system_observable_diagonal(spec: SpinChainSpec, label: str) -> np.ndarray:
    """Diagonal of :func:`system_observable` as a vector."""
    ops = {
        "z1": lambda: _site_op("z", 1, spec.N),
        "z2": lambda: _site_op("z", 2, spec.N),
        "z1z2": lambda: _site_op("z", 1, spec.N) @ _site_op("z", 2, spec.N),
    }
    if label not in ops:
        raise ValueError(f"unknown observable {label!r}")
    return np.asarray(ops[label]().diagonal().real, dtype=float)


def h0_eigensystem(spec: SpinChainSpec) -> EigenSystem:
    """Eigenbasis of H0 built from the bath alone.

    H0 acts as B * sum(sigma^z) on the system register and as H_B on the bath,
    so its eigenstates are computational system states times bath eigenstates.
    Diagonalizing the 2**(N - n_system) bath block is much cheaper than the full
    matrix. States are returned in ascending energy order.
    """
    nb = spec.N - spec.n_system
    hb = _dense_real(_bath_terms(spec, nb, 0))
    bath = eigh(hb)
    ns = 2**spec.n_system
    sys_field = np.array(
        [spec.B * sum(1 - 2 * ((s >> (spec.n_system - 1 - k)) & 1) for k in range(spec.n_system)) for s in range(ns)],
        dtype=float,
    )
    energies = (sys_field[:, None] + bath.eigenvalues[None, :]).ravel()
    order = np.argsort(energies, kind="stable")
    vecs = np.zeros((spec.dim, spec.dim))
    nbdim = 2**nb
    for col, flat in enumerate(order):
        s, b = divmod(int(flat), nbdim)
        vecs[s * nbdim:(s + 1) * nbdim, col] = bath.eigenvectors[:, b]
    return EigenSystem(eigenvalues=energies[order], eigenvectors=fix_signs(vecs))


def product_state(N: int, pattern: str) -> np.ndarray:
    """Computational basis state from a string of ``u``/``d`` (site 1 first)."""
    if len(pattern) != N or set(pattern) - {"u", "d"}:
        raise ValueError(f"pattern must be {N} characters from 'u'/'d', got {pattern!r}")
    index = int("".join("0" if c == "u" else "1" for c in pattern), 2)
    psi = np.zeros(2**N)
    psi[index] = 1.0
    return psi


def antiferromagnetic_pattern(spec: SpinChainSpec, bath_first: str = "d") -> str:
    """System spins up, bath alternating starting from ``bath_first``."""
    if bath_first not in ("u", "d"):
        raise ValueError("bath_first must be 'u' or 'd'")
    other = "u" if bath_first == "d" else "d"
    nb = spec.N - spec.n_system
    return "u" * spec.n_system + "".join(bath_first if k % 2 == 0 else other for k in range(nb))


@dataclass(frozen=True)
class InitialStateKind:
    """``basis_eigenstate`` (index into ascending H0 eigenstates),
    ``antiferromagnetic`` or an explicit ``product`` pattern."""

    variant: str
    index: int | None = None
    bath_first: str = "d"
    pattern: str | None = None

    def __post_init__(self):
        if self.variant not in ("basis_eigenstate", "antiferromagnetic", "product"):
            raise ValueError(f"unknown initial state variant {self.variant!r}")
        if self.variant == "basis_eigenstate" and self.index is None:
            raise ValueError("basis_eigenstate needs an index")
        if self.variant == "product" and self.pattern is None:
            raise ValueError("product state needs a pattern")

    def build(self, spec: SpinChainSpec, h0_eig: EigenSystem | None = None) -> np.ndarray:
        if self.variant == "basis_eigenstate":
            if not 0 <= self.index < spec.dim:
                raise ValueError(f"index {self.index} outside [0, {spec.dim})")
            es = h0_eig if h0_eig is not None else h0_eigensystem(spec)
            return es.eigenvectors[:, self.index].copy()
        if self.variant == "antiferromagnetic":
            return product_state(spec.N, antiferromagnetic_pattern(spec, self.bath_first))
        return product_state(spec.N, self.pattern)


@dataclass(frozen=True)
class DensityOfStates:
    bin_edges: np.ndarray
    counts_per_energy: np.ndarray
    bin_width: float
    rule: str = field(default="fd")

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    def __call__(self, energy):
        """Linear interpolation between bin centers; zero outside the spectrum."""
        return np.interp(energy, self.bin_centers, self.counts_per_energy, left=0.0, right=0.0)

    def total(self) -> float:
        return float(np.sum(self.counts_per_energy * np.diff(self.bin_edges)))

    def trapezoid(self) -> float:
        x = np.concatenate([[self.bin_edges[0]], self.bin_centers, [self.bin_edges[-1]]])
        y = np.concatenate([[0.0], self.counts_per_energy, [0.0]])
        return float(_trapezoid(y, x))


def density_of_states(eigenvalues, bin_width: float | None = None) -> DensityOfStates:
    """Histogram density of states; Freedman-Diaconis bins unless ``bin_width`` is given."""
    e = np.sort(np.asarray(eigenvalues, dtype=float))
    if e.size < 100:
        raise ValueError("density_of_states needs at least 100 eigenvalues")
    if bin_width is None:
        width = float(np.diff(np.histogram_bin_edges(e, bins="fd")[:2])[0])
        rule = "fd"
    else:
        if not bin_width > 0:
            raise ValueError("bin_width must be positive")
        width = float(bin_width)
        rule = "fixed"
    nbins = max(1, int(np.ceil((e[-1] - e[0]) / width)))
    lo = e[0] - 0.5 * (nbins * width - (e[-1] - e[0]))
    edges = lo + width * np.arange(nbins + 1)
    counts, _ = np.histogram(e, bins=edges)
    return DensityOfStates(bin_edges=edges, counts_per_energy=counts / width, bin_width=width, rule=rule)
