"""Exact QFI of a pure state evolving under H(lambda) = H0(lambda) + H_I.

The derivative state in the interacting eigenbasis is ``e^{-iHt} K a0`` with

    K[rho, nu] = -i t A[rho, nu] e^{i theta t} sinc(theta t),
    theta = (E_rho - E_nu) / 2,

where ``A`` is dH/dlambda in the eigenbasis. Summing the middle index of the
triple-sum QFI expression is exactly a matrix-vector product with ``K``, so
one time point costs O(D^2) instead of O(D^3).

For well-separated pairs ``K[rho, nu] = -A (e^{i dE t} - 1) / dE``, which
factorizes into ``exp(iEt) * (M @ (exp(-iEt) * a)) - M @ a`` with the time
independent ``M = A / dE``. :class:`EvolutionContext` precomputes ``M`` once
and handles near-degenerate pairs and very short times with the direct kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import EigenSystem, check_normalized, to_eigenbasis

# pairs with |dE| below this fraction of the spectral width use the direct kernel
NEAR_PAIR_RTOL = 1e-6
# below t * width = SHORT_TIME_X the factorized form loses digits to cancellation
SHORT_TIME_X = 1.0
_ROW_CHUNK = 512


def sinc(x):
    """sin(x)/x with a Taylor branch for |x| < 1e-4."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(safe) / safe)


def _phase_sinc(y):
    """e^{iy} sinc(y), evaluated without cancellation."""
    s = sinc(y)
    return s * np.cos(y) + 1j * s * np.sin(y)


@dataclass(frozen=True)
class EvolutionContext:
    """Everything needed to evolve one initial state under one Hamiltonian.

    ``a0`` are the amplitudes in the interacting eigenbasis and
    ``h0_prime_eig`` is dH/dlambda in that basis.
    """

    eig: EigenSystem
    a0: np.ndarray
    h0_prime_eig: np.ndarray
    near_rtol: float = field(default=NEAR_PAIR_RTOL, repr=False)

    def __post_init__(self):
        a0 = np.asarray(self.a0, dtype=complex)
        object.__setattr__(self, "a0", a0)
        if a0.shape != (self.eig.dim,):
            raise ValueError("a0 must be a vector of length dim")
        check_normalized(a0)
        a = np.asarray(self.h0_prime_eig)
        if a.shape != (self.eig.dim, self.eig.dim):
            raise ValueError("h0_prime_eig must be dim x dim")
        if not np.allclose(a, a.T.conj(), rtol=0, atol=1e-10 * max(1.0, np.max(np.abs(a)))):
            raise ValueError("h0_prime_eig must be symmetric")

    @classmethod
    def from_states(cls, eig: EigenSystem, psi0, h0_prime, **kw) -> "EvolutionContext":
        """Build from an initial state and dH/dlambda written in the original basis."""
        return cls(eig=eig, a0=eig.to_eigenbasis_vector(np.asarray(psi0, dtype=complex)),
                   h0_prime_eig=to_eigenbasis(h0_prime, eig), **kw)

    @property
    def dim(self) -> int:
        return self.eig.dim

    @property
    def energies(self) -> np.ndarray:
        return self.eig.eigenvalues

    @property
    def theta(self) -> np.ndarray:
        e = self.energies
        return 0.5 * (e[:, None] - e[None, :])

    @cached_property
    def _width(self) -> float:
        return max(self.eig.spectral_width, np.finfo(float).tiny)

    @cached_property
    def _factorized(self):
        e = self.energies
        a_mat = self.h0_prime_eig
        tol = self.near_rtol * self._width
        m = np.empty_like(a_mat)
        near_r, near_c = [], []
        for lo in range(0, self.dim, _ROW_CHUNK):
            hi = min(lo + _ROW_CHUNK, self.dim)
            d = e[lo:hi, None] - e[None, :]
            near = np.abs(d) <= tol
            np.divide(a_mat[lo:hi], np.where(near, 1.0, d), out=m[lo:hi])
            m[lo:hi][near] = 0.0
            r, c = np.nonzero(near)
            near_r.append(r + lo)
            near_c.append(c)
        near_r = np.concatenate(near_r)
        near_c = np.concatenate(near_c)
        return m, m @ self.a0, near_r, near_c, a_mat[near_r, near_c], e[near_r] - e[near_c]

    def derivative_amplitudes(self, t: float) -> np.ndarray:
        """``K(t) @ a0``; the derivative state is ``exp(-iEt)`` times this."""
        t = float(t)
        if t == 0.0:
            return np.zeros(self.dim, dtype=complex)
        if abs(t) * self._width < SHORT_TIME_X:
            return _direct_kernel_apply(self, t)
        m, ma, nr, nc, na, nd = self._factorized
        e = self.energies
        b = np.exp(-1j * e * t) * self.a0
        u = -(np.exp(1j * e * t) * (m @ b) - ma)
        if nr.size:
            k_near = -1j * t * na * _phase_sinc(0.5 * nd * t)
            u += np.bincount(nr, weights=(k_near * self.a0[nc]).real, minlength=self.dim)
            u += 1j * np.bincount(nr, weights=(k_near * self.a0[nc]).imag, minlength=self.dim)
        return u

    def state_and_derivative(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``(psi(t), d psi/d lambda)`` in the interacting eigenbasis."""
        ph = np.exp(-1j * self.energies * t)
        return ph * self.a0, ph * self.derivative_amplitudes(t)


def _direct_kernel_apply(ctx: EvolutionContext, t: float) -> np.ndarray:
    e = ctx.energies
    out = np.empty(ctx.dim, dtype=complex)
    for lo in range(0, ctx.dim, _ROW_CHUNK):
        hi = min(lo + _ROW_CHUNK, ctx.dim)
        y = 0.5 * (e[lo:hi, None] - e[None, :]) * t
        out[lo:hi] = (-1j * t * ctx.h0_prime_eig[lo:hi] * _phase_sinc(y)) @ ctx.a0
    return out


def evolve_state(ctx: EvolutionContext, t: float) -> np.ndarray:
    """Amplitudes ``a_mu exp(-i E_mu t)`` of the evolved state."""
    return ctx.a0 * np.exp(-1j * ctx.energies * t)


def derivative_kernel(ctx: EvolutionContext, t: float) -> np.ndarray:
    """Dense kernel K(t); meant for small systems and cross-checks."""
    y = ctx.theta * t
    return -1j * t * ctx.h0_prime_eig * _phase_sinc(y)


def qfi_terms(ctx: EvolutionContext, t: float) -> tuple[float, complex]:
    """``(<d psi|d psi>, <psi|d psi>)`` at time ``t``."""
    u = ctx.derivative_amplitudes(t)
    return float(np.vdot(u, u).real), complex(np.vdot(ctx.a0, u))


def qfi_exact(ctx: EvolutionContext, t):
    """Pure-state QFI 4(<d psi|d psi> - |<psi|d psi>|^2); vectorized over ``t``."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(ts.shape)
    for i, ti in enumerate(ts):
        n2, ov = qfi_terms(ctx, ti)
        out[i] = 4.0 * (n2 - abs(ov) ** 2)
    return out if np.ndim(t) else float(out[0])


def qfi_triple_sum(ctx: EvolutionContext, t: float) -> float:
    """Literal triple-sum evaluation, O(D^3). Only for small regression checks."""
    a = ctx.a0
    amat = ctx.h0_prime_eig
    th = ctx.theta * t
    s = sinc(th)
    phase = np.exp(1j * th)
    first = np.einsum("m,n,mr,rn,mn,mr,rn->", a.conj(), a, amat, amat, phase, s, s)
    second = np.einsum("m,n,mn,mn,mn->", a.conj(), a, phase, amat, s)
    return float((4.0 * t * t * (first - abs(second) ** 2)).real)


def evolve_in_basis(eig: EigenSystem, psi0, t: float) -> np.ndarray:
    """e^{-iHt} psi0 written back in the original basis."""
    v = eig.eigenvectors
    return v @ (np.exp(-1j * eig.eigenvalues * t) * (v.T @ np.asarray(psi0, dtype=complex)))


def qfi_fidelity_oracle(eig_lam: EigenSystem, eig_lam_delta: EigenSystem, psi0, t: float, delta: float) -> float:
    """QFI from the overlap of states evolved under H(lambda) and H(lambda + delta).

    Uses 8 (1 - |<psi_lam|psi_lam+delta>|) / delta^2. The infidelity is taken
    as half the squared distance after removing the relative phase, which is
    the same number for unit vectors without the catastrophic cancellation of
    ``1 - |overlap|``. The expansion needs delta^2 F / 4 << 1; see
    :func:`fidelity_step_for_time`.
    """
    if delta == 0:
        raise ValueError("delta must be nonzero")
    p1 = evolve_in_basis(eig_lam, psi0, t)
    p2 = evolve_in_basis(eig_lam_delta, psi0, t)
    p1 /= np.linalg.norm(p1)
    p2 /= np.linalg.norm(p2)
    ov = np.vdot(p1, p2)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    diff = p2 - phase * p1
    infidelity = 0.5 * float(np.vdot(diff, diff).real)
    return 8.0 * infidelity / delta**2


def default_fidelity_step(h0_prime, eig: EigenSystem, rel: float = 1e-5) -> float:
    """Parameter step whose perturbation norm is ``rel`` times the spectral width.

    The operator norm of dH/dlambda is bounded by its maximum absolute row sum.
    """
    h = np.asarray(h0_prime)
    scale = float(np.max(np.sum(np.abs(h), axis=1))) if h.ndim == 2 else float(np.max(np.abs(h)))
    if scale == 0:
        return rel * max(eig.spectral_width, 1.0)
    return rel * max(eig.spectral_width, np.finfo(float).eps) / scale


def fidelity_step_for_time(h0_prime, eig: EigenSystem, t: float, rel: float = 1e-5,
                           max_phase: float = 1e-3) -> float:
    """:func:`default_fidelity_step`, capped at ``max_phase / (t ||dH/dlambda||)``.

    Since F <= 4 t^2 ||dH/dlambda||^2 the cap keeps the infidelity below
    ``max_phase^2`` at any time, so the quadratic expansion stays valid.
    """
    d0 = default_fidelity_step(h0_prime, eig, rel)
    h = np.asarray(h0_prime)
    norm = float(np.max(np.sum(np.abs(h), axis=1))) if h.ndim == 2 else float(np.max(np.abs(h)))
    if t == 0 or norm == 0:
        return d0
    return min(d0, max_phase / (abs(t) * norm))


def observable_evolution(ctx: EvolutionContext, o_eig, t):
    """<Psi0| e^{iHt} O e^{-iHt} |Psi0> with O given in the interacting eigenbasis."""
    o = np.asarray(o_eig)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(ts.shape)
    scale = max(1.0, float(np.max(np.abs(o))))
    for i, ti in enumerate(ts):
        c = evolve_state(ctx, ti)
        val = np.vdot(c, o @ c) if o.ndim == 2 else np.vdot(c, o * c)
        if abs(val.imag) > 1e-10 * scale:
            raise ArithmeticError(f"observable expectation has imaginary part {val.imag:.3e}")
        out[i] = val.real
    return out if np.ndim(t) else float(out[0])


def diagonal_observable_evolution(ctx: EvolutionContext, o_diag, t):
    """Like :func:`observable_evolution` for O diagonal in the original basis.

    Costs O(D^2) per time and never forms O in the eigenbasis.
    """
    o = np.asarray(o_diag, dtype=float)
    v = ctx.eig.eigenvectors
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(ts.shape)
    for i, ti in enumerate(ts):
        psi = v @ evolve_state(ctx, ti)
        out[i] = float(np.sum(o * (psi.real**2 + psi.imag**2)))
    return out if np.ndim(t) else float(out[0])


def eigenstate_expectations(eig: EigenSystem, o_diag) -> np.ndarray:
    """<psi_mu|O|psi_mu> for every eigenstate, O diagonal in the original basis."""
    v = eig.eigenvectors
    return (v * v).T @ np.asarray(o_diag, dtype=float)


def diagonal_ensemble_average(a0, o_eig) -> float:
    """sum_mu |a_mu|^2 O_{mu mu}."""
    o = np.asarray(o_eig)
    diag = np.diagonal(o).real if o.ndim == 2 else o.real
    return float(np.sum(np.abs(a0) ** 2 * diag))


def effective_dimension(a0) -> float:
    """Inverse participation ratio 1 / sum |a_mu|^4."""
    p = np.abs(np.asarray(a0)) ** 2
    return float(1.0 / np.sum(p * p))


@dataclass
class QfiSeries:
    """Time series for one realization (or an ensemble aggregate)."""

    times: np.ndarray
    qfi_exact: np.ndarray
    qfi_rmt: np.ndarray | None = None
    cfi_populations: np.ndarray | None = None
    cfi_sld: np.ndarray | None = None
    realization: int | None = None

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"t": self.times, "F_Q_exact": self.qfi_exact}
        for name, val in (("F_Q_rmt", self.qfi_rmt), ("CFI_pop", self.cfi_populations), ("CFI_sld", self.cfi_sld)):
            if val is not None:
                cols[name] = val
        return cols
