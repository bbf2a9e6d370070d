"""Two- and four-point correlators of random eigenvector components c_mu(alpha).

Indices are 0-based. Unless energies are given explicitly, basis state
``alpha`` has energy ``omega * (alpha + 1)`` (the Deutsch H0 spectrum) and the
ensemble-averaged energy of eigenstate ``mu`` is taken to be the same.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .linalg import EigenSystem
from .rmt import RmtModelSpec, lorentzian, realization_rng, sample_eigensystem


def _level(index: int, omega: float) -> float:
    return omega * (index + 1)


def _lam(mu, alpha, gamma, omega, e_mu=None, basis_energies=None) -> float:
    em = _level(mu, omega) if e_mu is None else e_mu
    ea = _level(alpha, omega) if basis_energies is None else basis_energies[alpha]
    return float(lorentzian(em, ea, gamma, omega))


def _check_positive(gamma, omega):
    if not (gamma > 0 and omega > 0):
        raise ValueError("gamma and omega must be positive")


def four_point_same(mu, alpha, beta, alpha_p, beta_p, gamma, omega, *, e_mu=None, basis_energies=None) -> float:
    """<c_mu(alpha) c_mu(beta) c_mu(alpha') c_mu(beta')> from the Wick pairings."""
    _check_positive(gamma, omega)

    def lam(a):
        return _lam(mu, a, gamma, omega, e_mu, basis_energies)

    out = 0.0
    if alpha == alpha_p and beta == beta_p:
        out += lam(alpha) * lam(beta)
    pairings = (alpha_p == beta_p and alpha == beta) + (alpha == beta_p and alpha_p == beta)
    if pairings:
        out += lam(alpha) * lam(alpha_p) * pairings
    return out


def overlap_sum(e_mu: float, e_nu: float, gamma: float, omega: float, basis_energies=None) -> float:
    """sum_gamma Lambda(mu, gamma) Lambda(nu, gamma).

    Closed form (2 omega Gamma / pi) / ((E_mu - E_nu)^2 + 4 Gamma^2) in the
    continuum; an explicit sum over ``basis_energies`` when those are given.
    """
    _check_positive(gamma, omega)
    if basis_energies is not None:
        e = np.asarray(basis_energies, dtype=float)
        return float(np.sum(lorentzian(e_mu, e, gamma, omega) * lorentzian(e_nu, e, gamma, omega)))
    d = e_mu - e_nu
    return float((2.0 * omega * gamma / np.pi) / (d * d + 4.0 * gamma * gamma))


def four_point_diff(mu, nu, alpha, beta, alpha_p, beta_p, gamma, omega, *, e_mu=None, e_nu=None,
                    basis_energies=None) -> float:
    """<c_mu(alpha) c_nu(beta) c_mu(alpha') c_nu(beta')> for mu != nu.

    The Gaussian pairing minus the correction enforced by orthogonality of the
    two eigenvectors.
    """
    if mu == nu:
        raise ValueError("mu == nu; use four_point_same")
    _check_positive(gamma, omega)
    em = _level(mu, omega) if e_mu is None else e_mu
    en = _level(nu, omega) if e_nu is None else e_nu

    def lm(a):
        return _lam(mu, a, gamma, omega, em, basis_energies)

    def ln(a):
        return _lam(nu, a, gamma, omega, en, basis_energies)

    out = 0.0
    if alpha == alpha_p and beta == beta_p:
        out += lm(alpha) * ln(beta)
    deltas = (alpha == beta and alpha_p == beta_p) + (alpha == beta_p and alpha_p == beta)
    if deltas:
        s = overlap_sum(em, en, gamma, omega, basis_energies)
        out -= lm(alpha) * ln(beta) * lm(alpha_p) * ln(beta_p) / s * deltas
    return out


@dataclass(frozen=True)
class CorrelatorRequest:
    """A product of eigenvector components, ``((state, basis), ...)``."""

    factors: tuple[tuple[int, int], ...]
    gamma: float
    omega: float

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple((int(s), int(b)) for s, b in self.factors))
        _check_positive(self.gamma, self.omega)
        if not self.factors:
            raise ValueError("at least one factor is required")

    @property
    def same_state(self) -> bool:
        return len({s for s, _ in self.factors}) == 1

    @property
    def gauge_invariant(self) -> bool:
        """Even in every state index, hence independent of eigenvector signs."""
        return all(c % 2 == 0 for c in Counter(s for s, _ in self.factors).values())

    def check_range(self, n: int) -> None:
        for s, b in self.factors:
            if not (0 <= s < n and 0 <= b < n):
                raise IndexError(f"index pair ({s}, {b}) outside [0, {n})")

    def analytic(self) -> float:
        """Closed form for two- and four-point requests."""
        f = self.factors
        if len(f) == 2 and f[0][0] == f[1][0]:
            return _lam(f[0][0], f[0][1], self.gamma, self.omega) if f[0][1] == f[1][1] else 0.0
        if len(f) != 4:
            raise ValueError("analytic form available for 2- and 4-point requests only")
        states = [s for s, _ in f]
        if self.same_state:
            return four_point_same(states[0], f[0][1], f[1][1], f[2][1], f[3][1], self.gamma, self.omega)
        counts = Counter(states)
        if len(counts) != 2 or set(counts.values()) != {2}:
            raise ValueError("four-point request must involve two states twice each")
        mu, nu = sorted(counts)
        am = [b for s, b in f if s == mu]
        an = [b for s, b in f if s == nu]
        return four_point_diff(mu, nu, am[0], an[0], am[1], an[1], self.gamma, self.omega)

    def evaluate(self, es: EigenSystem) -> float:
        v = es.eigenvectors
        out = 1.0
        for s, b in self.factors:
            out *= v[b, s]
        return float(out)


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    stderr: float
    n: int
    gauge_invariant: bool = True

    def __iter__(self):
        yield self.estimate
        yield self.stderr


def mc_correlator(
    spec: RmtModelSpec,
    pattern: CorrelatorRequest | Sequence[tuple[int, int]] | Callable[[EigenSystem], float],
    n_realizations: int,
) -> McEstimate:
    """Sample mean and standard error over independently seeded GOE realizations.

    Realization ``k`` uses stream ``k`` of ``spec.seed``. ``pattern`` is a
    request, a sequence of ``(state, basis)`` pairs, or any callable mapping
    an eigensystem to a number.
    """
    if n_realizations < 10:
        raise ValueError("n_realizations must be at least 10")
    gauge = True
    if callable(pattern) and not isinstance(pattern, CorrelatorRequest):
        fn = pattern
    else:
        req = pattern if isinstance(pattern, CorrelatorRequest) else CorrelatorRequest(tuple(pattern), spec.gamma, spec.omega)
        req.check_range(spec.N)
        gauge = req.gauge_invariant
        fn = req.evaluate
    vals = np.array([fn(sample_eigensystem(spec, realization_rng(spec.seed, k))) for k in range(n_realizations)])
    return McEstimate(estimate=float(vals.mean()), stderr=float(vals.std(ddof=1) / np.sqrt(vals.size)),
                      n=int(vals.size), gauge_invariant=gauge)


def orthogonality_sum(mu: int, nu: int, es: EigenSystem) -> float:
    """sum_{alpha != beta} c_mu(a) c_nu(a) c_mu(b) c_nu(b) for one realization.

    Orthogonality of the two eigenvectors makes this equal to
    -sum_alpha c_mu(alpha)^2 c_nu(alpha)^2.
    """
    v = es.eigenvectors
    p = v[:, mu] * v[:, nu]
    return float(p.sum() ** 2 - np.sum(p * p))


def orthogonality_sum_analytic(mu: int, nu: int, gamma: float, omega: float, basis_energies,
                               e_mu: float | None = None, e_nu: float | None = None) -> float:
    """Sum of :func:`four_point_diff` over alpha != beta with the pattern above."""
    e = np.asarray(basis_energies, dtype=float)
    em = _level(mu, omega) if e_mu is None else e_mu
    en = _level(nu, omega) if e_nu is None else e_nu
    lm = lorentzian(em, e, gamma, omega)
    ln = lorentzian(en, e, gamma, omega)
    s = overlap_sum(em, en, gamma, omega, e)
    q = lm * ln
    return float(-(q.sum() ** 2 - np.sum(q * q)) / s)
