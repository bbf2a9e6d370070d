"""Classical Fisher information of concrete measurements.

Two strategies: the projective measurement in the eigenbasis of the symmetric
logarithmic derivative (which saturates the QFI) and detection of all spin
populations in the computational basis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import EigenSystem
from .qfi import EvolutionContext, evolve_in_basis

P_FLOOR = 1e-14


@dataclass(frozen=True)
class MeasurementDistribution:
    probabilities: np.ndarray
    d_probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        dp = np.asarray(self.d_probabilities, dtype=float)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "d_probabilities", dp)
        if p.shape != dp.shape:
            raise ValueError("probabilities and derivatives differ in shape")
        if np.any(p < -1e-15):
            raise ValueError("negative probability")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {p.sum():.15f}")
        if abs(dp.sum()) > 1e-8 * max(1.0, float(np.abs(dp).sum())):
            raise ValueError(f"derivatives sum to {dp.sum():.3e}")

    def fisher(self, p_floor: float = P_FLOOR) -> float:
        return classical_fisher(self.probabilities, self.d_probabilities, p_floor)


def classical_fisher(p, dp, p_floor: float = P_FLOOR) -> float:
    """sum_n (dp_n)^2 / p_n over outcomes with p_n > p_floor."""
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    keep = p > p_floor
    return float(np.sum(dp[keep] ** 2 / p[keep]))


def sld_measurement(psi, dpsi) -> np.ndarray | None:
    """Eigenvectors (columns) of the SLD restricted to span{psi, dpsi}.

    Returns ``None`` when dpsi is parallel to psi, in which case the state
    does not change beyond a phase and no measurement carries information.
    """
    psi = np.asarray(psi, dtype=complex)
    dpsi = np.asarray(dpsi, dtype=complex)
    c = np.vdot(psi, dpsi)
    perp = dpsi - c * psi
    n = np.linalg.norm(perp)
    scale = max(np.linalg.norm(dpsi), 1e-300)
    if n <= 1e-14 * scale or np.linalg.norm(dpsi) == 0:
        return None
    e2 = perp / n
    # L = 2(|dpsi><psi| + |psi><dpsi|) in the basis (psi, e2)
    red = np.array([[4.0 * c.real, 2.0 * n], [2.0 * n, 0.0]])
    _, w = np.linalg.eigh(red)
    return np.column_stack([psi, e2]) @ w


def sld_cfi(psi, dpsi) -> float:
    """CFI of the projective measurement onto the SLD eigenvectors.

    Outcomes outside span{psi, dpsi} have zero probability and zero
    derivative, so only the two in-span projectors contribute.
    """
    vecs = sld_measurement(psi, dpsi)
    if vecs is None:
        return 0.0
    psi = np.asarray(psi, dtype=complex)
    dpsi = np.asarray(dpsi, dtype=complex)
    amp = vecs.conj().T @ psi
    damp = vecs.conj().T @ dpsi
    p = np.abs(amp) ** 2
    dp = 2.0 * np.real(amp.conj() * damp)
    return classical_fisher(p, dp, 0.0)


def population_distribution(psi, dpsi) -> MeasurementDistribution:
    """Computational-basis populations and their exact derivatives."""
    psi = np.asarray(psi, dtype=complex)
    dpsi = np.asarray(dpsi, dtype=complex)
    return MeasurementDistribution(np.abs(psi) ** 2, 2.0 * np.real(psi.conj() * dpsi))


def population_cfi_exact(ctx: EvolutionContext, t, p_floor: float = P_FLOOR):
    """Population CFI with analytic derivatives dp_n = 2 Re(psi_n^* dpsi_n).

    ``ctx`` must be built in the computational basis (the eigenvectors of
    ``ctx.eig`` map back to it).
    """
    v = ctx.eig.eigenvectors
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(ts.shape)
    for i, ti in enumerate(ts):
        c, dc = ctx.state_and_derivative(ti)
        psi = v @ c
        dpsi = v @ dc
        out[i] = classical_fisher(np.abs(psi) ** 2, 2.0 * np.real(psi.conj() * dpsi), p_floor)
    return out if np.ndim(t) else float(out[0])


def default_population_step(B: float) -> float:
    return max(1e-4 * abs(B), 1e-6)


@dataclass(frozen=True)
class PopulationCfi:
    times: np.ndarray
    cfi: np.ndarray
    cfi_half_step: np.ndarray | None
    step_too_large: np.ndarray | None
    delta: float
    p_floor: float


def population_cfi(
    eig_center: EigenSystem,
    eig_minus: EigenSystem,
    eig_plus: EigenSystem,
    psi0,
    t,
    delta: float,
    *,
    half_step: tuple[EigenSystem, EigenSystem] | None = None,
    p_floor: float = P_FLOOR,
    rtol: float = 0.01,
) -> PopulationCfi:
    """Population CFI with central differences over H(B - delta), H(B + delta).

    ``half_step`` supplies eigensystems at B -/+ delta/2; when present the
    estimate is repeated with the halved step and times where the two differ
    by more than ``rtol`` are flagged in ``step_too_large``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    ts = np.atleast_1d(np.asarray(t, dtype=float))

    def cfi_for(em, ep, d):
        out = np.empty(ts.shape)
        for i, ti in enumerate(ts):
            if ti == 0.0:
                # the propagator is the identity for every B
                out[i] = 0.0
                continue
            p0 = np.abs(evolve_in_basis(eig_center, psi0, ti)) ** 2
            pm = np.abs(evolve_in_basis(em, psi0, ti)) ** 2
            pp = np.abs(evolve_in_basis(ep, psi0, ti)) ** 2
            out[i] = classical_fisher(p0, (pp - pm) / (2.0 * d), p_floor)
        return out

    full = cfi_for(eig_minus, eig_plus, delta)
    half = flag = None
    if half_step is not None:
        half = cfi_for(half_step[0], half_step[1], 0.5 * delta)
        denom = np.maximum(np.abs(half), 1e-300)
        flag = (np.abs(full - half) / denom > rtol) & (np.abs(full - half) > 1e-12)
    return PopulationCfi(times=ts, cfi=full, cfi_half_step=half, step_too_large=flag, delta=float(delta),
                         p_floor=p_floor)
