"""One function per scenario; each returns a :class:`RealizationResult`.

Workers get an immutable config and a realization index and return plain
arrays, so they can run in a process pool.
"""
from __future__ import annotations

import traceback
from dataclasses import dataclass, field

import numpy as np

from .. import analytics, qfi
from ..correlators import orthogonality_sum, orthogonality_sum_analytic
from ..linalg import EigenSystem, eigh
from ..measurement import default_population_step, population_cfi, population_cfi_exact, sld_cfi
from ..rmt import build_deutsch_hamiltonian, lorentzian, profile_histogram, realization_rng
from ..spin import (
    InitialStateKind,
    SpinChainSpec,
    antiferromagnetic_pattern,
    build_h0_prime,
    build_hamiltonian,
    density_of_states,
    h0_eigensystem,
    system_observable,
    system_observable_diagonal,
)
from .config import ExperimentConfig


@dataclass
class RealizationResult:
    index: int
    table: dict[str, np.ndarray] = field(default_factory=dict)
    derived: dict[str, float] = field(default_factory=dict)
    extra_tables: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_realization(cfg: ExperimentConfig, k: int) -> RealizationResult:
    """Dispatch to the scenario; numeric failures are captured, not raised."""
    fn = {
        "rmt-microcanonical": rmt_microcanonical,
        "rmt-qfi": rmt_qfi,
        "correlators": correlator_stats,
        "spin-qfi": spin_qfi,
        "spin-regimes": spin_qfi,
        "coupling-sweep": spin_qfi,
        "two-spin-ratio": two_spin_ratio,
    }[cfg.scenario]
    try:
        return fn(cfg, k)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        return RealizationResult(index=k, error=f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}")


def _rmt_eigensystem(cfg: ExperimentConfig, k: int) -> tuple[np.ndarray, EigenSystem]:
    _, h = build_deutsch_hamiltonian(cfg.model, realization_rng(cfg.seed, k))
    return h, eigh(h)


def _central_indices(n: int, fraction: float, count: int) -> np.ndarray:
    lo = int(round(n * (1 - fraction) / 2))
    hi = n - lo - 1
    return np.unique(np.linspace(lo, hi, min(count, hi - lo + 1)).round().astype(int))


def rmt_microcanonical(cfg: ExperimentConfig, k: int) -> RealizationResult:
    spec = cfg.model
    h, es = _rmt_eigensystem(cfg, k)
    alpha = np.arange(1, spec.N + 1, dtype=float)
    e_basis = spec.basis_energies
    eig_diag = qfi.eigenstate_expectations(es, alpha)
    probes = _central_indices(spec.N, cfg.options.window_fraction, cfg.options.probe_states)
    rows = {k_: [] for k_ in ("index", "E0", "diag_ensemble", "microcanonical", "eigenstate_energy",
                               "eigenstate_diag", "microcanonical_eigenstate")}
    for a0 in probes:
        amp = es.eigenvectors[a0, :]
        e0 = float(h[a0, a0])
        rows["index"].append(a0)
        rows["E0"].append(e0)
        rows["diag_ensemble"].append(float(np.sum(amp**2 * eig_diag)))
        rows["microcanonical"].append(analytics.microcanonical_average(alpha, e_basis, e0, spec.gamma, spec.omega))
        rows["eigenstate_energy"].append(es.eigenvalues[a0])
        rows["eigenstate_diag"].append(eig_diag[a0])
        rows["microcanonical_eigenstate"].append(
            analytics.microcanonical_average(alpha, e_basis, es.eigenvalues[a0], spec.gamma, spec.omega))
    table = {key: np.asarray(v, dtype=float) for key, v in rows.items()}
    rel = np.abs(table["diag_ensemble"] / table["microcanonical"] - 1)
    table["rel_diff"] = rel
    return RealizationResult(index=k, table=table, derived={"max_rel_diff": float(rel.max()),
                                                            "gamma": spec.gamma})


def rmt_qfi(cfg: ExperimentConfig, k: int) -> RealizationResult:
    spec = cfg.model
    init = cfg.initial_state or InitialStateKind("basis_eigenstate", index=spec.N // 2 - 1)
    a0_index = init.index
    h, es = _rmt_eigensystem(cfg, k)
    alpha = np.arange(1, spec.N + 1, dtype=float)
    h0p = np.diag(alpha)
    psi0 = np.zeros(spec.N)
    psi0[a0_index] = 1.0
    ctx = qfi.EvolutionContext.from_states(es, psi0, h0p)
    times = cfg.times.resolve(spec.gamma)
    e0 = float(h[a0_index, a0_index])
    mc1 = analytics.microcanonical_average(alpha, spec.basis_energies, e0, spec.gamma, spec.omega)
    m2 = analytics.microcanonical_average(alpha**2, spec.basis_energies, e0, spec.gamma, spec.omega)
    inputs = analytics.RmtPredictionInputs(gamma=spec.gamma, level_density=spec.omega, m2=m2, var=m2 - mc1**2)
    terms = [qfi.qfi_terms(ctx, t) for t in times]
    n2 = np.array([x[0] for x in terms])
    ov = np.array([x[1] for x in terms])
    exact = 4.0 * (n2 - np.abs(ov) ** 2)
    pred = analytics.qfi_rmt(inputs, times)
    table = {"t": times, "gamma_t": times * spec.gamma, "F_Q_exact": exact, "F_Q_rmt": pred}
    if cfg.options.average == "terms":
        table.update(dpsi_norm2=n2, overlap_re=ov.real, overlap_im=ov.imag)
    if cfg.options.fidelity_check:
        table["F_Q_fidelity"] = fidelity_series(h, h0p, es, psi0, times)
    gt = times * spec.gamma
    window = (gt >= 1) & (gt <= 20) & (exact > 0)
    rel = np.abs(1 - pred / np.where(exact > 0, exact, np.nan))
    derived = {
        "gamma": spec.gamma, "E0": e0, "m2": m2, "var": inputs.var,
        "d_eff": qfi.effective_dimension(ctx.a0),
        "d_eff_rmt": analytics.deff_rmt_estimate(1.0 / spec.omega, spec.gamma),
        "median_rel_dev": float(np.median(rel[window])) if window.any() else float("nan"),
    }
    if cfg.sweep_probe_time is not None:
        derived["F_Q_probe"] = qfi.qfi_exact(ctx, cfg.sweep_probe_time)
        derived["F_Q_rmt_probe"] = analytics.qfi_rmt(inputs, cfg.sweep_probe_time)
    return RealizationResult(index=k, table=table, derived=derived)


def fidelity_series(h, h0p, es: EigenSystem, psi0, times) -> np.ndarray:
    """Fidelity-oracle QFI with a time-dependent step, one diagonalization per distinct step."""
    cache: dict[float, EigenSystem] = {}
    out = np.empty(len(times))
    for i, t in enumerate(times):
        delta = qfi.fidelity_step_for_time(h0p, es, t)
        if delta not in cache:
            cache[delta] = eigh(h + delta * h0p)
        out[i] = qfi.qfi_fidelity_oracle(es, cache[delta], psi0, t, delta)
    return out


def correlator_stats(cfg: ExperimentConfig, k: int) -> RealizationResult:
    spec = cfg.model
    _, es = _rmt_eigensystem(cfg, k)
    centers, mean, _, counts = profile_histogram([es], spec.basis_energies, spec.gamma,
                                                 window=cfg.options.profile_window, nbins=cfg.options.profile_bins)
    mu = spec.N // 2 - 1
    nu = mu + cfg.options.pair_offset
    v = es.eigenvectors
    fourth = float(np.sum(v[:, mu] ** 4))
    lam = lorentzian(es.eigenvalues[mu], spec.basis_energies, spec.gamma, spec.omega)
    derived = {
        "fourth_moment_sum": fourth,
        "fourth_moment_sum_analytic": float(3.0 * np.sum(lam**2)),
        "orthogonality_sum": orthogonality_sum(mu, nu, es),
        "orthogonality_sum_analytic": orthogonality_sum_analytic(
            mu, nu, spec.gamma, spec.omega, spec.basis_energies, es.eigenvalues[mu], es.eigenvalues[nu]),
        "mu": mu, "nu": nu,
    }
    edges_w = np.diff(np.linspace(-cfg.options.profile_window * spec.gamma, cfg.options.profile_window * spec.gamma,
                                  cfg.options.profile_bins + 1))[0]
    lo = centers - edges_w / 2
    hi = centers + edges_w / 2
    bin_avg = spec.omega / np.pi * (np.arctan(hi / spec.gamma) - np.arctan(lo / spec.gamma)) / edges_w
    table = {"delta_E": centers, "weight": mean, "lorentzian_bin_average": bin_avg, "count": counts}
    return RealizationResult(index=k, table=table, derived=derived)


def _initial_state(cfg: ExperimentConfig, spec: SpinChainSpec, default: InitialStateKind):
    init = cfg.initial_state or default
    h0_eig = h0_eigensystem(spec) if init.variant == "basis_eigenstate" else None
    return init, init.build(spec, h0_eig)


@dataclass
class SpinAnalysis:
    eig: EigenSystem
    ctx: qfi.EvolutionContext
    psi0: np.ndarray
    E0: float
    D_E0: float
    d_eff: float
    gamma_fit: analytics.GammaFit
    inputs: analytics.RmtPredictionInputs
    tau: float
    relaxation: dict[str, np.ndarray]
    dos: dict[str, np.ndarray]


def analyze_spin(spec: SpinChainSpec, psi0: np.ndarray, cfg: ExperimentConfig, eig: EigenSystem | None = None,
                 h: np.ndarray | None = None) -> SpinAnalysis:
    """Diagonalize, fit Gamma from sigma^z_1 and assemble the RMT prediction inputs."""
    if h is None:
        h = build_hamiltonian(spec)
    if eig is None:
        eig = eigh(h)
    h0p = build_h0_prime(spec)
    ctx = qfi.EvolutionContext.from_states(eig, psi0, h0p)
    e0 = float(psi0 @ h @ psi0)
    dos = density_of_states(eig.eigenvalues, cfg.options.dos_bin_width)
    d_e0 = float(dos(e0))
    if not d_e0 > 0:
        raise ArithmeticError(f"density of states vanishes at E0={e0}")
    z1 = system_observable_diagonal(spec, "z1")
    t_fit = np.linspace(0.0, cfg.options.fit_window, cfg.options.fit_samples)
    series = qfi.diagonal_observable_evolution(ctx, z1, t_fit)
    diag_exp = qfi.eigenstate_expectations(eig, z1)
    p = np.abs(ctx.a0) ** 2
    o_bar = float(np.sum(p * diag_exp))
    o_free = float(np.sum(z1 * psi0**2))
    fit = analytics.fit_gamma(t_fit, series, o_free, o_bar)
    gen = np.diagonal(h0p).copy()
    m1 = float(np.sum(p * qfi.eigenstate_expectations(eig, gen)))
    m2 = float(np.sum(p * qfi.eigenstate_expectations(eig, gen**2)))
    inputs = analytics.RmtPredictionInputs(gamma=fit.gamma_hat, level_density=1.0 / d_e0, m2=m2,
                                           var=max(m2 - m1 * m1, 0.0))
    tau = analytics.heisenberg_time(d_e0, inputs.var, m2)
    relax = {"t": t_fit, "sigma_z1": series,
             "fit": analytics.relaxation_law(t_fit, fit.gamma_hat, o_free, o_bar)}
    return SpinAnalysis(eig=eig, ctx=ctx, psi0=psi0, E0=e0, D_E0=d_e0, d_eff=qfi.effective_dimension(ctx.a0),
                        gamma_fit=fit, inputs=inputs, tau=tau, relaxation=relax,
                        dos={"energy": dos.bin_centers, "density": dos.counts_per_energy})


def spin_qfi(cfg: ExperimentConfig, k: int) -> RealizationResult:
    spec = cfg.model
    init, psi0 = _initial_state(cfg, spec, InitialStateKind("antiferromagnetic"))
    h = build_hamiltonian(spec)
    sa = analyze_spin(spec, psi0, cfg, h=h)
    times = cfg.times.resolve(sa.gamma_fit.gamma_hat)
    exact = qfi.qfi_exact(sa.ctx, times)
    table = {"t": times, "F_Q_exact": exact, "F_Q_rmt": analytics.qfi_rmt(sa.inputs, times)}
    if cfg.options.cfi == "exact":
        table["CFI_pop"] = population_cfi_exact(sa.ctx, times)
    elif cfg.options.cfi == "finite_difference":
        d = default_population_step(spec.B)
        shifted = [eigh(build_hamiltonian(spec.with_(B=spec.B + s))) for s in (-d, d, -d / 2, d / 2)]
        pc = population_cfi(sa.eig, shifted[0], shifted[1], psi0, times, d, half_step=(shifted[2], shifted[3]))
        table["CFI_pop"] = pc.cfi
        table["CFI_pop_step_flag"] = pc.step_too_large.astype(float)
    table["CFI_sld"] = np.array([sld_cfi(*sa.ctx.state_and_derivative(t)) for t in times])
    z1 = system_observable_diagonal(spec, "z1")
    table["sigma_z1"] = qfi.diagonal_observable_evolution(sa.ctx, z1, times)
    fit = sa.gamma_fit
    derived = {
        "gamma_hat": fit.gamma_hat, "gamma_grid": fit.gamma_grid, "gamma_fit_residual": fit.residual,
        "gamma_fit_converged": float(fit.converged), "gamma_fit_window_end": fit.window[1],
        "E0": sa.E0, "D_E0": sa.D_E0, "d_eff": sa.d_eff,
        "d_eff_rmt": analytics.deff_rmt_estimate(sa.D_E0, fit.gamma_hat), "tau": sa.tau,
        "m2": sa.inputs.m2, "var": sa.inputs.var, "sigma_z1_de": fit.obar,
        "initial_state": init.variant if init.variant != "basis_eigenstate" else f"basis_eigenstate:{init.index}",
    }
    rep = analytics.regime_report(times, exact, fit.gamma_hat, sa.tau)
    for name in ("early", "linear", "late"):
        r = getattr(rep, name)
        derived[f"slope_{name}"] = r.slope if r else float("nan")
        derived[f"prefactor_{name}"] = r.prefactor if r else float("nan")
    if cfg.sweep_probe_time is not None:
        derived["F_Q_probe"] = qfi.qfi_exact(sa.ctx, cfg.sweep_probe_time)
        derived["F_Q_rmt_probe"] = analytics.qfi_rmt(sa.inputs, cfg.sweep_probe_time)
    return RealizationResult(index=k, table=table, derived=derived,
                             extra_tables={"relaxation": sa.relaxation, "dos": sa.dos})


def two_spin_ratio(cfg: ExperimentConfig, k: int) -> RealizationResult:
    shared = cfg.model
    distinct = shared.with_(couplings=cfg.distinct_couplings)
    pattern = antiferromagnetic_pattern(shared, bath_first="u")
    init = cfg.initial_state or InitialStateKind("product", pattern=pattern)
    psi0 = init.build(shared, h0_eigensystem(shared) if init.variant == "basis_eigenstate" else None)
    times_cache = None
    table: dict[str, np.ndarray] = {}
    derived: dict[str, float] = {}
    zz = system_observable_diagonal(shared, "z1z2")
    for label, spec in (("shared", shared), ("distinct", distinct)):
        sa = analyze_spin(spec, psi0, cfg)
        if times_cache is None:
            times_cache = cfg.times.resolve(sa.gamma_fit.gamma_hat)
            table["t"] = times_cache
        t = times_cache
        f_pair = qfi.qfi_exact(sa.ctx, t)
        singles = []
        for site in ("z1", "z2"):
            ctx_s = qfi.EvolutionContext.from_states(sa.eig, psi0, system_observable(spec, site))
            singles.append(qfi.qfi_exact(ctx_s, t))
        f_sum = singles[0] + singles[1]
        p = np.abs(sa.ctx.a0) ** 2
        zz_de = float(np.sum(p * qfi.eigenstate_expectations(sa.eig, zz)))
        g = sa.gamma_fit.gamma_hat
        f_sql_rmt = analytics.qfi_rmt(analytics.RmtPredictionInputs(g, 1.0 / sa.D_E0, 2.0, 2.0), t)
        table[f"F_Q_{label}"] = f_pair
        table[f"F_Q_single_sum_{label}"] = f_sum
        table[f"ratio_single_sum_{label}"] = f_pair / np.where(f_sum > 0, f_sum, np.nan)
        table[f"F_Q_rmt_{label}"] = analytics.two_spin_prediction(f_sql_rmt, float(np.clip(zz_de, -1, 1)), g,
                                                                    sa.D_E0, t)
        table[f"zz_{label}"] = qfi.diagonal_observable_evolution(sa.ctx, zz, t)
        derived.update({f"zz_de_{label}": zz_de, f"gamma_hat_{label}": g, f"D_E0_{label}": sa.D_E0,
                        f"E0_{label}": sa.E0, f"tau_{label}": sa.tau, f"d_eff_{label}": sa.d_eff})
    table["ratio_shared_over_distinct"] = table["F_Q_shared"] / np.where(table["F_Q_distinct"] > 0,
                                                                         table["F_Q_distinct"], np.nan)
    return RealizationResult(index=k, table=table, derived=derived)
