import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from rmtqfi import qfi
from rmtqfi.linalg import EigenSystem, eigh, to_eigenbasis
from rmtqfi.qfi import EvolutionContext
from rmtqfi.rmt import RmtModelSpec, build_deutsch_hamiltonian, realization_rng

from conftest import random_symmetric


def two_level_dephasing():
    """H = lambda diag(1, 2) at lambda = 1, state (|0> + |1>)/sqrt 2."""
    es = eigh(np.diag([1.0, 2.0]))
    psi = np.array([1.0, 1.0]) / np.sqrt(2)
    return es, psi, np.diag([1.0, 2.0])


def random_context(seed, n, degenerate=False):
    rng = np.random.default_rng(seed)
    h = random_symmetric(rng, n)
    if degenerate:
        e = np.round(rng.normal(size=n), 1)
        q = np.linalg.qr(rng.normal(size=(n, n)))[0]
        h = (q * e) @ q.T
        h = (h + h.T) / 2
    es = eigh(h)
    psi = rng.normal(size=n) + 1j * rng.normal(size=n)
    psi /= np.linalg.norm(psi)
    return EvolutionContext.from_states(es, psi, random_symmetric(rng, n)), h


@pytest.fixture(scope="module")
def rmt200():
    spec = RmtModelSpec.from_width_ratio(200, 5.0, seed=42)
    _, h = build_deutsch_hamiltonian(spec, realization_rng(spec.seed, 0))
    h0p = np.diag(np.arange(1, 201, dtype=float))
    psi = np.zeros(200)
    psi[99] = 1.0
    es = eigh(h)
    return {"spec": spec, "h": h, "h0p": h0p, "psi": psi, "eig": es,
            "ctx": EvolutionContext.from_states(es, psi, h0p)}


def test_evolve_state_examples():
    es = eigh(np.diag([0.0, 1.0]))
    ctx = EvolutionContext(es, np.array([1.0, 1.0]) / np.sqrt(2), np.zeros((2, 2)))
    assert np.array_equal(qfi.evolve_state(ctx, 0.0), ctx.a0)
    out = qfi.evolve_state(ctx, np.pi)
    expected = np.array([1.0, -1.0]) / np.sqrt(2)
    phase = out[0] / expected[0]
    assert abs(abs(phase) - 1) < 1e-15
    assert np.allclose(out, phase * expected, atol=1e-15)


def test_norm_conserved(rmt200):
    assert abs(np.linalg.norm(qfi.evolve_state(rmt200["ctx"], 1e4)) - 1) < 1e-12


def test_context_validation():
    es = eigh(np.diag([0.0, 1.0]))
    with pytest.raises(ValueError):
        EvolutionContext(es, np.array([1.0, 1.0]), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        EvolutionContext(es, np.array([1.0, 0.0]), np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        EvolutionContext(es, np.array([1.0, 0.0, 0.0]), np.zeros((2, 2)))


def test_kernel_at_zero_and_pure_dephasing():
    rng = np.random.default_rng(0)
    e = np.sort(rng.normal(size=5))
    es = EigenSystem(e, np.eye(5))
    a0 = rng.normal(size=5) + 0j
    a0 /= np.linalg.norm(a0)
    d = rng.normal(size=5)
    ctx = EvolutionContext(es, a0, np.diag(d))
    assert np.array_equal(qfi.derivative_kernel(ctx, 0.0), np.zeros((5, 5)))
    t = 2.7
    k = qfi.derivative_kernel(ctx, t)
    assert np.allclose(k, np.diag(-1j * t * d), atol=1e-15)
    p = np.abs(a0) ** 2
    var = np.sum(p * d * d) - np.sum(p * d) ** 2
    assert np.isclose(qfi.qfi_exact(ctx, t), 4 * t * t * var, rtol=1e-12)


def test_kernel_against_quadrature():
    """K from the integral representation of d/dlambda exp(-iHt), by Gauss-Legendre in the original basis."""
    rng = np.random.default_rng(7)
    h = random_symmetric(rng, 6)
    hp = random_symmetric(rng, 6)
    es = eigh(h)
    t = 1.3
    x, w = np.polynomial.legendre.leggauss(60)
    s = 0.5 * (x + 1)
    w = 0.5 * w
    integral = sum(wi * scipy.linalg.expm(-1j * h * t) @ scipy.linalg.expm(1j * h * t * si) @ hp
                   @ scipy.linalg.expm(-1j * h * t * si) for si, wi in zip(s, w))
    k_ref = es.eigenvectors.T @ scipy.linalg.expm(1j * h * t) @ (-1j * t * integral) @ es.eigenvectors
    ctx = EvolutionContext(es, np.eye(6)[0].astype(complex), to_eigenbasis(hp, es))
    assert np.max(np.abs(qfi.derivative_kernel(ctx, t) - k_ref)) < 1e-8


def test_derivative_state_against_matrix_exponential_difference():
    rng = np.random.default_rng(8)
    h = random_symmetric(rng, 8)
    hp = random_symmetric(rng, 8)
    psi = rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    t, d = 3.0, 1e-5
    es = eigh(h)
    ctx = EvolutionContext.from_states(es, psi, hp)
    fd = (scipy.linalg.expm(-1j * (h + d * hp) * t) @ psi - scipy.linalg.expm(-1j * (h - d * hp) * t) @ psi) / (2 * d)
    _, dpsi = ctx.state_and_derivative(t)
    assert np.allclose(es.eigenvectors @ dpsi, fd, atol=1e-8)


def test_two_level_qfi():
    es, psi, hp = two_level_dephasing()
    ctx = EvolutionContext.from_states(es, psi, hp)
    assert qfi.qfi_exact(ctx, 0.0) == 0.0
    for t in (0.1, 1.0, 17.0):
        assert np.isclose(qfi.qfi_exact(ctx, t), t * t, rtol=1e-12)


def test_short_time_limit_is_initial_variance(rmt200):
    psi = np.zeros(200)
    psi[[90, 99, 120]] = [0.6, 0.64, 0.48]
    ctx = EvolutionContext.from_states(rmt200["eig"], psi, rmt200["h0p"])
    a = ctx.h0_prime_eig
    c = ctx.a0
    m1 = np.vdot(c, a @ c).real
    m2 = np.vdot(a @ c, a @ c).real
    t = 1e-3
    assert abs(qfi.qfi_exact(ctx, t) / (4 * t * t) / (m2 - m1 * m1) - 1) < 0.01


@given(st.integers(2, 32), st.integers(0, 2**32 - 1), st.floats(0.0, 50.0))
def test_kernel_qfi_equals_triple_sum(n, seed, t):
    ctx, _ = random_context(seed, n)
    ref = qfi.qfi_triple_sum(ctx, t)
    assert abs(qfi.qfi_exact(ctx, t) - ref) <= 1e-9 * max(1.0, abs(ref))


@given(st.integers(2, 40), st.integers(0, 2**32 - 1), st.floats(0.0, 1e4), st.booleans())
def test_qfi_nonnegative_and_paths_agree(n, seed, t, degenerate):
    ctx, _ = random_context(seed, n, degenerate)
    f = qfi.qfi_exact(ctx, t)
    assert f >= -1e-8
    k = qfi.derivative_kernel(ctx, t)
    u = ctx.derivative_amplitudes(t)
    ref = k @ ctx.a0
    assert np.max(np.abs(u - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))


def test_factorized_path_matches_direct_on_large_times(rmt200):
    ctx = rmt200["ctx"]
    for t in (0.5, 3.0, 40.0, 900.0):
        ref = qfi.derivative_kernel(ctx, t) @ ctx.a0
        assert np.max(np.abs(ctx.derivative_amplitudes(t) - ref)) < 1e-9 * np.max(np.abs(ref))


def test_fidelity_oracle_examples():
    es, psi, hp = two_level_dephasing()
    es_d = eigh(np.diag([1.0, 2.0]) * (1 + 1e-5))
    for t in (0.5, 2.0, 10.0):
        assert abs(qfi.qfi_fidelity_oracle(es, es_d, psi, t, 1e-5) / (t * t) - 1) < 1e-3
    assert qfi.qfi_fidelity_oracle(es, es, psi, 3.0, 1e-5) == 0.0
    with pytest.raises(ValueError):
        qfi.qfi_fidelity_oracle(es, es_d, psi, 1.0, 0.0)


def test_fidelity_oracle_matches_rmt_instance(rmt200):
    r = rmt200
    delta = qfi.default_fidelity_step(r["h0p"], r["eig"])
    es_d = eigh(r["h"] + delta * r["h0p"])
    es_h = eigh(r["h"] + 0.5 * delta * r["h0p"])
    g = r["spec"].gamma
    for gt in np.geomspace(0.1, 10, 8):
        t = gt / g
        exact = qfi.qfi_exact(r["ctx"], t)
        full = qfi.qfi_fidelity_oracle(r["eig"], es_d, r["psi"], t, delta)
        half = qfi.qfi_fidelity_oracle(r["eig"], es_h, r["psi"], t, 0.5 * delta)
        assert abs(full / exact - 1) < 5e-3
        assert abs(half / full - 1) < 1e-3


def test_observable_evolution_basics(rmt200):
    ctx = rmt200["ctx"]
    n = ctx.dim
    assert np.allclose(qfi.observable_evolution(ctx, np.eye(n), [0.0, 3.0, 1e3]), 1.0, atol=1e-12)
    o = ctx.h0_prime_eig
    assert np.isclose(qfi.observable_evolution(ctx, o, 0.0), np.vdot(ctx.a0, o @ ctx.a0).real)
    # anything diagonal in the eigenbasis is conserved
    cons = np.diag(np.cos(ctx.energies))
    vals = qfi.observable_evolution(ctx, cons, np.geomspace(1e-2, 1e4, 20))
    assert np.ptp(vals) < 1e-10


def test_long_time_average_is_diagonal_ensemble(rmt200):
    ctx = rmt200["ctx"]
    g = rmt200["spec"].gamma
    big_t = 200 / g
    ts = np.linspace(big_t, 2 * big_t, 400)
    series = qfi.observable_evolution(ctx, ctx.h0_prime_eig, ts)
    de = qfi.diagonal_ensemble_average(ctx.a0, ctx.h0_prime_eig)
    spread = np.sqrt(np.sum(np.abs(ctx.a0) ** 2 * np.diag(ctx.h0_prime_eig) ** 2) - de * de)
    d_eff = qfi.effective_dimension(ctx.a0)
    assert abs(series.mean() - de) <= spread / np.sqrt(d_eff)


def test_diagonal_observable_helpers_match_general(rmt200):
    ctx = rmt200["ctx"]
    d = np.arange(1, 201, dtype=float) ** 0.5
    o_eig = to_eigenbasis(np.diag(d), ctx.eig)
    ts = [0.0, 1.0, 50.0]
    assert np.allclose(qfi.diagonal_observable_evolution(ctx, d, ts), qfi.observable_evolution(ctx, o_eig, ts),
                       atol=1e-11)
    assert np.allclose(qfi.eigenstate_expectations(ctx.eig, d), np.diag(o_eig), atol=1e-12)


def test_diagonal_ensemble_and_effective_dimension():
    n = 16
    a = np.zeros(n, dtype=complex)
    a[3] = 1.0
    o = np.diag(np.arange(n, dtype=float))
    assert qfi.diagonal_ensemble_average(a, np.eye(n)) == 1.0
    assert qfi.diagonal_ensemble_average(a, o) == 3.0
    assert qfi.effective_dimension(a) == 1.0
    uni = np.full(n, 1 / np.sqrt(n))
    assert np.isclose(qfi.effective_dimension(uni), n)


def test_effective_dimension_vs_rmt_estimate():
    spec = RmtModelSpec.from_width_ratio(500, 10.0, seed=3)
    vals = []
    for k in range(3):
        _, h = build_deutsch_hamiltonian(spec, realization_rng(spec.seed, k))
        vals.append(qfi.effective_dimension(eigh(h).eigenvectors[249, :]))
    est = 2 * np.pi / 3 * spec.gamma / spec.omega
    assert 0.5 <= np.mean(vals) / est <= 2.0


def test_early_growth_is_monotone(rmt200):
    ts = np.linspace(0, 0.1 / rmt200["spec"].gamma, 40)
    f = qfi.qfi_exact(rmt200["ctx"], ts)
    assert f[0] <= 1e-10
    assert np.all(np.diff(f) >= 0)


def test_sinc_series_branch_is_continuous():
    x = np.array([1e-4 * (1 - 1e-12), 1e-4 * (1 + 1e-12), 0.0, 5e-5])
    s = qfi.sinc(x)
    assert abs(s[0] - s[1]) < 1e-15
    assert s[2] == 1.0
    assert np.isclose(s[3], np.sin(5e-5) / 5e-5, rtol=1e-15)


def test_qfi_series_columns():
    series = qfi.QfiSeries(times=np.array([0.0, 1.0]), qfi_exact=np.array([0.0, 2.0]), cfi_sld=np.array([0.0, 2.0]))
    assert list(series.columns()) == ["t", "F_Q_exact", "CFI_sld"]


def test_time_aware_fidelity_step():
    es = eigh(np.diag([1.0, 2.0, 4.0]))
    hp = np.diag([1.0, -2.0, 0.5])
    d0 = qfi.default_fidelity_step(hp, es)
    assert qfi.fidelity_step_for_time(hp, es, 0.0) == d0
    assert qfi.fidelity_step_for_time(hp, es, 1e-3) == d0
    assert np.isclose(qfi.fidelity_step_for_time(hp, es, 1e6), 1e-3 / (1e6 * 2.0))


def test_late_time_fidelity_with_capped_step(rmt200):
    """At Gamma t = 1e3 the capped step keeps the infidelity in the quadratic regime."""
    r = rmt200
    t = 1e3 / r["spec"].gamma
    exact = qfi.qfi_exact(r["ctx"], t)
    d = qfi.fidelity_step_for_time(r["h0p"], r["eig"], t)
    capped = qfi.qfi_fidelity_oracle(r["eig"], eigh(r["h"] + d * r["h0p"]), r["psi"], t, d)
    assert abs(capped / exact - 1) < 5e-3


@given(st.integers(2, 24), st.integers(0, 2**32 - 1), st.floats(0.0, 100.0), st.floats(-50.0, 50.0))
def test_qfi_invariant_under_generator_shift(n, seed, t, c):
    """Adding c * identity to dH/dlambda only adds a global phase to the state."""
    rng = np.random.default_rng(seed)
    es = eigh(random_symmetric(rng, n))
    psi = rng.normal(size=n)
    psi /= np.linalg.norm(psi)
    hp = random_symmetric(rng, n)
    f = qfi.qfi_exact(EvolutionContext.from_states(es, psi, hp), t)
    g = qfi.qfi_exact(EvolutionContext.from_states(es, psi, hp + c * np.eye(n)), t)
    assert abs(f - g) <= 1e-8 * max(1.0, f) * (1 + abs(c)) ** 2
