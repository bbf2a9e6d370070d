import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmtqfi import correlators as cr
from rmtqfi.correlators import CorrelatorRequest
from rmtqfi.rmt import RmtModelSpec, lorentzian, realization_rng, sample_eigensystem

GAMMA, OMEGA = 8.0, 1.0


def lam(mu, alpha, gamma=GAMMA, omega=OMEGA):
    return lorentzian(omega * (mu + 1), omega * (alpha + 1), gamma, omega)


@pytest.fixture(scope="module")
def ensemble():
    """200 realizations at N=300, Gamma/omega=10."""
    spec = RmtModelSpec.from_width_ratio(300, 10.0, seed=11)
    return spec, [sample_eigensystem(spec, realization_rng(spec.seed, k)) for k in range(200)]


def mean_stderr(vals):
    vals = np.asarray(vals)
    return vals.mean(), vals.std(ddof=1) / np.sqrt(vals.size)


def test_four_point_same_examples():
    assert np.isclose(cr.four_point_same(50, 48, 48, 48, 48, GAMMA, OMEGA), 3 * lam(50, 48) ** 2)
    assert np.isclose(cr.four_point_same(50, 48, 53, 48, 53, GAMMA, OMEGA), lam(50, 48) * lam(50, 53))
    assert cr.four_point_same(50, 48, 53, 49, 52, GAMMA, OMEGA) == 0.0


@given(st.lists(st.integers(0, 5), min_size=4, max_size=4))
def test_four_point_same_pair_exchange_symmetry(idx):
    a, b, ap, bp = idx
    ref = cr.four_point_same(3, a, b, ap, bp, 2.0, 1.0)
    # the value depends on the index multiset only through its Wick pairings
    for perm in itertools.permutations((a, b, ap, bp)):
        assert np.isclose(cr.four_point_same(3, *perm, 2.0, 1.0), ref, rtol=1e-14)


@given(st.integers(0, 20), st.integers(0, 20))
def test_four_point_same_positivity(a, b):
    assert cr.four_point_same(10, a, b, a, b, 3.0, 1.0) >= 0


def test_four_point_diff_examples():
    mu, nu = 100, 104
    assert np.isclose(cr.four_point_diff(mu, nu, 98, 103, 98, 103, GAMMA, OMEGA), lam(mu, 98) * lam(nu, 103))
    a, ap = 99, 102
    gauss = cr.four_point_diff(mu, nu, a, a, a, a, GAMMA, OMEGA)
    assert gauss < lam(mu, a) * lam(nu, a)
    pure_correction = cr.four_point_diff(mu, nu, a, a, ap, ap, GAMMA, OMEGA)
    assert pure_correction < 0
    with pytest.raises(ValueError):
        cr.four_point_diff(mu, mu, a, a, a, a, GAMMA, OMEGA)


def test_overlap_sum_closed_form():
    g, w = 5.0, 1.0
    assert np.isclose(cr.overlap_sum(0.0, 0.0, g, w), w / (2 * np.pi * g))
    assert np.isclose(cr.overlap_sum(0.0, 2 * g, g, w), 0.5 * cr.overlap_sum(0.0, 0.0, g, w))


def test_overlap_sum_discrete_vs_continuum():
    g, w = 30.0, 1.0
    e = w * np.arange(1, 20001, dtype=float)
    for sep in (0.0, 10.0, 60.0):
        disc = cr.overlap_sum(10000.0, 10000.0 + sep, g, w, basis_energies=e)
        assert abs(disc / cr.overlap_sum(10000.0, 10000.0 + sep, g, w) - 1) < 0.02


def test_correction_ratio_scaling_with_gamma():
    """Correction over Gaussian term for all-equal indices is 2 Lambda_mu Lambda_nu / S."""
    d, w = 6.0, 1.0

    def closed(g):
        # basis index 0 sits at energy omega
        lm = (w * g / np.pi) / (w * w + g * g)
        ln = (w * g / np.pi) / ((d - w) ** 2 + g * g)
        return 2 * lm * ln / ((2 * w * g / np.pi) / (d * d + 4 * g * g))

    def numeric(g):
        gauss = lorentzian(0.0, w, g, w) * lorentzian(d, w, g, w)
        full = cr.four_point_diff(0, 6, 0, 0, 0, 0, g, w, e_mu=0.0, e_nu=d)
        return (gauss - full) / gauss

    g = 12.0
    assert abs((numeric(g / 2) / numeric(g)) / (closed(g / 2) / closed(g)) - 1) < 0.05


def test_request_properties():
    r = CorrelatorRequest(((5, 3), (5, 3)), 2.0, 1.0)
    assert r.same_state and r.gauge_invariant
    assert np.isclose(r.analytic(), lam(5, 3, 2.0, 1.0))
    odd = CorrelatorRequest(((5, 3),), 2.0, 1.0)
    assert not odd.gauge_invariant
    with pytest.raises(IndexError):
        CorrelatorRequest(((5, 30),), 2.0, 1.0).check_range(10)
    with pytest.raises(ValueError):
        CorrelatorRequest((), 2.0, 1.0)
    with pytest.raises(ValueError):
        CorrelatorRequest(((1, 1),), 0.0, 1.0)
    diff = CorrelatorRequest(((4, 2), (7, 2), (4, 3), (7, 3)), 2.0, 1.0)
    assert not diff.same_state and diff.gauge_invariant
    assert np.isclose(diff.analytic(), cr.four_point_diff(4, 7, 2, 2, 3, 3, 2.0, 1.0))


def test_mc_rejects_few_realizations_and_bad_indices():
    spec = RmtModelSpec.from_width_ratio(40, 5.0, seed=1)
    with pytest.raises(ValueError):
        cr.mc_correlator(spec, [(3, 3), (3, 3)], 5)
    with pytest.raises(IndexError):
        cr.mc_correlator(spec, [(3, 40)], 10)


def test_mc_first_moment_is_zero():
    spec = RmtModelSpec.from_width_ratio(60, 5.0, seed=2)
    est = cr.mc_correlator(spec, [(29, 30)], 40)
    assert not est.gauge_invariant
    assert abs(est.estimate) < 4 * est.stderr


def test_mc_second_moment_is_lorentzian(ensemble):
    spec, ens = ensemble
    mu = 149
    for alpha in (149, 155, 170):
        m, s = mean_stderr([es.eigenvectors[alpha, mu] ** 2 for es in ens])
        assert abs(m - lorentzian(spec.omega * (mu + 1), spec.omega * (alpha + 1), spec.gamma, spec.omega)) < 3 * s


def test_mc_four_point_same(ensemble):
    spec, ens = ensemble
    mu = 149
    for pattern in ((149, 149, 149, 149), (147, 152, 147, 152)):
        req = CorrelatorRequest(tuple((mu, a) for a in pattern), spec.gamma, spec.omega)
        m, s = mean_stderr([req.evaluate(es) for es in ens])
        assert abs(m - req.analytic()) < 3 * s


def test_mc_four_point_diff(ensemble):
    spec, ens = ensemble
    mu, nu, a, b = 149, 152, 150, 151
    req = CorrelatorRequest(((mu, a), (nu, a), (mu, b), (nu, b)), spec.gamma, spec.omega)
    m, s = mean_stderr([req.evaluate(es) for es in ens])
    assert abs(m - req.analytic()) < 3 * s


def test_mc_correlator_wrapper_matches_manual_average():
    spec = RmtModelSpec.from_width_ratio(80, 6.0, seed=5)
    est = cr.mc_correlator(spec, [(39, 39), (39, 39)], 12)
    manual = [sample_eigensystem(spec, realization_rng(spec.seed, k)).eigenvectors[39, 39] ** 2 for k in range(12)]
    assert np.isclose(est.estimate, np.mean(manual), rtol=1e-12)
    mean, err = est
    assert mean == est.estimate and err == est.stderr


def test_non_gaussian_term_reduces_chi2(ensemble):
    """Pooled over alpha != beta the Gaussian model predicts zero; orthogonality forces a negative sum."""
    spec, ens = ensemble
    e = spec.basis_energies
    mu = 149
    chi_gauss = chi_full = 0.0
    for nu in (150, 152, 155, 160, 175):
        m, s = mean_stderr([cr.orthogonality_sum(mu, nu, es) for es in ens])
        full = cr.orthogonality_sum_analytic(mu, nu, spec.gamma, spec.omega, e)
        assert m < 0 and abs(m / full - 1) < 0.2
        chi_gauss += (m / s) ** 2
        chi_full += ((m - full) / s) ** 2
    assert chi_full < chi_gauss


def test_orthogonality_sum_identity(ensemble):
    _, ens = ensemble
    v = ens[0].eigenvectors
    p = v[:, 10] * v[:, 11]
    assert np.isclose(cr.orthogonality_sum(10, 11, ens[0]), -np.sum(p * p), atol=1e-14)
