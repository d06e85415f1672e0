from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spo.errors import ShiftHitsSpectrum
from spo.grid import PotentialField, SupportRegion, build_domain, build_hamiltonian, random_bump, square_well
from spo.spectrum import (
    NegativeSpectrum,
    cluster_multiplicities,
    count_below,
    count_below_jittered,
    dense_negative_eigenvalues,
    negative_eigenpairs,
    phi_map,
    spectrum_from_values,
    sturm_count,
)


@settings(max_examples=60, deadline=None)
@given(
    diag=st.lists(st.floats(-10, 10), min_size=2, max_size=30),
    seed=st.integers(0, 2**32 - 1),
    theta=st.floats(-12, 12),
)
def test_sturm_count_matches_eigvalsh(diag, seed, theta):
    rng = np.random.default_rng(seed)
    d = np.array(diag)
    e = rng.uniform(-3, 3, len(d) - 1)
    w = np.linalg.eigvalsh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))
    if np.min(np.abs(w - theta)) < 1e-9:
        return
    try:
        assert sturm_count(d, e, theta) == int(np.sum(w < theta))
    except ShiftHitsSpectrum:
        pass


def test_exact_eigenvalue_shift_raises_and_jitter_recovers():
    d = np.array([1.0, 2.0])
    e = np.array([0.0])
    with pytest.raises(ShiftHitsSpectrum):
        sturm_count(d, e, 1.0)
    # n = 9: the middle eigenvalue of the free operator equals the diagonal entry
    dom = build_domain(1, 1.0, 9)
    V = PotentialField.zeros(dom, SupportRegion.interval(-0.5, 0.5))
    H = build_hamiltonian(V, dom)
    with pytest.raises(ShiftHitsSpectrum):
        count_below(H, H.diagonal[0])
    assert count_below_jittered(H, H.diagonal[0]) in (4, 5)


@pytest.mark.parametrize("depth,expected", [(0.5, 0), (3.0, 1), (10.0, 4)])
def test_sparse_inertia_2d_matches_dense(dom2, K2, depth, expected):
    V = square_well(dom2, K2, depth, 1.0, cell_average=False)
    H = build_hamiltonian(V, dom2)
    tau = dom2.default_tau_neg()
    assert count_below(H, tau) == expected
    assert len(dense_negative_eigenvalues(H, tau)) == expected


def test_2d_degenerate_pair_is_one_cluster(dom2, K2):
    V = square_well(dom2, K2, 10.0, 1.0, cell_average=False)
    s = negative_eigenpairs(build_hamiltonian(V, dom2))
    assert np.allclose(s.eigenvalues, [-7.335173, -3.610057, -3.610057, -0.194435], atol=1e-6)
    mu = cluster_multiplicities(s)
    assert list(mu.weights) == [1, 2, 1]
    assert mu.mass == 4
    assert np.array_equal(mu.expanded().shape, (4,))


def test_3d_lanczos_resolves_triplets():
    dom = build_domain(3, 3.0, 20)
    K = SupportRegion.interval(-1.0, 1.0, d=3)
    V = square_well(dom, K, 10.0, 1.0, cell_average=False)
    s = negative_eigenpairs(build_hamiltonian(V, dom), with_vectors=True)
    assert len(s) == 7
    assert list(cluster_multiplicities(s).weights) == [1, 3, 3]
    assert s.eigenvalues[0] == pytest.approx(-6.726717, abs=1e-6)


def test_3d_shallow_well_binds_nothing():
    dom = build_domain(3, 3.0, 20)
    K = SupportRegion.interval(-1.0, 1.0, d=3)
    V = square_well(dom, K, 1.0, 1.0, cell_average=False)
    assert len(negative_eigenpairs(build_hamiltonian(V, dom))) == 0


def test_eigenvectors_are_normalised_and_solve_the_problem(dom1, K1):
    V = random_bump(dom1, K1, 11)
    H = build_hamiltonian(V, dom1)
    s = negative_eigenpairs(H)
    assert len(s) >= 1
    A = H.dense()
    for i, lam in enumerate(s.eigenvalues):
        u = s.eigenvectors[i]
        assert np.sum(u**2) * dom1.dx == pytest.approx(1.0, rel=1e-12)
        assert np.linalg.norm(A @ u - lam * u) * np.sqrt(dom1.dx) < 1e-8 * H.norm_bound()
        assert u[np.argmax(np.abs(u))] > 0
    assert np.all(np.diff(s.eigenvalues) > 0)


def test_k_max_truncates():
    dom = build_domain(1, 8.0, 255)
    V = square_well(dom, SupportRegion.interval(-4.0, 4.0), 1.0, 4.0)
    s = negative_eigenpairs(build_hamiltonian(V, dom), k_max=2)
    assert len(s) == 2 and s.total_below == 3 and s.truncated


def test_zero_potential_has_empty_spectrum(dom1, K1):
    s = negative_eigenpairs(build_hamiltonian(PotentialField.zeros(dom1, K1), dom1))
    assert len(s) == 0
    assert phi_map(s, 3).values == (0.0, 0.0, 0.0)
    assert cluster_multiplicities(s).integrate(np.abs) == 0.0


def test_tau_neg_must_not_be_positive(dom1, K1):
    with pytest.raises(ValueError):
        negative_eigenpairs(build_hamiltonian(PotentialField.zeros(dom1, K1), dom1), tau_neg=0.1)


def test_clustering_chains_close_values():
    s = spectrum_from_values(np.array([-3.0, -2.0, -2.0 + 5e-7, -2.0 + 9e-7, -1.0]), -1e-3, 0.1, 1)
    mu = cluster_multiplicities(s)
    assert list(mu.weights) == [1, 3, 1]
    assert list(mu.cluster_of) == [0, 1, 1, 1, 2]
    assert mu.locations[1] == pytest.approx(-2.0 + 14e-7 / 3)


def test_phi_pads_and_truncates():
    s = spectrum_from_values(np.array([-2.0, -1.0, -0.5]), -1e-3, 0.1, 1)
    assert phi_map(s, 2).values == (-2.0, -1.0)
    assert phi_map(s, 5).values == (-2.0, -1.0, -0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        phi_map(s, 0)


def test_spectrum_below_restricts():
    s = spectrum_from_values(np.array([-2.0, -1.0, -0.5]), -1e-3, 0.1, 1)
    t = s.below(-0.75)
    assert isinstance(t, NegativeSpectrum)
    assert list(t.eigenvalues) == [-2.0, -1.0]
