from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spo.errors import DomainError
from spo.grid import (
    PotentialField,
    SupportRegion,
    build_domain,
    build_hamiltonian,
    cell_overlap,
    delta_family,
    lp_norm_p,
    project_box,
    project_support,
    random_bump,
    retract_lp_ball,
    square_well,
)


def test_nodes_are_interior_and_uniform():
    dom = build_domain(1, 2.0, 15)
    ax = dom.axis()
    assert dom.dx == pytest.approx(0.25)
    assert ax[0] == pytest.approx(-1.75) and ax[-1] == pytest.approx(1.75)
    assert np.allclose(np.diff(ax), dom.dx)


@pytest.mark.parametrize("d,R,n", [(4, 1.0, 10), (1, -1.0, 10), (1, 1.0, 3), (1, 1.0, 10.5), (3, 1.0, 200)])
def test_build_domain_rejects(d, R, n):
    with pytest.raises(DomainError):
        build_domain(d, R, n)


def test_support_must_sit_inside_box():
    dom = build_domain(1, 2.0, 31)
    with pytest.raises(DomainError):
        SupportRegion.interval(-3.0, 1.0).mask(dom)
    with pytest.raises(DomainError):
        SupportRegion((0.0,), (-1.0,))


def test_support_without_nodes_is_rejected():
    dom = build_domain(1, 2.0, 15)  # nodes at multiples of 0.25 offset by 0.0
    with pytest.raises(DomainError, match="no grid node"):
        SupportRegion.interval(0.01, 0.02).mask(dom)


def test_potential_rejects_values_outside_support(dom1, K1):
    vals = np.zeros(dom1.shape)
    vals[0] = -1.0
    with pytest.raises(DomainError):
        PotentialField(vals, dom1, K1)
    with pytest.raises(DomainError):
        PotentialField(np.full(dom1.shape, np.nan), dom1, K1)


def test_potential_is_read_only(dom1, K1):
    V = square_well(dom1, K1, 1.0, 1.0)
    with pytest.raises(ValueError):
        V.values[0] = 3.0


def test_hamiltonian_matches_dense_stencil(dom1, K1):
    V = square_well(dom1, K1, 2.0, 0.5)
    H = build_hamiltonian(V, dom1)
    A = H.dense()
    inv = 1 / dom1.dx**2
    assert np.allclose(np.diag(A), 2 * inv + V.values)
    assert np.allclose(np.diag(A, 1), -inv)
    assert np.allclose(A, A.T)


def test_hamiltonian_2d_is_kron_sum(dom2, K2):
    V = square_well(dom2, K2, 1.0, 0.5, cell_average=False)
    H = build_hamiltonian(V, dom2).sparse()
    assert H.shape == (dom2.size, dom2.size)
    assert abs(H - H.T).max() == 0
    assert np.allclose(H.diagonal(), 4 / dom2.dx**2 + V.values.ravel())
    # five nonzeros per interior row
    assert np.max(np.diff(H.indptr)) == 5


def test_hamiltonian_rejects_mismatched_grid(dom1, K1):
    V = PotentialField.zeros(dom1, K1)
    with pytest.raises(DomainError):
        build_hamiltonian(V, build_domain(1, 4.0, 127))


def test_cell_average_preserves_integral():
    dom = build_domain(1, 8.0, 255)
    K = SupportRegion.interval(-1.0, 1.0)
    V = square_well(dom, K, 1.0, 0.7)
    assert np.sum(V.values) * dom.dx == pytest.approx(-1.4, abs=1e-12)
    for eps in (0.4, 0.1, 0.05):
        W = delta_family(dom, K, eps)
        assert np.sum(W.values) * dom.dx == pytest.approx(-1.0, abs=1e-12)


def test_cell_overlap_full_and_empty():
    dom = build_domain(2, 2.0, 15)
    frac = cell_overlap(dom, (-3.0, -3.0), (3.0, 3.0))
    assert np.allclose(frac, 1.0)
    assert np.allclose(cell_overlap(dom, (5.0, 5.0), (6.0, 6.0)), 0.0)


def test_lp_norm_requires_p_above_half_dimension(dom2, K2):
    V = PotentialField.zeros(dom2, K2)
    with pytest.raises(DomainError):
        lp_norm_p(V, 1.0)


def test_projections(dom1, K1):
    vals = np.linspace(-3, 3, dom1.n)
    V = project_support(vals, K1, dom1)
    assert np.all(V.values[~V.mask] == 0)
    B = project_box(V, -0.5, 0.25)
    assert B.values.min() >= -0.5 and B.values.max() <= 0.25
    with pytest.raises(DomainError):
        project_box(V, 1.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(0.01, 50.0), rho=st.floats(1e-3, 10.0), p=st.sampled_from([0.75, 1.5, 2.0, 3.0]))
def test_lp_retraction_lands_in_ball(scale, rho, p):
    dom = build_domain(1, 4.0, 63)
    K = SupportRegion.interval(-1.0, 1.0)
    V = random_bump(dom, K, 3)
    V = V.with_values(V.values * scale)
    W = retract_lp_ball(V, p, rho)
    assert lp_norm_p(W, p) <= rho
    if lp_norm_p(V, p) > rho:
        assert lp_norm_p(W, p) == pytest.approx(rho, rel=1e-12)
        # radial: direction is unchanged
        assert np.allclose(W.values * np.max(np.abs(V.values)), V.values * np.max(np.abs(W.values)))
    else:
        assert W is V


def test_random_bump_is_seeded_and_nonpositive(dom1, K1):
    a = random_bump(dom1, K1, 7)
    b = random_bump(dom1, K1, 7)
    c = random_bump(dom1, K1, 8)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.values.max() <= 0 and a.values.min() < 0
