"""Structural properties of the discretisation, spectra, costs and optimisers."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spo.config import parse_config, resolve, PRESETS
from spo.costs import IndicatorH, eval_cost_g, eval_cost_h, gap_cost, indicator_cost, jth_cost, power_cost
from spo.grid import (
    PotentialField,
    SupportRegion,
    build_domain,
    build_hamiltonian,
    delta_family,
    from_function,
    lp_norm_p,
    project_support,
    random_bump,
    square_well,
)
from spo.inequalities import ConstantsRegistry, clr_ratio, keller_ratio, lt_ratio
from spo.optimize import (
    AdmissibleSet,
    OptimizerConfig,
    anneal_chains,
    brute_force,
    projected_descent,
    random_feasible,
)
from spo.spectrum import (
    EigenvalueMeasure,
    PhiSequence,
    cluster_multiplicities,
    count_below,
    negative_eigenpairs,
    phi_map,
    spectrum_from_values,
)

TAU = -1e-3


def _spec(V, **kw):
    return negative_eigenpairs(build_hamiltonian(V, V.domain), kw.pop("tau", TAU), **kw)


# --------------------------------------------------------------------------- grid

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_support_projection_is_idempotent(seed):
    dom = build_domain(1, 4.0, 63)
    K = SupportRegion.interval(-1.5, 0.5)
    vals = np.random.default_rng(seed).normal(size=dom.shape)
    once = project_support(vals, K, dom)
    twice = project_support(once, K)
    assert np.array_equal(once.values, twice.values)


def test_stencil_symmetry_is_exact():
    for d, n in ((1, 31), (2, 16), (3, 9)):
        dom = build_domain(d, 2.0, n)
        K = SupportRegion.interval(-1.0, 1.0, d=d)
        A = build_hamiltonian(random_bump(dom, K, 1), dom).sparse()
        assert (A != A.T).nnz == 0


def test_quadrature_converges_at_least_first_order():
    K = SupportRegion.interval(-1.0, 1.0)

    def bump(x):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(np.abs(x) < 1, -np.exp(-1.0 / np.maximum(1 - x**2, 1e-300)), 0.0)

    ref = lp_norm_p(from_function(build_domain(1, 2.0, 2**16 - 1), K, bump), 1.5)
    errs = [abs(lp_norm_p(from_function(build_domain(1, 2.0, 2**k - 1), K, bump), 1.5) - ref) for k in (5, 6, 7, 8)]
    assert all(b <= a / 1.9 for a, b in zip(errs, errs[1:]))


# ----------------------------------------------------------------------- spectrum

def test_oracle_equivalence_small_2d():
    dom = build_domain(2, 3.0, 20)
    K = SupportRegion.interval(-1.0, 1.0, d=2)
    for seed in range(4):
        V = random_bump(dom, K, seed, depth_range=(5.0, 20.0))
        s = _spec(V, with_vectors=False)
        ref = np.linalg.eigvalsh(build_hamiltonian(V, dom).dense())
        ref = ref[ref < TAU]
        assert len(s) == len(ref) == count_below(build_hamiltonian(V, dom), TAU)
        assert np.allclose(s.eigenvalues, ref, rtol=1e-10, atol=0)


def test_eigenvectors_orthonormal():
    dom = build_domain(2, 3.0, 30)
    K = SupportRegion.interval(-1.0, 1.0, d=2)
    s = _spec(square_well(dom, K, 10.0, 1.0, cell_average=False))
    U = s.eigenvectors.reshape(len(s), -1)
    G = U @ U.T * dom.cell_volume
    assert np.allclose(G, np.eye(len(s)), atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), bump=st.floats(0.0, 3.0))
def test_min_max_monotonicity(seed, bump):
    dom = build_domain(1, 4.0, 63)
    K = SupportRegion.interval(-1.0, 1.0)
    V = random_bump(dom, K, seed)
    extra = np.where(V.mask, bump * np.random.default_rng(seed).random(dom.shape), 0.0)
    W = V.with_values(V.values + extra)  # V <= W
    lv, lw = _spec(V, with_vectors=False).eigenvalues, _spec(W, with_vectors=False).eigenvalues
    assert len(lw) <= len(lv)
    assert np.all(lv[: len(lw)] <= lw)


def test_translation_by_whole_cells():
    # every bound state must decay fast enough that the walls are invisible at 1e-12
    dom = build_domain(1, 8.0, 511)
    K = SupportRegion.interval(-2.0, 2.0)
    base = np.where(np.abs(dom.axis()) <= 0.1, -200.0, 0.0)
    V = PotentialField(base, dom, K)
    W = PotentialField(np.roll(base, 10), dom, K)
    a, b = _spec(V, with_vectors=False).eigenvalues, _spec(W, with_vectors=False).eigenvalues
    assert len(a) == len(b)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_clr_mass_bounded_in_three_dimensions():
    dom = build_domain(3, 3.0, 12)
    K = SupportRegion.interval(-1.0, 1.0, d=3)
    reg = ConstantsRegistry.default()
    ratios = []
    for depth in np.linspace(5.0, 50.0, 10):
        V = square_well(dom, K, depth, 1.0, cell_average=False)
        s = _spec(V, with_vectors=False)
        assert cluster_multiplicities(s).mass == len(s)
        ratios.append(clr_ratio(V, s, 1.5, reg).ratio)
    assert max(ratios) <= reg.get("CLR", 1.5, 3)
    assert min(r for r in ratios if r > 0) > 0


# -------------------------------------------------------------------------- costs

def test_multiplicity_is_a_repetition_count():
    s = spectrum_from_values(np.array([-1.0, -0.5, -0.5 + 1e-9, -0.5 + 2e-9, -0.5 + 3e-9, -0.3]), TAU, 0.1, 1)
    mu = cluster_multiplicities(s)
    assert list(mu.weights) == [1, 4, 1]
    flat = EigenvalueMeasure(mu.expanded(), np.ones(mu.mass, dtype=int))
    dom = build_domain(1, 4.0, 63)
    V = square_well(dom, SupportRegion.interval(-1.0, 1.0), 1.0, 1.0)
    for spec in (power_cost(0.1, 1.5, 1), indicator_cost(-0.6, -0.2, 0.1, 1.5, 1)):
        assert eval_cost_h(spec, V, mu) == eval_cost_h(spec, V, flat)


def test_zero_potential_baseline():
    dom = build_domain(1, 4.0, 63)
    K = SupportRegion.interval(-1.0, 1.0)
    V = PotentialField.zeros(dom, K)
    s = _spec(V)
    assert eval_cost_h(power_cost(0.1, 1.5, 1), V, cluster_multiplicities(s)) == 0.0
    assert eval_cost_h(indicator_cost(-0.6, -0.2, 0.1, 1.5, 1), V, cluster_multiplicities(s)) == 0.0
    for spec in (jth_cost(1, 2, 0.1, 1.5, 1), gap_cost(3, 0.1, 1.5, 1)):
        assert eval_cost_g(spec, V, phi_map(s, spec.N)) == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gap_convention(seed):
    dom = build_domain(1, 4.0, 63)
    V = random_bump(dom, SupportRegion.interval(-1.0, 1.0), seed)
    s = _spec(V, with_vectors=False)
    phi = phi_map(s, 2)
    g = gap_cost(2, 0.1, 1.5, 1).g
    assert g(phi.values) <= 0
    if len(s) == 1:
        assert g(phi.values) == s.eigenvalues[0]


# -------------------------------------------------------------------- inequalities

@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), cut=st.floats(0.0, 1.0))
def test_cutoff_monotonicity(seed, cut):
    dom = build_domain(1, 4.0, 63)
    V = random_bump(dom, SupportRegion.interval(-1.0, 1.0), seed)
    s = _spec(V, with_vectors=False)
    if len(s) == 0:
        return
    strict = TAU - cut * (TAU - s.eigenvalues[0])
    loose = lt_ratio(V, cluster_multiplicities(s), 1.5).ratio
    tight = lt_ratio(V, cluster_multiplicities(s.below(strict)), 1.5).ratio
    assert tight <= loose
    assert keller_ratio(V, s, 1.5).ratio <= loose


def test_delta_family_keller_ratio_stabilises():
    dom = build_domain(1, 8.0, 1023)
    K = SupportRegion.interval(-1.0, 1.0)
    r = []
    for eps in (0.05, 0.025):
        V = delta_family(dom, K, eps)
        r.append(keller_ratio(V, _spec(V, with_vectors=False), 1.0).ratio)
    assert abs(r[1] - r[0]) / r[0] < 0.02


# ---------------------------------------------------------------------- optimise

@pytest.mark.parametrize("aset_kw", [dict(lo=-1.0, hi=0.0, nonpositive=True), dict(rho=1.0, p=1.5, nonpositive=True),
                                     dict(lo=-2.0, hi=1.0, rho=0.5, p=1.5)])
def test_every_iterate_is_feasible(aset_kw):
    dom = build_domain(1, 4.0, 63)
    K = SupportRegion.interval(-1.0, 1.0)
    aset = AdmissibleSet(K, **aset_kw)
    rec = projected_descent(jth_cost(1, 2, 0.05, 1.5, 1), aset, random_feasible(aset, dom, 2),
                            OptimizerConfig(max_iter=30))
    assert all(row["feasibility"] <= 1e-12 for row in rec.trace)
    best = [row["best_objective"] for row in rec.trace]
    assert all(b <= a for a, b in zip(best, best[1:]))


def test_annealing_never_beats_brute_force():
    dom = build_domain(1, 8.0, 127)
    K = SupportRegion.interval(-1.0, 1.0)
    aset = AdmissibleSet(K, lo=-1.0, hi=1.0)
    spec = indicator_cost(-0.6, -0.2, 1e-3, 1.5, 1)
    cfg = OptimizerConfig(method="annealing", cells=6, steps=300, tau_neg=TAU)
    bf = brute_force(spec, aset, 6, dom, cfg)
    for rec in anneal_chains(spec, aset, dom, cfg, range(8)):
        assert rec.best_objective >= bf.best_objective - 1e-9 * max(1.0, abs(bf.best_objective))


@pytest.mark.parametrize("preset", PRESETS)
def test_resolved_config_has_no_open_defaults(preset):
    cfg = resolve(parse_config({"preset": preset})).model_dump()
    for block in ("optimizer", "spectrum", "ratios", "domain", "support"):
        assert None not in (v for k, v in cfg[block].items() if k != "step0")
    assert cfg["cost"]["M"] is not None and cfg["cost"]["c"] is not None
    assert cfg["seed"] is not None
