from __future__ import annotations

import math

import numpy as np
import pytest

from spo.errors import DomainError, NoBoundState, NotApplicable
from spo.grid import PotentialField, SupportRegion, build_domain, build_hamiltonian, square_well
from spo.inequalities import (
    ConstantsRegistry,
    classical_lt_constant,
    clr_ratio,
    keller_constant_1d,
    keller_ratio,
    lt_ratio,
    negative_part_norm,
)
from spo.spectrum import cluster_multiplicities, negative_eigenpairs


def test_keller_constant_closed_form():
    assert keller_constant_1d(1.0) == pytest.approx(0.5)
    assert keller_constant_1d(2.0) == pytest.approx(3 / 16)
    assert keller_constant_1d(1.5) == pytest.approx(0.2450, abs=5e-5)
    with pytest.raises(DomainError):
        keller_constant_1d(0.75)


def test_classical_constant():
    # L^cl_{1,1} = 2 / (3 pi)
    assert classical_lt_constant(1.0, 1) == pytest.approx(2 / (3 * math.pi))
    assert classical_lt_constant(1.5, 1) == pytest.approx(3 / 16)


def test_registry_defaults_and_order():
    reg = ConstantsRegistry.default()
    for p in (1.0, 1.5, 2.0):
        assert reg.get("Keller", p, 1) <= reg.get("LT", p, 1) * (1 + 1e-14)
    assert reg.get("LT", 2.0, 1) == 3 / 16
    assert reg.get("LT", 7.0, 1) is None
    with pytest.raises(KeyError):
        reg.get("Foo", 1.0, 1)


def test_registry_from_file(tmp_path, monkeypatch):
    f = tmp_path / "c.toml"
    f.write_text('[constants]\n"LT.1.5.1" = 0.1875\n"Keller.1.1" = { value = 0.6, source = "test" }\n')
    reg = ConstantsRegistry.load(f)
    assert reg.get("LT", 1.5, 1) == 0.1875
    assert reg.lookup("Keller", 1.0, 1).source == "test"
    assert reg.get("LT", 2.0, 1) == 3 / 16
    monkeypatch.setenv("SPO_CONSTANTS", str(f))
    assert ConstantsRegistry.from_environment().get("LT", 1.5, 1) == 0.1875
    round_trip = tmp_path / "r.toml"
    round_trip.write_text(reg.dumps())
    assert ConstantsRegistry.load(round_trip).items() == reg.items()


@pytest.mark.parametrize("text", ["[other]\nx = 1\n", '[constants]\n"LT.x.1" = 1\n', '[constants]\n"LT.1.5.1" = -1\n'])
def test_registry_rejects_bad_files(tmp_path, text):
    f = tmp_path / "c.toml"
    f.write_text(text)
    with pytest.raises(DomainError):
        ConstantsRegistry.load(f)


def test_ratios_on_square_well(dom1, K1):
    V = square_well(dom1, K1, 1.0, 1.0)
    s = negative_eigenpairs(build_hamiltonian(V, dom1))
    reg = ConstantsRegistry.default()
    lt = lt_ratio(V, cluster_multiplicities(s), 1.5, reg)
    kel = keller_ratio(V, s, 1.5, reg)
    assert lt.numerator == pytest.approx(abs(s.eigenvalues[0]))
    assert lt.denominator == pytest.approx(negative_part_norm(V, 1.5))
    assert kel.ratio <= lt.ratio
    assert lt.margin == pytest.approx(lt.constant - lt.ratio)
    assert not lt.exceeds()
    assert lt.to_dict()["source"]


def test_zero_potential_ratios(dom1, K1):
    V = PotentialField.zeros(dom1, K1)
    s = negative_eigenpairs(build_hamiltonian(V, dom1))
    assert lt_ratio(V, cluster_multiplicities(s), 1.5).ratio == 0.0
    with pytest.raises(NoBoundState):
        keller_ratio(V, s, 1.5)


def test_clr_guard_and_count():
    dom = build_domain(1, 4.0, 63)
    V = PotentialField.zeros(dom, SupportRegion.interval(-1.0, 1.0))
    s = negative_eigenpairs(build_hamiltonian(V, dom))
    with pytest.raises(NotApplicable):
        clr_ratio(V, s, 1.5)
    dom3 = build_domain(3, 3.0, 12)
    K3 = SupportRegion.interval(-1.0, 1.0, d=3)
    V3 = square_well(dom3, K3, 10.0, 1.0, cell_average=False)
    s3 = negative_eigenpairs(build_hamiltonian(V3, dom3))
    rep = clr_ratio(V3, s3, 1.5, ConstantsRegistry.default())
    assert rep.numerator == len(s3)
    assert rep.ratio <= rep.constant
    with pytest.raises(DomainError):
        clr_ratio(V3, s3, 1.0)


def test_negative_part_ignores_positive_values(dom1, K1):
    vals = np.where(K1.mask(dom1), 2.0, 0.0)
    V = PotentialField(vals, dom1, K1)
    assert negative_part_norm(V, 1.5) == 0.0
