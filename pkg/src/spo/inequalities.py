"""Empirical CLR / Lieb-Thirring / Keller ratios and the constants registry.

Each ratio divides the spectral side of an inequality by the matching
integral of the negative part of V, using the same node-wise Riemann sum as
the cost functionals.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, NoBoundState, NotApplicable
from .grid import PotentialField
from .spectrum import EigenvalueMeasure, NegativeSpectrum

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

CONSTANTS_ENV = "SPO_CONSTANTS"
NAMES = ("CLR", "LT", "Keller")


def keller_constant_1d(p: float) -> float:
    """Sharp one-bound-state constant in d = 1 (optimiser is a sech^2 well).

    With gamma = p - 1/2 the constant is
    (gamma - 1/2)^(gamma - 1/2) Gamma(gamma + 1) / (sqrt(pi) Gamma(gamma + 1/2) (gamma + 1/2)^(gamma + 1/2)).
    """
    g = p - 0.5
    if not g >= 0.5:
        raise DomainError("the one-dimensional Keller constant needs p >= 1")
    a = g - 0.5
    lead = 1.0 if a == 0 else a**a
    return lead * math.gamma(g + 1) / (math.sqrt(math.pi) * math.gamma(g + 0.5) * (g + 0.5) ** (g + 0.5))


def classical_lt_constant(gamma: float, d: int) -> float:
    """Semiclassical constant Gamma(gamma+1) / (2^d pi^(d/2) Gamma(gamma+1+d/2))."""
    return math.gamma(gamma + 1) / (2**d * math.pi ** (d / 2) * math.gamma(gamma + 1 + d / 2))


@dataclass(frozen=True)
class Constant:
    value: float
    source: str


def _key(name: str, exponent: float, d: int) -> tuple[str, float, int]:
    if name not in NAMES:
        raise KeyError(f"unknown constant family {name!r}; expected one of {NAMES}")
    return (name, float(exponent), int(d))


def _default_entries() -> dict[tuple[str, float, int], Constant]:
    lit = "external literature"
    fhjn = 1.456  # L_{gamma,d} <= 1.456 L^cl_{gamma,d} for gamma >= 1 (Frank-Hundertmark-Jex-Nam)
    return {
        ("LT", 1.0, 1): Constant(0.5, f"{lit}: sharp, Hundertmark-Lieb-Thomas (gamma=1/2)"),
        ("LT", 1.5, 1): Constant(fhjn * classical_lt_constant(1.0, 1),
                                 f"{lit}: upper bound 1.456*L^cl (gamma=1); sharp value unknown, >= Keller 0.2450"),
        ("LT", 2.0, 1): Constant(3 / 16, f"{lit}: sharp, Lieb-Thirring / Aizenman-Lieb (gamma=3/2)"),
        ("LT", 2.0, 2): Constant(fhjn * classical_lt_constant(1.0, 2), f"{lit}: upper bound 1.456*L^cl (gamma=1)"),
        ("LT", 2.5, 3): Constant(fhjn * classical_lt_constant(1.0, 3), f"{lit}: upper bound 1.456*L^cl (gamma=1)"),
        ("Keller", 1.0, 1): Constant(keller_constant_1d(1.0), f"{lit}: sharp one-bound-state constant (Keller)"),
        ("Keller", 1.5, 1): Constant(keller_constant_1d(1.5), f"{lit}: sharp one-bound-state constant (Keller)"),
        ("Keller", 2.0, 1): Constant(keller_constant_1d(2.0), f"{lit}: sharp one-bound-state constant (Keller)"),
        ("CLR", 1.5, 3): Constant(0.1156, f"{lit}: Lieb's CLR constant"),
    }


class ConstantsRegistry:
    """Read-only map (family, exponent, d) -> Constant."""

    def __init__(self, entries: dict | None = None):
        self._entries: dict[tuple[str, float, int], Constant] = {}
        for (name, e, d), c in (entries or {}).items():
            if not isinstance(c, Constant):
                c = Constant(float(c), "user-supplied")
            if not c.value > 0:
                raise DomainError(f"constant {name}.{e}.{d} must be positive, got {c.value}")
            self._entries[_key(name, e, d)] = c

    @classmethod
    def default(cls) -> "ConstantsRegistry":
        return cls(_default_entries())

    @classmethod
    def from_environment(cls) -> "ConstantsRegistry":
        path = os.environ.get(CONSTANTS_ENV)
        return cls.load(path) if path else cls.default()

    @classmethod
    def load(cls, path: str | Path, base: "ConstantsRegistry | None" = None) -> "ConstantsRegistry":
        """Load ``[constants]`` entries, overriding ``base`` (default registry).

        Accepted forms::

            [constants]
            "LT.1.5.1" = 0.1875
            "Keller.1.1" = { value = 0.5, source = "..." }
        """
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        table = data.get("constants")
        if not isinstance(table, dict):
            raise DomainError(f"{path}: missing [constants] table")
        entries = dict((base or cls.default())._entries)
        for raw, spec in table.items():
            name, e, d = _parse_key(raw)
            if isinstance(spec, dict):
                c = Constant(float(spec["value"]), str(spec.get("source", "user-supplied")))
            else:
                c = Constant(float(spec), "user-supplied")
            entries[(name, e, d)] = c
        return cls(entries)

    def with_constant(self, name: str, exponent: float, d: int, value: float, source: str = "user-supplied"):
        entries = dict(self._entries)
        entries[_key(name, exponent, d)] = Constant(float(value), source)
        return ConstantsRegistry(entries)

    def lookup(self, name: str, exponent: float, d: int) -> Constant | None:
        return self._entries.get(_key(name, exponent, d))

    def get(self, name: str, exponent: float, d: int) -> float | None:
        c = self.lookup(name, exponent, d)
        return None if c is None else c.value

    def items(self):
        return sorted(self._entries.items())

    def dumps(self) -> str:
        lines = ["[constants]"]
        for (name, e, d), c in self.items():
            lines.append(f'"{name}.{e:g}.{d}" = {{ value = {c.value!r}, source = {json.dumps(c.source)} }}')
        return "\n".join(lines) + "\n"


def _parse_key(raw: str) -> tuple[str, float, int]:
    name, _, rest = raw.partition(".")
    exp, _, d = rest.rpartition(".")
    try:
        return _key(name, float(exp), int(d))
    except ValueError as exc:
        raise DomainError(f"bad constant key {raw!r}; expected NAME.EXPONENT.D") from exc


@dataclass(frozen=True)
class RatioReport:
    name: str
    exponent: float
    d: int
    ratio: float
    numerator: float
    denominator: float
    constant: float | None = None
    source: str | None = None

    @property
    def margin(self) -> float | None:
        return None if self.constant is None else self.constant - self.ratio

    def exceeds(self, slack: float = 0.0) -> bool:
        return self.constant is not None and self.ratio > self.constant * (1 + slack)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["margin"] = self.margin
        return out


def negative_part_norm(V: PotentialField, e: float) -> float:
    """Riemann sum of max(-V, 0)^e."""
    if not e > 0:
        raise DomainError("exponent must be positive")
    return float(np.sum(V.negative_part**e) * V.domain.cell_volume)


def _report(name, e, d, num, den, registry) -> RatioReport:
    if den == 0.0:
        if num != 0.0:
            raise DomainError(f"{name}: spectral side {num} is nonzero but V has no negative part")
        ratio = 0.0
    else:
        ratio = num / den
    c = None if registry is None else registry.lookup(name, e, d)
    return RatioReport(name, float(e), d, ratio, float(num), den,
                       None if c is None else c.value, None if c is None else c.source)


def clr_ratio(V: PotentialField, s: NegativeSpectrum, q: float,
              registry: ConstantsRegistry | None = None) -> RatioReport:
    d = V.domain.d
    if d < 3:
        raise NotApplicable(f"CLR bound holds only for d >= 3 (got d={d})")
    if not q >= d / 2:
        raise DomainError(f"CLR needs q >= d/2, got q={q}")
    return _report("CLR", q, d, float(len(s)), negative_part_norm(V, q), registry)


def lt_ratio(V: PotentialField, mu: EigenvalueMeasure, p: float,
             registry: ConstantsRegistry | None = None) -> RatioReport:
    d = V.domain.d
    if not p > d / 2:
        raise DomainError(f"Lieb-Thirring needs p > d/2, got p={p}")
    num = mu.integrate(lambda t: np.abs(t) ** (p - d / 2))
    return _report("LT", p, d, num, negative_part_norm(V, p), registry)


def keller_ratio(V: PotentialField, lam1: float | NegativeSpectrum, p: float,
                 registry: ConstantsRegistry | None = None) -> RatioReport:
    d = V.domain.d
    if isinstance(lam1, NegativeSpectrum):
        if len(lam1) == 0:
            raise NoBoundState("Keller ratio needs a bound state; the negative spectrum is empty")
        lam1 = float(lam1.eigenvalues[0])
    if lam1 is None or not lam1 < 0:
        raise NoBoundState("Keller ratio needs a negative ground-state energy")
    if not p > d / 2:
        raise DomainError(f"Keller needs p > d/2, got p={p}")
    # same numpy power as the LT sum, so keller <= lt holds bit for bit
    num = float(np.sum(np.abs(np.array([lam1], dtype=float)) ** (p - d / 2)))
    return _report("Keller", p, d, num, negative_part_norm(V, p), registry)
