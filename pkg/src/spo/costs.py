"""Spectral cost functionals and the existence-hypothesis checker.

Two families are supported:

* ``CostSpecH``: sum over negative eigenvalues (with multiplicity) of h(lambda),
  plus k * int |V|^p.
* ``CostSpecG``: g applied to the first N eigenvalues padded with zeros, plus
  k * int |V|^p.

h and g are drawn from a small registry of lower-semicontinuous forms so that
the hypotheses can actually be checked.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CostSpecError
from .grid import PotentialField, lp_norm_p
from .inequalities import ConstantsRegistry
from .spectrum import EigenvalueMeasure, PhiSequence

DEFAULT_PENALTY_CAP = 1e12


# ----------------------------------------------------------------------------
# h forms
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class IndicatorH:
    """h = -1 on the compact interval E = [lo, hi] with hi < 0, else 0."""

    lo: float
    hi: float
    form = "indicator"

    def __post_init__(self):
        if not (self.lo <= self.hi < 0):
            raise CostSpecError(f"E = [{self.lo}, {self.hi}] must be a compact interval inside (-inf, 0)")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return -((t >= self.lo) & (t <= self.hi)).astype(float)

    def derivative(self, t):
        raise CostSpecError("indicator h is not differentiable; use annealing")

    def negative_part_bound(self, p: float, d: int) -> tuple[float, float]:
        if d == 2:
            # h^- <= c |t|^(p-1) with no additive constant
            return 0.0, max(abs(self.hi) ** -(p - 1), abs(self.lo) ** -(p - 1))
        return 1.0, 0.0


@dataclass(frozen=True)
class PowerH:
    """h(t) = -|t|^gamma, gamma = p - d/2."""

    gamma: float
    form = "power"

    def __post_init__(self):
        if not self.gamma > 0:
            raise CostSpecError("power exponent must be positive")

    def __call__(self, t):
        return -np.abs(np.asarray(t, dtype=float)) ** self.gamma

    def derivative(self, t):
        # d/dt (-(-t)^gamma) = gamma (-t)^(gamma-1) for t < 0
        return self.gamma * np.abs(np.asarray(t, dtype=float)) ** (self.gamma - 1)

    def negative_part_bound(self, p: float, d: int) -> tuple[float, float]:
        return 0.0, 1.0


@dataclass(frozen=True)
class TableH:
    """Piecewise-linear h through (t_i, h_i); repeated t_i encode jumps (lower value kept).

    Constant extrapolation outside the table range.
    """

    ts: tuple[float, ...]
    hs: tuple[float, ...]
    form = "table"

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=float)
        hs = np.asarray(self.hs, dtype=float)
        if ts.ndim != 1 or ts.shape != hs.shape or len(ts) < 2:
            raise CostSpecError("table needs at least two (t, h) points of equal length")
        if np.any(np.diff(ts) < 0):
            raise CostSpecError("table abscissae must be non-decreasing")
        if np.any(np.isnan(hs)) or np.any(hs == -np.inf):
            raise CostSpecError("table values must not be NaN or -inf")

    @property
    def saturated(self) -> bool:
        return bool(np.any(np.asarray(self.hs) > DEFAULT_PENALTY_CAP))

    def __call__(self, t):
        ts = np.asarray(self.ts, dtype=float)
        hs = np.minimum(np.asarray(self.hs, dtype=float), DEFAULT_PENALTY_CAP)
        t = np.asarray(t, dtype=float)
        out = np.interp(t, ts, hs)
        # at a jump take the smaller one-sided value (lower semicontinuity)
        for i in np.flatnonzero(np.diff(ts) == 0):
            out = np.where(t == ts[i], np.minimum(np.minimum(hs[i], hs[i + 1]), out), out)
        return out

    def derivative(self, t):
        ts = np.asarray(self.ts, dtype=float)
        hs = np.minimum(np.asarray(self.hs, dtype=float), DEFAULT_PENALTY_CAP)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        for k, x in enumerate(t):
            i = np.searchsorted(ts, x, side="right") - 1
            if 0 <= i < len(ts) - 1 and ts[i + 1] > ts[i]:
                out[k] = (hs[i + 1] - hs[i]) / (ts[i + 1] - ts[i])
        return out

    def negative_part_bound(self, p: float, d: int) -> tuple[float, float] | None:
        return None


# ----------------------------------------------------------------------------
# g forms (act on the zero-padded sequence, index 0 = ground state)
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class JthG:
    j: int  # 1-based
    form = "jth"

    def __call__(self, lam: Sequence[float]) -> float:
        return float(lam[self.j - 1])

    def gradient_weights(self, N: int) -> np.ndarray:
        w = np.zeros(N)
        w[self.j - 1] = 1.0
        return w


@dataclass(frozen=True)
class GapG:
    """g = lambda_1 - lambda_2 with lambda_2 := 0 when only one bound state exists."""

    form = "gap"

    def __call__(self, lam: Sequence[float]) -> float:
        return float(lam[0] - lam[1]) if len(lam) > 1 else float(lam[0])

    def gradient_weights(self, N: int) -> np.ndarray:
        w = np.zeros(N)
        w[0] = 1.0
        if N > 1:
            w[1] = -1.0
        return w


@dataclass(frozen=True)
class LinearG:
    """g = sum_i w_i lambda_i (componentwise continuous)."""

    weights: tuple[float, ...]
    form = "table"

    def __call__(self, lam: Sequence[float]) -> float:
        w = np.asarray(self.weights, dtype=float)
        return float(np.dot(w, np.asarray(lam[: len(w)], dtype=float)))

    def gradient_weights(self, N: int) -> np.ndarray:
        w = np.zeros(N)
        m = min(N, len(self.weights))
        w[:m] = self.weights[:m]
        return w


# ----------------------------------------------------------------------------
# specs
# ----------------------------------------------------------------------------

def _check_kp(k: float, p: float, d: int) -> None:
    if not k > 0:
        raise CostSpecError(f"weight k must be positive, got {k}")
    if not p > d / 2:
        raise CostSpecError(f"exponent p={p} must exceed d/2={d / 2}")
    if d not in (1, 2, 3):
        raise CostSpecError(f"unsupported dimension {d}")


@dataclass(frozen=True)
class CostSpecH:
    h: IndicatorH | PowerH | TableH
    k: float
    p: float
    d: int
    M: float | None = None
    c: float | None = None
    family = "h"

    def __post_init__(self):
        _check_kp(self.k, self.p, self.d)
        if isinstance(self.h, PowerH) and not np.isclose(self.h.gamma, self.p - self.d / 2):
            raise CostSpecError("power form must use exponent p - d/2")
        if isinstance(self.h, IndicatorH) and self.d == 2 and self.p <= 1 and self.h.hi >= 0:
            raise CostSpecError("for d = 2 the set E must stay away from 0")
        if isinstance(self.h, TableH) and self.h.saturated:
            warnings.warn("h exceeds the penalty cap; evaluations saturate and runs are flagged invalid")
        derived = self.h.negative_part_bound(self.p, self.d)
        if self.M is None or self.c is None:
            if derived is None:
                raise CostSpecError("tabulated h requires explicit coercivity constants M and c")
            object.__setattr__(self, "M", derived[0] if self.M is None else float(self.M))
            object.__setattr__(self, "c", derived[1] if self.c is None else float(self.c))
        if self.M < 0 or self.c < 0:
            raise CostSpecError("coercivity constants must be non-negative")

    @property
    def gamma(self) -> float:
        return self.p - self.d / 2

    @property
    def differentiable(self) -> bool:
        return not isinstance(self.h, IndicatorH)


@dataclass(frozen=True)
class CostSpecG:
    g: JthG | GapG | LinearG
    N: int
    k: float
    p: float
    d: int
    M: float | None = None
    c: float | None = None
    family = "g"

    def __post_init__(self):
        _check_kp(self.k, self.p, self.d)
        if self.N < 1:
            raise CostSpecError("N must be >= 1")
        if isinstance(self.g, JthG) and not 1 <= self.g.j <= self.N:
            raise CostSpecError(f"j={self.g.j} must lie in 1..N={self.N}")
        if isinstance(self.g, GapG) and self.N < 2:
            raise CostSpecError("gap form needs N >= 2")
        if self.M is None or self.c is None:
            derived = self._derived_constants()
            if derived is None:
                raise CostSpecError("this g form requires explicit coercivity constants M and c")
            object.__setattr__(self, "M", derived[0] if self.M is None else float(self.M))
            object.__setattr__(self, "c", derived[1] if self.c is None else float(self.c))

    @property
    def gamma(self) -> float:
        return self.p - self.d / 2

    @property
    def differentiable(self) -> bool:
        return True

    def _derived_constants(self) -> tuple[float, float] | None:
        # jth and gap satisfy g^- <= |lambda_1|; bound |x| by M + c|x|^gamma
        if isinstance(self.g, (JthG, GapG)):
            if self.gamma == 1:
                return 0.0, 1.0
            if self.gamma > 1:
                return 1.0, 1.0
            return None
        return None


def indicator_cost(lo: float, hi: float, k: float, p: float, d: int, **kw) -> CostSpecH:
    return CostSpecH(IndicatorH(lo, hi), k, p, d, **kw)


def power_cost(k: float, p: float, d: int, **kw) -> CostSpecH:
    return CostSpecH(PowerH(p - d / 2), k, p, d, **kw)


def jth_cost(j: int, N: int, k: float, p: float, d: int, **kw) -> CostSpecG:
    return CostSpecG(JthG(j), N, k, p, d, **kw)


def gap_cost(N: int, k: float, p: float, d: int, **kw) -> CostSpecG:
    return CostSpecG(GapG(), N, k, p, d, **kw)


# ----------------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------------

def eval_cost_h(spec: CostSpecH, V: PotentialField, mu: EigenvalueMeasure) -> float:
    return mu.integrate(spec.h) + spec.k * lp_norm_p(V, spec.p)


def eval_cost_g(spec: CostSpecG, V: PotentialField, phi: PhiSequence) -> float:
    if phi.N != spec.N:
        raise CostSpecError(f"sequence length {phi.N} does not match N={spec.N}")
    return spec.g(phi.values) + spec.k * lp_norm_p(V, spec.p)


# ----------------------------------------------------------------------------
# hypotheses
# ----------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    h0_ok: bool | None
    coercivity_ok: bool | None
    d2_form_ok: bool | None
    messages: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.h0_ok is True and self.coercivity_ok is True and self.d2_form_ok is True

    def to_dict(self) -> dict:
        return {
            "h0_ok": self.h0_ok,
            "coercivity_ok": self.coercivity_ok,
            "d2_form_ok": self.d2_form_ok,
            "passed": self.passed,
            "messages": list(self.messages),
            "warnings": list(self.warnings),
        }


def _table_growth_ok(h: TableH, M: float, c: float, gamma: float) -> bool:
    # h is piecewise linear, so sampling each segment densely is enough in practice
    ts = np.asarray(h.ts, dtype=float)
    lo = min(ts.min(), -1e-12)
    probe = np.unique(np.concatenate([ts[ts < 0], np.linspace(lo, 0, 2001)[:-1]]))
    hminus = np.maximum(-h(probe), 0.0)
    return bool(np.all(hminus <= M + c * np.abs(probe) ** gamma + 1e-12))


def check_hypotheses(
    spec: CostSpecH | CostSpecG,
    d: int | None = None,
    constants: ConstantsRegistry | None = None,
    bounded_set: bool = False,
) -> HypothesisReport:
    """Decide the existence-theorem hypotheses for ``spec``.

    ``bounded_set`` marks an admissible set that is bounded in L^p (finite
    pointwise bounds or an L^p ball); the growth condition is then waived.
    A missing registry constant leaves the coercivity flag undecided (None).
    """
    d = spec.d if d is None else d
    if d != spec.d:
        raise CostSpecError(f"spec was built for d={spec.d}, check requested for d={d}")
    constants = ConstantsRegistry.default() if constants is None else constants
    rep = HypothesisReport(None, None, None)

    if isinstance(spec, CostSpecH):
        h0 = float(spec.h(0.0))
        rep.h0_ok = h0 >= 0
        rep.messages.append(f"h(0) = {h0 + 0.0:g} {'>=' if rep.h0_ok else '<'} 0")
        cname = "LT"
    else:
        rep.h0_ok = True
        rep.messages.append("h(0) condition not applicable to the g family")
        cname = "Keller"

    if isinstance(spec, CostSpecH) and d == 2:
        if isinstance(spec.h, TableH):
            rep.d2_form_ok = spec.M == 0 and _table_growth_ok(spec.h, 0.0, spec.c, spec.p - 1)
        else:
            rep.d2_form_ok = spec.M == 0
        rep.messages.append(f"d=2 growth h^- <= c|t|^(p-1) without additive constant: {rep.d2_form_ok}")
    else:
        rep.d2_form_ok = True
        if isinstance(spec, CostSpecH) and isinstance(spec.h, TableH):
            if not _table_growth_ok(spec.h, spec.M, spec.c, spec.gamma):
                rep.messages.append("tabulated h violates h^- <= M + c|t|^gamma for the declared constants")
                rep.coercivity_ok = False

    if bounded_set:
        if rep.coercivity_ok is None:
            rep.coercivity_ok = True
        rep.messages.append("admissible set is bounded in L^p; growth condition waived")
        return rep

    if rep.coercivity_ok is False:
        return rep
    entry = constants.lookup(cname, spec.p, d)
    if entry is None:
        rep.coercivity_ok = None
        rep.messages.append(f"undecidable: no {cname} constant for p={spec.p}, d={d} in the registry")
    else:
        bound = spec.k / entry.value
        rep.coercivity_ok = spec.c < bound
        rep.messages.append(
            f"c = {spec.c:g} {'<' if rep.coercivity_ok else '>='} k/{cname} = {spec.k:g}/{entry.value:g} = {bound:g}"
        )
    if isinstance(spec, CostSpecG) and not rep.coercivity_ok:
        rep.warnings.append("g may be unbounded below on this set; existence needs a finite infimum")
    return rep
