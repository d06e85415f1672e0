"""Numerical solution of the constrained potential-optimisation problems.

Smooth costs go through projected descent on eigenvalue sensitivities;
counting costs go through simulated annealing over bang-bang potentials,
with an exhaustive enumeration as ground truth on small partitions.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .costs import CostSpecG, CostSpecH, eval_cost_g, eval_cost_h
from .errors import AdmissibleSetError, CostSpecError, DomainError, NonsmoothPoint
from .grid import (
    GridDomain,
    PotentialField,
    SupportRegion,
    build_hamiltonian,
    lp_norm_p,
    project_box,
    project_support,
    random_bump,
    retract_lp_ball,
)
from .spectrum import (
    DEFAULT_EPS_MULT,
    NegativeSpectrum,
    cluster_multiplicities,
    dense_negative_eigenvalues,
    negative_eigenpairs,
    phi_map,
    spectrum_from_values,
)

BRUTE_FORCE_LIMIT = 65536
FEAS_TOL = 1e-12


# ----------------------------------------------------------------------------
# admissible sets
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibleSet:
    support: SupportRegion
    lo: float | None = None
    hi: float | None = None
    rho: float | None = None
    p: float | None = None
    nonpositive: bool = False

    def __post_init__(self):
        if self.lo is not None and self.hi is not None and not self.lo <= self.hi:
            raise AdmissibleSetError(f"lo={self.lo} > hi={self.hi}")
        if self.nonpositive and self.lo is not None and self.lo > 0:
            raise AdmissibleSetError("sign constraint V <= 0 incompatible with lo > 0")
        if self.rho is not None:
            if self.p is None:
                raise AdmissibleSetError("an L^p ball needs its exponent p")
            if not self.rho > 0:
                raise AdmissibleSetError("ball radius must be positive")
            # radial scaling must not leave the box
            if (self.lo is not None and self.lo > 0) or (self.hi is not None and self.hi < 0):
                raise AdmissibleSetError("pointwise bounds must straddle 0 when an L^p ball is present")

    @property
    def upper(self) -> float | None:
        if self.nonpositive:
            return 0.0 if self.hi is None else min(self.hi, 0.0)
        return self.hi

    @property
    def bounded(self) -> bool:
        """True when the set is bounded in L^p (growth hypotheses can be waived)."""
        return (self.lo is not None and self.upper is not None) or self.rho is not None

    def bang_values(self) -> tuple[float, float]:
        if self.lo is None or self.upper is None:
            raise AdmissibleSetError("bang-bang search needs finite pointwise bounds")
        return float(self.lo), float(self.upper)

    def project(self, V: PotentialField | np.ndarray, dom: GridDomain | None = None) -> PotentialField:
        """support -> box -> sign -> L^p retraction, in that order."""
        W = project_support(V, self.support, dom)
        if self.lo is not None or self.hi is not None:
            lo = -np.inf if self.lo is None else self.lo
            hi = np.inf if self.hi is None else self.hi
            W = project_box(W, lo, hi)
        if self.nonpositive:
            W = W.with_values(np.minimum(W.values, 0.0))
        if self.rho is not None:
            W = retract_lp_ball(W, self.p, self.rho)
        return W

    def residuals(self, V: PotentialField) -> dict[str, float]:
        vals = V.values
        mask = self.support.mask(V.domain)
        out = {"support": float(np.max(np.abs(vals[~mask]), initial=0.0))}
        if self.lo is not None:
            out["lower"] = float(max(0.0, np.max(self.lo - vals[mask], initial=-np.inf)))
        if self.hi is not None:
            out["upper"] = float(max(0.0, np.max(vals[mask] - self.hi, initial=-np.inf)))
        if self.nonpositive:
            out["sign"] = float(max(0.0, np.max(vals, initial=0.0)))
        if self.rho is not None:
            out["ball"] = max(0.0, lp_norm_p(V, self.p) - self.rho)
        return out

    def max_residual(self, V: PotentialField) -> float:
        return max(self.residuals(V).values())

    def is_feasible(self, V: PotentialField, tol: float = FEAS_TOL) -> bool:
        r = self.residuals(V)
        ball = r.pop("ball", 0.0)
        ok = max(r.values()) <= tol
        if self.rho is not None:
            ok = ok and ball <= self.rho * tol
        return ok

    def to_dict(self) -> dict:
        return {"support": self.support.to_dict(), "lo": self.lo, "hi": self.hi,
                "rho": self.rho, "p": self.p, "nonpositive": self.nonpositive}


def random_feasible(aset: AdmissibleSet, dom: GridDomain, seed: int) -> PotentialField:
    """A seeded random point of the admissible set."""
    rng = np.random.default_rng(seed)
    if aset.lo is not None and aset.upper is not None:
        vals = rng.uniform(aset.lo, aset.upper, size=dom.shape)
        return aset.project(vals, dom)
    V = random_bump(dom, aset.support, int(rng.integers(2**32)))
    if not aset.nonpositive:
        V = V.with_values(V.values * rng.choice([-1.0, 1.0]))
    return aset.project(V)


# ----------------------------------------------------------------------------
# configuration, objective, records
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "projected-descent"
    max_iter: int = 200
    step0: float | None = None
    backtracks: int = 30
    tol: float = 1e-10
    ftol: float = 1e-12
    patience: int = 10
    restarts: int = 1
    seed: int = 0
    steps: int = 2000
    T0: float = 1.0
    T1: float = 0.01
    cells: int | tuple[int, ...] = 8
    k_max: int = 64
    eps_mult: float = DEFAULT_EPS_MULT
    tau_neg: float | None = None
    threads: int = 1

    def __post_init__(self):
        if self.method not in ("projected-descent", "annealing", "brute-force"):
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("max_iter", "restarts", "steps", "k_max", "threads", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.backtracks < 0:
            raise ValueError("backtracks must be >= 0")
        if not (self.T0 > 0 and self.T1 > 0):
            raise ValueError("annealing temperatures must be positive")

    def to_dict(self) -> dict:
        out = asdict(self)
        if isinstance(out["cells"], tuple):
            out["cells"] = list(out["cells"])
        return out


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Objective:
    """Cost functional plus the spectral settings it is evaluated with."""

    spec: CostSpecH | CostSpecG
    tau_neg: float | None = None
    k_max: int = 64
    eps_mult: float = DEFAULT_EPS_MULT

    def __post_init__(self):
        if isinstance(self.spec, CostSpecG) and self.k_max < self.spec.N:
            object.__setattr__(self, "k_max", self.spec.N)

    def tau(self, dom: GridDomain) -> float:
        return dom.default_tau_neg() if self.tau_neg is None else self.tau_neg

    def spectrum(self, V: PotentialField, with_vectors: bool = True) -> NegativeSpectrum:
        H = build_hamiltonian(V, V.domain)
        return negative_eigenpairs(H, self.tau(V.domain), self.k_max, self.eps_mult, with_vectors)

    def dense_spectrum(self, V: PotentialField) -> NegativeSpectrum:
        dom = V.domain
        lam = dense_negative_eigenvalues(build_hamiltonian(V, dom), self.tau(dom))
        return spectrum_from_values(lam[: self.k_max], self.tau(dom), dom.dx, dom.d, self.eps_mult)

    def value(self, V: PotentialField, s: NegativeSpectrum) -> float:
        if isinstance(self.spec, CostSpecH):
            return eval_cost_h(self.spec, V, cluster_multiplicities(s))
        return eval_cost_g(self.spec, V, phi_map(s, self.spec.N))

    def evaluate(self, V: PotentialField, with_vectors: bool = True) -> tuple[float, NegativeSpectrum]:
        s = self.spectrum(V, with_vectors)
        return self.value(V, s), s

    @classmethod
    def from_config(cls, spec, cfg: OptimizerConfig) -> "Objective":
        return cls(spec, cfg.tau_neg, cfg.k_max, cfg.eps_mult)


@dataclass
class RunRecord:
    method: str
    config_hash: str
    seed: int
    trace: list[dict]
    best: PotentialField
    best_objective: float
    status: str
    best_spectrum: NegativeSpectrum | None = None
    ties: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def objectives(self) -> list[float]:
        return [row["objective"] for row in self.trace]

    def summary(self) -> dict:
        return {
            "method": self.method,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "status": self.status,
            "best_objective": self.best_objective,
            "iterations": len(self.trace),
            "ties": list(self.ties),
            "wall_time": self.wall_time,
            **self.extra,
        }


def _spectrum_summary(s: NegativeSpectrum) -> dict:
    return {"n_neg": len(s), "lambda1": float(s.eigenvalues[0]) if len(s) else 0.0}


# ----------------------------------------------------------------------------
# gradients
# ----------------------------------------------------------------------------

def eigen_gradient(V: PotentialField, s: NegativeSpectrum, i: int) -> np.ndarray:
    """Node sensitivity of the i-th eigenvalue: d lambda_i / d V(node) = u_i(node)^2 dx^d."""
    mu = cluster_multiplicities(s)
    atom = mu.cluster_of[i]
    if mu.weights[atom] > 1:
        raise NonsmoothPoint(f"eigenvalue {i} lies in a cluster of size {mu.weights[atom]}")
    return s.density(i) * V.domain.cell_volume


def _cluster_density(s: NegativeSpectrum, mu, atom: int) -> np.ndarray:
    members = np.flatnonzero(mu.cluster_of == atom)
    return np.mean([s.density(m) for m in members], axis=0)


def _integral_gradient(spec, V: PotentialField) -> np.ndarray:
    v = V.values
    a = np.abs(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = spec.k * spec.p * np.where(a > 0, a ** (spec.p - 1), 0.0) * np.sign(v)
    return g


def cost_gradient(spec: CostSpecH | CostSpecG, V: PotentialField, s: NegativeSpectrum) -> np.ndarray:
    """L^2 gradient density of the cost; multiply by dx^d for node sensitivities.

    Clustered eigenvalues contribute the cluster-averaged density (a subgradient).
    """
    if not spec.differentiable:
        raise CostSpecError("indicator-form h is not differentiable; use annealing")
    grad = _integral_gradient(spec, V)
    if len(s) == 0:
        return grad
    mu = cluster_multiplicities(s)
    if isinstance(spec, CostSpecH):
        dh = np.atleast_1d(spec.h.derivative(mu.locations))
        for atom in range(len(mu)):
            grad = grad + mu.weights[atom] * dh[atom] * _cluster_density(s, mu, atom)
        return grad
    w = spec.g.gradient_weights(spec.N)
    for j in np.flatnonzero(w):
        if j < len(s):
            grad = grad + w[j] * _cluster_density(s, mu, mu.cluster_of[j])
    return grad


def is_nonsmooth(spec, s: NegativeSpectrum) -> bool:
    if len(s) == 0:
        return False
    mu = cluster_multiplicities(s)
    if isinstance(spec, CostSpecG):
        w = spec.g.gradient_weights(spec.N)
        idx = [j for j in np.flatnonzero(w) if j < len(s)]
        return any(mu.weights[mu.cluster_of[j]] > 1 for j in idx)
    return False  # symmetric sums are smooth across clusters


# ----------------------------------------------------------------------------
# projected descent
# ----------------------------------------------------------------------------

def projected_descent(
    spec: CostSpecH | CostSpecG,
    aset: AdmissibleSet,
    V0: PotentialField,
    cfg: OptimizerConfig = OptimizerConfig(),
    config_digest: str | None = None,
) -> RunRecord:
    """Projected gradient descent with halving backtracking.

    The step moves every node of K by at most ``alpha`` (gradient scaled by its
    sup norm), and an iterate is accepted only if the cost does not increase.
    Convergence: a full-length step that the projection cancels, or relative
    decrease below ``ftol`` for ``patience`` accepted iterations in a row.
    """
    t_start = time.perf_counter()
    if not aset.is_feasible(V0):
        raise AdmissibleSetError(f"starting potential is infeasible: {aset.residuals(V0)}")
    obj = Objective.from_config(spec, cfg)
    mask = aset.support.mask(V0.domain)
    V = V0
    F, s = obj.evaluate(V)
    scale = max(float(np.max(np.abs(V0.values))), abs(aset.lo or 0.0), abs(aset.hi or 0.0), 1.0)
    alpha0 = cfg.step0 if cfg.step0 is not None else 0.1 * scale
    alpha = alpha0
    trace = [{"iter": 0, "objective": F, "best_objective": F, "step": 0.0, "alpha": alpha,
              "feasibility": aset.max_residual(V), "nonsmooth": int(is_nonsmooth(spec, s)),
              **_spectrum_summary(s)}]
    status = "max_iter"
    flat = 0
    for it in range(1, cfg.max_iter + 1):
        g = np.where(mask, cost_gradient(spec, V, s), 0.0)
        gmax = float(np.max(np.abs(g)))
        if gmax == 0.0:
            status = "converged"
            break
        direction = g / gmax
        for _ in range(cfg.backtracks + 1):
            W = aset.project(V.values - alpha * direction, V.domain)
            Fw, sw = obj.evaluate(W)
            if Fw <= F:
                break
            alpha *= 0.5
        else:
            status = "stalled"
            break
        step = float(np.max(np.abs(W.values - V.values)))
        decrease = F - Fw
        V, F, s = W, Fw, sw
        trace.append({"iter": it, "objective": F, "best_objective": F, "step": step, "alpha": alpha,
                      "feasibility": aset.max_residual(V), "nonsmooth": int(is_nonsmooth(spec, s)),
                      **_spectrum_summary(s)})
        if step <= cfg.tol and alpha == alpha0:
            status = "converged"
            break
        flat = flat + 1 if decrease <= cfg.ftol * max(1.0, abs(F)) else 0
        if flat >= cfg.patience:
            status = "converged"
            break
        alpha = min(2 * alpha, alpha0)
    digest = config_digest or config_hash({"cfg": cfg.to_dict(), "spec": repr(spec), "set": aset.to_dict()})
    return RunRecord("projected-descent", digest, cfg.seed, trace, V, F, status, s,
                     wall_time=time.perf_counter() - t_start)


def multistart_descent(
    spec, aset: AdmissibleSet, dom: GridDomain, cfg: OptimizerConfig, V0: PotentialField | None = None,
) -> list[RunRecord]:
    """Descent from V0 (if given) plus seeded random feasible starts; one RNG stream per start."""
    starts = [] if V0 is None else [V0]
    for r in range(cfg.restarts - len(starts)):
        starts.append(random_feasible(aset, dom, cfg.seed + r))
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(lambda V: projected_descent(spec, aset, V, cfg), starts))


# ----------------------------------------------------------------------------
# bang-bang search
# ----------------------------------------------------------------------------

def cell_partition(dom: GridDomain, K: SupportRegion, cells: int | Sequence[int]) -> tuple[np.ndarray, int]:
    """Label each node of K with a cell index (-1 outside K); equal-width cells per axis.

    Cells are half-open [c_j, c_{j+1}) except the last, which is closed.
    """
    cells = (int(cells),) * dom.d if np.isscalar(cells) else tuple(int(c) for c in cells)
    if len(cells) != dom.d or min(cells) < 1:
        raise DomainError(f"cell counts {cells} do not match d={dom.d}")
    mask = K.mask(dom)
    ax = dom.axis()
    idx = []
    for c, a, b in zip(cells, K.lower, K.upper):
        j = np.floor((ax - a) / (b - a) * c + 1e-9).astype(int)
        idx.append(np.clip(j, 0, c - 1))
    lab = np.ravel_multi_index(np.meshgrid(*idx, indexing="ij"), cells) if dom.d > 1 else idx[0]
    lab = np.where(mask, lab, -1)
    total = int(np.prod(cells))
    present = np.unique(lab[lab >= 0])
    if len(present) != total:
        raise DomainError(f"cell partition {cells} is finer than the grid: {total - len(present)} cells hold no node")
    return lab, total


def bang_bang_potential(aset: AdmissibleSet, dom: GridDomain, labels: np.ndarray, state: Sequence[int]) -> PotentialField:
    low, high = aset.bang_values()
    table = np.where(np.asarray(state, dtype=bool), high, low)
    vals = np.where(labels >= 0, table[np.maximum(labels, 0)], 0.0)
    return aset.project(vals, dom)


def _state_key(state) -> str:
    return "".join("1" if b else "0" for b in state)


def anneal_bang_bang(
    spec: CostSpecH | CostSpecG,
    aset: AdmissibleSet,
    dom: GridDomain,
    cfg: OptimizerConfig,
    config_digest: str | None = None,
) -> RunRecord:
    """Metropolis single-cell-flip annealing with a geometric temperature schedule.

    State bit 1 means the upper bang value.  Objective values are memoised per
    run, which never changes the random stream.
    """
    t_start = time.perf_counter()
    labels, ncell = cell_partition(dom, aset.support, cfg.cells)
    obj = Objective.from_config(spec, cfg)
    rng = np.random.default_rng(cfg.seed)
    cache: dict[str, tuple[float, NegativeSpectrum]] = {}

    def f(state):
        key = _state_key(state)
        if key not in cache:
            V = bang_bang_potential(aset, dom, labels, state)
            cache[key] = obj.evaluate(V, with_vectors=False)
        return cache[key][0]

    state = rng.integers(0, 2, size=ncell).astype(bool)
    cur = f(state)
    best_state, best = state.copy(), cur
    trace = [{"iter": 0, "objective": cur, "best_objective": best, "temperature": cfg.T0, "accepted": 1,
              "state": _state_key(state)}]
    steps = cfg.steps
    for t in range(1, steps + 1):
        T = cfg.T0 * (cfg.T1 / cfg.T0) ** ((t - 1) / max(steps - 1, 1))
        i = int(rng.integers(ncell))
        u = float(rng.random())
        prop = state.copy()
        prop[i] = ~prop[i]
        val = f(prop)
        delta = val - cur
        accept = delta <= 0 or u < math.exp(-delta / T)
        if accept:
            state, cur = prop, val
            if cur < best:
                best_state, best = state.copy(), cur
        trace.append({"iter": t, "objective": cur, "best_objective": best, "temperature": T,
                      "accepted": int(accept), "state": _state_key(state)})
    V = bang_bang_potential(aset, dom, labels, best_state)
    digest = config_digest or config_hash({"cfg": cfg.to_dict(), "spec": repr(spec), "set": aset.to_dict()})
    return RunRecord("annealing", digest, cfg.seed, trace, V, best, "completed", obj.spectrum(V),
                     wall_time=time.perf_counter() - t_start,
                     extra={"best_state": _state_key(best_state), "distinct_states": len(cache)})


def anneal_chains(spec, aset: AdmissibleSet, dom: GridDomain, cfg: OptimizerConfig, seeds: Iterable[int]) -> list[RunRecord]:
    """Independent annealing chains, one per seed, merged in seed order."""
    cfgs = [OptimizerConfig(**{**cfg.to_dict(), "seed": int(s), "cells": cfg.cells}) for s in seeds]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(lambda c: anneal_bang_bang(spec, aset, dom, c), cfgs))


def brute_force(
    spec: CostSpecH | CostSpecG,
    aset: AdmissibleSet,
    cells: int | Sequence[int],
    dom: GridDomain,
    cfg: OptimizerConfig = OptimizerConfig(method="brute-force"),
    rel_tol: float = 1e-9,
) -> RunRecord:
    """Evaluate every bang-bang configuration with the dense eigensolver."""
    t_start = time.perf_counter()
    labels, ncell = cell_partition(dom, aset.support, cells)
    if 2**ncell > BRUTE_FORCE_LIMIT:
        raise DomainError(f"2^{ncell} configurations exceed the brute-force limit {BRUTE_FORCE_LIMIT}")
    obj = Objective.from_config(spec, cfg)
    trace = []
    best, best_state = np.inf, None
    for it, bits in enumerate(itertools.product((0, 1), repeat=ncell)):
        V = bang_bang_potential(aset, dom, labels, bits)
        val = obj.value(V, obj.dense_spectrum(V))
        if val < best:
            best, best_state = val, bits
        trace.append({"iter": it, "objective": val, "best_objective": best, "state": _state_key(bits)})
    tol = rel_tol * max(1.0, abs(best))
    ties = [row["state"] for row in trace if row["objective"] <= best + tol]
    V = bang_bang_potential(aset, dom, labels, best_state)
    digest = config_hash({"cells": list(np.atleast_1d(cells)), "spec": repr(spec), "set": aset.to_dict(),
                          "tau_neg": cfg.tau_neg, "k_max": cfg.k_max, "eps_mult": cfg.eps_mult})
    return RunRecord("brute-force", digest, 0, trace, V, best, "exhaustive", obj.spectrum(V), ties,
                     wall_time=time.perf_counter() - t_start, extra={"best_state": _state_key(best_state)})


def objectives_match(a: float, b: float, rel_tol: float = 1e-9) -> bool:
    return abs(a - b) <= rel_tol * max(1.0, abs(b))


# ----------------------------------------------------------------------------
# weak convergence
# ----------------------------------------------------------------------------

def weak_convergence_probe(
    V: PotentialField,
    frequencies: Sequence[int],
    tau_neg: float | None = None,
    amplitude: float = 1.0,
    k_max: int = 64,
) -> list[dict]:
    """|lambda_i(V_n) - lambda_i(V)| for V_n = V (1 + amplitude sin(n pi x_1 / R)).

    V_n converges weakly to V in L^p as n grows; the rows report the
    eigenvalue deviations up to the smaller of the two bound-state counts.
    """
    dom = V.domain
    freqs = [int(f) for f in frequencies]
    if any(b <= a for a, b in zip(freqs, freqs[1:])):
        raise DomainError("frequencies must be strictly increasing")
    across = int(V.mask.reshape(dom.n, -1).any(axis=1).sum())
    if freqs and freqs[-1] >= across:
        raise DomainError(f"frequency {freqs[-1]} is beyond the grid resolution across K ({across} nodes)")
    tau = dom.default_tau_neg() if tau_neg is None else tau_neg
    base = negative_eigenpairs(build_hamiltonian(V, dom), tau, k_max, with_vectors=False).eigenvalues
    x1 = dom.mesh()[0]
    rows = []
    for n in freqs:
        W = V.with_values(V.values * (1 + amplitude * np.sin(n * np.pi * x1 / dom.R)))
        lam = negative_eigenpairs(build_hamiltonian(W, dom), tau, k_max, with_vectors=False).eigenvalues
        m = min(len(lam), len(base))
        row = {"frequency": n, "count_base": len(base), "count_modulated": len(lam)}
        for i in range(m):
            row[f"dev_{i + 1}"] = float(abs(lam[i] - base[i]))
        rows.append(row)
    return rows
