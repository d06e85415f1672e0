"""Computational box, compact support sets, grid potentials and the discrete operator.

The whole space is replaced by the open box (-R, R)^d with homogeneous
Dirichlet conditions on its boundary.  Each axis carries ``n`` interior nodes
at ``-R + (i + 1) * dx`` with ``dx = 2R / (n + 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError

# Largest total node count accepted by build_domain (n**d).
DEFAULT_NODE_BUDGET = 4_000_000


@dataclass(frozen=True)
class GridDomain:
    d: int
    R: float
    n: int

    @property
    def dx(self) -> float:
        return 2.0 * self.R / (self.n + 1)

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return -self.R + (np.arange(self.n) + 1) * self.dx

    def mesh(self) -> list[np.ndarray]:
        ax = self.axis()
        return list(np.meshgrid(*([ax] * self.d), indexing="ij"))

    def free_ground_energy(self) -> float:
        """Lowest eigenvalue of the discrete Dirichlet Laplacian on this box."""
        return self.d * (2.0 / self.dx**2) * (1.0 - np.cos(np.pi / (self.n + 1)))

    def default_tau_neg(self) -> float:
        return -0.1 * self.free_ground_energy()


def build_domain(d: int, R: float, n: int, node_budget: int = DEFAULT_NODE_BUDGET) -> GridDomain:
    if d not in (1, 2, 3):
        raise DomainError(f"unsupported dimension d={d}; expected 1, 2 or 3")
    if not (R > 0 and np.isfinite(R)):
        raise DomainError(f"box half-width must be positive, got R={R}")
    if int(n) != n or n < 8:
        raise DomainError(f"points per axis must be an integer >= 8, got n={n}")
    n = int(n)
    if n**d > node_budget:
        raise DomainError(f"{n}^{d} = {n**d} nodes exceeds the budget of {node_budget}")
    return GridDomain(d=int(d), R=float(R), n=n)


@dataclass(frozen=True)
class SupportRegion:
    """Closed rectangle K = prod [lower_i, upper_i]."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(a) for a in self.lower)
        hi = tuple(float(b) for b in self.upper)
        if len(lo) != len(hi) or not lo:
            raise DomainError("support bounds must be non-empty and of equal length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise DomainError(f"support region must have a < b on every axis, got {lo}, {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def interval(cls, a: float, b: float, d: int = 1) -> "SupportRegion":
        return cls((a,) * d, (b,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    def half_width(self) -> float:
        return max(max(abs(a), abs(b)) for a, b in zip(self.lower, self.upper))

    def check_in(self, dom: GridDomain) -> None:
        if self.d != dom.d:
            raise DomainError(f"support region has dimension {self.d}, domain has {dom.d}")
        for a, b in zip(self.lower, self.upper):
            if not (-dom.R < a and b < dom.R):
                raise DomainError(f"support [{a}, {b}] is not compactly contained in (-{dom.R}, {dom.R})")

    def mask(self, dom: GridDomain) -> np.ndarray:
        self.check_in(dom)
        ax = dom.axis()
        # small slack so that nodes sitting on the boundary of K count as inside
        tol = 1e-12 * dom.R
        per_axis = [(ax >= a - tol) & (ax <= b + tol) for a, b in zip(self.lower, self.upper)]
        m = per_axis[0]
        for other in per_axis[1:]:
            m = np.multiply.outer(m, other)
        m = np.asarray(m, dtype=bool).reshape(dom.shape)
        if not m.any():
            raise DomainError("support region contains no grid node; refine the grid")
        return m

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True, eq=False)
class PotentialField:
    values: np.ndarray
    domain: GridDomain
    support: SupportRegion
    mask: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).reshape(self.domain.shape)
        mask = self.support.mask(self.domain)
        if not np.all(np.isfinite(vals)):
            raise DomainError("potential values must be finite")
        if np.any(vals[~mask] != 0.0):
            raise DomainError("potential is nonzero outside its support region")
        vals.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def zeros(cls, dom: GridDomain, K: SupportRegion) -> "PotentialField":
        return cls(np.zeros(dom.shape), dom, K)

    def with_values(self, values: np.ndarray) -> "PotentialField":
        return PotentialField(values, self.domain, self.support)

    @property
    def negative_part(self) -> np.ndarray:
        return np.maximum(-self.values, 0.0)


@dataclass(frozen=True, eq=False)
class DiscreteHamiltonian:
    """-Laplacian (2d-point stencil, Dirichlet) plus diag(V) on n**d nodes.

    For d = 1 only the two diagonals are kept; higher dimensions use CSR.
    """

    domain: GridDomain
    diagonal: np.ndarray
    off: float
    matrix: sp.csr_matrix | None = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.diagonal.size

    def tridiagonal(self) -> tuple[np.ndarray, np.ndarray]:
        if self.domain.d != 1:
            raise DomainError("tridiagonal layout exists only for d = 1")
        return self.diagonal, np.full(self.size - 1, self.off)

    def sparse(self) -> sp.csr_matrix:
        if self.matrix is not None:
            return self.matrix
        d, e = self.tridiagonal()
        return sp.diags([e, d, e], [-1, 0, 1], format="csr")

    def dense(self) -> np.ndarray:
        return self.sparse().toarray()

    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral radius."""
        return float(np.max(np.abs(self.diagonal)) + 2 * self.domain.d * abs(self.off))

    def lower_bound(self) -> float:
        return float(np.min(self.diagonal) - 2 * self.domain.d * abs(self.off))


def _laplacian_1d(n: int, dx: float) -> sp.csr_matrix:
    inv = 1.0 / dx**2
    return sp.diags([np.full(n - 1, -inv), np.full(n, 2 * inv), np.full(n - 1, -inv)], [-1, 0, 1], format="csr")


def build_hamiltonian(V: PotentialField, dom: GridDomain) -> DiscreteHamiltonian:
    if V.domain != dom:
        raise DomainError(f"potential sampled on {V.domain}, operator requested on {dom}")
    inv = 1.0 / dom.dx**2
    diag = 2 * dom.d * inv + V.values.ravel()
    if dom.d == 1:
        return DiscreteHamiltonian(dom, diag, -inv)
    L1 = _laplacian_1d(dom.n, dom.dx)
    eye = sp.identity(dom.n, format="csr")
    lap = sp.csr_matrix((dom.size, dom.size))
    for axis in range(dom.d):
        factors = [eye] * dom.d
        factors[axis] = L1
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        lap = lap + term
    H = (lap + sp.diags(V.values.ravel(), 0, format="csr")).tocsr()
    H.sort_indices()
    return DiscreteHamiltonian(dom, diag, -inv, H)


def _check_p(p: float, d: int) -> None:
    if not p > d / 2:
        raise DomainError(f"exponent p={p} must exceed d/2={d / 2}")


def lp_norm_p(V: PotentialField, p: float) -> float:
    """Riemann sum of |V|^p, i.e. the p-th power of the L^p norm."""
    _check_p(p, V.domain.d)
    return float(np.sum(np.abs(V.values) ** p) * V.domain.cell_volume)


def project_support(V: PotentialField | np.ndarray, K: SupportRegion, dom: GridDomain | None = None) -> PotentialField:
    if isinstance(V, PotentialField):
        dom = V.domain
        vals = V.values
    else:
        vals = np.asarray(V, dtype=float).reshape(dom.shape)
    mask = K.mask(dom)
    return PotentialField(np.where(mask, vals, 0.0), dom, K)


def project_box(V: PotentialField, lo: float, hi: float) -> PotentialField:
    if not lo <= hi:
        raise DomainError(f"invalid bounds lo={lo} > hi={hi}")
    vals = np.where(V.mask, np.clip(V.values, lo, hi), 0.0)
    return V.with_values(vals)


def retract_lp_ball(V: PotentialField, p: float, rho: float) -> PotentialField:
    """Scale V onto {lp_norm_p <= rho} (radial retraction, not the metric projection)."""
    if not rho > 0:
        raise DomainError(f"ball radius must be positive, got rho={rho}")
    s = lp_norm_p(V, p)
    if s <= rho:
        return V
    t = (rho / s) ** (1.0 / p)
    W = V.with_values(V.values * t)
    # guard against the last ulp of rounding
    while lp_norm_p(W, p) > rho:
        t = np.nextafter(t, 0.0)
        W = V.with_values(V.values * t)
    return W


def cell_overlap(dom: GridDomain, lower: Sequence[float], upper: Sequence[float]) -> np.ndarray:
    """Fraction of each node's cell [x - dx/2, x + dx/2]^d covered by a rectangle."""
    ax = dom.axis()
    h = dom.dx / 2
    frac = None
    for a, b in zip(lower, upper):
        f = np.clip(np.minimum(ax + h, b) - np.maximum(ax - h, a), 0.0, None) / dom.dx
        frac = f if frac is None else np.multiply.outer(frac, f)
    return np.asarray(frac).reshape(dom.shape)


def rectangle_potential(
    dom: GridDomain,
    K: SupportRegion,
    value: float,
    lower: Sequence[float] | None = None,
    upper: Sequence[float] | None = None,
    cell_average: bool = False,
) -> PotentialField:
    """``value`` on a rectangle (default: all of K), zero elsewhere.

    With ``cell_average`` each node receives value times the covered fraction of
    its cell, which keeps the integral exact and makes jumps second-order accurate.
    """
    lower = K.lower if lower is None else tuple(lower)
    upper = K.upper if upper is None else tuple(upper)
    if cell_average:
        vals = value * cell_overlap(dom, lower, upper)
    else:
        vals = np.where(SupportRegion(lower, upper).mask(dom), value, 0.0)
    return project_support(vals, K, dom)


def square_well(dom: GridDomain, K: SupportRegion, depth: float, half_width: float, cell_average: bool = True) -> PotentialField:
    """V = -depth on [-a, a]^d."""
    return rectangle_potential(dom, K, -depth, (-half_width,) * dom.d, (half_width,) * dom.d, cell_average)


def delta_family(dom: GridDomain, K: SupportRegion, eps: float) -> PotentialField:
    """V = -(1/eps^d) on [-eps/2, eps/2]^d, unit mass, cell averaged."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    return rectangle_potential(dom, K, -1.0 / eps**dom.d, (-eps / 2,) * dom.d, (eps / 2,) * dom.d, True)


def random_bump(
    dom: GridDomain,
    K: SupportRegion,
    seed: int,
    max_bumps: int = 4,
    depth_range: tuple[float, float] = (0.5, 5.0),
    width_range: tuple[float, float] = (0.1, 0.5),
) -> PotentialField:
    """Non-positive sum of 1..max_bumps Gaussian wells centred in K, cut to K.

    Widths are relative to the half-extent of K along each axis.
    """
    rng = np.random.default_rng(seed)
    X = dom.mesh()
    vals = np.zeros(dom.shape)
    for _ in range(int(rng.integers(1, max_bumps + 1))):
        depth = rng.uniform(*depth_range)
        r2 = np.zeros(dom.shape)
        for x, a, b in zip(X, K.lower, K.upper):
            c = rng.uniform(a, b)
            w = rng.uniform(*width_range) * (b - a) / 2
            r2 = r2 + ((x - c) / w) ** 2
        vals -= depth * np.exp(-0.5 * r2)
    return project_support(vals, K, dom)


def from_function(dom: GridDomain, K: SupportRegion, func: Callable[..., np.ndarray]) -> PotentialField:
    """Sample ``func(*coords)`` at the nodes and cut to K."""
    return project_support(np.broadcast_to(func(*dom.mesh()), dom.shape), K, dom)
