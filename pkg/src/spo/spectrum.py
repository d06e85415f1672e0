"""Negative discrete spectrum of the discrete Schroedinger operator.

Eigenvalues are stored ascending (ground state first).  Eigenvectors are
normalised in the discrete L^2 inner product, sum(u**2) * dx**d == 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ShiftHitsSpectrum, SolverError
from .grid import DiscreteHamiltonian

DEFAULT_EPS_MULT = 1e-6
DENSE_LIMIT = 2000


# ----------------------------------------------------------------------------
# counting
# ----------------------------------------------------------------------------

def sturm_count(diag: np.ndarray, off: np.ndarray, theta: float) -> int:
    """Number of eigenvalues of the symmetric tridiagonal (diag, off) below theta.

    Counts negative pivots of the LDL^T factorisation of T - theta I.
    """
    off2 = (np.asarray(off, dtype=float) ** 2).tolist()
    a = (np.asarray(diag, dtype=float) - theta).tolist()
    q = a[0]
    if q == 0.0:
        raise ShiftHitsSpectrum(theta)
    count = 1 if q < 0 else 0
    for ai, b2 in zip(a[1:], off2):
        q = ai - b2 / q
        if q == 0.0:
            raise ShiftHitsSpectrum(theta)
        if q < 0:
            count += 1
    return count


def _inertia_sparse(A: sp.csr_matrix, theta: float) -> int | None:
    """Negative inertia via a symmetric-mode SuperLU factorisation.

    Returns None when SuperLU did not keep a symmetric permutation.
    """
    S = (A - theta * sp.identity(A.shape[0], format="csr")).tocsc()
    try:
        lu = spla.splu(S, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:  # exactly singular
        raise ShiftHitsSpectrum(theta) from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    piv = lu.U.diagonal()
    if np.any(piv == 0.0) or not np.all(np.isfinite(piv)):
        raise ShiftHitsSpectrum(theta)
    return int(np.count_nonzero(piv < 0))


def _inertia_dense(A: np.ndarray, theta: float) -> int:
    _, D, _ = sla.ldl(A - theta * np.eye(A.shape[0]))
    # D is block diagonal with 1x1 and 2x2 blocks
    count = 0
    i = 0
    n = D.shape[0]
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0.0:
            ev = np.linalg.eigvalsh(D[i:i + 2, i:i + 2])
            if np.any(ev == 0.0):
                raise ShiftHitsSpectrum(theta)
            count += int(np.count_nonzero(ev < 0))
            i += 2
        else:
            if D[i, i] == 0.0:
                raise ShiftHitsSpectrum(theta)
            count += int(D[i, i] < 0)
            i += 1
    return count


def count_below(H: DiscreteHamiltonian, theta: float) -> int:
    """Exact number of eigenvalues of H strictly below theta (Sylvester inertia)."""
    if H.domain.d == 1:
        d, e = H.tridiagonal()
        return sturm_count(d, e, theta)
    count = _inertia_sparse(H.sparse(), theta)
    if count is None:
        if H.size > 8000:
            raise SolverError(f"SuperLU pivoting broke symmetry and n={H.size} is too large for dense LDL")
        count = _inertia_dense(H.dense(), theta)
    return count


def count_below_jittered(H: DiscreteHamiltonian, theta: float, attempts: int = 8) -> int:
    """count_below, perturbing theta by ~1e-10 relative whenever it hits the spectrum."""
    scale = max(abs(theta), 1.0) * 1e-10
    for k in range(attempts + 1):
        shift = 0.0 if k == 0 else (-1) ** k * ((k + 1) // 2) * scale
        try:
            return count_below(H, theta + shift)
        except ShiftHitsSpectrum:
            continue
    raise ShiftHitsSpectrum(theta)


# ----------------------------------------------------------------------------
# spectra
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NegativeSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None  # shape (m, *grid shape); None for eigenvalue-only solves
    tau_neg: float
    dx: float
    d: int
    eps_mult: float = DEFAULT_EPS_MULT
    residuals: np.ndarray = field(default=None, repr=False)
    total_below: int = 0  # count below tau_neg before k_max truncation

    def __post_init__(self):
        if self.residuals is None:
            object.__setattr__(self, "residuals", np.zeros(len(self.eigenvalues)))
        for arr in (self.eigenvalues, self.eigenvectors, self.residuals):
            if arr is not None:
                arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def truncated(self) -> bool:
        return self.total_below > len(self)

    @classmethod
    def empty(cls, shape: tuple[int, ...], tau_neg: float, dx: float, d: int,
              eps_mult: float = DEFAULT_EPS_MULT) -> "NegativeSpectrum":
        return cls(np.zeros(0), np.zeros((0, *shape)), tau_neg, dx, d, eps_mult)

    def density(self, i: int) -> np.ndarray:
        if self.eigenvectors is None:
            raise ValueError("spectrum was computed without eigenvectors")
        return self.eigenvectors[i] ** 2

    def below(self, tau: float) -> "NegativeSpectrum":
        """Restrict to eigenvalues strictly below a stricter cutoff."""
        keep = self.eigenvalues < tau
        vecs = None if self.eigenvectors is None else self.eigenvectors[keep].copy()
        return NegativeSpectrum(self.eigenvalues[keep].copy(), vecs,
                                min(tau, self.tau_neg), self.dx, self.d, self.eps_mult,
                                self.residuals[keep].copy(), int(keep.sum()))


@dataclass(frozen=True, eq=False)
class EigenvalueMeasure:
    """Atoms (location < 0, integer weight) with strictly increasing locations."""

    locations: np.ndarray
    weights: np.ndarray
    cluster_of: np.ndarray = field(default=None, repr=False)  # eigenvalue index -> atom index

    @property
    def mass(self) -> int:
        return int(np.sum(self.weights))

    def __len__(self) -> int:
        return len(self.locations)

    def expanded(self) -> np.ndarray:
        return np.repeat(self.locations, self.weights)

    def integrate(self, f) -> float:
        """Sum of f over the atoms, each repeated weight times."""
        if len(self) == 0:
            return 0.0
        return float(np.sum(np.asarray(f(self.expanded()), dtype=float)))


@dataclass(frozen=True)
class PhiSequence:
    values: tuple[float, ...]

    @property
    def N(self) -> int:
        return len(self.values)

    def __getitem__(self, j: int) -> float:
        return self.values[j]

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


def _residuals(H: DiscreteHamiltonian, lam: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """||H psi - lam psi|| for Euclidean-unit columns psi."""
    if len(lam) == 0:
        return np.zeros(0)
    A = H.sparse()
    R = A @ psi - psi * lam[None, :]
    return np.linalg.norm(R, axis=0)


def _lowest_complete(H: DiscreteHamiltonian, w: np.ndarray, kk: int, expected: int, tau_neg: float) -> bool:
    if len(w) < kk:
        return False
    if kk == expected:
        return int(np.count_nonzero(w < tau_neg)) == expected
    # truncated request: the first kk values must be exactly the kk lowest
    if len(w) > kk and w[kk] - w[kk - 1] > 0:
        return count_below_jittered(H, 0.5 * (w[kk - 1] + w[kk])) == kk
    return False


def _shift_invert(H: DiscreteHamiltonian, kk: int, expected: int, sigma: float, tau_neg: float):
    """Lowest kk eigenpairs by shift-invert Lanczos below the spectrum.

    Degenerate levels can hide copies from Lanczos, so a buffer of extra
    vectors is requested and enlarged until the lowest kk are stable.
    """
    A = H.sparse().tocsc()
    n = H.size
    extra = max(4, kk // 2)
    for _ in range(4):
        k = min(kk + extra, n - 2)
        try:
            w, v = spla.eigsh(A, k=k, sigma=sigma, which="LM", tol=1e-13,
                              ncv=min(n - 1, max(2 * k + 1, 20)), maxiter=20 * n)
        except spla.ArpackNoConvergence as exc:
            raise SolverError("shift-invert Lanczos did not converge",
                              getattr(exc, "eigenvalues", None)) from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        if _lowest_complete(H, w, kk, expected, tau_neg):
            return w[:kk], v[:, :kk]
        if k == n - 2:
            break
        extra *= 2
    raise SolverError(f"shift-invert Lanczos could not resolve {kk} eigenvalues below {tau_neg}")


def negative_eigenpairs(
    H: DiscreteHamiltonian,
    tau_neg: float | None = None,
    k_max: int = 64,
    eps_mult: float = DEFAULT_EPS_MULT,
    with_vectors: bool = True,
) -> NegativeSpectrum:
    """All eigenpairs of H below tau_neg (at most k_max of them, lowest first).

    d = 1 uses bisection + inverse iteration on the tridiagonal matrix; higher
    dimensions use a dense solver up to DENSE_LIMIT unknowns and shift-invert
    Lanczos beyond that.  The number found is cross-checked against the exact
    inertia count.
    """
    dom = H.domain
    if tau_neg is None:
        tau_neg = dom.default_tau_neg()
    if tau_neg > 0:
        raise ValueError(f"tau_neg must be <= 0, got {tau_neg}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")

    expected = count_below_jittered(H, tau_neg)
    if expected == 0:
        return NegativeSpectrum.empty(dom.shape, tau_neg, dom.dx, dom.d, eps_mult)

    lo = H.lower_bound() - 1.0
    if dom.d == 1:
        d, e = H.tridiagonal()
        kk = min(expected, k_max)
        if with_vectors:
            lam, psi = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, kk - 1))
        else:
            lam = sla.eigvalsh_tridiagonal(d, e, select="i", select_range=(0, kk - 1))
            psi = None
        found = int(np.count_nonzero(lam < tau_neg))
        if kk == expected and found != expected:
            raise SolverError(f"found {found} eigenvalues below {tau_neg}, inertia says {expected}")
        lam = lam[lam < tau_neg]
        if psi is not None:
            psi = psi[:, : len(lam)]
    elif H.size <= DENSE_LIMIT:
        sel = (0, min(expected, k_max) - 1)
        if with_vectors:
            w, v = sla.eigh(H.dense(), subset_by_index=sel)
            lam, psi = w[w < tau_neg], v[:, w < tau_neg]
        else:
            w = sla.eigh(H.dense(), subset_by_index=sel, eigvals_only=True)
            lam, psi = w[w < tau_neg], None
    else:
        lam, psi = _shift_invert(H, min(expected, k_max), expected, lo, tau_neg)

    found = len(lam)
    if found != min(expected, k_max):
        raise SolverError(f"count mismatch: solver found {found} eigenvalues below {tau_neg}, inertia count is {expected}")

    scale = H.norm_bound()
    if psi is None:
        res = np.zeros(found)
        vecs = None
    else:
        res = _residuals(H, lam, psi)
        if np.any(res > 1e-8 * scale):
            raise SolverError("eigenpair residuals above tolerance", res)
        # fix sign so that the largest-magnitude entry is positive (determinism)
        idx = np.argmax(np.abs(psi), axis=0)
        signs = np.sign(psi[idx, np.arange(found)])
        psi = psi * signs[None, :]
        vecs = (psi / np.sqrt(dom.cell_volume)).T.reshape((found, *dom.shape))
    return NegativeSpectrum(np.asarray(lam, dtype=float), vecs, float(tau_neg), dom.dx, dom.d,
                            eps_mult, res, expected)


def dense_negative_eigenvalues(H: DiscreteHamiltonian, tau_neg: float) -> np.ndarray:
    """Reference route: full dense symmetric eigendecomposition."""
    w = np.linalg.eigvalsh(H.dense())
    return w[w < tau_neg]


def spectrum_from_values(eigenvalues: np.ndarray, tau_neg: float, dx: float, d: int,
                         eps_mult: float = DEFAULT_EPS_MULT) -> NegativeSpectrum:
    """Eigenvalue-only spectrum from an external solver (e.g. the dense oracle)."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    lam = lam[lam < tau_neg]
    return NegativeSpectrum(lam, None, float(tau_neg), dx, d, eps_mult, None, len(lam))


def cluster_multiplicities(s: NegativeSpectrum) -> EigenvalueMeasure:
    lam = np.asarray(s.eigenvalues)
    if len(lam) == 0:
        return EigenvalueMeasure(np.zeros(0), np.zeros(0, dtype=int), np.zeros(0, dtype=int))
    labels = np.zeros(len(lam), dtype=int)
    for i in range(1, len(lam)):
        gap = lam[i] - lam[i - 1]
        tol = s.eps_mult * max(1.0, abs(lam[i]), abs(lam[i - 1]))
        labels[i] = labels[i - 1] + (0 if gap <= tol else 1)
    n_atoms = labels[-1] + 1
    weights = np.bincount(labels, minlength=n_atoms)
    locs = np.bincount(labels, weights=lam, minlength=n_atoms) / weights
    return EigenvalueMeasure(locs, weights.astype(int), labels)


def phi_map(s: NegativeSpectrum, N: int) -> PhiSequence:
    if N < 1:
        raise ValueError("N must be >= 1")
    vals = [float(x) for x in s.eigenvalues[:N]]
    vals += [0.0] * (N - len(vals))
    return PhiSequence(tuple(vals))
