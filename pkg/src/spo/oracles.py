"""Closed-form and transcendental reference values for one-dimensional wells."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError


def _check_well(depth: float, a: float) -> None:
    if not (depth > 0 and a > 0):
        raise DomainError("well depth and half-width must be positive")


def square_well_state_count(depth: float, a: float) -> int:
    """Bound states of -u'' - depth 1_[-a,a] u on the whole line."""
    _check_well(depth, a)
    return int(math.floor(2 * a * math.sqrt(depth) / math.pi)) + 1


def square_well_ground_state(depth: float, a: float) -> float:
    """Even ground state on the line: k tan(k a) = kappa, k^2 + kappa^2 = depth."""
    _check_well(depth, a)
    top = min(math.sqrt(depth), math.pi / (2 * a))

    def f(k):
        return k * math.tan(k * a) - math.sqrt(max(depth - k * k, 0.0))

    k = brentq(f, 1e-300, top * (1 - 1e-15), xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return -(depth - k * k)


def square_well_box_ground_state(depth: float, a: float, R: float) -> float | None:
    """Ground state with Dirichlet walls at +-R: k tan(k a) = kappa coth(kappa (R - a)).

    Returns None when the box pushes the ground state to or above zero.
    """
    _check_well(depth, a)
    if not R > a:
        raise DomainError("the box must contain the well")
    L = R - a

    def f(k):
        kap = math.sqrt(max(depth - k * k, 0.0))
        tail = 1.0 / L if kap * L < 1e-8 else kap / math.tanh(kap * L)
        return k * math.tan(k * a) - tail

    sq = math.sqrt(depth)
    top = min(sq, math.pi / (2 * a)) * (1 - 1e-15)
    if f(top) <= 0:
        return None
    k = brentq(f, 1e-300, top, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return -(depth - k * k)


def delta_ground_state(strength: float = 1.0) -> float:
    """-u'' - strength delta_0 u has the single eigenvalue -strength^2 / 4."""
    if not strength > 0:
        raise DomainError("strength must be positive")
    return -strength**2 / 4
