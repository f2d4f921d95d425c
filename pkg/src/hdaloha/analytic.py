"""Closed-form stationary distribution, stability region and delay.

Each queue ``i`` is geometric with ratio ``rho_i = lambda_i / (P_i (1 - lambda))``
where ``lambda = lambda_1 + lambda_2``; the joint distribution is the product
of the two marginals.  Full-duplex regions are provided as the baseline the
half-duplex network is compared against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import NetworkParams, ParameterError

__all__ = [
    "InstabilityError",
    "Utilization",
    "StabilityVerdict",
    "DelayResult",
    "RegionPolygon",
    "utilization",
    "is_stable",
    "normalization_constant",
    "joint_pmf",
    "marginal_pmf",
    "average_delay",
    "light_traffic_delay",
    "hd_region_vertices",
    "hd_boundary_lambda2",
    "hd_region_area",
    "fd_region_vertices",
    "fd_region_area",
    "polygon_area",
    "symmetric_corner",
]


class InstabilityError(ValueError):
    """Raised when a stationary quantity is requested outside the stability region."""


class Utilization(NamedTuple):
    rho1: float
    rho2: float


class StabilityVerdict(NamedTuple):
    """Result of :func:`is_stable`; truthy iff stable."""

    stable: bool
    diagnostic: str
    utilization: Optional[Utilization]

    def __bool__(self):
        return self.stable


class DelayResult(NamedTuple):
    """Average delays (slots) and mean queue lengths.

    ``d1``/``d2`` are ``None`` for a node without traffic.
    """

    d1: Optional[float]
    d2: Optional[float]
    mean_q1: float
    mean_q2: float


@dataclass(frozen=True)
class RegionPolygon:
    """Counterclockwise vertex list in the ``(lambda1, lambda2)`` plane, starting at the origin."""

    vertices: tuple[tuple[float, float], ...]
    kind: str  # "half_duplex" | "full_duplex"

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)


def _rho(lam_i, p_i, lam):
    if lam_i == 0:
        return 0.0
    if lam >= 1:
        raise ParameterError("utilization undefined: lambda1 + lambda2 = 1 with traffic")
    return lam_i / (p_i * (1.0 - lam))


def utilization(params: NetworkParams) -> Utilization:
    """Per-queue utilization ``rho_i = lambda_i / (P_i (1 - lambda))``."""
    lam = params.lam
    return Utilization(_rho(params.lambda1, params.p1, lam), _rho(params.lambda2, params.p2, lam))


def is_stable(params: NetworkParams) -> StabilityVerdict:
    """Check ``rho_1 < 1`` and ``rho_2 < 1``.

    Boundary points (``rho_i == 1``, or total load 1 with traffic) count as
    unstable.  Never raises for valid params; the diagnostic names the failing
    condition.
    """
    lam = params.lam
    if lam >= 1 and (params.lambda1 > 0 or params.lambda2 > 0):
        return StabilityVerdict(False, "unstable: lambda1 + lambda2 = 1", None)
    u = utilization(params)
    bad = [f"rho{i}={r:.6g}" for i, r in ((1, u.rho1), (2, u.rho2)) if r >= 1]
    if bad:
        return StabilityVerdict(False, "unstable: " + ", ".join(bad), u)
    return StabilityVerdict(True, f"stable: rho1={u.rho1:.6g}, rho2={u.rho2:.6g}", u)


def _stable_utilization(params) -> Utilization:
    verdict = is_stable(params)
    if not verdict:
        raise InstabilityError(verdict.diagnostic)
    return verdict.utilization


def normalization_constant(params: NetworkParams) -> float:
    """``c = (1 - rho_1)(1 - rho_2)``, the stationary mass of the empty state."""
    r1, r2 = _stable_utilization(params)
    return (1.0 - r1) * (1.0 - r2)


def joint_pmf(params: NetworkParams, state) -> float:
    """Stationary probability of queue lengths ``state = (n1, n2)``."""
    r1, r2 = _stable_utilization(params)
    n1, n2 = state
    return (1.0 - r1) * (1.0 - r2) * r1**n1 * r2**n2


def marginal_pmf(params: NetworkParams, node: int, n: int) -> float:
    """Geometric marginal ``(1 - rho_i) rho_i**n`` of queue ``node``."""
    u = _stable_utilization(params)
    if node not in (1, 2):
        raise ValueError(f"node must be 1 or 2, got {node!r}")
    r = u[node - 1]
    return (1.0 - r) * r**n


def average_delay(params: NetworkParams) -> DelayResult:
    """Little's-law delay ``D_i = rho_i / (lambda_i (1 - rho_i))``.

    ``D_i`` is reported as ``None`` when ``lambda_i == 0``; see
    :func:`light_traffic_delay` for the limit value.
    """
    r1, r2 = _stable_utilization(params)
    q1 = r1 / (1.0 - r1)
    q2 = r2 / (1.0 - r2)
    d1 = q1 / params.lambda1 if params.lambda1 > 0 else None
    d2 = q2 / params.lambda2 if params.lambda2 > 0 else None
    return DelayResult(d1, d2, q1, q2)


def light_traffic_delay(params: NetworkParams, node: int) -> float:
    """Limit of ``D_i`` as ``lambda_i -> 0`` with the other rate fixed: ``1 / (P_i (1 - lambda))``."""
    p = params.p1 if node == 1 else params.p2
    other = params.lambda2 if node == 1 else params.lambda1
    return 1.0 / (p * (1.0 - other))


def _check_p(p1, p2):
    if not (0 < p1 <= 1 and 0 < p2 <= 1):
        raise ParameterError("transmission probabilities must lie in (0, 1]")


def hd_region_vertices(p1: float, p2: float) -> RegionPolygon:
    """Half-duplex stability region.

    Vertices ``(0,0)``, ``(P1/(1+P1), 0)``, ``(P1/s, P2/s)`` with
    ``s = 1+P1+P2``, and ``(0, P2/(1+P2))``.  ``P_i = 1`` is accepted for
    area studies.
    """
    _check_p(p1, p2)
    s = 1.0 + p1 + p2
    return RegionPolygon(
        ((0.0, 0.0), (p1 / (1.0 + p1), 0.0), (p1 / s, p2 / s), (0.0, p2 / (1.0 + p2))),
        "half_duplex",
    )


def symmetric_corner(p: float) -> float:
    """Per-node arrival rate at the symmetric corner, ``P / (1 + 2P)``."""
    return p / (1.0 + 2.0 * p)


def hd_boundary_lambda2(p1: float, p2: float, lambda1: float) -> float:
    """Supremum of ``lambda2`` keeping both utilizations below one.

    The first segment solves ``rho_2 = 1`` (``lambda2 = P2 (1 - lambda1) / (1 + P2)``),
    the second ``rho_1 = 1`` (``lambda2 = (P1 - lambda1 (1 + P1)) / P1``).
    At the vertex abscissae the vertex ordinate of :func:`hd_region_vertices`
    is returned bit for bit.
    """
    _check_p(p1, p2)
    intercept = p1 / (1.0 + p1)
    if lambda1 < 0 or lambda1 > intercept * (1 + 1e-12):
        raise ParameterError(f"lambda1={lambda1!r} outside [0, P1/(1+P1)] = [0, {intercept!r}]")
    for x, y in hd_region_vertices(p1, p2).vertices[1:]:
        if lambda1 == x:
            return y
    seg2 = p2 * (1.0 - lambda1) / (1.0 + p2)
    seg1 = (p1 - lambda1 * (1.0 + p1)) / p1
    return max(0.0, min(seg2, seg1))


def hd_region_area(p1: float, p2: float) -> float:
    """Area of the half-duplex region, ``P1 P2 (2+P1+P2) / (2 (1+P1)(1+P2)(1+P1+P2))``."""
    _check_p(p1, p2)
    return p1 * p2 * (2.0 + p1 + p2) / (2.0 * (1.0 + p1) * (1.0 + p2) * (1.0 + p1 + p2))


def fd_region_vertices(p1: float, p2: float) -> RegionPolygon:
    """Full-duplex baseline region through ``(P1,0)``, ``(P1(1-P2), P2(1-P1))``, ``(0,P2)``.

    Both boundary pieces are drawn as straight segments through the corner.
    At ``P1 = P2 = 1`` the inner corner collapses to the origin.
    """
    _check_p(p1, p2)
    return RegionPolygon(
        ((0.0, 0.0), (p1, 0.0), (p1 * (1.0 - p2), p2 * (1.0 - p1)), (0.0, p2)),
        "full_duplex",
    )


def fd_region_area(p1: float, p2: float) -> float:
    """Area of the full-duplex region, ``P1 P2 (2 - P1 - P2) / 2``."""
    _check_p(p1, p2)
    return p1 * p2 * (2.0 - p1 - p2) / 2.0


def polygon_area(poly) -> float:
    """Shoelace area of a simple polygon (a :class:`RegionPolygon` or vertex sequence)."""
    verts = poly.vertices if isinstance(poly, RegionPolygon) else poly
    pts = np.asarray(verts, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
