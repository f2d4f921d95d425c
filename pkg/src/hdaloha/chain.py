"""Slot transition kernel, product-form witness and the truncated-chain oracle.

The kernel gives the probability ``xi(n, a)`` that a slot starting in state
``n`` realizes movement ``a``.  The witness functions ``Phi``, ``Psi`` and
``nu`` satisfy ``xi(n, a) Phi(n) = Psi(<n, a>) nu(<n, a>)`` at every valid
pair, which is what makes ``c Phi`` the stationary distribution.  The truncated
chain solves the same dynamics numerically on ``n_i <= N`` and serves as an
independent check of the closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse.linalg import spsolve

from . import analytic
from .core import (
    MOVEMENTS,
    MovementClass,
    MovementVector,
    NetworkParams,
    NetworkState,
    PreconditionError,
    apply_movement,
    class_members,
    movement_class,
)

__all__ = [
    "ConvergenceError",
    "sgn",
    "slot_rate",
    "rate_row",
    "ProductFormWitness",
    "witness",
    "IdentityReport",
    "verify_theorem_identity",
    "TruncatedChain",
    "build_truncated_kernel",
    "stationary_distribution",
    "choose_truncation",
    "compare_to_product_form",
]

BOUNDARY_POLICIES = ("reflect-to-self", "reject-to-self")


class ConvergenceError(RuntimeError):
    """Stationary solver failed to reach the requested residual."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def sgn(n: int) -> int:
    return 1 if n != 0 else 0


def _valid(state, m: MovementVector) -> bool:
    return state[0] >= m.dep[0] and state[1] >= m.dep[1]


def slot_rate(params: NetworkParams, state, m: MovementVector) -> float:
    """Probability ``xi(state, m)`` that the slot realizes movement ``m``.

    An arrival at node ``i`` suppresses node ``i``'s transmission; a lone
    transmission succeeds, two collide.
    """
    if not _valid(state, m):
        raise PreconditionError("departure from empty queue")
    l1, l2, p1, p2 = params.lambda1, params.lambda2, params.p1, params.p2
    lam = l1 + l2
    s1, s2 = sgn(state[0]), sgn(state[1])
    tag = m.tag
    if tag == (0, 1):
        return l1 * (1 - p2) ** s2
    if tag == (1, 0):
        return (1 - lam) * p1 * (1 - p2) ** s2
    if tag == (0, 2):
        return l2 * (1 - p1) ** s1
    if tag == (2, 0):
        return (1 - lam) * (1 - p1) ** s1 * p2
    if tag == (1, 2):
        return l2 * p1
    if tag == (2, 1):
        return l1 * p2
    return (1 - lam) * (1 - p1) ** s1 * (1 - p2) ** s2 + (1 - lam) * p1 * p2 * s1 * s2


def rate_row(params: NetworkParams, state) -> dict[tuple[int, int], float]:
    """``xi(state, .)`` over the movements valid at ``state``, keyed by tag."""
    return {m.tag: slot_rate(params, state, m) for m in MOVEMENTS if _valid(state, m)}


@dataclass
class ProductFormWitness:
    """The functions ``Phi``/``Psi_1``, ``Psi_2`` and ``nu`` for one parameter set.

    ``nu_params`` defaults to ``params``; passing different values (or a
    non-empty ``nu_perturbation``) builds a deliberately wrong witness for
    fault-injection checks.  ``nu_perturbation`` maps
    ``(state, movement tag)`` to an additive offset on that pair.
    """

    params: NetworkParams
    nu_params: Optional[NetworkParams] = None
    nu_perturbation: Mapping[tuple, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.params.lam >= 1:
            raise PreconditionError("witness requires lambda1 + lambda2 < 1")
        if self.nu_params is None:
            self.nu_params = self.params
        p = self.params
        self._g1 = p.lambda1 / (p.p1 * (1 - p.lam))
        self._g2 = p.lambda2 / (p.p2 * (1 - p.lam))

    def phi(self, x) -> float:
        """``P1^-x1 P2^-x2 (lambda1/(1-lambda))^x1 (lambda2/(1-lambda))^x2``."""
        return self._g1 ** x[0] * self._g2 ** x[1]

    psi1 = phi

    @staticmethod
    def psi2(cls: MovementClass) -> NetworkState:
        return cls.base_state

    def psi(self, cls: MovementClass) -> float:
        return self.psi1(self.psi2(cls))

    def nu_class(self, cls: MovementClass) -> float:
        """``nu`` evaluated on the class representative."""
        q = self.nu_params
        l1, l2, p1, p2 = q.lambda1, q.lambda2, q.p1, q.p2
        lam = l1 + l2
        n, m = cls.representative
        s1, s2 = sgn(n[0]), sgn(n[1])
        tag = m.tag
        if tag == (0, 1):
            return l1 * (1 - p2) ** s2
        if tag == (0, 2):
            return l2 * (1 - p1) ** s1
        if tag == (1, 2):
            return l1 * l2 / (1 - lam)
        return (1 - lam) * (1 - p1) ** s1 * (1 - p2) ** s2 + (1 - lam) * p1 * p2 * s1 * s2

    def nu(self, state, m: MovementVector) -> float:
        """``nu`` at a member pair; members inherit the value of their class."""
        value = self.nu_class(movement_class(state, m))
        if self.nu_perturbation:
            value += self.nu_perturbation.get((tuple(state), m.tag), 0.0)
        return value

    def c_inv(self) -> float:
        """``sum_n Phi(n)``; finite only inside the stability region."""
        if self._g1 >= 1 or self._g2 >= 1:
            return math.inf
        return 1.0 / ((1 - self._g1) * (1 - self._g2))


def witness(params: NetworkParams, nu_params=None, nu_perturbation=None) -> ProductFormWitness:
    return ProductFormWitness(params, nu_params, dict(nu_perturbation or {}))


@dataclass
class IdentityReport:
    params: NetworkParams
    window: int
    max_abs_error: float
    worst_pair: Optional[tuple]
    worst_class: Optional[MovementClass]
    nu_consistency_ok: bool
    nu_inconsistent: list = field(default_factory=list)
    pairs_checked: int = 0
    tv_distance: Optional[float] = None

    def passed(self, tol: float = 1e-12) -> bool:
        return self.max_abs_error <= tol and self.nu_consistency_ok

    def to_dict(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "window": self.window,
            "max_abs_error": self.max_abs_error,
            "worst_pair": None if self.worst_pair is None
            else {"state": list(self.worst_pair[0]), "movement": list(self.worst_pair[1].tag)},
            "worst_class": None if self.worst_class is None
            else {"base_state": list(self.worst_class.base_state),
                  "representative_state": list(self.worst_class.representative[0]),
                  "representative_movement": list(self.worst_class.representative[1].tag)},
            "nu_consistency_ok": self.nu_consistency_ok,
            "pairs_checked": self.pairs_checked,
            "tv_distance": self.tv_distance,
        }


def verify_theorem_identity(params: NetworkParams, window: int, wit: ProductFormWitness = None) -> IdentityReport:
    """Check ``xi(n,a) Phi(n) == Psi(<n,a>) nu(<n,a>)`` on ``n_i <= window``.

    Products are compared rather than quotients so that small ``Phi`` at large
    states does not amplify rounding.  Also checks that the members of every
    class touched by the window agree on ``nu``.  Failures are reported, not
    raised.
    """
    if window < 2:
        raise PreconditionError("window must be >= 2")
    wit = wit if wit is not None else witness(params)
    worst, worst_pair, worst_cls = 0.0, None, None
    inconsistent = []
    checked = 0
    seen = set()
    for n1 in range(window + 1):
        for n2 in range(window + 1):
            state = NetworkState(n1, n2)
            phi = wit.phi(state)
            for m in MOVEMENTS:
                if not _valid(state, m):
                    continue
                cls = movement_class(state, m)
                lhs = slot_rate(params, state, m) * phi
                rhs = wit.psi(cls) * wit.nu(state, m)
                err = abs(lhs - rhs)
                checked += 1
                if err > worst or worst_pair is None:
                    worst, worst_pair, worst_cls = err, (state, m), cls
                key = (cls.base_state, cls.representative[1].tag)
                if key in seen:
                    continue
                seen.add(key)
                values = {wit.nu(s, mm) for s, mm in class_members(cls)}
                if len(values) > 1:
                    inconsistent.append(cls)
    return IdentityReport(params, window, worst, worst_pair, worst_cls,
                          not inconsistent, inconsistent, checked)


@dataclass
class TruncatedChain:
    """Slot-level chain restricted to ``0 <= n_i <= truncation``.

    State ``(n1, n2)`` has index ``n1 * (truncation + 1) + n2``.
    """

    params: NetworkParams
    truncation: int
    kernel: sp.csr_matrix
    boundary_policy: str = BOUNDARY_POLICIES[0]

    @property
    def size(self) -> int:
        return (self.truncation + 1) ** 2

    def index(self, state) -> int:
        return state[0] * (self.truncation + 1) + state[1]

    def states(self) -> np.ndarray:
        g = np.arange(self.truncation + 1)
        return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)


def build_truncated_kernel(params: NetworkParams, N: int, boundary_policy: str = "reflect-to-self") -> TruncatedChain:
    """Sparse row-stochastic kernel on ``n_i <= N``.

    ``"reflect-to-self"`` drops an arrival to a queue already at ``N`` and
    applies the rest of the movement; a pure arrival at the cap becomes a
    self-loop.  ``"reject-to-self"`` turns every movement whose target leaves
    the window into a self-loop, departure included.
    """
    if N < 1:
        raise PreconditionError("truncation must be >= 1")
    if boundary_policy not in BOUNDARY_POLICIES:
        raise ValueError(f"boundary_policy must be one of {BOUNDARY_POLICIES}")
    reject = boundary_policy == "reject-to-self"
    side = N + 1
    rows, cols, vals = [], [], []
    for n1 in range(side):
        for n2 in range(side):
            src = n1 * side + n2
            state = (n1, n2)
            for tag, rate in rate_row(params, state).items():
                if rate == 0.0:
                    continue
                t1, t2 = apply_movement(state, _TAG[tag])
                if reject and (t1 > N or t2 > N):
                    dst = src
                else:
                    dst = min(t1, N) * side + min(t2, N)
                rows.append(src)
                cols.append(dst)
                vals.append(rate)
    # duplicate (src, dst) entries are summed on conversion
    K = sp.coo_matrix((vals, (rows, cols)), shape=(side * side, side * side)).tocsr()
    K.sum_duplicates()
    return TruncatedChain(params, N, K, boundary_policy)


_TAG = {m.tag: m for m in MOVEMENTS}


def _residual(pi, K) -> float:
    return float(np.abs(K.T @ pi - pi).sum())


def stationary_distribution(chain: TruncatedChain, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary pmf of the truncated chain, indexed like :meth:`TruncatedChain.index`.

    The chain is restricted to the states reachable from ``(0, 0)``, which is
    the closed class (it is everything when both arrival rates are positive).
    A direct sparse solve is used first; if its L1 residual ``||pi K - pi||``
    exceeds ``tol`` the result is polished by fixed-point iteration.

    Raises
    ------
    ConvergenceError
        If the residual is still above ``tol`` after ``max_iter`` iterations.
    """
    K = chain.kernel
    reach = np.sort(breadth_first_order(K, 0, directed=True, return_predecessors=False))
    Kr = K[reach][:, reach].tocsr()
    n = Kr.shape[0]
    if n == 1:
        pi_r = np.ones(1)
    else:
        A = (Kr.T - sp.identity(n, format="csr")).tolil()
        A[0, :] = 1.0
        b = np.zeros(n)
        b[0] = 1.0
        pi_r = spsolve(A.tocsc(), b)
        pi_r = np.clip(pi_r, 0.0, None)
        pi_r /= pi_r.sum()
    res = _residual(pi_r, Kr)
    it = 0
    KrT = Kr.T.tocsr()
    while res > tol and it < max_iter:
        pi_r = KrT @ pi_r
        pi_r /= pi_r.sum()
        it += 1
        if it % 100 == 0:
            res = _residual(pi_r, Kr)
    if res > tol:
        res = _residual(pi_r, Kr)
        if res > tol:
            raise ConvergenceError("stationary solve did not converge", res)
    pi = np.zeros(chain.size)
    pi[reach] = pi_r
    return pi


def choose_truncation(params: NetworkParams, tail: float = 1e-10, cap: int = 512) -> int:
    """Smallest ``N`` with ``max(rho_1, rho_2)**N <= tail``, capped at ``cap``."""
    r = max(analytic.utilization(params))
    if r == 0:
        return 1
    if r >= 1:
        raise analytic.InstabilityError("truncation undefined for unstable params")
    return max(1, min(cap, math.ceil(math.log(tail) / math.log(r))))


def product_form_on_window(params: NetworkParams, N: int) -> np.ndarray:
    """``c Phi`` restricted to ``n_i <= N`` and renormalized, in chain index order."""
    r1, r2 = analytic.utilization(params)
    g = np.arange(N + 1)
    m1 = r1**g
    m2 = r2**g
    joint = np.outer(m1, m2).ravel()
    return joint / joint.sum()


def compare_to_product_form(params: NetworkParams, N: int, tol: float = 1e-12,
                            boundary_policy: str = "reflect-to-self") -> float:
    """Total-variation distance between the truncated-chain solution and ``c Phi``.

    ``tol`` is the solver residual tolerance.  The closed form is restricted
    to the window and renormalized before comparing.
    """
    if not analytic.is_stable(params):
        raise analytic.InstabilityError(analytic.is_stable(params).diagnostic)
    chain = build_truncated_kernel(params, N, boundary_policy)
    pi = stationary_distribution(chain, tol)
    return 0.5 * float(np.abs(pi - product_form_on_window(params, N)).sum())
