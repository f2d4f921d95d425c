"""Domain types and the movement-vector algebra of the two-node network.

A slot moves the network state ``(n1, n2)`` by at most one departure and at
most one arrival, never at the same node.  The seven admissible movements are
indexed by ``(i, j)`` where ``i`` is the departing node and ``j`` the arriving
node (``0`` meaning the outside world).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

__all__ = [
    "ParameterError",
    "PreconditionError",
    "NetworkParams",
    "NetworkState",
    "MovementVector",
    "MovementClass",
    "MOVEMENTS",
    "validate_params",
    "movement_set",
    "movement",
    "apply_movement",
    "movement_class",
    "class_members",
]


class ParameterError(ValueError):
    """Raised when network parameters violate a model constraint."""


class PreconditionError(ValueError):
    """Raised when an operation is applied outside its domain."""


@dataclass(frozen=True)
class NetworkParams:
    """Arrival and transmission probabilities of the two nodes.

    Construct through :func:`validate_params` (or directly; ``__post_init__``
    runs the same checks).
    """

    lambda1: float
    lambda2: float
    p1: float
    p2: float

    def __post_init__(self):
        _check_params(self.lambda1, self.lambda2, self.p1, self.p2)

    @property
    def lam(self) -> float:
        """Total per-slot arrival probability of the network."""
        return self.lambda1 + self.lambda2

    def as_dict(self) -> dict:
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "p1": self.p1, "p2": self.p2}


def _check_params(lambda1, lambda2, p1, p2):
    for name, v in (("lambda1", lambda1), ("lambda2", lambda2), ("p1", p1), ("p2", p2)):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ParameterError(f"{name} must be a finite real, got {v!r}")
    if lambda1 < 0:
        raise ParameterError("lambda1 < 0")
    if lambda2 < 0:
        raise ParameterError("lambda2 < 0")
    if lambda1 + lambda2 > 1:
        raise ParameterError("lambda1 + lambda2 > 1")
    if not 0 < p1 < 1:
        raise ParameterError("p1 ∉ (0,1)")
    if not 0 < p2 < 1:
        raise ParameterError("p2 ∉ (0,1)")


def validate_params(lambda1: float, lambda2: float, p1: float, p2: float) -> NetworkParams:
    """Return validated :class:`NetworkParams`.

    Raises
    ------
    ParameterError
        If any constraint is violated; the message names the constraint,
        e.g. ``"lambda1 + lambda2 > 1"`` or ``"p1 ∉ (0,1)"``.
    """
    return NetworkParams(float(lambda1), float(lambda2), float(p1), float(p2))


class NetworkState(NamedTuple):
    """Queue lengths ``(n1, n2)`` at a slot boundary."""

    n1: int
    n2: int

    @classmethod
    def of(cls, n1: int, n2: int) -> "NetworkState":
        if n1 < 0 or n2 < 0:
            raise PreconditionError(f"queue lengths must be non-negative, got ({n1}, {n2})")
        return cls(int(n1), int(n2))


@dataclass(frozen=True)
class MovementVector:
    """One slot's movement: departures ``dep`` and arrivals ``arr``.

    ``tag`` is the pair ``(i, j)``: ``i`` the departing node, ``j`` the
    arriving node, ``0`` for none.
    """

    dep: tuple[int, int]
    arr: tuple[int, int]
    tag: tuple[int, int]

    @property
    def norm(self) -> int:
        return sum(self.dep) + sum(self.arr)

    def __repr__(self):
        return f"a{self.tag}"


def _make(i: int, j: int) -> MovementVector:
    dep = (int(i == 1), int(i == 2))
    arr = (int(j == 1), int(j == 2))
    return MovementVector(dep, arr, (i, j))


# canonical order
MOVEMENTS: tuple[MovementVector, ...] = tuple(
    _make(i, j) for i, j in ((0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1), (0, 0))
)
_BY_TAG = {m.tag: m for m in MOVEMENTS}


def movement_set() -> list[MovementVector]:
    """The seven admissible movement vectors in canonical order."""
    return list(MOVEMENTS)


def movement(i: int, j: int) -> MovementVector:
    """Look up the movement with departing node ``i`` and arriving node ``j``."""
    try:
        return _BY_TAG[(i, j)]
    except KeyError:
        raise PreconditionError(f"no movement a({i},{j})") from None


def _is_valid(state, m: MovementVector) -> bool:
    return state[0] >= m.dep[0] and state[1] >= m.dep[1]


def apply_movement(state, m: MovementVector) -> NetworkState:
    """State after one slot realizing movement ``m``: ``n - dep + arr``."""
    if not _is_valid(state, m):
        raise PreconditionError("departure from empty queue")
    return NetworkState(state[0] - m.dep[0] + m.arr[0], state[1] - m.dep[1] + m.arr[1])


# non-canonical movement -> its canonical partner in the same class
_PARTNER = {(1, 0): (0, 1), (2, 0): (0, 2), (2, 1): (1, 2)}
_PARTNER.update({v: k for k, v in _PARTNER.items()})
REPRESENTATIVE_TAGS = ((0, 1), (0, 2), (1, 2), (0, 0))


@dataclass(frozen=True)
class MovementClass:
    """Equivalence class of ``(state, movement)`` pairs sharing ``n - dep``.

    Attributes
    ----------
    base_state : NetworkState
        The class key ``n - dep``, common to every member.
    representative : tuple
        ``(state, movement)`` member whose movement is one of
        ``a(0,1), a(0,2), a(1,2), a(0,0)``.
    """

    base_state: NetworkState
    representative: tuple[NetworkState, MovementVector]

    @property
    def is_singleton(self) -> bool:
        return self.representative[1].tag == (0, 0)


def _member_for(base, m: MovementVector) -> NetworkState:
    return NetworkState(base[0] + m.dep[0], base[1] + m.dep[1])


def movement_class(state, m: MovementVector) -> MovementClass:
    """Class of the pair ``(state, m)`` with its canonical representative.

    Non-canonical members pair with the canonical movement that swaps the
    roles of departing and arriving node: ``a(1,0)`` with ``a(0,1)``,
    ``a(2,0)`` with ``a(0,2)`` and ``a(2,1)`` with ``a(1,2)``.  The paired
    state is fixed by the shared key ``n - dep``.
    """
    if not _is_valid(state, m):
        raise PreconditionError("departure from empty queue")
    base = NetworkState(state[0] - m.dep[0], state[1] - m.dep[1])
    if m.tag in REPRESENTATIVE_TAGS:
        return MovementClass(base, (NetworkState(*state), m))
    rep = _BY_TAG[_PARTNER[m.tag]]
    return MovementClass(base, (_member_for(base, rep), rep))


def class_members(cls: MovementClass) -> list[tuple[NetworkState, MovementVector]]:
    """All members of ``cls``: two pairs, or one for the ``a(0,0)`` class."""
    rep_state, rep = cls.representative
    if rep.tag == (0, 0):
        return [(rep_state, rep)]
    other = _BY_TAG[_PARTNER[rep.tag]]
    return [(rep_state, rep), (_member_for(cls.base_state, other), other)]
