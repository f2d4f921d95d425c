"""Seeded slot-level Monte Carlo simulation of the two-node network.

Half duplex (the analysed protocol)
    One uniform draw per slot decides the network arrival: node 1 with
    probability ``lambda1``, node 2 with ``lambda2``, none otherwise.  A node
    transmits only if it received nothing this slot, held a packet at the
    slot boundary, and its ``P_i`` coin succeeds.

Full duplex (baseline)
    Early departure, late arrival: transmissions are decided on slot-start
    occupancy, then each node receives independently with probability
    ``lambda_i``.

In both modes two simultaneous transmissions collide and neither departs;
queues are FIFO.  Randomness comes from ``numpy.random.PCG64(seed)`` and the
draw layout is fixed (blocks of ``BLOCK`` slots, columns documented in
:mod:`hdaloha._kernels`), so a seed reproduces a run bit for bit on any
platform.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels as K
from .core import NetworkParams, NetworkState, ParameterError, validate_params

__all__ = [
    "HALF_DUPLEX",
    "FULL_DUPLEX",
    "SimConfig",
    "SimStats",
    "EmpiricalDelay",
    "simulate",
    "empirical_delay",
    "stability_ratio",
    "DetectorConfig",
    "BoundaryEstimate",
    "BracketError",
    "find_boundary_lambda2",
]

log = logging.getLogger(__name__)

HALF_DUPLEX = "half_duplex"
FULL_DUPLEX = "full_duplex"
MODES = (HALF_DUPLEX, FULL_DUPLEX)
BLOCK = 1 << 17
DEFAULT_SLOTS = 200_000


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    ``warmup`` defaults to 10% of ``slots``; pass ``0`` to measure from the
    first slot.
    """

    params: NetworkParams
    slots: int = DEFAULT_SLOTS
    seed: int = 0
    warmup: Optional[int] = None
    mode: str = HALF_DUPLEX

    def __post_init__(self):
        if self.slots <= 0:
            raise ParameterError("slots must be positive")
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.slots // 10)
        if not 0 <= self.warmup < self.slots:
            raise ParameterError("warmup must satisfy 0 <= warmup < slots")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")


@dataclass
class SimStats:
    """Counters accumulated by :func:`simulate`.

    ``arrivals``, ``departures`` and ``collisions`` cover the whole run;
    ``qsum``, ``sojourn_sum`` and the ``measured_*`` counters only the slots
    after warmup.  ``sojourn_sum`` adds ``departure_slot - arrival_slot`` over
    packets departing in the measured window.
    """

    arrivals: tuple[int, int]
    departures: tuple[int, int]
    collisions: int
    qsum: tuple[float, float]
    sojourn_sum: tuple[float, float]
    measured_slots: int
    measured_arrivals: tuple[int, int]
    measured_departures: tuple[int, int]
    final_state: NetworkState
    trace: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        d["final_state"] = list(self.final_state)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def to_json(self, **extra) -> str:
        return json.dumps({**extra, **self.to_dict()}, sort_keys=False)

    @property
    def mean_queue(self) -> tuple[float, float]:
        return (self.qsum[0] / self.measured_slots, self.qsum[1] / self.measured_slots)


def simulate(config: SimConfig, trace: bool = False) -> SimStats:
    """Run the slot simulation described by ``config``.

    With ``trace=True`` the returned stats carry an ``(slots, 5)`` int8 array
    with per-slot columns ``arr1, arr2, dep1, dep2, collision``.
    """
    p = config.params
    half = config.mode == HALF_DUPLEX
    ncols = 3 if half else 4
    gen = np.random.Generator(np.random.PCG64(config.seed))
    q, counters, reals, arr_times, tr = K.new_buffers(config.slots, trace)
    k = 0
    while k < config.slots:
        b = min(BLOCK, config.slots - k)
        u = gen.random((b, ncols))
        K.run_block(u, k, half, p.lambda1, p.lambda2, p.p1, p.p2, config.warmup,
                    q, counters, reals, arr_times, tr, trace)
        k += b
    c = [int(x) for x in counters]
    return SimStats(
        arrivals=(c[K.ARR1], c[K.ARR2]),
        departures=(c[K.DEP1], c[K.DEP2]),
        collisions=c[K.COLL],
        qsum=(float(reals[K.QSUM1]), float(reals[K.QSUM2])),
        sojourn_sum=(float(reals[K.SOJ1]), float(reals[K.SOJ2])),
        measured_slots=config.slots - config.warmup,
        measured_arrivals=(c[K.MARR1], c[K.MARR2]),
        measured_departures=(c[K.MDEP1], c[K.MDEP2]),
        final_state=NetworkState(int(q[0]), int(q[1])),
        trace=tr if trace else None,
    )


class EmpiricalDelay(NamedTuple):
    """Per-node delay estimates in slots; ``None`` where undefined.

    ``little`` is mean boundary queue length over empirical arrival rate,
    ``sojourn`` the mean of ``departure_slot - arrival_slot``.
    """

    little: tuple[Optional[float], Optional[float]]
    sojourn: tuple[Optional[float], Optional[float]]


def empirical_delay(stats: SimStats, config: SimConfig = None) -> EmpiricalDelay:
    little = tuple(
        stats.qsum[i] / stats.measured_arrivals[i] if stats.measured_arrivals[i] > 0 else None
        for i in range(2)
    )
    sojourn = tuple(
        stats.sojourn_sum[i] / stats.measured_departures[i] if stats.measured_departures[i] > 0 else None
        for i in range(2)
    )
    return EmpiricalDelay(little, sojourn)


def stability_ratio(stats: SimStats) -> float:
    """Arrived over departed packets; ``inf`` if nothing departed, ``1`` for an empty run."""
    a = sum(stats.arrivals)
    d = sum(stats.departures)
    if d == 0:
        return 1.0 if a == 0 else math.inf
    return a / d


@dataclass(frozen=True)
class DetectorConfig:
    """Empirical instability detector and bisection settings.

    A probe is unstable when :func:`stability_ratio` exceeds ``threshold``
    after ``slots`` slots.  Bisection stops once the bracket half-width is at
    most ``halfwidth``; the final bracket ends are then re-probed over
    ``2 * slots`` when ``confirm`` is set.
    """

    slots: int = DEFAULT_SLOTS
    threshold: float = 1.02
    seed: int = 0
    warmup: int = 0
    halfwidth: float = 0.0025
    confirm: bool = True
    max_retries: int = 4


class BoundaryEstimate(NamedTuple):
    lambda2: float
    halfwidth: float
    probes: list


class BracketError(RuntimeError):
    """The detector classified the bracket inconsistently."""

    def __init__(self, message, probes):
        super().__init__(message)
        self.probes = probes


def _probe(p1, p2, lambda1, lambda2, det: DetectorConfig, slots, probes) -> bool:
    lambda2 = min(lambda2, 1.0 - lambda1)
    cfg = SimConfig(validate_params(lambda1, lambda2, p1, p2), slots, det.seed, det.warmup, HALF_DUPLEX)
    ratio = stability_ratio(simulate(cfg))
    unstable = ratio > det.threshold
    probes.append((lambda2, slots, ratio, unstable))
    return unstable


def find_boundary_lambda2(p1: float, p2: float, lambda1: float, detector: DetectorConfig = None) -> BoundaryEstimate:
    """Estimate the smallest unstable ``lambda2`` for a given ``lambda1`` by bisection.

    Every probe reuses ``detector.seed`` (common random numbers), which keeps
    the classification close to monotone in ``lambda2``.  Returns the midpoint
    of the final bracket and its half-width.  If ``lambda2 = 0`` already
    tests unstable the estimate is ``0`` with zero half-width.

    Raises
    ------
    BracketError
        When ``lambda2 = 1 - lambda1`` tests stable, or confirmation keeps
        contradicting the bracket; ``probes`` holds
        ``(lambda2, slots, ratio, unstable)`` tuples.
    """
    det = detector or DetectorConfig()
    probes: list = []
    top = 1.0 - lambda1
    if not _probe(p1, p2, lambda1, top, det, det.slots, probes):
        raise BracketError(f"lambda2={top} tested stable; no instability to bracket", probes)
    if _probe(p1, p2, lambda1, 0.0, det, det.slots, probes):
        return BoundaryEstimate(0.0, 0.0, probes)
    lo, hi = 0.0, top
    for _ in range(det.max_retries + 1):
        while (hi - lo) / 2 > det.halfwidth:
            mid = 0.5 * (lo + hi)
            if _probe(p1, p2, lambda1, mid, det, det.slots, probes):
                hi = mid
            else:
                lo = mid
        if not det.confirm:
            break
        width = hi - lo
        lo_bad = lo > 0 and _probe(p1, p2, lambda1, lo, det, 2 * det.slots, probes)
        hi_ok = hi < top and not _probe(p1, p2, lambda1, hi, det, 2 * det.slots, probes)
        if not lo_bad and not hi_ok:
            break
        log.debug("confirmation moved bracket [%g, %g]", lo, hi)
        if lo_bad:
            hi, lo = lo, max(0.0, lo - 4 * width)
        else:
            lo, hi = hi, min(top, hi + 4 * width)
    else:
        raise BracketError("confirmation re-runs kept contradicting the bracket", probes)
    return BoundaryEstimate(0.5 * (lo + hi), 0.5 * (hi - lo), probes)
