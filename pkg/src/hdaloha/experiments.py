"""Figure-reproduction sweeps written as CSV tables.

Every CSV gets a ``<name>.manifest.json`` next to it holding the sweep
specification, seeds and library versions.  Rows always come out in grid
order, whether points ran serially or in a process pool.
"""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__, analytic, chain
from .core import NetworkParams, ParameterError, validate_params
from .sim import (
    FULL_DUPLEX,
    HALF_DUPLEX,
    BracketError,
    DetectorConfig,
    SimConfig,
    find_boundary_lambda2,
    simulate,
)

__all__ = [
    "SweepSpec",
    "Table",
    "DEFAULT_P_VALUES",
    "default_region_spec",
    "default_area_spec",
    "default_delay_spec",
    "run_region_figure",
    "run_area_figure",
    "run_delay_figure",
    "run_verification_suite",
    "random_stable_params",
    "VerificationReport",
    "format_value",
    "REGION_HEADER",
    "AREA_HEADER",
    "DELAY_HEADER",
    "SIMSTATS_HEADER",
]

DEFAULT_P_VALUES = (0.2, 0.4, 2 / 3, 0.9)

REGION_HEADER = ("p1", "p2", "lambda1", "lambda2_analytic", "lambda2_simulated", "bracket_halfwidth", "status")
AREA_HEADER = ("p1", "p2", "area_hd", "area_fd")
DELAY_HEADER = ("p", "lambda_per_node", "d_analytic", "d_sim_hd", "d_sim_hd_stderr", "d_sim_fd")
SIMSTATS_HEADER = (
    "mode", "seed", "slots", "warmup", "lambda1", "lambda2", "p1", "p2",
    "arrivals1", "arrivals2", "departures1", "departures2", "collisions",
    "qsum1", "qsum2", "sojourn_sum1", "sojourn_sum2", "measured_slots",
    "measured_arrivals1", "measured_arrivals2", "measured_departures1", "measured_departures2",
    "final_n1", "final_n2",
)

UNSTABLE = "unstable"
UNDEFINED = "undefined"


def format_value(v) -> str:
    """Shortest round-trip text for floats; markers and ints unchanged."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


@dataclass
class Table:
    header: tuple
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([format_value(v) for v in row])
        return buf.getvalue()

    def column(self, name) -> list:
        i = self.header.index(name)
        return [r[i] for r in self.rows]


@dataclass
class SweepSpec:
    """Grid and simulation settings for one figure sweep.

    ``lambda_grid`` is the ``lambda1`` grid for region sweeps and the
    per-node rate grid for delay sweeps.  It may be a list or a dict
    ``{"start", "stop", "num"}``.  With ``lambda_scale="corner_fraction"``
    the delay grid is a fraction of the symmetric corner ``P / (1 + 2P)``.
    """

    p_pairs: list
    lambda_grid: Any = field(default_factory=list)
    sim_slots: int = 200_000
    seeds: list = field(default_factory=lambda: [0])
    output_path: Optional[str] = None
    lambda_scale: str = "absolute"
    warmup: Optional[int] = None
    threshold: float = 1.02
    include_fd: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        self.p_pairs = [(float(a), float(b)) for a, b in self.p_pairs]
        for a, b in self.p_pairs:
            if not (0 < a <= 1 and 0 < b <= 1):
                raise ParameterError(f"transmission probabilities ({a}, {b}) outside (0, 1]")
        self.lambda_grid = _expand_grid(self.lambda_grid)
        if any(not math.isfinite(x) for x in self.lambda_grid):
            raise ParameterError("lambda grid must be finite")
        if list(self.lambda_grid) != sorted(self.lambda_grid):
            raise ParameterError("lambda grid must be sorted")
        if self.lambda_scale not in ("absolute", "corner_fraction"):
            raise ParameterError("lambda_scale must be 'absolute' or 'corner_fraction'")
        if not self.seeds:
            raise ParameterError("at least one seed is required")
        self.seeds = [int(s) for s in self.seeds]

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        d.pop("figure", None)
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_pairs"] = [list(p) for p in self.p_pairs]
        return d


def _expand_grid(grid) -> list:
    if isinstance(grid, dict):
        return [float(x) for x in np.linspace(grid["start"], grid["stop"], int(grid["num"]))]
    return [float(x) for x in grid]


def _map(fn, items, n_jobs):
    if n_jobs and n_jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _write(table: Table, spec: Optional[SweepSpec], figure: str, path=None) -> None:
    path = path or (spec.output_path if spec else None)
    if not path:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table.to_csv())
    manifest = {
        "figure": figure,
        "csv": path.name,
        "spec": spec.to_dict() if spec else None,
        "seeds": spec.seeds if spec else [],
        "versions": {
            "hdaloha": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "rng": "numpy.random.PCG64",
    }
    path.with_name(path.name + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


# --- region ---------------------------------------------------------------

def _region_point(args):
    p1, p2, l1, det = args
    intercept = p1 / (1.0 + p1)
    if l1 > intercept * (1 + 1e-12) or l1 < 0:
        return (p1, p2, l1, None, None, None, "outside_region")
    analytic_l2 = analytic.hd_boundary_lambda2(p1, p2, l1)
    if p1 >= 1 or p2 >= 1:
        return (p1, p2, l1, analytic_l2, None, None, "invalid_p")
    try:
        est = find_boundary_lambda2(p1, p2, l1, det)
    except BracketError:
        return (p1, p2, l1, analytic_l2, None, None, "bracket_error")
    return (p1, p2, l1, analytic_l2, est.lambda2, est.halfwidth, "ok")


def run_region_figure(spec: SweepSpec) -> Table:
    """Analytic against simulated stability boundary, one row per ``(P1, P2, lambda1)``."""
    det = DetectorConfig(slots=spec.sim_slots, threshold=spec.threshold, seed=spec.seeds[0],
                         warmup=spec.warmup or 0)
    points = [(p1, p2, l1, det) for p1, p2 in spec.p_pairs for l1 in spec.lambda_grid]
    table = Table(REGION_HEADER, _map(_region_point, points, spec.n_jobs))
    _write(table, spec, "region")
    return table


# --- area -----------------------------------------------------------------

def run_area_figure(spec: SweepSpec) -> Table:
    """Half- and full-duplex region areas per ``(P1, P2)``."""
    rows = [(p1, p2, analytic.hd_region_area(p1, p2), analytic.fd_region_area(p1, p2))
            for p1, p2 in spec.p_pairs]
    table = Table(AREA_HEADER, rows)
    _write(table, spec, "area")
    return table


# --- delay ----------------------------------------------------------------

def _pooled_delay(stats) -> Optional[float]:
    arrivals = sum(stats.measured_arrivals)
    if arrivals == 0:
        return None
    return sum(stats.qsum) / arrivals


def _delay_point(args):
    p, lam, slots, seeds, warmup, include_fd = args
    if lam == 0:
        return (p, lam, UNDEFINED, UNDEFINED, None, UNDEFINED if include_fd else None)
    try:
        params = validate_params(lam, lam, p, p)
    except ParameterError:
        return (p, lam, UNSTABLE, None, None, None)
    verdict = analytic.is_stable(params)
    d_analytic = analytic.average_delay(params).d1 if verdict else UNSTABLE

    def sim(mode):
        vals = []
        for s in seeds:
            st = simulate(SimConfig(params, slots, s, warmup, mode))
            vals.append(_pooled_delay(st))
        if any(v is None for v in vals):
            return UNDEFINED, None
        arr = np.asarray(vals)
        err = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else None
        return float(arr.mean()), err

    d_hd, d_hd_err = sim(HALF_DUPLEX)
    d_fd = sim(FULL_DUPLEX)[0] if include_fd else None
    return (p, lam, d_analytic, d_hd, d_hd_err, d_fd)


def _symmetric_p(spec: SweepSpec) -> list:
    ps = []
    for p1, p2 in spec.p_pairs:
        if p1 != p2:
            raise ParameterError(f"delay sweeps are symmetric; got P=({p1}, {p2})")
        ps.append(p1)
    return ps


def run_delay_figure(spec: SweepSpec) -> Table:
    """Analytic and simulated average delay for the symmetric network.

    Simulated values pool both nodes (total boundary queue over total
    measured arrivals) and average over ``spec.seeds``; the stderr column is
    the standard error of that average.  Rows outside the region carry
    ``"unstable"`` in the analytic column, zero traffic carries ``"undefined"``.
    """
    points = []
    for p in _symmetric_p(spec):
        scale = analytic.symmetric_corner(p) if spec.lambda_scale == "corner_fraction" else 1.0
        for x in spec.lambda_grid:
            points.append((p, x * scale, spec.sim_slots, tuple(spec.seeds), spec.warmup, spec.include_fd))
    table = Table(DELAY_HEADER, _map(_delay_point, points, spec.n_jobs))
    _write(table, spec, "delay")
    return table


# --- defaults -------------------------------------------------------------

def default_region_spec(**kw) -> SweepSpec:
    kw.setdefault("p_pairs", [(p, p) for p in DEFAULT_P_VALUES])
    kw.setdefault("lambda_grid", {"start": 0.0, "stop": 0.45, "num": 10})
    return SweepSpec(**kw)


def default_area_spec(**kw) -> SweepSpec:
    grid = np.round(np.linspace(0.05, 1.0, 20), 12)
    kw.setdefault("p_pairs", [(float(a), float(b)) for a in grid for b in grid])
    return SweepSpec(**kw)


def default_delay_spec(**kw) -> SweepSpec:
    kw.setdefault("p_pairs", [(p, p) for p in DEFAULT_P_VALUES])
    kw.setdefault("lambda_grid", {"start": 0.03, "stop": 0.9, "num": 30})
    kw.setdefault("lambda_scale", "corner_fraction")
    return SweepSpec(**kw)


# --- verification ---------------------------------------------------------

@dataclass
class VerificationReport:
    entries: list
    identity_tol: float
    trunc_tol: float

    @property
    def passed(self) -> bool:
        return all(
            e.passed(self.identity_tol) and e.tv_distance is not None and e.tv_distance <= self.trunc_tol
            for e in self.entries
        )

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "identity_tol": self.identity_tol,
            "trunc_tol": self.trunc_tol,
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def random_stable_params(n: int, seed: int = 0, max_rho: float = 0.8) -> list[NetworkParams]:
    """``n`` parameter sets drawn inside the region with ``max(rho) <= max_rho``."""
    gen = np.random.Generator(np.random.PCG64(seed))
    out = []
    while len(out) < n:
        p1, p2 = gen.uniform(0.05, 0.95, size=2)
        l1 = gen.uniform(0, p1 / (1 + p1))
        l2 = gen.uniform(0, p2 / (1 + p2))
        if l1 + l2 >= 1:
            continue
        params = validate_params(l1, l2, p1, p2)
        if max(analytic.utilization(params)) <= max_rho:
            out.append(params)
    return out


def run_verification_suite(
    params_list: Sequence[NetworkParams],
    window: int = 20,
    trunc_tol: float = 1e-6,
    identity_tol: float = 1e-12,
    solver_tol: float = 1e-12,
    truncation: Optional[int] = None,
    nu_perturbation: Optional[dict] = None,
    swap_nu_p: bool = False,
) -> VerificationReport:
    """Theorem identity and product-form oracle over a list of parameter sets.

    ``nu_perturbation`` and ``swap_nu_p`` build a faulty ``nu`` for
    fault-injection runs; the kernel and the oracle are left untouched.
    """
    entries = []
    for params in params_list:
        nu_params = validate_params(params.lambda1, params.lambda2, params.p2, params.p1) if swap_nu_p else None
        wit = chain.witness(params, nu_params, nu_perturbation)
        rep = chain.verify_theorem_identity(params, window, wit)
        N = truncation or chain.choose_truncation(params)
        rep.tv_distance = chain.compare_to_product_form(params, N, solver_tol)
        entries.append(rep)
    return VerificationReport(entries, identity_tol, trunc_tol)


def simstats_row(stats, config: SimConfig) -> tuple:
    p = config.params
    return (
        config.mode, config.seed, config.slots, config.warmup, p.lambda1, p.lambda2, p.p1, p.p2,
        *stats.arrivals, *stats.departures, stats.collisions,
        *stats.qsum, *stats.sojourn_sum, stats.measured_slots,
        *stats.measured_arrivals, *stats.measured_departures, *stats.final_state,
    )
