"""Detection metrics, ROC sweeps, equal-error points and Monte-Carlo runs.

A soft activity vector is thresholded at gamma: entries strictly above
gamma are detections.  A device with several detected delays is taken to
be detected at its largest entry (first one on ties).  An active device
counts as missed unless it is detected at exactly its true delay; an
inactive device is a false alarm if any of its entries is detected.

Both rates are step functions of gamma that only depend on two scores per
device, which is what the pooled computations below use:

* active device: the block maximum if the (first) argmax is the true
  delay, else -1 (missed at every gamma >= 0);
* inactive device: the block maximum.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

DEFAULT_GRID = np.linspace(0.0, 1.0, 101)


def device_scores(soft: np.ndarray, truth: np.ndarray, num_delays: int) -> tuple[np.ndarray, np.ndarray]:
    """(active_scores, inactive_scores) as described in the module docstring."""
    B = np.asarray(soft, dtype=float).reshape(-1, num_delays)
    T = np.asarray(truth).reshape(-1, num_delays) > 0.5
    active = T.any(axis=1)
    top = B.max(axis=1)
    arg = B.argmax(axis=1)
    true_t = T.argmax(axis=1)
    act = np.where(arg[active] == true_t[active], top[active], -1.0)
    return act, top[~active]


def rates(active_scores: np.ndarray, inactive_scores: np.ndarray, gamma) -> tuple[np.ndarray, np.ndarray]:
    """PM and PF at each gamma; NaN when the corresponding set is empty."""
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    a = np.sort(np.asarray(active_scores, dtype=float))
    i = np.sort(np.asarray(inactive_scores, dtype=float))
    pm = np.searchsorted(a, g, side="right") / a.size if a.size else np.full(g.shape, np.nan)
    pf = 1.0 - np.searchsorted(i, g, side="right") / i.size if i.size else np.full(g.shape, np.nan)
    return pm, pf


def detection_metrics(soft: np.ndarray, truth: np.ndarray, gamma: float, num_delays: int) -> tuple[float, float]:
    """(PM, PF) of one soft estimate at threshold gamma."""
    act, ina = device_scores(soft, truth, num_delays)
    pm, pf = rates(act, ina, gamma)
    return float(pm[0]), float(pf[0])


@dataclass
class RocCurve:
    gamma: np.ndarray
    pm: np.ndarray
    pf: np.ndarray


def roc_sweep(soft: np.ndarray, truth: np.ndarray, num_delays: int, grid=DEFAULT_GRID) -> RocCurve:
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("threshold grid must be sorted ascending")
    act, ina = device_scores(soft, truth, num_delays)
    pm, pf = rates(act, ina, grid)
    return RocCurve(grid, pm, pf)


@dataclass
class EqualError:
    gamma: float
    p_err: float
    pm: float
    pf: float
    degenerate: bool


def equal_error_point(pm_fn, pf_fn, tol: float = 1e-4, grid=DEFAULT_GRID) -> EqualError:
    """Threshold where PF(gamma) - PM(gamma) changes sign, by bisection.

    When the difference does not change sign on [0, 1] the grid point
    with the smallest |PF - PM| is returned and flagged degenerate.
    """
    def diff(g):
        return float(pf_fn(g) - pm_fn(g))

    lo, hi = 0.0, 1.0
    dlo, dhi = diff(lo), diff(hi)
    if dlo > 0 and dhi < 0:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            d = diff(mid)
            if d > 0:
                lo = mid
            elif d < 0:
                hi = mid
            else:
                lo = hi = mid
        g = 0.5 * (lo + hi)
        pm, pf = float(pm_fn(g)), float(pf_fn(g))
        return EqualError(g, 0.5 * (pm + pf), pm, pf, False)
    grid = np.asarray(grid, dtype=float)
    gaps = np.array([abs(diff(g)) for g in grid])
    g = float(grid[int(np.argmin(gaps))])
    pm, pf = float(pm_fn(g)), float(pf_fn(g))
    return EqualError(g, 0.5 * (pm + pf), pm, pf, True)


def equal_error_rate(active_scores: np.ndarray, inactive_scores: np.ndarray, tol: float = 1e-4) -> EqualError:
    """Equal-error operating point of pooled device scores."""
    def pm_fn(g):
        return rates(active_scores, inactive_scores, g)[0][0]

    def pf_fn(g):
        return rates(active_scores, inactive_scores, g)[1][0]

    return equal_error_point(pm_fn, pf_fn, tol)


# -- Monte-Carlo --------------------------------------------------------------

@dataclass
class TrialOutcome:
    """Per-trial output of one algorithm."""

    algorithm: str
    trial: int
    active_scores: np.ndarray
    inactive_scores: np.ndarray
    iterations: int
    raw_bits: int
    huffman_bits: int
    wall_ms: float
    trace: list = field(default_factory=list)
    error: str | None = None


@dataclass
class DetectionReport:
    algorithm: str
    gamma_grid: np.ndarray
    pm: np.ndarray
    pf: np.ndarray
    equal_error: EqualError
    trials: list
    failures: int
    raw_bits: float  # mean per successful trial
    huffman_bits: float
    mean_iters: float
    wall_ms: float

    @property
    def p_err(self) -> float:
        return self.equal_error.p_err


def aggregate(algorithm: str, outcomes: list, grid=DEFAULT_GRID) -> DetectionReport:
    ok = [o for o in outcomes if o.error is None]
    act = np.concatenate([o.active_scores for o in ok]) if ok else np.empty(0)
    ina = np.concatenate([o.inactive_scores for o in ok]) if ok else np.empty(0)
    pm, pf = rates(act, ina, grid)
    ee = equal_error_rate(act, ina) if ok else EqualError(math.nan, math.nan, math.nan, math.nan, True)

    def mean(attr):
        return float(np.mean([getattr(o, attr) for o in ok])) if ok else math.nan

    return DetectionReport(
        algorithm=algorithm, gamma_grid=np.asarray(grid, dtype=float), pm=pm, pf=pf, equal_error=ee,
        trials=outcomes, failures=len(outcomes) - len(ok), raw_bits=mean("raw_bits"),
        huffman_bits=mean("huffman_bits"), mean_iters=mean("iterations"), wall_ms=mean("wall_ms"))


def _run_trial(args):
    from .experiment import run_algorithm  # local import keeps worker start-up light
    from .model import simulate_trial, trial_seed

    config, algorithms, seed, index = args
    scenario, data = simulate_trial(config, trial_seed(seed, index))
    truth = scenario.truth
    Tp1 = config.max_delay + 1
    out = []
    for alg in algorithms:
        t0 = time.perf_counter()
        try:
            res = run_algorithm(alg, data)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            out.append(TrialOutcome(alg.label, index, np.empty(0), np.empty(0), 0, 0, 0, 0.0,
                                    error=f"{type(exc).__name__}: {exc}"))
            continue
        wall = 1e3 * (time.perf_counter() - t0)
        act, ina = device_scores(res.b, truth, Tp1)
        out.append(TrialOutcome(alg.label, index, act, ina, res.iterations, res.raw_bits,
                                res.huffman_bits, wall, trace=res.trace))
    return out


def default_workers() -> int:
    env = os.environ.get("ASYNCACT_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_monte_carlo(config, algorithms, trials: int, seed: int = 0, workers: int | None = None,
                    grid=DEFAULT_GRID) -> dict:
    """Run every algorithm on the same ``trials`` random instances.

    Trial i uses seed ``seed XOR i`` so results do not depend on the worker
    count.  Returns {label: DetectionReport}, in the order given.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    workers = default_workers() if workers is None else max(1, int(workers))
    jobs = [(config, list(algorithms), seed, i) for i in range(trials)]
    if workers == 1:
        results = [_run_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs, chunksize=max(1, trials // (4 * workers))))
    per_alg = {alg.label: [] for alg in algorithms}
    for trial_out in results:
        for o in trial_out:
            per_alg[o.algorithm].append(o)
    return {label: aggregate(label, outs, grid) for label, outs in per_alg.items()}
