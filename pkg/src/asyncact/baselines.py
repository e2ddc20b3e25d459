"""Reference detectors: coordinate descent with enforcement, and block CD.

Both work directly on the multi-AP likelihood.  Each coordinate (or
block candidate) is optimized over [0, 1] by
:func:`minimize_1d_multiap`, the sum over APs of the single-AP scalar
objectives.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import bcd_sweeps, minimize_multiap, multiap_sweeps
from .likelihood import NUMERICS, nll_cost
from .model import ReceivedData


@dataclass(frozen=True)
class Scalar1DProblem:
    """Per-AP coefficients (xi1_m, xi2_m) of one coordinate's cost."""

    xi1: np.ndarray
    xi2: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.xi1) < 0) or np.any(np.asarray(self.xi2) < 0):
            raise ValueError("xi1 and xi2 must be non-negative")

    def objective(self, u):
        u = np.asarray(u, dtype=float)[..., None]
        z = 1.0 + self.xi1 * u
        return np.sum(np.log(z) - self.xi2 * u / z, axis=-1)


def minimize_1d_multiap(prob: Scalar1DProblem) -> tuple[float, float]:
    """Global minimizer over [0, 1] and its value."""
    return minimize_multiap(np.ascontiguousarray(prob.xi1, dtype=float),
                            np.ascontiguousarray(prob.xi2, dtype=float), 0.0, 1.0)


@dataclass(frozen=True)
class BaselineOptions:
    max_sweeps: int = 200
    tol: float = 1e-6
    refresh: int = NUMERICS.refresh
    pd_tol: float = NUMERICS.pd_tol


@dataclass
class BaselineResult:
    b: np.ndarray
    sweeps: int
    objective: float
    deltas: np.ndarray = field(repr=False)  # cost change of every committed move (all <= 0)
    soft: np.ndarray | None = field(default=None, repr=False)  # CD-E: output before enforcement


def _initial_inverses(data: ReceivedData) -> np.ndarray:
    n = data.seq_len
    return np.stack([np.eye(n, dtype=complex) / s2 for s2 in data.noise_var])


def enforce_single_delay(b: np.ndarray, num_delays: int) -> np.ndarray:
    """Keep only the largest entry of each block (first one on ties)."""
    blocks = np.asarray(b, dtype=float).reshape(-1, num_delays)
    out = np.zeros_like(blocks)
    tau = np.argmax(blocks, axis=1)
    rows = np.arange(blocks.shape[0])
    out[rows, tau] = blocks[rows, tau]
    return out.reshape(-1)


def cde_solve(data: ReceivedData, opts: BaselineOptions = BaselineOptions()) -> BaselineResult:
    """Coordinate descent over the box without the single-delay
    constraint, followed by blockwise enforcement."""
    x = np.zeros(data.num_coords)
    cinv = _initial_inverses(data)
    deltas = np.zeros(opts.max_sweeps * data.num_coords)
    sweeps, _, nd, _ = multiap_sweeps(cinv, data.R, data.sig_rows, data.weights, data.noise_var, x,
                                      opts.max_sweeps, opts.tol, opts.refresh, 0, opts.pd_tol, deltas)
    b = enforce_single_delay(x, data.max_delay + 1)
    return BaselineResult(b=b, sweeps=sweeps, objective=nll_cost(b, data), deltas=deltas[:nd], soft=x)


def bcd_solve(data: ReceivedData, opts: BaselineOptions = BaselineOptions()) -> BaselineResult:
    """Block coordinate descent; every iterate has at most one nonzero per block."""
    Tp1 = data.max_delay + 1
    x = np.zeros(data.num_coords)
    cinv = _initial_inverses(data)
    deltas = np.zeros(opts.max_sweeps * data.num_devices)
    sweeps, _, nd, _ = bcd_sweeps(cinv, data.R, data.sig_rows, data.weights, data.noise_var, x, Tp1,
                                  opts.max_sweeps, opts.tol, opts.refresh, 0, opts.pd_tol, deltas)
    return BaselineResult(b=x, sweeps=sweeps, objective=nll_cost(x, data), deltas=deltas[:nd])
