"""Centralized proximal-gradient detector.

Minimizes cost(b) + rho * sum_k (sum_t b_{k,t} - max_t b_{k,t}) over the
box [0, 1]^{K(T+1)}.  The smooth part is taken as cost(b) + rho * sum(b);
the nonsmooth part -rho * max_t b_{k,t} plus the box indicator has a
closed-form blockwise proximal map (:func:`prox_block_update`).

Step sizes come from a Barzilai-Borwein estimate of the local Lipschitz
constant with monotone backtracking.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .likelihood import Evaluation, evaluate
from .model import ReceivedData


@dataclass(frozen=True)
class SolveOptions:
    rho: float = 0.16
    max_iters: int = 500
    tol_step: float = 1e-6
    backtrack: float = 0.5
    max_halvings: int = 30

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho!r}")
        if not self.tol_step > 0:
            raise ValueError(f"tol_step must be positive, got {self.tol_step!r}")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError(f"backtrack must lie in (0, 1), got {self.backtrack!r}")


@dataclass
class Alg1State:
    b: np.ndarray
    iter: int = 0
    step: float = float("nan")
    grad: np.ndarray | None = None
    nll: float = float("nan")
    objective: float = float("nan")
    prev_b: np.ndarray | None = None
    prev_grad: np.ndarray | None = None
    change: float = float("inf")
    converged: bool = False
    stalled: bool = False


@dataclass
class Alg1Result:
    b: np.ndarray
    objective: float
    iterations: int
    converged: bool
    stalled: bool
    trace: list = field(default_factory=list)


def prox_block_update(alpha: np.ndarray, shift: float) -> np.ndarray:
    """Closed-form minimizer of 1/2 ||u - alpha||^2 - shift * max(u) over [0, 1]^{T+1}.

    Works on a single block (1-D) or a stack of blocks (last axis).  The
    first maximal entry of ``alpha`` receives the shift; all entries are
    then clipped to [0, 1].
    """
    alpha = np.asarray(alpha, dtype=float)
    out = alpha.copy()
    tau = np.argmax(alpha, axis=-1)
    np.put_along_axis(out, tau[..., None], np.take_along_axis(alpha, tau[..., None], axis=-1) + shift, axis=-1)
    return np.clip(out, 0.0, 1.0)


def proximal_point(b: np.ndarray, grad: np.ndarray, step: float, rho: float, num_delays: int) -> np.ndarray:
    alpha = (b - step * grad).reshape(-1, num_delays)
    return prox_block_update(alpha, step * rho).reshape(-1)


def init_state(data: ReceivedData, opts: SolveOptions, b0=None, targets=None) -> Alg1State:
    b = np.zeros(data.num_coords) if b0 is None else np.clip(np.asarray(b0, dtype=float), 0.0, 1.0)
    ev = evaluate(b, data, opts.rho, targets)
    return Alg1State(b=b, grad=ev.grad, nll=ev.nll, objective=ev.penalized)


def _initial_step(state: Alg1State) -> float:
    """Barzilai-Borwein (long) step ||db||^2 / <db, dd>; falls back to
    ||db|| / ||dd|| when the measured curvature is not positive and to
    1 / ||d||_inf on the first iteration."""
    if state.prev_b is not None:
        db = state.b - state.prev_b
        dd = state.grad - state.prev_grad
        nb, nd = np.linalg.norm(db), np.linalg.norm(dd)
        if nb > 0 and nd > 0:
            curv = float(db @ dd)
            return float(nb * nb / curv) if curv > 0 else float(nb / nd)
    gmax = float(np.max(np.abs(state.grad)))
    return 1.0 / gmax if gmax > 0 else 1.0


def alg1_step(state: Alg1State, data: ReceivedData, opts: SolveOptions, targets=None) -> Alg1State:
    """One accepted proximal-gradient iteration (with backtracking).

    The step is halved until the penalized objective does not increase.  If no step passes within ``opts.max_halvings`` halvings
    the state is returned unchanged and flagged as stalled (and converged).
    """
    Tp1 = data.max_delay + 1
    rho = opts.rho
    step = _initial_step(state)
    for _ in range(opts.max_halvings + 1):
        b_new = proximal_point(state.b, state.grad, step, rho, Tp1)
        delta = b_new - state.b
        if not np.any(delta):
            return Alg1State(b=state.b, iter=state.iter + 1, step=step, grad=state.grad, nll=state.nll,
                             objective=state.objective, prev_b=state.prev_b, prev_grad=state.prev_grad,
                             change=0.0, converged=True)
        ev: Evaluation = evaluate(b_new, data, rho, targets)
        if ev.penalized <= state.objective:
            change = float(np.max(np.abs(delta)))
            return Alg1State(b=b_new, iter=state.iter + 1, step=step, grad=ev.grad, nll=ev.nll,
                             objective=ev.penalized, prev_b=state.b, prev_grad=state.grad,
                             change=change, converged=change < opts.tol_step)
        step *= opts.backtrack
    return Alg1State(b=state.b, iter=state.iter + 1, step=step, grad=state.grad, nll=state.nll,
                     objective=state.objective, prev_b=state.prev_b, prev_grad=state.prev_grad,
                     change=0.0, converged=True, stalled=True)


def alg1_solve(data: ReceivedData, opts: SolveOptions = SolveOptions(), b0=None, targets=None,
               max_iters: int | None = None) -> Alg1Result:
    """Run proximal-gradient iterations from b0 (zero by default) to convergence."""
    state = init_state(data, opts, b0, targets)
    trace = [{"iter": 0, "objective": state.objective, "step": float("nan"), "change": float("nan")}]
    limit = opts.max_iters if max_iters is None else max_iters
    while state.iter < limit and not state.converged:
        state = alg1_step(state, data, opts, targets)
        trace.append({"iter": state.iter, "objective": state.objective, "step": state.step,
                      "change": state.change})
    return Alg1Result(b=state.b, objective=state.objective, iterations=state.iter,
                      converged=state.converged, stalled=state.stalled, trace=trace)
