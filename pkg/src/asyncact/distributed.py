"""Consensus-ADMM detectors with per-AP coordinate descent.

Every AP m keeps a local copy x_m of the activity vector and a dual
variable lambda_m; the CPU keeps the global b.  One iteration is

1. CPU:  b <- argmin over the box of rho*(sum - max) penalty
         + sum_m [lambda_m^T (x_m - b) + mu/2 ||x_m - b||^2] + delta/2 ||b - b_prev||^2
2. APs:  x_m <- argmin f_m(x) + lambda_m^T (x - b) + mu/2 ||x - b||^2   (coordinate descent)
3. APs:  lambda_m <- lambda_m + mu (x_m - b)

The accelerated variant replaces step 1 by a proximal-gradient solve of
the penalized likelihood with every R_m replaced by C_m(x_m), so only
the local detections travel uplink (optionally quantized).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._kernels import (
    best_scalar_candidate,
    cubic_roots,
    local_residual,
    local_sweeps,
    rebuild_inverse,
    scalar_objective,
    stationary_cubic_coeffs,
)
from .centralized import SolveOptions, alg1_solve, prox_block_update
from .fronthaul import BitLedger, QuantizerSpec, huffman_bits, quantize
from .likelihood import (
    NUMERICS,
    NotPositiveDefiniteError,
    block_penalty,
    covariances,
    local_gradients,
    penalized_cost,
    per_ap_cost,
)
from .model import ReceivedData

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistributedOptions:
    """Parameters shared by both consensus solvers.

    ``local_tol`` is the stationarity tolerance of each AP's x-update; the
    update sweeps until the (projected) gradient of the local subproblem
    drops below it or ``max_local_sweeps`` is reached.  Setting
    ``max_local_sweeps=1`` gives the single-sweep variant.

    ``x_box`` confines the local copies to [0, 1].  Without it the local
    subproblem is unbounded below whenever R_m is rank deficient (N < L+T)
    and the iteration only behaves for mu well above the local curvature.
    """

    rho: float = 0.16
    mu: float = 0.08
    delta: float = 1e-3
    max_iters: int = 100
    tol: float = 1e-6
    max_local_sweeps: int = 500
    local_tol: float = 1e-9
    init_sweeps: int = 500
    init_tol: float = 1e-10
    max_inner: int = 50
    inner_tol: float = 1e-6
    refresh: int = NUMERICS.refresh
    pd_tol: float = NUMERICS.pd_tol
    x_box: bool = True
    measure_curvature: bool = False

    def __post_init__(self):
        for name in ("rho", "mu", "delta", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.max_local_sweeps < 1 or self.max_iters < 1:
            raise ValueError("max_local_sweeps and max_iters must be >= 1")


@dataclass(frozen=True)
class CubicCoeffs:
    xi1: float
    xi2: float
    lam: float
    mu: float
    b_target: float

    def polynomial(self) -> tuple[float, float, float, float]:
        """Coefficients (cubic first) of the stationarity condition."""
        return stationary_cubic_coeffs(self.xi1, self.xi2, self.lam, self.mu, self.b_target)

    def objective(self, u: float) -> float:
        return scalar_objective(u, self.xi1, self.xi2, self.lam, self.mu, self.b_target)


def cubic_stationary_points(c: CubicCoeffs, pd_tol: float = NUMERICS.pd_tol) -> np.ndarray:
    """Real stationary points of the scalar coordinate objective that keep
    the local covariance positive definite (1 + xi1 u > pd_tol)."""
    roots = np.sort(np.asarray(cubic_roots(*c.polynomial())))
    return roots[1.0 + c.xi1 * roots > pd_tol]


def minimize_scalar(c: CubicCoeffs, current: float, pd_tol: float = NUMERICS.pd_tol) -> float:
    """Coordinate update: best feasible stationary point, else ``current``."""
    return best_scalar_candidate(c.xi1, c.xi2, c.lam, c.mu, c.b_target, current, False, 0.0, 1.0, pd_tol)


@dataclass
class DistributedState:
    b: np.ndarray  # (J,)
    x: np.ndarray  # (M, J)
    lam: np.ndarray  # (M, J)
    cinv: np.ndarray  # (M, n, n), inverse of C_m(x_m)
    counts: np.ndarray  # (M,) rank-1 updates since start, drives refresh
    mu: float
    delta: float
    iter: int = 0
    rejected: int = 0


@dataclass
class DistributedResult:
    b: np.ndarray
    state: DistributedState
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    ledger: BitLedger | None = None


def b_update_admm(b_prev: np.ndarray, x: np.ndarray, lam: np.ndarray, mu: float, delta: float,
                  rho: float, num_delays: int) -> np.ndarray:
    """Closed-form CPU update of the global activity vector."""
    x = np.atleast_2d(x)
    lam = np.atleast_2d(lam)
    M = x.shape[0]
    denom = delta + M * mu
    beta = (delta * b_prev + np.sum(mu * x + lam, axis=0) - rho) / denom
    return prox_block_update(beta.reshape(-1, num_delays), rho / denom).reshape(-1)


def dual_update(lam: np.ndarray, x: np.ndarray, b: np.ndarray, mu: float) -> np.ndarray:
    return lam + mu * (x - b)


def local_cd_sweep(data: ReceivedData, m: int, x_m: np.ndarray, b: np.ndarray, lam_m: np.ndarray,
                   mu: float, n_sweeps: int = 1, cinv: np.ndarray | None = None, tol: float = 0.0,
                   boxed: bool = False, numerics=NUMERICS) -> tuple[np.ndarray, dict]:
    """Coordinate descent on AP m's augmented local problem.

    Returns the updated copy of ``x_m`` and a dict with the sweep count,
    rejected moves and final stationarity residual.  ``boxed=True`` runs
    the [0, 1]-constrained variant used for local detection.
    """
    x = np.array(x_m, dtype=float, copy=True)
    S, w, noise = data.sig_rows, data.weights[m], float(data.noise_var[m])
    inv = rebuild_inverse(S, w, x, noise) if cinv is None else cinv
    sweeps, rejected, _, change, resid = local_sweeps(
        inv, data.R[m], S, w, noise, x, np.asarray(b, dtype=float), np.asarray(lam_m, dtype=float),
        float(mu), boxed, 0.0, 1.0, int(n_sweeps), float(tol), tol > 0,
        numerics.refresh, 0, numerics.pd_tol)
    return x, {"sweeps": sweeps, "rejected": rejected, "change": change, "residual": resid}


def local_detection(data: ReceivedData, opts: DistributedOptions, targets=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Box-constrained single-AP detection for every AP (ADMM initialization).

    Returns (x, cinv, counts).
    """
    M, J, n = data.num_aps, data.num_coords, data.seq_len
    R = data.R if targets is None else targets
    x = np.zeros((M, J))
    cinv = np.empty((M, n, n), dtype=complex)
    counts = np.zeros(M, dtype=np.int64)
    zeros = np.zeros(J)
    for m in range(M):
        cinv[m] = np.eye(n) / data.noise_var[m]
        _, _, counts[m], _, _ = local_sweeps(
            cinv[m], R[m], data.sig_rows, data.weights[m], float(data.noise_var[m]), x[m], zeros, zeros,
            0.0, True, 0.0, 1.0, opts.init_sweeps, opts.init_tol, False, opts.refresh, 0, opts.pd_tol)
    return x, cinv, counts


def augmented_lagrangian(state: DistributedState, data: ReceivedData, rho: float) -> float:
    """sum_m [f_m(x_m) + lambda_m^T (x_m - b) + mu/2 ||x_m - b||^2] + rho * (sum - max penalty of b)."""
    f = per_ap_cost(state.x, data)
    diff = state.x - state.b
    coupling = np.sum(state.lam * diff) + 0.5 * state.mu * np.sum(diff**2)
    return float(np.sum(f) + coupling + rho * block_penalty(state.b, data.max_delay + 1))


def dual_identity_error(state: DistributedState, data: ReceivedData) -> float:
    """max_m ||lambda_m + grad f_m(x_m)||_inf (zero after an exact x-update)."""
    return float(np.max(np.abs(state.lam + local_gradients(state.x, data))))


def dual_kkt_error(state: DistributedState, data: ReceivedData) -> float:
    """Box version of :func:`dual_identity_error`: after an exact x-update
    on [0, 1], -lambda_m - grad f_m(x_m) lies in the normal cone at x_m, so
    the projected residual max |x - clip(x - grad f - lambda, 0, 1)| vanishes."""
    g = state.lam + local_gradients(state.x, data)
    return float(np.max(np.abs(state.x - np.clip(state.x - g, 0.0, 1.0))))


def local_curvature(data: ReceivedData, m: int, x_m: np.ndarray, iters: int = 20, h: float = 1e-5,
                    seed: int = 0) -> float:
    """Largest |eigenvalue| of the Hessian of f_m at x_m (power iteration on
    finite-difference Hessian-vector products)."""
    rng = np.random.default_rng(seed)
    single = data.subset_aps([m])
    v = rng.standard_normal(data.num_coords)
    v /= np.linalg.norm(v)
    lam_est = 0.0
    for _ in range(iters):
        gp = local_gradients((x_m + h * v)[None], single)[0]
        gm = local_gradients((x_m - h * v)[None], single)[0]
        hv = (gp - gm) / (2 * h)
        lam_est = float(np.linalg.norm(hv))
        if lam_est == 0.0:
            break
        v = hv / lam_est
    return lam_est


def _x_update(state: DistributedState, data: ReceivedData, b_ap: np.ndarray, opts: DistributedOptions) -> dict:
    use_residual = opts.max_local_sweeps > 1
    worst = 0.0
    sweeps = 0
    for m in range(data.num_aps):
        s, rej, state.counts[m], _, resid = local_sweeps(
            state.cinv[m], data.R[m], data.sig_rows, data.weights[m], float(data.noise_var[m]),
            state.x[m], b_ap, state.lam[m], state.mu, opts.x_box, 0.0, 1.0, opts.max_local_sweeps,
            opts.local_tol if use_residual else 0.0, use_residual, opts.refresh, state.counts[m], opts.pd_tol)
        state.rejected += rej
        sweeps = max(sweeps, s)
        if use_residual:
            worst = max(worst, resid)
    return {"sweeps": sweeps, "residual": worst}


def _trace_row(state: DistributedState, data: ReceivedData, opts: DistributedOptions, extra: dict) -> dict:
    try:
        lag = augmented_lagrangian(state, data, opts.rho)
    except NotPositiveDefiniteError:
        lag = float("nan")
    row = {
        "iter": state.iter,
        "objective": penalized_cost(state.b, data, opts.rho),
        "lagrangian": lag,
        "residual": float(np.max(np.abs(state.x - state.b))),
    }
    row.update(extra)
    return row


def init_distributed(data: ReceivedData, opts: DistributedOptions) -> DistributedState:
    x, cinv, counts = local_detection(data, opts)
    M, J = x.shape
    return DistributedState(b=np.zeros(J), x=x, lam=np.zeros((M, J)), cinv=cinv, counts=counts,
                            mu=opts.mu, delta=opts.delta)


def alg2_step(state: DistributedState, data: ReceivedData, opts: DistributedOptions) -> dict:
    """One consensus-ADMM iteration, in place.  Returns step statistics."""
    b_prev, x_prev = state.b, state.x.copy()
    state.b = b_update_admm(state.b, state.x, state.lam, state.mu, state.delta, opts.rho, data.max_delay + 1)
    stats = _x_update(state, data, state.b, opts)
    state.lam = dual_update(state.lam, state.x, state.b, state.mu)
    state.iter += 1
    stats["change"] = max(float(np.max(np.abs(state.b - b_prev))), float(np.max(np.abs(state.x - x_prev))))
    return stats


def alg2_solve(data: ReceivedData, opts: DistributedOptions = DistributedOptions(),
               max_iters: int | None = None) -> DistributedResult:
    """Consensus ADMM from b = 0, lambda = 0 and local-detection x."""
    state = init_distributed(data, opts)
    trace = [_trace_row(state, data, opts, {"change": float("nan")})]
    limit = opts.max_iters if max_iters is None else max_iters
    converged = False
    while state.iter < limit:
        stats = alg2_step(state, data, opts)
        if opts.measure_curvature:
            stats["curvature"] = max(local_curvature(data, m, state.x[m]) for m in range(data.num_aps))
        trace.append(_trace_row(state, data, opts, stats))
        if stats["change"] < opts.tol:
            converged = True
            break
    return DistributedResult(b=state.b, state=state, iterations=state.iter, converged=converged, trace=trace)


def _send(values: np.ndarray, spec: QuantizerSpec | None) -> tuple[np.ndarray, int, int]:
    """Pass a real vector through the fronthaul: returns (received, raw_bits, huffman_bits)."""
    if spec is None:
        return values, 0, 0
    symbols, recon = quantize(values, spec)
    return recon, symbols.size * spec.bits, huffman_bits(symbols)


def alg3_b_update(data: ReceivedData, x_recv: np.ndarray, b_prev: np.ndarray, opts: DistributedOptions):
    """CPU step of the accelerated solver.

    Runs the centralized proximal-gradient machinery with the sample
    covariances replaced by C_m(x_m), warm-started at ``b_prev``.
    """
    targets = covariances(x_recv, data)
    inner = SolveOptions(rho=opts.rho, max_iters=opts.max_inner, tol_step=opts.inner_tol)
    return alg1_solve(data, inner, b0=b_prev, targets=targets)


def alg3_solve(data: ReceivedData, opts: DistributedOptions = DistributedOptions(),
               uplink: QuantizerSpec | None = None, downlink: QuantizerSpec | None = None,
               iterations: int | None = None) -> DistributedResult:
    """Accelerated consensus solver with optional fronthaul quantization.

    Iteration i: every AP sends Q(x_m); the CPU solves the surrogate
    problem; except after the last iteration it broadcasts Q(b), and the
    APs run their x- and dual updates against the received b.  The answer
    is the CPU's last b, so I iterations cost 2I - 1 messages per AP.
    """
    I = opts.max_iters if iterations is None else iterations
    state = init_distributed(data, opts)
    ledger = BitLedger()
    trace = [_trace_row(state, data, opts, {"change": float("nan")})]
    for i in range(1, I + 1):
        x_recv = np.empty_like(state.x)
        for m in range(data.num_aps):
            x_recv[m], raw, huff = _send(state.x[m], uplink)
            if uplink is not None:
                ledger.record(i, "uplink", raw, huff, ap=m)
        b_prev = state.b
        inner = alg3_b_update(data, x_recv, state.b, opts)
        state.b = inner.b
        state.iter = i
        stats = {"inner_iters": inner.iterations, "change": float(np.max(np.abs(state.b - b_prev)))}
        if i < I:
            b_recv, raw, huff = _send(state.b, downlink)
            if downlink is not None:
                for m in range(data.num_aps):
                    ledger.record(i, "downlink", raw, huff, ap=m)
            stats.update(_x_update(state, data, b_recv, opts))
            state.lam = dual_update(state.lam, state.x, b_recv, state.mu)
        trace.append(_trace_row(state, data, opts, stats))
    return DistributedResult(b=state.b, state=state, iterations=I, converged=True, trace=trace,
                             ledger=ledger)
