"""Gaussian covariance likelihood for asynchronous activity detection.

For AP m and soft activity b (length K(T+1)),

    C_m(b) = sum_j b_j w_{m,j} s_j s_j^H + sigma_m^2 I,   w_{m,j} = p_k g_{k,m},

and the cost is sum_m log det C_m + tr(C_m^-1 R_m).  The penalized
objective adds rho * sum_k (sum_t b_{k,t} - max_t b_{k,t}).

Cost values always come from a fresh Cholesky factorization; the
rank-1 inverse cache (:class:`CovCache`) is only used to speed up
coordinate updates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import rebuild_inverse
from .model import ReceivedData


class NotPositiveDefiniteError(ArithmeticError):
    """A model covariance failed to factorize."""


class SingularUpdateError(ArithmeticError):
    """A rank-1 update would make the matrix singular or indefinite."""


@dataclass(frozen=True)
class NumericsConfig:
    pd_tol: float = 1e-12
    refresh: int = 200
    fd_step: float = 1e-5


NUMERICS = NumericsConfig()


def _targets(data: ReceivedData, targets):
    return data.R if targets is None else np.asarray(targets)


def covariances(b: np.ndarray, data: ReceivedData) -> np.ndarray:
    """All per-AP model covariances, shape (M, n, n).

    ``b`` may also be an (M, J) array holding a separate vector per AP.
    """
    b = np.asarray(b, dtype=float)
    S = data.sig_rows
    coef = data.weights * b  # (M, J)
    C = np.einsum("mj,ji,jl->mil", coef, S, np.conj(S))
    n = S.shape[1]
    C += data.noise_var[:, None, None] * np.eye(n)[None]
    return C


def model_covariance(b: np.ndarray, data: ReceivedData, m: int) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    S = data.sig_rows
    coef = data.weights[m] * (b[m] if b.ndim == 2 else b)
    C = (S.T * coef) @ np.conj(S)
    C += data.noise_var[m] * np.eye(S.shape[1])
    return C


def _factor(C: np.ndarray):
    try:
        chol = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("model covariance is not positive definite") from exc
    logdet = 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)
    inv = np.linalg.inv(C)
    inv = 0.5 * (inv + np.conj(np.swapaxes(inv, -1, -2)))
    return logdet, inv


def per_ap_cost(b: np.ndarray, data: ReceivedData, targets=None) -> np.ndarray:
    """log det C_m + tr(C_m^-1 R_m) for every AP, shape (M,)."""
    R = _targets(data, targets)
    logdet, inv = _factor(covariances(b, data))
    return logdet + np.real(np.einsum("mij,mji->m", inv, R))


def nll_cost(b: np.ndarray, data: ReceivedData, targets=None) -> float:
    """Negative log-likelihood (up to constants), summed over APs.

    ``targets`` replaces the sample covariances (used by the CPU step of
    the accelerated distributed solver).
    """
    return float(np.sum(per_ap_cost(b, data, targets)))


def cost_lower_bound(data: ReceivedData) -> float:
    """sum_m n log sigma_m^2, a lower bound of the cost on the box."""
    return float(data.seq_len * np.sum(np.log(data.noise_var)))


def block_penalty(b: np.ndarray, num_delays: int) -> float:
    blocks = np.asarray(b, dtype=float).reshape(-1, num_delays)
    return float(np.sum(blocks.sum(axis=1) - blocks.max(axis=1)))


def penalized_cost(b: np.ndarray, data: ReceivedData, rho: float, targets=None) -> float:
    return nll_cost(b, data, targets) + rho * block_penalty(b, data.max_delay + 1)


def _gradient_from_inverse(inv: np.ndarray, R: np.ndarray, data: ReceivedData) -> np.ndarray:
    """Per-AP gradient rows w_mj (s^H C^-1 s - s^H C^-1 R C^-1 s), shape (M, J)."""
    S = data.sig_rows
    V = inv @ S.T  # (M, n, J), column j is C_m^-1 s_j
    q = np.real(np.einsum("ji,mij->mj", np.conj(S), V))
    r = np.real(np.einsum("mij,mij->mj", np.conj(V), R @ V))
    return data.weights * (q - r)


def nll_gradient(b: np.ndarray, data: ReceivedData, rho: float = 0.0, targets=None) -> np.ndarray:
    """Gradient of nll_cost(b) + rho * sum(b)."""
    _, inv = _factor(covariances(b, data))
    return rho + _gradient_from_inverse(inv, _targets(data, targets), data).sum(axis=0)


def local_gradients(x: np.ndarray, data: ReceivedData, targets=None) -> np.ndarray:
    """Gradient of each AP's own cost at its own point x[m], shape (M, J)."""
    _, inv = _factor(covariances(x, data))
    return _gradient_from_inverse(inv, _targets(data, targets), data)


@dataclass
class Evaluation:
    nll: float
    penalized: float
    grad: np.ndarray  # includes the +rho linear term


def evaluate(b: np.ndarray, data: ReceivedData, rho: float, targets=None) -> Evaluation:
    """Cost, penalized cost and gradient from a single factorization per AP."""
    R = _targets(data, targets)
    logdet, inv = _factor(covariances(b, data))
    nll = float(np.sum(logdet + np.real(np.einsum("mij,mji->m", inv, R))))
    grad = rho + _gradient_from_inverse(inv, R, data).sum(axis=0)
    pen = nll + rho * block_penalty(b, data.max_delay + 1)
    return Evaluation(nll=nll, penalized=pen, grad=grad)


def sherman_morrison_update(inv: np.ndarray, s: np.ndarray, c: float,
                            tol: float = NUMERICS.pd_tol) -> np.ndarray:
    """Inverse of (A + c s s^H) given inv = A^-1.

    Raises
    ------
    SingularUpdateError
        If 1 + c s^H A^-1 s <= tol, i.e. the update loses definiteness.
    """
    if c == 0.0:
        return inv.copy()
    v = inv @ s
    den = 1.0 + c * np.real(np.vdot(s, v))
    if den <= tol:
        raise SingularUpdateError(f"rank-1 update denominator {den:.3e} <= {tol:.1e}")
    return inv - (c / den) * np.outer(v, np.conj(v))


class CovCache:
    """Explicit per-AP inverses of C_m(x_m), maintained by rank-1 updates.

    A full refactorization happens every ``refresh`` rank-1 updates of an
    AP to stop round-off from accumulating.
    """

    def __init__(self, data: ReceivedData, x: np.ndarray, numerics: NumericsConfig = NUMERICS):
        self.data = data
        self.numerics = numerics
        x = np.asarray(x, dtype=float)
        M = data.num_aps
        self.x = np.array(np.broadcast_to(x, (M, data.num_coords)), dtype=float)
        self.counts = np.zeros(M, dtype=np.int64)
        self.inv = np.empty((M, data.seq_len, data.seq_len), dtype=complex)
        for m in range(M):
            self.rebuild(m)

    def rebuild(self, m: int) -> None:
        d = self.data
        self.inv[m] = rebuild_inverse(d.sig_rows, d.weights[m], self.x[m], float(d.noise_var[m]))

    def update(self, m: int, j: int, value: float) -> None:
        """Set coordinate j of AP m's point to ``value``."""
        c = (value - self.x[m, j]) * self.data.weights[m, j]
        self.inv[m] = sherman_morrison_update(self.inv[m], self.data.sig_rows[j], c, self.numerics.pd_tol)
        self.x[m, j] = value
        self.counts[m] += 1
        if self.counts[m] % self.numerics.refresh == 0:
            self.rebuild(m)

    def consistency_error(self, m: int) -> float:
        """Relative Frobenius distance between the cached and a fresh inverse."""
        exact = np.linalg.inv(model_covariance(self.x[m], self.data, m))
        return float(np.linalg.norm(self.inv[m] - exact) / np.linalg.norm(exact))
