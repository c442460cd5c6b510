"""Dedicated sensing signals, the MMSE water-filling precoder and LS estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, InfeasiblePilotCount, InvalidArgument, RankDeficientPilots

COND_LIMIT = 1e12


@dataclass(frozen=True)
class PilotMatrix:
    """m' x N sensing signal matrix with orthonormal rows."""

    X: np.ndarray

    @property
    def m_prime(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    def column(self, n: int) -> np.ndarray:
        """Pilot column x_n (1-based)."""
        return self.X[:, n - 1]


def generate_pilots(m_prime: int, N: int) -> PilotMatrix:
    """First ``m_prime`` rows of the unitary N-point DFT matrix."""
    if m_prime < 1:
        raise InvalidArgument("m_prime must be >= 1")
    if N < m_prime:
        raise InfeasiblePilotCount(f"need N >= m' (got N={N}, m'={m_prime})")
    n = np.arange(N)
    X = np.exp(-2j * np.pi * np.outer(np.arange(m_prime), n) / N) / np.sqrt(N)
    X.setflags(write=False)
    return PilotMatrix(X)


@dataclass(frozen=True)
class WaterfillPrecoder:
    W: np.ndarray
    mu0: float
    Q: np.ndarray
    eigvalues: np.ndarray

    @property
    def mode_powers(self) -> np.ndarray:
        """Column energies of W, i.e. the power put on each eigenmode."""
        return np.sum(np.abs(self.W) ** 2, axis=0)


def waterfill_precoder(eigvalues, sigma2: float, N: int, Ps: float, eigvectors=None,
                       max_iter: int = 200, rtol: float = 1e-12) -> WaterfillPrecoder:
    """LMMSE training precoder W = sqrt(sigma2/N) Q [(mu0 I - Lambda^-1)^+]^(1/2).

    The water level solves (sigma2/N) sum_i (mu0 - 1/lambda_i)^+ = Ps by
    bisection. Without ``eigvectors`` the channel correlation is taken to be
    diagonal, so Q is the identity.
    """
    lam = np.asarray(eigvalues, dtype=float)
    if lam.ndim != 1 or lam.size == 0 or np.any(lam <= 0):
        raise InvalidArgument("eigenvalues must be a non-empty vector of positive reals")
    if Ps <= 0 or sigma2 <= 0 or N < 1:
        raise InvalidArgument("need Ps > 0, sigma2 > 0, N >= 1")
    m = lam.size
    inv = 1.0 / lam

    def used(mu):
        return sigma2 / N * np.sum(np.maximum(mu - inv, 0.0))

    lo = inv.min()
    hi = lo + N * Ps * m / sigma2
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if used(mid) < Ps:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    mu0 = 0.5 * (lo + hi)
    # once bisection has settled the active set the level has a closed form
    active = inv < mu0
    if np.any(active):
        mu0 = (Ps * N / sigma2 + inv[active].sum()) / active.sum()
    if abs(used(mu0) - Ps) > 1e-9 * Ps:
        raise ConvergenceFailure("water level did not meet the power constraint")

    Q = np.eye(m, dtype=complex) if eigvectors is None else np.asarray(eigvectors, dtype=complex)
    gains = np.sqrt(np.maximum(mu0 - inv, 0.0))
    W = np.sqrt(sigma2 / N) * Q * gains[None, :]
    return WaterfillPrecoder(W, float(mu0), Q, lam)


@dataclass(frozen=True)
class LsEstimate:
    H_hat: np.ndarray
    cee: float | None = None
    condition: float = 1.0


def ls_estimate(Y, X, H=None) -> LsEstimate:
    """Least-squares fit H_hat = Y X^H (X X^H)^-1 of ``Y = H X + noise``.

    ``Y`` may be a single row given as a 1-D array.  ``X`` is any known
    signal matrix with full row rank; pass the truth ``H`` to get the CEE.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    if Y.shape[1] != X.shape[1]:
        raise InvalidArgument("Y and X must have the same number of columns")
    G = X @ X.conj().T
    s = np.linalg.svd(G, compute_uv=False)
    cond = np.inf if s[-1] <= 0 else s[0] / s[-1]
    if cond > COND_LIMIT:
        raise RankDeficientPilots(f"X X^H has condition number {cond:.3g}")
    H_hat = np.linalg.solve(G.T, (Y @ X.conj().T).T).T
    err = None if H is None else cee(H, H_hat)
    return LsEstimate(H_hat, err, float(cond))


def cee(H, H_hat) -> float:
    """Squared Frobenius norm of H - H_hat."""
    H = np.asarray(H)
    H_hat = np.asarray(H_hat)
    if H.size != H_hat.size:
        raise InvalidArgument(f"shape mismatch: {H.shape} vs {H_hat.shape}")
    diff = H.reshape(-1) - H_hat.reshape(-1)
    return float(np.sum(diff.real ** 2 + diff.imag ** 2))
