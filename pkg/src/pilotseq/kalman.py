"""Kalman channel tracker for the block-fading AR(1) state-space model.

Two interchangeable paths are provided.  The full-matrix recursion accepts
arbitrary training matrices and serves as the reference implementation.
The diagonal path exploits simultaneous diagonalizability: when every
training column is a scaled covariance eigenvector, prediction and
measurement reduce to independent scalar recursions per eigenmode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel_model import ChannelStatistics, complex_normal


@dataclass
class KalmanState:
    """Full-matrix tracker state for one user.

    h_hat is the posterior mean, p_est / p_pred the posterior and prior
    error covariances for the current block index.
    """

    h_hat: np.ndarray
    p_est: np.ndarray
    p_pred: np.ndarray
    block_index: int = 0

    def nmse(self, stats: ChannelStatistics) -> float:
        return float(np.real(np.trace(self.p_est)) / stats.trace())


def init(stats: ChannelStatistics) -> KalmanState:
    """Zero estimate with the stationary covariance as prior uncertainty."""
    n = stats.n_t
    return KalmanState(
        h_hat=np.zeros(n, dtype=complex),
        p_est=stats.r_h.copy(),
        p_pred=stats.r_h.copy(),
        block_index=0,
    )


def simulate_received(h: np.ndarray, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Noisy pilot observations y = S^H h + w with unit-variance noise."""
    return s.conj().T @ h + complex_normal(rng, s.shape[1])


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.conj().T)


def measurement_update(state: KalmanState, s: np.ndarray, y: np.ndarray) -> KalmanState:
    """Condition on one block of pilots.

    The innovation Gramian S^H P S + I is Hermitian positive definite by
    construction, so it is factored by Cholesky.  A zero training matrix
    leaves the state untouched.
    """
    if s.size == 0 or not np.any(s):
        return KalmanState(state.h_hat.copy(), state.p_pred.copy(), state.p_pred.copy(),
                           state.block_index)
    ps = state.p_pred @ s
    gram = _symmetrize(s.conj().T @ ps + np.eye(s.shape[1]))
    cho = scipy.linalg.cho_factor(gram, lower=True)
    gain = scipy.linalg.cho_solve(cho, ps.conj().T).conj().T  # P S (S^H P S + I)^-1
    innovation = y - s.conj().T @ state.h_hat
    h_hat = state.h_hat + gain @ innovation
    p_est = _symmetrize(state.p_pred - gain @ ps.conj().T)
    return KalmanState(h_hat=h_hat, p_est=p_est, p_pred=state.p_pred.copy(),
                       block_index=state.block_index)


def time_update(state: KalmanState, stats: ChannelStatistics) -> KalmanState:
    """Propagate one block ahead through the AR(1) dynamics."""
    a = stats.a
    p_pred = _symmetrize(a * a * state.p_est + (1.0 - a * a) * stats.r_h)
    return KalmanState(
        h_hat=a * state.h_hat,
        p_est=state.p_est.copy(),
        p_pred=p_pred,
        block_index=state.block_index + 1,
    )


@dataclass
class DiagonalKalmanState:
    """Eigenmode-wise tracker: estimate coordinates in the eigenbasis plus
    posterior (lambda_bar) and prior (lambda_pred) per-mode variances."""

    coeff_hat: np.ndarray
    lambda_bar: np.ndarray
    lambda_pred: np.ndarray
    block_index: int = 0

    def nmse(self, lam: np.ndarray) -> float:
        return float(self.lambda_bar.sum() / lam.sum())


def diagonal_init(stats: ChannelStatistics) -> DiagonalKalmanState:
    r = stats.rank
    return DiagonalKalmanState(
        coeff_hat=np.zeros(r, dtype=complex),
        lambda_bar=stats.lam.astype(float).copy(),
        lambda_pred=stats.lam.astype(float).copy(),
        block_index=0,
    )


def diagonal_measurement_update(
    state: DiagonalKalmanState,
    trained_indices,
    projected_y,
    rho: float,
) -> DiagonalKalmanState:
    """Scalar Kalman updates on the sounded eigenmodes.

    projected_y[k] is the pilot observation for trained_indices[k], i.e.
    sqrt(rho) u_i^H h + noise.  Untrained modes keep their prior.
    """
    idx = np.asarray(list(trained_indices), dtype=int)
    coeff = state.coeff_hat.copy()
    lam_bar = state.lambda_pred.copy()
    if idx.size:
        if idx.max() >= coeff.shape[0] or idx.min() < 0:
            raise IndexError("trained index outside the eigenbasis")
        y = np.asarray(projected_y, dtype=complex)
        pred = state.lambda_pred[idx]
        gain = np.sqrt(rho) * pred / (1.0 + rho * pred)
        coeff[idx] = coeff[idx] + gain * (y - np.sqrt(rho) * coeff[idx])
        lam_bar[idx] = pred / (1.0 + rho * pred)
    return DiagonalKalmanState(
        coeff_hat=coeff,
        lambda_bar=lam_bar,
        lambda_pred=state.lambda_pred.copy(),
        block_index=state.block_index,
    )


def diagonal_time_update(
    state: DiagonalKalmanState, a: float, lam: np.ndarray
) -> DiagonalKalmanState:
    """Per-mode analogue of the AR(1) prediction step."""
    return DiagonalKalmanState(
        coeff_hat=a * state.coeff_hat,
        lambda_bar=state.lambda_bar.copy(),
        lambda_pred=a * a * state.lambda_bar + (1.0 - a * a) * lam,
        block_index=state.block_index + 1,
    )


def estimate_from_coefficients(state: DiagonalKalmanState, u: np.ndarray) -> np.ndarray:
    """Lift the eigenbasis coordinates back to an antenna-domain estimate."""
    return u @ state.coeff_hat
