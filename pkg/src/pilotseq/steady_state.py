"""Closed-form steady-state Kalman MSE per eigenmode under periodic training.

A mode with channel power lam, fading coefficient a and per-symbol training
power rho that is sounded every g blocks settles into a periodic error cycle.
The post-training floor (min_ss_mse) is the fixed point of the once-per-cycle
Riccati recursion; the pre-training ceiling (max_ss_mse) is the floor aged
through g - 1 prediction-only blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def min_ss_mse(lam, a, rho, g):
    """Post-training steady-state MSE of one trained eigenmode.

    Closed form: lam / (0.5*(1 + lam*rho) + sqrt((0.5*(1 + lam*rho))**2
    + a**(2g)/(1 - a**(2g)) * lam*rho)).  Accepts scalars or arrays.

    Boundary handling is analytic: a == 1 returns 0 whenever lam*rho > 0
    (a static mode is pinned down by repeated sounding), and a == 0
    collapses to the one-shot MMSE lam / (1 + lam*rho).
    """
    lam = np.asarray(lam, dtype=float)
    a = np.asarray(a, dtype=float)
    rho = np.asarray(rho, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("eigenvalue must be positive")
    if np.any((a < 0) | (a > 1)):
        raise ValueError("temporal coefficient must lie in [0, 1]")
    if np.any(rho < 0):
        raise ValueError("training power must be nonnegative")
    if np.any(g < 1):
        raise ValueError("training interval must be >= 1")

    a2g = a ** (2.0 * g)
    half = 0.5 * (1.0 + lam * rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = a2g / (1.0 - a2g)  # +inf at a == 1
        out = lam / (half + np.sqrt(half * half + ratio * lam * rho))
    # at a == 1 the expression is 0 for lam*rho > 0 and 0/0 for rho == 0,
    # where no information ever arrives and the mode keeps its full power
    out = np.where(a2g >= 1.0, np.where(lam * rho > 0.0, 0.0, lam), out)
    return float(out) if out.ndim == 0 else out


def max_ss_mse(lam_floor, lam, a, g):
    """Pre-training steady-state MSE: the floor aged over g - 1 blocks."""
    lam_floor = np.asarray(lam_floor, dtype=float)
    lam = np.asarray(lam, dtype=float)
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    decay = a ** (2.0 * (g - 1.0))
    out = decay * lam_floor + (1.0 - decay) * lam
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SteadyStateProfile:
    """Per-eigenmode steady-state MSE envelopes for one training plan.

    Modes carrying g = 0 are never sounded; both envelopes stay at the
    channel power lam for those.
    """

    lam: np.ndarray
    lambda_lower: np.ndarray
    lambda_upper: np.ndarray
    g: np.ndarray  # per-mode interval, 0 for untrained modes
    a: float
    rho: float
    n_d: int

    @property
    def trained(self) -> np.ndarray:
        return self.g > 0

    def upper_sum(self) -> float:
        return float(self.lambda_upper.sum())

    def lower_sum(self) -> float:
        return float(self.lambda_lower.sum())


def profile(lam: np.ndarray, a: float, rho: float, g) -> SteadyStateProfile:
    """Vectorized envelopes with untrained modes padded at their full power."""
    lam = np.asarray(lam, dtype=float)
    g = np.asarray(g, dtype=int)
    if g.shape != lam.shape:
        raise ValueError("g must have one entry per eigenmode")
    trained = g > 0
    lower = lam.copy()
    upper = lam.copy()
    if np.any(trained):
        gt = g[trained].astype(float)
        lower_t = min_ss_mse(lam[trained], a, rho, gt)
        lower[trained] = lower_t
        upper[trained] = max_ss_mse(lower_t, lam[trained], a, gt)
    return SteadyStateProfile(
        lam=lam,
        lambda_lower=lower,
        lambda_upper=upper,
        g=g,
        a=float(a),
        rho=float(rho),
        n_d=int(np.count_nonzero(trained)),
    )


def bound_gap(prof: SteadyStateProfile) -> float:
    """Width of the steady-state sandwich over trained modes.

    Computed as sum_i (1 - a**(2*(g_i - 1))) * (lam_i - floor_i), which
    coincides with ||upper||_1 - ||lower||_1 restricted to trained modes.
    """
    t = prof.trained
    if not t.any():
        return 0.0
    decay = prof.a ** (2.0 * (prof.g[t].astype(float) - 1.0))
    return float(np.sum((1.0 - decay) * (prof.lam[t] - prof.lambda_lower[t])))


def riccati_iterate_oracle(lam, a, rho, g, tol: float = 1e-12, max_iter: int = 10**6):
    """Brute-force fixed point of the per-cycle Riccati recursion.

    Iterates x <- z / (rho*z + 1) with z = a**(2g)*x + (1 - a**(2g))*lam,
    starting from x = lam, until the largest successive change falls below
    tol.  Accepts scalars or broadcastable arrays; returns (value, iterations).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lam = np.asarray(lam, dtype=float)
    a = np.asarray(a, dtype=float)
    rho = np.asarray(rho, dtype=float)
    g = np.asarray(g, dtype=float)
    a2g = a ** (2.0 * g)
    shape = np.broadcast_shapes(lam.shape, a2g.shape, rho.shape)
    lam_b = np.broadcast_to(lam, shape)
    a2g_b = np.broadcast_to(a2g, shape)
    rho_b = np.broadcast_to(rho, shape)
    x = np.array(lam_b, dtype=float)
    for it in range(1, max_iter + 1):
        z = a2g_b * x + (1.0 - a2g_b) * lam_b
        x_next = z / (rho_b * z + 1.0)
        delta = np.max(np.abs(x_next - x))
        x = x_next
        if delta < tol:
            return (float(x), it) if x.ndim == 0 else (x, it)
    raise RuntimeError(f"Riccati iteration did not converge within {max_iter} steps")
