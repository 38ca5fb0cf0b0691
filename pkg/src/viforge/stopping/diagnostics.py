import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import brentq

from viforge.errors import BudgetError, InvalidArgumentError
from viforge.numerics.linalg import DEFAULT_PINV_CUTOFF, quad_form_pinv
from viforge.stopping.kernel import KernelMatrix

logger = logging.getLogger(__name__)

T_MAX_CAP = 10_000_000
BOUND_SLACK = 1e-8
_TWO_E = 2.0 * math.e


def _clean_eigenvalues(eigenvalues) -> np.ndarray:
    values = np.asarray(eigenvalues, dtype=np.float64).ravel()
    if values.size == 0:
        raise InvalidArgumentError("eigenvalues must be nonempty")
    if np.any(values < -1e-8):
        raise InvalidArgumentError(f"eigenvalue {values.min():.3e} is below -1e-8")
    return np.clip(values, 0.0, None)


class _Rademacher:
    """Vectorized R̂(ρ) = sqrt(Σ min(λ_i, ρ²) / N) on a fixed spectrum."""

    def __init__(self, eigenvalues):
        self.values = np.sort(_clean_eigenvalues(eigenvalues))
        self.n = self.values.size
        self.prefix = np.concatenate([[0.0], np.cumsum(self.values)])

    def of_squared(self, rho_sq) -> np.ndarray:
        rho_sq = np.asarray(rho_sq, dtype=np.float64)
        below = np.searchsorted(self.values, rho_sq, side="right")
        total = self.prefix[below] + (self.n - below) * rho_sq
        return np.sqrt(total / self.n)


def local_rademacher(eigenvalues, rho: float) -> float:
    """Local empirical Rademacher complexity of the kernel class at radius ρ."""
    if rho < 0:
        raise InvalidArgumentError(f"rho must be non-negative, got {rho}")
    if math.isinf(rho):
        values = _clean_eigenvalues(eigenvalues)
        return float(np.sqrt(values.sum() / values.size))
    return float(_Rademacher(eigenvalues).of_squared(rho * rho))


def hilbert_distance(kernel: KernelMatrix, c, cutoff: float = DEFAULT_PINV_CUTOFF) -> float:
    """C_H = sqrt(cᵀK⁺c / N), the RKHS distance between warm start and target."""
    c = np.asarray(c, dtype=np.float64).ravel()
    if c.shape[0] != kernel.n:
        raise InvalidArgumentError(f"c has length {c.shape[0]}, kernel is {kernel.n}x{kernel.n}")
    q = quad_form_pinv(kernel.matrix, c, cutoff=cutoff, eig=kernel.eig)
    return math.sqrt(q / kernel.n)


def critical_radius(eigenvalues, c_h: float, sigma: float) -> float:
    """Smallest ρ > 0 with R̂(ρ) ≤ ρ²C_H²/(2eσ).

    R̂(ρ)/ρ is non-increasing, so the crossing of ρC_H²/(2eσ) − R̂(ρ)/ρ is unique and
    is bracketed by bisection-style root finding.
    """
    if c_h <= 0:
        raise InvalidArgumentError(f"C_H must be positive, got {c_h}")
    if sigma <= 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    rad = _Rademacher(eigenvalues)
    lam_max = float(rad.values[-1])
    if lam_max <= 0:
        return float(np.finfo(np.float64).tiny)

    slope = c_h * c_h / (_TWO_E * sigma)

    def gap(rho: float) -> float:
        return rho * slope - float(rad.of_squared(rho * rho)) / rho

    lo = 1e-6 * min(math.sqrt(lam_max), 1.0 / (slope * math.sqrt(rad.n)))
    hi = max(2.0 * lo, math.sqrt(lam_max))
    while gap(hi) <= 0:
        hi *= 2.0
    return float(brentq(gap, lo, hi, xtol=lo * 1e-10, rtol=1e-12, maxiter=500))


def t_max(eigenvalues, c_h: float, sigma: float, step: float) -> int:
    """T̂_max: one less than the first τ with R̂(1/√η_τ) > C_H²/(2eσ·η_τ), η_τ = τ·step."""
    if sigma <= 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    if c_h < 0:
        raise InvalidArgumentError(f"C_H must be non-negative, got {c_h}")
    rad = _Rademacher(eigenvalues)
    lam_max = float(rad.values[-1])
    limit = 1.0 if lam_max <= 0 else min(1.0, 1.0 / lam_max)
    if step <= 0 or step > limit * (1.0 + 1e-12):
        raise InvalidArgumentError(f"step {step} must lie in (0, min(1, 1/lambda_1)] = (0, {limit}]")
    if lam_max <= 0:
        # R̂ ≡ 0, the condition never fires
        raise BudgetError("T_max is unbounded for an all-zero spectrum")

    threshold = c_h * c_h / (_TWO_E * sigma)
    start, chunk = 1, 1024
    while start <= T_MAX_CAP:
        stop = min(start + chunk, T_MAX_CAP + 1)
        eta = np.arange(start, stop, dtype=np.float64) * step
        fired = np.flatnonzero(rad.of_squared(1.0 / eta) > threshold / eta)
        if fired.size:
            return int(start + fired[0] - 1)
        start, chunk = stop, min(chunk * 2, 1 << 20)
    raise BudgetError(f"T_max scan exceeded {T_MAX_CAP} iterations")


def kernel_update_residuals(trajectory, kernel: KernelMatrix, y, step: float) -> np.ndarray:
    """‖δ_τ‖₂ with δ_τ = [f_{τ+1} − f_τ + ηK(f_τ − Y)]/η against the frozen kernel."""
    traj = _check_trajectory(trajectory, kernel.n)
    y = np.asarray(y, dtype=np.float64).ravel()
    f_now, f_next = traj[:-1], traj[1:]
    deltas = (f_next - f_now + step * (f_now - y) @ kernel.matrix) / step
    return np.linalg.norm(deltas, axis=1)


def kernel_drift(k0: KernelMatrix, k_tau: KernelMatrix) -> float:
    """‖K_0 − K_τ‖_F."""
    return k0.distance(k_tau)


def _check_trajectory(trajectory, n: int) -> np.ndarray:
    if trajectory is None:
        raise InvalidArgumentError("a recorded trajectory is required")
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[0] < 1 or traj.shape[1] != n:
        raise InvalidArgumentError(f"trajectory must have shape (T+1, {n}), got {traj.shape}")
    return traj


class ErrorDecomposition(BaseModel):
    """Per-iteration bias, variance and difference terms bounding ‖f_τ − f_{0,−I}‖²_N."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    bias_sq: np.ndarray
    variance: np.ndarray
    difference: np.ndarray
    error: np.ndarray
    shrinkage: np.ndarray
    step: float

    @property
    def n_iters(self) -> int:
        return self.error.shape[0] - 1

    @property
    def bound(self) -> np.ndarray:
        return self.bias_sq + self.variance + self.difference

    @property
    def bound_satisfied(self) -> np.ndarray:
        return self.error <= self.bound + BOUND_SLACK

    @property
    def holds(self) -> bool:
        return bool(np.all(self.bound_satisfied))

    def shrinkage_at(self, tau: int) -> np.ndarray:
        """Diagonal of S^τ = (I − εΛ)^τ."""
        return self.shrinkage**tau


def decompose_error(
    kernel: KernelMatrix,
    trajectory,
    warm_preds,
    true_f,
    noise,
    step: float,
    cutoff: float = DEFAULT_PINV_CUTOFF,
) -> ErrorDecomposition:
    """Evaluate both sides of the bias/variance/difference bound on a recorded run.

    ``true_f`` is f_{0,−I} on the training rows and ``noise`` is Y − true_f. Eigenvalues
    below cutoff·λ_max are treated as zero, and δ_τ is measured against that
    truncated kernel so the unrolled recursion is exact.
    """
    n = kernel.n
    traj = _check_trajectory(trajectory, n)
    warm = np.asarray(warm_preds, dtype=np.float64).ravel()
    truth = np.asarray(true_f, dtype=np.float64).ravel()
    w = np.asarray(noise, dtype=np.float64).ravel()
    if not (warm.size == truth.size == w.size == n):
        raise InvalidArgumentError("warm_preds, true_f and noise must have one entry per row")
    if step <= 0:
        raise InvalidArgumentError(f"step must be positive, got {step}")
    scale = max(1.0, float(np.max(np.abs(warm))))
    if np.max(np.abs(traj[0] - warm)) > 1e-8 * scale:
        raise InvalidArgumentError("trajectory must start at the warm-start predictions")

    eig = kernel.eig
    lam = np.clip(eig.eigenvalues, 0.0, None)
    if lam.size and lam[0] > 0:
        lam = np.where(lam >= cutoff * lam[0], lam, 0.0)
    u = eig.eigenvectors
    k_trunc = (u * lam) @ u.T
    y = truth + w

    zeta_star = u.T @ (truth - warm) / math.sqrt(n)
    w_tilde = u.T @ w
    base = 1.0 - step * lam

    n_steps = traj.shape[0]
    bias_sq = np.empty(n_steps)
    variance = np.empty(n_steps)
    difference = np.empty(n_steps)
    error = np.mean((traj - truth) ** 2, axis=1)

    carried = np.zeros(n)
    s_tau = np.ones(n)
    for tau in range(n_steps):
        # 1. Terms at τ
        bias_sq[tau] = 2.0 * np.sum(s_tau**2 * zeta_star**2)
        variance[tau] = 4.0 / n * np.sum((1.0 - s_tau) ** 2 * w_tilde**2)
        difference[tau] = 4.0 * step**2 / n * np.sum(carried**2)
        if tau == n_steps - 1:
            break

        # 2. Advance: Σ_i S^{τ-i} δ̃_i and S^{τ+1}
        delta = (traj[tau + 1] - traj[tau] + step * k_trunc @ (traj[tau] - y)) / step
        carried = base * carried + u.T @ delta
        s_tau = s_tau * base

    logger.debug(f"Decomposed error over {n_steps - 1} iterations (rank {int(np.sum(lam > 0))})")
    return ErrorDecomposition(
        bias_sq=bias_sq,
        variance=variance,
        difference=difference,
        error=error,
        shrinkage=base,
        step=step,
    )


class StoppingDiagnostics(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eigenvalues: np.ndarray
    c_h: float
    rho_hat: float
    t_max: int
    step: float
    eta: np.ndarray
    residual_norms: Optional[np.ndarray] = None

    def summary(self) -> dict:
        out = {
            "n": int(self.eigenvalues.size),
            "lambda_max": float(self.eigenvalues[0]) if self.eigenvalues.size else 0.0,
            "trace": float(self.eigenvalues.sum()),
            "c_h": self.c_h,
            "rho_hat": self.rho_hat,
            "t_max": self.t_max,
            "step": self.step,
        }
        if self.residual_norms is not None and self.residual_norms.size:
            out["max_residual_norm"] = float(self.residual_norms.max())
        return out


def compute_diagnostics(
    kernel: KernelMatrix,
    c,
    sigma: float,
    step: Optional[float] = None,
    trajectory=None,
    y=None,
) -> StoppingDiagnostics:
    """Spectrum, C_H, ρ̂_N and T̂_max for one warm-started run.

    ``step`` defaults to min(1, 1/λ₁). Residual norms are added when a trajectory and
    responses are given.
    """
    eigenvalues = kernel.eigenvalues
    lam_max = kernel.lambda_max
    if step is None:
        step = 1.0 if lam_max <= 0 else min(1.0, 1.0 / lam_max)
    c_h = hilbert_distance(kernel, c)
    rho = critical_radius(eigenvalues, c_h, sigma) if c_h > 0 else float(np.finfo(np.float64).tiny)
    t = t_max(eigenvalues, c_h, sigma, step)

    residuals: Optional[np.ndarray] = None
    if trajectory is not None and y is not None:
        residuals = kernel_update_residuals(trajectory, kernel, y, step)

    logger.info(f"Diagnostics: C_H={c_h:.4g}, rho_hat={rho:.4g}, T_max={t}, step={step:.4g}")
    return StoppingDiagnostics(
        eigenvalues=eigenvalues,
        c_h=c_h,
        rho_hat=rho,
        t_max=t,
        step=step,
        eta=np.arange(t + 1) * step,
        residual_norms=residuals,
    )
