import logging
from typing import Literal, Optional

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from viforge.errors import InvalidArgumentError, NotPSDError, NumericOverflowError
from viforge.numerics.rng import RngStream

logger = logging.getLogger(__name__)

DEFAULT_PINV_CUTOFF = 1e-10
SYMMETRY_RTOL = 1e-10


class EigenDecomposition(BaseModel):
    """Eigenvalues in non-increasing order with orthonormal eigenvectors as columns."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T

    def rank(self, cutoff: float = DEFAULT_PINV_CUTOFF) -> int:
        if self.eigenvalues.size == 0 or self.eigenvalues[0] <= 0:
            return 0
        return int(np.sum(self.eigenvalues > cutoff * self.eigenvalues[0]))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return m


def check_symmetric(a: np.ndarray, rtol: float = SYMMETRY_RTOL, name: str = "matrix") -> np.ndarray:
    if a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got shape {a.shape}")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if a.size and np.max(np.abs(a - a.T)) > rtol * scale:
        raise InvalidArgumentError(f"{name} is not symmetric within relative tolerance {rtol}")
    return a


def _orient(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude component of each eigenvector made positive (first wins on ties)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _jacobi(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    fro = np.linalg.norm(a)
    if fro == 0.0:
        return np.zeros(n), v

    for sweep in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off < tol * fro:
            logger.debug(f"Jacobi converged after {sweep} sweeps (n={n})")
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 if theta == 0.0 else np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    raise NumericOverflowError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")


def sym_eig(a, method: Literal["lapack", "jacobi"] = "lapack") -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    ``method="jacobi"`` runs the cyclic Jacobi rotation scheme (stops when the
    off-diagonal Frobenius norm drops below 1e-12 of the matrix norm); the default
    uses LAPACK through numpy. Output is deterministic for identical input.
    """
    m = check_symmetric(as_matrix(a))
    m = 0.5 * (m + m.T)

    if method == "jacobi":
        values, vectors = _jacobi(m)
    elif method == "lapack":
        values, vectors = np.linalg.eigh(m)
    else:
        raise InvalidArgumentError(f"Unknown eigensolver '{method}'")

    order = np.argsort(-values, kind="stable")
    return EigenDecomposition(eigenvalues=values[order], eigenvectors=_orient(vectors[:, order]))


def check_psd(eig: EigenDecomposition, cutoff: float = DEFAULT_PINV_CUTOFF) -> None:
    values = eig.eigenvalues
    if values.size == 0:
        return
    scale = max(float(values[0]), 0.0)
    if values[-1] < -cutoff * scale or (scale == 0.0 and values[-1] < 0.0):
        raise NotPSDError(f"Matrix has negative eigenvalue {values[-1]:.3e} (largest {values[0]:.3e})")


def quad_form_pinv(
    a,
    c,
    cutoff: float = DEFAULT_PINV_CUTOFF,
    eig: Optional[EigenDecomposition] = None,
) -> float:
    """Return cᵀA⁺c where A⁺ drops eigenvalues below ``cutoff``·λ_max."""
    if not 0.0 < cutoff < 1.0:
        raise InvalidArgumentError(f"cutoff must lie in (0, 1), got {cutoff}")
    vec = np.asarray(c, dtype=np.float64).ravel()
    if eig is None:
        eig = sym_eig(a)
    if vec.shape[0] != eig.eigenvalues.shape[0]:
        raise InvalidArgumentError(
            f"vector length {vec.shape[0]} does not match matrix dimension {eig.eigenvalues.shape[0]}"
        )
    check_psd(eig, cutoff)

    values = eig.eigenvalues
    if values.size == 0 or values[0] <= 0.0:
        return 0.0
    keep = values > cutoff * values[0]
    coords = eig.eigenvectors[:, keep].T @ vec
    return float(np.sum(coords**2 / values[keep]))


def mvn_sample(mean, cov, n: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` rows from N(mean, cov): Cholesky, with an eigen fallback for singular cov."""
    mu = np.asarray(mean, dtype=np.float64).ravel()
    sigma = check_symmetric(as_matrix(cov, "cov"), name="cov")
    if sigma.shape[0] != mu.shape[0]:
        raise InvalidArgumentError(f"mean has length {mu.shape[0]} but cov is {sigma.shape}")
    if n < 0:
        raise InvalidArgumentError(f"n must be non-negative, got {n}")

    try:
        factor = scipy.linalg.cholesky(sigma, lower=True)
    except np.linalg.LinAlgError:
        eig = sym_eig(sigma)
        check_psd(eig)
        factor = eig.eigenvectors * np.sqrt(np.clip(eig.eigenvalues, 0.0, None))
        logger.debug("Covariance is singular; using eigen factorization")

    z = rng.generator().standard_normal((n, mu.shape[0]))
    return mu + z @ factor.T
