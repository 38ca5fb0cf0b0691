from functools import cached_property

import numpy as np

from viforge.errors import NotPSDError
from viforge.numerics.linalg import EigenDecomposition, as_matrix, check_symmetric, sym_eig

PSD_TOLERANCE = 1e-8


class KernelMatrix:
    """Empirical kernel matrix K(i, j) = 𝕂(x_i, x_j)/N with a lazily cached eigendecomposition.

    The stored matrix is exactly symmetric: input is checked to relative tolerance
    1e-10 and then averaged with its transpose.
    """

    def __init__(self, matrix):
        m = check_symmetric(as_matrix(matrix, "kernel"), name="kernel")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        self.matrix = m

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @cached_property
    def eig(self) -> EigenDecomposition:
        eig = sym_eig(self.matrix)
        lowest = eig.eigenvalues[-1] if eig.eigenvalues.size else 0.0
        if lowest < -PSD_TOLERANCE * max(1.0, float(eig.eigenvalues[0])):
            raise NotPSDError(f"Kernel matrix has eigenvalue {lowest:.3e}")
        return eig

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues, descending, clamped at zero."""
        return np.clip(self.eig.eigenvalues, 0.0, None)

    @property
    def lambda_max(self) -> float:
        values = self.eigenvalues
        return float(values[0]) if values.size else 0.0

    def distance(self, other: "KernelMatrix") -> float:
        """Frobenius distance ‖K − K′‖_F."""
        return float(np.linalg.norm(self.matrix - other.matrix))

    def __repr__(self) -> str:
        return f"KernelMatrix(n={self.n}, trace={self.trace:.4g})"
