"""Complex dense linear-algebra kernels shared by the precoding stack.

The heavy factorizations delegate to LAPACK through numpy; the contracts
(thin SVD, minimum-norm least squares, exact multiplication accounting)
are what the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, NumericalError
from .validation import as_complex_matrix


@dataclass
class MultiplicationCounter:
    """Running tally of complex multiplications.

    Additions are free: the complexity figures count multiplications only.
    The counter is an explicit value owned by the caller, never a global.
    """

    count: int = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def reset(self) -> None:
        self.count = 0


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``m = u @ diag(sigma) @ v.conj().T``.

    ``u`` and ``v`` have orthonormal columns, ``sigma`` is real,
    non-negative and sorted descending.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class LeastSquaresSolution:
    """Solution of ``min_x ||a @ x - b||_F`` plus rank diagnostics."""

    x: np.ndarray
    rank: int
    rank_deficient: bool


def herm(a: np.ndarray) -> np.ndarray:
    """Hermitian (conjugate) transpose."""
    return a.conj().T


def svd(m) -> SvdResult:
    """Thin singular value decomposition of a complex matrix.

    Raises
    ------
    NumericalError
        If the underlying iteration does not converge; the message carries
        the input dimensions.
    """
    m = as_complex_matrix(m, "m")
    try:
        u, sigma, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge for a {m.shape[0]}x{m.shape[1]} input"
        ) from exc
    return SvdResult(u=u, sigma=sigma, v=herm(vh))


def least_squares(a, b, counter: MultiplicationCounter | None = None) -> LeastSquaresSolution:
    """Least-squares solve of ``a @ x = b`` for tall ``a``.

    Rank-deficient systems return the minimum-norm solution and are flagged
    in the result instead of raising.

    When ``counter`` is given it is charged with the normal-equations cost
    model (Gram + right-hand side + k^3 solve), which is the model the
    complexity figures use for every least-squares stage.
    """
    a = as_complex_matrix(a, "a")
    b = as_complex_matrix(b, "b")
    if a.shape[0] != b.shape[0]:
        raise DimensionError(
            f"a has {a.shape[0]} rows but b has {b.shape[0]} rows"
        )
    if a.shape[0] < a.shape[1]:
        raise DimensionError(
            f"a must be square or tall, got shape {a.shape}"
        )
    if counter is not None:
        counter.add(least_squares_cost(a.shape[0], a.shape[1], b.shape[1]))
    x, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    return LeastSquaresSolution(x=x, rank=int(rank), rank_deficient=int(rank) < a.shape[1])


def least_squares_cost(m: int, k: int, n: int) -> int:
    """Multiplication count charged for an m x k / m x n least-squares solve."""
    return k * k * m + k * m * n + k**3


def frobenius_norm(m) -> float:
    """Frobenius norm ``sqrt(sum |m_ij|^2)``."""
    m = as_complex_matrix(m, "m")
    return float(np.linalg.norm(m))


def matmul_counted(a, b, counter: MultiplicationCounter) -> np.ndarray:
    """Matrix product ``a @ b`` that charges ``rows * inner * cols`` multiplications."""
    a = as_complex_matrix(a, "a")
    b = as_complex_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"cannot multiply shapes {a.shape} and {b.shape}: inner dimensions differ"
        )
    counter.add(a.shape[0] * a.shape[1] * b.shape[1])
    return a @ b
