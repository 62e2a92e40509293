"""Dense matrix helpers: Frobenius norm, LU inversion, complex determinants.

Everything operates on plain numpy arrays (row-major, float64 or
complex128).  The systems this package targets are small (n <= 64), so
the factorizations are written out directly instead of deferring to
LAPACK; that keeps the singularity test an explicit, documented
threshold instead of whatever the backend happens to do.
"""

from __future__ import annotations

import numpy as np

DEFAULT_PIVOT_TOL = 1e-12


class ShapeMismatch(ValueError):
    """Operands have incompatible shapes."""


class SingularError(ArithmeticError):
    """Matrix is singular to working precision (pivot below threshold)."""


def as_square_matrix(a, name="matrix"):
    """Validate and return `a` as a finite, square float64 array."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} has non-finite entries")
    return m


def frobenius_norm(a):
    """Square root of the sum of squared entries; zero iff `a` is zero."""
    a = np.asarray(a, dtype=float)
    return float(np.sqrt((a * a).sum()))


def mat_add(a, b):
    """Element-wise sum of two equal-shape matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"cannot add shapes {a.shape} and {b.shape}")
    return a + b


def mat_mul(a, b):
    """Standard matrix product."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def lu_invert(a, rel_pivot_tol=DEFAULT_PIVOT_TOL):
    """Invert a square matrix by LU factorization with partial pivoting.

    A pivot counts as zero when its magnitude falls below
    ``rel_pivot_tol * max(|a_ij|)``; the threshold is relative to the
    matrix scale so that well-scaled singular inputs are flagged instead
    of amplified.

    Raises
    ------
    SingularError
        If any pivot is below the threshold (includes the zero matrix).
    ShapeMismatch
        If `a` is not square.
    """
    m = as_square_matrix(a)
    if rel_pivot_tol <= 0:
        raise ValueError("rel_pivot_tol must be positive")
    n = m.shape[0]
    scale = np.abs(m).max()
    if scale == 0.0:
        raise SingularError("zero matrix is singular")
    threshold = rel_pivot_tol * scale

    # Factor in place; `aug` carries the identity so back-substitution
    # yields the inverse column block directly.
    lu = m.copy()
    inv = np.eye(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < threshold:
            raise SingularError(f"pivot {abs(lu[p, k]):.3e} below threshold {threshold:.3e}")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            inv[[k, p]] = inv[[p, k]]
        mult = lu[k + 1:, k] / lu[k, k]
        lu[k + 1:, k:] -= np.outer(mult, lu[k, k:])
        inv[k + 1:] -= np.outer(mult, inv[k])
    for k in range(n - 1, -1, -1):
        inv[k] -= lu[k, k + 1:] @ inv[k + 1:]
        inv[k] /= lu[k, k]
    return inv


def complex_det(a):
    """Determinant of one complex square matrix, or a stack of them.

    Uses complex LU with partial pivoting (pivot of largest magnitude);
    the result is the pivot product signed by the permutation parity.
    Accepts shape ``(n, n)`` or ``(..., n, n)`` and returns a scalar or
    an array of the leading shape.
    """
    m = np.asarray(a, dtype=complex)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ShapeMismatch(f"determinant needs square matrices, got shape {m.shape}")
    single = m.ndim == 2
    work = m.reshape((-1,) + m.shape[-2:]).copy()
    batch, n, _ = work.shape
    det = np.ones(batch, dtype=complex)
    rows = np.arange(batch)
    for k in range(n):
        p = k + np.argmax(np.abs(work[:, k:, k]), axis=1)
        swap = p != k
        det[swap] = -det[swap]
        tmp = work[rows, p].copy()
        work[rows, p] = work[:, k]
        work[:, k] = tmp
        pivot = work[:, k, k]
        det *= pivot
        # A zero pivot means the whole remaining column is zero; skip the
        # division (det already carries the zero factor).
        safe = np.where(pivot == 0, 1.0, pivot)
        mult = work[:, k + 1:, k] / safe[:, None]
        work[:, k + 1:, k:] -= mult[:, :, None] * work[:, None, k, k:]
    if single:
        return complex(det[0])
    return det.reshape(m.shape[:-2])
