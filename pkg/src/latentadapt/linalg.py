"""Dense linear algebra: validated matrix product and a deterministic
symmetric eigensolver.

The eigensolver is a cyclic Jacobi iteration rather than a LAPACK call so
that eigenvector signs and tie handling are fully specified: downstream file
artifacts must be byte-stable across reruns, and eigenvectors are otherwise
only defined up to sign.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, ConvergenceFailure

_SYMMETRY_RTOL = 1e-9
_OFFDIAG_RTOL = 1e-12
_MAX_SWEEPS = 100


def _as_matrix(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ContractViolation(f"{name} must be a non-empty 2-d array")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with dimension checking."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(
            f"inner dimensions differ: {a.shape} x {b.shape}"
        )
    return a @ b


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    # largest-magnitude component positive; ties resolve to the lowest index
    # because argmax returns the first maximum
    idx = int(np.argmax(np.abs(vec)))
    if vec[idx] < 0.0:
        return -vec
    return vec


def sym_eig(s: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``k`` eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in non-increasing order with matching orthonormal
    eigenvectors as columns. Iterates full sweeps until the largest
    off-diagonal magnitude falls below 1e-12 times the Frobenius norm of the
    input (or is exactly zero), capped at 100 sweeps. Each eigenvector's sign
    is fixed so its largest-magnitude component is positive.
    """
    s = _as_matrix(s, "s")
    n = s.shape[0]
    if s.shape[1] != n:
        raise ContractViolation(f"matrix must be square, got {s.shape}")
    if not (1 <= k <= n):
        raise ContractViolation(f"k must be in [1, {n}], got {k}")
    fro = float(np.sqrt(np.sum(s * s)))
    if np.max(np.abs(s - s.T)) > _SYMMETRY_RTOL * max(fro, 1.0):
        raise ContractViolation("matrix is not symmetric within tolerance")

    a = (s + s.T) / 2.0
    v = np.eye(n, dtype=np.float64)
    tol = _OFFDIAG_RTOL * fro

    converged = False
    residual = 0.0
    for _ in range(_MAX_SWEEPS):
        off = np.abs(a - np.diag(np.diag(a)))
        residual = float(off.max())
        if residual <= tol:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - sn * col_q
                a[:, q] = sn * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - sn * row_q
                a[q, :] = sn * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0

                v_p = v[:, p].copy()
                v_q = v[:, q].copy()
                v[:, p] = c * v_p - sn * v_q
                v[:, q] = sn * v_p + c * v_q

    if not converged:
        off = np.abs(a - np.diag(np.diag(a)))
        residual = float(off.max())
        if residual > tol:
            raise ConvergenceFailure(
                f"Jacobi sweep cap reached, off-diagonal residual {residual:.3e}"
            )

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")[:k]
    top_values = values[order]
    top_vectors = np.empty((n, k), dtype=np.float64)
    for j, col in enumerate(order):
        top_vectors[:, j] = _fix_sign(v[:, col])
    return top_values, top_vectors
