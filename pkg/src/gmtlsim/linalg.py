"""Dense float64 matrix helpers and a cyclic Jacobi symmetric eigensolver.

All matrices are 2-D row-major numpy float64 arrays.  Kernels delegate to
numpy (single fixed summation order per build, so identical inputs give
bit-identical outputs across runs); the eigensolver is hand-rolled because
everything downstream (covariance projections, matrix square roots, spectral
gaps) relies on its exact, deterministic behavior on matrices up to ~64x64.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError, ValidationError


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


def check_finite(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    """Shape-checked matrix product."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def frobenius(a) -> float:
    return float(np.sqrt(np.sum(np.asarray(a, dtype=np.float64) ** 2)))


def require_symmetric(a: np.ndarray, tol: float = 1e-10, name: str = "matrix") -> None:
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    dev = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if dev > tol * scale:
        raise ValidationError(f"{name} is not symmetric: max asymmetry {dev:.3e}")


def sym_eig(a, *, sweep_tol: float = 1e-12, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (w, V) with eigenvalues sorted in descending order and
    eigenvectors in the matching columns of V, so a == V @ diag(w) @ V.T.
    Sweeps stop once the off-diagonal Frobenius norm drops below
    sweep_tol * max(1, ||a||_F); the relative scaling keeps convergence
    attainable in float64 for matrices with large norms.
    """
    a = as_matrix(a, "eigensolver input")
    check_finite(a, "eigensolver input")
    require_symmetric(a, 1e-10, "eigensolver input")
    n = a.shape[0]
    A = 0.5 * (a + a.T)  # exact symmetry for the rotation recurrences
    V = np.eye(n)
    if n == 1:
        return np.array([A[0, 0]]), V

    threshold = sweep_tol * max(1.0, frobenius(A))

    def off_norm() -> float:
        off = A - np.diag(np.diag(A))
        return frobenius(off)

    for _ in range(max_sweeps):
        if off_norm() <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= threshold / (n * n):
                    continue
                phi = 0.5 * np.arctan2(2.0 * apq, A[q, q] - A[p, p])
                c = np.cos(phi)
                s = np.sin(phi)
                app, aqq = A[p, p], A[q, q]
                A[p, p] = c * c * app + s * s * aqq - 2.0 * s * c * apq
                A[q, q] = s * s * app + c * c * aqq + 2.0 * s * c * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for i in range(n):
                    if i == p or i == q:
                        continue
                    aip, aiq = A[i, p], A[i, q]
                    A[i, p] = c * aip - s * aiq
                    A[p, i] = A[i, p]
                    A[i, q] = c * aiq + s * aip
                    A[q, i] = A[i, q]
                vip = V[:, p].copy()
                viq = V[:, q].copy()
                V[:, p] = c * vip - s * viq
                V[:, q] = s * vip + c * viq
    else:
        if off_norm() > threshold:
            raise NumericError(
                f"Jacobi eigensolver did not converge in {max_sweeps} sweeps"
            )

    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], np.ascontiguousarray(V[:, order])
