"""Dense symmetric linear algebra used by every other module.

All routines operate on plain numpy arrays.  Symmetric inputs pass through
:func:`as_symmetric`, which validates and averages the two triangles, so
downstream code can rely on exact symmetry.

The spectral routine is a cyclic Jacobi sweep for orders up to
``_JACOBI_MAX_ORDER`` (deterministic, accurate at the matrix sizes this
package deals with); larger matrices fall back to LAPACK.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import SolverFailure

_JACOBI_MAX_ORDER = 64
_JACOBI_MAX_SWEEPS = 50


def as_symmetric(matrix, tol: float = 1e-8) -> np.ndarray:
    """Validate a square symmetric matrix and return its symmetrized copy.

    Raises ``ValueError`` when the input is not square or the two triangles
    disagree by more than ``tol`` relative to the entry scale.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = 1.0 + float(np.max(np.abs(a)))
    skew = float(np.max(np.abs(a - a.T)))
    if skew > tol * scale:
        raise ValueError(f"matrix is not symmetric: max |S - S^T| = {skew:g}")
    return 0.5 * (a + a.T)


class SpectralDecomposition(NamedTuple):
    """Eigenvalues in ascending order with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _jacobi_eigh(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalization of a symmetric matrix."""
    a = s.copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = max(float(np.max(np.abs(a))), 1e-300)
    off = 0.0
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = float(np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2)))
        if off <= 1e-14 * n * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                sign = 1.0 if theta >= 0.0 else -1.0
                t = sign / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - sn * col_q
                a[:, q] = sn * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - sn * row_q
                a[q, :] = sn * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    else:
        raise SolverFailure(
            f"Jacobi eigensolver did not converge (off-diagonal {off:g})",
            residual=off,
        )
    return np.diag(a).copy(), v


def eig_sym(s) -> SpectralDecomposition:
    """Spectral decomposition with ascending eigenvalues."""
    a = as_symmetric(s)
    if a.shape[0] <= _JACOBI_MAX_ORDER:
        w, v = _jacobi_eigh(a)
        order = np.argsort(w, kind="stable")
        w, v = w[order], v[:, order]
    else:
        w, v = np.linalg.eigh(a)
    return SpectralDecomposition(w, v)


def min_eig_multiplicity(
    s, tol: float = 1e-8
) -> tuple[float, int, np.ndarray]:
    """Smallest eigenvalue, its numerical multiplicity and a kernel basis.

    Eigenvalues within ``tol * (1 + ||S||_2)`` of the smallest one are
    clustered together; the returned basis spans the matching invariant
    subspace of ``S - lambda_min I`` (columns orthonormal).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w, v = eig_sym(s)
    lam_min = float(w[0])
    spread = tol * (1.0 + float(np.max(np.abs(w))))
    mult = int(np.count_nonzero(w - lam_min <= spread))
    return lam_min, mult, v[:, :mult].copy()


def kron_identity(k: int, m) -> np.ndarray:
    """Block-diagonal matrix holding ``k`` copies of ``m``."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    return np.kron(np.eye(int(k)), np.asarray(m, dtype=float))


def vec(m) -> np.ndarray:
    """Column-major stacking of a matrix into a vector."""
    return np.asarray(m, dtype=float).ravel(order="F")


def is_psd(s, tol: float = 1e-10) -> bool:
    """Positive semidefiniteness up to ``-tol * (1 + ||S||_2)``.

    A shifted Cholesky attempt decides the common case; the eigenvalue
    fallback settles borderline matrices exactly.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    a = as_symmetric(s)
    shift = tol * (1.0 + float(np.linalg.norm(a, 2)))
    try:
        np.linalg.cholesky(a + (shift + 1e-300) * np.eye(a.shape[0]))
        return True
    except np.linalg.LinAlgError:
        pass
    lam_min = float(eig_sym(a).eigenvalues[0])
    return lam_min >= -shift


def span_rank(vectors: Sequence, tol: float = 1e-8) -> int:
    """Numerical rank of the span of a list of vectors.

    Singular values are kept when at least ``tol`` times the largest one;
    an empty list (or all-zero vectors) has rank 0.
    """
    rows = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if not rows:
        return 0
    lengths = {r.shape[0] for r in rows}
    if len(lengths) != 1:
        raise ValueError("vectors must all have the same length")
    sigma = np.linalg.svd(np.vstack(rows), compute_uv=False)
    top = float(sigma[0]) if sigma.size else 0.0
    if top <= 0.0:
        return 0
    return int(np.count_nonzero(sigma >= tol * top))


def nullspace(matrix, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis of the null space via SVD.

    Directions whose singular value falls below ``tol`` times the largest
    singular value are treated as null.  Returns an ``n x d`` array.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.shape[0] == 0:
        return np.eye(a.shape[1])
    _, sigma, vt = np.linalg.svd(a)
    top = float(sigma[0]) if sigma.size else 0.0
    rank = 0 if top <= 0.0 else int(np.count_nonzero(sigma >= tol * top))
    return vt[rank:].T.copy()
