"""File formats for matrices and vectors.

Matrices travel in Matrix Market exchange format (both array and
coordinate flavours, symmetric storage supported) via scipy.io.
Vectors are plain text, one value per line.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse

from .linalg import check_symmetric

__all__ = ["read_matrix", "write_matrix", "read_vector", "write_vector"]


def read_matrix(path, require_symmetric: bool = True) -> np.ndarray:
    """Read a dense or coordinate Matrix Market file into a dense array."""
    try:
        M = scipy.io.mmread(path)
    except (ValueError, OSError) as err:
        raise ValueError(f"cannot read matrix from {path}: {err}") from err
    if scipy.sparse.issparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=np.float64)
    if require_symmetric:
        M = check_symmetric(M)
    return M


def write_matrix(path, M: np.ndarray, comment: str = "") -> None:
    """Write a dense symmetric matrix in Matrix Market array format."""
    M = check_symmetric(M)
    scipy.io.mmwrite(path, M, comment=comment, symmetry="symmetric")


def read_vector(path) -> np.ndarray:
    """Read a one-value-per-line text vector."""
    try:
        v = np.loadtxt(path, dtype=np.float64, ndmin=1)
    except (ValueError, OSError) as err:
        raise ValueError(f"cannot read vector from {path}: {err}") from err
    if v.ndim != 1:
        raise ValueError(f"expected one value per line in {path}, got shape {v.shape}")
    return v


def write_vector(path, v: np.ndarray) -> None:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    np.savetxt(path, v, fmt="%.17g")
