"""Dense matrix kernels on float64 numpy arrays.

Matrices are plain 2-D ``np.ndarray`` objects; these helpers never mutate
their inputs.
"""

import numpy as np
from scipy.spatial.distance import cdist


def as_matrix(M):
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    return A


def row_softmax(M):
    """Row-wise softmax with max subtraction."""
    A = as_matrix(M)
    E = np.exp(A - A.max(axis=1, keepdims=True))
    return E / E.sum(axis=1, keepdims=True)


def tanh_map(M):
    return np.tanh(as_matrix(M))


def l2_normalize_rows(M):
    """Scale each nonzero row to unit Euclidean norm; zero rows pass through."""
    A = as_matrix(M)
    norms = np.sqrt(np.einsum("ij,ij->i", A, A))[:, None]
    safe = np.where(norms > 0.0, norms, 1.0)
    return A / safe


def masked_logsumexp_rows(M, mask):
    """Log-sum-exp over the entries of each row where ``mask`` is True.

    Rows with an empty mask yield 0. Returns an ``(m, 1)`` column.
    """
    A = as_matrix(M)
    mask = np.asarray(mask, dtype=bool)
    has_any = mask.any(axis=1)
    shifted = np.where(mask, A, -np.inf)
    mx = np.where(has_any, shifted.max(axis=1), 0.0)
    E = np.where(mask, np.exp(A - mx[:, None]), 0.0)
    s = E.sum(axis=1)
    out = np.where(has_any, mx + np.log(np.where(has_any, s, 1.0)), 0.0)
    return out[:, None]


def pairwise_sq_dists(X):
    """Squared Euclidean distances between all pairs of rows."""
    X = as_matrix(X)
    # direct differences, so equal distances compare exactly for tie-breaking
    return cdist(X, X, "sqeuclidean")
