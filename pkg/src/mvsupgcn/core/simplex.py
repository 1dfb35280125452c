"""Euclidean projection onto the probability simplex (sort and threshold)."""

import numpy as np

from ..errors import ContractViolation


def simplex_threshold(v):
    """Return the scalar theta with ``max(v - theta, 0)`` on the simplex."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ContractViolation("cannot project an empty vector onto the simplex")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, u.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    return css[rho] / (rho + 1)


def simplex_project(v):
    v = np.asarray(v, dtype=np.float64)
    return np.maximum(v - simplex_threshold(v), 0.0)


def simplex_project_rows(M):
    """Project every row of ``M`` onto the simplex; vectorised across rows."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[1] == 0:
        raise ContractViolation(f"expected a non-empty 2-D array, got shape {M.shape}")
    U = -np.sort(-M, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ks = np.arange(1, M.shape[1] + 1)
    cond = U - css / ks > 0
    # last True per row; the first column always satisfies the condition
    rho = M.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(M.shape[0]), rho] / (rho + 1)
    return np.maximum(M - theta[:, None], 0.0)
