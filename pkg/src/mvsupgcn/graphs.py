"""Per-view propagation matrices: KNN filters, learned semi-supervised graphs, fusion.

Each view contributes two graphs. The first is a binary KNN adjacency pushed
through the self-loop renormalisation and the flexible filter
``(1 - beta) I + beta A_hat``. The second is a row-stochastic similarity
matrix ``S`` learned jointly with soft labels by block coordinate descent.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core.ops import as_matrix, pairwise_sq_dists
from .core.simplex import simplex_project_rows
from .errors import ContractViolation, SolverError


def knn_adjacency(X, k):
    """Binary symmetric KNN adjacency (OR rule, zero diagonal).

    Distance ties are broken towards the lower sample index.
    """
    X = as_matrix(X)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ContractViolation(f"need 1 <= k < n, got k={k}, n={n}")
    D = pairwise_sq_dists(X)
    np.fill_diagonal(D, np.inf)
    # stable sort keeps index order among equal distances
    nbrs = np.argsort(D, axis=1, kind="stable")[:, :k]
    A = np.zeros((n, n))
    A[np.repeat(np.arange(n), k), nbrs.ravel()] = 1.0
    return np.maximum(A, A.T)


def renormalize(A):
    """``D^-1/2 (I + A) D^-1/2`` with ``D`` the degree matrix of ``I + A``."""
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ContractViolation(f"adjacency must be square, got {A.shape}")
    if (A < 0).any():
        raise ContractViolation("adjacency has negative entries")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12):
        raise ContractViolation("adjacency is not symmetric")
    M = A + np.eye(A.shape[0])
    inv_sqrt = 1.0 / np.sqrt(M.sum(axis=1))
    return inv_sqrt[:, None] * M * inv_sqrt[None, :]


def flexible_filter(A_hat, beta):
    if not 0.0 <= beta <= 1.0:
        raise ContractViolation(f"beta must lie in [0, 1], got {beta}")
    A_hat = as_matrix(A_hat)
    return (1.0 - beta) * np.eye(A_hat.shape[0]) + beta * A_hat


# -- semi-supervised graph --------------------------------------------------------

@dataclass
class SemiGraphConfig:
    eta: float = 5.0
    gamma: float = 100.0
    mu: float = 0.003
    alpha: float = 0.003
    max_passes: int = 10
    rel_tol: float = 1e-5
    labeled_weight: float = 1.0
    symmetrize: bool = False

    def __post_init__(self):
        if self.gamma <= 0:
            raise ContractViolation(f"gamma must be positive, got {self.gamma}")
        for name in ("eta", "mu", "alpha", "labeled_weight"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be nonnegative")
        if self.max_passes < 1:
            raise ContractViolation("max_passes must be >= 1")


@dataclass
class SemiGraphState:
    S: np.ndarray
    O: np.ndarray
    Q: np.ndarray
    b: np.ndarray
    U: np.ndarray
    objectives: list = field(default_factory=list)


def graph_laplacian(S):
    """Unnormalised Laplacian of the symmetric weights ``S + S^T``.

    With this convention ``Tr(X^T L X) = sum_ij S_ij ||x_i - x_j||^2``, which
    keeps the row-wise S-update separable and exact.
    """
    W = S + S.T
    return np.diag(W.sum(axis=1)) - W


def semi_graph_objective(state, X, Y, cfg):
    X, Y = as_matrix(X), as_matrix(Y)
    S, O, Q, b, U = state.S, state.O, state.Q, state.b, state.U
    L = graph_laplacian(S)
    R = O - Y
    P = X @ Q + b[None, :]
    return float(
        np.trace(X.T @ L @ X)
        + cfg.eta * np.trace(O.T @ L @ O)
        + np.sum(U[:, None] * R * R)
        + cfg.gamma * np.sum(S * S)
        + cfg.mu * (np.sum(Q * Q) + cfg.alpha * np.sum((P - O) ** 2))
    )


def _update_O(state, X, Y, cfg):
    n = X.shape[0]
    ma = cfg.mu * cfg.alpha
    lhs = cfg.eta * graph_laplacian(state.S) + np.diag(state.U) + ma * np.eye(n)
    rhs = state.U[:, None] * Y + ma * (X @ state.Q + state.b[None, :])
    try:
        factor = cho_factor(lhs)
    except LinAlgError as exc:
        raise SolverError(
            f"O-update system is not positive definite (mu*alpha={ma}, "
            f"labeled={int((state.U > 0).sum())}, min diag={lhs.diagonal().min():.3g})"
        ) from exc
    return cho_solve(factor, rhs)


def _update_Qb(O, X, alpha):
    """Ridge solution of ``min ||Q||^2 + alpha ||XQ + 1 b^T - O||^2``."""
    n, d = X.shape
    x_mean = X.mean(axis=0)
    o_mean = O.mean(axis=0)
    Xc, Oc = X - x_mean, O - o_mean
    if d <= n:
        Q = np.linalg.solve(alpha * Xc.T @ Xc + np.eye(d), alpha * Xc.T @ Oc)
    else:
        Q = alpha * Xc.T @ np.linalg.solve(alpha * Xc @ Xc.T + np.eye(n), Oc)
    return Q, o_mean - x_mean @ Q


def s_update(X, O, cfg):
    """Row-wise closed form: ``S_i = proj_simplex(-d_i / (2 gamma))``."""
    d = pairwise_sq_dists(X) + cfg.eta * pairwise_sq_dists(O)
    return simplex_project_rows(-d / (2.0 * cfg.gamma))


def initial_state(X, Y, labeled_mask, cfg, init_k=10):
    n, d = X.shape
    c = Y.shape[1]
    k = min(init_k, n - 1)
    A = knn_adjacency(X, k) if n > 1 else np.ones((1, 1))
    S = A / A.sum(axis=1, keepdims=True)
    O = np.where(labeled_mask[:, None], Y, 1.0 / c)
    U = np.where(labeled_mask, cfg.labeled_weight, 0.0)
    return SemiGraphState(S, O, np.zeros((d, c)), np.zeros(c), U)


def semi_graph_fit(X, Y, labeled_mask, cfg=None, init_k=10):
    """Alternating minimisation; returns the final state with its objective trace.

    ``state.objectives[0]`` is the objective at initialisation and entry ``p``
    is the value after ``p`` full passes (O, then Q/b, then S).
    """
    cfg = cfg or SemiGraphConfig()
    X, Y = as_matrix(X), as_matrix(Y)
    labeled_mask = np.asarray(labeled_mask, dtype=bool)
    if not labeled_mask.any():
        raise ContractViolation("labeled_mask must select at least one sample")
    if Y.shape[0] != X.shape[0] or labeled_mask.shape != (X.shape[0],):
        raise ContractViolation("X, Y and labeled_mask disagree on sample count")
    state = initial_state(X, Y, labeled_mask, cfg, init_k)
    state.objectives.append(semi_graph_objective(state, X, Y, cfg))
    for _ in range(cfg.max_passes):
        state.O = _update_O(state, X, Y, cfg)
        state.Q, state.b = _update_Qb(state.O, X, cfg.alpha)
        state.S = s_update(X, state.O, cfg)
        prev = state.objectives[-1]
        cur = semi_graph_objective(state, X, Y, cfg)
        state.objectives.append(cur)
        if abs(prev - cur) <= cfg.rel_tol * max(abs(prev), 1e-300):
            break
    return state


def semi_graph_solve(X, Y, labeled_mask, cfg=None, init_k=10):
    """Learned row-stochastic propagation matrix for one view."""
    cfg = cfg or SemiGraphConfig()
    S = semi_graph_fit(X, Y, labeled_mask, cfg, init_k).S
    if cfg.symmetrize:
        W = 0.5 * (S + S.T)
        np.fill_diagonal(W, 0.0)
        S = renormalize(W)
    return S


# -- stacking and fusion --------------------------------------------------------

def stack_views(filtered, semi, features):
    """Interleave per-view graphs as ``[A_1, S_1, A_2, S_2, ...]`` with matching features."""
    if not (len(filtered) == len(semi) == len(features)):
        raise ContractViolation(
            f"need one KNN graph, one semi graph and one feature matrix per view; "
            f"got {len(filtered)}, {len(semi)}, {len(features)}"
        )
    graphs, feats = [], []
    for A, S, X in zip(filtered, semi, features):
        graphs += [A, S]
        feats += [X, X]
    return graphs, feats


def fuse_graphs(G_list):
    if not G_list:
        raise ContractViolation("cannot fuse an empty list of graphs")
    shape = G_list[0].shape
    if any(G.shape != shape for G in G_list):
        raise ContractViolation("all graphs must share one shape")
    total = np.zeros(shape)
    for G in G_list:
        total = total + G
    return total / len(G_list)


@dataclass
class GraphSet:
    graphs: list
    features: list
    fused: np.ndarray
    kinds: list
    views: list

    @property
    def n_branches(self):
        return len(self.graphs)

    def branches_of_kind(self, kind):
        return [w for w, k in enumerate(self.kinds) if k == kind]


def build_graphset(views, labeled_idx, labeled_y, n_classes, k=10, beta=0.5,
                   semi_cfg=None, two_graphs=True):
    """Build every branch graph from features plus the labels of ``labeled_idx`` only.

    Only ``labeled_y`` (the labels at ``labeled_idx``) is consulted, so labels of
    held-out samples cannot influence the graphs.
    """
    semi_cfg = semi_cfg or SemiGraphConfig()
    views = [as_matrix(X) for X in views]
    n = views[0].shape[0]
    labeled_idx = np.asarray(labeled_idx, dtype=np.intp)
    mask = np.zeros(n, dtype=bool)
    mask[labeled_idx] = True
    Y = np.zeros((n, n_classes))
    Y[labeled_idx, np.asarray(labeled_y, dtype=np.intp)] = 1.0

    filtered = [flexible_filter(renormalize(knn_adjacency(X, k)), beta) for X in views]
    if not two_graphs:
        return GraphSet(filtered, views, fuse_graphs(filtered), ["knn"] * len(views),
                        list(range(len(views))))
    semi = [semi_graph_solve(X, Y, mask, semi_cfg, init_k=k) for X in views]
    graphs, feats = stack_views(filtered, semi, views)
    kinds = ["knn", "semi"] * len(views)
    owners = [v for v in range(len(views)) for _ in range(2)]
    return GraphSet(graphs, feats, fuse_graphs(graphs), kinds, owners)
