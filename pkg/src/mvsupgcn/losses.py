"""Cross-entropy, supervised/cross-view contrastive losses and pseudo-label selection.

Each loss accepts either tape nodes (returning a scalar node that can be
differentiated) or plain arrays (returning a float).
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import autodiff as ad
from .core.autodiff import Node, Tape
from .errors import ContractViolation, NumericalFailure


@dataclass
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau: float = 0.5
    normalize_embeddings: bool = True

    def __post_init__(self):
        if self.tau <= 0:
            raise ContractViolation(f"tau must be positive, got {self.tau}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ContractViolation("lambda1 and lambda2 must be nonnegative")


@dataclass
class PseudoLabelState:
    indices: np.ndarray
    hard_labels: np.ndarray
    soft_targets: np.ndarray
    confidences: np.ndarray

    @classmethod
    def empty(cls, n_classes):
        return cls(np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp),
                   np.zeros((0, n_classes)), np.zeros(0))

    def __len__(self):
        return int(self.indices.size)


def _lift(items):
    """Wrap arrays as constants on a shared tape; report whether any input was a node."""
    tape = next((x.tape for x in items if isinstance(x, Node)), None)
    symbolic = tape is not None
    tape = tape or Tape()
    return tape, [x if isinstance(x, Node) else tape.const(x) for x in items], symbolic


def _finish(node, symbolic):
    return node if symbolic else float(node.value[0, 0])


def _zero(tape):
    return tape.const(np.zeros((1, 1)))


def masked_cross_entropy(Z, targets, index_set):
    """``-sum_{i in index_set} sum_j T_ij log Z_ij`` with log floored at 1e-12."""
    idx = np.asarray(index_set, dtype=np.intp)
    tape, (Zn,), symbolic = _lift([Z])
    if idx.size == 0:
        return _finish(_zero(tape), symbolic)
    T = np.asarray(targets, dtype=np.float64)[idx]
    logp = ad.log(ad.gather_rows(Zn, idx), floor=1e-12)
    return _finish(ad.scale(ad.reduce_sum(ad.mul(logp, T)), -1.0), symbolic)


def _embed(node, idx, normalize):
    F = ad.gather_rows(node, idx)
    return ad.l2_normalize_rows(F) if normalize else F


def supcon(embeddings, anchor_set, anchor_labels, tau=0.5, normalize=True,
           diagnostics=None):
    """Supervised contrastive loss summed over all branches.

    Anchors are ``anchor_set``; for anchor ``i`` the contrast set is the other
    anchors and the positives are those sharing its label. Anchors without a
    positive contribute nothing.
    """
    idx = np.asarray(anchor_set, dtype=np.intp)
    labels = np.asarray(anchor_labels)
    if labels.shape != idx.shape:
        raise ContractViolation("anchor_labels must align with anchor_set")
    tape, nodes, symbolic = _lift(list(embeddings))
    m = idx.size
    off_diag = ~np.eye(m, dtype=bool)
    pos = (labels[:, None] == labels[None, :]) & off_diag
    n_pos = pos.sum(axis=1)
    valid = n_pos > 0
    if diagnostics is not None:
        diagnostics["anchors_without_positive"] = int((~valid).sum())
    if not valid.any():
        return _finish(_zero(tape), symbolic)
    pos_w = np.where(valid[:, None], pos / np.maximum(n_pos, 1)[:, None], 0.0)
    valid_col = valid[:, None].astype(np.float64)

    total = None
    for H in nodes:
        F = _embed(H, idx, normalize)
        sim = ad.scale(ad.matmul(F, ad.transpose(F)), 1.0 / tau)
        lse = ad.masked_logsumexp_rows(sim, off_diag)
        term = ad.add(ad.reduce_sum(ad.mul(lse, valid_col)),
                      ad.scale(ad.reduce_sum(ad.mul(sim, pos_w)), -1.0))
        total = term if total is None else ad.add(total, term)
    return _finish(total, symbolic)


def _selfcon_positive_weights(unlabeled, pseudo):
    """Row-normalised positive mask over ``unlabeled`` (rows: anchors, cols: candidates)."""
    m = unlabeled.size
    P = np.eye(m)
    if pseudo is not None and len(pseudo):
        where = {int(u): j for j, u in enumerate(unlabeled)}
        try:
            sel = np.array([where[int(i)] for i in pseudo.indices], dtype=np.intp)
        except KeyError as exc:
            raise ContractViolation(f"pseudo-labeled sample {exc} is not unlabeled") from exc
        same = pseudo.hard_labels[:, None] == pseudo.hard_labels[None, :]
        P[np.ix_(sel, sel)] = same
    if m == 1:
        P[:] = 0.0
    return P / np.maximum(P.sum(axis=1, keepdims=True), 1.0)


def selfcon(embeddings_semi, unlabeled_set, pseudo=None, tau=0.5, normalize=True,
            diagnostics=None):
    """Cross-view contrastive loss on unlabeled samples.

    For each ordered pair of distinct views ``(w, w')`` an anchor ``i`` in view
    ``w`` is contrasted against every other unlabeled sample in view ``w'``.
    Its positives are ``{i}``, or, when ``i`` carries a pseudo-label, every
    pseudo-labeled sample with the same hard label (``i`` included).
    """
    V = len(embeddings_semi)
    idx = np.asarray(unlabeled_set, dtype=np.intp)
    tape, nodes, symbolic = _lift(list(embeddings_semi))
    if V < 2:
        warnings.warn("selfcon needs at least two views; returning 0", RuntimeWarning,
                      stacklevel=2)
        if diagnostics is not None:
            diagnostics["selfcon_skipped"] = True
        return _finish(_zero(tape), symbolic)
    if idx.size == 0:
        return _finish(_zero(tape), symbolic)
    off_diag = ~np.eye(idx.size, dtype=bool)
    pos_w = _selfcon_positive_weights(idx, pseudo)
    active = (pos_w.sum(axis=1) > 0)[:, None].astype(np.float64)

    F = [_embed(H, idx, normalize) for H in nodes]
    Ft = [ad.transpose(f) for f in F]
    total = None
    for w in range(V):
        for w2 in range(V):
            if w == w2:
                continue
            sim = ad.scale(ad.matmul(F[w], Ft[w2]), 1.0 / tau)
            lse = ad.masked_logsumexp_rows(sim, off_diag)
            term = ad.add(ad.reduce_sum(ad.mul(lse, active)),
                          ad.scale(ad.reduce_sum(ad.mul(sim, pos_w)), -1.0))
            total = term if total is None else ad.add(total, term)
    return _finish(ad.scale(total, 1.0 / (V * (V - 1))), symbolic)


def select_pseudo(Z_prev, unlabeled_set, ratio):
    """Top ``floor(ratio * |unlabeled|)`` most confident unlabeled rows of ``Z_prev``.

    Ties in confidence go to the lower sample index. Targets are copies, so
    no gradient can flow back through them.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ContractViolation(f"ratio must lie in [0, 1], got {ratio}")
    Z_prev = np.asarray(Z_prev, dtype=np.float64)
    idx = np.asarray(unlabeled_set, dtype=np.intp)
    count = math.floor(ratio * idx.size + 1e-9)
    if count == 0:
        return PseudoLabelState.empty(Z_prev.shape[1])
    conf = Z_prev[idx].max(axis=1)
    order = np.lexsort((idx, -conf))[:count]
    chosen = idx[order]
    rows = Z_prev[chosen].copy()
    return PseudoLabelState(chosen, rows.argmax(axis=1), rows, conf[order].copy())


COMPONENTS = ("ce_labeled", "ce_pseudo", "supcon_labeled", "supcon_pseudo", "selfcon")


def total_loss(ce_labeled, ce_pseudo, supcon_labeled, supcon_pseudo, selfcon_value,
               weights):
    """``(CE + l1 CE_pseudo) + (SupCon + l2 SupCon_pseudo) + SelfCon``."""
    parts = dict(zip(COMPONENTS, (ce_labeled, ce_pseudo, supcon_labeled, supcon_pseudo,
                                  selfcon_value)))
    for name, part in parts.items():
        val = float(part.value[0, 0]) if isinstance(part, Node) else float(part)
        if not math.isfinite(val):
            raise NumericalFailure(name, val)
    coeffs = (1.0, weights.lambda1, 1.0, weights.lambda2, 1.0)
    tape, nodes, symbolic = _lift([p if isinstance(p, Node) else np.array([[float(p)]])
                                   for p in parts.values()])
    total = None
    for coef, node in zip(coeffs, nodes):
        term = node if coef == 1.0 else ad.scale(node, coef)
        total = term if total is None else ad.add(total, term)
    return _finish(total, symbolic)
