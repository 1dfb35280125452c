"""Full-batch transductive training loop, prediction and embedding export."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import losses as L
from .core import autodiff as ad
from .core.adam import AdamState, adam_step
from .errors import ContractViolation
from .graphs import SemiGraphConfig
from .losses import LossWeights
from .model import (BranchWeights, ModelConfig, branch_forward, branch_nodes, init_weights,
                    soft_vote, soft_vote_nodes)


@dataclass
class TrainConfig:
    e_max: int = 100
    lr: float = 1e-2
    pseudo_ratio: float = 0.2
    k: int = 10
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    semi: SemiGraphConfig = field(default_factory=SemiGraphConfig)
    # ablation switches
    use_two_graphs: bool = True
    use_supcon: bool = True
    use_selfcon: bool = True
    use_pseudo: bool = True

    def __post_init__(self):
        if self.e_max < 1:
            raise ContractViolation(f"e_max must be >= 1, got {self.e_max}")
        if not 0.0 <= self.pseudo_ratio <= 1.0:
            raise ContractViolation(f"pseudo_ratio must be in [0, 1], got {self.pseudo_ratio}")

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    total: float
    ce_labeled: float
    ce_pseudo: float
    supcon_labeled: float
    supcon_pseudo: float
    selfcon: float
    train_accuracy: float
    test_accuracy: float
    n_pseudo: int


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def totals(self):
        return [r.total for r in self.records]

    def losses(self):
        """Loss fields only, one tuple per epoch; label-free by construction."""
        return [(r.total,) + tuple(getattr(r, c) for c in L.COMPONENTS) + (r.n_pseudo,)
                for r in self.records]

    def to_jsonl(self):
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)


def _accuracy(Z, idx, labels):
    if len(idx) == 0:
        return float("nan")
    return float(np.mean(Z[idx].argmax(axis=1) == labels[idx]))


def _contrast_branches(graphset):
    semi = graphset.branches_of_kind("semi")
    return semi if semi else graphset.branches_of_kind("knn")


def epoch_objective(graphset, params, targets, labeled, y_lab, unlabeled, pseudo, config,
                    GX=None):
    """Forward every branch and assemble the total loss on the tape of ``params``.

    Returns ``(Z, H2s, parts, total)`` where ``parts`` maps component names to
    scalar nodes. Components switched off by ``config`` are constant zeros.
    """
    lw = config.loss
    tape = params[0].tape
    GX = GX or [None] * graphset.n_branches
    H2s, Zs = [], []
    for w in range(graphset.n_branches):
        H2, Zw = branch_nodes(graphset.graphs[w], graphset.fused, graphset.features[w],
                              params[3 * w:3 * w + 3], GX[w])
        H2s.append(H2)
        Zs.append(Zw)
    Z = soft_vote_nodes(Zs)
    zero = tape.const(np.zeros((1, 1)))
    use_pseudo = config.use_pseudo and pseudo is not None and len(pseudo) > 0
    parts = dict.fromkeys(L.COMPONENTS, zero)

    parts["ce_labeled"] = L.masked_cross_entropy(Z, targets, labeled)
    if use_pseudo:
        soft = np.zeros_like(targets)
        soft[pseudo.indices] = pseudo.soft_targets
        parts["ce_pseudo"] = L.masked_cross_entropy(Z, soft, pseudo.indices)
    if config.use_supcon:
        parts["supcon_labeled"] = L.supcon(H2s, labeled, y_lab, lw.tau, lw.normalize_embeddings)
        if use_pseudo:
            parts["supcon_pseudo"] = L.supcon(H2s, pseudo.indices, pseudo.hard_labels, lw.tau,
                                              lw.normalize_embeddings)
    contrast = _contrast_branches(graphset)
    if config.use_selfcon and len(contrast) >= 2:
        parts["selfcon"] = L.selfcon([H2s[w] for w in contrast], unlabeled,
                                     pseudo if use_pseudo else None, lw.tau,
                                     lw.normalize_embeddings)
    total = L.total_loss(*(parts[name] for name in L.COMPONENTS), lw)
    return Z, H2s, parts, total


def fit(dataset, split, graphset, config=None):
    """Train all branches jointly for ``config.e_max`` full-batch Adam steps.

    ``graphset`` must have been built from the labels of
    ``split.labeled_indices`` only. Pseudo-labels used in epoch ``e`` come
    from the fused prediction of epoch ``e - 1``; epoch 1 draws them from the
    prediction of the initial weights, so every epoch optimises the same
    set of loss terms.
    """
    config = config or TrainConfig()
    n, c = dataset.n, dataset.n_classes
    labeled = np.asarray(split.labeled_indices, dtype=np.intp)
    test = np.asarray(split.test_indices, dtype=np.intp)
    unlabeled = np.setdiff1d(np.arange(n), labeled)
    y_lab = dataset.labels[labeled]
    targets = np.zeros((n, c))
    targets[labeled, y_lab] = 1.0

    GX = [G @ X for G, X in zip(graphset.graphs, graphset.features)]
    weights = init_weights(config.model, [X.shape[1] for X in graphset.features], c)
    flat = [W for bw in weights for W in bw.as_list()]
    adam = AdamState.for_params(flat, lr=config.lr)
    pseudo = None
    if config.use_pseudo:
        pseudo = L.select_pseudo(predict(weights, graphset), unlabeled, config.pseudo_ratio)
    history = TrainHistory()

    for epoch in range(1, config.e_max + 1):
        tape = ad.Tape()
        params = [tape.param(W) for W in flat]
        Z, _, parts, total = epoch_objective(graphset, params, targets, labeled, y_lab,
                                             unlabeled, pseudo, config, GX)
        grads = ad.grad_of(tape, total)
        flat, adam = adam_step(flat, grads, adam)

        Zv = Z.value
        history.records.append(EpochRecord(
            epoch, _val(total), *(_val(parts[name]) for name in L.COMPONENTS),
            _accuracy(Zv, labeled, dataset.labels), _accuracy(Zv, test, dataset.labels),
            len(pseudo) if config.use_pseudo and pseudo is not None else 0))
        if config.use_pseudo:
            pseudo = L.select_pseudo(Zv, unlabeled, config.pseudo_ratio)

    weights = [BranchWeights(*flat[i:i + 3]) for i in range(0, len(flat), 3)]
    return weights, history


def _val(node):
    return float(node.value[0, 0])


def _check(weights, graphset):
    if len(weights) != graphset.n_branches:
        raise ContractViolation(
            f"{len(weights)} weight sets for {graphset.n_branches} branches")


def predict(weights, graphset, features=None):
    """Soft-voted class probabilities for every sample."""
    _check(weights, graphset)
    features = graphset.features if features is None else features
    Zs = [branch_forward(G, graphset.fused, X, W)[1]
          for G, X, W in zip(graphset.graphs, features, weights)]
    return soft_vote(Zs)


def extract_embeddings(weights, graphset, features=None):
    """Second-layer embeddings ``H2`` of every branch."""
    _check(weights, graphset)
    features = graphset.features if features is None else features
    return [branch_forward(G, graphset.fused, X, W)[0]
            for G, X, W in zip(graphset.graphs, features, weights)]
