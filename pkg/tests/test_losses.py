import math

import numpy as np
import pytest

from mvsupgcn.core import autodiff as ad
from mvsupgcn.core import row_softmax
from mvsupgcn.errors import NumericalFailure, ContractViolation
from mvsupgcn.graphs import build_graphset
from mvsupgcn.losses import (LossWeights, PseudoLabelState, masked_cross_entropy,
                             select_pseudo, selfcon, supcon, total_loss)
from mvsupgcn.model import ModelConfig, init_weights
from mvsupgcn.trainer import TrainConfig, epoch_objective

from oracles import central_diff, rel_err, selfcon_loops, selfcon_plain, supcon_loops


# -- cross-entropy --------------------------------------------------------------------

def test_ce_examples():
    Z = np.full((3, 4), 0.25)
    T = np.zeros((3, 4))
    T[1, 2] = 1.0
    assert masked_cross_entropy(Z, T, [1]) == pytest.approx(math.log(4), abs=1e-12)
    assert masked_cross_entropy(Z, T, []) == 0.0
    Zh = np.array([[1.0 - 1e-9, 1e-9]])
    assert masked_cross_entropy(Zh, np.array([[1.0, 0.0]]), [0]) < 1e-6


def test_ce_soft_targets_equal_cross_entropy_term():
    rng = np.random.default_rng(0)
    Z = row_softmax(rng.standard_normal((5, 3)))
    T = row_softmax(rng.standard_normal((5, 3)))
    idx = [0, 2, 4]
    expected = -sum(T[i, j] * math.log(Z[i, j]) for i in idx for j in range(3))
    assert masked_cross_entropy(Z, T, idx) == pytest.approx(expected, abs=1e-12)


# -- supcon ---------------------------------------------------------------------------

def test_supcon_identical_embeddings():
    H = np.ones((3, 4))
    diag = {}
    val = supcon([H, H], [0, 1, 2], np.array([0, 0, 1]), 0.5, diagnostics=diag)
    assert val == pytest.approx(2 * 2 * math.log(2), abs=1e-12)
    assert diag["anchors_without_positive"] == 1


def test_supcon_single_anchor():
    assert supcon([np.ones((3, 2))], [1], np.array([0]), 0.5) == 0.0


def test_supcon_matches_loops():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = 8
        m = int(rng.integers(2, 7))
        V = int(rng.integers(1, 4))
        Hs = [rng.standard_normal((n, 3)) for _ in range(2 * V)]
        anchors = sorted(rng.choice(n, size=m, replace=False).tolist())
        labels = rng.integers(0, 2, m)
        tau = float(rng.uniform(0.2, 1.0))
        normalize = bool(rng.integers(0, 2))
        got = supcon(Hs, anchors, labels, tau, normalize)
        assert abs(got - supcon_loops(Hs, anchors, list(labels), tau, normalize)) < 1e-9


def test_supcon_random_five_anchor_instance():
    rng = np.random.default_rng(5)
    Hs = [rng.standard_normal((5, 4)) for _ in range(2)]
    labels = np.array([0, 1, 0, 1, 1])
    expected = supcon_loops(Hs, list(range(5)), list(labels), 0.5)
    assert supcon(Hs, range(5), labels, 0.5) == pytest.approx(expected, abs=1e-9)


def test_supcon_permutation_invariant():
    rng = np.random.default_rng(2)
    Hs = [rng.standard_normal((6, 3)) for _ in range(4)]
    anchors = np.array([0, 1, 2, 3, 4, 5])
    labels = np.array([0, 1, 0, 1, 2, 2])
    base = supcon(Hs, anchors, labels, 0.5)
    perm = rng.permutation(6)
    assert supcon(Hs, anchors[perm], labels[perm], 0.5) == pytest.approx(base, abs=1e-12)
    assert supcon(Hs[::-1], anchors, labels, 0.5) == pytest.approx(base, abs=1e-12)


def test_supcon_decreases_as_positive_pair_aligns():
    def value(angle):
        H = np.array([[1.0, 0.0], [math.cos(angle), math.sin(angle)], [-1.0, 0.2]])
        return supcon([H], [0, 1, 2], np.array([0, 0, 1]), 0.5)

    assert value(0.2) < value(1.2)


def test_supcon_label_alignment_error():
    with pytest.raises(ContractViolation):
        supcon([np.ones((3, 2))], [0, 1], np.array([0]), 0.5)


# -- selfcon --------------------------------------------------------------------------

def test_selfcon_identical_embeddings_two_samples():
    H = np.ones((4, 3))
    assert selfcon([H, H], [1, 3], None, 0.5) == pytest.approx(0.0, abs=1e-12)


def test_selfcon_single_view_warns():
    with pytest.warns(RuntimeWarning):
        assert selfcon([np.ones((3, 2))], [0, 1], None, 0.5) == 0.0


def test_selfcon_plain_form():
    rng = np.random.default_rng(3)
    for _ in range(50):
        V = int(rng.integers(2, 4))
        Hs = [rng.standard_normal((8, 3)) for _ in range(V)]
        U = sorted(rng.choice(8, size=int(rng.integers(2, 7)), replace=False).tolist())
        got = selfcon(Hs, U, None, 0.5)
        assert abs(got - selfcon_plain(Hs, U, 0.5)) < 1e-12 * max(1.0, abs(got))


def test_selfcon_matches_loops_with_pseudo():
    rng = np.random.default_rng(4)
    for _ in range(50):
        V = int(rng.integers(2, 4))
        Hs = [rng.standard_normal((8, 3)) for _ in range(V)]
        U = sorted(rng.choice(8, size=int(rng.integers(2, 7)), replace=False).tolist())
        k = int(rng.integers(0, len(U) + 1))
        chosen = rng.choice(U, size=k, replace=False)
        hard = rng.integers(0, 2, k)
        pseudo = PseudoLabelState(chosen.astype(np.intp), hard, np.full((k, 2), 0.5),
                                  np.full(k, 0.5))
        tau = float(rng.uniform(0.2, 1.0))
        got = selfcon(Hs, U, pseudo, tau)
        expected = selfcon_loops(Hs, U, tau, dict(zip(chosen.tolist(), hard.tolist())))
        assert abs(got - expected) < 1e-9


def test_selfcon_three_unlabeled_unit_embeddings():
    rng = np.random.default_rng(8)
    Hs = [rng.standard_normal((3, 2)) for _ in range(2)]
    Hs = [H / np.linalg.norm(H, axis=1, keepdims=True) for H in Hs]
    assert selfcon(Hs, [0, 1, 2], None, 0.5) == pytest.approx(
        selfcon_loops(Hs, [0, 1, 2], 0.5), abs=1e-9)


# -- pseudo-label selection -------------------------------------------------------------

def test_select_pseudo_examples():
    Z = np.array([[0.9, 0.1], [0.5, 0.5], [0.4, 0.6], [0.2, 0.8]])
    st = select_pseudo(Z, [0, 2, 3], 1 / 3)
    assert st.indices.tolist() == [0] and st.hard_labels.tolist() == [0]
    st = select_pseudo(Z, [2, 3], 0.5)
    assert st.indices.tolist() == [3] and st.hard_labels.tolist() == [1]
    assert len(select_pseudo(Z, [0, 1, 2, 3], 0.0)) == 0
    full = select_pseudo(Z, [0, 1, 2, 3], 1.0)
    assert sorted(full.indices.tolist()) == [0, 1, 2, 3]
    np.testing.assert_allclose(full.soft_targets.sum(axis=1), 1.0, atol=1e-9)


def test_select_pseudo_ties_and_detachment():
    Z = np.full((4, 2), 0.5)
    st = select_pseudo(Z, [3, 1, 2], 2 / 3)
    assert st.indices.tolist() == [1, 2]
    st.soft_targets[:] = 0
    assert Z.min() == 0.5


def test_select_pseudo_ratio_error():
    with pytest.raises(ContractViolation):
        select_pseudo(np.full((2, 2), 0.5), [0, 1], 1.5)


# -- total ------------------------------------------------------------------------------

def test_total_loss_arithmetic():
    w = LossWeights(lambda1=0.5, lambda2=0.25)
    assert total_loss(1, 2, 3, 4, 5, w) == pytest.approx(11.0)
    assert total_loss(0, 0, 0, 0, 0, w) == 0.0
    assert total_loss(1, 2, 3, 4, 5, LossWeights(0.0, 0.0)) == pytest.approx(9.0)


def test_total_loss_names_nan_component():
    with pytest.raises(NumericalFailure) as info:
        total_loss(1, 2, float("nan"), 4, 5, LossWeights())
    assert info.value.component == "supcon_labeled"


def test_loss_weights_validation():
    with pytest.raises(ContractViolation):
        LossWeights(tau=0.0)


# -- gradient of the whole objective ------------------------------------------------------

def test_full_objective_gradient():
    rng = np.random.default_rng(6)
    n, c = 8, 3
    views = [rng.standard_normal((n, 8)), rng.standard_normal((n, 8))]
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1])
    labeled = np.array([0, 1, 2, 3])
    unlabeled = np.array([4, 5, 6, 7])
    gs = build_graphset(views, labeled, labels[labeled], c, k=3)
    targets = np.zeros((n, c))
    targets[labeled, labels[labeled]] = 1.0
    pseudo = PseudoLabelState(np.array([5, 6, 7]), np.array([1, 2, 1]),
                              row_softmax(rng.standard_normal((3, c))),
                              np.array([0.6, 0.55, 0.5]))
    cfg = TrainConfig(model=ModelConfig(hidden1_divisor=2, hidden2=3))
    flat = [W for bw in init_weights(cfg.model, [8] * 4, c) for W in bw.as_list()]
    assert flat[0].shape == (8, 4) and flat[1].shape == (4, 3) and flat[2].shape == (3, 3)

    def evaluate(values):
        tape = ad.Tape()
        params = [tape.param(v) for v in values]
        out = epoch_objective(gs, params, targets, labeled, labels[labeled], unlabeled,
                              pseudo, cfg)
        return tape, out

    tape, (_, _, parts, total) = evaluate(flat)
    assert all(float(p.value[0, 0]) != 0.0 for p in parts.values()), {k: float(p.value[0, 0]) for k, p in parts.items()}
    grads = ad.grad_of(tape, total)
    for k in range(len(flat)):
        def f(v, k=k):
            vals = list(flat)
            vals[k] = v
            return float(evaluate(vals)[1][3].value[0, 0])

        assert rel_err(grads[k], central_diff(f, flat[k])) < 1e-4
