import numpy as np
import pytest

from mvsupgcn.core import row_softmax, tanh_map
from mvsupgcn.errors import ContractViolation
from mvsupgcn.model import (BranchWeights, ModelConfig, branch_forward, init_weights,
                            load_weights, save_weights, soft_vote)


def test_init_is_deterministic_and_bounded():
    cfg = ModelConfig(seed=4, hidden2=7)
    a = init_weights(cfg, [10, 6], 3)
    b = init_weights(cfg, [10, 6], 3)
    for wa, wb in zip(a, b):
        for x, y in zip(wa.as_list(), wb.as_list()):
            assert x.tobytes() == y.tobytes()
    assert a[0].W0.shape == (10, 5) and a[1].W0.shape == (6, 3)
    assert a[0].W2.shape == (7, 3)
    for bw in a:
        for W in bw.as_list():
            assert np.abs(W).max() <= np.sqrt(6 / sum(W.shape))


def test_init_mean_near_zero():
    (bw,) = init_weights(ModelConfig(hidden1_divisor=1, hidden2=100), [100], 2)
    assert abs(bw.W0.mean()) < 0.02


def test_hidden1_floor():
    assert ModelConfig(hidden1_divisor=16).hidden1(9) == 1
    with pytest.raises(ContractViolation):
        init_weights(ModelConfig(hidden2=0), [4], 2)


def test_zero_weights_give_uniform_output():
    n, c = 5, 4
    w = BranchWeights(np.zeros((3, 2)), np.zeros((2, 2)), np.zeros((2, c)))
    _, Z = branch_forward(np.eye(n), np.eye(n), np.ones((n, 3)), w)
    np.testing.assert_allclose(Z, np.full((n, c), 1 / c), atol=1e-15)


def test_forward_matches_composition_of_core_ops():
    rng = np.random.default_rng(0)
    n, d = 6, 5
    G, Gf, X = rng.random((n, n)), rng.random((n, n)), rng.standard_normal((n, d))
    w = BranchWeights(rng.standard_normal((d, 3)), rng.standard_normal((3, 4)),
                      rng.standard_normal((4, 2)))
    H1 = tanh_map(G @ X @ w.W0)
    H2_ref = tanh_map(G @ H1 @ w.W1)
    Z_ref = row_softmax(Gf @ H2_ref @ w.W2)
    H2, Z = branch_forward(G, Gf, X, w)
    np.testing.assert_allclose(H2, H2_ref, atol=1e-12)
    np.testing.assert_allclose(Z, Z_ref, atol=1e-12)
    np.testing.assert_allclose(Z.sum(axis=1), 1.0, atol=1e-9)


def test_identity_graph_is_mlp_with_fused_last_layer():
    rng = np.random.default_rng(1)
    n, d = 6, 4
    Gf, X = rng.random((n, n)), rng.standard_normal((n, d))
    w = BranchWeights(rng.standard_normal((d, 2)), rng.standard_normal((2, 3)),
                      rng.standard_normal((3, 2)))
    H2 = np.tanh(np.tanh(X @ w.W0) @ w.W1)
    _, Z = branch_forward(np.eye(n), Gf, X, w)
    np.testing.assert_allclose(Z, row_softmax(Gf @ H2 @ w.W2), atol=1e-12)


def test_forward_shape_errors():
    w = BranchWeights(np.zeros((3, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ContractViolation):
        branch_forward(np.eye(4), np.eye(4), np.ones((4, 5)), w)
    with pytest.raises(ContractViolation):
        branch_forward(np.eye(3), np.eye(4), np.ones((4, 3)), w)


def test_soft_vote_properties():
    rng = np.random.default_rng(2)
    Zs = [row_softmax(rng.standard_normal((7, 3))) for _ in range(4)]
    Z = soft_vote(Zs)
    np.testing.assert_allclose(Z.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(soft_vote([Zs[0]] * 3), Zs[0], atol=1e-15)
    np.testing.assert_array_equal(Z.argmax(axis=1), sum(Zs).argmax(axis=1))
    np.testing.assert_array_equal(soft_vote([3.0 * z for z in Zs]).argmax(axis=1),
                                  Z.argmax(axis=1))
    np.testing.assert_allclose(soft_vote(Zs[::-1]), Z, atol=1e-12)
    np.testing.assert_allclose(soft_vote([np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])]),
                               [[0.5, 0.5]])
    with pytest.raises(ContractViolation):
        soft_vote([])


def test_weights_round_trip(tmp_path):
    weights = init_weights(ModelConfig(seed=3), [6, 6, 4, 4], 3)
    path = tmp_path / "w.bin"
    save_weights(path, weights, {"seed": 3})
    back, meta = load_weights(path)
    assert meta["seed"] == 3 and meta["n_branches"] == 4
    for a, b in zip(weights, back):
        for x, y in zip(a.as_list(), b.as_list()):
            assert x.tobytes() == y.tobytes()


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"not weights")
    with pytest.raises(ValueError):
        load_weights(p)
