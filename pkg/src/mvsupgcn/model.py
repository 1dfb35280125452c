"""Three-layer GCN branches with a fused-graph output layer, and soft voting.

Branch ``w`` computes::

    H1 = tanh(G_w X_w W0)
    H2 = tanh(G_w H1 W1)
    Z_w = softmax(G_f H2 W2)

There are no bias terms. ``H2`` is the embedding fed to the contrastive losses.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .core import autodiff as ad
from .errors import ContractViolation

_MAGIC = b"MVSGCNW1"


@dataclass
class ModelConfig:
    hidden1_divisor: int = 2
    hidden2: int = 20
    beta: float = 0.5
    seed: int = 0

    def hidden1(self, d_in):
        return max(1, d_in // self.hidden1_divisor)


@dataclass
class BranchWeights:
    W0: np.ndarray
    W1: np.ndarray
    W2: np.ndarray

    def as_list(self):
        return [self.W0, self.W1, self.W2]

    @property
    def n_classes(self):
        return self.W2.shape[1]


def glorot_uniform(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_weights(config, dims, n_classes):
    """Glorot-uniform weights for one branch per entry of ``dims``."""
    rng = np.random.default_rng(config.seed)
    out = []
    for d in dims:
        h1, h2 = config.hidden1(d), config.hidden2
        if h1 < 1 or h2 < 1 or n_classes < 1:
            raise ContractViolation(f"layer widths must be positive (h1={h1}, h2={h2})")
        out.append(BranchWeights(glorot_uniform(rng, d, h1),
                                 glorot_uniform(rng, h1, h2),
                                 glorot_uniform(rng, h2, n_classes)))
    return out


def _check_shapes(G_w, G_f, X, weights):
    n = X.shape[0]
    if G_w.shape != (n, n) or G_f.shape != (n, n):
        raise ContractViolation(f"graphs must be {n}x{n}, got {G_w.shape} and {G_f.shape}")
    W0, W1, W2 = weights.as_list()
    if W0.shape[0] != X.shape[1] or W1.shape[0] != W0.shape[1] or W2.shape[0] != W1.shape[1]:
        raise ContractViolation(
            f"weight chain {W0.shape}->{W1.shape}->{W2.shape} does not fit features {X.shape}")


def branch_nodes(G_w, G_f, X, params, GX=None):
    """Tape-level forward pass; ``params`` are the three weight nodes.

    ``GX`` may carry a precomputed ``G_w @ X`` since both factors are constant.
    """
    W0, W1, W2 = params
    tape = W0.tape
    Gw = tape.const(G_w)
    Gx = tape.const(G_w @ X if GX is None else GX)
    H1 = ad.tanh(ad.matmul(Gx, W0))
    H2 = ad.tanh(ad.matmul(Gw, ad.matmul(H1, W1)))
    Z = ad.row_softmax(ad.matmul(tape.const(G_f), ad.matmul(H2, W2)))
    return H2, Z


def branch_forward(G_w, G_f, X, weights):
    """Returns ``(H2_w, Z_w)`` as arrays."""
    X = np.asarray(X, dtype=np.float64)
    _check_shapes(G_w, G_f, X, weights)
    tape = ad.Tape()
    params = [tape.const(W) for W in weights.as_list()]
    H2, Z = branch_nodes(G_w, G_f, X, params)
    return H2.value, Z.value


def soft_vote(Z_list):
    if not Z_list:
        raise ContractViolation("soft voting needs at least one branch output")
    total = np.zeros_like(Z_list[0])
    for Z in Z_list:
        total = total + Z
    return total / len(Z_list)


def soft_vote_nodes(Z_nodes):
    total = Z_nodes[0]
    for Z in Z_nodes[1:]:
        total = ad.add(total, Z)
    return ad.scale(total, 1.0 / len(Z_nodes))


# -- serialisation --------------------------------------------------------------

def save_weights(path, weights, header=None):
    """Binary container: magic, u64 header length, JSON header, raw little-endian f64."""
    arrays = [W for bw in weights for W in bw.as_list()]
    meta = dict(header or {})
    meta["shapes"] = [list(W.shape) for W in arrays]
    meta["n_branches"] = len(weights)
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for W in arrays:
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())


def load_weights(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a weights file")
        (size,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(size))
        arrays = []
        for shape in meta["shapes"]:
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64))
    weights = [BranchWeights(*arrays[i:i + 3]) for i in range(0, len(arrays), 3)]
    return weights, meta
