"""Multi-view semi-supervised GCN with supervised and cross-view contrastive losses."""

from .data import MultiViewDataset, SplitSpec, load_dataset, make_splits, synth_blobs
from .graphs import GraphSet, SemiGraphConfig, build_graphset
from .losses import LossWeights
from .model import ModelConfig
from .trainer import TrainConfig, TrainHistory, extract_embeddings, fit, predict

__version__ = "0.1.0"
