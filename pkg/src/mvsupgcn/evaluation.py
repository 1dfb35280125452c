"""Classification metrics, Friedman/Nemenyi rank statistics and run aggregation."""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ContractViolation

METRICS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")

# Critical values q_alpha of the Nemenyi test (studentized range statistic at
# infinite degrees of freedom divided by sqrt(2)), indexed by number of methods.
# K = 2..10 follow Demsar (2006, JMLR 7, Table 5); K = 11..20 are
# scipy.stats.studentized_range.ppf(1 - alpha, K, inf) / sqrt(2) to 3 decimals.
NEMENYI_Q = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
           3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517, 3.544),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920,
           2.978, 3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291, 3.319),
}
_Q_MIN_K, _Q_MAX_K = 2, 20


@dataclass
class MetricsRecord:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def as_dict(self):
        return {k: v for k, v in asdict(self).items() if k in METRICS}


def classification_metrics(pred_labels, true_labels, n_classes):
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise ContractViolation(f"label vectors differ in length: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ContractViolation("cannot score empty label vectors")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (true, pred), 1)
    tp = np.diag(conf).astype(np.float64)
    predicted = conf.sum(axis=0)
    actual = conf.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros(n_classes), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros(n_classes), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(n_classes), where=denom > 0)
    diag = {}
    if (predicted == 0).any():
        diag["never_predicted"] = np.flatnonzero(predicted == 0).tolist()
    if (actual == 0).any():
        diag["absent_in_truth"] = np.flatnonzero(actual == 0).tolist()
    return MetricsRecord(float(tp.sum() / pred.size), float(precision.mean()),
                         float(recall.mean()), float(f1.mean()), diag)


def rank_table(scores, higher_is_better=True):
    """Per-dataset midranks of a ``K methods x N datasets`` score matrix (rank 1 = best)."""
    S = np.asarray(scores, dtype=np.float64)
    return rankdata(-S if higher_is_better else S, axis=0)


def friedman_statistic(ranks):
    """Friedman chi-square from a ``K x N`` table of per-dataset ranks."""
    R = np.asarray(ranks, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] < 2 or R.shape[1] < 2:
        raise ContractViolation(f"need at least 2 methods and 2 datasets, got {R.shape}")
    K, N = R.shape
    if (R < 1).any() or (R > K).any() or not np.allclose(R.sum(axis=0), K * (K + 1) / 2):
        raise ContractViolation("each column must hold ranks 1..K (midranks for ties)")
    mean_ranks = R.mean(axis=1)
    chi2 = 12.0 * N / (K * (K + 1)) * (np.sum(mean_ranks ** 2) - K * (K + 1) ** 2 / 4.0)
    return float(max(chi2, 0.0))


def nemenyi_cd(K, N, alpha=0.05):
    """Nemenyi critical difference ``q_alpha(K) sqrt(K (K + 1) / (6 N))``."""
    if alpha not in NEMENYI_Q:
        raise ContractViolation(f"alpha must be one of {sorted(NEMENYI_Q)}, got {alpha}")
    if not _Q_MIN_K <= K <= _Q_MAX_K:
        raise ContractViolation(
            f"K={K} outside the embedded table (K must be in [{_Q_MIN_K}, {_Q_MAX_K}])")
    if N < 1:
        raise ContractViolation("N must be >= 1")
    q = NEMENYI_Q[alpha][K - _Q_MIN_K]
    return q * math.sqrt(K * (K + 1) / (6.0 * N))


def aggregate_runs(records):
    """Mean and sample standard deviation (ddof=1; 0 for a single run) per metric."""
    if not records:
        raise ContractViolation("cannot aggregate an empty list of runs")
    out = {}
    for name in METRICS:
        vals = [float(getattr(r, name)) for r in records]
        # shifting by the minimum and using fsum keeps the result independent of
        # record order and makes identical runs give std exactly 0
        lo = min(vals)
        mean = lo + math.fsum(v - lo for v in vals) / len(vals)
        var = math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1) if len(vals) > 1 else 0.0
        out[name] = {"mean": mean, "std": math.sqrt(var)}
    return out


def format_aggregate(agg, percent=True):
    scale = 100.0 if percent else 1.0
    width = max(len(k) for k in agg)
    lines = []
    for name, stats in agg.items():
        lines.append(f"{name:<{width}}  {stats['mean'] * scale:8.2f} +/- {stats['std'] * scale:.2f}")
    return "\n".join(lines)
