"""Frame-level evaluation: top-k accuracy, micro P/R/F1, micro AUC, tree distance."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def _labels(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64)
    if arr.ndim != 1:
        raise MetricError(f"{name} must be a 1-D label array")
    return arr


def truth_rank(scores: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """0-based rank of the true class per row; ties favour the lower class index."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = _labels(truth, "truth")
    if scores.ndim != 2 or scores.shape[0] != truth.shape[0]:
        raise MetricError("scores must be N x K with one row per label")
    n, k = scores.shape
    if np.any(truth < 0) or np.any(truth >= k):
        raise MetricError("truth label out of range")
    s_true = scores[np.arange(n), truth][:, None]
    cls = np.arange(k)[None, :]
    ahead = (scores > s_true) | ((scores == s_true) & (cls < truth[:, None]))
    return ahead.sum(axis=1)


def top_k_accuracy(scores: np.ndarray, truth: np.ndarray, k: int) -> float:
    """Fraction of frames whose true label is among the ``k`` highest scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if k < 1:
        raise MetricError("k must be >= 1")
    if k > scores.shape[1]:
        raise MetricError(f"k={k} exceeds the number of classes {scores.shape[1]}")
    return float(np.mean(truth_rank(scores, truth) < k))


def micro_prf(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    """Micro-averaged precision, recall and F1 from pooled one-vs-rest counts."""
    pred = _labels(pred, "pred")
    truth = _labels(truth, "truth")
    if pred.shape != truth.shape:
        raise MetricError("pred and truth lengths differ")
    if pred.size == 0:
        raise MetricError("empty input")
    classes = np.union1d(pred, truth)
    tp = fp = fn = 0
    for c in classes:
        p, t = pred == c, truth == c
        tp += int(np.sum(p & t))
        fp += int(np.sum(p & ~t))
        fn += int(np.sum(~p & t))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def micro_auc(scores: np.ndarray, truth: np.ndarray) -> float:
    """ROC AUC of the flattened frame x class indicator problem (Mann-Whitney form)."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = _labels(truth, "truth")
    n, k = scores.shape
    if truth.shape[0] != n:
        raise MetricError("scores and truth lengths differ")
    if k < 2:
        raise MetricError("micro AUC needs at least two classes")
    indicator = np.zeros((n, k), dtype=bool)
    indicator[np.arange(n), truth] = True
    flat_s, flat_y = scores.ravel(), indicator.ravel()
    n_pos = int(flat_y.sum())
    n_neg = flat_y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined for a single-class indicator")
    ranks = rankdata(flat_s)
    return float((ranks[flat_y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def tree_distance_stats(pred: np.ndarray, truth: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    """Mean and population std of the hop distance between predicted and true labels."""
    pred = _labels(pred, "pred")
    truth = _labels(truth, "truth")
    if pred.shape != truth.shape:
        raise MetricError("pred and truth lengths differ")
    if pred.size == 0:
        raise MetricError("empty input")
    k = d.shape[0]
    if min(pred.min(), truth.min()) < 0 or max(pred.max(), truth.max()) >= k:
        raise MetricError("label out of range for the distance matrix")
    hops = np.asarray(d, dtype=np.float64)[pred, truth]
    return float(hops.mean()), float(hops.std())


@dataclass
class MetricBlock:
    acc1: float
    acc3: float
    precision_micro: float
    recall_micro: float
    f1_micro: float
    auc_micro: float
    tree_dist_mean: float
    tree_dist_std: float


@dataclass
class EvalReport(MetricBlock):
    """Averaged metrics plus one block per sequence, keyed by sequence id.

    The averaged block is the unweighted mean of the per-sequence values.
    """

    per_sequence: dict[str, MetricBlock] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(MetricBlock)}
        out["per_sequence"] = {sid: asdict(b) for sid, b in self.per_sequence.items()}
        return out


def evaluate_sequence(pred, truth, scores, d: np.ndarray, k: int = 3) -> MetricBlock:
    """Metric bundle for a single sequence.

    ``scores`` ranks classes for Acc@k and AUC (likelihoods or marginals);
    ``pred`` is the hard label path.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = _labels(truth, "truth")
    precision, recall, f1 = micro_prf(pred, truth)
    mean, std = tree_distance_stats(pred, truth, d)
    return MetricBlock(
        acc1=float(np.mean(_labels(pred, "pred") == truth)),
        acc3=top_k_accuracy(scores, truth, min(k, scores.shape[1])),
        precision_micro=precision,
        recall_micro=recall,
        f1_micro=f1,
        auc_micro=micro_auc(scores, truth),
        tree_dist_mean=mean,
        tree_dist_std=std,
    )


def evaluate(sequences: dict[str, tuple], d: np.ndarray) -> EvalReport:
    """Evaluate ``{id: (pred, truth, scores)}`` and average the blocks."""
    if not sequences:
        raise MetricError("no sequences to evaluate")
    blocks = {sid: evaluate_sequence(*seq, d) for sid, seq in sequences.items()}
    names = [f.name for f in fields(MetricBlock)]
    avg = {name: float(np.mean([getattr(b, name) for b in blocks.values()])) for name in names}
    return EvalReport(**avg, per_sequence=blocks)


def format_report(report: EvalReport, title: str = "", average: bool = True) -> str:
    """Plain-text table: one row per sequence and an average row."""
    head = f"{'seq':<12}{'Acc@1':>8}{'Acc@3':>8}{'Prec':>8}{'Rec':>8}{'F1':>8}{'AUC':>8}   D(mean+-std)"
    lines = [title] if title else []
    lines.append(head)

    def row(name: str, b: MetricBlock) -> str:
        return (
            f"{name:<12}{b.acc1:>8.4f}{b.acc3:>8.4f}{b.precision_micro:>8.4f}{b.recall_micro:>8.4f}"
            f"{b.f1_micro:>8.4f}{b.auc_micro:>8.4f}   {b.tree_dist_mean:.2f} +- {b.tree_dist_std:.2f}"
        )

    for sid, b in report.per_sequence.items():
        lines.append(row(sid, b))
    if average:
        lines.append(row("average", report))
    return "\n".join(lines)
