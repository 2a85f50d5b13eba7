"""Link-prediction and node-classification evaluation with exact metrics.

Metrics are self-contained: ROC-AUC by tie-averaged ranks (Mann-Whitney),
PR-AUC as average precision over a deterministic tie-shuffled descending
order, F1 at a fixed 0.5 threshold, and support-weighted multi-class F1.
The link protocol reveals a fraction of the final snapshot's new edges for
fine-tuning and tests on the rest against an equal number of never-seen
node pairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import _sigmoid
from .graph import cumulative_edge_set, new_edges
from .seeding import child_rng
from .training import fine_tune, predict_embeddings


def _check_binary(labels):
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0 or np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0/1")
    return y


def roc_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via average ranks."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(y.size, dtype=np.float64)
    i = 0
    while i < y.size:
        j = i
        while j + 1 < y.size and s[order[j + 1]] == s[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(scores, labels, tie_seed: int = 0) -> float:
    """Average precision in descending score order.

    Ties are broken by stable input order after a seeded shuffle, so equal
    scores carry no information instead of favoring input order.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("pr_auc needs at least one positive")
    perm = child_rng(tie_seed, "prauc_ties").permutation(y.size)
    s, y = s[perm], y[perm]
    order = np.argsort(-s, kind="stable")
    hits = 0
    total = 0.0
    for k, idx in enumerate(order, start=1):
        if y[idx] == 1:
            hits += 1
            total += hits / k
    return total / n_pos


def f1_binary(scores, labels, threshold: float = 0.5) -> float:
    """F1 of (score >= threshold) predictions; 0 when nothing is predicted
    positive or nothing is truly positive."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def weighted_f1(y_true, y_pred) -> float:
    """Per-class one-vs-rest F1 averaged with class-support weights."""
    yt = np.asarray(y_true, dtype=np.int64)
    yp = np.asarray(y_pred, dtype=np.int64)
    if yt.size == 0:
        raise ValueError("empty label vector")
    total = 0.0
    for c in np.unique(yt):
        support = int(np.sum(yt == c))
        tp = int(np.sum((yp == c) & (yt == c)))
        fp = int(np.sum((yp == c) & (yt != c)))
        fn = support - tp
        f1 = 0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn)
        total += (support / yt.size) * f1
    return total


def score_link(a, b) -> float:
    """sigmoid(a . b); symmetric in its arguments."""
    z = float(np.dot(np.asarray(a, dtype=np.float64).ravel(),
                     np.asarray(b, dtype=np.float64).ravel()))
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


# -- logistic regression ------------------------------------------------------

class LogisticClassifier:
    def __init__(self, weights, bias, classes):
        self.weights = weights
        self.bias = bias
        self.classes = classes

    def decision(self, features) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights.T + self.bias

    def predict(self, features) -> np.ndarray:
        return self.classes[np.argmax(self.decision(features), axis=1)]


def logreg_loss_grad(weights, bias, features, class_idx, l2_lambda):
    """Mean cross-entropy + (lambda/2)||W||^2 and its exact gradient."""
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    logits = X @ weights.T + bias
    logits = logits - logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    probs = expl / expl.sum(axis=1, keepdims=True)
    nll = -np.log(probs[np.arange(n), class_idx]).mean()
    loss = nll + 0.5 * l2_lambda * float(np.sum(weights * weights))
    delta = probs
    delta[np.arange(n), class_idx] -= 1.0
    grad_w = delta.T @ X / n + l2_lambda * weights
    grad_b = delta.mean(axis=0)
    return loss, grad_w, grad_b


def train_logreg(features, labels, l2_lambda: float = 0.01, epochs: int = 500,
                 lr: float = 0.1) -> LogisticClassifier:
    """Multinomial logistic regression by full-batch gradient descent.

    The L2 penalty is applied through its exact proximal shrinkage step
    W /= (1 + lr * lambda) rather than inside the gradient, which stays
    stable even in the lambda -> infinity limit; the bias is unpenalized.
    Deterministic: zero init, fixed step count.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("train_logreg needs at least 2 classes in the training labels")
    class_idx = np.searchsorted(classes, y)
    n = X.shape[0]
    W = np.zeros((classes.size, X.shape[1]))
    b = np.zeros(classes.size)
    for _ in range(epochs):
        logits = X @ W.T + b
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=1, keepdims=True)
        probs[np.arange(n), class_idx] -= 1.0
        W = (W - lr * (probs.T @ X / n)) / (1.0 + lr * l2_lambda)
        b = b - lr * probs.mean(axis=0)
    return LogisticClassifier(W, b, classes)


# -- evaluation protocols -----------------------------------------------------

@dataclass
class LinkEvalSplit:
    fine_tune_edges: np.ndarray
    test_positives: np.ndarray
    test_negatives: np.ndarray
    seed: int


def draw_link_split(g, seed: int, fine_tune_fraction: float = 0.2) -> LinkEvalSplit:
    """Split the final snapshot's new edges into a revealed fine-tune part
    and held-out test positives, plus equally many never-seen node pairs."""
    n = g.num_timestamps
    fresh = new_edges(g, n)
    m = fresh.shape[0]
    if m < 2:
        raise ValueError(f"link evaluation needs >= 2 new edges at t={n}, found {m}")
    rng = child_rng(seed, "linksplit")
    perm = rng.permutation(m)
    k = max(1, int(round(fine_tune_fraction * m)))
    if k >= m:
        k = m - 1
    ft = fresh[perm[:k]]
    test = fresh[perm[k:]]

    existing = cumulative_edge_set(g, n)
    needed = test.shape[0]
    negatives = []
    taken = set()
    attempts = 0
    while len(negatives) < needed:
        attempts += 1
        if attempts > 10000 * needed:
            raise ValueError("could not sample enough non-edge pairs; graph too dense")
        u = int(rng.integers(g.num_nodes))
        v = int(rng.integers(g.num_nodes))
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in existing or key in taken:
            continue
        taken.add(key)
        negatives.append(key)

    ft_set = set(map(tuple, ft))
    test_set = set(map(tuple, test))
    assert not ft_set & test_set, "fine-tune / test splits overlap"
    assert not (ft_set | test_set) - set(map(tuple, fresh)), "split leaked non-new edges"
    return LinkEvalSplit(ft, test, np.array(negatives, dtype=np.int64), seed)


class MetricsReport:
    """Per-repeat metric values with population mean/std and writers."""

    def __init__(self, values: dict, repeats: int, warnings=None, meta=None):
        self.values = {k: [float(x) for x in v] for k, v in values.items()}
        self.repeats = int(repeats)
        self.warnings = list(warnings or [])
        self.meta = dict(meta or {})

    def mean(self, name) -> float:
        return float(np.mean(self.values[name]))

    def std(self, name) -> float:
        return float(np.std(self.values[name]))

    def to_csv_text(self) -> str:
        lines = ["metric,mean,std,repeats"]
        for name in sorted(self.values):
            lines.append(f"{name},{self.mean(name)!r},{self.std(name)!r},{self.repeats}")
        return "\n".join(lines) + "\n"

    def to_json_doc(self) -> dict:
        return {
            "repeats": self.repeats,
            "metrics": {name: {"mean": self.mean(name), "std": self.std(name),
                               "values": self.values[name]}
                        for name in sorted(self.values)},
            "warnings": self.warnings,
            "meta": self.meta,
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json_doc(), sort_keys=True) + "\n"


def _link_scores(pred, pairs) -> np.ndarray:
    dots = np.sum(pred[pairs[:, 0]] * pred[pairs[:, 1]], axis=1)
    return _sigmoid(dots.reshape(1, -1)).ravel()


def eval_link_prediction(g, model, repeats: int = 10, seed: int = 0,
                         fine_tune_steps: int = 30) -> MetricsReport:
    """Repeat the final-transition link protocol: reveal 20% of the new
    edges for fine-tuning, score the held-out 80% against sampled
    non-edges, and aggregate ROC-AUC / PR-AUC / F1 over repeats."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    n = g.num_timestamps
    values = {"roc_auc": [], "pr_auc": [], "f1": []}
    warnings = []
    for i in range(repeats):
        rep_seed = int(child_rng(seed, "link_eval", i).integers(2 ** 62))
        split = draw_link_split(g, rep_seed)
        tuned, warns = fine_tune(model, g, split.fine_tune_edges, fine_tune_steps,
                                 seed=rep_seed)
        warnings.extend(warns)
        pred = predict_embeddings(tuned, g, n)
        scores = np.concatenate([_link_scores(pred, split.test_positives),
                                 _link_scores(pred, split.test_negatives)])
        labels = np.concatenate([np.ones(split.test_positives.shape[0], dtype=np.int64),
                                 np.zeros(split.test_negatives.shape[0], dtype=np.int64)])
        values["roc_auc"].append(roc_auc(scores, labels))
        values["pr_auc"].append(pr_auc(scores, labels))
        values["f1"].append(f1_binary(scores, labels))
    return MetricsReport(values, repeats, warnings,
                         meta={"seed": seed, "fine_tune_steps": fine_tune_steps})


def eval_node_classification(g, model, repeats: int = 10, seed: int = 0) -> MetricsReport:
    """Classify nodes whose category changes at the final timestamp.

    Features are the predicted final-timestamp embeddings (computed once;
    they do not depend on the split). Each repeat trains a logistic
    classifier on a random half of all nodes and scores weighted F1 on the
    category-changing nodes of the other half. Repeats without evaluable
    test nodes are skipped with a warning; it is an error if all are.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    n = g.num_timestamps
    final_labels = g.labels_at(n)
    prev_labels = g.labels_at(n - 1) if n >= 2 else None
    if final_labels is None or prev_labels is None:
        raise ValueError("node classification needs labels at the final two timestamps")
    changed = np.flatnonzero(final_labels != prev_labels)
    if changed.size == 0:
        raise ValueError("no nodes change category at the final timestamp")
    features = predict_embeddings(model, g, n)
    values = {"weighted_f1": []}
    warnings = []
    for i in range(repeats):
        rng = child_rng(seed, "nodesplit", i)
        perm = rng.permutation(g.num_nodes)
        half = g.num_nodes // 2
        train_idx, test_idx = perm[:half], perm[half:]
        test_nodes = np.intersect1d(test_idx, changed)
        if test_nodes.size == 0:
            warnings.append(f"repeat {i}: no category-changing nodes in the test half; skipped")
            continue
        if np.unique(final_labels[train_idx]).size < 2:
            warnings.append(f"repeat {i}: single-class training half; skipped")
            continue
        clf = train_logreg(features[train_idx], final_labels[train_idx])
        pred_labels = clf.predict(features[test_nodes])
        values["weighted_f1"].append(weighted_f1(final_labels[test_nodes], pred_labels))
    if not values["weighted_f1"]:
        raise ValueError("all repeats skipped: no category-changing nodes landed in any test half")
    return MetricsReport(values, len(values["weighted_f1"]), warnings, meta={"seed": seed})
