"""Metric correctness against brute-force oracles and the eval protocols."""

import numpy as np
import pytest

from dynembed.evaluation import (
    LinkEvalSplit,
    MetricsReport,
    draw_link_split,
    eval_link_prediction,
    eval_node_classification,
    f1_binary,
    logreg_loss_grad,
    pr_auc,
    roc_auc,
    score_link,
    train_logreg,
    weighted_f1,
)
from dynembed.graph import DynamicGraph, Snapshot, cumulative_edge_set, new_edges
from dynembed.synthetic import generate_synthetic
from dynembed.training import TrainConfig, train

from oracles import (
    rand_graph,
    ref_average_precision,
    ref_f1,
    ref_roc_auc,
    ref_weighted_f1,
    rel_err,
    sig,
)


def _random_scored_instance(rng):
    n = int(rng.integers(2, 40))
    # mix continuous and heavily tied score vectors
    if rng.random() < 0.5:
        scores = rng.normal(size=n)
    else:
        scores = rng.integers(0, 4, size=n).astype(float) / 4.0
    labels = rng.integers(0, 2, size=n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    return scores, labels


# -- roc_auc ------------------------------------------------------------------

def test_roc_examples():
    assert roc_auc([0.9, 0.1], [1, 0]) == 1.0
    assert roc_auc([0.1, 0.9], [1, 0]) == 0.0
    assert roc_auc([0.4, 0.4, 0.4, 0.4], [1, 0, 1, 0]) == 0.5


def test_roc_single_class_errors():
    with pytest.raises(ValueError, match="both classes"):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [0, 0])


def test_roc_matches_pair_counting_oracle():
    rng = np.random.default_rng(401)
    for _ in range(200):
        scores, labels = _random_scored_instance(rng)
        assert abs(roc_auc(scores, labels) - ref_roc_auc(scores, labels)) < 1e-9


def test_roc_monotone_invariance():
    rng = np.random.default_rng(402)
    scores, labels = rng.normal(size=30), rng.integers(0, 2, size=30)
    labels[0], labels[1] = 0, 1
    base = roc_auc(scores, labels)
    for f in (lambda s: 3.0 * s + 1.0, np.exp, np.arctan):
        assert abs(roc_auc(f(scores), labels) - base) < 1e-12


def test_roc_label_flip_complements():
    rng = np.random.default_rng(403)
    scores = rng.permutation(np.linspace(0, 1, 20))  # tie-free
    labels = rng.integers(0, 2, size=20)
    labels[0], labels[1] = 0, 1
    assert abs(roc_auc(scores, labels) + roc_auc(scores, 1 - labels) - 1.0) < 1e-12


# -- pr_auc --------------------------------------------------------------------

def test_pr_examples():
    assert pr_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert pr_auc([0.5, 0.1, 0.9], [1, 1, 1]) == 1.0
    with pytest.raises(ValueError, match="positive"):
        pr_auc([0.5, 0.6], [0, 0])


def test_pr_matches_average_precision_oracle():
    rng = np.random.default_rng(404)
    for _ in range(200):
        scores, labels = _random_scored_instance(rng)
        if labels.sum() == 0:
            continue
        got = pr_auc(scores, labels, tie_seed=3)
        want = ref_average_precision(scores, labels, tie_seed=3)
        assert abs(got - want) < 1e-9


def test_pr_tie_shuffle_removes_input_order_information():
    # all-tied scores: AP must not reward positives packed at the front
    labels = np.array([1] * 5 + [0] * 45)
    front = pr_auc(np.zeros(50), labels, tie_seed=0)
    back = pr_auc(np.zeros(50), labels[::-1].copy(), tie_seed=0)
    assert abs(front - back) < 0.25  # same shuffled order, both near base rate


# -- f1 --------------------------------------------------------------------------

def test_f1_examples():
    assert f1_binary([0.9, 0.1], [1, 0]) == 1.0
    assert f1_binary([0.1, 0.2], [1, 0]) == 0.0  # nothing predicted positive
    assert f1_binary([0.9, 0.8], [1, 0]) == pytest.approx(2 / 3)


def test_f1_matches_confusion_matrix_oracle_exactly():
    rng = np.random.default_rng(405)
    for _ in range(200):
        scores, labels = _random_scored_instance(rng)
        assert f1_binary(scores, labels) == ref_f1(scores, labels)


def test_weighted_f1_matches_brute_force():
    rng = np.random.default_rng(406)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        y_true = rng.integers(0, 4, size=n)
        y_pred = rng.integers(0, 4, size=n)
        assert abs(weighted_f1(y_true, y_pred) - ref_weighted_f1(y_true, y_pred)) < 1e-12


def test_metrics_stay_in_unit_interval():
    rng = np.random.default_rng(407)
    for _ in range(50):
        scores, labels = _random_scored_instance(rng)
        assert 0.0 <= roc_auc(scores, labels) <= 1.0
        if labels.sum():
            assert 0.0 <= pr_auc(scores, labels) <= 1.0
        assert 0.0 <= f1_binary(scores, labels) <= 1.0


# -- score_link -------------------------------------------------------------------

def test_score_link_examples():
    assert score_link([1.0, 0.0], [0.0, 1.0]) == 0.5
    v = np.full(10, 1.0)
    assert abs(score_link(v, v) - sig(10.0)) < 1e-12


def test_score_link_symmetric_over_random_pairs():
    rng = np.random.default_rng(408)
    for _ in range(100):
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert score_link(a, b) == score_link(b, a)
        assert 0.0 < score_link(a, b) < 1.0


# -- logistic regression ------------------------------------------------------------

def _blobs(rng, n_per=20, gap=6.0):
    a = rng.normal(size=(n_per, 3)) + [gap, 0, 0]
    b = rng.normal(size=(n_per, 3)) - [gap, 0, 0]
    X = np.vstack([a, b])
    y = np.array([0] * n_per + [1] * n_per)
    return X, y


def test_logreg_separable_blobs_perfect_accuracy():
    X, y = _blobs(np.random.default_rng(409))
    clf = train_logreg(X, y)
    assert np.array_equal(clf.predict(X), y)


def test_logreg_huge_lambda_shrinks_weights():
    X, y = _blobs(np.random.default_rng(410))
    clf = train_logreg(X, y, l2_lambda=1e6)
    assert np.linalg.norm(clf.weights) < 1e-2


def test_logreg_single_class_errors():
    X = np.zeros((4, 2))
    with pytest.raises(ValueError, match="2 classes"):
        train_logreg(X, np.zeros(4, dtype=int))


def test_logreg_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(411)
    X = rng.normal(size=(12, 3))
    y = rng.integers(0, 3, size=12)
    W = rng.normal(size=(3, 3)) * 0.3
    b = rng.normal(size=3) * 0.3
    lam = 0.05
    _, gw, gb = logreg_loss_grad(W, b, X, y, lam)
    eps = 1e-6

    def loss_at(Wp, bp):
        return logreg_loss_grad(Wp, bp, X, y, lam)[0]

    for idx in np.ndindex(W.shape):
        d = np.zeros_like(W)
        d[idx] = eps
        fd = (loss_at(W + d, b) - loss_at(W - d, b)) / (2 * eps)
        assert abs(fd - gw[idx]) < 1e-7
    for i in range(3):
        d = np.zeros_like(b)
        d[i] = eps
        fd = (loss_at(W, b + d) - loss_at(W, b - d)) / (2 * eps)
        assert abs(fd - gb[i]) < 1e-7


def test_logreg_predict_returns_original_class_ids():
    X, y = _blobs(np.random.default_rng(412))
    clf = train_logreg(X, y + 5)  # classes {5, 6}
    assert set(clf.predict(X)) <= {5, 6}


# -- link split -----------------------------------------------------------------------

def _graph_with_new_final_edges(seed=413, V=14, T=4):
    from oracles import rand_edges
    rng = np.random.default_rng(seed)
    while True:
        snaps = [Snapshot(t, V, rand_edges(rng, V, max_edges=10),
                          rng.normal(size=(V, 3))) for t in range(1, T + 1)]
        g = DynamicGraph(snaps)
        if new_edges(g, T).shape[0] >= 5:
            return g


def test_link_split_contract():
    g = _graph_with_new_final_edges()
    split = draw_link_split(g, seed=5)
    fresh = {tuple(e) for e in new_edges(g, g.num_timestamps).tolist()}
    ft = {tuple(e) for e in split.fine_tune_edges.tolist()}
    test = {tuple(e) for e in split.test_positives.tolist()}
    assert not ft & test
    assert ft | test == fresh
    assert len(ft) == max(1, round(0.2 * len(fresh)))
    seen = cumulative_edge_set(g, g.num_timestamps)
    for u, v in split.test_negatives.tolist():
        assert u < v and (u, v) not in seen
    assert split.test_negatives.shape[0] == split.test_positives.shape[0]


def test_link_split_deterministic_per_seed():
    g = _graph_with_new_final_edges()
    a = draw_link_split(g, seed=9)
    b = draw_link_split(g, seed=9)
    c = draw_link_split(g, seed=10)
    assert np.array_equal(a.fine_tune_edges, b.fine_tune_edges)
    assert np.array_equal(a.test_positives, b.test_positives)
    assert np.array_equal(a.test_negatives, b.test_negatives)
    assert not (np.array_equal(a.fine_tune_edges, c.fine_tune_edges)
                and np.array_equal(a.test_negatives, c.test_negatives))


def test_link_split_needs_two_new_edges():
    attrs = np.eye(4, 2)
    g = DynamicGraph([Snapshot(t, 4, [(0, 1)], attrs) for t in range(1, 4)])
    with pytest.raises(ValueError, match="new edges"):
        draw_link_split(g, seed=0)


# -- MetricsReport -----------------------------------------------------------------

def test_report_csv_and_json_shapes():
    rep = MetricsReport({"roc_auc": [0.5, 0.7], "f1": [0.25, 0.75]}, repeats=2,
                        warnings=["w"], meta={"seed": 3})
    csv = rep.to_csv_text()
    lines = csv.strip().split("\n")
    assert lines[0] == "metric,mean,std,repeats"
    assert lines[1].startswith("f1,0.5,0.25,2")  # sorted metric names
    assert lines[2].startswith("roc_auc,")
    doc = rep.to_json_doc()
    assert doc["metrics"]["roc_auc"]["values"] == [0.5, 0.7]
    assert rep.to_json_text().endswith("\n")
    assert rep.mean("f1") == 0.5 and rep.std("f1") == 0.25


# -- protocol smoke on small graphs -------------------------------------------------

def _tiny_trained(seed=0):
    g = generate_synthetic(30, 3, 6, 6, noise_sigma=0.5, migrate_fraction=0.25,
                           seed=seed)
    cfg = TrainConfig(dim=6, layers=1, lookback=2, negatives=1, batch_size=16,
                      learning_rate=3e-3, epochs=2, seed=seed)
    return g, train(g, cfg)


def test_eval_link_prediction_smoke_and_determinism():
    g, model = _tiny_trained()
    rep1 = eval_link_prediction(g, model, repeats=2, seed=4, fine_tune_steps=2)
    rep2 = eval_link_prediction(g, model, repeats=2, seed=4, fine_tune_steps=2)
    assert set(rep1.values) == {"roc_auc", "pr_auc", "f1"}
    for name in rep1.values:
        assert len(rep1.values[name]) == 2
        assert all(0.0 <= x <= 1.0 for x in rep1.values[name])
    assert rep1.to_json_text() == rep2.to_json_text()
    assert rep1.to_csv_text() == rep2.to_csv_text()


def test_eval_link_prediction_repeats_validation():
    g, model = _tiny_trained()
    with pytest.raises(ValueError):
        eval_link_prediction(g, model, repeats=0)


def test_eval_node_classification_smoke():
    g, model = _tiny_trained()
    rep = eval_node_classification(g, model, repeats=3, seed=1)
    assert all(0.0 <= x <= 1.0 for x in rep.values["weighted_f1"])
    assert rep.repeats == len(rep.values["weighted_f1"]) >= 1


def test_eval_node_classification_requires_labels_and_churn():
    g, model = _tiny_trained()
    unlabeled = DynamicGraph([g.snapshot(t) for t in range(1, 7)])
    with pytest.raises(ValueError, match="labels"):
        eval_node_classification(unlabeled, model, repeats=2)

    frozen = generate_synthetic(30, 3, 6, 6, noise_sigma=0.5, migrate_fraction=0.0,
                                seed=0)
    with pytest.raises(ValueError, match="change"):
        eval_node_classification(frozen, model, repeats=2)


def test_eval_node_classification_all_repeats_skipped():
    # one changed node and otherwise constant labels: whichever half the
    # changed node lands in, the repeat is unusable
    attrs = np.eye(6, 3)
    snaps = [Snapshot(t, 6, [(0, 1), (2, 3), (4, 5), (1, 2)], attrs)
             for t in range(1, 4)]
    labels = {t: np.zeros(6, dtype=np.int64) for t in range(1, 4)}
    labels[3] = np.array([1, 0, 0, 0, 0, 0])
    g = DynamicGraph(snaps, labels=labels)
    from dynembed.training import Model
    cfg = TrainConfig(dim=4, layers=1, lookback=1, negatives=1, batch_size=4,
                      learning_rate=1e-3, epochs=1, seed=0)
    m = Model.init(6, 3, cfg)
    with pytest.raises(ValueError, match="all repeats skipped"):
        eval_node_classification(g, m, repeats=4, seed=2)


@pytest.mark.benchmark
def test_node_classification_recovers_community_switchers(bench_cache, bench_graph):
    # final-timestamp label changers on the migration benchmark are
    # classifiable from predicted embeddings
    model = bench_cache.run(seed=0)["model"]
    report = eval_node_classification(bench_graph, model, repeats=10, seed=0)
    assert report.repeats == 10
    assert report.mean("weighted_f1") >= 0.6
