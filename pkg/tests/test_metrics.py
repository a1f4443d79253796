import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hapens import metrics
from hapens.ensemble import Evaluator
from hapens.library import HardwareCost, ModelEntry
from hapens.metrics import EnsembleCosts

from helpers import make_library, random_library


def pair_count_auc(scores, labels):
    """Brute-force Mann-Whitney: concordant pairs plus half the ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y != 1]
    total = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return total / (len(pos) * len(neg))


def covariance_pearson(a, b):
    c = np.cov(a, b)
    if c[0, 0] == 0 or c[1, 1] == 0:
        return 0.0
    return c[0, 1] / math.sqrt(c[0, 0] * c[1, 1])


# to_weights


def test_weights_example():
    assert metrics.to_weights([2, 1, 0, 1]).tolist() == [0.5, 0.25, 0.0, 0.25]
    assert metrics.to_weights([3, 0, 0]).tolist() == [1.0, 0.0, 0.0]


def test_weights_empty():
    with pytest.raises(ValueError, match="empty ensemble"):
        metrics.to_weights([0, 0, 0])


@given(hnp.arrays(np.int64, st.integers(1, 12), elements=st.integers(0, 20)).filter(lambda c: c.sum() > 0))
def test_weights_sum_to_one(counts):
    w = metrics.to_weights(counts)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all(w >= 0)
    assert np.array_equal(w, counts / counts.sum())


# ensemble_predict


def test_predict_one_hot_is_identity(tiny_lib):
    for j in range(tiny_lib.p):
        w = np.eye(tiny_lib.p)[j]
        assert np.array_equal(metrics.ensemble_predict(tiny_lib, w), tiny_lib.models[j].val_predictions)


def test_predict_symmetric_pair():
    lib = make_library([np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])], [1])
    assert metrics.ensemble_predict(lib, [0.5, 0.5]).tolist() == [[0.5, 0.5]]


def test_predict_matches_triple_loop():
    rng = np.random.default_rng(0)
    mats = [rng.dirichlet(np.ones(3), size=2) for _ in range(3)]
    lib = make_library(mats, [0, 2])
    w = np.array([0.2, 0.5, 0.3])
    expected = np.zeros((2, 3))
    for i in range(2):
        for k in range(3):
            for j in range(3):
                expected[i, k] += w[j] * mats[j][i, k]
    out = metrics.ensemble_predict(lib, w)
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)


def test_predict_dimension_mismatch(tiny_lib):
    with pytest.raises(ValueError, match="dimension mismatch"):
        metrics.ensemble_predict(tiny_lib, [0.5, 0.5])


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.lists(st.integers(0, 5), min_size=4, max_size=4).filter(lambda c: sum(c) > 0))
def test_predict_convexity(seed, counts):
    lib = random_library(seed, p=4, n_val=12, K=3)
    out = metrics.ensemble_predict(lib, metrics.to_weights(counts))
    stack = lib.stacked("val")[np.asarray(counts) > 0]
    assert np.all(out >= stack.min(axis=0) - 1e-15)
    assert np.all(out <= stack.max(axis=0) + 1e-15)


# roc_auc


@pytest.mark.parametrize(
    "scores, labels, expected",
    [
        ([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0], 1.0),
        ([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0], 0.0),
        ([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0], 0.5),
        # positives 0.7 and 0.2 against negatives 0.4 and 0.6: two concordant pairs
        ([0.7, 0.4, 0.6, 0.2], [1, 0, 0, 1], 0.5),
        ([0.7, 0.4, 0.6, 0.5], [1, 0, 0, 1], 0.75),
    ],
)
def test_auc_examples(scores, labels, expected):
    assert metrics.roc_auc(np.asarray(scores), labels) == expected
    assert pair_count_auc(scores, labels) == expected
    matrix = np.column_stack([1 - np.asarray(scores), scores])
    assert metrics.roc_auc(matrix, labels) == expected


def test_auc_degenerate_class():
    with pytest.raises(ValueError, match="degenerate class"):
        metrics.roc_auc(np.array([0.2, 0.4]), [1, 1])


def test_auc_multiclass_is_macro_ovr():
    rng = np.random.default_rng(4)
    pred = rng.dirichlet(np.ones(3), size=30)
    labels = np.arange(30) % 3
    expected = np.mean([pair_count_auc(pred[:, k], (labels == k).astype(int)) for k in range(3)])
    assert metrics.roc_auc(pred, labels) == pytest.approx(expected, abs=1e-12)


def test_midranks_match_scipy():
    from scipy.stats import rankdata

    rng = np.random.default_rng(1)
    x = rng.integers(0, 8, 200).astype(float)
    assert np.array_equal(metrics.midranks(x), rankdata(x))


scores_and_labels = st.integers(2, 30).flatmap(
    lambda n: st.tuples(
        hnp.arrays(np.float64, n, elements=st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])),
        hnp.arrays(np.int64, n, elements=st.integers(0, 1)).filter(lambda y: 0 < y.sum() < y.size),
    )
)


@given(scores_and_labels)
def test_auc_equals_pair_count(data):
    scores, labels = data
    assert metrics.roc_auc(scores, labels) == pytest.approx(pair_count_auc(scores, labels), abs=1e-12)


@given(scores_and_labels)
def test_auc_rank_invariance(data):
    scores, labels = data
    assert metrics.roc_auc(np.exp(3 * scores) - 7, labels) == metrics.roc_auc(scores, labels)


@given(scores_and_labels)
def test_auc_label_flip(data):
    scores, labels = data
    total = metrics.roc_auc(scores, labels) + metrics.roc_auc(scores, 1 - labels)
    assert total == pytest.approx(1.0, abs=1e-12)


# fitness_loss


def test_fitness_examples():
    perfect = make_library([[0.9, 0.8, 0.3, 0.1]], [1, 1, 0, 0])
    assert metrics.fitness_loss(perfect, [1.0]) == 0.0
    partial = make_library([[0.7, 0.4, 0.6, 0.5]], [1, 0, 0, 1])
    assert metrics.fitness_loss(partial, [1.0]) == 0.25


def test_fitness_one_hot(tiny_lib):
    for j, m in enumerate(tiny_lib.models):
        w = np.eye(tiny_lib.p)[j]
        expected = 1 - pair_count_auc(m.val_predictions[:, 1], tiny_lib.val_labels)
        assert metrics.fitness_loss(tiny_lib, w) == pytest.approx(expected, abs=1e-15)


# per_sample_log_loss


def test_log_loss_examples():
    model = ModelEntry(
        "m", np.array([[0.0, 1.0], [1.0 - 1e-20, 1e-20], [0.5, 0.5]]), np.zeros((1, 2)), HardwareCost(0, 0, 0)
    )
    loss = metrics.per_sample_log_loss(model, [1, 1, 1])
    assert loss[0] == 0.0
    assert loss[1] == pytest.approx(-math.log(1e-15), abs=1e-12)
    assert round(loss[1], 4) == 34.5388
    assert loss[2] == pytest.approx(math.log(2), abs=1e-12)


# average_loss_correlation


def test_alc_single_model(tiny_lib):
    assert metrics.average_loss_correlation(tiny_lib, [0, 3, 0]) == 1.0


def test_alc_identical_models():
    preds = [0.9, 0.3, 0.6, 0.2]
    lib = make_library([preds, preds], [1, 0, 1, 0])
    assert metrics.average_loss_correlation(lib, [1, 1]) == pytest.approx(1.0, abs=1e-12)


def test_alc_matches_covariance_oracle(tiny_lib):
    losses = [metrics.per_sample_log_loss(m, tiny_lib.val_labels) for m in tiny_lib.models]
    expected = np.mean([covariance_pearson(losses[j], losses[k]) for j, k in combinations(range(3), 2)])
    assert metrics.average_loss_correlation(tiny_lib, [1, 2, 1]) == pytest.approx(expected, abs=1e-12)
    assert Evaluator(tiny_lib).alc([1, 2, 1]) == pytest.approx(expected, abs=1e-12)


def test_alc_zero_variance_contributes_zero():
    # model 0 is right with the same confidence everywhere, so its loss vector is constant
    lib = make_library([[0.8, 0.2, 0.8, 0.2], [0.9, 0.3, 0.6, 0.2], [0.7, 0.4, 0.9, 0.1]], [1, 0, 1, 0])
    l1, l2 = (metrics.per_sample_log_loss(m, lib.val_labels) for m in lib.models[1:])
    expected = (0.0 + 0.0 + covariance_pearson(l1, l2)) / 3
    assert metrics.average_loss_correlation(lib, [1, 1, 1]) == pytest.approx(expected, abs=1e-12)


def test_alc_empty(tiny_lib):
    with pytest.raises(ValueError, match="empty ensemble"):
        metrics.average_loss_correlation(tiny_lib, [0, 0, 0])


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.lists(st.integers(0, 4), min_size=5, max_size=5).filter(lambda c: sum(c) > 0))
def test_alc_depends_on_support_only(seed, counts):
    lib = random_library(seed, p=5, n_val=15)
    support = [int(c > 0) for c in counts]
    a = metrics.average_loss_correlation(lib, counts)
    assert a == pytest.approx(metrics.average_loss_correlation(lib, support), abs=1e-12)
    assert a == pytest.approx(Evaluator(lib).alc(counts), abs=1e-12)
    assert -1.0 <= a <= 1.0


def test_duplicated_model_entry():
    preds = [0.9, 0.3, 0.6, 0.2, 0.4]
    labels = [1, 0, 1, 0, 1]
    lib = make_library([preds, preds], labels)
    single = make_library([preds], labels)
    assert metrics.average_loss_correlation(lib, [1, 1]) == pytest.approx(1.0, abs=1e-12)
    assert metrics.fitness_loss(lib, [0.5, 0.5]) == metrics.fitness_loss(single, [1.0])


# ensemble_costs


def test_costs_examples(tiny_lib):
    assert metrics.ensemble_costs(tiny_lib, [1, 0, 0]) == EnsembleCosts(0.1, 100.0, 50.0, 1)
    assert metrics.ensemble_costs(tiny_lib, [3, 0, 0]) == metrics.ensemble_costs(tiny_lib, [1, 0, 0])
    c = metrics.ensemble_costs(tiny_lib, [2, 1, 0])
    assert c.inference_time == pytest.approx(0.3, abs=1e-15)
    assert c.size == 2


def test_costs_empty(tiny_lib):
    with pytest.raises(ValueError, match="empty ensemble"):
        metrics.ensemble_costs(tiny_lib, [0, 0, 0])


@given(st.lists(st.integers(0, 6), min_size=3, max_size=3).filter(lambda c: sum(c) > 0), st.integers(1, 9))
def test_costs_scale_invariant_and_additive(counts, factor):
    lib = make_library(
        [[0.9, 0.2], [0.4, 0.3], [0.8, 0.1]],
        [1, 0],
        costs=[(0.1, 100.0, 50.0), (0.2, 300.0, 10.0), (0.9, 50.0, 70.0)],
    )
    c = metrics.ensemble_costs(lib, counts)
    assert c == metrics.ensemble_costs(lib, [factor * x for x in counts])
    active = [j for j in range(3) if counts[j] > 0]
    assert c.memory == sum(lib.models[j].cost.memory for j in active)
    assert c.size == len(active)


# normalization and aggregation


@pytest.mark.parametrize(
    "values, expected",
    [([2, 4, 6], [0, 0.5, 1]), ([5, 5, 5], [0, 0, 0]), ([-1, 0, 3], [0, 0.25, 1])],
)
def test_min_max_examples(values, expected):
    assert metrics.min_max_normalize(values).tolist() == expected


@given(hnp.arrays(np.float64, st.integers(2, 20), elements=st.floats(-1e6, 1e6)))
def test_min_max_idempotent(values):
    once = metrics.min_max_normalize(values)
    assert np.all((once >= 0) & (once <= 1))
    if values.max() != values.min():
        np.testing.assert_allclose(metrics.min_max_normalize(once), once, atol=1e-12)


def test_hardware_aggregate_examples():
    a = EnsembleCosts(0.1, 10.0, 5.0, 1)
    b = EnsembleCosts(0.5, 90.0, 8.0, 2)
    assert metrics.hardware_aggregate([a]).tolist() == [0.0]
    assert metrics.hardware_aggregate([a, b]).tolist() == [0.0, 1.0]
    rows = [EnsembleCosts(1.0, 300.0, 20.0, 1), EnsembleCosts(3.0, 100.0, 40.0, 2), EnsembleCosts(2.0, 200.0, 60.0, 3)]
    # time (0, 1, 0.5), memory (1, 0, 0.5), disk (0, 0.5, 1)
    np.testing.assert_allclose(metrics.hardware_aggregate(rows), [1 / 3, 1.5 / 3, 2 / 3], atol=1e-15)


def test_weight_entropy():
    assert metrics.weight_entropy([4, 0, 0]) == 0.0
    assert metrics.weight_entropy([1, 1, 0, 1, 1]) == pytest.approx(math.log(4))
    assert metrics.weight_entropy([2, 1, 1]) == pytest.approx(-(0.5 * math.log(0.5) + 0.5 * math.log(0.25)))
