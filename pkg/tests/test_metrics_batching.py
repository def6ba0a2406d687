import logging

import numpy as np
import pytest

from sleepdiff.data.sequences import SequenceSet
from sleepdiff.harness.batching import build_batch, epoch_batches, per_domain_count
from sleepdiff.harness.metrics import average_rows, compute_metrics, confusion_matrix, report_from_confusion


def loop_f1(cm):
    f1s = []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        fp = sum(cm[r, c] for r in range(cm.shape[0]) if r != c)
        fn = sum(cm[c, k] for k in range(cm.shape[0]) if k != c)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    return f1s


def test_confusion_matrix_rows_are_supports(rng):
    y, p = rng.integers(0, 5, 300), rng.integers(0, 5, 300)
    cm = confusion_matrix(y, p)
    np.testing.assert_array_equal(cm.sum(1), np.bincount(y, minlength=5))
    assert cm.sum() == 300


def test_perfect_predictions():
    y = np.repeat(np.arange(5), 10)
    r = compute_metrics(y, y)
    assert r.accuracy == 100.0 and r.macro_f1 == 100.0


def test_one_perturbed_cell_matches_loop_oracle():
    cm = np.diag([10] * 5)
    cm[0, 0], cm[0, 1] = 9, 1
    r = report_from_confusion(cm)
    assert r.accuracy == pytest.approx(100 * 49 / 50, abs=1e-12)
    assert r.macro_f1 == pytest.approx(100 * np.mean(loop_f1(cm)), abs=1e-12)


def test_absent_class_is_flagged_with_zero_f1(caplog):
    y = np.array([0, 0, 1, 1, 2, 3])
    p = np.array([0, 4, 1, 1, 2, 3])
    with caplog.at_level(logging.WARNING):
        r = compute_metrics(y, p)
    assert r.absent == (4,) and r.f1[4] == 0.0
    assert r.macro_f1 == pytest.approx(100 * np.mean(loop_f1(confusion_matrix(y, p))))
    assert "REM" in caplog.text and "absent" in str(r)


def test_empty_confusion_raises():
    with pytest.raises(ValueError):
        report_from_confusion(np.zeros((5, 5), int))


def test_metrics_bounded(rng):
    r = compute_metrics(rng.integers(0, 5, 50), rng.integers(0, 5, 50))
    for v in (r.accuracy, r.macro_f1, *r.f1, *r.precision, *r.recall):
        assert 0.0 <= v <= 100.0


def test_average_rows():
    assert average_rows([(1.0, 2.0), (3.0, 6.0)]) == [2.0, 4.0]


def pools(sizes):
    out = {}
    for d, n in sizes.items():
        x = np.zeros((n, 1, 2, 1), np.float32) + np.arange(n)[:, None, None, None]
        out[d] = SequenceSet(x, np.zeros((n, 1), np.int64), d)
    return out


@pytest.mark.parametrize("n_domains,expected", [(4, 4), (2, 8)])
def test_equal_share_per_domain(n_domains, expected):
    assert per_domain_count(16, n_domains) == expected
    batches = list(epoch_batches(pools({d: 20 for d in range(n_domains)}), 16, np.random.default_rng(0)))
    for b in batches[:-1]:
        assert np.all(np.bincount(b.domains) == expected)


def test_indivisible_batch_rejected():
    with pytest.raises(ValueError):
        per_domain_count(16, 3)


def test_without_replacement_and_partial_tail():
    p = pools({1: 10, 2: 10})
    batches = list(epoch_batches(p, 8, np.random.default_rng(0)))
    assert [len(b) for b in batches] == [8, 8, 4]
    for d in (1, 2):
        seen = np.concatenate([b.index[b.domains == d] for b in batches])
        assert sorted(seen) == list(range(10))


def test_pass_ends_when_smallest_pool_is_empty():
    batches = list(epoch_batches(pools({0: 3, 1: 9}), 4, np.random.default_rng(0)))
    assert [np.bincount(b.domains, minlength=2).tolist() for b in batches] == [[2, 2], [1, 2]]


def test_batch_order_determinism_and_reshuffle():
    p = pools({0: 12, 1: 12})

    def order(seed, passes=2):
        g = np.random.default_rng(seed)
        return [[b.ids() for b in epoch_batches(p, 4, g)] for _ in range(passes)]

    a, b = order(5), order(5)
    assert a == b
    assert a[0] != a[1]


def test_build_batch_contents():
    p = pools({3: 4, 1: 4})
    b = build_batch(p, {3: [2], 1: [0, 3]})
    assert b.domains.tolist() == [1, 1, 3]
    assert b.x[:, 0, 0, 0].tolist() == [0.0, 3.0, 2.0]
