import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.config import FEATURE_NAMES, FlowLabel
from app.core.exceptions import DataError
from app.schemas import Threshold, Verdict
from app.services.detection import (
    category_breakdown, compute_threshold, evaluate, false_positive_breakdown, is_malicious_label,
    main_feature_ratios, metrics_from_counts, verdicts_from_errors,
)


def _two_pass_threshold(errors):
    mean = sum(errors) / len(errors)
    variance = sum((e - mean) ** 2 for e in errors) / len(errors)
    return mean + 3 * math.sqrt(variance)


def _verdicts(errors, t_det):
    return [Verdict(flow_id=str(i), error=e, malicious=e > t_det) for i, e in enumerate(errors)]


def test_threshold_matches_two_pass_oracle():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        errors = rng.gamma(2.0, 0.01, size=int(rng.integers(1, 50)))
        threshold = Threshold.from_errors(errors)
        assert threshold.t_det == pytest.approx(_two_pass_threshold(errors.tolist()), rel=1e-9, abs=1e-15)


def test_threshold_scales_with_errors():
    errors = np.random.default_rng(2).random(200)
    base = Threshold.from_errors(errors).t_det
    for k in (0.5, 3.0, 1e4):
        assert Threshold.from_errors(errors * k).t_det == pytest.approx(k * base, rel=1e-12)


def test_threshold_constant_errors():
    threshold = Threshold.from_errors([0.25] * 10)
    assert threshold.sigma == 0.0
    assert threshold.t_det == 0.25


def test_threshold_rejects_inconsistent_values():
    with pytest.raises(ValidationError):
        Threshold(t_det=1.0, mu=0.5, sigma=0.1, n_flows=3)


def test_compute_threshold_on_empty_set():
    with pytest.raises(DataError):
        compute_threshold(None, [])


def test_verdict_is_strictly_greater():
    threshold = Threshold.from_errors([0.2, 0.2])
    verdicts = verdicts_from_errors(np.array([0.1, 0.2, 0.3]), threshold, ['a', 'b', 'c'])
    assert [verdict.malicious for verdict in verdicts] == [False, False, True]
    assert [verdict.flow_id for verdict in verdicts] == ['a', 'b', 'c']
    with pytest.raises(DataError):
        verdicts_from_errors(np.array([0.1]), threshold, ['a', 'b'])


def test_metrics_example():
    metrics = metrics_from_counts(tp=90, fp=10, fn=10, tn=890)
    assert metrics.precision == pytest.approx(0.9)
    assert metrics.recall == pytest.approx(0.9)
    assert metrics.f1 == pytest.approx(0.9)
    assert metrics.tnr == pytest.approx(890 / 900)
    assert metrics.fpr == pytest.approx(10 / 900)


def test_metrics_undefined_denominators():
    metrics = metrics_from_counts(tp=0, fp=0, fn=0, tn=5)
    assert metrics.precision is None
    assert metrics.recall is None
    assert metrics.f1 is None
    assert metrics.tnr == 1.0

    metrics = metrics_from_counts(tp=0, fp=3, fn=4, tn=0)
    assert metrics.precision == 0.0 and metrics.recall == 0.0
    assert metrics.f1 is None


def test_evaluate_matches_loop():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        predicted = rng.random(n) < 0.5
        actual = rng.random(n) < 0.5
        verdicts = [Verdict(flow_id=str(i), error=0.0, malicious=bool(p)) for i, p in enumerate(predicted)]
        labels = [FlowLabel.MALICIOUS if a else FlowLabel.BENIGN for a in actual]

        tp = fp = fn = tn = 0
        for p, a in zip(predicted, actual):
            if p and a:
                tp += 1
            elif p:
                fp += 1
            elif a:
                fn += 1
            else:
                tn += 1
        precision = tp / (tp + fp) if tp + fp else None
        recall = tp / (tp + fn) if tp + fn else None

        metrics = evaluate(verdicts, labels)
        assert (metrics.tp, metrics.fp, metrics.fn, metrics.tn) == (tp, fp, fn, tn)
        assert metrics.precision == (pytest.approx(precision, rel=1e-9) if precision is not None else None)
        assert metrics.recall == (pytest.approx(recall, rel=1e-9) if recall is not None else None)
        if precision and recall:
            assert metrics.f1 == pytest.approx(2 * precision * recall / (precision + recall), rel=1e-9)


def test_evaluate_length_mismatch():
    with pytest.raises(DataError):
        evaluate([Verdict(flow_id='a', error=0.0, malicious=False)], [])


def test_labels():
    assert is_malicious_label('malicious')
    assert is_malicious_label(' Malicious ')
    assert not is_malicious_label(FlowLabel.BENIGN)
    assert is_malicious_label(True)
    with pytest.raises(DataError):
        is_malicious_label('attack')


def test_gate_without_malicious_flows_uses_tnr():
    assert metrics_from_counts(tp=0, fp=0, fn=0, tn=100).passes_gate(0.99)
    assert not metrics_from_counts(tp=0, fp=5, fn=0, tn=95).passes_gate(0.99)
    assert metrics_from_counts(tp=99, fp=0, fn=0, tn=10).passes_gate(0.99)
    assert not metrics_from_counts(tp=98, fp=0, fn=2, tn=10).passes_gate(0.99)


def _shares(rows):
    shares = np.zeros((len(rows), len(FEATURE_NAMES)))
    for i, row in enumerate(rows):
        for name, value in row.items():
            shares[i, FEATURE_NAMES.index(name)] = value
    return shares


def test_main_feature_ratios():
    shares = _shares([{'Dport': 0.8, 'Sport': 0.2}, {'Dport': 0.1, 'sTtl': 0.9}])
    ratios = main_feature_ratios(shares, np.array([2.0, 2.0]), 1.0, ['Dport'])
    np.testing.assert_allclose(ratios, [1.6, 0.2])
    zero = main_feature_ratios(shares, np.array([2.0, 0.0]), 0.0, ['Dport'])
    assert zero[0] == np.inf and zero[1] == 0.0


def test_category_breakdown():
    t_det = 1.0
    errors = [3.0, 1.5, 0.5, 2.0, 0.2]
    categories = ['non_wl_dst_port', 'non_wl_dst_port', 'non_wl_dst_port', 'bl_src_port', '']
    shares = _shares([
        {'Dport': 0.9, 'Sport': 0.1},
        {'Dport': 0.5, 'sTtl': 0.5},
        {'Dport': 1.0},
        {'Sport': 0.3, 'SrcPkts': 0.7},
        {'Sport': 1.0},
    ])
    rows = category_breakdown(
        _verdicts(errors, t_det), categories, shares,
        {'non_wl_dst_port': ('Dport',), 'bl_src_port': ('Sport',), 'port_zero': ('Sport', 'Dport')},
        t_det,
    )
    by_category = {row.category: row for row in rows}

    assert set(by_category) == {'non_wl_dst_port', 'bl_src_port'}
    dst = by_category['non_wl_dst_port']
    assert (dst.count, dst.detected, dst.only_main_count) == (3, 2, 1)
    assert dst.recall == pytest.approx(2 / 3)
    assert dst.only_main_frac_of_tp == pytest.approx(0.5)
    assert dst.mean_main_ratio_tp == pytest.approx((2.7 + 0.75) / 2)
    assert dst.mean_main_ratio_fn == pytest.approx(0.5)
    src = by_category['bl_src_port']
    assert (src.count, src.detected, src.only_main_count) == (1, 1, 0)
    assert src.mean_main_ratio_fn is None
    assert sum(row.count for row in rows) == 4


def test_false_positive_breakdown():
    t_det = 1.0
    verdicts = _verdicts([2.0, 2.0, 2.0, 0.5, 2.0], t_det)
    labels = ['benign', 'benign', 'benign', 'benign', 'malicious']
    hidden = ['port_zero', '', '', 'port_zero', 'bl_src_port']
    rows = {row.kind: row for row in false_positive_breakdown(verdicts, labels, hidden)}

    assert rows['hidden_anomaly'].count == 1
    assert rows['actual_false_positive'].count == 2
    assert rows['actual_false_positive'].fraction == pytest.approx(2 / 3)

    empty = {row.kind: row for row in false_positive_breakdown(verdicts[3:4], labels[3:4], hidden[3:4])}
    assert empty['hidden_anomaly'].fraction is None


def test_raising_threshold_never_adds_detections():
    rng = np.random.default_rng(16)
    for _ in range(200):
        reference = rng.gamma(2.0, 0.01, size=20)
        errors = rng.gamma(2.0, 0.01, size=30)
        low = Threshold.from_errors(reference)
        high = Threshold.from_errors(reference * float(rng.uniform(1.0, 3.0)))
        assert high.t_det >= low.t_det

        before = verdicts_from_errors(errors, low)
        after = verdicts_from_errors(errors, high)
        for old, new in zip(before, after):
            assert not (new.malicious and not old.malicious)
