from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence
import logging

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.core.config import DEFAULT_LAYER_DIMS, FEATURE_NAMES, SIGNIFICANT_ATTRIBUTION
from app.core.exceptions import DataError
from app.core.seeds import derive_seed
from app.repositories.bundle import ModelBundle
from app.schemas import (
    AttackScenario, BenignProfile, DatasetSizes, HyperParams, NoiseCurveRow, Verdict,
)
from app.services.detection import (
    category_breakdown, evaluate, false_positive_breakdown, is_malicious_label, verdicts_from_errors,
)
from app.services.feature_encode import EncodedFlows
from app.services.interpretation import (
    AttributionReport, attribution_matrix, ordered_features, significant_count_histogram,
    significant_features, single_feature_trigger, top_k_needed, trigger_ratios,
)
from app.services.pipeline import detect_frame, fit_bundle, flow_ids, has_labels
from app.synth.benign import generate_benign
from app.synth.datasets import make_datasets
from app.synth.registry import ScenarioRegistry


logger = logging.getLogger(__name__)


@dataclass
class FrameAnalysis:
    """Вердикты, ошибки и логические доли атрибуции для таблицы потоков"""
    verdicts: List[Verdict]
    errors: np.ndarray
    shares: np.ndarray

    @property
    def detected(self) -> np.ndarray:
        return np.array([verdict.malicious for verdict in self.verdicts], dtype=bool)

    def report(self, index: int) -> AttributionReport:
        return AttributionReport(
            flow_id=self.verdicts[index].flow_id,
            logical_shares=dict(zip(FEATURE_NAMES, (float(share) for share in self.shares[index]))),
            element_shares=np.empty(0),
            no_error=bool(self.errors[index] == 0),
        )


def analyze_frame(bundle: ModelBundle, frame: pd.DataFrame) -> FrameAnalysis:
    flows = EncodedFlows.from_frame(frame, bundle.norm_stats)
    shares, errors = attribution_matrix(bundle.model, flows)
    verdicts = verdicts_from_errors(errors, bundle.threshold, flow_ids(frame))
    return FrameAnalysis(verdicts=verdicts, errors=errors, shares=shares)


def detection_records(
    analysis: FrameAnalysis,
    t_det: float,
    cutoff: float = SIGNIFICANT_ATTRIBUTION,
) -> List[Dict[str, Any]]:
    """Атрибуция каждого потока с вердиктом malicious"""
    records = []
    for index in np.flatnonzero(analysis.detected):
        report = analysis.report(int(index))
        error = float(analysis.errors[index])
        triggers = single_feature_trigger(report, error, t_det)
        records.append({
            'flow_id': report.flow_id,
            'error': error,
            'shares': report.logical_shares,
            'significant': ordered_features(significant_features(report, cutoff)),
            'single_trigger': [name for name in FEATURE_NAMES if triggers[name]],
            'trigger_ratios': trigger_ratios(report, error, t_det),
            'top_k': top_k_needed(report, error, t_det),
        })
    return records


def _column(frame: pd.DataFrame, name: str) -> Optional[List[str]]:
    if name not in frame.columns:
        return None
    return frame[name].astype(str).tolist()


def build_report(
    bundle: ModelBundle,
    frame: pd.DataFrame,
    cutoff: float = SIGNIFICANT_ATTRIBUTION,
) -> Dict[str, Any]:
    """
    Отчет по детекциям на таблице потоков.

    Метрики и разбивка ложных срабатываний строятся при наличии label,
    разбивка по категориям - при наличии label и category.
    """
    t_det = bundle.threshold.t_det
    analysis = analyze_frame(bundle, frame)
    detected = analysis.detected
    indices = np.flatnonzero(detected)
    reports = [analysis.report(int(index)) for index in indices]

    top_k: Dict[int, int] = {}
    for index, report in zip(indices, reports):
        k = top_k_needed(report, float(analysis.errors[index]), t_det)
        top_k[k] = top_k.get(k, 0) + 1

    result: Dict[str, Any] = {
        't_det': t_det,
        'n_flows': len(analysis.verdicts),
        'n_detected': int(detected.sum()),
        'significant_cutoff': cutoff,
        'significant_count_histogram': {
            str(count): total for count, total in significant_count_histogram(reports, cutoff).items()
        },
        'top_k_histogram': {str(k): total for k, total in sorted(top_k.items())},
    }

    labels = _column(frame, 'label') if has_labels(frame) else None
    categories = _column(frame, 'category')
    if labels is not None:
        result['metrics'] = evaluate(analysis.verdicts, labels).model_dump()
        malicious = [is_malicious_label(label) for label in labels]
        if categories is not None:
            attack_categories = [category if flag else '' for category, flag in zip(categories, malicious)]
            hidden = [category if not flag else '' for category, flag in zip(categories, malicious)]
            rows = category_breakdown(
                analysis.verdicts, attack_categories, analysis.shares, ScenarioRegistry.main_features(), t_det,
            )
            result['categories'] = [row.model_dump() for row in rows]
        else:
            hidden = [''] * len(labels)
        result['false_positives'] = [
            row.model_dump() for row in false_positive_breakdown(analysis.verdicts, labels, hidden)
        ]

    logger.info('Отчет: потоков %s, детекций %s', result['n_flows'], result['n_detected'])
    return result


def clean_false_positive_rate(verdicts: Sequence[Verdict], frame: pd.DataFrame) -> Optional[float]:
    """FPR только по нормальным потокам без скрытой категории атаки"""
    labels = frame['label'].astype(str).to_numpy()
    clean = np.array([not is_malicious_label(label) for label in labels], dtype=bool)
    if 'category' in frame.columns:
        clean &= frame['category'].astype(str).str.len().to_numpy() == 0
    total = int(clean.sum())
    if total == 0:
        return None
    flagged = np.array([verdict.malicious for verdict in verdicts], dtype=bool)
    return int(np.sum(flagged & clean)) / total


def noise_tolerance_curve(
    profile: BenignProfile,
    scenarios: Sequence[AttackScenario],
    sizes: DatasetSizes,
    noise_rates: Sequence[float],
    hyper: HyperParams,
    seed: int,
    layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS,
) -> List[NoiseCurveRow]:
    """
    Качество детекции в зависимости от доли шума в обучающем наборе.

    Пороговый и тестовый наборы общие для всех точек кривой,
    меняется только обучающий набор.
    """
    if not noise_rates:
        raise DataError('Не задано ни одной доли шума')
    datasets = make_datasets(profile, scenarios, sizes, seed)
    threshold = datasets['threshold']
    test = datasets['test']

    rows = []
    for rate in noise_rates:
        try:
            noisy = BenignProfile.model_validate({**profile.model_dump(), 'noise_rate': rate})
        except ValidationError as e:
            raise DataError(f'Недопустимая доля шума {rate}: {e}') from e
        train = generate_benign(noisy, sizes.train, derive_seed(seed, 'synth', 'train'))
        bundle = fit_bundle(train, threshold, hyper, layer_dims)
        verdicts = detect_frame(bundle, test)
        metrics = evaluate(verdicts, test['label'].tolist())
        row = NoiseCurveRow(
            noise_rate=rate,
            t_det=bundle.threshold.t_det,
            precision=metrics.precision,
            recall=metrics.recall,
            f1=metrics.f1,
            fpr=clean_false_positive_rate(verdicts, test),
        )
        logger.info('Шум %.4f: t_det=%.6e, recall=%s, fpr=%s', rate, row.t_det, row.recall, row.fpr)
        rows.append(row)
    return rows
