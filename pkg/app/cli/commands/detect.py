"""Детекция потоков сохраненной моделью"""
import argparse
from pathlib import Path
import logging

from app.cli.config import RunConfig
from app.repositories.bundle import load_bundle
from app.repositories.tables import CATEGORY_COLUMN, read_flow_csv, write_json, write_verdict_csv
from app.services.detection import category_breakdown, evaluate, is_malicious_label
from app.services.pipeline import detect_frame, has_labels
from app.services.reporting import analyze_frame
from app.synth.registry import ScenarioRegistry


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('detect', help='вердикты по таблице потоков')
    parser.add_argument('--model', type=Path, required=True, help='файл модели')
    parser.add_argument('--flows', type=Path, required=True, help='CSV потоков')
    parser.add_argument('--out', type=Path, required=True, help='CSV вердиктов')
    parser.add_argument('--metrics', type=Path, help='JSON метрик (только для размеченных потоков)')
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    outputs = {'verdicts': args.out}
    if args.metrics:
        outputs['metrics'] = args.metrics
    config = RunConfig.build(
        command='detect',
        inputs={'model': args.model, 'flows': args.flows},
        outputs=outputs,
    )
    bundle = load_bundle(config.inputs['model'])
    frame = read_flow_csv(config.inputs['flows'])
    labeled = has_labels(frame)

    if labeled and CATEGORY_COLUMN in frame.columns:
        analysis = analyze_frame(bundle, frame)
        verdicts = analysis.verdicts
    else:
        analysis = None
        verdicts = detect_frame(bundle, frame)
    write_verdict_csv(verdicts, config.outputs['verdicts'])

    if not labeled:
        logger.info('Меток нет, метрики не считаются')
        return 0

    labels = frame['label'].tolist()
    metrics = evaluate(verdicts, labels)
    logger.info(
        'precision=%s recall=%s f1=%s tnr=%s', metrics.precision, metrics.recall, metrics.f1, metrics.tnr,
    )
    result = {'t_det': bundle.threshold.t_det, 'metrics': metrics.model_dump()}
    if analysis is not None:
        categories = [
            category if is_malicious_label(label) else ''
            for category, label in zip(frame[CATEGORY_COLUMN].astype(str), labels)
        ]
        rows = category_breakdown(
            verdicts, categories, analysis.shares, ScenarioRegistry.main_features(), bundle.threshold.t_det,
        )
        result['categories'] = [row.model_dump() for row in rows]
    if 'metrics' in config.outputs:
        write_json(result, config.outputs['metrics'])
    return 0
