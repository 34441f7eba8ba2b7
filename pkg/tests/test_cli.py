import json

import pandas as pd
import pytest

from app.cli import main
from app.repositories.tables import FLOW_COLUMNS


SIZES = ['--train', '600', '--threshold', '200', '--validation', '60', '--test', '120']
TRAIN_ARGS = ['--layer-dims', '2848,16,4,16,2848', '--epochs', '1', '--batch', '64', '--lr', '2e-3', '--seed', '5']


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp('cli')
    data = root / 'data'
    data.mkdir()
    assert main(['synth', '--out-dir', str(data), '--seed', '3', *SIZES]) == 0
    model = root / 'model.json'
    assert main([
        'train', '--train', str(data / 'train.csv'), '--threshold', str(data / 'threshold.csv'),
        '--out', str(model), *TRAIN_ARGS,
    ]) == 0
    return root


def test_synth_writes_splits(workspace):
    data = workspace / 'data'
    assert sorted(path.name for path in data.iterdir()) == ['test.csv', 'threshold.csv', 'train.csv', 'validation.csv']
    assert len(pd.read_csv(data / 'test.csv')) == 120


def test_synth_is_reproducible(workspace, tmp_path):
    assert main(['synth', '--out-dir', str(tmp_path), '--seed', '3', *SIZES]) == 0
    for name in ('train.csv', 'threshold.csv', 'validation.csv', 'test.csv'):
        assert (tmp_path / name).read_bytes() == (workspace / 'data' / name).read_bytes()


def test_synth_with_packets(tmp_path):
    sizes = ['--train', '20', '--threshold', '10', '--validation', '10', '--test', '10']
    assert main(['synth', '--out-dir', str(tmp_path), '--packets', *sizes]) == 0
    assert (tmp_path / 'train_packets.csv').exists()

    assert main(['extract', '--packets', str(tmp_path / 'test_packets.csv'), '--out', str(tmp_path / 'flows.csv')]) == 0
    assert len(pd.read_csv(tmp_path / 'flows.csv')) == 10


def test_synth_missing_directory(tmp_path, capsys):
    missing = tmp_path / 'missing'
    assert main(['synth', '--out-dir', str(missing), *SIZES]) == 2
    assert not missing.exists()
    assert str(missing) in capsys.readouterr().err


def test_train_is_reproducible_with_source_date_epoch(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv('SOURCE_DATE_EPOCH', '1700000000')
    data = workspace / 'data'
    paths = [tmp_path / 'a.json', tmp_path / 'b.json']
    for path in paths:
        assert main([
            'train', '--train', str(data / 'train.csv'), '--threshold', str(data / 'threshold.csv'),
            '--out', str(path), *TRAIN_ARGS,
        ]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert json.loads(paths[0].read_text())['metadata']['created_at'].startswith('2023-11-14')


def test_train_missing_threshold_file(workspace, tmp_path, capsys):
    missing = tmp_path / 'absent.csv'
    code = main([
        'train', '--train', str(workspace / 'data' / 'train.csv'), '--threshold', str(missing),
        '--out', str(tmp_path / 'model.json'), *TRAIN_ARGS,
    ])
    assert code == 2
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / 'model.json').exists()


def test_train_header_only_file(workspace, tmp_path):
    empty = tmp_path / 'empty.csv'
    empty.write_text(','.join(FLOW_COLUMNS) + '\n')
    code = main([
        'train', '--train', str(empty), '--threshold', str(workspace / 'data' / 'threshold.csv'),
        '--out', str(tmp_path / 'model.json'), *TRAIN_ARGS,
    ])
    assert code == 2


def test_train_bad_layer_dims(workspace, tmp_path):
    code = main([
        'train', '--train', str(workspace / 'data' / 'train.csv'),
        '--threshold', str(workspace / 'data' / 'threshold.csv'),
        '--out', str(tmp_path / 'model.json'), '--layer-dims', '2848,16,32,16,2848',
    ])
    assert code == 2


def test_detect_with_labels(workspace, tmp_path):
    verdicts = tmp_path / 'verdicts.csv'
    metrics = tmp_path / 'metrics.json'
    code = main([
        'detect', '--model', str(workspace / 'model.json'), '--flows', str(workspace / 'data' / 'test.csv'),
        '--out', str(verdicts), '--metrics', str(metrics),
    ])
    assert code == 0

    table = pd.read_csv(verdicts)
    assert list(table.columns) == ['flow_id', 'error', 'malicious']
    assert len(table) == 120
    result = json.loads(metrics.read_text())
    assert result['metrics']['tp'] + result['metrics']['fn'] == 60
    assert sum(row['count'] for row in result['categories']) == 60


def test_detect_without_labels(workspace, tmp_path):
    flows = tmp_path / 'flows.csv'
    pd.read_csv(workspace / 'data' / 'test.csv').drop(columns=['label', 'category']).to_csv(flows, index=False)
    metrics = tmp_path / 'metrics.json'
    code = main([
        'detect', '--model', str(workspace / 'model.json'), '--flows', str(flows),
        '--out', str(tmp_path / 'verdicts.csv'), '--metrics', str(metrics),
    ])
    assert code == 0
    assert (tmp_path / 'verdicts.csv').exists()
    assert not metrics.exists()


def test_detect_non_numeric_port(workspace, tmp_path, capsys):
    frame = pd.read_csv(workspace / 'data' / 'test.csv', keep_default_na=False)
    frame['Sport'] = frame['Sport'].astype(object)
    frame.loc[0, 'Sport'] = 'abc'
    flows = tmp_path / 'flows.csv'
    frame.to_csv(flows, index=False)

    code = main([
        'detect', '--model', str(workspace / 'model.json'), '--flows', str(flows),
        '--out', str(tmp_path / 'verdicts.csv'),
    ])
    assert code == 2
    assert 'Sport' in capsys.readouterr().err
    assert not (tmp_path / 'verdicts.csv').exists()


def test_detect_layout_mismatch(workspace, tmp_path):
    data = json.loads((workspace / 'model.json').read_text())
    data['layout_version'] = 'enc-v0'
    model = tmp_path / 'old.json'
    model.write_text(json.dumps(data))
    code = main([
        'detect', '--model', str(model), '--flows', str(workspace / 'data' / 'test.csv'),
        '--out', str(tmp_path / 'verdicts.csv'),
    ])
    assert code == 2


def test_attribute(workspace, tmp_path):
    out = tmp_path / 'attribution.json'
    code = main([
        'attribute', '--model', str(workspace / 'model.json'), '--flows', str(workspace / 'data' / 'test.csv'),
        '--out', str(out),
    ])
    assert code == 0
    result = json.loads(out.read_text())
    assert result['cutoff'] == 0.1
    for flow in result['flows']:
        assert flow['error'] > result['t_det']


@pytest.mark.parametrize('target, rows', [('dst_port', 1286), ('protocol', 256)])
def test_sweep_default_grids(workspace, tmp_path, target, rows):
    out = tmp_path / 'sweep.csv'
    code = main([
        'sweep', '--model', str(workspace / 'model.json'), '--flows', str(workspace / 'data' / 'threshold.csv'),
        '--out', str(out), '--target', target, '--n-base', '3', '--gnuplot', str(tmp_path / 'sweep.gp'),
    ])
    assert code == 0
    table = pd.read_csv(out)
    assert len(table) == rows
    assert list(table.columns) == ['grid_value', 'min', 'p2', 'median', 'p98', 'max', 'frac_malicious']
    assert (table['max'] <= 1.0).all()
    assert 'candlesticks' in (tmp_path / 'sweep.gp').read_text()


def test_sweep_unknown_target(workspace, tmp_path):
    code = main([
        'sweep', '--model', str(workspace / 'model.json'), '--flows', str(workspace / 'data' / 'threshold.csv'),
        '--out', str(tmp_path / 'sweep.csv'), '--target', 'color',
    ])
    assert code == 2


def test_report(workspace, tmp_path):
    out = tmp_path / 'report.json'
    code = main([
        'report', '--model', str(workspace / 'model.json'), '--flows', str(workspace / 'data' / 'test.csv'),
        '--out', str(out),
    ])
    assert code == 0
    result = json.loads(out.read_text())
    assert {'t_det', 'n_flows', 'n_detected', 'metrics', 'categories', 'false_positives'} <= set(result)


def test_report_noise_rates_require_output(workspace, tmp_path):
    code = main([
        'report', '--model', str(workspace / 'model.json'), '--flows', str(workspace / 'data' / 'test.csv'),
        '--out', str(tmp_path / 'report.json'), '--noise-rates', '0,0.01',
    ])
    assert code == 1


def test_unknown_command():
    assert main(['explode']) == 1


def test_missing_required_argument():
    assert main(['detect', '--model', 'model.json']) == 1
