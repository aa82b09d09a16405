import json

import pandas as pd
import pytest
import yaml

from cleo import CommandTester
from clikit.args import StringArgs
from clikit.io.input_stream import StringInputStream
from clikit.io.output_stream import BufferedOutputStream

from crashsurrogate.cli.crashsurrogate import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, build_application
from crashsurrogate.helpers.cache import reinit_cache_config
from crashsurrogate.helpers.config import config

GENERATE_CONFIG = {'oracle': {'nx': 4, 'ny': 3, 'pole_nodes': 4, 'T': 3}}
TRAIN_CONFIG = {
    'family': 'MeshTransolver+Contact',
    'epochs': 2,
    'lr': 1e-3,
    'model': {'d_h': 8, 'n_tokens': 4, 'heads': 2, 'l_attn': 1},
}


def execute(name, args):
    tester = CommandTester(build_application().find(name))
    status = tester.execute(args)

    return status, tester.io.fetch_output() + tester.io.fetch_error()


def run_application(line):
    application = build_application()
    application.config.set_terminate_after_run(False)
    output, error = BufferedOutputStream(), BufferedOutputStream()
    status = application.run(StringArgs(line), StringInputStream(''), output, error)

    return status, output.fetch() + error.fetch()


def write_yaml(path, values):
    path.write_text(yaml.safe_dump(values))
    return path


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    config['cache'] = 'none'
    reinit_cache_config()

    root = tmp_path_factory.mktemp('pipeline')
    gen_cfg = write_yaml(root / 'generate.yml', GENERATE_CONFIG)
    train_cfg = write_yaml(root / 'train.yml', TRAIN_CONFIG)
    data, model = root / 'data', root / 'model'

    status, output = execute('generate', f'{data} --n=6 --seed=1 --config={gen_cfg} --jobs=1')
    assert status == EXIT_OK, output
    status, output = execute('split', f'{data} --ks-threshold=1.0')
    assert status == EXIT_OK, output
    status, output = execute('train', f'{data} {model} --config={train_cfg} --jobs=1')
    assert status == EXIT_OK, output

    return root


def read_manifest(path):
    return json.loads(path.read_text())


def test_generate_split_and_train_outputs(workspace):
    data, model = workspace / 'data', workspace / 'model'

    for name in ('trajectories.cstr', 'designs.csv', 'dataset.json', 'split.json', 'generate.manifest.json', 'split.manifest.json'):
        assert (data / name).is_file(), name
    for name in ('best.npz', 'history.csv', 'train_config.yml', 'train.manifest.json'):
        assert (model / name).is_file(), name

    generate = read_manifest(data / 'generate.manifest.json')
    assert generate['seeds'] == {'lhs': 1}
    assert generate['config']['oracle_config']['nx'] == 4
    assert str(data / 'trajectories.cstr') in generate['outputs']

    split = json.loads((data / 'split.json').read_text())
    assert split['counts'] == {'train': 4, 'val': 1, 'test': 1}

    train = read_manifest(model / 'train.manifest.json')
    assert train['config']['model']['family'] == 'MeshTransolver+Contact'
    assert str(model / 'best.npz') in train['outputs']
    assert len(pd.read_csv(model / 'history.csv')) == 3


def test_rollout_then_evaluate_predictions(workspace):
    data, checkpoint = workspace / 'data', workspace / 'model' / 'best.npz'
    rolled, fresh, stored = workspace / 'rollout', workspace / 'eval_fresh', workspace / 'eval_stored'

    status, output = execute('rollout', f'{checkpoint} {data} {rolled} --subset=test --jobs=1')
    assert status == EXIT_OK, output
    rmse = pd.read_csv(rolled / 'rollout_rmse.csv')
    assert list(rmse['t']) == [1, 2, 3]
    assert (rolled / 'rollout.manifest.json').is_file()

    status, output = execute('evaluate', f'{data} {fresh} --checkpoint={checkpoint} --subset=test --jobs=1')
    assert status == EXIT_OK, output
    status, output = execute('evaluate', f'{data} {stored} --predictions={rolled / "predictions.cstr"} --subset=test')
    assert status == EXIT_OK, output

    a = json.loads((fresh / 'eval_summary.json').read_text())
    b = json.loads((stored / 'eval_summary.json').read_text())
    assert a['rmse_mu'] == pytest.approx(b['rmse_mu'], rel=1e-12)
    assert a['e_surv_final_mean'] == pytest.approx(b['e_surv_final_mean'], rel=1e-12, abs=1e-12)
    assert list(pd.read_csv(fresh / 'eval_steps.csv')['rmse']) == pytest.approx(list(rmse['rmse']), rel=1e-12)

    status, output = execute('report', f'{fresh}')
    assert status == EXIT_OK, output
    assert (fresh / 'eval_rmse.svg').is_file()
    assert (fresh / 'report.manifest.json').is_file()


def test_evaluating_the_dataset_against_itself_is_exact(workspace):
    data, out = workspace / 'data', workspace / 'eval_self'

    status, output = execute('evaluate', f'{data} {out} --predictions={data} --label=self')
    assert status == EXIT_OK, output

    summary = json.loads((out / 'eval_summary.json').read_text())
    assert summary['n_samples'] == 6 and summary['label'] == 'self'
    assert summary['rmse_mu'] == 0.0
    assert summary['e_surv_final_mean'] == 0.0


def test_bench_and_contacts(workspace):
    data, checkpoint = workspace / 'data', workspace / 'model' / 'best.npz'
    out = workspace / 'bench'

    status, output = execute('bench', f'{data} {out} --checkpoint={checkpoint} --samples=0,1')
    assert status == EXIT_OK, output
    summary = pd.read_csv(out / 'bench_summary.csv')
    assert list(summary['predictor']) == ['oracle', 'drift', 'best']
    assert (summary['speedup_vs_oracle'] > 0).all()
    assert len(pd.read_csv(out / 'bench_samples.csv')) == 6

    status, output = execute('contacts', f'{data} {out} --sample=2 --step=1 --checkpoint={checkpoint}')
    assert status == EXIT_OK, output
    frame = pd.read_csv(out / 'contacts_2_1.csv')
    assert list(frame.columns) == ['i', 'j', 'distance', 'gap']
    assert (frame['i'] != frame['j']).all()


def test_families_lists_stage_counts():
    status, output = execute('families', '')

    assert status == EXIT_OK
    assert 'MeshTransolver+Contact: 1+6+2' in output
    assert 'MGN: 6+0+0' in output


def test_usage_errors_exit_with_two(workspace, tmp_path):
    data = workspace / 'data'

    assert execute('generate', f'{tmp_path / "d"} --config={tmp_path / "missing.yml"}')[0] == EXIT_USAGE
    assert execute('train', f'{data} {tmp_path / "m"} --family=Nope')[0] == EXIT_USAGE
    assert execute('evaluate', f'{tmp_path / "absent"} {tmp_path / "e"} --checkpoint=drift')[0] == EXIT_USAGE
    assert execute('evaluate', f'{data} {tmp_path / "e"} --checkpoint=drift --predictions={data}')[0] == EXIT_USAGE
    assert execute('rollout', f'drift {data} {tmp_path / "r"} --subset=holdout')[0] == EXIT_USAGE
    assert execute('split', f'{data} --out={tmp_path} --ratios=0.5,0.5')[0] == EXIT_USAGE


def test_argument_parsing_errors_exit_with_two(workspace, tmp_path):
    data = workspace / 'data'

    status, output = run_application(f'split {data} --out={tmp_path} --bogus')
    assert status == EXIT_USAGE, output
    assert not (tmp_path / 'split.json').exists()

    assert run_application(f'split {data} --out={tmp_path} --ks-threshold=1.0')[0] == EXIT_OK


def test_failed_split_exits_with_one(workspace, tmp_path):
    status, output = execute('split', f'{workspace / "data"} --out={tmp_path} --ks-threshold=-1 --max-retries=1')

    assert status == EXIT_FAILURE
    assert 'KS threshold' in output
    assert not (tmp_path / 'split.json').exists()
