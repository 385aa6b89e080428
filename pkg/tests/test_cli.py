import os

import pytest
import ujson
from typer.testing import CliRunner

from conftest import bank_rows, write_bank_csv
from cli import app, RunConfig
import directories

runner = CliRunner()  # stdout and stderr are separate by default in Click >= 8.2

QUICK = ['--subsample', '0', '--chains', '2', '--warmup', '100', '--draws', '100', '--seed', '5']


def fit_run(data: str, out: str, *extra: str):
    return runner.invoke(app, ['fit', '--data', data, '--out', out] + QUICK + list(extra))


@pytest.fixture(scope='module')
def bank_file(tmp_path_factory):
    return write_bank_csv(tmp_path_factory.mktemp('data') / 'bank.csv', bank_rows(120, seed=3))


@pytest.fixture(scope='module')
def logit_run(bank_file, tmp_path_factory):
    out = str(tmp_path_factory.mktemp('runs') / 'logit')
    result = fit_run(bank_file, out)
    assert result.exit_code == 0, result.stderr
    return out, result


@pytest.fixture(scope='module')
def probit_run(bank_file, tmp_path_factory):
    out = str(tmp_path_factory.mktemp('runs') / 'probit')
    result = fit_run(bank_file, out, '--link', 'probit')
    assert result.exit_code == 0, result.stderr
    return out


class TestFit:
    def test_run_directory_contents(self, logit_run):
        out, _ = logit_run
        for name in (directories.CONFIG_FILE, directories.CHAIN_FILE, directories.ENCODING_FILE,
                     directories.BALANCE_FILE, directories.HOLDOUT_FILE, directories.SUMMARY_TXT,
                     directories.SUMMARY_JSON, directories.PREDICTIONS_TXT, directories.PREDICTIONS_JSON,
                     directories.RUN_LOG):
            assert os.path.isfile(os.path.join(out, name)), name

    def test_summary_on_stdout(self, logit_run):
        out, result = logit_run
        assert 'Intercept' in result.stdout and 'ESS Bulk' in result.stdout
        with open(os.path.join(out, directories.SUMMARY_TXT)) as handle:
            assert handle.read() == result.stdout
        with open(os.path.join(out, directories.SUMMARY_JSON)) as handle:
            summary = ujson.load(handle)
        assert summary['model'] == 'logit_model'
        assert [p['name'] for p in summary['parameters']][:3] == ['Intercept', 'age', 'job']

    def test_config_round_trips(self, logit_run, bank_file):
        out, _ = logit_run
        with open(os.path.join(out, directories.CONFIG_FILE)) as handle:
            config = RunConfig.model_validate(ujson.load(handle))
        assert config.data == bank_file and config.chains == 2 and config.seed == 5
        assert 'workers' not in config.model_dump()

    def test_holdout_predictions(self, logit_run):
        out, _ = logit_run
        with open(os.path.join(out, directories.PREDICTIONS_JSON)) as handle:
            payload = ujson.load(handle)
        assert payload['scale'] == 'outcome'
        assert [row['index'] for row in payload['predictions']] == [1, 2, 3]

    def test_identical_bytes_for_any_worker_count(self, bank_file, tmp_path):
        out = str(tmp_path / 'run')
        chains = os.path.join(out, directories.CHAIN_FILE)
        assert fit_run(bank_file, out, '--format', 'json').exit_code == 0
        with open(chains, 'rb') as handle:
            first = handle.read()
        assert fit_run(bank_file, out, '--format', 'json', '--workers', '2').exit_code == 0
        with open(chains, 'rb') as handle:
            assert handle.read() == first

    def test_json_format_prints_json(self, bank_file, tmp_path):
        result = fit_run(bank_file, str(tmp_path / 'run'), '--format', 'json', '--holdout', '0')
        assert result.exit_code == 0
        assert 'parameters' in ujson.loads(result.stdout)
        assert not os.path.exists(tmp_path / 'run' / directories.HOLDOUT_FILE)

    def test_missing_data_file(self, tmp_path):
        result = fit_run(str(tmp_path / 'absent.csv'), str(tmp_path / 'run'))
        assert result.exit_code == 3
        assert 'absent.csv' in result.stderr

    def test_bad_header_is_a_data_error(self, tmp_path):
        path = tmp_path / 'bad.csv'
        path.write_text('"age";"colour"\n30;"red"\n')
        result = fit_run(str(path), str(tmp_path / 'run'))
        assert result.exit_code == 3
        assert 'UnknownColumn' in result.stderr

    def test_invalid_utf8_is_a_data_error(self, bank_file, tmp_path):
        path = tmp_path / 'latin.csv'
        with open(bank_file, 'rb') as handle:
            path.write_bytes(handle.read().replace(b'married', b'marr\xffied', 1))
        result = fit_run(str(path), str(tmp_path / 'run'))
        assert result.exit_code == 3
        assert 'MalformedRow' in result.stderr and 'byte offset' in result.stderr

    def test_invalid_setting_is_a_usage_error(self, bank_file, tmp_path):
        result = fit_run(bank_file, str(tmp_path / 'run'), '--target-accept', '1.5')
        assert result.exit_code == 2


class TestDiagnose:
    def test_reproduces_fit_summary(self, logit_run):
        out, fit_result = logit_run
        result = runner.invoke(app, ['diagnose', os.path.join(out, directories.CHAIN_FILE)])
        assert result.exit_code == 0
        assert result.stdout == fit_result.stdout

    def test_missing_chain_file(self, tmp_path):
        result = runner.invoke(app, ['diagnose', str(tmp_path / 'chains.csv')])
        assert result.exit_code == 3

    def test_corrupt_chain_file(self, tmp_path):
        path = tmp_path / 'chains.csv'
        path.write_text('{"param_names": ["Intercept"], "n_chains": 1, "n_draws": 2, "seed": 1}\n'
                        'chain,iteration,Intercept\n0,0,0.1\n')
        result = runner.invoke(app, ['diagnose', str(path)])
        assert result.exit_code == 3
        assert 'offset' in result.stderr


class TestPredict:
    def test_scores_held_out_records(self, logit_run):
        out, _ = logit_run
        result = runner.invoke(app, ['predict', os.path.join(out, directories.CHAIN_FILE), '--data',
                                     os.path.join(out, directories.HOLDOUT_FILE), '--scale', 'probability',
                                     '--format', 'json'])
        assert result.exit_code == 0, result.stderr
        rows = ujson.loads(result.stdout)['predictions']
        assert len(rows) == 3
        assert all(0.0 <= r['q2_5'] <= r['estimate'] <= r['q97_5'] <= 1.0 for r in rows)

    def test_unseen_level(self, logit_run, tmp_path):
        out, _ = logit_run
        rows = bank_rows(2, seed=4, with_target=False)
        rows[0]['job'] = 'astronaut'
        data = write_bank_csv(tmp_path / 'new.csv', rows)
        result = runner.invoke(app, ['predict', os.path.join(out, directories.CHAIN_FILE), '--data', data])
        assert result.exit_code == 3
        assert 'astronaut' in result.stderr


class TestCompare:
    def test_ranks_two_links(self, logit_run, probit_run):
        out, _ = logit_run
        result = runner.invoke(app, ['compare', os.path.join(out, directories.CHAIN_FILE),
                                     os.path.join(probit_run, directories.CHAIN_FILE), '--format', 'json'])
        assert result.exit_code == 0, result.stderr
        payload = ujson.loads(result.stdout)
        names = [row['model'] for row in payload['comparison']]
        assert sorted(names) == ['logit_model', 'probit_model']
        assert payload['comparison'][0]['elpd_diff'] == 0.0
        assert payload['comparison'][1]['elpd_diff'] <= 0.0

    def test_needs_two_files(self, logit_run):
        out, _ = logit_run
        result = runner.invoke(app, ['compare', os.path.join(out, directories.CHAIN_FILE)])
        assert result.exit_code == 2

    def test_different_training_sets(self, logit_run, bank_file, tmp_path):
        out, _ = logit_run
        other = str(tmp_path / 'other')
        assert fit_run(bank_file, other, '--seed', '6').exit_code == 0
        result = runner.invoke(app, ['compare', os.path.join(out, directories.CHAIN_FILE),
                                     os.path.join(other, directories.CHAIN_FILE)])
        assert result.exit_code == 5


@pytest.mark.slow
class TestVerify:
    def test_quick_suite_passes(self):
        result = runner.invoke(app, ['verify', '--quick', '--format', 'json'])
        payload = ujson.loads(result.stdout)
        assert result.exit_code == 0, payload
        assert payload['passed']


@pytest.mark.slow
@pytest.mark.skipif(not os.environ.get('DEPOSITBAYES_DATA'), reason="DEPOSITBAYES_DATA not set")
def test_public_dataset_fit(tmp_path):
    out = str(tmp_path / 'real')
    result = runner.invoke(app, ['fit', '--data', os.environ['DEPOSITBAYES_DATA'], '--out', out, '--subsample', '2000',
                                 '--chains', '2', '--warmup', '300', '--draws', '300', '--format', 'json'])
    assert result.exit_code == 0, result.stderr
    rows = {p['name']: p for p in ujson.loads(result.stdout)['parameters']}
    assert len(rows) == 21
    # call duration is the strongest positive predictor of a subscription
    assert rows['duration']['ci_lower'] > 0.0
