"""
ecrom コマンドのテスト（click の CliRunner で実行）
"""
import json
import os

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from backend.app_factory import create_cli

SHEAR_MANIFEST = {
    'case': 'shear_layer',
    'grid': [8, 8],
    'fom': {'method': 'rk4', 'dt': 0.01, 't_end': 0.1},
    'rom': {'method': 'imr', 'dt': 0.01, 't_end': 0.1, 'newton_tol': 1e-13},
    'modes': [2, 4],
    'pressure_modes': 2,
}


@pytest.fixture
def cli():
    return create_cli('testing')


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def manifest(tmp_path):
    path = tmp_path / 'shear.json'
    path.write_text(json.dumps(SHEAR_MANIFEST))
    return str(path)


def _invoke(runner, cli, *args):
    return runner.invoke(cli, list(args), catch_exceptions=False)


class TestPipeline:

    def test_all_stages_write_artifacts(self, runner, cli, manifest, tmp_path):
        out = str(tmp_path / 'out')
        result = _invoke(runner, cli, 'all', '--config', manifest, '--out', out)
        assert result.exit_code == 0, result.output

        for name in ('snapshots.bin', 'basis_M2.bin', 'basis_M4.bin', 'romops_M4.bin', 'coeffs_M4.npy',
                     'trace_M2.csv', 'trace_M4.csv', 'timings.csv'):
            assert os.path.exists(os.path.join(out, name)), name

        timings = pd.read_csv(os.path.join(out, 'timings.csv'))
        assert list(timings.columns) == ['stage', 'seconds']
        assert {'fom', 'svd', 'precompute_M2', 'online_M4', 'compare'} <= set(timings['stage'])

    def test_inviscid_reduced_energy_is_flat(self, runner, cli, manifest, tmp_path):
        out = str(tmp_path / 'out')
        _invoke(runner, cli, 'all', '--config', manifest, '--out', out)
        trace = pd.read_csv(os.path.join(out, 'trace_M4.csv'), float_precision='round_trip')
        K = trace['K_rom_hom'].to_numpy()
        assert np.abs(K - K[0]).max() <= 1e-11 * K[0]

    def test_repeated_runs_are_identical(self, runner, cli, manifest, tmp_path):
        traces = []
        for name in ('first', 'second'):
            out = str(tmp_path / name)
            _invoke(runner, cli, 'all', '--config', manifest, '--out', out)
            with open(os.path.join(out, 'trace_M4.csv'), 'rb') as f:
                traces.append(f.read())
        assert traces[0] == traces[1]

    def test_constrained_basis_keeps_momentum(self, runner, cli, manifest, tmp_path):
        out = str(tmp_path / 'out')
        result = _invoke(runner, cli, 'all', '--config', manifest, '--out', out, '--constrained', '--modes', '4')
        assert result.exit_code == 0, result.output
        trace = pd.read_csv(os.path.join(out, 'trace_M4.csv'), float_precision='round_trip')
        for column in ('P_u_rom', 'P_v_rom'):
            values = trace[column].to_numpy()
            scale = max(1.0, np.abs(values).max())
            assert np.abs(values - values[0]).max() <= 1e-12 * scale
        assert trace['P_u_rom'][0] == pytest.approx(trace['P_u_fom'][0], rel=1e-12)

    def test_stages_can_run_separately(self, runner, cli, manifest, tmp_path):
        out = str(tmp_path / 'out')
        for stage in ('fom', 'pod', 'rom', 'compare'):
            result = _invoke(runner, cli, stage, '--config', manifest, '--out', out)
            assert result.exit_code == 0, result.output
        timings = pd.read_csv(os.path.join(out, 'timings.csv'))
        assert set(timings['stage']) >= {'fom', 'svd', 'online_M2', 'compare'}
        assert timings['stage'].is_unique

    def test_dump_operators(self, runner, cli, tmp_path):
        path = tmp_path / 'dump.json'
        path.write_text(json.dumps(dict(SHEAR_MANIFEST, dump_operators=True)))
        out = str(tmp_path / 'out')
        _invoke(runner, cli, 'fom', '--config', str(path), '--out', out)
        for name in ('M', 'G', 'D', 'L'):
            with open(os.path.join(out, 'operators', f'{name}.bin'), 'rb') as f:
                assert f.read(6) == b'ECROM1'


class TestExitCodes:

    def test_compare_without_snapshots(self, runner, cli, manifest, tmp_path):
        result = _invoke(runner, cli, 'compare', '--config', manifest, '--out', str(tmp_path / 'empty'))
        assert result.exit_code == 3
        assert 'missing snapshot file' in result.output

    def test_bad_modes_option(self, runner, cli, manifest, tmp_path):
        result = _invoke(runner, cli, 'pod', '--config', manifest, '--modes', 'two', '--out', str(tmp_path))
        assert result.exit_code == 2

    def test_invalid_manifest_value(self, runner, cli, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps(dict(SHEAR_MANIFEST, modes=[0])))
        result = _invoke(runner, cli, 'fom', '--config', str(path), '--out', str(tmp_path / 'out'))
        assert result.exit_code == 2

    def test_too_many_modes_is_solver_error(self, runner, cli, manifest, tmp_path):
        out = str(tmp_path / 'out')
        _invoke(runner, cli, 'fom', '--config', manifest, '--out', out)
        result = _invoke(runner, cli, 'pod', '--config', manifest, '--out', out, '--modes', '500')
        assert result.exit_code == 4

    def test_missing_manifest(self, runner, cli, tmp_path):
        result = _invoke(runner, cli, 'fom', '--config', str(tmp_path / 'absent.json'))
        assert result.exit_code == 3
