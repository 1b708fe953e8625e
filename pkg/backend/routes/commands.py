"""
ecrom コマンド（fom | pod | rom | compare | all）
"""
import logging
from typing import List, Optional, Tuple

import click

from backend.utils.pipeline_processor import STAGES, PipelineProcessor
from config.run_config import load_run_config
from config.settings import get_config

logger = logging.getLogger(__name__)

STAGE_HELP = {
    'fom': 'FOMを時間発展してスナップショットを保存',
    'pod': 'スナップショットからPOD基底を作成',
    'rom': 'ROM演算子を前計算して係数を時間発展',
    'compare': 'FOMとROMを比較してトレースCSVを出力',
    'all': 'fom → pod → rom → compare を続けて実行',
}


def _parse_modes(ctx, param, value: Optional[str]) -> Optional[List[int]]:
    """「2,4,8」形式のモード数リスト"""
    if value is None:
        return None
    try:
        modes = [int(item) for item in value.split(',') if item.strip()]
    except ValueError:
        raise click.BadParameter(f"カンマ区切りの整数で指定してください: {value}")
    if not modes:
        raise click.BadParameter("モード数が指定されていません")
    return modes


def pipeline_options(func):
    """各ステージ共通のオプション"""
    options = [
        click.option('--config', 'config_path', required=True,
                     type=click.Path(dir_okay=False), help='実行マニフェスト（JSON）'),
        click.option('--grid', nargs=2, type=int, default=None, metavar='NX NY', help='格子数の上書き'),
        click.option('--modes', callback=_parse_modes, default=None, metavar='M1,M2,...',
                     help='速度モード数の上書き'),
        click.option('--constrained/--unconstrained', default=None, help='運動量拘束つきPOD'),
        click.option('--method', type=click.Choice(['imr', 'rk4'], case_sensitive=False), default=None,
                     help='ROMの時間積分法'),
        click.option('--full-scale/--desk-scale', default=None, help='大規模格子を使う'),
        click.option('--workers', type=click.IntRange(min=1), default=None, help='ROM掃引の並列数'),
        click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                     help='出力ディレクトリ'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _stage_command(stage: str) -> click.Command:
    @click.command(name=stage, help=STAGE_HELP[stage])
    @pipeline_options
    @click.pass_context
    def command(ctx, config_path: str, grid: Optional[Tuple[int, int]], modes: Optional[List[int]],
                constrained: Optional[bool], method: Optional[str], full_scale: Optional[bool],
                workers: Optional[int], out_dir: Optional[str]):
        settings = (ctx.obj or {}).get('settings') or get_config()
        overrides = {
            'grid': grid,
            'modes': modes,
            'constrained': constrained,
            'method': method,
            'full_scale': full_scale,
            'workers': workers,
        }
        config = load_run_config(config_path, overrides)
        out_dir = out_dir or settings.OUTPUT_DIRECTORY
        logger.info(f"ecrom {stage}: case={config.case}, out={out_dir}")

        result = PipelineProcessor(config, out_dir).run(stage)
        click.echo(result['message'])
        for detail in result['details']:
            if detail['stage'] == 'compare':
                for M, values in detail['results'].items():
                    click.echo(f"  M={M}: eps_V(T)={values['eps_V_final']:.6e}, "
                               f"oracle={values['oracle_residual']:.3e}")
            elif detail['stage'] == 'rom':
                for values in detail['results']:
                    click.echo(f"  M={values['M']}: online={values['online_seconds']:.3f}s, "
                               f"energy drift={values['energy_drift']:.3e}")

    return command


def build_commands() -> List[click.Command]:
    """ステージコマンドを新しく作る（グループごとに別インスタンス）"""
    return [_stage_command(stage) for stage in STAGES + ('all',)]
