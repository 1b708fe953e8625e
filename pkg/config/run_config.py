"""
実行マニフェスト（JSON）の読み込みとケース既定値
"""
import copy
import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from backend.utils.error_helpers import ArtifactError, ValidationError
from config.settings import get_config


class TimeIntegrator(Enum):
    """時間積分法"""
    IMPLICIT_MIDPOINT = 'imr'
    EXPLICIT_RK4 = 'rk4'

    @classmethod
    def parse(cls, value: Union[str, 'TimeIntegrator']) -> 'TimeIntegrator':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(f"未知の時間積分法です: {value} (imr または rk4)")


@dataclass(frozen=True)
class IntegratorConfig:
    """時間積分の設定"""
    method: TimeIntegrator = TimeIntegrator.EXPLICIT_RK4
    dt: float = 0.01
    t_end: float = 1.0
    newton_tol: float = 1e-12
    newton_max_iter: int = 20
    snapshot_stride: int = 1

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'IntegratorConfig':
        # Newton の既定値は環境設定（ECROM_NEWTON_*）から
        settings = get_config()
        return cls(
            method=TimeIntegrator.parse(data.get('method', 'rk4')),
            dt=float(data.get('dt', 0.01)),
            t_end=float(data.get('t_end', 1.0)),
            newton_tol=float(data.get('newton_tol', settings.NEWTON_TOL)),
            newton_max_iter=int(data.get('newton_max_iter', settings.NEWTON_MAX_ITER)),
            snapshot_stride=int(data.get('snapshot_stride', 1)),
        )


# 大規模格子（full_scale=true で使用）
FULL_SCALE_GRIDS: Dict[str, Tuple[int, int]] = {
    'shear_layer': (200, 200),
    'lid_driven_cavity': (100, 100),
    'actuator': (240, 80),
}

# ケース別既定値
CASE_DEFAULTS: Dict[str, Dict[str, Any]] = {
    'shear_layer': {
        'params': {'delta': 0.20943951023931953, 'epsilon': 0.05, 'nu': 0.0},
        'grid': [64, 64],
        'fom': {'method': 'rk4', 'dt': 0.01, 't_end': 4.0},
        'rom': {'method': 'imr', 'dt': 0.01, 't_end': 4.0},
        'modes': [2, 4, 8, 16],
        'references': {'V_ref': 1.0, 'p_ref': 1.0},
    },
    'lid_driven_cavity': {
        'params': {'Re': 1000.0, 'lid_velocity': 1.0},
        'grid': [64, 64],
        'fom': {'method': 'rk4', 'dt': 0.01, 't_end': 10.0},
        'rom': {'method': 'rk4', 'dt': 0.01, 't_end': 10.0},
        'modes': [5, 10, 15, 20],
        'references': {'V_ref': 1.0, 'p_ref': 1.0},
    },
    'actuator': {
        'params': {'Re': 500.0, 'C_T': 0.5, 'x0': 0.0, 'y_min': -0.5, 'y_max': 0.5},
        'grid': [120, 40],
        'fom': {'method': 'rk4', 'dt': 0.025, 't_end': 20.0},
        'rom': {'method': 'rk4', 'dt': 0.025, 't_end': 20.0},
        'modes': [10],
        'references': {'V_ref': 1.0, 'p_ref': 0.25},
    },
}


@dataclass
class CaseConfig:
    """1回の実験を記述するマニフェスト"""
    case: str
    params: Dict[str, float]
    grid: Tuple[int, int]
    fom: IntegratorConfig
    rom: IntegratorConfig
    modes: List[int]
    pressure_modes: Union[str, int] = 'same'
    constrained: bool = False
    seed: int = 0
    full_scale: bool = False
    dump_operators: bool = False
    workers: int = 1
    references: Dict[str, float] = field(default_factory=dict)

    def pressure_mode_count(self, M: int) -> int:
        """M_p（既定は M と同数）"""
        if self.pressure_modes == 'same':
            return M
        return int(self.pressure_modes)


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_manifest(path: str) -> Dict[str, Any]:
    """
    JSON マニフェストを読み込む

    Raises:
        ArtifactError: ファイルが存在しない、またはJSONとして不正な場合
    """
    if not os.path.exists(path):
        raise ArtifactError(f"設定ファイルが見つかりません: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"設定ファイルのJSONが不正です: {path}: {e}")
    if not isinstance(data, dict):
        raise ValidationError("設定ファイルの最上位はオブジェクトである必要があります")
    return data


def load_run_config(path: Optional[str] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> CaseConfig:
    """
    マニフェストとCLI上書きから CaseConfig を構築

    Args:
        path: JSON マニフェストのパス（None ならケース既定値のみ）
        overrides: CLI で指定された値（None の項目は無視）

    Returns:
        CaseConfig: 検証済みの実行設定

    Raises:
        ValidationError: 未知のケースや不正な値の場合
    """
    from backend.utils.validators import validate_case_config

    raw = read_manifest(path) if path else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    case = overrides.get('case', raw.get('case', 'shear_layer'))
    if case not in CASE_DEFAULTS:
        raise ValidationError(f"未知のケースです: {case}")

    data = _merge(CASE_DEFAULTS[case], raw)
    full_scale = bool(overrides.get('full_scale', data.get('full_scale', False)))
    if full_scale and 'grid' not in raw:
        data['grid'] = list(FULL_SCALE_GRIDS[case])

    if 'grid' in overrides:
        data['grid'] = list(overrides['grid'])
    if 'modes' in overrides:
        data['modes'] = list(overrides['modes'])
    if 'constrained' in overrides:
        data['constrained'] = overrides['constrained']

    try:
        grid = data['grid']
        rom = IntegratorConfig.from_dict(data['rom'])
        if 'method' in overrides:
            rom = with_integrator(rom, method=overrides['method'])
        config = CaseConfig(
            case=case,
            params={k: float(v) for k, v in data.get('params', {}).items()},
            grid=(int(grid[0]), int(grid[1])),
            fom=IntegratorConfig.from_dict(data['fom']),
            rom=rom,
            modes=[int(m) for m in data.get('modes', [])],
            pressure_modes=data.get('pressure_modes', 'same'),
            constrained=bool(data.get('constrained', False)),
            seed=int(data.get('seed', 0)),
            full_scale=full_scale,
            dump_operators=bool(data.get('dump_operators', False)),
            workers=int(overrides.get('workers', data.get('workers', get_config().WORKERS))),
            references={k: float(v) for k, v in data.get('references', {}).items()},
        )
    except (TypeError, ValueError, IndexError, KeyError) as e:
        raise ValidationError(f"設定値が不正です: {e}")

    validate_case_config(config)
    return config


def with_integrator(cfg: IntegratorConfig, **changes: Any) -> IntegratorConfig:
    """一部だけ変更した IntegratorConfig を返す"""
    if 'method' in changes:
        changes['method'] = TimeIntegrator.parse(changes['method'])
    return replace(cfg, **changes)
