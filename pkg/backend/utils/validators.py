"""
データバリデーション機能
"""
import math
from typing import Any, List

from backend.utils.error_helpers import ValidationError


class GridValidator:
    """格子専用バリデータ"""

    @staticmethod
    def validate_count(value: Any, name: str) -> int:
        """
        格子点数のバリデーション

        Args:
            value: バリデーション対象の分割数
            name: 表示名

        Returns:
            int: バリデーション済みの分割数

        Raises:
            ValidationError: 2未満または整数でない場合
        """
        try:
            count = int(value)
        except (TypeError, ValueError):
            raise ValidationError(f"{name}は整数である必要があります")

        if count != value or count < 2:
            raise ValidationError(f"{name}は2以上の整数である必要があります: {value}")

        return count

    @staticmethod
    def validate_range(bounds: Any, name: str) -> None:
        """
        領域範囲のバリデーション

        Raises:
            ValidationError: 長さがゼロ以下または有限でない場合
        """
        lo, hi = bounds
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi - lo <= 0.0:
            raise ValidationError(f"{name}の範囲が不正です: {bounds}")

    @staticmethod
    def validate_periodic_pairing(grid) -> None:
        """
        周期境界の対応チェック（西⇔東、南⇔北）

        Raises:
            ValidationError: 片側だけ周期の場合
        """
        if grid.bc_west.is_periodic != grid.bc_east.is_periodic:
            raise ValidationError("周期境界は西と東で対になっている必要があります")
        if grid.bc_south.is_periodic != grid.bc_north.is_periodic:
            raise ValidationError("周期境界は南と北で対になっている必要があります")

    @staticmethod
    def validate_profiles(grid) -> None:
        """Dirichlet 境界に profile があることを確認"""
        from backend.models.grid import BoundaryKind

        for name, bc in zip(('west', 'east', 'south', 'north'), grid.boundaries):
            if bc.kind is BoundaryKind.DIRICHLET and bc.profile is None:
                raise ValidationError(f"{name}境界のDirichlet profileが未設定です")
            if bc.is_outflow and not math.isfinite(bc.p_inf):
                raise ValidationError(f"{name}境界のp_infが不正です")


class IntegratorValidator:
    """時間積分設定バリデータ"""

    @staticmethod
    def validate(cfg) -> None:
        """
        IntegratorConfig のバリデーション

        Raises:
            ValidationError: dt, 許容誤差, 反復回数, 保存間隔が不正な場合
        """
        if not (cfg.dt > 0.0 and math.isfinite(cfg.dt)):
            raise ValidationError(f"dtは正の数値である必要があります: {cfg.dt}")
        if cfg.t_end < 0.0:
            raise ValidationError(f"t_endは0以上である必要があります: {cfg.t_end}")
        if abs(cfg.n_steps * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
            raise ValidationError(f"t_endがdtの整数倍ではありません: {cfg.t_end} / {cfg.dt}")
        if not cfg.newton_tol > 0.0:
            raise ValidationError("newton_tolは正の数値である必要があります")
        if cfg.newton_max_iter < 1:
            raise ValidationError("newton_max_iterは1以上である必要があります")
        if cfg.snapshot_stride < 1:
            raise ValidationError("snapshot_strideは1以上である必要があります")


class CaseParameterValidator:
    """ケースパラメータのバリデータ"""

    @staticmethod
    def validate_positive(params: dict, keys: List[str]) -> None:
        for key in keys:
            if key in params and not params[key] > 0.0:
                raise ValidationError(f"{key}は正の数値である必要があります: {params[key]}")

    @staticmethod
    def validate_non_negative(params: dict, keys: List[str]) -> None:
        for key in keys:
            if key in params and params[key] < 0.0:
                raise ValidationError(f"{key}は0以上である必要があります: {params[key]}")

    @staticmethod
    def validate_modes(modes: List[int]) -> List[int]:
        """
        モード数リストのバリデーション

        Returns:
            List[int]: 重複を除き昇順に並べたモード数
        """
        if not modes:
            raise ValidationError("モード数が指定されていません")
        for m in modes:
            if m < 1:
                raise ValidationError(f"モード数は1以上である必要があります: {m}")
        return sorted(set(modes))


def validate_grid(grid) -> None:
    """
    GridSpec の総合バリデーション

    Raises:
        ValidationError: 分割数・範囲・周期対応・境界値が不正な場合
    """
    GridValidator.validate_count(grid.nx, 'nx')
    GridValidator.validate_count(grid.ny, 'ny')
    GridValidator.validate_range(grid.x_range, 'x_range')
    GridValidator.validate_range(grid.y_range, 'y_range')
    GridValidator.validate_periodic_pairing(grid)
    GridValidator.validate_profiles(grid)


def validate_case_config(config) -> None:
    """
    CaseConfig の総合バリデーション

    Raises:
        ValidationError: いずれかの値が不正な場合
    """
    GridValidator.validate_count(config.grid[0], 'nx')
    GridValidator.validate_count(config.grid[1], 'ny')
    IntegratorValidator.validate(config.fom)
    IntegratorValidator.validate(config.rom)
    CaseParameterValidator.validate_positive(config.params, ['delta', 'Re', 'lid_velocity'])
    CaseParameterValidator.validate_non_negative(config.params, ['nu', 'C_T', 'epsilon'])
    config.modes = CaseParameterValidator.validate_modes(config.modes)

    if config.pressure_modes != 'same':
        try:
            m_p = int(config.pressure_modes)
        except (TypeError, ValueError):
            raise ValidationError(f"pressure_modesは'same'または整数です: {config.pressure_modes}")
        if m_p < 1:
            raise ValidationError("pressure_modesは1以上である必要があります")
    if config.workers < 1:
        raise ValidationError("workersは1以上である必要があります")
    if config.case == 'actuator' and config.params.get('y_min', 0.0) > config.params.get('y_max', 0.0):
        raise ValidationError("アクチュエータのy_minがy_maxより大きいです")
