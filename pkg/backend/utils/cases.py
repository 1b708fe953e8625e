"""
テストケース定義（せん断層・キャビティ流れ・アクチュエータ）
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from backend.models.grid import BoundaryCondition, GridSpec, StateVector
from backend.models.operators import ActuatorDisk, FomOperators
from backend.utils.error_helpers import ValidationError
from backend.utils.fom_solver import pressure_from_velocity, project_velocity
from backend.utils.mesh_ops import assemble_body_force, build_fom_operators, build_grid
from config.run_config import CaseConfig

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass
class CaseSetup:
    """ケースの格子・初期状態・粘性・演算子"""
    name: str
    grid: GridSpec
    init: StateVector
    nu: float
    ops: FomOperators
    references: Dict[str, float] = field(default_factory=dict)


def _initial_state(ops: FomOperators, V0: np.ndarray, nu: float) -> StateVector:
    p0 = pressure_from_velocity(ops, V0, 0.0, nu)
    return StateVector(V0, p0, 0.0)


def shear_layer_velocity(grid: GridSpec, delta: float, epsilon: float) -> np.ndarray:
    """スタガード位置で評価した二重せん断層の初期速度（射影前）"""
    xu, yu = grid.u_coordinates()
    xv, _ = grid.v_coordinates()
    u = np.where(yu <= math.pi,
                 1.0 + np.tanh((yu - 0.5 * math.pi) / delta),
                 1.0 + np.tanh((1.5 * math.pi - yu) / delta))
    v = epsilon * np.sin(xv)
    return np.concatenate([u, v])


def case_shear_layer(params: Dict[str, float], grid_size: Tuple[int, int] = (64, 64),
                     boundary: Optional[BoundaryCondition] = None) -> CaseSetup:
    """
    周期領域 [0, 2π]² の二重せん断層

    Args:
        params: delta（既定 π/15）, epsilon（既定 1/20）, nu（既定 0）
        grid_size: (nx, ny)
        boundary: 境界条件（周期以外はエラー）

    Returns:
        CaseSetup: 初期場は Poisson 1回で離散発散ゼロに射影済み

    Raises:
        ValidationError: 周期以外の境界が指定された場合
    """
    if boundary is not None and not boundary.is_periodic:
        raise ValidationError("せん断層ケースは周期境界のみ対応しています")

    delta = params.get('delta', math.pi / 15.0)
    epsilon = params.get('epsilon', 1.0 / 20.0)
    nu = params.get('nu', 0.0)
    if delta <= 0.0:
        raise ValidationError(f"deltaは正である必要があります: {delta}")

    grid = build_grid(GridSpec(grid_size[0], grid_size[1], (0.0, TWO_PI), (0.0, TWO_PI)))
    ops = build_fom_operators(grid)
    V0 = project_velocity(ops, shear_layer_velocity(grid, delta, epsilon))
    logger.info(f"せん断層ケース: {grid.nx}x{grid.ny}, delta={delta:.6g}, epsilon={epsilon:.6g}, nu={nu}")
    return CaseSetup('shear_layer', grid, _initial_state(ops, V0, nu), nu, ops)


def case_lid_driven_cavity(params: Dict[str, float], grid_size: Tuple[int, int] = (64, 64)) -> CaseSetup:
    """
    単位正方形のキャビティ流れ（北壁が速度 (lid, 0) で移動）

    蓋の速度は接線方向なので y_M には現れず y_D に入る。初期速度はゼロ。
    """
    Re = params.get('Re', 1000.0)
    lid = params.get('lid_velocity', 1.0)
    if Re <= 0.0:
        raise ValidationError(f"Reは正である必要があります: {Re}")

    grid = build_grid(GridSpec(
        grid_size[0], grid_size[1], (0.0, 1.0), (0.0, 1.0),
        bc_west=BoundaryCondition.no_slip(),
        bc_east=BoundaryCondition.no_slip(),
        bc_south=BoundaryCondition.no_slip(),
        bc_north=BoundaryCondition.dirichlet(lambda x: (lid, 0.0)),
    ))
    ops = build_fom_operators(grid)
    nu = 1.0 / Re
    logger.info(f"キャビティ流れケース: {grid.nx}x{grid.ny}, Re={Re:g}")
    return CaseSetup('lid_driven_cavity', grid, _initial_state(ops, np.zeros(grid.n_V), nu), nu, ops)


def inflow_profile(y: float) -> Tuple[float, float]:
    """平均1の放物線流入速度"""
    return 0.75 - 3.0 / 32.0 * (y - 2.0) * (y + 2.0), 0.0


def case_actuator(params: Dict[str, float], grid_size: Tuple[int, int] = (120, 40)) -> CaseSetup:
    """
    [-4, 8]×[-2, 2] のアクチュエータ後流

    西辺は放物線流入、他の3辺は p_inf = 0 の流出境界。初期速度は全域で流入分布。
    体積力の時間係数は 1 + sin(πt)。
    """
    Re = params.get('Re', 500.0)
    if Re <= 0.0:
        raise ValidationError(f"Reは正である必要があります: {Re}")
    disk = ActuatorDisk(
        x0=params.get('x0', 0.0),
        y_min=params.get('y_min', -0.5),
        y_max=params.get('y_max', 0.5),
        C_T=params.get('C_T', 0.5),
    )

    grid = build_grid(GridSpec(
        grid_size[0], grid_size[1], (-4.0, 8.0), (-2.0, 2.0),
        bc_west=BoundaryCondition.dirichlet(inflow_profile),
        bc_east=BoundaryCondition.outflow(0.0),
        bc_south=BoundaryCondition.outflow(0.0),
        bc_north=BoundaryCondition.outflow(0.0),
    ))
    force = assemble_body_force(grid, disk, 'one_plus_sin_pi')
    ops = build_fom_operators(grid, force)

    _, yu = grid.u_coordinates()
    u0 = np.array([inflow_profile(y)[0] for y in yu])
    V0 = np.concatenate([u0, np.zeros(grid.n_v)])
    nu = 1.0 / Re
    logger.info(f"アクチュエータケース: {grid.nx}x{grid.ny}, Re={Re:g}, C_T={disk.C_T}")
    return CaseSetup('actuator', grid, _initial_state(ops, V0, nu), nu, ops)


def case_taylor_green(n: int = 32, nu: float = 1e-2) -> CaseSetup:
    """周期 [0, 2π]² の減衰渦（粘性散逸と収束次数の確認用）"""
    grid = build_grid(GridSpec(n, n, (0.0, TWO_PI), (0.0, TWO_PI)))
    ops = build_fom_operators(grid)
    xu, yu = grid.u_coordinates()
    xv, yv = grid.v_coordinates()
    V0 = np.concatenate([np.sin(xu) * np.cos(yu), -np.cos(xv) * np.sin(yv)])
    V0 = project_velocity(ops, V0)
    return CaseSetup('taylor_green', grid, _initial_state(ops, V0, nu), nu, ops)


def setup_case(config: CaseConfig) -> CaseSetup:
    """
    CaseConfig からケースを構築

    Raises:
        ValidationError: 未知のケース名の場合
    """
    builders = {
        'shear_layer': case_shear_layer,
        'lid_driven_cavity': case_lid_driven_cavity,
        'actuator': case_actuator,
    }
    if config.case not in builders:
        raise ValidationError(f"未知のケースです: {config.case}")
    setup = builders[config.case](config.params, config.grid)
    setup.references = dict(config.references)
    return setup
