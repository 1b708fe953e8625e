"""
誤差ノルム・保存量トレース・エネルギー誤差分解
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from backend.models.operators import FomOperators, diagonal_weights
from backend.models.snapshots import RomBasis, SnapshotSet
from backend.utils.error_helpers import ValidationError, require_length

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    't', 'K_fom', 'K_rom', 'P_u_fom', 'P_u_rom', 'P_v_fom', 'P_v_rom',
    'eps_V', 'eps_p', 'eps_V_best', 'div_residual',
]
# 既定列の後ろに追加する補助列
EXTRA_COLUMNS = ['K_rom_hom', 'dK_rom', 'dK_projection', 'dK_fom']


def _weighted_norm(x: np.ndarray, w: np.ndarray) -> float:
    return float(np.sqrt(x @ (w * x)))


def error_velocity(V_rom: np.ndarray, V_fom: np.ndarray, omega, V_ref: float) -> float:
    """
    ε_V = ‖V_r - V_h‖_Ω / ‖V_ref‖_Ω（V_ref は全成分が V_ref の定数場）

    Raises:
        ValidationError: 参照値がゼロの場合
    """
    w = diagonal_weights(omega)
    require_length('V_rom', V_rom, len(w))
    require_length('V_fom', V_fom, len(w))
    ref = abs(V_ref) * np.sqrt(w.sum())
    if ref == 0.0:
        raise ValidationError("参照速度がゼロです")
    return _weighted_norm(V_rom - V_fom, w) / ref


def error_pressure(p_rom: np.ndarray, p_fom: np.ndarray, omega_p, p_ref: float) -> float:
    """
    空間平均をゼロにそろえた圧力の相対誤差

    Raises:
        ValidationError: 参照値がゼロの場合
    """
    w = diagonal_weights(omega_p)
    require_length('p_rom', p_rom, len(w))
    require_length('p_fom', p_fom, len(w))
    ref = abs(p_ref) * np.sqrt(w.sum())
    if ref == 0.0:
        raise ValidationError("参照圧力がゼロです")
    shift = lambda p: p - (w @ p) / w.sum()
    return _weighted_norm(shift(p_rom) - shift(p_fom), w) / ref


def basis_projection_error(basis: RomBasis, omega, V_fom: np.ndarray,
                           V_bc: Optional[np.ndarray] = None) -> float:
    """ε_V,best = ‖(I - Φ Φ^T Ω)(V_h - V_bc)‖_Ω（スケーリングなし）"""
    w = diagonal_weights(omega)
    V_hom = V_fom if V_bc is None else V_fom - V_bc
    residual = V_hom - basis.Phi @ (basis.Phi.T @ (w * V_hom))
    return _weighted_norm(residual, w)


def energy_error_decomposition(K_rom_n: float, K_rom_0: float, K_fom_0: float,
                               K_fom_n: float) -> Tuple[float, float, float]:
    """
    K_r^n - K_h^n を (ROM時間積分, 射影, FOM時間積分) の3項に分解
    """
    return K_rom_n - K_rom_0, K_rom_0 - K_fom_0, K_fom_0 - K_fom_n


def divergence_residual(ops: FomOperators, V: np.ndarray, y_M: Optional[np.ndarray] = None) -> float:
    """‖M V - y_M‖_inf"""
    y_M = ops.y_M if y_M is None else y_M
    return float(np.abs(ops.M @ V - y_M).max())


@dataclass
class DiagnosticsTrace:
    """時刻ごとの比較量"""
    times: List[float] = field(default_factory=list)
    rows: List[Dict[str, float]] = field(default_factory=list)

    def append(self, row: Dict[str, float]) -> None:
        self.times.append(row['t'])
        self.rows.append(row)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=TRACE_COLUMNS + EXTRA_COLUMNS)
        return frame

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def energy_error_terms(self) -> np.ndarray:
        """(t1, t2, t3) の時系列（n×3）"""
        return np.column_stack([self.column(c) for c in ('dK_rom', 'dK_projection', 'dK_fom')])


def build_trace(ops: FomOperators, snapshots: SnapshotSet, basis: RomBasis, times: np.ndarray,
                coeffs: np.ndarray, rops=None, V_ref: float = 1.0, p_ref: float = 1.0) -> DiagnosticsTrace:
    """
    FOM スナップショットと ROM 係数履歴を同じ時刻で比較

    Args:
        ops: FOM 演算子
        snapshots: FOM スナップショット
        basis: ROM 基底
        times: ROM 保存時刻
        coeffs: ROM 係数履歴（M × K）
        rops: 圧力回復に使う ROM 演算子（None なら eps_p は NaN）
        V_ref: 参照速度
        p_ref: 参照圧力

    Returns:
        DiagnosticsTrace: 比較トレース

    Raises:
        ValidationError: FOM と ROM の時刻が一致しない場合
    """
    from backend.utils.fom_solver import kinetic_energy, momentum
    from backend.utils.rom_core import reconstruct_velocity, recover_pressure, rom_kinetic_energy

    if len(times) != snapshots.K or not np.allclose(times, snapshots.times, rtol=0.0, atol=1e-9):
        raise ValidationError("FOMとROMの保存時刻が一致しません")

    trace = DiagnosticsTrace()
    w = ops.omega
    K_fom_0 = kinetic_energy(ops, snapshots.velocity(0))
    K_rom_0 = rom_kinetic_energy(coeffs[:, 0])
    K_hom_fom_0 = 0.5 * float(snapshots.X[:, 0] @ (w * snapshots.X[:, 0]))

    for n, t in enumerate(times):
        a = coeffs[:, n]
        V_fom = snapshots.velocity(n)
        V_rom = reconstruct_velocity(basis, a, snapshots.V_bc)
        P_u_fom, P_v_fom = momentum(ops, V_fom)
        P_u_rom, P_v_rom = momentum(ops, V_rom)
        if rops is not None and basis.M_p > 0:
            _, p_rom = recover_pressure(rops, basis, a, float(t))
            eps_p = error_pressure(p_rom, snapshots.P[:, n], ops.omega_p, p_ref)
        else:
            eps_p = float('nan')

        K_rom_hom = rom_kinetic_energy(a)
        K_hom_fom = 0.5 * float(snapshots.X[:, n] @ (w * snapshots.X[:, n]))
        t1, t2, t3 = energy_error_decomposition(K_rom_hom, K_rom_0, K_hom_fom_0, K_hom_fom)
        trace.append({
            't': float(t),
            'K_fom': K_fom_0 if n == 0 else kinetic_energy(ops, V_fom),
            'K_rom': kinetic_energy(ops, V_rom),
            'P_u_fom': P_u_fom, 'P_u_rom': P_u_rom,
            'P_v_fom': P_v_fom, 'P_v_rom': P_v_rom,
            'eps_V': error_velocity(V_rom, V_fom, w, V_ref),
            'eps_p': eps_p,
            'eps_V_best': basis_projection_error(basis, w, V_fom, snapshots.V_bc),
            'div_residual': divergence_residual(ops, V_rom),
            'K_rom_hom': K_rom_hom,
            'dK_rom': t1, 'dK_projection': t2, 'dK_fom': t3,
        })

    logger.debug(f"比較トレースを作成: rows={len(trace.rows)}, K_rom(0)={K_rom_0:.6g}, K_fom(0)={K_fom_0:.6g}")
    return trace


def write_trace_csv(trace: DiagnosticsTrace, path: str) -> None:
    """17桁の精度で CSV に書き出す"""
    trace.to_frame().to_csv(path, index=False, float_format='%.17g')
