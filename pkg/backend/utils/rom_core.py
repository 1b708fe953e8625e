"""
ROM のオフライン前計算とオンライン時間積分

da/dt = F2(a⊗a) + F1 a + F0 + g(t) f_act
の各係数を FOM の convection() 呼び出しだけで組み立てる。同じ掃引を
Π^T M Ω^{-1} で射影したものが圧力回復用の P2, P1, P0, P_act になる。
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from backend.models.operators import FomOperators, RomOperators
from backend.models.snapshots import RomBasis
from backend.utils.error_helpers import SolverError, ValidationError, require_length
from backend.utils.mesh_ops import convection
from config.run_config import IntegratorConfig, TimeIntegrator

logger = logging.getLogger(__name__)


def _map_columns(func: Callable[[int], np.ndarray], count: int, workers: int) -> List[np.ndarray]:
    if workers > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, range(count)))
    return [func(i) for i in range(count)]


def precompute_rom_operators(ops: FomOperators, basis: RomBasis, V_bc: np.ndarray, nu: float,
                             workers: int = 1) -> RomOperators:
    """
    縮約演算子の前計算

    C2[:, i, j] は Φ_j が Φ_i を運ぶ項、C1 の列は V_bc との相互作用、
    yC = C(V_bc, V_bc)。境界オフセットはゼロ引数の呼び出しで差し引く。

    Args:
        ops: FOM 演算子
        basis: ROM 基底
        V_bc: リフティング場
        nu: 動粘性係数
        workers: 基底列ごとの並列スレッド数

    Returns:
        RomOperators: 前計算済みの縮約演算子

    Raises:
        ValidationError: 次元が一致しない場合
        SolverError: 縮約 Poisson 行列が特異な場合
    """
    if basis.n_V != ops.n_V or basis.n_p != ops.n_p:
        raise ValidationError(f"基底の次元がFOMと一致しません: Phi={basis.Phi.shape}, Pi={basis.Pi.shape}")
    require_length('V_bc', V_bc, ops.n_V)

    Phi, Pi = basis.Phi, basis.Pi
    M, M_p = basis.M, basis.M_p
    omega = ops.omega
    zero = np.zeros(ops.n_V)

    # Π^T M Ω^{-1} を密行列として一度だけ作る
    W = (ops.M.T @ Pi).T / omega[None, :]

    conv_00 = convection(ops, zero, zero)
    conv_bc_0 = convection(ops, V_bc, zero)
    conv_0_bc = convection(ops, zero, V_bc)
    conv_0_phi = [convection(ops, zero, Phi[:, i]) for i in range(M)]

    def quadratic_slice(j: int) -> np.ndarray:
        # 運ぶ側 Φ_j を固定した N_V×M の列群
        cols = np.empty((ops.n_V, M))
        conv_j0 = convection(ops, Phi[:, j], zero)
        for i in range(M):
            cols[:, i] = convection(ops, Phi[:, j], Phi[:, i]) - conv_j0 - conv_0_phi[i] + conv_00
        return cols

    def linear_column(i: int) -> np.ndarray:
        return (convection(ops, V_bc, Phi[:, i]) + convection(ops, Phi[:, i], V_bc)
                - conv_bc_0 - conv_0_bc)

    quad = _map_columns(quadratic_slice, M, workers)
    lin = _map_columns(linear_column, M, workers)

    C2 = np.empty((M, M, M))
    P2 = np.empty((M_p, M, M))
    for j, cols in enumerate(quad):
        C2[:, :, j] = Phi.T @ cols
        P2[:, :, j] = W @ cols
    C1_full = np.column_stack(lin) if M else np.zeros((ops.n_V, 0))
    yC_full = convection(ops, V_bc, V_bc)

    D_Phi = ops.D @ Phi
    D_r = Phi.T @ D_Phi
    yD_full = ops.D @ V_bc + ops.y_D

    # 完全形: F^CD - y_G を Φ^T / W で射影
    const_full = -yC_full + nu * yD_full - ops.y_G
    f_spatial = ops.force.spatial
    time_factor = ops.force.time_factor
    if time_factor == 'constant':
        const_full = const_full + f_spatial
        act_full = np.zeros(ops.n_V)
    else:
        act_full = f_spatial

    L_r = Pi.T @ (ops.L @ Pi)
    rops = RomOperators(
        nu=nu,
        F2=-C2, F1=-(Phi.T @ C1_full) + nu * D_r, F0_const=Phi.T @ const_full, f_act=Phi.T @ act_full,
        D_r=D_r, L_r=L_r,
        P2=-P2, P1=-(W @ C1_full) + nu * (W @ D_Phi), P0=W @ const_full, P_act=W @ act_full,
        time_factor=time_factor,
    )
    _factor_reduced_poisson(rops)
    logger.info(f"ROM演算子を前計算しました: M={M}, M_p={M_p}, workers={workers}")
    return rops


def _factor_reduced_poisson(rops: RomOperators) -> None:
    """L_r の LU 分解をキャッシュ（特異なら SolverError）"""
    if rops.M_p == 0:
        rops.lr_factor = None
        return
    scale = max(np.abs(rops.L_r).max(), np.finfo(float).tiny)
    cond = np.linalg.cond(rops.L_r)
    if not np.isfinite(cond) or cond > 1.0 / (np.finfo(float).eps * 10.0):
        raise SolverError(f"縮約Poisson行列が特異です (cond={cond:.3e}, scale={scale:.3e})")
    rops.lr_factor = sla.lu_factor(rops.L_r)


def rom_rhs(rops: RomOperators, a: np.ndarray, t: float = 0.0) -> np.ndarray:
    """F_r(a, t) = F2(a⊗a) + F1 a + F0 + g(t) f_act"""
    require_length('a', a, rops.M)
    rhs = np.einsum('rij,i,j->r', rops.F2, a, a) + rops.F1 @ a + rops.F0_const
    if np.any(rops.f_act):
        rhs = rhs + rops.g(t) * rops.f_act
    return rhs


def rom_jacobian(rops: RomOperators, a: np.ndarray) -> np.ndarray:
    """J_r = F2(I⊗a + a⊗I) + F1"""
    require_length('a', a, rops.M)
    return np.einsum('rij,j->ri', rops.F2, a) + np.einsum('rji,j->ri', rops.F2, a) + rops.F1


def rom_step_implicit_midpoint(rops: RomOperators, a_n: np.ndarray, dt: float,
                               cfg: Optional[IntegratorConfig] = None, t: float = 0.0) -> np.ndarray:
    """
    ROM の陰的中点則 (a^{n+1} - a^n)/Δt = F_r((a^n + a^{n+1})/2, t + Δt/2)

    Raises:
        SolverError: Newton 法が収束しない場合
    """
    tol = cfg.newton_tol if cfg is not None else 1e-12
    max_iter = cfg.newton_max_iter if cfg is not None else 20
    t_half = t + 0.5 * dt
    a_new = a_n.copy()
    identity = np.eye(rops.M)

    for iteration in range(max_iter + 1):
        mid = 0.5 * (a_n + a_new)
        residual = a_new - a_n - dt * rom_rhs(rops, mid, t_half)
        norm = np.abs(residual).max() if residual.size else 0.0
        if norm <= tol:
            return a_new
        if iteration == max_iter:
            break
        jac = identity - 0.5 * dt * rom_jacobian(rops, mid)
        a_new = a_new - np.linalg.solve(jac, residual)

    raise SolverError(f"ROM中点則Newton法が{max_iter}回で収束しませんでした (residual={norm:.3e})")


def rom_step_erk4(rops: RomOperators, a_n: np.ndarray, dt: float, t: float = 0.0) -> np.ndarray:
    """ROM の古典的 RK4"""
    k1 = rom_rhs(rops, a_n, t)
    k2 = rom_rhs(rops, a_n + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rom_rhs(rops, a_n + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rom_rhs(rops, a_n + dt * k3, t + dt)
    return a_n + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_rom(rops: RomOperators, a0: np.ndarray, cfg: IntegratorConfig,
            t0: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    ROM を t_end まで時間発展

    Returns:
        (times, A): 保存時刻と係数履歴（M × K、保存間隔は snapshot_stride）
    """
    require_length('a0', a0, rops.M)
    n_steps = cfg.n_steps
    n_snap = n_steps // cfg.snapshot_stride + 1
    history = np.empty((rops.M, n_snap))
    times = np.empty(n_snap)
    history[:, 0], times[0] = a0, t0

    a = a0.copy()
    col = 1
    for n in range(1, n_steps + 1):
        t = t0 + (n - 1) * cfg.dt
        if cfg.method is TimeIntegrator.IMPLICIT_MIDPOINT:
            a = rom_step_implicit_midpoint(rops, a, cfg.dt, cfg, t)
        else:
            a = rom_step_erk4(rops, a, cfg.dt, t)
        if not np.all(np.isfinite(a)):
            raise SolverError(f"ROM解が発散しました (step={n})")
        if n % cfg.snapshot_stride == 0:
            history[:, col], times[col] = a, t0 + n * cfg.dt
            col += 1

    return times, history


def reconstruct_velocity(basis: RomBasis, a: np.ndarray, V_bc: np.ndarray) -> np.ndarray:
    """V_r = Φ a + V_bc"""
    require_length('a', a, basis.M)
    return basis.Phi @ a + V_bc


def recover_pressure(rops: RomOperators, basis: RomBasis, a: np.ndarray,
                     t: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    縮約 PPE L_r q = P2(a⊗a) + P1 a + P0 + g(t) P_act から圧力を回復

    Returns:
        (q, p_r): 縮約係数と空間平均ゼロにそろえた圧力場
    """
    require_length('a', a, rops.M)
    if rops.M_p == 0:
        return np.zeros(0), np.zeros(basis.n_p)
    if rops.lr_factor is None:
        _factor_reduced_poisson(rops)

    rhs = np.einsum('rij,i,j->r', rops.P2, a, a) + rops.P1 @ a + rops.P0
    if np.any(rops.P_act):
        rhs = rhs + rops.g(t) * rops.P_act
    q = sla.lu_solve(rops.lr_factor, rhs)
    p_r = basis.Pi @ q
    return q, p_r - p_r.mean()


def rom_kinetic_energy(a: np.ndarray) -> float:
    """K_r = ½‖a‖²（斉次部分のエネルギー）"""
    return 0.5 * float(a @ a)


def rom_dissipation(rops: RomOperators, a: np.ndarray) -> float:
    """粘性散逸 ν‖Q_r a‖² = -ν a^T D_r a"""
    return -rops.nu * float(a @ (rops.D_r @ a))


def oracle_residual(ops: FomOperators, basis: RomBasis, rops: RomOperators, V_bc: np.ndarray,
                    nu: float, a: np.ndarray, t: float = 0.0) -> float:
    """
    ROM 右辺と FOM 右辺の射影との差 |F_r(a) - Φ^T(F^CD(Φa + V_bc) - y_G)|_inf
    """
    from backend.utils.fom_solver import fom_rhs_cd

    V = reconstruct_velocity(basis, a, V_bc)
    projected = basis.Phi.T @ (fom_rhs_cd(ops, V, t, nu) - ops.y_G)
    return float(np.abs(rom_rhs(rops, a, t) - projected).max())


def gershgorin_bound(rops: RomOperators, a: np.ndarray) -> Tuple[float, float]:
    """
    ROM ヤコビアン固有値の Gershgorin 円板による包含範囲

    Returns:
        (実部の最大値, 絶対値の最大値)
    """
    jac = rom_jacobian(rops, a)
    centers = np.diag(jac)
    radii = np.abs(jac).sum(axis=1) - np.abs(centers)
    return float(np.max(centers + radii)), float(np.max(np.abs(centers) + radii))
