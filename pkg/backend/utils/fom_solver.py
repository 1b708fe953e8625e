"""
FOM 時間積分と圧力 Poisson 方程式

Ω dV/dt = F^CD(V, t) - G p - y_G,  M V = y_M
を陽的 RK4（段ごとに圧力射影）または陰的中点則（鞍点系の Newton 反復）で解く。
"""
import logging
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized, splu
from scipy.sparse.linalg import norm as sparse_norm

from backend.models.grid import StateVector
from backend.models.operators import FomOperators
from backend.models.snapshots import SnapshotSet
from backend.utils.error_helpers import SolverError, ValidationError, require_length
from backend.utils.mesh_ops import convection, convection_jacobian
from backend.utils.validators import IntegratorValidator
from config.run_config import IntegratorConfig, TimeIntegrator

logger = logging.getLogger(__name__)

# 古典的 RK4 の Butcher 係数
RK4_A = np.array([
    [0.0, 0.0, 0.0, 0.0],
    [0.5, 0.0, 0.0, 0.0],
    [0.0, 0.5, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
])
RK4_B = np.array([1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0])
RK4_C = np.array([0.0, 0.5, 0.5, 1.0])

# 特異 Poisson の両立条件 |1^T rhs| <= rtol·scale
PPE_COMPAT_RTOL = 1e-10


def fom_rhs_cd(ops: FomOperators, V: np.ndarray, t: float, nu: float,
               include_convection: bool = True) -> np.ndarray:
    """
    対流・拡散・体積力の右辺 -C(V,V) + ν(D V + y_D) + f(t)

    圧力勾配と y_G は含まない。
    """
    require_length('V', V, ops.n_V)
    rhs = nu * (ops.D @ V + ops.y_D)
    if include_convection:
        rhs -= convection(ops, V, V)
    if not ops.force.is_zero:
        rhs += ops.force.evaluate(t)
    return rhs


def _poisson_solver(ops: FomOperators):
    """L の分解（特異な場合は平均ゼロ拘束で縁取り）を一度だけ作る"""
    if ops.poisson_factor is None:
        n_p = ops.n_p
        if ops.singular_poisson:
            ones = sp.csr_matrix(np.ones((n_p, 1)))
            bordered = sp.bmat([[ops.L, ones], [ones.T, None]], format='csc')
            ops.poisson_factor = factorized(bordered)
        else:
            ops.poisson_factor = factorized(ops.L.tocsc())
        logger.debug(f"Poisson行列を分解しました: N_p={n_p}, singular={ops.singular_poisson}")
    return ops.poisson_factor


def divergence_scale(ops: FomOperators, V: np.ndarray) -> float:
    """M V の各成分が持ちうる大きさ N_p·max|M|·max|V|（両立条件の許容誤差の基準）"""
    return ops.n_p * ops.divergence_entry_max * float(np.abs(V).max(initial=0.0))


def ppe_solve(ops: FomOperators, rhs: np.ndarray, scale: Optional[float] = None) -> np.ndarray:
    """
    圧力 Poisson 方程式 L p = rhs

    流出境界がない場合 L は定数の零空間を持つ。rhs の総和が scale に対して
    1e-10 以内であることを確認し、平均成分を除いてから解いて p の空間平均をゼロに固定する。

    Args:
        ops: FOM 演算子
        rhs: 右辺
        scale: 両立条件の基準となる大きさ（None なら ‖rhs‖_1）。発散から作った右辺では
            divergence_scale を渡す

    Raises:
        SolverError: 特異ケースで rhs が両立しない、または解が有限でない場合
    """
    require_length('rhs', rhs, ops.n_p)
    solve = _poisson_solver(ops)

    if ops.singular_poisson:
        reference = max(np.abs(rhs).sum(), scale or 0.0)
        if abs(rhs.sum()) > PPE_COMPAT_RTOL * reference + np.finfo(float).tiny:
            raise SolverError(f"Poisson右辺が両立条件を満たしません: sum={rhs.sum():.3e}, "
                              f"scale={reference:.3e}")
        p = solve(np.append(rhs - rhs.mean(), 0.0))[:ops.n_p]
        p -= p.mean()
    else:
        p = solve(rhs)

    if not np.all(np.isfinite(p)):
        raise SolverError("Poisson方程式の解が有限ではありません")
    return p


def project_velocity(ops: FomOperators, V: np.ndarray, y_M: Optional[np.ndarray] = None) -> np.ndarray:
    """V を M V = y_M（既定は ops.y_M）を満たす場に射影（Poisson 1回）"""
    y_M = ops.y_M if y_M is None else y_M
    phi = ppe_solve(ops, ops.M @ V - y_M, scale=divergence_scale(ops, V))
    return V - (ops.G @ phi) / ops.omega


def pressure_from_velocity(ops: FomOperators, V: np.ndarray, t: float, nu: float,
                           include_convection: bool = True) -> np.ndarray:
    """L p = M Ω^{-1} (F^CD(V, t) - y_G) から圧力を求める"""
    F = fom_rhs_cd(ops, V, t, nu, include_convection)
    acceleration = (F - ops.y_G) / ops.omega
    return ppe_solve(ops, ops.M @ acceleration, scale=divergence_scale(ops, acceleration))


def step_erk4(ops: FomOperators, state: StateVector, cfg: IntegratorConfig, nu: float,
              include_convection: bool = True) -> StateVector:
    """
    陽的 RK4 の1ステップ

    各段で運動量を陽に更新した後に圧力射影を行い、段の速度は M V = y_M を満たす。
    終端の圧力は新しい速度から Poisson 方程式で求める。
    """
    dt, V_n, t_n = cfg.dt, state.V, state.t
    stages = []
    V_i = V_n

    for i in range(len(RK4_B)):
        if i > 0:
            increment = sum(RK4_A[i, j] * stages[j] for j in range(i) if RK4_A[i, j] != 0.0)
            V_i = project_velocity(ops, V_n + dt * increment / ops.omega)
        F_i = fom_rhs_cd(ops, V_i, t_n + RK4_C[i] * dt, nu, include_convection) - ops.y_G
        stages.append(F_i)

    increment = sum(b * F for b, F in zip(RK4_B, stages))
    V_new = project_velocity(ops, V_n + dt * increment / ops.omega)
    t_new = t_n + dt
    p_new = pressure_from_velocity(ops, V_new, t_new, nu, include_convection)
    return StateVector(V_new, p_new, t_new)


def solve_midpoint_stage(ops: FomOperators, state: StateVector, cfg: IntegratorConfig, nu: float,
                         include_convection: bool = True) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    陰的中点則の段方程式を Newton 法で解く

    未知数は段速度 V1 と段圧力 p1:
        Ω(V1 - V^n) - (Δt/2)(F(V1) - G p1 - y_G) = 0
        M V1 - y_M = 0
    初期値は前時刻の値。L が特異なら p1 の総和ゼロの拘束で縁取る。

    Returns:
        (V1, p1, Newton反復回数)

    Raises:
        SolverError: newton_max_iter 回で収束しない場合
    """
    dt, t_half = cfg.dt, state.t + 0.5 * cfg.dt
    n_V, n_p = ops.n_V, ops.n_p
    omega = ops.omega
    V1 = state.V.copy()
    p1 = state.p.copy() if state.p is not None and len(state.p) == n_p else np.zeros(n_p)
    singular = ops.singular_poisson
    ones = sp.csr_matrix(np.ones((n_p, 1)))

    for iteration in range(cfg.newton_max_iter + 1):
        F = fom_rhs_cd(ops, V1, t_half, nu, include_convection)
        r_mom = omega * (V1 - state.V) - 0.5 * dt * (F - ops.G @ p1 - ops.y_G)
        r_mass = ops.M @ V1 - ops.y_M
        residual = max(np.abs(r_mom).max(), np.abs(r_mass).max())
        if residual <= cfg.newton_tol:
            logger.debug(f"中点則Newton収束: iter={iteration}, residual={residual:.3e}")
            return V1, p1, iteration
        if iteration == cfg.newton_max_iter:
            break

        J_F = nu * ops.D
        if include_convection:
            J_F = J_F - convection_jacobian(ops, V1)
        A11 = ops.Omega - 0.5 * dt * J_F
        if singular:
            system = sp.bmat([
                [A11, 0.5 * dt * ops.G, None],
                [ops.M, None, ones],
                [None, ones.T, None],
            ], format='csc')
            rhs = np.concatenate([-r_mom, -r_mass, [-p1.sum()]])
        else:
            system = sp.bmat([[A11, 0.5 * dt * ops.G], [ops.M, None]], format='csc')
            rhs = np.concatenate([-r_mom, -r_mass])

        delta = splu(system).solve(rhs)
        if not np.all(np.isfinite(delta)):
            raise SolverError("中点則Newton更新が有限ではありません")
        V1 = V1 + delta[:n_V]
        p1 = p1 + delta[n_V:n_V + n_p]

    raise SolverError(f"中点則Newton法が{cfg.newton_max_iter}回で収束しませんでした "
                      f"(residual={residual:.3e}, t={state.t:.6g})")


def step_implicit_midpoint(ops: FomOperators, state: StateVector, cfg: IntegratorConfig, nu: float,
                           include_convection: bool = True) -> StateVector:
    """
    陰的中点則の1ステップ（V^{n+1} = 2 V1 - V^n）

    非粘性・外力なし・斉次境界では離散運動エネルギーを保存する。
    """
    V1, _, _ = solve_midpoint_stage(ops, state, cfg, nu, include_convection)
    V_new = 2.0 * V1 - state.V
    t_new = state.t + cfg.dt
    p_new = pressure_from_velocity(ops, V_new, t_new, nu, include_convection)
    return StateVector(V_new, p_new, t_new)


def run_fom(ops: FomOperators, init: StateVector, cfg: IntegratorConfig, nu: float,
            V_bc: Optional[np.ndarray] = None, include_convection: bool = True) -> SnapshotSet:
    """
    t_end まで時間発展し、t=0 と snapshot_stride ステップごとの状態を保存

    Args:
        ops: FOM 演算子
        init: 初期状態
        cfg: 時間積分設定
        nu: 動粘性係数
        V_bc: リフティング場（None なら y_M から計算）
        include_convection: False で Stokes 方程式

    Returns:
        SnapshotSet: V_bc を差し引いた速度と終端圧力のスナップショット
    """
    IntegratorValidator.validate(cfg)
    require_length('V0', init.V, ops.n_V)
    if V_bc is None:
        from backend.utils.pod_basis import compute_lifting
        V_bc = compute_lifting(ops, ops.y_M)

    stepper = step_implicit_midpoint if cfg.method is TimeIntegrator.IMPLICIT_MIDPOINT else step_erk4
    n_steps = cfg.n_steps
    n_snap = n_steps // cfg.snapshot_stride + 1

    t0 = init.t
    p0 = pressure_from_velocity(ops, init.V, t0, nu, include_convection)
    state = StateVector(init.V.copy(), p0, t0)

    X = np.empty((ops.n_V, n_snap))
    P = np.empty((ops.n_p, n_snap))
    times = np.empty(n_snap)
    X[:, 0], P[:, 0], times[0] = state.V - V_bc, state.p, t0

    logger.info(f"FOM時間積分開始: method={cfg.method.value}, dt={cfg.dt}, steps={n_steps}, K={n_snap}")
    col = 1
    for n in range(1, n_steps + 1):
        state = stepper(ops, state, cfg, nu, include_convection)
        state.t = t0 + n * cfg.dt
        if not np.all(np.isfinite(state.V)):
            raise SolverError(f"FOM解が発散しました (step={n}, t={state.t:.6g})")
        if n % cfg.snapshot_stride == 0:
            X[:, col], P[:, col], times[col] = state.V - V_bc, state.p, state.t
            col += 1

    logger.info(f"FOM時間積分完了: K={n_snap}, div={np.abs(ops.M @ state.V - ops.y_M).max():.3e}")
    snapshots = SnapshotSet(X=X, P=P, times=times, V_bc=V_bc, nu=nu)
    validate_snapshots(ops, snapshots)
    return snapshots


def kinetic_energy(ops: FomOperators, V: np.ndarray) -> float:
    """K = ½ V^T Ω V"""
    return 0.5 * float(V @ (ops.omega * V))


def momentum(ops: FomOperators, V: np.ndarray) -> Tuple[float, float]:
    """(P_u, P_v) = (e_u^T Ω V, e_v^T Ω V)"""
    weighted = ops.omega * V
    return float(weighted[:ops.n_u].sum()), float(weighted[ops.n_u:].sum())


def validate_snapshots(ops: FomOperators, snapshots: SnapshotSet) -> None:
    """
    スナップショットの整合性チェック（発散ゼロ・時刻の単調増加）

    Raises:
        ValidationError: 条件を満たさない場合
    """
    if snapshots.K < 1:
        raise ValidationError("スナップショットがありません")
    if np.any(np.diff(snapshots.times) <= 0.0):
        raise ValidationError("スナップショット時刻が単調増加ではありません")
    m_norm = sparse_norm(ops.M, np.inf)
    homogeneous_y = ops.M @ snapshots.V_bc - ops.y_M
    for j in range(snapshots.K):
        X_j = snapshots.X[:, j]
        residual = np.abs(ops.M @ X_j + homogeneous_y).max()
        if residual > 1e-10 * m_norm * max(np.abs(X_j).max(), 1.0):
            raise ValidationError(f"スナップショット{j}が発散ゼロ条件を満たしません: {residual:.3e}")
