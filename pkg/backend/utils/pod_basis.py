"""
Ω 重み付き POD 基底とリフティング場

速度基底は X̂ = Ω^{1/2} X の薄い SVD から Φ = Ω^{-1/2} Û として作る。
運動量拘束つきの場合は拘束ベクトル E を先に基底へ入れ、スナップショットから
E 成分を除いてから SVD する。
"""
import logging
from typing import Optional

import numpy as np
import scipy.linalg as sla

from backend.models.grid import GridSpec
from backend.models.operators import FomOperators, diagonal_weights
from backend.models.snapshots import PodModes, RomBasis
from backend.utils.error_helpers import SolverError, ValidationError, require_length

logger = logging.getLogger(__name__)

# σ_j / σ_1 がこれ未満のモードは捨てる
SVD_RTOL = 1e-13
# スナップショット法は固有値の平方根を取るため分解能が粗い
SNAPSHOTS_RTOL = 1e-7
# 拘束ベクトルの一次独立性の判定
CONSTRAINT_RTOL = 1e-10


def compute_lifting(ops: FomOperators, y_M: Optional[np.ndarray] = None) -> np.ndarray:
    """
    リフティング場 V_bc = Ω^{-1} G ζ（L ζ = y_M）

    Args:
        ops: FOM 演算子
        y_M: 発散の境界ベクトル（None なら ops.y_M）

    Returns:
        np.ndarray: M V_bc = y_M を満たす定常場
    """
    from backend.utils.fom_solver import ppe_solve

    y_M = ops.y_M if y_M is None else y_M
    require_length('y_M', y_M, ops.n_p)
    if not np.any(y_M):
        return np.zeros(ops.n_V)

    zeta = ppe_solve(ops, y_M)
    V_bc = (ops.G @ zeta) / ops.omega
    residual = np.abs(ops.M @ V_bc - y_M).max()
    logger.info(f"リフティング場を計算しました: |M V_bc - y_M|_inf={residual:.3e}")
    return V_bc


def _fix_signs(U: np.ndarray) -> np.ndarray:
    """各列の絶対値最大成分が正になるよう符号をそろえる"""
    if U.size == 0:
        return U
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0.0] = 1.0
    return U * signs


def _scaled_svd(X_hat: np.ndarray, method: str):
    if method == 'svd':
        U, s, _ = sla.svd(X_hat, full_matrices=False)
        rtol = SVD_RTOL
    elif method == 'snapshots':
        gram = X_hat.T @ X_hat
        evals, V = sla.eigh(gram)
        evals, V = evals[::-1], V[:, ::-1]
        s = np.sqrt(np.clip(evals, 0.0, None))
        rtol = SNAPSHOTS_RTOL
        keep = s > rtol * s[0] if s.size and s[0] > 0.0 else np.zeros_like(s, dtype=bool)
        U = (X_hat @ V[:, keep]) / s[keep]
        s = s[keep]
    else:
        raise ValidationError(f"未知のPOD手法です: {method}")

    if s.size == 0 or s[0] == 0.0:
        return U[:, :0], s[:0]
    keep = s >= rtol * s[0]
    return U[:, keep], s[keep]


def weighted_pod(X: np.ndarray, omega: np.ndarray, M: int, method: str = 'svd') -> PodModes:
    """
    Ω 重み付き POD

    Args:
        X: N×K スナップショット行列
        omega: 重み（Ω の対角成分、または対角疎行列）
        M: 取り出すモード数
        method: 'svd'（既定）または 'snapshots'（X̂^T X̂ の固有値分解）

    Returns:
        PodModes: Φ（N×M、Φ^T Ω Φ = I）と数値ランク分の特異値

    Raises:
        SolverError: M が数値ランクを超える場合
    """
    omega = diagonal_weights(omega)
    require_length('omega', omega, X.shape[0])
    if M < 0:
        raise ValidationError(f"モード数が負です: {M}")
    sqrt_w = np.sqrt(omega)

    U, s = _scaled_svd(sqrt_w[:, None] * X, method)
    if M > s.size:
        raise SolverError(f"モード数{M}が数値ランク{s.size}を超えています")

    U = _fix_signs(U[:, :M])
    logger.debug(f"重み付きPOD: K={X.shape[1]}, rank={s.size}, M={M}, method={method}")
    return PodModes(modes=U / sqrt_w[:, None], sigma=s)


def normalize_constraints(E_raw: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """
    E^T Ω E = I となるよう拘束行列を正規化（Cholesky）

    Raises:
        ValidationError: Ω^{1/2} E_raw の最小特異値が最大値の CONSTRAINT_RTOL 倍以下の場合
    """
    omega = diagonal_weights(omega)
    require_length('omega', omega, E_raw.shape[0])
    s = sla.svdvals(np.sqrt(omega)[:, None] * E_raw)
    if s.size == 0 or s[-1] <= CONSTRAINT_RTOL * s[0]:
        raise ValidationError("拘束ベクトルが一次独立ではありません")
    R = sla.cholesky(E_raw.T @ (omega[:, None] * E_raw), lower=False)
    return sla.solve_triangular(R, E_raw.T, trans='T', lower=False).T


def constrained_pod(X: np.ndarray, omega: np.ndarray, E_raw: np.ndarray, M: int,
                    method: str = 'svd'):
    """
    運動量拘束つき POD

    E を Ω 正規化し、X̃ = X - E E^T Ω X の重み付き SVD から Φ = [E Φ̃] を作る。

    Returns:
        (PodModes, E): Φ（先頭 n_c 列が E）と正規化済み E

    Raises:
        ValidationError: M < n_c の場合
        SolverError: M - n_c が X̃ の数値ランクを超える場合
    """
    omega = diagonal_weights(omega)
    n_c = E_raw.shape[1]
    if M < n_c:
        raise ValidationError(f"拘束つきPODではM>=n_c({n_c})が必要です: M={M}")

    E = normalize_constraints(E_raw, omega)
    X_tilde = X - E @ (E.T @ (omega[:, None] * X))
    if M == n_c:
        sigma = weighted_pod(X_tilde, omega, 0, method).sigma
        return PodModes(modes=E.copy(), sigma=sigma), E

    inner = weighted_pod(X_tilde, omega, M - n_c, method)
    logger.debug(f"拘束つきPOD: n_c={n_c}, M={M}")
    return PodModes(modes=np.hstack([E, inner.modes]), sigma=inner.sigma), E


def momentum_constraints(ops: FomOperators) -> np.ndarray:
    """
    全運動量の拘束ベクトル [e_u, e_v]

    Raises:
        ValidationError: 完全周期格子でない場合
    """
    grid: GridSpec = ops.grid
    if not grid.fully_periodic:
        raise ValidationError("運動量拘束は完全周期格子でのみ有効です")
    return np.column_stack([ops.e_u(), ops.e_v()])


def build_constraint_matrix(ops: FomOperators, energy_field: Optional[np.ndarray] = None) -> np.ndarray:
    """運動量拘束に初期速度場（エネルギー拘束）を任意で追加した E_raw"""
    E = momentum_constraints(ops)
    if energy_field is not None:
        require_length('energy_field', energy_field, ops.n_V)
        E = np.column_stack([E, energy_field])
    return E


def solenoidal_modes(ops: FomOperators, Phi: np.ndarray, n_fixed: int = 0) -> np.ndarray:
    """
    速度モードを ker(M) へ Ω 直交射影し、Ω 正規直交に戻す

    先頭 n_fixed 列（拘束ベクトル E）はそのまま残し、残りの列は E に対して直交化する。
    j 列目は先頭 j 列の張る空間だけから作るため、M を増やしても前の列は変わらない。

    Args:
        ops: FOM 演算子
        Phi: N_V×M の Ω 正規直交基底（同次部分なので M Φ ≈ 0）
        n_fixed: 変更しない先頭列数

    Returns:
        np.ndarray: M Φ = 0 を丸め誤差まで満たす基底
    """
    from backend.utils.fom_solver import project_velocity

    require_length('Phi', Phi, ops.n_V)
    if Phi.shape[1] <= n_fixed:
        return Phi
    omega = ops.omega
    zero = np.zeros(ops.n_p)
    fixed = Phi[:, :n_fixed]
    free = np.column_stack([project_velocity(ops, phi, y_M=zero) for phi in Phi[:, n_fixed:].T])
    free -= fixed @ (fixed.T @ (omega[:, None] * free))

    try:
        R = sla.cholesky(free.T @ (omega[:, None] * free), lower=False)
    except sla.LinAlgError:
        raise SolverError("射影後の速度モードが一次独立ではありません")
    free = sla.solve_triangular(R, free.T, trans='T', lower=False).T
    logger.debug(f"速度モードを発散ゼロ空間へ射影: |M Phi|_inf={np.abs(ops.M @ free).max():.3e}")
    return np.hstack([fixed, free])


def pressure_pod(P: np.ndarray, omega_p: np.ndarray, M_p: int, method: str = 'svd') -> np.ndarray:
    """Ω_p 重み付き圧力基底 Π（Π^T Ω_p Π = I）"""
    return weighted_pod(P, omega_p, M_p, method).modes


def build_rom_basis(ops: FomOperators, X: np.ndarray, P: np.ndarray, M: int, M_p: int,
                    constrained: bool = False, E_raw: Optional[np.ndarray] = None,
                    method: str = 'svd') -> RomBasis:
    """
    速度・圧力基底をまとめて作る

    Args:
        ops: FOM 演算子
        X: 速度スナップショット（V_bc 差し引き済み）
        P: 圧力スナップショット
        M: 速度モード数
        M_p: 圧力モード数
        constrained: 運動量拘束つきにするか
        E_raw: 拘束行列（None なら [e_u, e_v]）
        method: POD 手法

    Returns:
        RomBasis: 速度・圧力基底
    """
    if constrained:
        E_raw = momentum_constraints(ops) if E_raw is None else E_raw
        velocity, E = constrained_pod(X, ops.omega, E_raw, M, method)
    else:
        velocity, E = weighted_pod(X, ops.omega, M, method), np.zeros((ops.n_V, 0))

    Phi = solenoidal_modes(ops, velocity.modes, E.shape[1])
    Pi = pressure_pod(P, ops.omega_p, M_p, method)
    logger.info(f"ROM基底を構築: M={M}, M_p={M_p}, n_c={E.shape[1]}, "
                f"sigma_1={velocity.sigma[0] if velocity.sigma.size else 0.0:.6g}")
    return RomBasis(Phi=Phi, Pi=Pi, sigma=velocity.sigma[:M], E=E)


def initial_coeffs(basis: RomBasis, omega: np.ndarray, V0: np.ndarray, V_bc: np.ndarray) -> np.ndarray:
    """a(0) = Φ^T Ω (V0 - V_bc)"""
    omega = diagonal_weights(omega)
    require_length('V0', V0, basis.n_V)
    require_length('V_bc', V_bc, basis.n_V)
    return basis.Phi.T @ (omega * (V0 - V_bc))
