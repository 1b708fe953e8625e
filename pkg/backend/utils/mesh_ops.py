"""
スタガード格子上の FOM 演算子組み立て

圧力はセル中心 (i, j)、u は x 面 k = 0..nx、v は y 面 l = 0..ny に置く。
発散 M と勾配 G = -M^T、体積 Ω、拡散 D = -Q^T Q、対流の3因子 K, I, A を
疎行列として組み立てる。組み立て順は固定で、同じ入力からは同じ配列が得られる。
"""
import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from backend.models.grid import GridSpec
from backend.models.operators import ActuatorDisk, BodyForce, FomOperators
from backend.utils.error_helpers import ValidationError, require_length
from backend.utils.validators import validate_grid

logger = logging.getLogger(__name__)

# 面に関する1行分: ([(列, 係数)], 既知値の寄与)
FaceRow = Tuple[List[Tuple[int, float]], float]


class _Triplets:
    """COO 形式の組み立てバッファ"""

    def __init__(self):
        self.rows: List[int] = []
        self.cols: List[int] = []
        self.vals: List[float] = []

    def add(self, row: int, col: int, value: float) -> None:
        self.rows.append(row)
        self.cols.append(col)
        self.vals.append(value)

    def tocsr(self, shape: Tuple[int, int]) -> sp.csr_matrix:
        mat = sp.coo_matrix(
            (np.asarray(self.vals, dtype=float),
             (np.asarray(self.rows, dtype=np.int64), np.asarray(self.cols, dtype=np.int64))),
            shape=shape,
        ).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat


def build_grid(spec: GridSpec) -> GridSpec:
    """
    格子仕様の検証

    Args:
        spec: 格子仕様

    Returns:
        GridSpec: 検証済みの格子（Δx, Δy はプロパティとして導出）

    Raises:
        ValidationError: 分割数が2未満、周期境界の対応不一致、領域幅がゼロの場合
    """
    validate_grid(spec)
    logger.debug(f"格子を構築: {spec.nx}x{spec.ny}, dx={spec.dx:.6g}, dy={spec.dy:.6g}, "
                 f"N_V={spec.n_V}, N_p={spec.n_p}")
    return spec


# ---------------------------------------------------------------------------
# 発散・勾配
# ---------------------------------------------------------------------------

def _u_face(grid: GridSpec, k: int, j: int) -> Tuple[Optional[int], float]:
    idx = grid.u_index(k, j)
    return (idx, 0.0) if idx is not None else (None, grid.known_u(k, j))


def _v_face(grid: GridSpec, i: int, l: int) -> Tuple[Optional[int], float]:
    idx = grid.v_index(i, l)
    return (idx, 0.0) if idx is not None else (None, grid.known_v(i, l))


def assemble_divergence(grid: GridSpec) -> Tuple[sp.csr_matrix, np.ndarray]:
    """
    発散演算子 M と境界ベクトル y_M

    各行は圧力体積の面フラックス和（u 面は ±Δy、v 面は ±Δx）。既知の法線速度は
    符号を反転して y_M に移し、非圧縮条件は M V = y_M となる。
    """
    dx, dy = grid.dx, grid.dy
    trip = _Triplets()
    y_M = np.zeros(grid.n_p)

    for j in range(grid.ny):
        for i in range(grid.nx):
            c = j * grid.nx + i
            faces = (
                (_u_face(grid, i + 1, j), dy),
                (_u_face(grid, i, j), -dy),
                (_v_face(grid, i, j + 1), dx),
                (_v_face(grid, i, j), -dx),
            )
            for (idx, known), coeff in faces:
                if idx is not None:
                    trip.add(c, idx, coeff)
                else:
                    y_M[c] -= coeff * known

    return trip.tocsr((grid.n_p, grid.n_V)), y_M


def assemble_gradient(M: sp.csr_matrix, grid: GridSpec) -> Tuple[sp.csr_matrix, np.ndarray]:
    """
    勾配演算子 G = -M^T と流出境界の圧力寄与 y_G

    y_G は流出面で p_inf × 面積 × 外向き符号。
    """
    G = (-M.T).tocsr()
    y_G = np.zeros(grid.n_V)

    if grid.bc_west.is_outflow or grid.bc_east.is_outflow:
        for j in range(grid.ny):
            if grid.bc_west.is_outflow:
                y_G[grid.u_index(0, j)] = -grid.dy * grid.bc_west.p_inf
            if grid.bc_east.is_outflow:
                y_G[grid.u_index(grid.nx, j)] = grid.dy * grid.bc_east.p_inf

    if grid.bc_south.is_outflow or grid.bc_north.is_outflow:
        for i in range(grid.nx):
            if grid.bc_south.is_outflow:
                y_G[grid.v_index(i, 0)] = -grid.dx * grid.bc_south.p_inf
            if grid.bc_north.is_outflow:
                y_G[grid.v_index(i, grid.ny)] = grid.dx * grid.bc_north.p_inf

    return G, y_G


# ---------------------------------------------------------------------------
# 拡散
# ---------------------------------------------------------------------------

class _RowBuilder:
    """Q の行と既知値 y_Q を同時に積み上げる"""

    def __init__(self):
        self.trip = _Triplets()
        self.offsets: List[float] = []

    def add_row(self, terms: List[Tuple[Optional[int], float, float]]) -> None:
        """terms: (未知数番号 or None, 係数, 既知値)"""
        if all(idx is None for idx, _, _ in terms):
            return
        row = len(self.offsets)
        offset = 0.0
        for idx, coeff, known in terms:
            if idx is None:
                offset += coeff * known
            else:
                self.trip.add(row, idx, coeff)
        self.offsets.append(offset)


def assemble_diffusion(grid: GridSpec) -> Tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray, np.ndarray]:
    """
    拡散演算子 D = -Q^T Q とその境界寄与

    Q の各行は隣接面の差分 × sqrt(面長 / 距離)。壁の接線方向既知値は半セル距離、
    法線方向既知値はセル幅を使う。流出境界の外側には行を作らない（拡散フラックス0）。

    Returns:
        (D, Q, y_D, y_Q): D V + y_D = -Q^T (Q V + y_Q)
    """
    dx, dy = grid.dx, grid.dy
    rb = _RowBuilder()
    c_ux = np.sqrt(dy / dx)
    c_uy = np.sqrt(dx / dy)
    c_uy_wall = np.sqrt(2.0 * dx / dy)
    c_vy = np.sqrt(dx / dy)
    c_vx = np.sqrt(dy / dx)
    c_vx_wall = np.sqrt(2.0 * dy / dx)

    # u: x 方向差分（セル中心）
    for j in range(grid.ny):
        for i in range(grid.nx):
            (iw, uw), (ie, ue) = _u_face(grid, i, j), _u_face(grid, i + 1, j)
            rb.add_row([(ie, c_ux, ue), (iw, -c_ux, uw)])

    # u: y 方向差分（格子点）
    l_range = range(grid.ny) if grid.periodic_y else range(grid.ny + 1)
    for k in range(grid.k_first, grid.k_last + 1):
        for l in l_range:
            if grid.periodic_y or 0 < l < grid.ny:
                rb.add_row([(grid.u_index(k, l), c_uy, 0.0),
                            (grid.u_index(k, l - 1), -c_uy, 0.0)])
            elif l == 0 and grid.bc_south.is_wall:
                u_wall = grid.bc_south.value(grid.x_face(k))[0]
                rb.add_row([(grid.u_index(k, 0), c_uy_wall, 0.0), (None, -c_uy_wall, u_wall)])
            elif l == grid.ny and grid.bc_north.is_wall:
                u_wall = grid.bc_north.value(grid.x_face(k))[0]
                rb.add_row([(None, c_uy_wall, u_wall), (grid.u_index(k, grid.ny - 1), -c_uy_wall, 0.0)])

    # v: y 方向差分（セル中心）
    for j in range(grid.ny):
        for i in range(grid.nx):
            (i_s, vs), (i_n, vn) = _v_face(grid, i, j), _v_face(grid, i, j + 1)
            rb.add_row([(i_n, c_vy, vn), (i_s, -c_vy, vs)])

    # v: x 方向差分（格子点）
    k_range = range(grid.nx) if grid.periodic_x else range(grid.nx + 1)
    for l in range(grid.l_first, grid.l_last + 1):
        for k in k_range:
            if grid.periodic_x or 0 < k < grid.nx:
                rb.add_row([(grid.v_index(k, l), c_vx, 0.0),
                            (grid.v_index(k - 1, l), -c_vx, 0.0)])
            elif k == 0 and grid.bc_west.is_wall:
                v_wall = grid.bc_west.value(grid.y_face(l))[1]
                rb.add_row([(grid.v_index(0, l), c_vx_wall, 0.0), (None, -c_vx_wall, v_wall)])
            elif k == grid.nx and grid.bc_east.is_wall:
                v_wall = grid.bc_east.value(grid.y_face(l))[1]
                rb.add_row([(None, c_vx_wall, v_wall), (grid.v_index(grid.nx - 1, l), -c_vx_wall, 0.0)])

    y_Q = np.asarray(rb.offsets, dtype=float)
    Q = rb.trip.tocsr((len(y_Q), grid.n_V))
    QT = Q.T.tocsr()
    D = (-(QT @ Q)).tocsr()
    y_D = -(QT @ y_Q)
    return D, Q, y_D, y_Q


# ---------------------------------------------------------------------------
# 対流
# ---------------------------------------------------------------------------

class _FaceFamilies:
    """対流フラックス面の重複排除付き登録表"""

    def __init__(self, n_V: int):
        self.n_V = n_V
        self.index: Dict[tuple, int] = {}
        self.I_trip = _Triplets()
        self.A_trip = _Triplets()
        self.K_trip = _Triplets()
        self.y_I: List[float] = []
        self.y_A: List[float] = []

    def face(self, key: tuple, build: Callable[[], Tuple[FaceRow, FaceRow]]) -> int:
        if key in self.index:
            return self.index[key]
        f = len(self.y_I)
        self.index[key] = f
        (i_terms, i_known), (a_terms, a_known) = build()
        for col, coeff in i_terms:
            self.I_trip.add(f, col, coeff)
        for col, coeff in a_terms:
            self.A_trip.add(f, col, coeff)
        self.y_I.append(i_known)
        self.y_A.append(a_known)
        return f

    def attach(self, volume: int, face: int, sign: float) -> None:
        self.K_trip.add(volume, face, sign)

    def finish(self):
        n_F = len(self.y_I)
        K = self.K_trip.tocsr((self.n_V, n_F))
        I_op = self.I_trip.tocsr((n_F, self.n_V))
        A_op = self.A_trip.tocsr((n_F, self.n_V))
        return K, I_op, A_op, np.asarray(self.y_I), np.asarray(self.y_A)


def _average(entries: List[Tuple[Optional[int], float]], scale: float) -> FaceRow:
    """未知数/既知値の等重み平均 × scale"""
    w = scale / len(entries)
    terms = [(idx, w) for idx, _ in entries if idx is not None]
    known = sum(w * val for idx, val in entries if idx is None)
    return terms, known


def _ux_face(grid: GridSpec, i: int, j: int) -> Tuple[FaceRow, FaceRow]:
    # セル中心 (i, j): 両側の u 面の平均
    if not grid.periodic_x and (i < 0 or i >= grid.nx):
        idx = grid.u_index(0 if i < 0 else grid.nx, j)
        return ([(idx, grid.dy)], 0.0), ([(idx, 1.0)], 0.0)
    entries = [_u_face(grid, i, j), _u_face(grid, i + 1, j)]
    return _average(entries, grid.dy), _average(entries, 1.0)


def _vy_face(grid: GridSpec, i: int, j: int) -> Tuple[FaceRow, FaceRow]:
    if not grid.periodic_y and (j < 0 or j >= grid.ny):
        idx = grid.v_index(i, 0 if j < 0 else grid.ny)
        return ([(idx, grid.dx)], 0.0), ([(idx, 1.0)], 0.0)
    entries = [_v_face(grid, i, j), _v_face(grid, i, j + 1)]
    return _average(entries, grid.dx), _average(entries, 1.0)


def _uy_face(grid: GridSpec, k: int, l: int) -> Tuple[FaceRow, FaceRow]:
    # 格子点 (k, l): 運ぶ側は左右の v 面、運ばれる側は上下の u 面
    cols = [k - 1, k] if grid.periodic_x else [i for i in (k - 1, k) if 0 <= i < grid.nx]
    convecting = _average([_v_face(grid, i, l) for i in cols], grid.dx)

    if grid.periodic_y or 0 < l < grid.ny:
        convected = _average([(grid.u_index(k, l - 1), 0.0), (grid.u_index(k, l), 0.0)], 1.0)
    else:
        bc, j = (grid.bc_south, 0) if l == 0 else (grid.bc_north, grid.ny - 1)
        if bc.is_outflow:
            convected = ([(grid.u_index(k, j), 1.0)], 0.0)
        else:
            convected = ([], bc.value(grid.x_face(k))[0])
    return convecting, convected


def _vx_face(grid: GridSpec, k: int, l: int) -> Tuple[FaceRow, FaceRow]:
    rows = [l - 1, l] if grid.periodic_y else [j for j in (l - 1, l) if 0 <= j < grid.ny]
    convecting = _average([_u_face(grid, k, j) for j in rows], grid.dy)

    if grid.periodic_x or 0 < k < grid.nx:
        convected = _average([(grid.v_index(k - 1, l), 0.0), (grid.v_index(k, l), 0.0)], 1.0)
    else:
        bc, i = (grid.bc_west, 0) if k == 0 else (grid.bc_east, grid.nx - 1)
        if bc.is_outflow:
            convected = ([(grid.v_index(i, l), 1.0)], 0.0)
        else:
            convected = ([], bc.value(grid.y_face(l))[1])
    return convecting, convected


def assemble_convection_parts(grid: GridSpec):
    """
    対流 C(V_c, V_u) = K((I V_c + y_I) ∘ (A V_u + y_A)) の3因子

    面は4族（u の x 面・y 面、v の x 面・y 面）。補間は重み 1/2 の算術平均。
    流出境界の外側の面では保持している未知数そのものを使う。

    Returns:
        (K, I_op, A_op, y_I, y_A)
    """
    fam = _FaceFamilies(grid.n_V)
    wrap_i, wrap_j = grid.wrap_i, grid.wrap_j

    for idx, k, j in grid.u_unknowns():
        east = fam.face(('ux', wrap_i(k), j), lambda i=wrap_i(k): _ux_face(grid, i, j))
        west = fam.face(('ux', wrap_i(k - 1), j), lambda i=wrap_i(k - 1): _ux_face(grid, i, j))
        north = fam.face(('uy', k, wrap_j(j + 1)), lambda l=wrap_j(j + 1): _uy_face(grid, k, l))
        south = fam.face(('uy', k, j), lambda: _uy_face(grid, k, j))
        fam.attach(idx, east, 1.0)
        fam.attach(idx, west, -1.0)
        fam.attach(idx, north, 1.0)
        fam.attach(idx, south, -1.0)

    for idx, i, l in grid.v_unknowns():
        east = fam.face(('vx', wrap_i(i + 1), l), lambda k=wrap_i(i + 1): _vx_face(grid, k, l))
        west = fam.face(('vx', i, l), lambda: _vx_face(grid, i, l))
        north = fam.face(('vy', i, wrap_j(l)), lambda j=wrap_j(l): _vy_face(grid, i, j))
        south = fam.face(('vy', i, wrap_j(l - 1)), lambda j=wrap_j(l - 1): _vy_face(grid, i, j))
        fam.attach(idx, east, 1.0)
        fam.attach(idx, west, -1.0)
        fam.attach(idx, north, 1.0)
        fam.attach(idx, south, -1.0)

    K, I_op, A_op, y_I, y_A = fam.finish()
    logger.debug(f"対流面数 N_F={K.shape[1]}")
    return K, I_op, A_op, y_I, y_A


def convection(ops: FomOperators, V_c: np.ndarray, V_u: np.ndarray) -> np.ndarray:
    """
    対流項 K((I V_c + y_I) ∘ (A V_u + y_A))

    第1引数が運ぶ側（convecting）、第2引数が運ばれる側（convected）。

    Raises:
        ValidationError: ベクトル長が N_V と一致しない場合
    """
    require_length('V_c', V_c, ops.n_V)
    require_length('V_u', V_u, ops.n_V)
    flux = ops.I_op @ V_c + ops.y_I
    value = ops.A_op @ V_u + ops.y_A
    return ops.K @ (flux * value)


def convection_matrix(ops: FomOperators, V_c: np.ndarray) -> sp.csr_matrix:
    """
    線形化対流行列 C̃(V_c) = K diag(I V_c) A

    V_c が離散的に発散ゼロなら周期格子で歪対称になる。

    Raises:
        ValidationError: 流出・流入境界を含む格子の場合
    """
    require_length('V_c', V_c, ops.n_V)
    if ops.grid.has_outflow or np.any(ops.y_I) or np.any(ops.y_M):
        raise ValidationError("対流行列は周期またはno-slip境界の格子でのみ利用できます")
    return (ops.K @ sp.diags(ops.I_op @ V_c) @ ops.A_op).tocsr()


def convection_jacobian(ops: FomOperators, V: np.ndarray) -> sp.csr_matrix:
    """C(V, V) の V に関する厳密ヤコビアン"""
    require_length('V', V, ops.n_V)
    flux = ops.I_op @ V + ops.y_I
    value = ops.A_op @ V + ops.y_A
    jac = ops.K @ sp.diags(value) @ ops.I_op + ops.K @ sp.diags(flux) @ ops.A_op
    return jac.tocsr()


# ---------------------------------------------------------------------------
# 体積力・全体の組み立て
# ---------------------------------------------------------------------------

def assemble_body_force(grid: GridSpec, actuator: Optional[ActuatorDisk],
                        time_factor: str = 'one_plus_sin_pi') -> BodyForce:
    """
    アクチュエータディスクの体積力

    ディスクが交差する行の u 未知数に -C_T Δy を置く。時間係数 g(t) は別に保持する。

    Raises:
        ValidationError: 線分が領域外、または既知速度面に乗る場合
    """
    spatial = np.zeros(grid.n_V)
    if actuator is None:
        return BodyForce(spatial, time_factor)

    (x_lo, x_hi), (y_lo, y_hi) = grid.x_range, grid.y_range
    if not (x_lo <= actuator.x0 <= x_hi and y_lo <= actuator.y_min <= actuator.y_max <= y_hi):
        raise ValidationError(f"アクチュエータが領域外です: {actuator}")
    if actuator.C_T == 0.0:
        return BodyForce(spatial, time_factor)

    k = int(round((actuator.x0 - x_lo) / grid.dx))
    for j in range(grid.ny):
        y_c = grid.y_center(j)
        overlap = min(y_c + 0.5 * grid.dy, actuator.y_max) - max(y_c - 0.5 * grid.dy, actuator.y_min)
        if overlap <= 1e-12 * grid.dy:
            continue
        idx = grid.u_index(k, j)
        if idx is None:
            raise ValidationError("アクチュエータが既知速度の境界面上にあります")
        spatial[idx] = -actuator.C_T * grid.dy

    logger.debug(f"アクチュエータ: x面k={k}, 作用行数={np.count_nonzero(spatial)}")
    return BodyForce(spatial, time_factor)


def build_fom_operators(grid: GridSpec, force: Optional[BodyForce] = None) -> FomOperators:
    """
    FOM 演算子一式を組み立てる

    Args:
        grid: 格子仕様
        force: 体積力（None なら0）

    Returns:
        FomOperators: 組み立て済み演算子
    """
    grid = build_grid(grid)
    M, y_M = assemble_divergence(grid)
    G, y_G = assemble_gradient(M, grid)
    D, Q, y_D, y_Q = assemble_diffusion(grid)
    K, I_op, A_op, y_I, y_A = assemble_convection_parts(grid)

    Omega = sp.diags(np.full(grid.n_V, grid.cell_volume)).todia()
    Omega_p = sp.diags(np.full(grid.n_p, grid.cell_volume)).todia()
    omega_inv = sp.diags(np.full(grid.n_V, 1.0 / grid.cell_volume))
    L = (M @ omega_inv @ G).tocsr()

    if force is None:
        force = BodyForce.zero(grid.n_V)
    require_length('force', force.spatial, grid.n_V)

    logger.info(f"FOM演算子を組み立てました: N_V={grid.n_V}, N_p={grid.n_p}, nnz(L)={L.nnz}")
    return FomOperators(
        grid=grid, M=M, G=G, Omega=Omega, Omega_p=Omega_p, D=D, Q=Q,
        K=K, I_op=I_op, A_op=A_op, L=L,
        y_M=y_M, y_G=y_G, y_D=y_D, y_Q=y_Q, y_I=y_I, y_A=y_A, force=force,
    )
