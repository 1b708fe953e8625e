"""
スタガード格子の幾何・境界条件・状態ベクトル

速度未知数の並び（u ブロック → v ブロック、各ブロック内は x 方向が最速）を
ここで一元管理する。境界法線方向の Dirichlet 値は未知数に含めない。
流出境界上の法線速度は未知数として保持する。
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np

Profile = Callable[[float], Tuple[float, float]]


class BoundaryKind(Enum):
    """境界条件の種別"""
    PERIODIC = 'periodic'
    NO_SLIP = 'no_slip'
    DIRICHLET = 'dirichlet'
    OUTFLOW = 'outflow'


@dataclass(frozen=True)
class BoundaryCondition:
    """
    1辺の境界条件

    Dirichlet の profile は境界座標（西・東辺では y、南・北辺では x）を受け取り
    全体座標系の (u, v) を返す。時間に依存しない。
    """
    kind: BoundaryKind
    profile: Optional[Profile] = None
    p_inf: float = 0.0

    @classmethod
    def periodic(cls) -> 'BoundaryCondition':
        return cls(BoundaryKind.PERIODIC)

    @classmethod
    def no_slip(cls) -> 'BoundaryCondition':
        return cls(BoundaryKind.NO_SLIP)

    @classmethod
    def dirichlet(cls, profile: Profile) -> 'BoundaryCondition':
        return cls(BoundaryKind.DIRICHLET, profile=profile)

    @classmethod
    def outflow(cls, p_inf: float = 0.0) -> 'BoundaryCondition':
        return cls(BoundaryKind.OUTFLOW, p_inf=p_inf)

    @property
    def is_periodic(self) -> bool:
        return self.kind is BoundaryKind.PERIODIC

    @property
    def is_outflow(self) -> bool:
        return self.kind is BoundaryKind.OUTFLOW

    @property
    def is_wall(self) -> bool:
        """速度が既知の境界（no-slip または Dirichlet）"""
        return self.kind in (BoundaryKind.NO_SLIP, BoundaryKind.DIRICHLET)

    def value(self, s: float) -> Tuple[float, float]:
        """境界座標 s における既知速度 (u, v)"""
        if self.kind is BoundaryKind.DIRICHLET:
            u, v = self.profile(s)
            return float(u), float(v)
        return 0.0, 0.0


@dataclass(frozen=True)
class GridSpec:
    """一様スタガード直交格子"""
    nx: int
    ny: int
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    bc_west: BoundaryCondition = field(default_factory=BoundaryCondition.periodic)
    bc_east: BoundaryCondition = field(default_factory=BoundaryCondition.periodic)
    bc_south: BoundaryCondition = field(default_factory=BoundaryCondition.periodic)
    bc_north: BoundaryCondition = field(default_factory=BoundaryCondition.periodic)

    # ---- 幾何 ----
    @property
    def dx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.ny

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy

    @property
    def n_p(self) -> int:
        return self.nx * self.ny

    @property
    def periodic_x(self) -> bool:
        return self.bc_west.is_periodic

    @property
    def periodic_y(self) -> bool:
        return self.bc_south.is_periodic

    @property
    def fully_periodic(self) -> bool:
        return self.periodic_x and self.periodic_y

    @property
    def has_outflow(self) -> bool:
        return any(bc.is_outflow for bc in self.boundaries)

    @property
    def boundaries(self) -> Tuple[BoundaryCondition, ...]:
        return (self.bc_west, self.bc_east, self.bc_south, self.bc_north)

    def x_face(self, k: int) -> float:
        return self.x_range[0] + k * self.dx

    def y_face(self, l: int) -> float:
        return self.y_range[0] + l * self.dy

    def x_center(self, i: int) -> float:
        return self.x_range[0] + (i + 0.5) * self.dx

    def y_center(self, j: int) -> float:
        return self.y_range[0] + (j + 0.5) * self.dy

    # ---- 未知数レイアウト ----
    @property
    def k_first(self) -> int:
        return 0 if self.bc_west.is_outflow else 1

    @property
    def k_last(self) -> int:
        if self.periodic_x or self.bc_east.is_outflow:
            return self.nx
        return self.nx - 1

    @property
    def l_first(self) -> int:
        return 0 if self.bc_south.is_outflow else 1

    @property
    def l_last(self) -> int:
        if self.periodic_y or self.bc_north.is_outflow:
            return self.ny
        return self.ny - 1

    @property
    def n_ux(self) -> int:
        """1行あたりの u 未知数"""
        return self.k_last - self.k_first + 1

    @property
    def n_vy(self) -> int:
        """1列あたりの v 未知数"""
        return self.l_last - self.l_first + 1

    @property
    def n_u(self) -> int:
        return self.n_ux * self.ny

    @property
    def n_v(self) -> int:
        return self.n_vy * self.nx

    @property
    def n_V(self) -> int:
        return self.n_u + self.n_v

    def _wrap_x_face(self, k: int) -> int:
        if self.periodic_x:
            k %= self.nx
            return self.nx if k == 0 else k
        return k

    def _wrap_y_face(self, l: int) -> int:
        if self.periodic_y:
            l %= self.ny
            return self.ny if l == 0 else l
        return l

    def wrap_i(self, i: int) -> int:
        return i % self.nx if self.periodic_x else i

    def wrap_j(self, j: int) -> int:
        return j % self.ny if self.periodic_y else j

    def u_index(self, k: int, j: int) -> Optional[int]:
        """x 面 k・行 j の u 未知数番号（既知面なら None）"""
        k = self._wrap_x_face(k)
        j = self.wrap_j(j)
        if not (self.k_first <= k <= self.k_last) or not (0 <= j < self.ny):
            return None
        return j * self.n_ux + (k - self.k_first)

    def v_index(self, i: int, l: int) -> Optional[int]:
        """列 i・y 面 l の v 未知数番号（既知面なら None）"""
        l = self._wrap_y_face(l)
        i = self.wrap_i(i)
        if not (self.l_first <= l <= self.l_last) or not (0 <= i < self.nx):
            return None
        return self.n_u + (l - self.l_first) * self.nx + i

    def known_u(self, k: int, j: int) -> float:
        """Dirichlet x 面上の既知法線速度"""
        bc = self.bc_west if k <= 0 else self.bc_east
        return bc.value(self.y_center(j))[0]

    def known_v(self, i: int, l: int) -> float:
        """Dirichlet y 面上の既知法線速度"""
        bc = self.bc_south if l <= 0 else self.bc_north
        return bc.value(self.x_center(i))[1]

    def u_unknowns(self):
        """(index, k, j) を番号順に列挙"""
        for j in range(self.ny):
            for k in range(self.k_first, self.k_last + 1):
                yield j * self.n_ux + (k - self.k_first), k, j

    def v_unknowns(self):
        """(index, i, l) を番号順に列挙"""
        for l in range(self.l_first, self.l_last + 1):
            for i in range(self.nx):
                yield self.n_u + (l - self.l_first) * self.nx + i, i, l

    def u_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """u 未知数の位置 (x, y)"""
        pts = [(self.x_face(k), self.y_center(j)) for _, k, j in self.u_unknowns()]
        xy = np.array(pts, dtype=float).reshape(-1, 2)
        return xy[:, 0], xy[:, 1]

    def v_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """v 未知数の位置 (x, y)"""
        pts = [(self.x_center(i), self.y_face(l)) for _, i, l in self.v_unknowns()]
        xy = np.array(pts, dtype=float).reshape(-1, 2)
        return xy[:, 0], xy[:, 1]


@dataclass
class StateVector:
    """速度・圧力・時刻の組"""
    V: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def copy(self) -> 'StateVector':
        return StateVector(self.V.copy(), self.p.copy(), self.t)
