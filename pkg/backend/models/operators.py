"""
FOM・ROM 演算子のデータ構造
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, Optional

import numpy as np
import scipy.sparse as sp

from backend.models.grid import GridSpec


# 体積力の時間係数 g(t)
TIME_FACTORS: Dict[str, Callable[[float], float]] = {
    'constant': lambda t: 1.0,
    'one_plus_sin_pi': lambda t: 1.0 + np.sin(np.pi * t),
}


def diagonal_weights(omega) -> np.ndarray:
    """Ω を1次元の重みベクトルとして返す（対角疎行列ならその対角）"""
    if sp.issparse(omega):
        return np.asarray(omega.diagonal(), dtype=float)
    return np.asarray(omega, dtype=float).ravel()


@dataclass(frozen=True)
class ActuatorDisk:
    """x = x0 上の線分 [y_min, y_max] に働くアクチュエータ"""
    x0: float = 0.0
    y_min: float = -0.5
    y_max: float = 0.5
    C_T: float = 0.5


@dataclass
class BodyForce:
    """空間ベクトル × スカラー時間係数で表す体積力"""
    spatial: np.ndarray
    time_factor: str = 'constant'

    def g(self, t: float) -> float:
        return float(TIME_FACTORS[self.time_factor](t))

    def evaluate(self, t: float) -> np.ndarray:
        return self.g(t) * self.spatial

    @property
    def is_zero(self) -> bool:
        return not np.any(self.spatial)

    @classmethod
    def zero(cls, n_V: int) -> 'BodyForce':
        return cls(np.zeros(n_V))


@dataclass(eq=False)
class FomOperators:
    """
    組み立て済み FOM 演算子一式

    組み立て後は読み取り専用として扱う。Poisson 行列の分解だけは初回の
    求解時にキャッシュされる。
    """
    grid: GridSpec
    M: sp.csr_matrix
    G: sp.csr_matrix
    Omega: sp.dia_matrix
    Omega_p: sp.dia_matrix
    D: sp.csr_matrix
    Q: sp.csr_matrix
    K: sp.csr_matrix
    I_op: sp.csr_matrix
    A_op: sp.csr_matrix
    L: sp.csr_matrix
    y_M: np.ndarray
    y_G: np.ndarray
    y_D: np.ndarray
    y_Q: np.ndarray
    y_I: np.ndarray
    y_A: np.ndarray
    force: BodyForce
    poisson_factor: Optional[Any] = field(default=None, repr=False)

    @property
    def n_V(self) -> int:
        return self.M.shape[1]

    @property
    def n_p(self) -> int:
        return self.M.shape[0]

    @property
    def n_u(self) -> int:
        return self.grid.n_u

    @property
    def omega(self) -> np.ndarray:
        """Ω の対角成分"""
        return self.Omega.diagonal()

    @property
    def omega_p(self) -> np.ndarray:
        return self.Omega_p.diagonal()

    @cached_property
    def divergence_entry_max(self) -> float:
        """max|M_ij|"""
        return float(abs(self.M).max()) if self.M.nnz else 0.0

    @property
    def singular_poisson(self) -> bool:
        """流出境界がなければ L の零空間は定数"""
        return not self.grid.has_outflow

    def e_u(self) -> np.ndarray:
        e = np.zeros(self.n_V)
        e[:self.n_u] = 1.0
        return e

    def e_v(self) -> np.ndarray:
        e = np.zeros(self.n_V)
        e[self.n_u:] = 1.0
        return e


@dataclass(eq=False)
class RomOperators:
    """
    オフラインで前計算した縮約演算子

    F2, P2 は出力行ごとの M×M スライス（F2[r, i, j] が a_i a_j の係数）。
    """
    nu: float
    F2: np.ndarray
    F1: np.ndarray
    F0_const: np.ndarray
    f_act: np.ndarray
    D_r: np.ndarray
    L_r: np.ndarray
    P2: np.ndarray
    P1: np.ndarray
    P0: np.ndarray
    P_act: np.ndarray
    time_factor: str = 'constant'
    lr_factor: Optional[Any] = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return self.F1.shape[0]

    @property
    def M_p(self) -> int:
        return self.L_r.shape[0]

    def g(self, t: float) -> float:
        return float(TIME_FACTORS[self.time_factor](t))
