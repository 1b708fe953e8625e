"""
スナップショット集合と縮約基底
"""
from dataclasses import dataclass

import numpy as np


@dataclass
class SnapshotSet:
    """FOM スナップショット（X は V_bc を差し引いた速度）"""
    X: np.ndarray
    P: np.ndarray
    times: np.ndarray
    V_bc: np.ndarray
    nu: float

    @property
    def K(self) -> int:
        return self.X.shape[1]

    @property
    def n_V(self) -> int:
        return self.X.shape[0]

    @property
    def n_p(self) -> int:
        return self.P.shape[0]

    def velocity(self, n: int) -> np.ndarray:
        """V_bc を戻した n 番目の速度場"""
        return self.X[:, n] + self.V_bc


@dataclass
class PodModes:
    """重み付き POD の結果（速度・圧力共通）"""
    modes: np.ndarray
    sigma: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.sigma)


@dataclass
class RomBasis:
    """速度基底 Phi、圧力基底 Pi、特異値、拘束行列 E"""
    Phi: np.ndarray
    Pi: np.ndarray
    sigma: np.ndarray
    E: np.ndarray

    @property
    def M(self) -> int:
        return self.Phi.shape[1]

    @property
    def M_p(self) -> int:
        return self.Pi.shape[1]

    @property
    def n_c(self) -> int:
        return self.E.shape[1]

    @property
    def n_V(self) -> int:
        return self.Phi.shape[0]

    @property
    def n_p(self) -> int:
        return self.Pi.shape[0]
