"""
成果物ファイルの形式と出力ディレクトリ管理
"""
import os
from typing import BinaryIO, Iterable, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp

from backend.models.base import BinaryArtifact, as_f64, read_array
from backend.models.operators import RomOperators
from backend.models.snapshots import RomBasis, SnapshotSet
from backend.utils.error_helpers import ArtifactError
from backend.utils.path_utils import ensure_directory_exists, mode_artifact_path


class SparseOperatorArtifact(BinaryArtifact):
    """ECROM1: CSR 形式の疎行列（デバッグ・ゴールデン用）"""

    MAGIC = b'ECROM1'
    HEADER = '<IIQ'
    NAME = 'operator'

    def encode(self, matrix) -> Tuple[tuple, Iterable[np.ndarray]]:
        csr = sp.csr_matrix(matrix)
        csr.sort_indices()
        rows, cols = csr.shape
        return (rows, cols, csr.nnz), [
            np.asarray(csr.indptr, dtype='<u8'),
            np.asarray(csr.indices, dtype='<u8'),
            as_f64(csr.data),
        ]

    def decode(self, header: tuple, stream: BinaryIO) -> sp.csr_matrix:
        rows, cols, nnz = header
        indptr = read_array(stream, (rows + 1,), '<u8').astype(np.int64)
        indices = read_array(stream, (nnz,), '<u8').astype(np.int64)
        data = read_array(stream, (nnz,))
        return sp.csr_matrix((data, indices, indptr), shape=(rows, cols))

    def describe(self, matrix) -> tuple:
        return matrix.shape


class SnapshotArtifact(BinaryArtifact):
    """ECSNAP1: 時刻・V_bc・X・P"""

    MAGIC = b'ECSNAP1'
    HEADER = '<IIId'
    NAME = 'snapshot'

    def encode(self, snaps: SnapshotSet):
        return (snaps.n_V, snaps.n_p, snaps.K, float(snaps.nu)), [
            as_f64(snaps.times), as_f64(snaps.V_bc), as_f64(snaps.X), as_f64(snaps.P),
        ]

    def decode(self, header: tuple, stream: BinaryIO) -> SnapshotSet:
        n_V, n_p, K, nu = header
        times = read_array(stream, (K,))
        V_bc = read_array(stream, (n_V,))
        X = read_array(stream, (n_V, K))
        P = read_array(stream, (n_p, K))
        return SnapshotSet(X=X, P=P, times=times, V_bc=V_bc, nu=nu)

    def describe(self, snaps: SnapshotSet) -> tuple:
        return snaps.X.shape


class BasisArtifact(BinaryArtifact):
    """ECPOD1: sigma（長さ M、不足分はゼロ埋め）・Phi・Pi・E"""

    MAGIC = b'ECPOD1'
    HEADER = '<IIIII'
    NAME = 'basis'

    def encode(self, basis: RomBasis):
        sigma = np.zeros(basis.M)
        n = min(basis.M, basis.sigma.size)
        sigma[:n] = basis.sigma[:n]
        return (basis.n_V, basis.n_p, basis.M, basis.M_p, basis.n_c), [
            as_f64(sigma), as_f64(basis.Phi), as_f64(basis.Pi), as_f64(basis.E),
        ]

    def decode(self, header: tuple, stream: BinaryIO) -> RomBasis:
        n_V, n_p, M, M_p, n_c = header
        sigma = read_array(stream, (M,))
        Phi = read_array(stream, (n_V, M))
        Pi = read_array(stream, (n_p, M_p))
        E = read_array(stream, (n_V, n_c))
        return RomBasis(Phi=Phi, Pi=Pi, sigma=sigma, E=E)

    def describe(self, basis: RomBasis) -> tuple:
        return basis.Phi.shape


class RomOperatorArtifact(BinaryArtifact):
    """ECROMOP1: F0, f_act, F1, D_r, F2 スライス, L_r, P0, P1, P2 スライス, P_act"""

    MAGIC = b'ECROMOP1'
    HEADER = '<IId'
    NAME = 'rom operator'

    def __init__(self, time_factor: str = 'constant'):
        super().__init__()
        self.time_factor = time_factor

    def encode(self, rops: RomOperators):
        arrays = [as_f64(rops.F0_const), as_f64(rops.f_act), as_f64(rops.F1), as_f64(rops.D_r)]
        arrays += [as_f64(rops.F2[r]) for r in range(rops.M)]
        arrays += [as_f64(rops.L_r), as_f64(rops.P0), as_f64(rops.P1)]
        arrays += [as_f64(rops.P2[r]) for r in range(rops.M_p)]
        arrays.append(as_f64(rops.P_act))
        return (rops.M, rops.M_p, float(rops.nu)), arrays

    def decode(self, header: tuple, stream: BinaryIO) -> RomOperators:
        M, M_p, nu = header
        F0 = read_array(stream, (M,))
        f_act = read_array(stream, (M,))
        F1 = read_array(stream, (M, M))
        D_r = read_array(stream, (M, M))
        F2 = np.stack([read_array(stream, (M, M)) for _ in range(M)]) if M else np.zeros((0, 0, 0))
        L_r = read_array(stream, (M_p, M_p))
        P0 = read_array(stream, (M_p,))
        P1 = read_array(stream, (M_p, M))
        P2 = np.stack([read_array(stream, (M, M)) for _ in range(M_p)]) if M_p else np.zeros((0, M, M))
        P_act = read_array(stream, (M_p,))
        return RomOperators(nu=nu, F2=F2, F1=F1, F0_const=F0, f_act=f_act, D_r=D_r, L_r=L_r,
                            P2=P2, P1=P1, P0=P0, P_act=P_act, time_factor=self.time_factor)

    def describe(self, rops: RomOperators) -> tuple:
        return rops.F2.shape


class ArtifactStore:
    """出力ディレクトリ内の成果物パスと入出力"""

    def __init__(self, out_dir: str):
        self.out_dir = ensure_directory_exists(out_dir)

    # ---- パス ----
    @property
    def snapshot_path(self) -> str:
        return os.path.join(self.out_dir, 'snapshots.bin')

    def basis_path(self, M: int) -> str:
        return mode_artifact_path(self.out_dir, 'basis', M)

    def rom_operator_path(self, M: int) -> str:
        return mode_artifact_path(self.out_dir, 'romops', M)

    def coeff_path(self, M: int) -> str:
        return mode_artifact_path(self.out_dir, 'coeffs', M)

    def trace_path(self, M: int) -> str:
        return mode_artifact_path(self.out_dir, 'trace', M)

    @property
    def timing_path(self) -> str:
        return os.path.join(self.out_dir, 'timings.csv')

    def operator_path(self, name: str) -> str:
        directory = os.path.join(self.out_dir, 'operators')
        ensure_directory_exists(directory)
        return os.path.join(directory, f'{name}.bin')

    # ---- 入出力 ----
    def save_snapshots(self, snaps: SnapshotSet) -> None:
        SnapshotArtifact().write(self.snapshot_path, snaps)

    def load_snapshots(self) -> SnapshotSet:
        if not os.path.exists(self.snapshot_path):
            raise ArtifactError(f"missing snapshot file: {self.snapshot_path}")
        return SnapshotArtifact().read(self.snapshot_path)

    def save_basis(self, basis: RomBasis) -> None:
        BasisArtifact().write(self.basis_path(basis.M), basis)

    def load_basis(self, M: int) -> RomBasis:
        if not os.path.exists(self.basis_path(M)):
            raise ArtifactError(f"missing basis file: {self.basis_path(M)}")
        return BasisArtifact().read(self.basis_path(M))

    def save_rom_operators(self, M: int, rops: RomOperators) -> None:
        RomOperatorArtifact(rops.time_factor).write(self.rom_operator_path(M), rops)

    def load_rom_operators(self, M: int, time_factor: str = 'constant') -> RomOperators:
        if not os.path.exists(self.rom_operator_path(M)):
            raise ArtifactError(f"missing rom operator file: {self.rom_operator_path(M)}")
        return RomOperatorArtifact(time_factor).read(self.rom_operator_path(M))

    def save_coefficients(self, M: int, times: np.ndarray, coeffs: np.ndarray) -> None:
        np.save(self.coeff_path(M), np.vstack([times[None, :], coeffs]))

    def load_coefficients(self, M: int) -> Tuple[np.ndarray, np.ndarray]:
        if not os.path.exists(self.coeff_path(M)):
            raise ArtifactError(f"missing coefficient file: {self.coeff_path(M)}")
        data = np.load(self.coeff_path(M))
        return data[0], data[1:]

    def save_operator(self, name: str, matrix) -> None:
        SparseOperatorArtifact().write(self.operator_path(name), matrix)

    def load_operator(self, name: str) -> sp.csr_matrix:
        return SparseOperatorArtifact().read(self.operator_path(name))

    def write_timings(self, rows, path: Optional[str] = None) -> None:
        frame = pd.DataFrame(rows, columns=['stage', 'seconds'])
        frame.to_csv(path or self.timing_path, index=False, float_format='%.17g')

    def read_timings(self) -> pd.DataFrame:
        if not os.path.exists(self.timing_path):
            return pd.DataFrame(columns=['stage', 'seconds'])
        return pd.read_csv(self.timing_path)
