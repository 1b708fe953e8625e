"""
成果物ファイル名とディレクトリの解決
"""
import os
from pathlib import Path
from typing import Union

PROJECT_ROOT = Path(__file__).resolve().parents[2]

# 速度モード数 M ごとに1つずつ書き出す成果物
PER_MODE_ARTIFACTS = {
    'basis': 'basis_M{M}.bin',
    'romops': 'romops_M{M}.bin',
    'coeffs': 'coeffs_M{M}.npy',
    'trace': 'trace_M{M}.csv',
}


def project_path(path: Union[str, Path]) -> str:
    """相対パスはプロジェクトルート基準で解決（絶対パスはそのまま）"""
    path = Path(path)
    return str(path if path.is_absolute() else PROJECT_ROOT / path)


def ensure_directory_exists(directory_path: str) -> str:
    """ディレクトリがなければ作成してそのパスを返す"""
    os.makedirs(directory_path, exist_ok=True)
    return directory_path


def mode_artifact_path(out_dir: str, kind: str, M: int) -> str:
    """
    M ごとの成果物パス

    Raises:
        KeyError: 未知の成果物種別
    """
    return os.path.join(out_dir, PER_MODE_ARTIFACTS[kind].format(M=M))
