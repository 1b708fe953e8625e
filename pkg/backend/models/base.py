"""
バイナリ成果物の共通基底クラス

すべてリトルエンディアン。先頭にマジック文字列、続いて struct で固定長ヘッダー、
その後に配列本体を列優先（Fortran 順）で並べる。
"""
import os
import struct
from abc import ABC, abstractmethod
from datetime import datetime
from typing import Any, BinaryIO, Iterable, Optional, Tuple

import numpy as np

from backend.utils.error_helpers import ArtifactError
from backend.utils.logger import get_logger, log_artifact_operation


class BinaryArtifact(ABC):
    """バイナリ成果物の共通基底クラス"""

    MAGIC: bytes = b''
    HEADER: str = '<'
    NAME: str = 'artifact'

    def __init__(self):
        self.logger = get_logger(f'artifact.{self.NAME}')

    def _log_operation(self, operation: str, path: str, shape: Optional[tuple] = None,
                       execution_time: float = None, error: Optional[str] = None):
        """操作ログを記録"""
        log_artifact_operation(operation, path, shape, execution_time, error)

    @abstractmethod
    def encode(self, obj: Any) -> Tuple[tuple, Iterable[np.ndarray]]:
        """オブジェクトをヘッダー値と配列列に分解"""

    @abstractmethod
    def decode(self, header: tuple, stream: BinaryIO) -> Any:
        """ヘッダー値とストリームからオブジェクトを復元"""

    def describe(self, obj: Any) -> Optional[tuple]:
        """ログ用の主配列形状"""
        return None

    def write(self, path: str, obj: Any) -> None:
        """
        成果物を書き出す

        Args:
            path: 出力先
            obj: 書き出すオブジェクト
        """
        start_time = datetime.now()
        try:
            header, arrays = self.encode(obj)
            with open(path, 'wb') as f:
                f.write(self.MAGIC)
                f.write(struct.pack(self.HEADER, *header))
                for array in arrays:
                    f.write(np.asarray(array).tobytes(order='F'))

            execution_time = (datetime.now() - start_time).total_seconds()
            self._log_operation("WRITE", path, self.describe(obj), execution_time)

        except Exception as e:
            execution_time = (datetime.now() - start_time).total_seconds()
            self._log_operation("WRITE", path, execution_time=execution_time, error=str(e))
            raise

    def read(self, path: str) -> Any:
        """
        成果物を読み込む

        Raises:
            ArtifactError: ファイルが無い、マジック不一致、途中で切れている場合
        """
        if not os.path.exists(path):
            raise ArtifactError(f"missing {self.NAME} file: {path}")

        start_time = datetime.now()
        try:
            with open(path, 'rb') as f:
                magic = f.read(len(self.MAGIC))
                if magic != self.MAGIC:
                    raise ArtifactError(f"{path} は {self.MAGIC.decode()} 形式ではありません")
                size = struct.calcsize(self.HEADER)
                raw = f.read(size)
                if len(raw) != size:
                    raise ArtifactError(f"{path} のヘッダーが途中で切れています")
                obj = self.decode(struct.unpack(self.HEADER, raw), f)
                if f.read(1):
                    raise ArtifactError(f"{path} に余分なデータがあります")

            execution_time = (datetime.now() - start_time).total_seconds()
            self._log_operation("READ", path, self.describe(obj), execution_time)
            return obj

        except Exception as e:
            execution_time = (datetime.now() - start_time).total_seconds()
            self._log_operation("READ", path, execution_time=execution_time, error=str(e))
            raise


def read_array(stream: BinaryIO, shape: Tuple[int, ...], dtype: str = '<f8') -> np.ndarray:
    """列優先で格納された配列を読む"""
    dtype = np.dtype(dtype)
    count = int(np.prod(shape)) if shape else 1
    raw = stream.read(count * dtype.itemsize)
    if len(raw) != count * dtype.itemsize:
        raise ArtifactError("配列データが途中で切れています")
    return np.frombuffer(raw, dtype=dtype).reshape(shape, order='F').astype(dtype.newbyteorder('='))


def as_f64(array: np.ndarray) -> np.ndarray:
    return np.asarray(array, dtype='<f8')
