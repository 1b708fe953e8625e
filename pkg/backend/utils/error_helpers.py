"""
パイプライン共通の例外と終了コード変換
"""
from typing import Tuple


class ValidationError(Exception):
    """入力・設定・配列サイズのバリデーションエラー"""
    pass


class SolverError(Exception):
    """数値計算エラー（Newton発散、Poisson求解失敗、ランク不足など）"""
    pass


class ArtifactError(Exception):
    """成果物ファイルの欠落・破損"""
    pass


# 例外種別ごとの終了コード
EXIT_CODES = {
    'validation': 2,
    'artifact': 3,
    'solver': 4,
    'unknown': 1,
}


def create_error_message(error: str, code: int) -> Tuple[str, int]:
    """
    エラーメッセージと終了コードの組を作成

    Args:
        error: エラーメッセージ
        code: 終了コード

    Returns:
        Tuple[str, int]: メッセージと終了コード
    """
    return f"[exit {code}] {error}", code


def handle_pipeline_error(error: Exception) -> Tuple[str, int]:
    """
    パイプライン例外を終了コード付きメッセージに変換

    Args:
        error: 発生した例外

    Returns:
        Tuple[str, int]: エラーメッセージと終了コード
    """
    if isinstance(error, ValidationError):
        return create_error_message(f"入力エラー: {str(error)}", EXIT_CODES['validation'])
    elif isinstance(error, ArtifactError):
        return create_error_message(f"ファイルエラー: {str(error)}", EXIT_CODES['artifact'])
    elif isinstance(error, SolverError):
        return create_error_message(f"計算エラー: {str(error)}", EXIT_CODES['solver'])
    elif isinstance(error, (ValueError, KeyError)):
        return create_error_message(f"無効な値です: {str(error)}", EXIT_CODES['validation'])
    elif isinstance(error, OSError):
        return create_error_message(f"入出力エラー: {str(error)}", EXIT_CODES['artifact'])
    else:
        return create_error_message(f"予期しないエラーが発生しました: {str(error)}", EXIT_CODES['unknown'])


def require_length(name: str, vector, expected: int) -> None:
    """
    ベクトル長のチェック

    Raises:
        ValidationError: 長さが一致しない場合
    """
    actual = len(vector)
    if actual != expected:
        raise ValidationError(f"{name}の長さが不正です: {actual} (期待値 {expected})")
