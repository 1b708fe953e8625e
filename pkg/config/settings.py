"""
アプリケーション設定管理
"""
import os
from typing import Dict, Any

from dotenv import load_dotenv

# .env があれば環境変数へ読み込む（既存の値は上書きしない）
load_dotenv()


def _env_flag(name: str, default: str) -> bool:
    return os.environ.get(name, default).lower() == 'true'


class Config:
    """基本設定クラス"""

    # 出力設定
    OUTPUT_DIRECTORY = os.environ.get('ECROM_OUTPUT_DIR', 'output')

    # ログ設定
    LOG_DIRECTORY = os.environ.get('ECROM_LOG_DIR', 'logs')
    LOG_TO_FILE = _env_flag('ECROM_LOG_TO_FILE', 'True')

    # デバッグ設定
    DEBUG = _env_flag('ECROM_DEBUG', 'False')

    # ROMオフライン計算の並列数
    WORKERS = int(os.environ.get('ECROM_WORKERS', 1))

    # Newton反復の既定値
    NEWTON_TOL = float(os.environ.get('ECROM_NEWTON_TOL', 1e-12))
    NEWTON_MAX_ITER = int(os.environ.get('ECROM_NEWTON_MAX_ITER', 20))


class DevelopmentConfig(Config):
    """開発環境設定"""
    DEBUG = True


class ProductionConfig(Config):
    """本番環境設定"""
    DEBUG = False

    @classmethod
    def validate(cls) -> None:
        """本番環境設定の検証"""
        if cls.WORKERS < 1:
            raise ValueError("ECROM_WORKERSは1以上である必要があります")


class TestConfig(Config):
    """テスト環境設定"""
    TESTING = True
    DEBUG = False
    LOG_TO_FILE = False  # テストではログファイルを作らない
    WORKERS = 1


# 環境別設定マッピング
config_map: Dict[str, Any] = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestConfig,
    'default': DevelopmentConfig
}


def get_config(environment: str = None) -> Config:
    """環境に応じた設定クラスを取得"""
    if environment is None:
        environment = os.environ.get('ECROM_ENV', 'default')

    config_class = config_map.get(environment, DevelopmentConfig)
    if config_class is ProductionConfig:
        config_class.validate()
    return config_class()
