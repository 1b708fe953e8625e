"""
ecrom - エネルギー保存型 POD-Galerkin ROM パイプライン
"""
# アプリケーションファクトリーのインポート
from backend.app_factory import create_cli

# CLI の作成
cli = create_cli()

if __name__ == '__main__':
    cli()
