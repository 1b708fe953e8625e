"""
アプリケーションファクトリー
"""
import click

from backend.middleware.error_handlers import register_error_handlers
from config.settings import get_config


def create_cli(environment: str = None) -> click.Group:
    """
    ecrom CLI の作成と設定

    Args:
        environment: 環境名 ('development', 'production', 'testing')

    Returns:
        click.Group: 設定済みのコマンドグループ
    """
    # 設定の取得
    config = get_config(environment)

    @click.group(name='ecrom', help='エネルギー保存型 POD-Galerkin ROM パイプライン')
    @click.pass_context
    def cli(ctx):
        ctx.ensure_object(dict)
        ctx.obj['settings'] = config

    # コマンドの登録
    register_commands(cli)

    # エラーハンドラーの登録
    register_error_handlers(cli)

    return cli


def register_commands(cli: click.Group) -> None:
    """ステージコマンドの登録"""
    from backend.routes.commands import build_commands
    for command in build_commands():
        cli.add_command(command)
