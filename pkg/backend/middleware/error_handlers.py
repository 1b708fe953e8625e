"""
エラーハンドラー
"""
import functools

import click

from backend.utils.error_helpers import handle_pipeline_error
from backend.utils.logger import get_logger


def cli_error_handler(callback):
    """パイプライン例外をメッセージ付きの非ゼロ終了に変換"""

    @functools.wraps(callback)
    def wrapper(*args, **kwargs):
        try:
            return callback(*args, **kwargs)
        except click.exceptions.ClickException:
            raise
        except click.exceptions.Exit:
            raise
        except Exception as e:
            message, code = handle_pipeline_error(e)
            get_logger('cli').error(message)
            click.echo(message, err=True)
            raise click.exceptions.Exit(code)

    return wrapper


def register_error_handlers(group: click.Group) -> None:
    """グループ配下の全コマンドにエラーハンドラーを登録"""
    for command in group.commands.values():
        if command.callback is not None:
            command.callback = cli_error_handler(command.callback)
