# CLI エラーハンドラー
