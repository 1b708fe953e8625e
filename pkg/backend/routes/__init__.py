# コマンドライン（click）
