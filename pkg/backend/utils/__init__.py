# ユーティリティ関数
