# 設定管理
