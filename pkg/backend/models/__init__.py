# 格子・演算子・成果物モデル
