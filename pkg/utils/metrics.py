# -*- coding: utf-8 -*-
"""
评估指标
验证集均方误差、交叉熵与误分类率
"""

import numpy as np
from scipy.special import expit

from utils.error_handler import ValidationError

# 交叉熵中概率的截断
PROB_CLIP = 1e-15


def _pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValidationError(f"metric inputs must be vectors of equal length, got {y_true.shape} and {y_pred.shape}")
    if y_true.size == 0:
        raise ValidationError("metric inputs must not be empty")
    return y_true, y_pred


def mse(y_true, y_pred) -> float:
    """均方误差"""
    y_true, y_pred = _pair(y_true, y_pred)
    return float(np.mean((y_true - y_pred) ** 2))


def cross_entropy(y_true, prob) -> float:
    """
    平均二元交叉熵

    参数:
        y_true: 0/1 响应
        prob: 预测概率 P(Y=1)

    返回:
        −mean(y log p + (1−y) log(1−p))，概率截断到 [1e-15, 1−1e-15]
    """
    y_true, prob = _pair(y_true, prob)
    p = np.clip(prob, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(y_true * np.log(p) + (1.0 - y_true) * np.log1p(-p)))


def misclassification_rate(y_true, prob, threshold: float = 0.5) -> float:
    """按阈值 0.5 分类的错误率"""
    y_true, prob = _pair(y_true, prob)
    return float(np.mean((prob > threshold).astype(float) != y_true))


def logistic_metrics(y_true, linear_predictor) -> dict:
    """由线性预测值 f 计算交叉熵与误分类率"""
    prob = expit(np.asarray(linear_predictor, dtype=float))
    return {
        'cross_entropy': cross_entropy(y_true, prob),
        'misclassification': misclassification_rate(y_true, prob),
    }
