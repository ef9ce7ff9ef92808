# -*- coding: utf-8 -*-
"""
数据管理模块
提供 CSV 数据读取、协变量标准化、训练/验证划分以及数据与预测结果的写出
"""

import logging
import os
import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from utils.error_handler import CsvParseError, DataError, ValidationError

logger = logging.getLogger(__name__)

# CSV 第 1 行为表头，数据行号 = 行下标 + 2
HEADER_LINES = 1


@dataclass
class IngestedData:
    """
    读取结果

    属性:
        X: 协变量矩阵
        y: 响应向量（未指定响应列时为 None）
        columns: 协变量列名
        rejected_lines: 宽松模式下被剔除的数据行号（从 1 开始，含表头行）
        means: 标准化时使用的样本均值
        sds: 标准化时使用的样本标准差
    """
    X: np.ndarray
    y: Optional[np.ndarray]
    columns: List[str]
    rejected_lines: List[int] = field(default_factory=list)
    means: Optional[np.ndarray] = None
    sds: Optional[np.ndarray] = None


# ============ 读取 ============

def _read_frame(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DataError(f"data file not found: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise CsvParseError("file is empty", line_number=1)
    except pd.errors.ParserError as e:
        match = re.search(r'line (\d+)', str(e))
        line = int(match.group(1)) if match else 0
        raise CsvParseError(f"malformed row: {e}", line_number=line)


def _cell_to_float(cell) -> float:
    text = str(cell).strip()
    if not text or '_' in text:
        return np.nan
    try:
        return float(text)
    except ValueError:
        return np.nan


def _numeric_column(col: pd.Series) -> pd.Series:
    """逐单元格转为浮点数，保证与 %.17g 写出的值精确往返；无法解析的单元格记为 NaN"""
    parsed = np.fromiter((_cell_to_float(v) for v in col.to_numpy(dtype=object)), dtype=float, count=len(col))
    return pd.Series(parsed, index=col.index, name=col.name)


def ingest_csv(path: str, response_col: Optional[str] = 'y', strict: bool = True,
               standardize_covariates: bool = False) -> IngestedData:
    """
    读取带表头的 CSV，响应列之外的列全部作为协变量

    参数:
        path: 文件路径
        response_col: 响应列名；None 表示全部列都是协变量（预测用）
        strict: True 时遇到缺失或非数值单元格即报错；False 时剔除该行并记录行号
        standardize_covariates: 是否对协变量做标准化

    返回:
        IngestedData

    异常:
        DataError: 文件不存在或缺少响应列
        CsvParseError: 格式错误、缺失或非数值单元格，附带行号

    使用示例:
        data = ingest_csv('data/train.csv', response_col='y', standardize_covariates=True)
    """
    frame = _read_frame(path)
    frame.columns = [str(c).strip() for c in frame.columns]
    if response_col is not None and response_col not in frame.columns:
        raise DataError(f"response column '{response_col}' not found in {path}; columns: {list(frame.columns)}")
    covariates = [c for c in frame.columns if c != response_col]
    if not covariates:
        raise DataError("the file has no covariate columns")

    numeric = frame.apply(_numeric_column)
    bad_rows = ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    rejected = [int(i) + HEADER_LINES + 1 for i in np.flatnonzero(bad_rows)]
    if rejected:
        if strict:
            first = int(np.flatnonzero(bad_rows)[0])
            cells = [c for c in frame.columns if not np.isfinite(numeric[c].iloc[first])]
            raise CsvParseError(
                f"missing or non-numeric value in column(s) {', '.join(cells)}",
                line_number=rejected[0],
            )
        logger.warning(f"Rejected {len(rejected)} rows with missing or non-numeric cells: lines {rejected[:20]}")
        numeric = numeric.loc[~bad_rows]

    if numeric.empty:
        raise DataError("no usable rows remain after parsing")

    X = numeric[covariates].to_numpy(dtype=float)
    y = None if response_col is None else numeric[response_col].to_numpy(dtype=float)
    data = IngestedData(X=X, y=y, columns=covariates, rejected_lines=rejected)
    if standardize_covariates:
        data.X, data.means, data.sds = standardize(X)
    logger.info(f"Loaded {X.shape[0]} rows and {X.shape[1]} covariates from {path}")
    return data


# ============ 预处理 ============

def standardize(X, means=None, sds=None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    每列减样本均值再除以样本标准差（ddof=1）

    参数:
        X: 协变量矩阵
        means, sds: 给定时使用这些统计量（用于验证集）

    返回:
        (标准化矩阵, 均值, 标准差)

    异常:
        DataError: 某列标准差为 0
    """
    X = np.asarray(X, dtype=float)
    if means is None:
        if X.shape[0] < 2:
            raise DataError("standardization needs at least two rows")
        means = X.mean(axis=0)
        sds = X.std(axis=0, ddof=1)
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    if np.any(sds == 0):
        raise DataError(f"constant covariate column(s) {np.flatnonzero(sds == 0).tolist()} cannot be standardized")
    return (X - means) / sds, means, sds


def train_validation_split(n: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    随机划分训练/验证下标

    参数:
        n: 样本量
        fraction: 训练比例，训练集大小为 round(fraction·n)
        seed: 划分种子（Philox）

    返回:
        (训练下标, 验证下标)，各自升序
    """
    if not 0 < fraction < 1:
        raise ValidationError(f"split fraction must lie in (0, 1), got {fraction}")
    n_train = int(round(fraction * n))
    if n_train < 1 or n_train >= n:
        raise ValidationError(f"split of {n} rows by {fraction} leaves an empty part")
    perm = np.random.Generator(np.random.Philox(seed)).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


# ============ 写出 ============

def _frame(X, y=None, columns=None) -> pd.DataFrame:
    X = np.asarray(X, dtype=float)
    columns = columns or [f"x{j + 1}" for j in range(X.shape[1])]
    frame = pd.DataFrame(X, columns=columns)
    if y is not None:
        frame['y'] = np.asarray(y, dtype=float)
    return frame


def write_dataset_csv(path: str, X, y, columns: Optional[List[str]] = None) -> str:
    """写出数据集：列 x1..xp 与 y，浮点数按完整精度输出"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    _frame(X, y, columns).to_csv(path, index=False, float_format='%.17g')
    logger.info(f"Wrote {len(y)} rows to {path}")
    return path


def write_predictions_csv(path: str, predictions, y_true=None) -> str:
    """写出预测值（以及可选的真实响应）"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame = pd.DataFrame({'prediction': np.asarray(predictions, dtype=float)})
    if y_true is not None:
        frame['y'] = np.asarray(y_true, dtype=float)
    frame.to_csv(path, index=False, float_format='%.17g')
    logger.info(f"Wrote {len(frame)} predictions to {path}")
    return path
