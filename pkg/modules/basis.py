# -*- coding: utf-8 -*-
"""
基函数模块
构造边际节点、一元样条基（m=1 阶梯、m=2 线性加折线）、张量积分块基、
惩罚对角阵与经验中心化
"""

import itertools
import logging
from dataclasses import dataclass
from math import comb
from typing import Dict, List, Sequence, Tuple

import numpy as np

import config
from utils.error_handler import (
    DegenerateCovariateError, NumericError, UnsupportedOrderError, ValidationError,
)

logger = logging.getLogger(__name__)

BlockId = Tuple[int, ...]
KnotGrid = List[np.ndarray]


@dataclass(frozen=True)
class DesignBlock:
    """
    单个 ANOVA 分量的设计块

    属性:
        id: 协变量下标组（从 0 开始，升序）
        basis: 中心化后的基矩阵 n×d
        col_means: 训练集列均值
        gamma_diag: Γ 的对角元，取值 0 或 ρ
        spectral_norm_sq: ‖basis‖₂² 的估计
        dims: 各协变量的一元基列数
        gram: basisᵀbasis/n
    """
    id: BlockId
    basis: np.ndarray
    col_means: np.ndarray
    gamma_diag: np.ndarray
    spectral_norm_sq: float
    dims: Tuple[int, ...]
    gram: np.ndarray

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    @property
    def label(self) -> str:
        return block_label(self.id)


def block_label(block: BlockId) -> str:
    """1 起始的分块标签，如 (0, 1) → '1,2'"""
    return ','.join(str(j + 1) for j in block)


# ============ 节点与一元基 ============

def compute_knots(x_col, num_knots: int) -> np.ndarray:
    """
    在等距概率水平 0, 1/(M−1), …, 1 处取样本分位数作为节点

    参数:
        x_col: 一个协变量的样本
        num_knots: 节点数 M（≥ 2）

    返回:
        严格递增的节点向量（并列值去重）

    异常:
        DegenerateCovariateError: 去重后不足两个节点
    """
    x = np.asarray(x_col, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValidationError("covariate column must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise ValidationError("covariate column contains non-finite values")
    if num_knots < 2:
        raise ValidationError(f"num_knots must be at least 2, got {num_knots}")

    levels = np.linspace(0.0, 1.0, num_knots)
    knots = np.unique(np.quantile(x, levels))
    if knots.size < 2:
        raise DegenerateCovariateError(
            f"covariate has a single distinct value {knots[0]!r}; cannot place knots"
        )
    if knots.size < num_knots:
        logger.debug(f"Collapsed {num_knots - knots.size} tied knots")
    return knots


def univariate_basis(x, knots, m: int) -> np.ndarray:
    """
    一元 TV 样条基

    参数:
        x: 协变量取值
        knots: 递增节点 t_1 < … < t_M
        m: 1 为阶梯基 1{x > t_j}（j = 1..M−1）；
           2 为全局线性列 (x − t_1) 加折线 (x − t_j)₊（j = 2..M−1）

    返回:
        n×(M−1) 矩阵

    异常:
        UnsupportedOrderError: m 不是 1 或 2
    """
    if m not in (1, 2):
        raise UnsupportedOrderError(f"unsupported spline order m={m}; expected 1 or 2")
    x = np.asarray(x, dtype=float)
    knots = np.asarray(knots, dtype=float)
    if knots.size < 2:
        raise ValidationError("at least two knots are required")

    if m == 1:
        return (x[:, None] > knots[None, :-1]).astype(float)
    linear = (x - knots[0])[:, None]
    hinges = np.maximum(x[:, None] - knots[None, 1:-1], 0.0)
    return np.hstack([linear, hinges])


# ============ 张量积与惩罚 ============

def _raw_tensor(factors: Sequence[np.ndarray]) -> np.ndarray:
    n = factors[0].shape[0]
    out = factors[0]
    for factor in factors[1:]:
        if factor.shape[0] != n:
            raise ValidationError("univariate bases of one block must share the sample size")
        out = (out[:, :, None] * factor[:, None, :]).reshape(n, -1)
    return np.array(out, dtype=float, copy=True)


def gamma_matrix(block: BlockId, m: int, rho_k: float, dims: Sequence[int]) -> np.ndarray:
    """
    分块的 Γ 对角元

    参数:
        block: 协变量下标组
        m: 样条阶数
        rho_k: 该交互阶的惩罚 ρ_k
        dims: 各协变量的一元基列数

    返回:
        长度 ∏dims 的向量；m=2 时全线性乘积列（按字典序为第 0 列）为 0，其余为 ρ_k
    """
    if rho_k < 0:
        raise ValidationError(f"rho must be nonnegative, got {rho_k}")
    if len(dims) != len(block):
        raise ValidationError("dims must have one entry per covariate of the block")
    gamma = np.full(int(np.prod(dims)), float(rho_k))
    if m == 2:
        gamma[0] = 0.0
    return gamma


def tensor_block_basis(block: BlockId, bases: Dict[int, np.ndarray],
                       m: int = config.DEFAULT_ORDER_M, rho: float = 0.0) -> DesignBlock:
    """
    构造张量积分块

    参数:
        block: 协变量下标组
        bases: {协变量下标: 一元基矩阵}
        m: 样条阶数（决定 Γ 的零元）
        rho: HTV 惩罚

    返回:
        DesignBlock，列为各协变量一元列的乘积，按各自列下标字典序排列，再做经验中心化
    """
    factors = [np.asarray(bases[j], dtype=float) for j in block]
    raw = _raw_tensor(factors)
    n = raw.shape[0]
    col_means = raw.mean(axis=0)
    centered = raw - col_means
    gram = centered.T @ centered / n
    dims = tuple(f.shape[1] for f in factors)

    for arr in (centered, col_means, gram):
        arr.setflags(write=False)
    gamma = gamma_matrix(block, m, rho, dims)
    gamma.setflags(write=False)
    return DesignBlock(
        id=tuple(block),
        basis=centered,
        col_means=col_means,
        gamma_diag=gamma,
        spectral_norm_sq=_power_iteration(gram) * n,
        dims=dims,
        gram=gram,
    )


def enumerate_blocks(p: int, K: int) -> List[BlockId]:
    """
    按大小、再按字典序列出全部分块

    参数:
        p: 协变量个数
        K: 最高交互阶（1 ≤ K ≤ p）

    返回:
        分块列表，长度 Σ_{k≤K} C(p, k)
    """
    if K < 1 or K > p:
        raise ValidationError(f"interaction order K={K} must satisfy 1 <= K <= p={p}")
    return [combo for k in range(1, K + 1) for combo in itertools.combinations(range(p), k)]


def count_blocks(p: int, K: int) -> int:
    """Σ_{k≤K} C(p, k)"""
    return sum(comb(p, k) for k in range(1, K + 1))


# ============ 谱范数 ============

def _power_iteration(gram: np.ndarray) -> float:
    k = gram.shape[0]
    if k == 0 or not np.any(gram):
        return 0.0
    v = np.random.Generator(np.random.Philox(0)).standard_normal(k)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(config.POWER_ITER_MAX):
        w = gram @ v
        new_estimate = float(v @ w)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if abs(new_estimate - estimate) <= config.POWER_ITER_TOLERANCE * abs(new_estimate):
            return max(new_estimate, norm_w)
        estimate = new_estimate
    raise NumericError(
        f"power iteration did not converge in {config.POWER_ITER_MAX} iterations"
    )


def spectral_norm_sq(X) -> float:
    """
    幂迭代估计 ‖X‖₂²

    参数:
        X: 实矩阵

    返回:
        最大奇异值的平方

    异常:
        NumericError: 迭代上限内未收敛
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("X must be a matrix")
    if not np.all(np.isfinite(X)):
        raise ValidationError("X contains non-finite values")
    gram = X.T @ X if X.shape[1] <= X.shape[0] else X @ X.T
    return _power_iteration(gram)


# ============ 全量设计与预测路径 ============

def build_design(X_raw, num_knots: int, m: int, K: int, rho: float) -> Tuple[KnotGrid, List[DesignBlock]]:
    """
    由训练协变量构造全部分块

    参数:
        X_raw: n×p 训练协变量
        num_knots: 每个协变量的节点数
        m: 样条阶数
        K: 最高交互阶
        rho: HTV 惩罚（各阶相同）

    返回:
        (节点列表, 按枚举顺序的 DesignBlock 列表)
    """
    X_raw = np.asarray(X_raw, dtype=float)
    if X_raw.ndim != 2:
        raise ValidationError("X must be an n x p matrix")
    n, p = X_raw.shape
    knots = [compute_knots(X_raw[:, j], num_knots) for j in range(p)]
    bases = {j: univariate_basis(X_raw[:, j], knots[j], m) for j in range(p)}
    blocks = [tensor_block_basis(b, bases, m=m, rho=rho) for b in enumerate_blocks(p, K)]
    logger.info(
        f"Built {len(blocks)} blocks with {sum(b.d for b in blocks)} coefficients (n={n}, p={p})"
    )
    return knots, blocks


def evaluate_block(X_new, block: BlockId, knots: KnotGrid, m: int, col_means) -> np.ndarray:
    """
    预测路径：用训练节点构造新数据的分块基，并减去训练列均值

    参数:
        X_new: 新协变量矩阵
        block: 协变量下标组
        knots: 训练节点
        m: 样条阶数
        col_means: 训练列均值

    返回:
        中心化分块基
    """
    X_new = np.asarray(X_new, dtype=float)
    factors = [univariate_basis(X_new[:, j], knots[j], m) for j in block]
    return _raw_tensor(factors) - np.asarray(col_means, dtype=float)
