# -*- coding: utf-8 -*-
"""
近端算子核心
单块问题所需的阈值算子、f 的近端映射与共轭、坐标近端根求解和目标函数

记号:
    f(z)  = ½‖r − z‖² + λ√n‖z‖
    f*(u) = ½(‖u + r‖ − λ√n)₊² − ½‖r‖²
"""

import math
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np

import config
from utils.error_handler import SolverFailureError, ValidationError


# ============ 数据类型 ============

@dataclass(frozen=True)
class ThresholdSpec:
    """
    阈值参数

    属性:
        gamma_vec: 逐元素阈值（非负）
        gamma_joint: 整体阈值（非负）
    """
    gamma_vec: np.ndarray
    gamma_joint: float = 0.0

    def __post_init__(self):
        gamma_vec = np.asarray(self.gamma_vec, dtype=float)
        if np.any(gamma_vec < 0) or self.gamma_joint < 0:
            raise ValidationError("thresholds must be nonnegative")
        object.__setattr__(self, 'gamma_vec', gamma_vec)


@dataclass(frozen=True)
class EmpiricalNormTerm:
    """
    误差项与经验范数项 f(z) = ½‖r − z‖² + λ√n‖z‖

    属性:
        r: 残差目标向量，长度 n
        lam: 经验范数惩罚 λ
        n: 样本量
        cached_sqrt_n: √n
    """
    r: np.ndarray
    lam: float
    n: int = field(default=0)
    cached_sqrt_n: float = field(default=0.0)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1:
            raise ValidationError("residual must be a vector")
        if self.lam < 0:
            raise ValidationError(f"lam must be nonnegative, got {self.lam}")
        n = self.n or r.shape[0]
        if n != r.shape[0]:
            raise ValidationError(f"residual length {r.shape[0]} does not match n={n}")
        object.__setattr__(self, 'r', r)
        object.__setattr__(self, 'n', n)
        object.__setattr__(self, 'cached_sqrt_n', math.sqrt(n))

    @property
    def radius(self) -> float:
        """λ√n"""
        return self.lam * self.cached_sqrt_n


def _check_length(v: np.ndarray, term: EmpiricalNormTerm) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (term.n,):
        raise ValidationError(f"expected vector of length {term.n}, got shape {v.shape}")
    return v


# ============ 阈值算子 ============

def soft_threshold(x, gamma_vec) -> np.ndarray:
    """
    逐元素软阈值 S(x, γ) = sign(x)·max(|x| − γ, 0)

    参数:
        x: 输入向量
        gamma_vec: 与 x 同长度的非负阈值（标量也可），或 ThresholdSpec（取其 gamma_vec）

    返回:
        软阈值结果，|x_i| ≤ γ_i 时恰为 0
    """
    if isinstance(gamma_vec, ThresholdSpec):
        gamma_vec = gamma_vec.gamma_vec
    x = np.asarray(x, dtype=float)
    gamma_vec = np.asarray(gamma_vec, dtype=float)
    if gamma_vec.ndim and gamma_vec.shape != x.shape:
        raise ValidationError(
            f"length mismatch: x has shape {x.shape}, gamma has shape {gamma_vec.shape}"
        )
    return np.sign(x) * np.maximum(np.abs(x) - gamma_vec, 0.0)


def joint_soft_threshold(x, gamma) -> np.ndarray:
    """
    整体软阈值 T(x, γ) = (1 − γ/‖x‖)₊·x，T(0, γ) = 0

    参数:
        x: 输入向量
        gamma: 非负阈值，或 ThresholdSpec（取其 gamma_joint）

    返回:
        x 的非负倍数，‖x‖ ≤ γ 时为零向量
    """
    if isinstance(gamma, ThresholdSpec):
        gamma = gamma.gamma_joint
    x = np.asarray(x, dtype=float)
    if gamma < 0:
        raise ValidationError(f"gamma must be nonnegative, got {gamma}")
    norm = float(np.linalg.norm(x))
    if math.isnan(norm) or math.isnan(gamma):
        raise ValidationError("NaN input to joint_soft_threshold")
    if norm <= gamma:
        return np.zeros_like(x)
    return (1.0 - gamma / norm) * x


def sparse_group_threshold(x, spec: ThresholdSpec) -> np.ndarray:
    """
    先逐元素再整体：T(S(x, γ_vec), γ_joint)，即 ‖·‖₁ 加权与 ‖·‖ 之和的近端映射

    使用示例:
        spec = ThresholdSpec(gamma_vec=np.full(3, 0.1), gamma_joint=0.5)
        z = sparse_group_threshold(x, spec)
    """
    return joint_soft_threshold(soft_threshold(x, spec), spec)


def project_l2_ball(x, radius: float) -> np.ndarray:
    """投影到 {‖z‖ ≤ radius}"""
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm <= radius:
        return x.copy()
    return x * (radius / norm)


def empirical_norm(v) -> float:
    """经验范数 ‖v‖ₙ = ‖v‖/√n"""
    v = np.asarray(v, dtype=float)
    return float(np.linalg.norm(v)) / math.sqrt(v.shape[0])


# ============ f 及其共轭 ============

def f_value(z, term: EmpiricalNormTerm) -> float:
    """f(z) = ½‖r − z‖² + λ√n‖z‖"""
    z = _check_length(z, term)
    return 0.5 * float(np.sum((term.r - z) ** 2)) + term.radius * float(np.linalg.norm(z))


def prox_f(z, alpha: float, term: EmpiricalNormTerm) -> np.ndarray:
    """
    αf 的近端映射 prox_{αf}(z) = T(z + αr, αλ√n)/(1 + α)

    参数:
        z: 输入向量，长度 n
        alpha: 正步长
        term: 误差项

    返回:
        ½‖u − z‖² + αf(u) 的唯一极小点
    """
    z = _check_length(z, term)
    if alpha <= 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    return joint_soft_threshold(z + alpha * term.r, alpha * term.radius) / (1.0 + alpha)


def prox_f_star(x, alpha: float, term: EmpiricalNormTerm) -> np.ndarray:
    """
    αf* 的近端映射，由 Moreau 恒等式得到

    prox_{αf*}(x) = x − α·prox_{f/α}(x/α) = x − α/(1+α)·T(x + r, λ√n)

    参数:
        x: 输入向量，长度 n
        alpha: 正步长
        term: 误差项

    返回:
        ½‖u − x‖² + αf*(u) 的极小点
    """
    x = _check_length(x, term)
    if alpha <= 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    return x - (alpha / (1.0 + alpha)) * joint_soft_threshold(x + term.r, term.radius)


def f_star_value(u, term: EmpiricalNormTerm) -> float:
    """
    共轭函数值 f*(u) = ½(‖u + r‖ − λ√n)₊² − ½‖r‖²
    """
    u = _check_length(u, term)
    hinge = max(float(np.linalg.norm(u + term.r)) - term.radius, 0.0)
    return 0.5 * hinge * hinge - 0.5 * float(np.dot(term.r, term.r))


def grad_f_star(u, term: EmpiricalNormTerm) -> np.ndarray:
    """
    共轭函数梯度 ∇f*(u) = T(u + r, λ√n)

    在 ‖u + r‖ = λ√n 处 f* 不可微，返回 T 给出的次梯度（球内为 0）。
    """
    u = _check_length(u, term)
    return joint_soft_threshold(u + term.r, term.radius)


# ============ 坐标近端 ============

def _root_residual(c: float, a: float, sq_norm_minus_i: float, alpha: float, radius: float) -> float:
    return (1.0 + alpha - alpha * radius / math.sqrt(c * c * a * a + sq_norm_minus_i)) * c - 1.0


def coord_prox_f_star(b_i: float, i: int,
                      state: Union[Tuple[float, float], dict],
                      alpha: float, term: EmpiricalNormTerm) -> float:
    """
    坐标近端映射：在第 i 个坐标上极小化 ½‖v − b‖² + αf*(v)

    参数:
        b_i: 第 i 个坐标的输入
        i: 坐标下标（仅用于错误信息）
        state: (r_i, sq_norm_minus_i) 或含这两个键的字典，
               sq_norm_minus_i = ‖v + r‖² − (v_i + r_i)²，调用方维护
        alpha: 正步长
        term: 误差项（提供 λ 与 √n）

    返回:
        新的 v_i = c·(b_i + r_i) − r_i

    异常:
        SolverFailureError: 二分法在上限内未达到残差容差
    """
    if isinstance(state, dict):
        r_i, sq_norm_minus_i = state['r_i'], state['sq_norm_minus_i']
    else:
        r_i, sq_norm_minus_i = state
    sq_norm_minus_i = max(float(sq_norm_minus_i), 0.0)
    a = float(b_i) + float(r_i)
    if a == 0.0:
        return -float(r_i)

    radius = term.radius
    if a * a + sq_norm_minus_i <= radius * radius:
        return float(b_i)

    if sq_norm_minus_i == 0.0:
        c = (1.0 + alpha * radius / abs(a)) / (1.0 + alpha)
        return c * a - float(r_i)

    c = _bisect_scale(a, sq_norm_minus_i, alpha, radius, i)
    return c * a - float(r_i)


def _bisect_scale(a: float, sq_norm_minus_i: float, alpha: float, radius: float, i: int) -> float:
    """在 (0, 1) 上二分求解 (1 + α − αλ√n/√(c²a² + S))·c = 1"""
    lo, hi = 0.0, 1.0
    for _ in range(config.ROOT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        value = _root_residual(mid, a, sq_norm_minus_i, alpha, radius)
        if abs(value) <= config.ROOT_TOLERANCE or hi - lo <= 4.0 * np.finfo(float).eps:
            return mid
        if value < 0.0:
            lo = mid
        else:
            hi = mid
    raise SolverFailureError(
        f"coordinate prox root not found for coordinate {i} "
        f"after {config.ROOT_MAX_ITER} bisection steps",
        details=f"a={a!r}, S={sq_norm_minus_i!r}, alpha={alpha!r}, radius={radius!r}",
    )


# ============ 单块目标函数 ============

def single_block_objective(beta, prob) -> float:
    """
    单块目标 (1/2n)‖r − Xβ‖² + ‖Γβ‖₁ + λ‖Xβ‖ₙ 的精确值

    参数:
        beta: 系数向量，长度 d
        prob: SingleBlockProblem

    返回:
        目标函数值
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (prob.d,):
        raise ValidationError(f"beta must have length {prob.d}, got shape {beta.shape}")
    fit = prob.X @ beta
    n = prob.n
    resid = prob.r - fit
    return (0.5 * float(np.dot(resid, resid)) / n
            + float(np.sum(prob.gamma_diag * np.abs(beta)))
            + prob.lam * float(np.linalg.norm(fit)) / math.sqrt(n))
