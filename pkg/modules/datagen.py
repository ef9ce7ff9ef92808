# -*- coding: utf-8 -*-
"""
合成数据生成模块
非线性交互回归模型、对应的 logistic 模型与相移模型

随机数: 每 GENERATOR_BLOCK_ROWS 行一个 numpy.random.Philox 子流，子流种子为 SeedSequence(seed, spawn_key=(块号,))
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import integrate
from scipy.special import expit

import config
from utils.error_handler import ValidationError

logger = logging.getLogger(__name__)

AUTO_NOISE = 'auto-SNR-3'

LINEAR_G = 'linear_g'
LOGISTIC_G = 'logistic_g'
PHASE_SHIFT = 'phase_shift'
FAMILIES = (LINEAR_G, LOGISTIC_G, PHASE_SHIFT)

# ∫₀¹ g_i(x) dx 的闭式值
_CENTERING = {
    1: 0.5,
    2: 1.0 / 3.0,
    3: math.log(2.0),
    4: 0.15,
    5: -1.0 + 2.0 / math.sqrt(3.0),
    6: 0.0,
    7: -4.0 + 7.0 / math.sqrt(3.0),
}

# (R, ω, L, C) 的取值范围
PHASE_RANGES = (
    (0.0, 100.0),
    (40.0 * math.pi, 560.0 * math.pi),
    (0.0, 1.0),
    (1.0, 11.0),
)

# 交互项: (g 的编号, 组合方式, 协变量下标, 从 0 开始)
_INTERACTIONS = (
    (1, 'prod', (2, 3)),
    (2, 'mean', (0, 2)),
    (3, 'prod', (0, 1)),
    (4, 'prod', (3, 4)),
    (5, 'mean', (3, 5)),
    (6, 'mean', (4, 1)),
    (7, 'prod', (5, 6)),
)


@dataclass(frozen=True)
class SyntheticSpec:
    """
    合成数据规格

    属性:
        n: 样本量
        p: 协变量个数（G 族为 7 或 10，相移模型为 4）
        noise_sd: 噪声标准差，或 'auto-SNR-3'（G 族取 0.5138，相移模型取 sd(φ)/√3）
        seed: 随机种子
        family: 'linear_g' / 'logistic_g' / 'phase_shift'
        signal_scale: 信号缩放，0 表示零信号
    """
    n: int
    p: int = 10
    noise_sd: Union[float, str] = AUTO_NOISE
    seed: int = 0
    family: str = LINEAR_G
    signal_scale: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be at least 1, got {self.n}")
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family}; expected one of {FAMILIES}")
        if self.family == PHASE_SHIFT and self.p != 4:
            raise ValidationError("phase-shift data has exactly 4 covariates")
        if self.family != PHASE_SHIFT and self.p not in (7, 10):
            raise ValidationError(f"G-family data needs p of 7 or 10, got {self.p}")
        if self.noise_sd != AUTO_NOISE and float(self.noise_sd) < 0:
            raise ValidationError("noise_sd must be nonnegative")


@dataclass
class SyntheticData:
    """
    生成结果

    属性:
        X: 协变量（相移模型为映射到 [0,1]⁴ 后的值）
        y: 响应
        signal: 无噪声信号 f(X) 或 φ
        noise_sd: 实际使用的噪声标准差（logistic 为 None）
        X_raw: 相移模型的原始 (R, ω, L, C)
    """
    X: np.ndarray
    y: np.ndarray
    signal: np.ndarray
    noise_sd: Optional[float] = None
    X_raw: Optional[np.ndarray] = None


# ============ g 函数 ============

def g_functions(i: int, x):
    """
    g₁..g₇

    参数:
        i: 编号 1..7
        x: [0,1] 上的实数或数组

    返回:
        g_i(x)
    """
    x = np.asarray(x, dtype=float)
    s = np.sin(2.0 * np.pi * x)
    c = np.cos(2.0 * np.pi * x)
    if i == 1:
        out = x
    elif i == 2:
        out = (2.0 * x - 1.0) ** 2
    elif i == 3:
        out = 1.0 / (1.0 + x)
    elif i == 4:
        out = 0.1 * s + 0.2 * c + 0.3 * s ** 2 + 0.4 * c ** 3 + 0.5 * s ** 3
    elif i == 5:
        out = s / (2.0 - s)
    elif i == 6:
        out = np.sin(4.0 * np.pi * x) / (2.0 + s)
    elif i == 7:
        out = np.cos(4.0 * np.pi * x) / (2.0 + c)
    else:
        raise ValidationError(f"g index must be in 1..7, got {i}")
    return out if out.ndim else float(out)


def centering_constant(i: int) -> float:
    """∫₀¹ g_i(x) dx"""
    if i not in _CENTERING:
        raise ValidationError(f"g index must be in 1..7, got {i}")
    return _CENTERING[i]


def simpson_constant(i: int, panels: int = 100000) -> float:
    """复合 Simpson 公式计算 ∫₀¹ g_i(x) dx，用于校验闭式常数"""
    if panels % 2:
        panels += 1
    grid = np.linspace(0.0, 1.0, panels + 1)
    return float(integrate.simpson(g_functions(i, grid), x=grid))


def centered_g(i: int, x):
    """g̃_i(x) = g_i(x) − ∫₀¹ g_i"""
    return g_functions(i, x) - centering_constant(i)


def regression_function(X) -> np.ndarray:
    """
    无噪声回归函数 f：七个主效应加七个交互项，只依赖前 7 个协变量

    参数:
        X: n×p 矩阵（p ≥ 7）

    返回:
        f(X)
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] < 7:
        raise ValidationError("regression function needs at least 7 covariates")
    f = np.zeros(X.shape[0])
    for i in range(1, 8):
        f += centered_g(i, X[:, i - 1])
    for i, how, (a, b) in _INTERACTIONS:
        z = X[:, a] * X[:, b] if how == 'prod' else 0.5 * (X[:, a] + X[:, b])
        f += centered_g(i, z)
    return f


def phase_shift(R, omega, L, C) -> np.ndarray:
    """φ = arctan((ωL − 1/(ωC))/R)；R = 0 时取连续极限 ±π/2"""
    R, omega, L, C = (np.asarray(v, dtype=float) for v in (R, omega, L, C))
    return np.arctan2(omega * L - 1.0 / (omega * C), R)


# ============ 生成器 ============

def _row_blocks(seed: int, n: int, draw: Callable[[np.random.Generator, int], Tuple[np.ndarray, ...]]):
    """按固定行块抽样，每块一个 Philox 子流；n 增大时已有的行不变"""
    size = config.GENERATOR_BLOCK_ROWS
    parts = []
    for block, start in enumerate(range(0, n, size)):
        child = np.random.SeedSequence(seed, spawn_key=(block,))
        parts.append(draw(np.random.Generator(np.random.Philox(child)), min(size, n - start)))
    return tuple(np.concatenate(column) for column in zip(*parts))


def gen_regression(spec: SyntheticSpec) -> SyntheticData:
    """
    Y = f(X) + ε，X 独立均匀分布于 [0,1]^p，ε ~ N(0, σ²)

    'auto-SNR-3' 时 σ = 0.5138。
    """
    if spec.family != LINEAR_G:
        raise ValidationError(f"gen_regression needs family {LINEAR_G}, got {spec.family}")
    X, z = _row_blocks(spec.seed, spec.n, lambda rng, m: (rng.random((m, spec.p)), rng.standard_normal(m)))
    signal = spec.signal_scale * regression_function(X)
    sd = config.NOISE_SD_G if spec.noise_sd == AUTO_NOISE else float(spec.noise_sd)
    y = signal + sd * z
    return SyntheticData(X=X, y=y, signal=signal, noise_sd=sd)


def gen_logistic(spec: SyntheticSpec) -> SyntheticData:
    """Y ~ Bernoulli(expit(f(X)))"""
    if spec.family != LOGISTIC_G:
        raise ValidationError(f"gen_logistic needs family {LOGISTIC_G}, got {spec.family}")
    X, u = _row_blocks(spec.seed, spec.n, lambda rng, m: (rng.random((m, spec.p)), rng.random(m)))
    signal = spec.signal_scale * regression_function(X)
    y = (u < expit(signal)).astype(float)
    return SyntheticData(X=X, y=y, signal=signal)


def gen_phase_shift(spec: SyntheticSpec) -> SyntheticData:
    """
    相移模型：(R, ω, L, C) 在给定范围内均匀分布，响应 φ 加高斯噪声

    'auto-SNR-3' 时噪声标准差取生成信号的样本标准差除以 √3。
    X 为映射到 [0,1]⁴ 的输入，X_raw 为原始输入。
    """
    if spec.family != PHASE_SHIFT:
        raise ValidationError(f"gen_phase_shift needs family {PHASE_SHIFT}, got {spec.family}")
    unit, z = _row_blocks(spec.seed, spec.n, lambda rng, m: (rng.random((m, 4)), rng.standard_normal(m)))
    lows = np.array([lo for lo, _ in PHASE_RANGES])
    widths = np.array([hi - lo for lo, hi in PHASE_RANGES])
    raw = lows + unit * widths
    signal = spec.signal_scale * phase_shift(raw[:, 0], raw[:, 1], raw[:, 2], raw[:, 3])
    if spec.noise_sd == AUTO_NOISE:
        sd = float(np.std(signal, ddof=1)) / math.sqrt(3.0) if spec.n > 1 else 0.0
    else:
        sd = float(spec.noise_sd)
    y = signal + sd * z
    return SyntheticData(X=unit, y=y, signal=signal, noise_sd=sd, X_raw=raw)


def generate(spec: SyntheticSpec) -> SyntheticData:
    """按 family 调度生成器"""
    if spec.family == LINEAR_G:
        data = gen_regression(spec)
    elif spec.family == LOGISTIC_G:
        data = gen_logistic(spec)
    else:
        data = gen_phase_shift(spec)
    logger.info(f"Generated {spec.family} data: n={spec.n}, p={spec.p}, seed={spec.seed}")
    return data


def signal_to_noise(data: SyntheticData) -> float:
    """sd(signal)/noise_sd"""
    if not data.noise_sd:
        return math.inf
    return float(np.std(data.signal, ddof=1)) / data.noise_sd
