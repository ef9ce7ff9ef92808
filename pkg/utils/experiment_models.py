# -*- coding: utf-8 -*-
"""
求解与实验数据结构定义
定义步长、求解报告、训练配置、训练轨迹、模型和实验配置等数据模型
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

import config
from utils.error_handler import ConfigError, ValidationError

BlockId = Tuple[int, ...]


class SolverKind(str, Enum):
    """单块求解器"""
    CP = 'CP'
    AMA = 'AMA'
    STOC_CP = 'StocCP'
    STOC_AMA_SAG = 'StocAMA_SAG'
    STOC_AMA_SAGA = 'StocAMA_SAGA'
    CC = 'CC'
    STOC_CC = 'StocCC'
    CONDAT_VU = 'CondatVu'
    ORACLE = 'Oracle'

    @property
    def is_stochastic(self) -> bool:
        return self in (SolverKind.STOC_CP, SolverKind.STOC_AMA_SAG,
                        SolverKind.STOC_AMA_SAGA, SolverKind.STOC_CC)

    @classmethod
    def parse(cls, value: str) -> 'SolverKind':
        if isinstance(value, cls):
            return value
        for kind in cls:
            if kind.value.lower() == str(value).lower():
                return kind
        raise ConfigError(
            f"unknown solver: {value}; available: {', '.join(k.value for k in cls)}"
        )


class Family(str, Enum):
    """响应类型"""
    LINEAR = 'linear'
    LOGISTIC = 'logistic'

    @classmethod
    def parse(cls, value: str) -> 'Family':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown family: {value}; expected linear or logistic")


@dataclass(frozen=True)
class StepSizes:
    """
    原始/对偶步长

    属性:
        tau: 原始步长 τ
        alpha: 对偶步长 α
    """
    tau: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.tau > 0 or not self.alpha > 0:
            raise ValidationError(f"step sizes must be positive, got tau={self.tau}, alpha={self.alpha}")


@dataclass
class SolverState:
    """
    求解器迭代状态

    属性:
        beta: 原始变量 β
        beta_prev: 上一步 β（CP 外推用）
        dual: 对偶变量（u 或 v）
        w: Xᵀ·dual/n 的滚动值
        L2: ‖dual + r‖² 的滚动值
        rng_seed: 随机种子
    """
    beta: np.ndarray
    beta_prev: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    L2: float = 0.0
    rng_seed: int = 0


@dataclass
class SolveReport:
    """
    单块求解报告

    属性:
        beta_hat: 解
        objective_trace: 每个批步/扫描后的精确目标值
        was_reset_to_zero: 是否由零重置条件置零
        scans_used: 消耗的扫描数
        seed: 随机种子（批量算法为 None）
        step_feasible: 步长是否满足收敛条件
        bookkeeping_drift: 审计模式下滚动量刷新时的最大偏差
        perturbed_trace: CC 算法的扰动目标轨迹
    """
    beta_hat: np.ndarray
    objective_trace: np.ndarray
    was_reset_to_zero: bool = False
    scans_used: float = 0.0
    seed: Optional[int] = None
    step_feasible: bool = True
    bookkeeping_drift: Optional[float] = None
    perturbed_trace: Optional[np.ndarray] = None


@dataclass
class TrainConfig:
    """
    回拟合训练配置

    属性:
        solver: 单块求解器
        batch_steps_per_block: 每次访问分块的批步数（随机算法为扫描数）
        max_epochs: 最大 epoch 数
        obj_tolerance: 一个循环内目标下降量的收敛阈值
        tau: 原始步长（None 表示按分块取默认值）
        alpha: 对偶步长（None 表示默认值）
        delta: CC 扰动 δ
        seed: 随机种子
        recovery_enabled: 是否启用检查与回退
        max_cycles: 循环次数上限
    """
    solver: SolverKind = SolverKind.ORACLE
    batch_steps_per_block: int = config.BATCH_STEPS_BATCH
    max_epochs: float = config.DEFAULT_MAX_EPOCHS
    obj_tolerance: float = config.LINEAR_OBJ_TOLERANCE
    tau: Optional[float] = None
    alpha: Optional[float] = None
    delta: float = config.DEFAULT_DELTA
    seed: int = 0
    recovery_enabled: bool = False
    max_cycles: int = 1000

    def __post_init__(self):
        if isinstance(self.solver, str):
            self.solver = SolverKind.parse(self.solver)
        if self.batch_steps_per_block < 1:
            raise ValidationError("batch_steps_per_block must be at least 1")
        if not self.obj_tolerance > 0:
            raise ValidationError("obj_tolerance must be positive")
        if not self.max_epochs > 0:
            raise ValidationError("max_epochs must be positive")
        if self.delta <= 0:
            raise ValidationError("delta must be positive")

    @classmethod
    def defaults_for(cls, solver, family: Family = Family.LINEAR, **overrides) -> 'TrainConfig':
        """按求解器和响应类型取论文默认的批步数与容差"""
        solver = SolverKind.parse(solver) if isinstance(solver, str) else solver
        if solver.is_stochastic:
            steps = (config.BATCH_STEPS_STOCHASTIC_LOGISTIC if family == Family.LOGISTIC
                     else config.BATCH_STEPS_STOCHASTIC_LINEAR)
        else:
            steps = config.BATCH_STEPS_BATCH
        tol = config.LOGISTIC_OBJ_TOLERANCE if family == Family.LOGISTIC else config.LINEAR_OBJ_TOLERANCE
        values = dict(solver=solver, batch_steps_per_block=steps, obj_tolerance=tol)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class BasisParams:
    """
    基函数参数

    属性:
        m: 样条阶数（1 分段常数，2 分段线性）
        num_knots: 每个协变量的节点数 M
        K: 最高交互阶
        rho: HTV 惩罚 ρ（各阶相同）
    """
    m: int = config.DEFAULT_ORDER_M
    num_knots: int = config.DEFAULT_NUM_KNOTS
    K: int = config.DEFAULT_INTERACTION_K
    rho: float = 0.0


@dataclass
class TrainTrace:
    """
    训练轨迹

    属性:
        epoch_marks: 累计 epoch（第 0 个为初始点）
        objective: 各标记处的训练目标
        nonzero_blocks: 非零分块数
        nonzero_coefs: 非零系数数
        recoveries: 回退事件 (cycle, BlockId)
        cycles: 已完成的循环数
        converged: 是否因容差停止
        fitted: 训练集拟合值（与 predict 同一路径计算）
        block_losses: 启用回退时每次分块访问后的训练目标
    """
    epoch_marks: List[float] = field(default_factory=list)
    objective: List[float] = field(default_factory=list)
    nonzero_blocks: List[int] = field(default_factory=list)
    nonzero_coefs: List[int] = field(default_factory=list)
    recoveries: List[Tuple[int, BlockId]] = field(default_factory=list)
    cycles: int = 0
    converged: bool = False
    fitted: Optional[np.ndarray] = None
    block_losses: List[float] = field(default_factory=list)

    def record(self, epoch: float, objective: float, nonzero_blocks: int, nonzero_coefs: int):
        """追加一个标记点"""
        self.epoch_marks.append(float(epoch))
        self.objective.append(float(objective))
        self.nonzero_blocks.append(int(nonzero_blocks))
        self.nonzero_coefs.append(int(nonzero_coefs))


@dataclass
class DpamModel:
    """
    拟合后的 DPAM 模型

    属性:
        family: 响应类型
        intercept: 截距（线性模型为 Ȳ，logistic 为 β₀）
        blocks: 分块列表（枚举顺序）
        block_coefs: 每个分块的系数向量
        col_means: 每个分块的训练集列均值
        knots: 每个协变量的节点
        m: 样条阶数
        K: 最高交互阶
        rho: HTV 惩罚
        lam: 经验范数惩罚
        input_means: 训练时协变量标准化的均值（未标准化为 None）
        input_sds: 训练时协变量标准化的标准差
    """
    family: Family
    intercept: float
    blocks: List[BlockId]
    block_coefs: Dict[BlockId, np.ndarray]
    col_means: Dict[BlockId, np.ndarray]
    knots: List[np.ndarray]
    m: int
    K: int
    rho: float
    lam: float
    input_means: Optional[np.ndarray] = None
    input_sds: Optional[np.ndarray] = None

    @property
    def n_covariates(self) -> int:
        return len(self.knots)

    def nonzero_blocks(self) -> List[BlockId]:
        return [b for b in self.blocks if np.any(self.block_coefs[b] != 0)]

    def nonzero_coef_count(self) -> int:
        return int(sum(np.count_nonzero(self.block_coefs[b]) for b in self.blocks))


@dataclass(frozen=True)
class PenaltyValue:
    """
    惩罚参数取值：绝对值，或相对 ‖Ỹ‖ₙ 的 2 的幂

    属性:
        absolute: 绝对值
        exponent: 相对模式下的 k，表示 ‖Ỹ‖ₙ/2^k
        text: 原始写法，用于输出目录命名
    """
    absolute: Optional[float] = None
    exponent: Optional[float] = None
    text: str = ''

    def resolve(self, norm_y: float) -> float:
        if self.exponent is not None:
            return float(norm_y) / (2.0 ** self.exponent)
        return float(self.absolute)

    @property
    def is_relative(self) -> bool:
        return self.exponent is not None


@dataclass
class DatasetSource:
    """
    数据来源：生成或 CSV

    属性:
        kind: 'generate' 或 'csv'
        family: 生成族（linear_g / logistic_g / phase_shift），CSV 时为 None
        n: 生成样本量
        p: 生成协变量个数
        seed: 生成种子
        noise_sd: 噪声标准差，None 表示默认
        path: CSV 路径
        response: 响应列名
        standardize: 是否标准化协变量
        split: 训练集比例，None 表示不划分（生成数据另生成验证集）
        split_seed: 划分种子
        strict: CSV 中缺失或非数值单元格是否直接报错（否则剔除该行）
    """
    kind: str = 'generate'
    family: Optional[str] = 'linear_g'
    n: int = 1000
    p: int = 10
    seed: int = 1
    noise_sd: Optional[float] = None
    path: Optional[str] = None
    response: str = 'y'
    standardize: bool = False
    split: Optional[float] = None
    split_seed: int = config.DEFAULT_SPLIT_SEED
    strict: bool = True


@dataclass
class ExperimentConfig:
    """
    实验配置

    属性:
        dataset: 数据来源
        family: 响应类型
        basis: 基函数参数（rho 由网格给出）
        rho_grid: ρ 取值列表
        lam_grid: λ 取值列表
        train: 训练配置模板（seed 由 seeds 覆盖）
        seeds: 种子列表
        output_dir: 输出目录
        workers: 并行进程数
    """
    dataset: DatasetSource
    family: Family = Family.LINEAR
    basis: BasisParams = field(default_factory=BasisParams)
    rho_grid: List[PenaltyValue] = field(default_factory=list)
    lam_grid: List[PenaltyValue] = field(default_factory=list)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: List[int] = field(default_factory=lambda: [0])
    output_dir: str = config.OUTPUT_DIR
    workers: int = config.MAX_WORKERS

    def validate(self):
        if not self.rho_grid or not self.lam_grid:
            raise ConfigError("penalty grid must contain at least one rho and one lam")
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if any(v.is_relative for v in self.rho_grid):
            raise ConfigError("rho must be absolute (use 2^-k or a number)")
        if any(v.resolve(1.0) < 0 for v in self.rho_grid + self.lam_grid):
            raise ConfigError("penalties must be nonnegative")
        if self.basis.m not in (1, 2):
            raise ConfigError(f"order_m must be 1 or 2, got {self.basis.m}")
        if self.basis.num_knots < 2:
            raise ConfigError("knots must be at least 2")
        if self.basis.K < 1:
            raise ConfigError("interaction_K must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.dataset.kind not in ('generate', 'csv'):
            raise ConfigError(f"unknown dataset source: {self.dataset.kind}")
        if self.dataset.kind == 'csv' and not self.dataset.path:
            raise ConfigError("csv dataset requires a data path")
        if self.dataset.split is not None and not 0 < self.dataset.split < 1:
            raise ConfigError("split must lie in (0, 1)")
        return self
