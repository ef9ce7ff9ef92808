# -*- coding: utf-8 -*-
"""
回拟合模块
线性 DPAM（中心化形式）与 logistic DPAM（Hessian 上界 1/4 的二次上界）的分块训练，
包括 epoch 计数、检查与回退，以及预测
"""

import logging
import math
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

import config
from modules.basis import DesignBlock, KnotGrid, block_label, build_design, evaluate_block, gamma_matrix
from modules.single_block import SingleBlockProblem, solve_single_block
from utils.error_handler import DivergenceError, ValidationError
from utils.experiment_models import (
    BasisParams, DpamModel, Family, SolverState, TrainConfig, TrainTrace,
)
from utils.prox_core import empirical_norm

logger = logging.getLogger(__name__)

Design = Tuple[KnotGrid, List[DesignBlock]]


# ============ epoch 计数与回退 ============

def _dim(block: Union[DesignBlock, int]) -> int:
    return block.d if isinstance(block, DesignBlock) else int(block)


def epoch_cost(block: Union[DesignBlock, int], scans: float,
               all_blocks: Sequence[Union[DesignBlock, int]]) -> float:
    """
    一次分块访问折算的 epoch：T·d_k/Σd

    参数:
        block: 分块或其维数
        scans: 该次访问消耗的扫描数 T
        all_blocks: 全部分块或维数列表

    返回:
        epoch 增量
    """
    if scans < 0:
        raise ValidationError(f"scans must be nonnegative, got {scans}")
    total = sum(_dim(b) for b in all_blocks)
    return float(scans) * _dim(block) / total


def check_and_recovery(pre_loss: float, post_loss: float, saved_state, candidate_state=None):
    """
    更新后检查训练目标，上升则回退

    参数:
        pre_loss: 更新前的训练目标
        post_loss: 更新后的训练目标
        saved_state: 更新前的状态
        candidate_state: 更新后的状态

    返回:
        ('kept', candidate_state) 或 ('reverted', saved_state)；相等时保留
    """
    if post_loss > pre_loss:
        return 'reverted', saved_state
    return 'kept', candidate_state


# ============ 预测 ============

def _linear_predictor(intercept: float, matrices: Sequence[np.ndarray],
                      coefs: Sequence[np.ndarray], n: int) -> np.ndarray:
    out = np.full(n, float(intercept))
    for mat, coef in zip(matrices, coefs):
        if np.any(coef):
            out += mat @ coef
    return out


def predict_linear_predictor(model: DpamModel, X_new) -> np.ndarray:
    """
    线性预测子：线性模型为 Ŷ，logistic 模型为 f

    参数:
        model: 拟合后的模型
        X_new: 新协变量

    返回:
        长度 n_new 的向量
    """
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != model.n_covariates:
        raise ValidationError(
            f"X_new must have {model.n_covariates} columns, got shape {X_new.shape}"
        )
    matrices, coefs = [], []
    for block in model.blocks:
        coef = model.block_coefs[block]
        if not np.any(coef):
            continue
        matrices.append(evaluate_block(X_new, block, model.knots, model.m, model.col_means[block]))
        coefs.append(coef)
    return _linear_predictor(model.intercept, matrices, coefs, X_new.shape[0])


def predict(model: DpamModel, X_new) -> np.ndarray:
    """
    预测

    返回:
        线性模型为 Ȳ + Σ(Ψ_new − Ψ̄)β̂；logistic 模型为 expit(β̂₀ + Σ(Ψ_new − Ψ̄)β̂)
    """
    f = predict_linear_predictor(model, X_new)
    return expit(f) if model.family == Family.LOGISTIC else f


# ============ 回拟合引擎 ============

class _Backfitter:
    """
    分块循环的状态与更新

    线性：目标 Ỹ = Y − Ȳ，子问题残差 r = Ỹ − Σ_{j≠k}X_jβ_j。
    logistic：r = β₀ + X_kβ_k + 4(Y − p̂)，β₀ ← r̄，子问题用 4Γ 与 4λ。
    """

    def __init__(self, blocks: List[DesignBlock], y: np.ndarray, lam: float,
                 train: TrainConfig, family: Family):
        self.blocks = blocks
        self.y = y
        self.n = y.shape[0]
        self.lam = float(lam)
        self.train = train
        self.family = family
        self.coefs = [np.zeros(b.d) for b in blocks]
        self.fits = [np.zeros(self.n) for _ in blocks]
        self.penalties = [0.0] * len(blocks)
        self.sum_fit = np.zeros(self.n)
        if family == Family.LINEAR:
            self.intercept = float(np.mean(y))
            self.target = y - self.intercept
        else:
            self.intercept = 0.0
            self.target = y
        self.scale = config.LOGISTIC_CURVATURE if family == Family.LOGISTIC else 1.0

    # ---- 目标 ----
    def _loss(self, intercept: float, sum_fit: np.ndarray) -> float:
        if self.family == Family.LINEAR:
            resid = self.target - sum_fit
            return 0.5 * float(np.dot(resid, resid)) / self.n
        f = intercept + sum_fit
        return float(np.mean(np.logaddexp(0.0, f) - self.y * f))

    def _penalty(self, block: DesignBlock, coef: np.ndarray, fit: np.ndarray) -> float:
        return float(np.sum(block.gamma_diag * np.abs(coef))) + self.lam * empirical_norm(fit)

    def objective(self) -> float:
        return self._loss(self.intercept, self.sum_fit) + math.fsum(self.penalties)

    def counts(self) -> Tuple[int, int]:
        blocks = sum(1 for c in self.coefs if np.any(c))
        coefs = int(sum(np.count_nonzero(c) for c in self.coefs))
        return blocks, coefs

    def resync(self):
        """从各分块拟合值重新求和，消除增量更新的舍入累积"""
        total = np.zeros(self.n)
        for fit in self.fits:
            total += fit
        self.sum_fit = total

    # ---- 单块访问 ----
    def visit(self, k: int, cycle: int) -> Tuple[float, bool]:
        """更新第 k 个分块，返回 (消耗扫描数, 是否回退)"""
        block = self.blocks[k]
        others = self.sum_fit - self.fits[k]
        if self.family == Family.LINEAR:
            intercept = self.intercept
            r = self.target - others
            gamma, lam = block.gamma_diag, self.lam
        else:
            p_hat = expit(self.intercept + self.sum_fit)
            working = self.intercept + self.fits[k] + self.scale * (self.y - p_hat)
            intercept = float(np.mean(working))
            r = working - intercept
            gamma, lam = self.scale * block.gamma_diag, self.scale * self.lam

        prob = SingleBlockProblem(block.basis, r, gamma, lam, block.spectral_norm_sq, block.gram)
        seed = int(np.random.SeedSequence([self.train.seed, cycle, k]).generate_state(1)[0])
        try:
            report = solve_single_block(
                self.train.solver, prob, self.train.batch_steps_per_block,
                init=SolverState(beta=self.coefs[k]), seed=seed,
                tau=self.train.tau, alpha=self.train.alpha, delta=self.train.delta,
            )
        except DivergenceError as e:
            raise e.with_block(block.id) from e

        coef = report.beta_hat
        fit = block.basis @ coef if np.any(coef) else np.zeros(self.n)
        penalty = self._penalty(block, coef, fit)
        new_sum = others + fit

        saved = (self.coefs[k], self.fits[k], self.penalties[k], self.intercept)
        candidate = (coef, fit, penalty, intercept)
        decision = 'kept'
        if self.train.recovery_enabled:
            rest = self.penalties[:k] + self.penalties[k + 1:]
            pre_loss = self._loss(self.intercept, others + self.fits[k]) + math.fsum(rest + [self.penalties[k]])
            post_loss = self._loss(intercept, new_sum) + math.fsum(rest + [penalty])
            decision, candidate = check_and_recovery(pre_loss, post_loss, saved, candidate)
            if decision == 'reverted':
                logger.warning(
                    f"Cycle {cycle}: update of block {block_label(block.id)} raised the training "
                    f"objective from {pre_loss!r} to {post_loss!r}; reverted"
                )
        self.coefs[k], self.fits[k], self.penalties[k], self.intercept = candidate
        self.sum_fit = others + self.fits[k]
        return report.scans_used, decision == 'reverted'


def _with_rho(blocks: List[DesignBlock], m: int, rho: float) -> List[DesignBlock]:
    out = []
    for block in blocks:
        gamma = gamma_matrix(block.id, m, rho, block.dims)
        if not np.array_equal(gamma, block.gamma_diag):
            gamma.setflags(write=False)
            block = replace(block, gamma_diag=gamma)
        out.append(block)
    return out


def _fit(X_raw, Y, train: TrainConfig, basis: BasisParams, lam: float, family: Family,
         design: Optional[Design]) -> Tuple[DpamModel, TrainTrace]:
    X_raw = np.asarray(X_raw, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X_raw.ndim != 2 or Y.shape != (X_raw.shape[0],):
        raise ValidationError(f"X must be n x p and Y of length n; got {X_raw.shape} and {Y.shape}")
    if X_raw.shape[0] < 2:
        raise ValidationError("at least two observations are required")
    if lam < 0:
        raise ValidationError(f"lam must be nonnegative, got {lam}")
    if family == Family.LOGISTIC and not np.all((Y == 0) | (Y == 1)):
        raise ValidationError("logistic response must be binary (0/1)")

    if design is None:
        knots, blocks = build_design(X_raw, basis.num_knots, basis.m, basis.K, basis.rho)
    else:
        knots, blocks = design[0], _with_rho(design[1], basis.m, basis.rho)

    engine = _Backfitter(blocks, Y, lam, train, family)
    trace = TrainTrace()
    objective = engine.objective()
    trace.record(0.0, objective, *engine.counts())
    epoch = 0.0
    logger.info(
        f"Backfitting {family.value} DPAM with {train.solver.value}: {len(blocks)} blocks, "
        f"rho={basis.rho!r}, lam={lam!r}, initial objective={objective!r}"
    )

    for cycle in range(1, train.max_cycles + 1):
        for k, block in enumerate(blocks):
            scans, reverted = engine.visit(k, cycle)
            epoch += epoch_cost(block, scans, blocks)
            if reverted:
                trace.recoveries.append((cycle, block.id))
            trace.block_losses.append(engine.objective())
        engine.resync()
        previous, objective = objective, engine.objective()
        trace.record(epoch, objective, *engine.counts())
        trace.cycles = cycle
        logger.info(
            f"Cycle {cycle}: objective={objective!r}, epoch={epoch:.4f}, "
            f"nonzero blocks={trace.nonzero_blocks[-1]}"
        )
        if abs(previous - objective) < train.obj_tolerance:
            trace.converged = True
            break
        if epoch >= train.max_epochs:
            logger.info(f"Stopped at epoch budget {train.max_epochs}")
            break

    model = DpamModel(
        family=family,
        intercept=engine.intercept,
        blocks=[b.id for b in blocks],
        block_coefs={b.id: c.copy() for b, c in zip(blocks, engine.coefs)},
        col_means={b.id: b.col_means for b in blocks},
        knots=knots,
        m=basis.m,
        K=basis.K,
        rho=basis.rho,
        lam=float(lam),
    )
    active = [(b.basis, c) for b, c in zip(blocks, engine.coefs) if np.any(c)]
    trace.fitted = _linear_predictor(engine.intercept, [a[0] for a in active],
                                     [a[1] for a in active], X_raw.shape[0])
    return model, trace


def fit_linear(X_raw, Y, train: TrainConfig, basis: BasisParams, lam: float,
               design: Optional[Design] = None) -> Tuple[DpamModel, TrainTrace]:
    """
    训练线性 DPAM

    参数:
        X_raw: n×p 协变量
        Y: 响应
        train: 训练配置
        basis: 基函数参数（含 ρ）
        lam: 经验范数惩罚 λ
        design: 预先构造的 (节点, 分块)，用于网格实验复用

    返回:
        (DpamModel, TrainTrace)

    异常:
        DivergenceError: 单块求解发散，附带分块标识
    """
    return _fit(X_raw, Y, train, basis, lam, Family.LINEAR, design)


def fit_logistic(X_raw, Y, train: TrainConfig, basis: BasisParams, lam: float,
                 design: Optional[Design] = None) -> Tuple[DpamModel, TrainTrace]:
    """
    训练 logistic DPAM

    每次分块访问重新计算 p̂ = expit(f̂)，工作响应 r = β̂₀ + X_kβ̂_k + 4(Y − p̂)，
    截距取 r̄，子问题在 r − r̄ 上求解且两个惩罚均乘以 4。
    收敛按完整的惩罚目标（平均负对数似然加惩罚）判断。
    """
    return _fit(X_raw, Y, train, basis, lam, Family.LOGISTIC, design)


def fit(X_raw, Y, train: TrainConfig, basis: BasisParams, lam: float,
        family: Family = Family.LINEAR, design: Optional[Design] = None) -> Tuple[DpamModel, TrainTrace]:
    """按响应类型调度 fit_linear / fit_logistic"""
    family = Family.parse(family) if isinstance(family, str) else family
    return _fit(X_raw, Y, train, basis, lam, family, design)
