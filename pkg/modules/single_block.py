# -*- coding: utf-8 -*-
"""
单块求解器模块
求解 min_β (1/2n)‖r − Xβ‖² + ‖Γβ‖₁ + λ‖Xβ‖ₙ

包含:
    - 批量 Chambolle–Pock 与线性化 AMA（带零重置条件）
    - 随机 Chambolle–Pock 与随机线性化 AMA（SAG / SAGA）
    - 凹共轭 MM（批量与随机 SAGA，扰动 δ）
    - Condat–Vũ 三算子分裂
    - 精确 Lasso（坐标下降 + 活跃集求解 + KKT 证书）再做整体阈值
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import linalg

import config
from modules.basis import spectral_norm_sq
from utils.error_handler import (
    ConvergenceError, DivergenceError, InternalError, ValidationError,
)
from utils.experiment_models import SolveReport, SolverKind, SolverState, StepSizes
from utils.prox_core import (
    EmpiricalNormTerm, coord_prox_f_star, empirical_norm, project_l2_ball,
    single_block_objective, soft_threshold,
)

logger = logging.getLogger(__name__)

InitLike = Union[None, np.ndarray, SolverState]


# ============ 问题定义 ============

@dataclass
class SingleBlockProblem:
    """
    单块问题实例

    属性:
        X: n×d 设计矩阵
        r: 长度 n 的残差目标
        gamma_diag: Γ 的对角元（非负）
        lam: 经验范数惩罚 λ
        spectral_norm_sq: ‖X‖₂²，缺省时用幂迭代估计
        gram: XᵀX/n，缺省时按需计算
    """
    X: np.ndarray
    r: np.ndarray
    gamma_diag: np.ndarray
    lam: float
    spectral_norm_sq: Optional[float] = None
    gram: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.gamma_diag = np.asarray(self.gamma_diag, dtype=float)
        if self.X.ndim != 2:
            raise ValidationError("X must be a matrix")
        n, d = self.X.shape
        if self.r.shape != (n,):
            raise ValidationError(f"r must have length {n}, got shape {self.r.shape}")
        if self.gamma_diag.shape != (d,):
            raise ValidationError(f"gamma_diag must have length {d}, got shape {self.gamma_diag.shape}")
        if np.any(self.gamma_diag < 0):
            raise ValidationError("gamma_diag must be nonnegative")
        if self.lam < 0:
            raise ValidationError(f"lam must be nonnegative, got {self.lam}")
        if self.spectral_norm_sq is None:
            self.spectral_norm_sq = spectral_norm_sq(self.X)
        self._term = None
        self._max_row_sq = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def term(self) -> EmpiricalNormTerm:
        if self._term is None:
            self._term = EmpiricalNormTerm(self.r, self.lam)
        return self._term

    @property
    def max_row_norm_sq(self) -> float:
        if self._max_row_sq is None:
            self._max_row_sq = float(np.max(np.einsum('ij,ij->i', self.X, self.X)))
        return self._max_row_sq

    def gram_matrix(self) -> np.ndarray:
        if self.gram is None:
            self.gram = self.X.T @ self.X / self.n
        return self.gram

    def with_penalties(self, gamma_diag, lam: float) -> 'SingleBlockProblem':
        """同一设计、不同惩罚的新问题"""
        return SingleBlockProblem(self.X, self.r, gamma_diag, lam,
                                  self.spectral_norm_sq, self.gram)


# ============ 步长 ============

def default_step_sizes(kind: SolverKind, prob: SingleBlockProblem,
                       alpha: Optional[float] = None) -> Optional[StepSizes]:
    """
    默认步长

    参数:
        kind: 求解器
        prob: 单块问题
        alpha: 指定的对偶步长，None 取 1

    返回:
        StepSizes；CC 与 Oracle 不需要步长，返回 None
    """
    alpha = 1.0 if alpha is None else float(alpha)
    norm_sq = prob.spectral_norm_sq
    n = prob.n
    if kind in (SolverKind.CC, SolverKind.ORACLE):
        return None
    if kind.is_stochastic:
        row_sq = prob.max_row_norm_sq
        if row_sq <= 0:
            return StepSizes(tau=1.0, alpha=alpha)
        if kind == SolverKind.STOC_CC:
            return StepSizes(tau=1.0 / (3.0 * row_sq), alpha=alpha)
        return StepSizes(tau=1.0 / (3.0 * alpha * row_sq), alpha=alpha)
    if norm_sq <= 0:
        return StepSizes(tau=1.0, alpha=alpha)
    if kind == SolverKind.CP:
        bound = n / (alpha * norm_sq)
    elif kind == SolverKind.AMA:
        bound = (4.0 * n / 3.0) / (alpha * norm_sq)
    else:
        bound = n / ((alpha + 0.5) * norm_sq)
    return StepSizes(tau=config.STEP_SAFETY * bound, alpha=alpha)


def resolve_step_sizes(kind: SolverKind, prob: SingleBlockProblem,
                       tau: Optional[float] = None, alpha: Optional[float] = None) -> Optional[StepSizes]:
    """用户给定的 τ/α 覆盖默认值"""
    sizes = default_step_sizes(kind, prob, alpha)
    if sizes is None:
        return None
    return StepSizes(tau=sizes.tau if tau is None else float(tau), alpha=sizes.alpha)


def step_feasibility(kind: SolverKind, sizes: StepSizes, prob: SingleBlockProblem) -> bool:
    """
    检查步长是否满足收敛条件

    CP: ατ‖X‖² ≤ n；AMA: α < 2 且 ατ‖X‖² ≤ 4n/3；Condat–Vũ: (α + ½)τ‖X‖² < n。
    随机算法没有可检验的条件，恒为 True。
    """
    n, norm_sq = prob.n, prob.spectral_norm_sq
    product = sizes.alpha * sizes.tau * norm_sq
    if kind == SolverKind.CP:
        return product <= n * (1.0 + 1e-12)
    if kind == SolverKind.AMA:
        return sizes.alpha < 2.0 and product <= (4.0 * n / 3.0) * (1.0 + 1e-12)
    if kind == SolverKind.CONDAT_VU:
        return (sizes.alpha + 0.5) * sizes.tau * norm_sq < n
    return True


def _checked_sizes(kind: SolverKind, sizes: Optional[StepSizes], prob: SingleBlockProblem) -> Tuple[StepSizes, bool]:
    sizes = sizes or default_step_sizes(kind, prob)
    feasible = step_feasibility(kind, sizes, prob)
    if not feasible:
        logger.warning(
            f"{kind.value} step sizes tau={sizes.tau!r}, alpha={sizes.alpha!r} "
            f"violate the convergence condition (n={prob.n}, |X|^2={prob.spectral_norm_sq!r})"
        )
    return sizes, feasible


# ============ 公共工具 ============

def _initial_state(prob: SingleBlockProblem, init: InitLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """返回 (β, β_prev, dual)；对偶缺省为 Xβ⁰ − r"""
    if init is None:
        beta = np.zeros(prob.d)
        beta_prev, dual = None, None
    elif isinstance(init, SolverState):
        beta = np.array(init.beta, dtype=float)
        beta_prev = None if init.beta_prev is None else np.array(init.beta_prev, dtype=float)
        dual = None if init.dual is None else np.array(init.dual, dtype=float)
    else:
        beta = np.array(init, dtype=float)
        beta_prev, dual = None, None
    if beta.shape != (prob.d,):
        raise ValidationError(f"initial beta must have length {prob.d}, got shape {beta.shape}")
    if beta_prev is None:
        beta_prev = beta.copy()
    if dual is None:
        dual = prob.X @ beta - prob.r
    if dual.shape != (prob.n,):
        raise ValidationError(f"initial dual must have length {prob.n}")
    return beta, beta_prev, dual


def _ensure_finite(step: int, *arrays: np.ndarray):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise DivergenceError("non-finite iterate", step)


def _zero_design_report(prob: SingleBlockProblem, steps: int, seed=None) -> SolveReport:
    """X 全零时目标只剩 ‖Γβ‖₁ 与常数，解为 0"""
    beta = np.zeros(prob.d)
    obj = single_block_objective(beta, prob)
    return SolveReport(beta_hat=beta, objective_trace=np.full(max(steps, 1), obj),
                       was_reset_to_zero=True, scans_used=float(steps), seed=seed)


def _stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


# ============ 批量 Chambolle–Pock ============

def solve_cp_batch(prob: SingleBlockProblem, steps: int, sizes: Optional[StepSizes] = None,
                   init: InitLike = None) -> SolveReport:
    """
    批量 Chambolle–Pock

    v ← q − α/(1+α)·T(q + r, λ√n)，q = v + αX(2β − β_prev)
    β ← S(β − (τ/n)Xᵀv, τΓ)

    最后一次迭代若 ‖q + r‖ₙ ≤ λ，则将 β 置零。

    参数:
        prob: 单块问题
        steps: 批步数 B
        sizes: 步长，None 取默认
        init: 初始 β 或 SolverState

    返回:
        SolveReport
    """
    if prob.spectral_norm_sq <= 0:
        return _zero_design_report(prob, steps)
    sizes, feasible = _checked_sizes(SolverKind.CP, sizes, prob)
    tau, alpha = sizes.tau, sizes.alpha
    X, r, n = prob.X, prob.r, prob.n
    radius = prob.term.radius
    shrink = alpha / (1.0 + alpha)
    threshold = tau * prob.gamma_diag

    beta, beta_prev, v = _initial_state(prob, init)
    trace = np.empty(steps)
    last_norm = math.inf
    for k in range(steps):
        q = v + alpha * (X @ (2.0 * beta - beta_prev))
        s = q + r
        last_norm = float(np.linalg.norm(s))
        v = q - (shrink * (1.0 - radius / last_norm)) * s if last_norm > radius else q
        beta_prev = beta
        beta = soft_threshold(beta - (tau / n) * (X.T @ v), threshold)
        _ensure_finite(k, beta, v)
        trace[k] = single_block_objective(beta, prob)

    reset = steps > 0 and last_norm <= radius
    if reset:
        beta = np.zeros(prob.d)
    return SolveReport(beta_hat=beta, objective_trace=trace, was_reset_to_zero=reset,
                       scans_used=float(steps), step_feasible=feasible)


# ============ 批量线性化 AMA ============

def solve_ama_batch(prob: SingleBlockProblem, steps: int, sizes: Optional[StepSizes] = None,
                    init: InitLike = None) -> SolveReport:
    """
    批量线性化 AMA

    z ← T(r + u, λ√n)
    β ← S(β − (τ/n)Xᵀ(u + α(Xβ − z)), τΓ)
    u ← u + α(Xβ − z)

    最后一次迭代若 ‖r + u‖ₙ ≤ λ，则将 β 置零。
    """
    if prob.spectral_norm_sq <= 0:
        return _zero_design_report(prob, steps)
    sizes, feasible = _checked_sizes(SolverKind.AMA, sizes, prob)
    tau, alpha = sizes.tau, sizes.alpha
    X, r, n = prob.X, prob.r, prob.n
    radius = prob.term.radius
    threshold = tau * prob.gamma_diag

    beta, _, u = _initial_state(prob, init)
    xb = X @ beta
    trace = np.empty(steps)
    last_norm = math.inf
    for k in range(steps):
        s = r + u
        last_norm = float(np.linalg.norm(s))
        z = (1.0 - radius / last_norm) * s if last_norm > radius else np.zeros(n)
        beta = soft_threshold(beta - (tau / n) * (X.T @ (u + alpha * (xb - z))), threshold)
        xb = X @ beta
        u = u + alpha * (xb - z)
        _ensure_finite(k, beta, u)
        trace[k] = single_block_objective(beta, prob)

    reset = steps > 0 and last_norm <= radius
    if reset:
        beta = np.zeros(prob.d)
    return SolveReport(beta_hat=beta, objective_trace=trace, was_reset_to_zero=reset,
                       scans_used=float(steps), step_feasible=feasible)


# ============ 随机 Chambolle–Pock ============

def solve_cp_stochastic(prob: SingleBlockProblem, batch_steps: int,
                        sizes: Optional[StepSizes] = None, init: InitLike = None,
                        seed: int = 0) -> SolveReport:
    """
    随机 Chambolle–Pock（SAGA 型原始梯度）

    每步均匀有放回抽一行 i：
        v_i ← 坐标近端（b_i = v_i + αX_i(2β − β_prev)）
        G = X_i(v_i⁺ − v_i) + w
        β ← S(β − τG, τΓ)
        w ← w + X_i(v_i⁺ − v_i)/n，L² 同步更新

    n 步计为一次扫描，共 batch_steps 次扫描；每次扫描结束时从头刷新 w 与 L²，
    刷新前后的最大偏差记入 bookkeeping_drift。
    """
    if prob.spectral_norm_sq <= 0:
        return _zero_design_report(prob, batch_steps, seed)
    sizes, feasible = _checked_sizes(SolverKind.STOC_CP, sizes, prob)
    tau, alpha = sizes.tau, sizes.alpha
    X, r, n = prob.X, prob.r, prob.n
    term = prob.term
    threshold = tau * prob.gamma_diag
    rng = _stream(seed)

    beta, beta_prev, v = _initial_state(prob, init)
    w = X.T @ v / n
    L2 = float(np.dot(v + r, v + r))
    trace = np.empty(batch_steps)
    drift = 0.0
    for scan in range(batch_steps):
        for t, i in enumerate(rng.integers(0, n, size=n)):
            xi = X[i]
            vi, ri = v[i], r[i]
            b_i = vi + alpha * float(xi @ (2.0 * beta - beta_prev))
            old = vi + ri
            sq_minus = max(L2 - old * old, 0.0)
            vi_new = coord_prox_f_star(b_i, i, (ri, sq_minus), alpha, term)
            if not math.isfinite(vi_new):
                raise DivergenceError("non-finite dual coordinate", scan * n + t)
            dv = vi_new - vi
            beta_prev = beta
            beta = soft_threshold(beta - tau * (xi * dv + w), threshold)
            w += xi * (dv / n)
            new = vi_new + ri
            L2 = sq_minus + new * new
            v[i] = vi_new
        _ensure_finite((scan + 1) * n - 1, beta, w)
        w, L2, scan_drift = _refresh(X, v, r, w, L2)
        drift = max(drift, scan_drift)
        trace[scan] = single_block_objective(beta, prob)

    reset = False
    if batch_steps > 0:
        q = v + alpha * (X @ (2.0 * beta - beta_prev))
        reset = float(np.linalg.norm(q + r)) <= term.radius
        if reset:
            beta = np.zeros(prob.d)
    return SolveReport(beta_hat=beta, objective_trace=trace, was_reset_to_zero=reset,
                       scans_used=float(batch_steps), seed=seed, step_feasible=feasible,
                       bookkeeping_drift=drift)


def _refresh(X: np.ndarray, dual: np.ndarray, r: np.ndarray, w: np.ndarray, L2: float):
    """从头重算 w = Xᵀdual/n 与 L² = ‖dual + r‖²，返回 (w, L², 偏差)"""
    w_ref = X.T @ dual / X.shape[0]
    s = dual + r
    L2_ref = float(np.dot(s, s))
    drift = max(float(np.max(np.abs(w - w_ref))) if w.size else 0.0, abs(L2 - L2_ref))
    return w_ref, L2_ref, drift


# ============ 随机线性化 AMA ============

def solve_ama_stochastic(prob: SingleBlockProblem, batch_steps: int,
                         sizes: Optional[StepSizes] = None, init: InitLike = None,
                         seed: int = 0, variant: str = 'SAGA') -> SolveReport:
    """
    随机线性化 AMA（SAG / SAGA）

    每步抽一行 i：
        ∇_i f*(u) = (1 − λ√n/L)₊(r_i + u_i)，L = ‖u + r‖
        u_i ← u_i + α(X_iβ − ∇_i f*(u))
        SAG:  G = w + X_iΔu_i/n + αX_i(X_iβ − ∇_i f*(u⁺))
        SAGA: G = w + X_iΔu_i   + αX_i(X_iβ − ∇_i f*(u⁺))
        β ← S(β − τG, τΓ)，w ← w + X_iΔu_i/n

    最后若 ‖r + u‖ₙ ≤ λ，则将 β 置零。
    """
    variant = variant.upper()
    if variant not in ('SAG', 'SAGA'):
        raise ValidationError(f"variant must be SAG or SAGA, got {variant}")
    kind = SolverKind.STOC_AMA_SAG if variant == 'SAG' else SolverKind.STOC_AMA_SAGA
    if prob.spectral_norm_sq <= 0:
        return _zero_design_report(prob, batch_steps, seed)
    sizes, feasible = _checked_sizes(kind, sizes, prob)
    tau, alpha = sizes.tau, sizes.alpha
    X, r, n = prob.X, prob.r, prob.n
    radius = prob.term.radius
    threshold = tau * prob.gamma_diag
    correction_scale = 1.0 / n if variant == 'SAG' else 1.0
    rng = _stream(seed)

    beta, _, u = _initial_state(prob, init)
    w = X.T @ u / n
    L2 = float(np.dot(u + r, u + r))
    trace = np.empty(batch_steps)
    drift = 0.0
    for scan in range(batch_steps):
        for t, i in enumerate(rng.integers(0, n, size=n)):
            xi = X[i]
            ui, ri = u[i], r[i]
            L = math.sqrt(L2)
            old = ri + ui
            grad_old = (1.0 - radius / L) * old if L > radius else 0.0
            xb = float(xi @ beta)
            ui_new = ui + alpha * (xb - grad_old)
            if not math.isfinite(ui_new):
                raise DivergenceError("non-finite dual coordinate", scan * n + t)
            new = ri + ui_new
            L2 = max(L2 - old * old + new * new, 0.0)
            L = math.sqrt(L2)
            grad_new = (1.0 - radius / L) * new if L > radius else 0.0
            du = ui_new - ui
            beta = soft_threshold(
                beta - tau * (w + xi * (correction_scale * du + alpha * (xb - grad_new))),
                threshold,
            )
            w += xi * (du / n)
            u[i] = ui_new
        _ensure_finite((scan + 1) * n - 1, beta, w)
        w, L2, scan_drift = _refresh(X, u, r, w, L2)
        drift = max(drift, scan_drift)
        trace[scan] = single_block_objective(beta, prob)

    reset = batch_steps > 0 and math.sqrt(L2) <= radius
    if reset:
        beta = np.zeros(prob.d)
    return SolveReport(beta_hat=beta, objective_trace=trace, was_reset_to_zero=reset,
                       scans_used=float(batch_steps), seed=seed, step_feasible=feasible,
                       bookkeeping_drift=drift)


# ============ 凹共轭 MM ============

def perturbed_objective(beta, prob: SingleBlockProblem, delta: float) -> float:
    """扰动目标 (1/2n)‖r − Xβ‖² + ‖Γβ‖₁ + λ√(‖Xβ‖ₙ² + δ)"""
    beta = np.asarray(beta, dtype=float)
    fit = prob.X @ beta
    resid = prob.r - fit
    n = prob.n
    return (0.5 * float(np.dot(resid, resid)) / n
            + float(np.sum(prob.gamma_diag * np.abs(beta)))
            + prob.lam * math.sqrt(float(np.dot(fit, fit)) / n + delta))


def perturbed_smooth_gradient(beta, prob: SingleBlockProblem, delta: float) -> np.ndarray:
    """光滑部分 h₁(β) = (1/2n)‖r − Xβ‖² + λ√(‖Xβ‖ₙ² + δ) 的梯度"""
    beta = np.asarray(beta, dtype=float)
    fit = prob.X @ beta
    root = math.sqrt(float(np.dot(fit, fit)) / prob.n + delta)
    return prob.X.T @ (fit - prob.r + (prob.lam / root) * fit) / prob.n


def perturbed_smoothness(prob: SingleBlockProblem, delta: float) -> float:
    """h₁ 的梯度 Lipschitz 常数 (1 + λ/√δ)‖X‖²/n"""
    return (1.0 + prob.lam / math.sqrt(delta)) * prob.spectral_norm_sq / prob.n


def solve_cc_batch(prob: SingleBlockProblem, steps: int, delta: float = config.DEFAULT_DELTA,
                   init: InitLike = None) -> SolveReport:
    """
    批量凹共轭 MM

    τ^k = (n/‖X‖²)/(1 + λ/√(‖Xβ^k‖ₙ² + δ))
    β ← S(β − (τ^k/n)Xᵀ(Xβ − r + λXβ/√(‖Xβ‖ₙ² + δ)), τ^kΓ)

    扰动目标单调不增，增长超过 1e-10 视为内部错误。
    """
    if delta <= 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    if prob.spectral_norm_sq <= 0:
        return _zero_design_report(prob, steps)
    X, r, n, lam = prob.X, prob.r, prob.n, prob.lam
    base_step = n / prob.spectral_norm_sq

    beta, _, _ = _initial_state(prob, init)
    trace = np.empty(steps)
    perturbed = np.empty(steps)
    previous = perturbed_objective(beta, prob, delta)
    for k in range(steps):
        fit = X @ beta
        root = math.sqrt(float(np.dot(fit, fit)) / n + delta)
        tau_k = base_step / (1.0 + lam / root)
        grad = X.T @ (fit - r + (lam / root) * fit)
        beta = soft_threshold(beta - (tau_k / n) * grad, tau_k * prob.gamma_diag)
        _ensure_finite(k, beta)
        current = perturbed_objective(beta, prob, delta)
        if current > previous + 1e-10:
            raise InternalError(
                f"perturbed objective increased at step {k}: {previous!r} -> {current!r}"
            )
        previous = current
        perturbed[k] = current
        trace[k] = single_block_objective(beta, prob)
    return SolveReport(beta_hat=beta, objective_trace=trace, scans_used=float(steps),
                       perturbed_trace=perturbed)


def solve_cc_stochastic(prob: SingleBlockProblem, batch_steps: int, tau: Optional[float] = None,
                        delta: float = config.DEFAULT_DELTA, seed: int = 0,
                        init: InitLike = None) -> SolveReport:
    """
    随机凹共轭 MM（SAGA 内循环）

    外层：s = 1/(1 + λ/√(‖Xβ‖ₙ² + δ))，在缩放后的 Lasso
        (1/2n)‖Xβ − s·r‖² + s‖Γβ‖₁
    上做 n 步 SAGA：
        v_i ← X_iβ̃ − s·r_i
        β̃ ← S(β̃ − τ(w + X_iΔv_i), τsΓ)，w ← w + X_iΔv_i/n
    一次外层迭代计为一次扫描。
    """
    if delta <= 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    if prob.spectral_norm_sq <= 0:
        return _zero_design_report(prob, batch_steps, seed)
    if tau is None:
        tau = default_step_sizes(SolverKind.STOC_CC, prob).tau
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    X, r, n, lam = prob.X, prob.r, prob.n, prob.lam
    rng = _stream(seed)

    beta, _, _ = _initial_state(prob, init)
    trace = np.empty(batch_steps)
    perturbed = np.empty(batch_steps)
    drift = 0.0
    for outer in range(batch_steps):
        fit = X @ beta
        scale = 1.0 / (1.0 + lam / math.sqrt(float(np.dot(fit, fit)) / n + delta))
        scaled_r = scale * r
        threshold = tau * scale * prob.gamma_diag
        v = fit - scaled_r
        w = X.T @ v / n
        inner = beta.copy()
        for i in rng.integers(0, n, size=n):
            xi = X[i]
            vi_new = float(xi @ inner) - scaled_r[i]
            dv = vi_new - v[i]
            inner = soft_threshold(inner - tau * (w + xi * dv), threshold)
            w += xi * (dv / n)
            v[i] = vi_new
        _ensure_finite((outer + 1) * n - 1, inner, w)
        drift = max(drift, float(np.max(np.abs(w - X.T @ v / n))) if w.size else 0.0)
        beta = inner
        trace[outer] = single_block_objective(beta, prob)
        perturbed[outer] = perturbed_objective(beta, prob, delta)
    return SolveReport(beta_hat=beta, objective_trace=trace, scans_used=float(batch_steps),
                       seed=seed, bookkeeping_drift=drift, perturbed_trace=perturbed)


# ============ Condat–Vũ ============

def solve_condat_vu(prob: SingleBlockProblem, steps: int, sizes: Optional[StepSizes] = None,
                    init: InitLike = None) -> SolveReport:
    """
    Condat–Vũ 三算子分裂

    β ← S(β − (τ/n)Xᵀ(u + Xβ − r), τΓ)
    u ← Proj_{‖z‖ ≤ λ√n}(u + αX(2β⁺ − β))

    对偶变量从 0 出发（或取 init 中的对偶再投影），始终位于半径 λ√n 的球内。
    """
    if prob.spectral_norm_sq <= 0:
        return _zero_design_report(prob, steps)
    sizes, feasible = _checked_sizes(SolverKind.CONDAT_VU, sizes, prob)
    tau, alpha = sizes.tau, sizes.alpha
    X, r, n = prob.X, prob.r, prob.n
    radius = prob.term.radius
    threshold = tau * prob.gamma_diag

    if isinstance(init, SolverState) and init.dual is not None:
        beta = np.array(init.beta, dtype=float)
        u = project_l2_ball(init.dual, radius)
    else:
        beta, _, _ = _initial_state(prob, init)
        u = np.zeros(n)
    xb = X @ beta
    trace = np.empty(steps)
    for k in range(steps):
        beta = soft_threshold(beta - (tau / n) * (X.T @ (u + xb - r)), threshold)
        xb_new = X @ beta
        u = project_l2_ball(u + alpha * (2.0 * xb_new - xb), radius)
        xb = xb_new
        _ensure_finite(k, beta, u)
        trace[k] = single_block_objective(beta, prob)
    return SolveReport(beta_hat=beta, objective_trace=trace, scans_used=float(steps),
                       step_feasible=feasible)


# ============ 精确 Lasso 与阈值 ============

def _kkt_residual(beta: np.ndarray, grad: np.ndarray, gamma: np.ndarray) -> float:
    active = beta != 0
    res = np.where(active,
                   np.abs(grad + np.sign(beta) * gamma),
                   np.maximum(np.abs(grad) - gamma, 0.0))
    return float(np.max(res)) if res.size else 0.0


def _polish(gram: np.ndarray, c: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
            tol: float) -> Optional[np.ndarray]:
    """在当前符号模式下解 G_AA β_A = c_A − Γ_A s_A，满足 KKT 则返回"""
    usable = np.diag(gram) > 0
    active = ((beta != 0) | (gamma == 0)) & usable
    if not np.any(active):
        return None
    signs = np.sign(beta[active])
    rhs = c[active] - gamma[active] * signs
    sub = gram[np.ix_(active, active)]
    try:
        sol = linalg.solve(sub, rhs, assume_a='pos', check_finite=False)
    except linalg.LinAlgError:
        sol = linalg.lstsq(sub, rhs, check_finite=False)[0]
    penalized = gamma[active] > 0
    if np.any(sol[penalized] * signs[penalized] < 0):
        return None
    candidate = np.zeros_like(beta)
    candidate[active] = sol
    if _kkt_residual(candidate, gram @ candidate - c, gamma) <= tol:
        return candidate
    return None


def lasso_exact(prob: SingleBlockProblem, tol: float = config.LASSO_TOLERANCE,
                init: Optional[np.ndarray] = None,
                max_sweeps: int = config.LASSO_MAX_SWEEPS,
                return_sweeps: bool = False):
    """
    精确求解 Lasso 子问题 min (1/2n)‖r − Xβ‖² + ‖Γβ‖₁（忽略 λ）

    在 Gram 矩阵上做循环坐标下降，定期在当前符号模式上解一次线性方程组；
    当所有坐标满足 KKT 条件（容差 tol）时终止。

    参数:
        prob: 单块问题
        tol: KKT 残差容差
        init: 热启动
        max_sweeps: 坐标下降轮数上限
        return_sweeps: 同时返回消耗的轮数

    返回:
        β̃（return_sweeps 为真时返回 (β̃, 轮数)）

    异常:
        ConvergenceError: 轮数上限内未达到 KKT 容差
    """
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    gram = prob.gram_matrix()
    c = prob.X.T @ prob.r / prob.n
    gamma = prob.gamma_diag
    d = prob.d
    diag = np.diag(gram).copy()

    beta = np.zeros(d) if init is None else np.array(init, dtype=float)
    beta[diag <= 0] = 0.0
    g_beta = gram @ beta

    def finish(result, sweeps):
        return (result, sweeps) if return_sweeps else result

    if _kkt_residual(beta, g_beta - c, gamma) <= tol:
        return finish(beta, 0)
    for sweep in range(1, max_sweeps + 1):
        for j in range(d):
            if diag[j] <= 0:
                continue
            z = beta[j] - (g_beta[j] - c[j]) / diag[j]
            new = math.copysign(max(abs(z) - gamma[j] / diag[j], 0.0), z)
            step = new - beta[j]
            if step != 0.0:
                g_beta += gram[:, j] * step
                beta[j] = new
        if not np.all(np.isfinite(beta)):
            raise DivergenceError("non-finite Lasso iterate", sweep)
        if _kkt_residual(beta, g_beta - c, gamma) <= tol:
            return finish(beta, sweep)
        if sweep % config.LASSO_POLISH_EVERY == 0:
            polished = _polish(gram, c, gamma, beta, tol)
            if polished is not None:
                return finish(polished, sweep)
            g_beta = gram @ beta
    raise ConvergenceError(
        f"coordinate descent did not reach KKT tolerance {tol!r} in {max_sweeps} sweeps"
    )


def threshold_lasso_solution(beta_tilde, prob: SingleBlockProblem) -> np.ndarray:
    """
    由 Lasso 解得到单块问题的解 β̂ = (1 − λ/‖Xβ̃‖ₙ)₊β̃

    ‖Xβ̃‖ₙ = 0 时取 β̂ = 0。
    """
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    fit_norm = empirical_norm(prob.X @ beta_tilde)
    if fit_norm == 0.0 or prob.lam >= fit_norm:
        return np.zeros_like(beta_tilde)
    return (1.0 - prob.lam / fit_norm) * beta_tilde


def zero_threshold(prob: SingleBlockProblem, tol: float = config.LASSO_TOLERANCE) -> float:
    """λ₀ = ‖Xβ̃‖ₙ：λ ≥ λ₀ 时单块解为 0"""
    return empirical_norm(prob.X @ lasso_exact(prob, tol))


def solve_oracle(prob: SingleBlockProblem, init: InitLike = None,
                 tol: float = config.LASSO_TOLERANCE) -> SolveReport:
    """
    精确解：lasso_exact 后做整体阈值

    扫描计数：形成 Xᵀr 与计算 Xβ̃ 各一次扫描，每轮 Gram 坐标下降计 d/n 次扫描。
    """
    warm = init.beta if isinstance(init, SolverState) else init
    beta_tilde, sweeps = lasso_exact(prob, tol, init=warm, return_sweeps=True)
    beta = threshold_lasso_solution(beta_tilde, prob)
    return SolveReport(
        beta_hat=beta,
        objective_trace=np.array([single_block_objective(beta, prob)]),
        was_reset_to_zero=bool(not np.any(beta) and np.any(beta_tilde)),
        scans_used=2.0 + sweeps * prob.d / prob.n,
    )


# ============ 调度 ============

def solve_single_block(kind: SolverKind, prob: SingleBlockProblem, batch_steps: int,
                       init: InitLike = None, seed: int = 0,
                       tau: Optional[float] = None, alpha: Optional[float] = None,
                       delta: float = config.DEFAULT_DELTA) -> SolveReport:
    """
    按求解器类型调用对应算法

    参数:
        kind: 求解器
        prob: 单块问题
        batch_steps: 批步数或扫描数
        init: 热启动
        seed: 随机种子（随机算法）
        tau, alpha: 步长覆盖值
        delta: CC 扰动

    返回:
        SolveReport
    """
    kind = SolverKind.parse(kind) if isinstance(kind, str) else kind
    if kind == SolverKind.ORACLE:
        return solve_oracle(prob, init)
    if kind == SolverKind.CC:
        return solve_cc_batch(prob, batch_steps, delta, init)
    sizes = resolve_step_sizes(kind, prob, tau, alpha)
    if kind == SolverKind.CP:
        return solve_cp_batch(prob, batch_steps, sizes, init)
    if kind == SolverKind.AMA:
        return solve_ama_batch(prob, batch_steps, sizes, init)
    if kind == SolverKind.CONDAT_VU:
        return solve_condat_vu(prob, batch_steps, sizes, init)
    if kind == SolverKind.STOC_CP:
        return solve_cp_stochastic(prob, batch_steps, sizes, init, seed)
    if kind == SolverKind.STOC_AMA_SAG:
        return solve_ama_stochastic(prob, batch_steps, sizes, init, seed, 'SAG')
    if kind == SolverKind.STOC_AMA_SAGA:
        return solve_ama_stochastic(prob, batch_steps, sizes, init, seed, 'SAGA')
    return solve_cc_stochastic(prob, batch_steps, sizes.tau, delta, seed, init)
