# -*- coding: utf-8 -*-
"""
实验运行模块
数据准备、(ρ, λ) 网格上的多种子训练、轨迹/汇总/表格输出，以及单块求解器自检
"""

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import config
from modules.backfit import fit, predict_linear_predictor
from modules.basis import build_design
from modules.data_manager import ingest_csv, standardize, train_validation_split
from modules.datagen import AUTO_NOISE, SyntheticSpec, generate
from modules.single_block import SingleBlockProblem, solve_oracle, solve_single_block, zero_threshold
from utils.error_handler import DataError, RunError
from utils.experiment_models import (
    DatasetSource, DpamModel, ExperimentConfig, Family, PenaltyValue, SolverKind, TrainTrace,
)
from utils.metrics import logistic_metrics, mse
from utils.performance import perf_monitor, track_performance
from utils.prox_core import empirical_norm, single_block_objective

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


# ============ 数据准备 ============

@dataclass
class PreparedData:
    """
    训练/验证数据

    属性:
        X_train, y_train: 训练集
        X_val, y_val: 验证集（CSV 且未划分时为 None）
        columns: 协变量列名
        norm_y: 中心化训练响应的经验范数 ‖Ỹ‖ₙ
        input_means, input_sds: 协变量标准化统计量
        noise_sd: 生成数据的噪声标准差
    """
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: Optional[np.ndarray] = None
    y_val: Optional[np.ndarray] = None
    columns: List[str] = field(default_factory=list)
    norm_y: float = 0.0
    input_means: Optional[np.ndarray] = None
    input_sds: Optional[np.ndarray] = None
    noise_sd: Optional[float] = None


def prepare_data(source: DatasetSource) -> PreparedData:
    """
    按数据来源读取或生成数据，完成划分与标准化

    生成数据未指定划分时，验证集用相同规格、种子加 1 另行生成。
    标准化统计量只用训练集计算，再作用于验证集。
    """
    noise_sd = None
    if source.kind == 'csv':
        ingested = ingest_csv(source.path, source.response, strict=source.strict)
        X, y, columns = ingested.X, ingested.y, ingested.columns
        X_val = y_val = None
    else:
        spec = SyntheticSpec(
            n=source.n, p=source.p, seed=source.seed, family=source.family,
            noise_sd=AUTO_NOISE if source.noise_sd is None else source.noise_sd,
        )
        data = generate(spec)
        X, y, noise_sd = data.X, data.y, data.noise_sd
        columns = [f"x{j + 1}" for j in range(X.shape[1])]
        X_val = y_val = None
        if source.split is None:
            held_out = generate(replace(spec, seed=source.seed + 1))
            X_val, y_val = held_out.X, held_out.y

    if source.split is not None:
        train_idx, val_idx = train_validation_split(X.shape[0], source.split, source.split_seed)
        X, X_val = X[train_idx], X[val_idx]
        y, y_val = y[train_idx], y[val_idx]
        logger.info(f"Split {len(train_idx) + len(val_idx)} rows into {len(train_idx)}/{len(val_idx)} "
                    f"(seed={source.split_seed})")

    means = sds = None
    if source.standardize:
        X, means, sds = standardize(X)
        if X_val is not None:
            X_val, _, _ = standardize(X_val, means, sds)

    return PreparedData(
        X_train=X, y_train=y, X_val=X_val, y_val=y_val, columns=columns,
        norm_y=empirical_norm(y - y.mean()),
        input_means=means, input_sds=sds, noise_sd=noise_sd,
    )


# ============ 网格 ============

@dataclass(frozen=True)
class GridPoint:
    """网格点：ρ、λ 的写法与解析值"""
    rho_index: int
    lam_index: int
    rho: PenaltyValue
    lam: PenaltyValue
    rho_value: float
    lam_value: float

    @property
    def label(self) -> str:
        return f"rho={self.rho.text},lam={self.lam.text}"

    @property
    def dirname(self) -> str:
        return f"rho{self.rho_index}_lam{self.lam_index}"


def resolve_grid(experiment: ExperimentConfig, norm_y: float) -> List[GridPoint]:
    """相对写法的 λ 按 ‖Ỹ‖ₙ 解析；按 ρ 外层、λ 内层排列"""
    return [
        GridPoint(i, j, rho, lam, rho.resolve(norm_y), lam.resolve(norm_y))
        for i, rho in enumerate(experiment.rho_grid)
        for j, lam in enumerate(experiment.lam_grid)
    ]


# ============ 单次运行 ============

@dataclass
class RunFailure:
    """进程间传递的失败信息"""
    error_type: str
    message: str
    user_message: str
    exit_code: int

    def __str__(self):
        return f"{self.error_type}: {self.message}"


@dataclass
class RunOutcome:
    """单个 (网格点, 种子) 的结果"""
    point_key: Tuple[int, int]
    seed: int
    metrics: Dict[str, float] = field(default_factory=dict)
    trace: Optional[pd.DataFrame] = None
    failure: Optional[RunFailure] = None


def trace_frame(trace: TrainTrace) -> pd.DataFrame:
    """训练轨迹转为 DataFrame（epoch, training_loss, nonzero_blocks, nonzero_coefs）"""
    return pd.DataFrame({
        'epoch': trace.epoch_marks,
        'training_loss': trace.objective,
        'nonzero_blocks': trace.nonzero_blocks,
        'nonzero_coefs': trace.nonzero_coefs,
    }, columns=config.TRACE_COLUMNS)


def write_trace_csv(path: str, trace: TrainTrace) -> pd.DataFrame:
    """写出轨迹文件，返回写出的表"""
    frame = trace_frame(trace)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return frame


def evaluate_model(model: DpamModel, trace: TrainTrace, data: PreparedData) -> Dict[str, float]:
    """
    计算一次运行的指标

    返回:
        nonzero_blocks, nonzero_coefs, 最终训练目标与 epoch，
        线性模型的验证 MSE，logistic 模型的验证交叉熵与误分类率
    """
    metrics = {
        'nonzero_blocks': float(len(model.nonzero_blocks())),
        'nonzero_coefs': float(model.nonzero_coef_count()),
        'training_loss': trace.objective[-1],
        'epochs': trace.epoch_marks[-1],
        'cycles': float(trace.cycles),
        'recoveries': float(len(trace.recoveries)),
    }
    if model.family == Family.LINEAR:
        metrics['training_mse'] = mse(data.y_train, trace.fitted)
    if data.X_val is None:
        return metrics
    f_val = predict_linear_predictor(model, data.X_val)
    if model.family == Family.LINEAR:
        metrics['validation_mse'] = mse(data.y_val, f_val)
    else:
        scores = logistic_metrics(data.y_val, f_val)
        metrics['validation_cross_entropy'] = scores['cross_entropy']
        metrics['validation_misclassification'] = scores['misclassification']
    return metrics


# 工作进程共享的只读上下文
_WORKER_CONTEXT: dict = {}


def _init_worker(context: dict):
    _WORKER_CONTEXT.clear()
    _WORKER_CONTEXT.update(context)


def _execute_run(point: GridPoint, seed: int, trace_path: str) -> RunOutcome:
    ctx = _WORKER_CONTEXT
    data: PreparedData = ctx['data']
    key = (point.rho_index, point.lam_index)
    try:
        train = replace(ctx['train'], seed=seed)
        basis = replace(ctx['basis'], rho=point.rho_value)
        model, trace = fit(data.X_train, data.y_train, train, basis, point.lam_value,
                           family=ctx['family'], design=ctx['design'])
        frame = write_trace_csv(trace_path, trace)
        return RunOutcome(key, seed, evaluate_model(model, trace, data), frame)
    except Exception as e:
        logger.error(f"Run {point.label} seed={seed} failed: {e}")
        return RunOutcome(key, seed, failure=RunFailure(
            error_type=type(e).__name__,
            message=getattr(e, 'message', str(e)),
            user_message=getattr(e, 'user_message', str(e)),
            exit_code=getattr(e, 'exit_code', 1),
        ))


# ============ 汇总 ============

def summarize_traces(frames: List[pd.DataFrame]) -> pd.DataFrame:
    """
    按标记点汇总多个种子的轨迹

    较短的轨迹用最后一个值向后填充。

    返回:
        列 mark, epoch_mean, loss_mean, loss_min, loss_max, n_runs
    """
    if not frames:
        raise DataError("no traces to summarize")
    length = max(len(f) for f in frames)
    padded = [
        f[['epoch', 'training_loss']].reindex(range(length)).ffill().assign(mark=range(length))
        for f in frames
    ]
    grouped = pd.concat(padded, ignore_index=True).groupby('mark')
    summary = pd.DataFrame({
        'epoch_mean': grouped['epoch'].mean(),
        'loss_mean': grouped['training_loss'].mean(),
        'loss_min': grouped['training_loss'].min(),
        'loss_max': grouped['training_loss'].max(),
        'n_runs': grouped.size(),
    })
    # 均值受舍入影响可能越出 [min, max]
    summary['loss_mean'] = summary['loss_mean'].clip(summary['loss_min'], summary['loss_max'])
    return summary.reset_index()


TABLE_ROWS = [
    'nonzero_blocks', 'nonzero_coefs', 'validation_mse', 'validation_cross_entropy',
    'validation_misclassification', 'training_mse', 'training_loss', 'epochs',
]


def build_table(points: List[GridPoint], runs: pd.DataFrame) -> pd.DataFrame:
    """指标 × 网格点的宽表，取各种子均值"""
    means = runs.groupby(['rho_index', 'lam_index']).mean(numeric_only=True)
    rows = [r for r in TABLE_ROWS if r in means.columns]
    table = pd.DataFrame(
        {p.label: [means.loc[(p.rho_index, p.lam_index), r] for r in rows] for p in points},
        index=pd.Index(rows, name='metric'),
    )
    return table


@dataclass
class ExperimentResult:
    """实验结果"""
    output_dir: str
    table: pd.DataFrame
    runs: pd.DataFrame
    summaries: Dict[str, pd.DataFrame]
    norm_y: float
    exit_code: int = 0


def _write_provenance(experiment: ExperimentConfig, data: PreparedData, points: List[GridPoint]):
    doc = {
        'config': asdict(experiment),
        'norm_y': data.norm_y,
        'n_train': int(data.X_train.shape[0]),
        'n_validation': None if data.X_val is None else int(data.X_val.shape[0]),
        'grid': [
            {'dir': p.dirname, 'rho': p.rho.text, 'lam': p.lam.text,
             'rho_value': p.rho_value, 'lam_value': p.lam_value}
            for p in points
        ],
    }
    path = os.path.join(experiment.output_dir, 'experiment.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(doc, f, indent=2, default=str)


@track_performance("experiment")
def run_experiment(experiment: ExperimentConfig) -> ExperimentResult:
    """
    运行完整实验

    每个网格点一个目录，内含 trace_seed<k>.csv 与 summary.csv；
    根目录写 table.csv、runs.csv 与 experiment.json。
    workers > 1 时用进程池，结果与单进程一致。

    参数:
        experiment: 实验配置

    返回:
        ExperimentResult

    异常:
        ConfigError: 配置无效
        RunError: 某次运行失败，携带网格点与种子
    """
    experiment.validate()
    data = prepare_data(experiment.dataset)
    points = resolve_grid(experiment, data.norm_y)
    basis = experiment.basis

    perf_monitor.start_timer('design')
    design = build_design(data.X_train, basis.num_knots, basis.m, basis.K, 0.0)
    logger.info(f"Design built in {perf_monitor.end_timer('design'):.3f}s; "
                f"{len(points)} grid points x {len(experiment.seeds)} seeds")

    os.makedirs(experiment.output_dir, exist_ok=True)
    _write_provenance(experiment, data, points)

    context = {'data': data, 'design': design, 'train': experiment.train,
               'basis': basis, 'family': experiment.family}
    tasks = [
        (p, seed, os.path.join(experiment.output_dir, p.dirname, f"trace_seed{seed}.csv"))
        for p in points for seed in experiment.seeds
    ]
    if experiment.workers > 1:
        with ProcessPoolExecutor(max_workers=experiment.workers, initializer=_init_worker,
                                 initargs=(context,)) as pool:
            futures = [pool.submit(_execute_run, *task) for task in tasks]
            outcomes = [f.result() for f in futures]
    else:
        _init_worker(context)
        outcomes = [_execute_run(*task) for task in tasks]

    failures = [(p, o) for (p, _, _), o in zip(tasks, outcomes) if o.failure is not None]
    if failures:
        point, outcome = failures[0]
        raise RunError(f"{point.label} seed={outcome.seed}", outcome.failure)

    summaries = {}
    for p in points:
        frames = [o.trace for o in outcomes if o.point_key == (p.rho_index, p.lam_index)]
        summary = summarize_traces(frames)
        summary.to_csv(os.path.join(experiment.output_dir, p.dirname, 'summary.csv'),
                       index=False, float_format=FLOAT_FORMAT)
        summaries[p.dirname] = summary

    by_key = {(p.rho_index, p.lam_index): p for p in points}
    runs = pd.DataFrame([
        {'rho_index': o.point_key[0], 'lam_index': o.point_key[1],
         'rho': by_key[o.point_key].rho_value, 'lam': by_key[o.point_key].lam_value,
         'seed': o.seed, **o.metrics}
        for o in outcomes
    ])
    runs.to_csv(os.path.join(experiment.output_dir, 'runs.csv'), index=False, float_format=FLOAT_FORMAT)
    table = build_table(points, runs)
    table.to_csv(os.path.join(experiment.output_dir, 'table.csv'), float_format=FLOAT_FORMAT)
    logger.info(f"Experiment finished: {len(outcomes)} runs written to {experiment.output_dir}")
    return ExperimentResult(experiment.output_dir, table, runs, summaries, data.norm_y)


# ============ 单次拟合 ============

@dataclass
class SingleRunResult:
    """单次拟合结果"""
    model: DpamModel
    trace: TrainTrace
    metrics: Dict[str, float]
    data: PreparedData
    point: GridPoint


def run_single(experiment: ExperimentConfig) -> SingleRunResult:
    """用网格中的第一个 (ρ, λ) 与第一个种子做一次拟合"""
    experiment.validate()
    data = prepare_data(experiment.dataset)
    point = resolve_grid(experiment, data.norm_y)[0]
    train = replace(experiment.train, seed=experiment.seeds[0])
    basis = replace(experiment.basis, rho=point.rho_value)
    model, trace = fit(data.X_train, data.y_train, train, basis, point.lam_value,
                       family=experiment.family)
    model.input_means, model.input_sds = data.input_means, data.input_sds
    return SingleRunResult(model, trace, evaluate_model(model, trace, data), data, point)


# ============ 求解器自检 ============

def solver_sanity_report(instances: int = 10, n: int = 200, d: int = 10, steps: int = 1000,
                         seed: int = 0, lam_fraction: float = 0.25,
                         solvers=(SolverKind.CP, SolverKind.AMA, SolverKind.CONDAT_VU)) -> pd.DataFrame:
    """
    在随机单块问题上比较迭代算法与精确解

    每个实例：X 为中心化高斯矩阵，r 为稀疏线性信号加噪声，
    Γ 第 0 列为 0、其余为 0.05，λ = lam_fraction·λ₀。

    返回:
        列 instance, solver, objective, oracle_objective, relative_gap
    """
    rng = np.random.Generator(np.random.Philox(seed))
    rows = []
    for i in range(instances):
        X = rng.standard_normal((n, d))
        X -= X.mean(axis=0)
        truth = np.where(rng.random(d) < 0.3, rng.standard_normal(d), 0.0)
        r = X @ truth + rng.standard_normal(n)
        r -= r.mean()
        gamma = np.full(d, 0.05)
        gamma[0] = 0.0
        base = SingleBlockProblem(X, r, gamma, 0.0)
        prob = base.with_penalties(gamma, lam_fraction * zero_threshold(base))
        best = single_block_objective(solve_oracle(prob).beta_hat, prob)
        for kind in solvers:
            report = solve_single_block(kind, prob, steps, seed=seed + i)
            value = single_block_objective(report.beta_hat, prob)
            rows.append({
                'instance': i,
                'solver': kind.value,
                'objective': value,
                'oracle_objective': best,
                'relative_gap': (value - best) / max(abs(best), math.ulp(1.0)),
            })
    return pd.DataFrame(rows)
