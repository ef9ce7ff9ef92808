# -*- coding: utf-8 -*-
"""
DPAM 求解器 - 命令行入口

子命令:
    generate  生成合成数据集
    fit       单次拟合并保存模型
    grid      (ρ, λ) 网格实验
    predict   用模型文件对 CSV 预测
    check     单块求解器与精确解的对照自检
"""

import argparse
import os
import sys

# 添加项目路径
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import config
from modules.backfit import predict, predict_linear_predictor
from modules.data_manager import ingest_csv, standardize, write_dataset_csv, write_predictions_csv
from modules.datagen import AUTO_NOISE, FAMILIES, SyntheticSpec, generate, signal_to_noise
from modules.experiment import run_experiment, run_single, solver_sanity_report, write_trace_csv
from utils.config_parser import ExperimentConfigParser
from utils.error_handler import handle_errors, setup_logging
from utils.experiment_models import Family, SolverKind
from utils.metrics import logistic_metrics, mse
from utils.model_io import load_model, save_model

parser_cache = ExperimentConfigParser()


def banner(title: str):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def _overrides(args) -> dict:
    values = dict(vars(args))
    if getattr(args, 'seed', None) is not None:
        values['seeds'] = [args.seed]
    return values


# ============ 子命令 ============

@handle_errors(error_message="数据生成失败")
def cmd_generate(args):
    """生成合成数据并写出 CSV"""
    banner("🧪 生成合成数据")
    spec = SyntheticSpec(
        n=args.n,
        p=args.p if args.p is not None else (4 if args.family == 'phase_shift' else 10),
        noise_sd=AUTO_NOISE if args.noise_sd is None else args.noise_sd,
        seed=args.seed,
        family=args.family,
        signal_scale=args.signal_scale,
    )
    data = generate(spec)
    write_dataset_csv(args.out, data.X, data.y)
    print(f"   数据族: {spec.family}  n={spec.n}  p={spec.p}  seed={spec.seed}")
    if data.noise_sd is not None:
        print(f"   噪声标准差: {data.noise_sd!r}  信噪比: {signal_to_noise(data):.4f}")
    print(f"\n✅ 已写出: {args.out}")
    return 0


@handle_errors(error_message="拟合失败")
def cmd_fit(args):
    """单次拟合，保存模型与轨迹"""
    banner("🚀 DPAM 单次拟合")
    experiment = parser_cache.build(args.config, _overrides(args))
    result = run_single(experiment)
    os.makedirs(experiment.output_dir, exist_ok=True)
    model_path = args.model_out or os.path.join(experiment.output_dir, 'model.json')
    save_model(result.model, model_path)
    trace_path = os.path.join(experiment.output_dir, f"trace_seed{experiment.seeds[0]}.csv")
    write_trace_csv(trace_path, result.trace)

    print(f"   求解器: {experiment.train.solver.value}  {result.point.label}")
    print(f"   ‖Ỹ‖ₙ = {result.data.norm_y!r}  λ = {result.point.lam_value!r}")
    print(f"   循环数: {result.trace.cycles}  epoch: {result.trace.epoch_marks[-1]:.4f}  "
          f"{'已收敛' if result.trace.converged else '达到 epoch 上限'}")
    print("\n📊 指标:")
    for name, value in result.metrics.items():
        print(f"   {name:30s} {value!r}")
    print(f"\n✅ 模型: {model_path}")
    print(f"✅ 轨迹: {trace_path}")
    return 0


@handle_errors(error_message="网格实验失败")
def cmd_grid(args):
    """网格实验"""
    banner("🚀 DPAM 网格实验")
    experiment = parser_cache.build(args.config, _overrides(args))
    print(f"   求解器: {experiment.train.solver.value}  "
          f"网格: {len(experiment.rho_grid)}×{len(experiment.lam_grid)}  种子数: {len(experiment.seeds)}")
    result = run_experiment(experiment)
    print("\n📊 结果表:")
    print(result.table.to_string())
    print(f"\n✅ 输出目录: {result.output_dir}")
    return result.exit_code


@handle_errors(error_message="预测失败")
def cmd_predict(args):
    """用模型文件预测"""
    banner("🔮 DPAM 预测")
    model = load_model(args.model)
    data = ingest_csv(args.data, args.response, strict=not args.lenient)
    X = data.X
    if model.input_means is not None:
        X, _, _ = standardize(X, model.input_means, model.input_sds)
    predictions = predict(model, X)
    linear_predictor = predict_linear_predictor(model, X)
    write_predictions_csv(args.out, predictions, data.y)
    print(f"   模型: {model.family.value}  非零分块: {len(model.nonzero_blocks())}  行数: {len(predictions)}")
    if data.y is not None:
        if model.family == Family.LINEAR:
            print(f"   MSE: {mse(data.y, predictions)!r}")
        else:
            scores = logistic_metrics(data.y, linear_predictor)
            print(f"   交叉熵: {scores['cross_entropy']!r}  误分类率: {scores['misclassification']!r}")
    print(f"\n✅ 已写出: {args.out}")
    return 0


@handle_errors(error_message="自检失败")
def cmd_check(args):
    """单块求解器自检"""
    banner("🔍 单块求解器自检")
    report = solver_sanity_report(args.instances, args.n, args.d, args.steps, args.seed)
    worst = report.groupby('solver')['relative_gap'].max()
    for solver, gap in worst.items():
        mark = "✅" if gap <= args.gap_tolerance else "❌"
        print(f"   {mark} {solver:12s} 最大相对差距 {gap:.3e}")
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        report.to_csv(args.out, index=False, float_format='%.17g')
        print(f"\n✅ 已写出: {args.out}")
    return 0 if (worst <= args.gap_tolerance).all() else 3


# ============ 参数 ============

def _experiment_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='扁平 TOML 配置文件，命令行参数覆盖其中取值')
    common.add_argument('--solver', choices=[k.value for k in SolverKind], type=str)
    common.add_argument('--rho', help="ρ 列表，如 '2^-19' 或 '2^-16,2^-19'")
    common.add_argument('--lam', help="λ 列表，如 'norm_y/2^8' 或数值")
    common.add_argument('--knots', type=int)
    common.add_argument('--order-m', dest='order_m', type=int, choices=[1, 2])
    common.add_argument('--interaction-K', dest='interaction_K', type=int)
    common.add_argument('--epochs', type=float)
    common.add_argument('--batch-steps', dest='batch_steps', type=int)
    common.add_argument('--tau', type=float)
    common.add_argument('--alpha', type=float)
    common.add_argument('--delta', type=float)
    common.add_argument('--tolerance', type=float)
    common.add_argument('--recovery', action='store_true', default=None)
    common.add_argument('--standardize', action='store_true', default=None)
    common.add_argument('--split', type=float)
    common.add_argument('--split-seed', dest='split_seed', type=int)
    common.add_argument('--out')
    common.add_argument('--family', choices=[f.value for f in Family])
    common.add_argument('--data', help='训练数据 CSV；缺省时生成数据')
    common.add_argument('--response')
    common.add_argument('--lenient', dest='strict', action='store_false', default=None,
                        help='剔除缺失或非数值的行而不是报错')
    common.add_argument('--generate-family', dest='generate_family', choices=FAMILIES)
    common.add_argument('--generate-n', dest='generate_n', type=int)
    common.add_argument('--generate-p', dest='generate_p', type=int)
    common.add_argument('--generate-seed', dest='generate_seed', type=int)
    common.add_argument('--noise-sd', dest='noise_sd', type=float)
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='dpam', description=config.APP_DESCRIPTION)
    parser.add_argument('--version', action='version', version=f"{config.APP_NAME} {config.APP_VERSION}")
    parser.add_argument('--log-level', default=config.LOG_LEVEL)
    parser.add_argument('--log-file', default=config.LOG_FILE, help="日志文件，'' 表示只输出到终端")
    sub = parser.add_subparsers(dest='command', required=True)
    common = _experiment_flags()

    gen = sub.add_parser('generate', help='生成合成数据')
    gen.add_argument('--family', choices=FAMILIES, default='linear_g')
    gen.add_argument('--n', type=int, required=True)
    gen.add_argument('--p', type=int)
    gen.add_argument('--seed', type=int, default=1)
    gen.add_argument('--noise-sd', dest='noise_sd', type=float)
    gen.add_argument('--signal-scale', dest='signal_scale', type=float, default=1.0)
    gen.add_argument('--out', required=True)
    gen.set_defaults(handler=cmd_generate)

    fit_p = sub.add_parser('fit', parents=[common], help='单次拟合')
    fit_p.add_argument('--seed', type=int)
    fit_p.add_argument('--model-out', dest='model_out')
    fit_p.set_defaults(handler=cmd_fit)

    grid = sub.add_parser('grid', parents=[common], help='网格实验')
    grid.add_argument('--seeds', help="种子列表，如 '0,1,2' 或 '0:10'")
    grid.add_argument('--workers', type=int)
    grid.set_defaults(handler=cmd_grid)

    pred = sub.add_parser('predict', help='用模型文件预测')
    pred.add_argument('--model', required=True)
    pred.add_argument('--data', required=True)
    pred.add_argument('--response', help='若给出则同时报告指标')
    pred.add_argument('--lenient', action='store_true')
    pred.add_argument('--out', required=True)
    pred.set_defaults(handler=cmd_predict)

    check = sub.add_parser('check', help='单块求解器自检')
    check.add_argument('--instances', type=int, default=10)
    check.add_argument('--n', type=int, default=200)
    check.add_argument('--d', type=int, default=10)
    check.add_argument('--steps', type=int, default=1000)
    check.add_argument('--seed', type=int, default=0)
    check.add_argument('--gap-tolerance', dest='gap_tolerance', type=float, default=1e-4)
    check.add_argument('--out')
    check.set_defaults(handler=cmd_check)
    return parser


def main(argv=None) -> int:
    """主函数，返回退出码"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
