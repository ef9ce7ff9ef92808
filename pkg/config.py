# -*- coding: utf-8 -*-
"""
DPAM 求解器与实验工具 - 配置文件
"""

import os


# ============ 项目路径 ============
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
OUTPUT_DIR = os.path.abspath(os.getenv('OUTPUT_DIR', os.path.join(BASE_DIR, 'results')))
LOG_DIR = os.path.abspath(os.getenv('LOG_DIR', os.path.join(BASE_DIR, 'logs')))

# ============ 应用配置 ============
APP_NAME = "DPAM 求解器"
APP_VERSION = "1.0.0"
APP_DESCRIPTION = "双惩罚 ANOVA 模型的分块求解器与实验工具"

# ============ 基函数默认值 ============
DEFAULT_NUM_KNOTS = 6
DEFAULT_ORDER_M = 2
DEFAULT_INTERACTION_K = 2

# ============ 单块求解器默认值 ============
DEFAULT_DELTA = 1e-6
# 幂迭代得到的谱范数是下界，默认步长乘以该系数
STEP_SAFETY = 0.99
ROOT_TOLERANCE = 1e-12
ROOT_MAX_ITER = 200
POWER_ITER_MAX = 10000
POWER_ITER_TOLERANCE = 1e-13
LASSO_TOLERANCE = 1e-9
LASSO_MAX_SWEEPS = 100000
LASSO_POLISH_EVERY = 20

# ============ 回拟合默认值 ============
LINEAR_OBJ_TOLERANCE = 1e-3
LOGISTIC_OBJ_TOLERANCE = 1e-4
BATCH_STEPS_BATCH = 6
BATCH_STEPS_STOCHASTIC_LINEAR = 3
BATCH_STEPS_STOCHASTIC_LOGISTIC = 5
DEFAULT_MAX_EPOCHS = 100.0
# 二次上界中 logistic Hessian 的上界 1/4 的倒数
LOGISTIC_CURVATURE = 4.0

# ============ 数据生成 ============
NOISE_SD_G = 0.5138
# 每个行块使用独立子流 (seed, 块号)，第 i 行只取决于 seed 与 i
GENERATOR_BLOCK_ROWS = 256
DEFAULT_SPLIT_SEED = 0

# ============ 实验运行 ============
MAX_WORKERS = int(os.getenv('MAX_WORKERS', '1'))
MODEL_FORMAT_VERSION = 1
TRACE_COLUMNS = ['epoch', 'training_loss', 'nonzero_blocks', 'nonzero_coefs']

# ============ 日志配置 ============
LOG_LEVEL = os.getenv('LOG_LEVEL', "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_FILE = os.path.join(LOG_DIR, "dpam.log")
