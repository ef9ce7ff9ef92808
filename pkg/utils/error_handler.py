# -*- coding: utf-8 -*-
"""
错误处理工具
提供统一的日志配置、错误类型和命令行错误出口
"""

import logging
import os
import sys
import traceback
from datetime import datetime
from functools import wraps
from typing import Callable, Optional, Tuple

import config


# ============ 日志配置 ============

def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> logging.Logger:
    """
    配置日志系统

    参数:
        level: 日志级别，默认 config.LOG_LEVEL
        log_file: 日志文件路径，默认 config.LOG_FILE；传入空字符串则只输出到终端

    返回:
        包级 logger
    """
    handlers = [logging.StreamHandler(sys.stdout)]
    log_file = config.LOG_FILE if log_file is None else log_file
    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        handlers.insert(0, logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(
        level=getattr(logging, (level or config.LOG_LEVEL).upper(), logging.INFO),
        format=config.LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
    return logging.getLogger('dpam')


logger = logging.getLogger('dpam')


# ============ 错误类型定义 ============

class DpamError(Exception):
    """基础错误类"""

    exit_code = 1

    def __init__(self, message: str, user_message: str = None, details: str = None):
        """
        参数:
            message: 错误消息（内部使用）
            user_message: 面向命令行用户的错误消息
            details: 详细信息
        """
        super().__init__(message)
        self.message = message
        self.user_message = user_message or message
        self.details = details
        self.timestamp = datetime.now()

        logger.debug(f"{self.__class__.__name__}: {message}")
        if details:
            logger.debug(f"Details: {details}")


class ValidationError(DpamError, ValueError):
    """输入不满足前置条件"""

    exit_code = 2

    def __init__(self, message: str, details: str = None):
        super().__init__(message, f"输入校验失败: {message}", details)


class UnsupportedOrderError(ValidationError):
    """样条阶数不受支持"""


class ConfigError(ValidationError):
    """实验配置错误"""


class DataError(DpamError):
    """数据错误"""

    exit_code = 2

    def __init__(self, message: str, details: str = None):
        super().__init__(message, f"数据错误: {message}", details)


class DegenerateCovariateError(DataError):
    """协变量取值退化（去重后不足两个节点）"""


class CsvParseError(DataError):
    """CSV 解析错误，携带出错行号"""

    def __init__(self, message: str, line_number: int, details: str = None):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}", details)


class ModelFormatError(DataError):
    """模型文件格式错误"""


class NumericError(DpamError):
    """数值计算失败"""

    exit_code = 3

    def __init__(self, message: str, details: str = None):
        super().__init__(message, f"数值计算失败: {message}", details)


class SolverFailureError(NumericError):
    """坐标近端根求解失败"""


class ConvergenceError(NumericError):
    """迭代在上限内未收敛"""


class DivergenceError(NumericError):
    """迭代出现非有限值"""

    def __init__(self, message: str, step: int, block: Optional[Tuple[int, ...]] = None,
                 details: str = None):
        self.step = step
        self.block = block
        where = f"step {step}" if block is None else f"block {block}, step {step}"
        super().__init__(f"{message} ({where})", details)

    def with_block(self, block: Tuple[int, ...]) -> 'DivergenceError':
        """附加分块信息后返回新错误"""
        base = self.message.rsplit(' (', 1)[0]
        return DivergenceError(base, self.step, block, self.details)


class InternalError(DpamError):
    """内部一致性检查失败"""

    exit_code = 3


class RunError(DpamError):
    """实验中单次运行失败，携带运行标识"""

    def __init__(self, run_id: str, cause: Exception):
        self.run_id = run_id
        self.cause = cause
        self.exit_code = getattr(cause, 'exit_code', 1)
        user = getattr(cause, 'user_message', str(cause))
        super().__init__(f"run {run_id} failed: {cause}", f"运行 {run_id} 失败: {user}")


# ============ 命令行错误出口 ============

def handle_errors(error_message: str = "操作失败", show_traceback: bool = False):
    """
    命令行子命令的错误处理装饰器

    参数:
        error_message: 未知错误时显示的消息
        show_traceback: 是否打印详细堆栈

    返回:
        装饰后的函数返回退出码：成功为被装饰函数的返回值（默认 0），
        已知错误为该错误类型的 exit_code，未知错误为 1

    使用示例:
        @handle_errors(error_message="拟合失败")
        def cmd_fit(args):
            ...
            return 0
    """

    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            try:
                result = func(*args, **kwargs)
                return 0 if result is None else result
            except DpamError as e:
                print(f"❌ {e.user_message}")
                if show_traceback and e.details:
                    print(e.details)
                logger.error(f"{e.__class__.__name__} in {func.__name__}: {e.message}")
                return e.exit_code
            except Exception as e:
                print(f"❌ {error_message}: {e}")
                if show_traceback:
                    traceback.print_exc()
                logger.error(f"Unexpected error in {func.__name__}: {e}")
                logger.error(traceback.format_exc())
                return 1
        return wrapper
    return decorator


__all__ = [
    'setup_logging',
    'logger',
    'DpamError',
    'ValidationError',
    'UnsupportedOrderError',
    'ConfigError',
    'DataError',
    'DegenerateCovariateError',
    'CsvParseError',
    'ModelFormatError',
    'NumericError',
    'SolverFailureError',
    'ConvergenceError',
    'DivergenceError',
    'InternalError',
    'RunError',
    'handle_errors',
]
