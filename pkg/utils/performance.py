# -*- coding: utf-8 -*-
"""
性能监控工具
记录实验各阶段耗时，供实验运行器汇总
"""

import functools
import logging
import time
from typing import Callable, Dict

logger = logging.getLogger(__name__)


# ============ 性能监控 ============

class PerformanceMonitor:
    """性能监控器，按名称记录耗时（秒）"""

    def __init__(self):
        self.metrics: Dict[str, dict] = {}

    def start_timer(self, name: str):
        """开始计时"""
        self.metrics[name] = {'start': time.perf_counter()}

    def end_timer(self, name: str) -> float:
        """结束计时并返回耗时"""
        if name not in self.metrics:
            return 0.0
        elapsed = time.perf_counter() - self.metrics[name]['start']
        self.metrics[name]['elapsed'] = elapsed
        return elapsed

    def get_metric(self, name: str) -> float:
        """获取指标"""
        return self.metrics.get(name, {}).get('elapsed', 0.0)

    def get_all_metrics(self) -> Dict[str, float]:
        """获取所有已结束的指标"""
        return {
            name: metric['elapsed']
            for name, metric in self.metrics.items()
            if 'elapsed' in metric
        }

    def reset(self):
        self.metrics.clear()


# 全局性能监控器实例
perf_monitor = PerformanceMonitor()


def track_performance(name: str):
    """
    性能跟踪装饰器，结束时以 INFO 记录耗时

    参数:
        name: 操作名称

    使用示例:
        @track_performance("grid")
        def run_grid(config):
            ...
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            perf_monitor.start_timer(name)
            try:
                return func(*args, **kwargs)
            finally:
                elapsed = perf_monitor.end_timer(name)
                logger.info(f"{name} finished in {elapsed:.3f}s")
        return wrapper
    return decorator
