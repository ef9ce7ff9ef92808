# -*- coding: utf-8 -*-
"""
工具类包
近端算子、错误处理、数据模型、配置解析、指标、模型文件与性能计时
"""

__version__ = "1.0.0"
