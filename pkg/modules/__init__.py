# -*- coding: utf-8 -*-
"""
功能模块包
基函数、单块求解器、回拟合、数据生成、数据管理与实验运行
"""

__version__ = "1.0.0"
