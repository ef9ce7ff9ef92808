# -*- coding: utf-8 -*-
"""
模型文件读写
DpamModel 与 JSON 文档之间的转换，浮点数按 repr 往返，读回后逐位一致
"""

import json
import logging
import os
from typing import Any, Dict

import numpy as np

import config
from modules.basis import block_label
from utils.error_handler import ModelFormatError
from utils.experiment_models import DpamModel, Family

logger = logging.getLogger(__name__)

_REQUIRED_KEYS = ('format_version', 'family', 'intercept', 'm', 'K', 'rho', 'lam', 'knots', 'blocks')


def _optional_list(values):
    return None if values is None else [float(v) for v in values]


def _optional_array(values):
    return None if values is None else np.asarray(values, dtype=float)


def model_to_dict(model: DpamModel) -> Dict[str, Any]:
    """
    模型转为可 JSON 序列化的字典

    分块下标保持从 0 开始，另附 1 起始的 label 便于阅读。
    """
    return {
        'format_version': config.MODEL_FORMAT_VERSION,
        'family': model.family.value,
        'intercept': float(model.intercept),
        'm': int(model.m),
        'K': int(model.K),
        'rho': float(model.rho),
        'lam': float(model.lam),
        'knots': [[float(v) for v in k] for k in model.knots],
        'blocks': [
            {
                'id': list(b),
                'label': block_label(b),
                'coefs': [float(v) for v in model.block_coefs[b]],
                'col_means': [float(v) for v in model.col_means[b]],
            }
            for b in model.blocks
        ],
        'input_means': _optional_list(model.input_means),
        'input_sds': _optional_list(model.input_sds),
    }


def model_from_dict(doc: Dict[str, Any]) -> DpamModel:
    """
    由字典恢复模型

    异常:
        ModelFormatError: 缺少字段、版本不符或形状不一致
    """
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    missing = [k for k in _REQUIRED_KEYS if k not in doc]
    if missing:
        raise ModelFormatError(f"model document is missing keys: {', '.join(missing)}")
    if doc['format_version'] != config.MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {doc['format_version']}; expected {config.MODEL_FORMAT_VERSION}"
        )

    try:
        family = Family(doc['family'])
        knots = [np.asarray(k, dtype=float) for k in doc['knots']]
        blocks, coefs, means = [], {}, {}
        for entry in doc['blocks']:
            bid = tuple(int(j) for j in entry['id'])
            coef = np.asarray(entry['coefs'], dtype=float)
            mean = np.asarray(entry['col_means'], dtype=float)
            if coef.shape != mean.shape:
                raise ModelFormatError(f"block {bid}: coefs and col_means differ in length")
            if any(j < 0 or j >= len(knots) for j in bid):
                raise ModelFormatError(f"block {bid} refers to a covariate without knots")
            blocks.append(bid)
            coefs[bid] = coef
            means[bid] = mean
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"malformed model document: {e}")

    return DpamModel(
        family=family,
        intercept=float(doc['intercept']),
        blocks=blocks,
        block_coefs=coefs,
        col_means=means,
        knots=knots,
        m=int(doc['m']),
        K=int(doc['K']),
        rho=float(doc['rho']),
        lam=float(doc['lam']),
        input_means=_optional_array(doc.get('input_means')),
        input_sds=_optional_array(doc.get('input_sds')),
    )


def save_model(model: DpamModel, path: str) -> str:
    """写入 JSON 模型文件，返回路径"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(model_to_dict(model), f, indent=2)
    logger.info(f"Saved model with {len(model.blocks)} blocks to {path}")
    return path


def load_model(path: str) -> DpamModel:
    """
    读取 JSON 模型文件

    异常:
        ModelFormatError: 文件不存在或不是合法模型文档
    """
    if not os.path.exists(path):
        raise ModelFormatError(f"model file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file is not valid JSON: {e}")
    return model_from_dict(doc)
