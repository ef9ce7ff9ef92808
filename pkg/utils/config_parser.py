# -*- coding: utf-8 -*-
"""
实验配置解析器
读取扁平 TOML 配置文件，与命令行参数合并为 ExperimentConfig
"""

import logging
import math
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import config
from utils.error_handler import ConfigError
from utils.experiment_models import (
    BasisParams, DatasetSource, ExperimentConfig, Family, PenaltyValue, TrainConfig,
)

logger = logging.getLogger(__name__)

# 配置键与命令行参数同名（连字符换成下划线）
KNOWN_KEYS = {
    'solver', 'rho', 'lam', 'knots', 'order_m', 'interaction_K', 'epochs', 'batch_steps',
    'tau', 'alpha', 'delta', 'tolerance', 'seeds', 'recovery', 'standardize', 'split',
    'split_seed', 'out', 'family', 'data', 'response', 'strict', 'generate_family',
    'generate_n', 'generate_p', 'generate_seed', 'noise_sd', 'workers',
}

GENERATED_FAMILIES = {
    'linear_g': Family.LINEAR,
    'logistic_g': Family.LOGISTIC,
    'phase_shift': Family.LINEAR,
}

_POWER = r'2\s*(?:\^|\*\*)\s*\(?\s*(-?\d+(?:\.\d+)?)\s*\)?'
_ABSOLUTE_POWER = re.compile(rf'^{_POWER}$')
_RELATIVE = re.compile(rf'^norm_y(?:\s*/\s*{_POWER})?$')


def parse_penalty(value) -> PenaltyValue:
    """
    解析单个惩罚取值

    参数:
        value: 数字、'2^-19'、'norm_y/2^8' 或 'norm_y'

    返回:
        PenaltyValue

    异常:
        ConfigError: 无法识别的写法或负值

    使用示例:
        parse_penalty('norm_y/2^8').resolve(1.2)   # 1.2 / 256
    """
    if isinstance(value, bool):
        raise ConfigError(f"invalid penalty value: {value!r}")
    if isinstance(value, (int, float)):
        number = float(value)
        text = repr(number)
    else:
        text = str(value).strip()
        match = _RELATIVE.match(text)
        if match:
            exponent = float(match.group(1)) if match.group(1) is not None else 0.0
            return PenaltyValue(exponent=exponent, text=text)
        match = _ABSOLUTE_POWER.match(text)
        if match:
            number = 2.0 ** float(match.group(1))
        else:
            try:
                number = float(text)
            except ValueError:
                raise ConfigError(f"invalid penalty value: {text!r}; expected a number, 2^k or norm_y/2^k")
    if not math.isfinite(number) or number < 0:
        raise ConfigError(f"penalty must be a finite nonnegative number, got {text}")
    return PenaltyValue(absolute=number, text=text)


def _as_list(value) -> List[Any]:
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, str):
        return [v for v in (part.strip() for part in value.split(',')) if v]
    return [value]


def parse_penalty_list(value) -> List[PenaltyValue]:
    """解析惩罚列表：TOML 数组或逗号分隔字符串"""
    items = [parse_penalty(v) for v in _as_list(value)]
    if not items:
        raise ConfigError("penalty grid must not be empty")
    return items


def parse_seeds(value) -> List[int]:
    """
    解析种子列表

    支持整数、列表、逗号分隔字符串与区间 'a:b'（不含 b）
    """
    if isinstance(value, str) and ':' in value:
        try:
            start, stop = (int(v) for v in value.split(':', 1))
        except ValueError:
            raise ConfigError(f"invalid seed range: {value!r}")
        seeds = list(range(start, stop))
    else:
        try:
            seeds = [int(v) for v in _as_list(value)]
        except (TypeError, ValueError):
            raise ConfigError(f"invalid seed list: {value!r}")
    if not seeds:
        raise ConfigError("seed list must not be empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seed list contains duplicates: {seeds}")
    return seeds


class ExperimentConfigParser:
    """
    实验配置解析器

    职责:
    - 读取扁平 TOML 配置文件并校验键名
    - 命令行参数覆盖文件取值
    - 实现按文件路径的缓存
    """

    def __init__(self):
        self._cache: Dict[str, Dict[str, Any]] = {}  # {绝对路径: 配置字典}

    def load_file(self, path: str) -> Dict[str, Any]:
        """
        读取配置文件

        参数:
            path: TOML 文件路径

        返回:
            键值字典

        异常:
            ConfigError: 文件不存在、语法错误、嵌套表或未知键
        """
        key = str(Path(path).resolve())
        if key in self._cache:
            return dict(self._cache[key])
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, 'rb') as f:
                values = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"config file {path} is not valid TOML: {e}")

        nested = [k for k, v in values.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"config file must be flat; found tables: {', '.join(nested)}")
        unknown = sorted(set(values) - KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

        self._cache[key] = values
        logger.debug(f"Loaded config file {path} with keys {sorted(values)}")
        return dict(values)

    def build(self, path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        """
        合并配置文件与命令行参数

        参数:
            path: 配置文件路径（可选）
            overrides: 命令行参数字典，值为 None 的键不覆盖

        返回:
            已校验的 ExperimentConfig
        """
        values = self.load_file(path) if path else {}
        for k, v in (overrides or {}).items():
            if v is not None and k in KNOWN_KEYS:
                values[k] = v
        return self.from_values(values)

    def from_values(self, values: Dict[str, Any]) -> ExperimentConfig:
        """由扁平字典构造 ExperimentConfig"""
        generated_family = values.get('generate_family', 'linear_g')
        if generated_family not in GENERATED_FAMILIES:
            raise ConfigError(
                f"unknown generate_family: {generated_family}; expected one of {', '.join(GENERATED_FAMILIES)}"
            )
        is_csv = bool(values.get('data'))
        if 'family' in values:
            family = Family.parse(values['family'])
        else:
            family = Family.LINEAR if is_csv else GENERATED_FAMILIES[generated_family]
        if not is_csv and family != GENERATED_FAMILIES[generated_family]:
            raise ConfigError(f"family {family.value} does not match generated data {generated_family}")

        dataset = DatasetSource(
            kind='csv' if is_csv else 'generate',
            family=None if is_csv else generated_family,
            n=_get(values, 'generate_n', int, 1000),
            p=_get(values, 'generate_p', int, 4 if generated_family == 'phase_shift' else 10),
            seed=_get(values, 'generate_seed', int, 1),
            noise_sd=_optional(values, 'noise_sd', float),
            path=values.get('data'),
            response=str(values.get('response', 'y')),
            standardize=bool(values.get('standardize', False)),
            split=_optional(values, 'split', float),
            split_seed=_get(values, 'split_seed', int, config.DEFAULT_SPLIT_SEED),
            strict=bool(values.get('strict', True)),
        )

        basis = BasisParams(
            m=_get(values, 'order_m', int, config.DEFAULT_ORDER_M),
            num_knots=_get(values, 'knots', int, config.DEFAULT_NUM_KNOTS),
            K=_get(values, 'interaction_K', int, config.DEFAULT_INTERACTION_K),
        )

        train = TrainConfig.defaults_for(
            values.get('solver', 'Oracle'),
            family,
            batch_steps_per_block=_optional(values, 'batch_steps', int),
            max_epochs=_optional(values, 'epochs', float),
            obj_tolerance=_optional(values, 'tolerance', float),
            tau=_optional(values, 'tau', float),
            alpha=_optional(values, 'alpha', float),
            delta=_optional(values, 'delta', float),
            recovery_enabled=bool(values.get('recovery', False)),
        )

        experiment = ExperimentConfig(
            dataset=dataset,
            family=family,
            basis=basis,
            rho_grid=parse_penalty_list(values.get('rho', '2^-19')),
            lam_grid=parse_penalty_list(values.get('lam', 'norm_y/2^8')),
            train=train,
            seeds=parse_seeds(values.get('seeds', 0)),
            output_dir=str(values.get('out', config.OUTPUT_DIR)),
            workers=_get(values, 'workers', int, config.MAX_WORKERS),
        )
        return experiment.validate()

    def clear_cache(self):
        """清除缓存"""
        self._cache.clear()


def _optional(values: Dict[str, Any], key: str, cast):
    if values.get(key) is None:
        return None
    try:
        return cast(values[key])
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {values[key]!r}")


def _get(values: Dict[str, Any], key: str, cast, default):
    value = _optional(values, key, cast)
    return default if value is None else value
