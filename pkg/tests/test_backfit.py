# -*- coding: utf-8 -*-
"""
回拟合模块单元测试
"""

import os
import sys
import unittest

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules import backfit, basis
from modules.datagen import SyntheticSpec, generate
from utils.error_handler import DivergenceError, ValidationError
from utils.experiment_models import BasisParams, Family, SolverKind, TrainConfig


def small_data(n=200, p=4, seed=3):
    """一个一元项加一个二元交互项的回归数据"""
    rng = np.random.Generator(np.random.Philox(seed))
    X = rng.random((n, p))
    signal = np.sin(2 * np.pi * X[:, 0]) + X[:, 1] * X[:, 2]
    return X, signal + 0.3 * rng.standard_normal(n)


class TestEpochAccounting(unittest.TestCase):
    """epoch 计数"""

    def test_one_scan_per_block_is_one_epoch(self):
        """每个分块一次扫描合计为 1 个 epoch"""
        for p, K in ((10, 2), (4, 3)):
            ids = basis.enumerate_blocks(p, K)
            dims = [5 ** len(b) for b in ids]
            total = sum(backfit.epoch_cost(d, 1.0, dims) for d in dims)
            self.assertAlmostEqual(total, 1.0, delta=1e-12)

    def test_cost_is_proportional(self):
        """单次访问代价为 T·d_k/Σd"""
        self.assertAlmostEqual(backfit.epoch_cost(5, 2.0, [5, 5, 10]), 0.5)
        with self.assertRaises(ValidationError):
            backfit.epoch_cost(5, -1.0, [5])


class TestCheckAndRecovery(unittest.TestCase):
    """检查与回退"""

    def test_decisions(self):
        """目标上升回退，持平或下降保留"""
        self.assertEqual(backfit.check_and_recovery(1.0, 1.5, 'old', 'new'), ('reverted', 'old'))
        self.assertEqual(backfit.check_and_recovery(1.0, 1.0, 'old', 'new'), ('kept', 'new'))
        self.assertEqual(backfit.check_and_recovery(1.0, 0.5, 'old', 'new'), ('kept', 'new'))


class TestLinearFit(unittest.TestCase):
    """线性 DPAM"""

    @classmethod
    def setUpClass(cls):
        cls.X, cls.y = small_data()
        cls.params = BasisParams(m=2, num_knots=6, K=2, rho=2.0 ** -10)
        cls.lam = 0.01
        cls.train = TrainConfig(solver=SolverKind.ORACLE, max_epochs=30)
        cls.model, cls.trace = backfit.fit_linear(cls.X, cls.y, cls.train, cls.params, cls.lam)

    def test_objective_nonincreasing(self):
        """Oracle 回拟合的目标逐循环不增"""
        objective = np.array(self.trace.objective)
        self.assertGreater(len(objective), 1)
        self.assertTrue(np.all(np.diff(objective) <= 1e-10 * max(1.0, abs(objective[0]))))

    def test_trace_bookkeeping(self):
        """轨迹各列长度一致，epoch 递增"""
        n = len(self.trace.epoch_marks)
        self.assertEqual(len(self.trace.objective), n)
        self.assertEqual(len(self.trace.nonzero_blocks), n)
        self.assertEqual(self.trace.epoch_marks[0], 0.0)
        self.assertTrue(np.all(np.diff(self.trace.epoch_marks) > 0))
        self.assertEqual(self.trace.nonzero_blocks[0], 0)

    def test_intercept_is_mean(self):
        """线性模型截距为 Ȳ"""
        self.assertAlmostEqual(self.model.intercept, float(np.mean(self.y)), places=12)

    def test_fits_signal(self):
        """训练误差明显小于方差"""
        resid = self.y - self.trace.fitted
        self.assertLess(float(np.mean(resid ** 2)), 0.5 * float(np.var(self.y)))
        self.assertGreater(len(self.model.nonzero_blocks()), 0)

    def test_prediction_path_matches_fitted(self):
        """训练数据经预测路径得到相同的拟合值"""
        np.testing.assert_allclose(backfit.predict(self.model, self.X), self.trace.fitted,
                                   rtol=0, atol=1e-12)

    def test_predict_rejects_wrong_width(self):
        """列数不符应报错"""
        with self.assertRaises(ValidationError):
            backfit.predict(self.model, np.zeros((3, 2)))

    def test_large_lambda_gives_constant_model(self):
        """λ 足够大时所有分块为 0"""
        model, trace = backfit.fit_linear(self.X, self.y, self.train, self.params, 1e6)
        self.assertEqual(model.nonzero_blocks(), [])
        np.testing.assert_allclose(trace.fitted, np.mean(self.y))

    def test_design_reuse(self):
        """复用预先构造的设计与直接拟合一致"""
        design = basis.build_design(self.X, 6, 2, 2, rho=0.0)
        model, _ = backfit.fit(self.X, self.y, self.train, self.params, self.lam, design=design)
        for block in self.model.blocks:
            np.testing.assert_allclose(model.block_coefs[block], self.model.block_coefs[block], atol=1e-10)


class TestRecovery(unittest.TestCase):
    """启用回退后的单块访问"""

    def test_block_losses_nonincreasing(self):
        """启用回退时每次访问后的目标不增"""
        X, y = small_data(n=150, seed=8)
        train = TrainConfig(solver=SolverKind.STOC_CP, batch_steps_per_block=2,
                            recovery_enabled=True, max_epochs=6, seed=4)
        _, trace = backfit.fit_linear(X, y, train, BasisParams(m=2, num_knots=5, K=2, rho=2.0 ** -8), 0.02)
        losses = np.array(trace.block_losses)
        self.assertGreater(len(losses), 0)
        self.assertTrue(np.all(np.diff(losses) <= 1e-10))
        for cycle, block in trace.recoveries:
            self.assertGreaterEqual(cycle, 1)
            self.assertIsInstance(block, tuple)


class TestLogisticFit(unittest.TestCase):
    """logistic DPAM"""

    @classmethod
    def setUpClass(cls):
        data = generate(SyntheticSpec(n=300, p=7, seed=5, family='logistic_g'))
        cls.X, cls.y = data.X, data.y
        cls.train = TrainConfig.defaults_for(SolverKind.ORACLE, Family.LOGISTIC, max_epochs=20)
        cls.params = BasisParams(m=2, num_knots=5, K=1, rho=2.0 ** -8)
        cls.model, cls.trace = backfit.fit_logistic(cls.X, cls.y, cls.train, cls.params, 0.005)

    def test_probabilities(self):
        """预测为 (0, 1) 内的概率"""
        prob = backfit.predict(self.model, self.X)
        self.assertTrue(np.all((prob > 0) & (prob < 1)))
        self.assertEqual(self.model.family, Family.LOGISTIC)

    def test_objective_decreases(self):
        """惩罚负对数似然低于初始值 ln 2"""
        self.assertAlmostEqual(self.trace.objective[0], np.log(2.0), places=12)
        self.assertLess(self.trace.objective[-1], self.trace.objective[0])

    def test_fitted_is_linear_predictor(self):
        """trace.fitted 为线性预测子"""
        np.testing.assert_allclose(backfit.predict_linear_predictor(self.model, self.X),
                                   self.trace.fitted, atol=1e-12)

    def test_non_binary_response_rejected(self):
        """非 0/1 响应应报错"""
        with self.assertRaises(ValidationError):
            backfit.fit(self.X, self.y + 0.5, self.train, self.params, 0.01, family='logistic')


class TestFailures(unittest.TestCase):
    """错误处理"""

    def test_divergence_names_block(self):
        """发散错误带有分块标识"""
        X, y = small_data(n=60, seed=2)
        train = TrainConfig(solver=SolverKind.CP, tau=1e200, alpha=1e200, batch_steps_per_block=20)
        with self.assertRaises(DivergenceError) as ctx:
            backfit.fit_linear(X, y, train, BasisParams(m=2, num_knots=4, K=1, rho=0.0), 0.01)
        self.assertEqual(ctx.exception.block, (0,))

    def test_shape_mismatch(self):
        """X 与 Y 长度不一致应报错"""
        with self.assertRaises(ValidationError):
            backfit.fit_linear(np.zeros((5, 2)), np.zeros(4), TrainConfig(), BasisParams(), 0.1)


if __name__ == "__main__":
    unittest.main()
