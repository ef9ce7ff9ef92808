# -*- coding: utf-8 -*-
"""
单块求解器单元测试
"""

import os
import sys
import unittest

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules import single_block as sb
from modules.single_block import SingleBlockProblem
from utils.error_handler import DivergenceError, ValidationError
from utils.experiment_models import SolverKind, SolverState, StepSizes
from utils.prox_core import single_block_objective


def make_problem(seed, n=100, d=5, lam_fraction=0.25, gamma=0.05):
    """中心化高斯设计、稀疏信号；λ 取 λ₀ 的给定倍数"""
    rng = np.random.Generator(np.random.Philox(seed))
    X = rng.standard_normal((n, d))
    X -= X.mean(axis=0)
    truth = np.zeros(d)
    truth[: max(1, d // 3)] = rng.standard_normal(max(1, d // 3)) + 1.0
    r = X @ truth + rng.standard_normal(n)
    r -= r.mean()
    gamma_diag = np.full(d, gamma)
    gamma_diag[0] = 0.0
    base = SingleBlockProblem(X, r, gamma_diag, 0.0)
    return base.with_penalties(gamma_diag, lam_fraction * sb.zero_threshold(base))


def relative_gap(beta, prob):
    best = single_block_objective(sb.solve_oracle(prob).beta_hat, prob)
    return (single_block_objective(beta, prob) - best) / abs(best)


class TestStepSizes(unittest.TestCase):
    """步长与可行性"""

    def test_defaults_are_feasible(self):
        """默认步长满足各自的收敛条件"""
        prob = make_problem(0)
        for kind in (SolverKind.CP, SolverKind.AMA, SolverKind.CONDAT_VU):
            sizes = sb.default_step_sizes(kind, prob)
            self.assertTrue(sb.step_feasibility(kind, sizes, prob), kind)

    def test_no_step_sizes_for_cc_and_oracle(self):
        """CC 与 Oracle 没有步长"""
        prob = make_problem(0)
        self.assertIsNone(sb.default_step_sizes(SolverKind.CC, prob))
        self.assertIsNone(sb.default_step_sizes(SolverKind.ORACLE, prob))

    def test_stochastic_default(self):
        """随机算法 τ = 1/(3α·max‖X_i‖²)"""
        prob = make_problem(0)
        sizes = sb.default_step_sizes(SolverKind.STOC_CP, prob, alpha=2.0)
        self.assertAlmostEqual(sizes.tau, 1.0 / (6.0 * prob.max_row_norm_sq))

    def test_infeasible_step_flagged(self):
        """超大步长被标记为不可行"""
        prob = make_problem(0)
        big = StepSizes(tau=10.0 * prob.n / prob.spectral_norm_sq, alpha=1.0)
        self.assertFalse(sb.step_feasibility(SolverKind.CP, big, prob))
        self.assertFalse(sb.step_feasibility(SolverKind.AMA, StepSizes(tau=1e-6, alpha=2.5), prob))


class TestExactSolver(unittest.TestCase):
    """精确 Lasso 与阈值"""

    def test_lasso_kkt(self):
        """精确解满足 KKT 条件"""
        prob = make_problem(1, d=8)
        beta = sb.lasso_exact(prob)
        grad = prob.gram_matrix() @ beta - prob.X.T @ prob.r / prob.n
        active = beta != 0
        np.testing.assert_allclose(grad[active], -np.sign(beta[active]) * prob.gamma_diag[active], atol=1e-8)
        self.assertTrue(np.all(np.abs(grad[~active]) <= prob.gamma_diag[~active] + 1e-8))

    def test_threshold_scales_solution(self):
        """阈值后的解是 Lasso 解的非负倍数"""
        prob = make_problem(2)
        tilde = sb.lasso_exact(prob)
        hat = sb.threshold_lasso_solution(tilde, prob)
        ratio = hat[tilde != 0] / tilde[tilde != 0]
        self.assertTrue(np.allclose(ratio, ratio[0]))
        self.assertTrue(0.0 < ratio[0] < 1.0)

    def test_zero_above_threshold(self):
        """λ ≥ λ₀ 时精确解为 0"""
        prob = make_problem(3, lam_fraction=1.5)
        report = sb.solve_oracle(prob)
        self.assertFalse(np.any(report.beta_hat))
        self.assertTrue(report.was_reset_to_zero)

    def test_oracle_warm_start(self):
        """热启动不改变精确解"""
        prob = make_problem(4)
        cold = sb.solve_oracle(prob).beta_hat
        warm = sb.solve_oracle(prob, SolverState(beta=cold + 0.1)).beta_hat
        np.testing.assert_allclose(warm, cold, atol=1e-7)


class TestIterativeSolvers(unittest.TestCase):
    """迭代算法与精确解对照"""

    def test_batch_solvers_reach_oracle(self):
        """批量 CP、AMA 与 Condat–Vũ 逼近精确解"""
        for seed in range(3):
            for n, d in ((100, 5), (400, 12)):
                prob = make_problem(seed, n=n, d=d)
                for kind in (SolverKind.CP, SolverKind.AMA, SolverKind.CONDAT_VU):
                    report = sb.solve_single_block(kind, prob, 2000)
                    self.assertLessEqual(relative_gap(report.beta_hat, prob), 1e-4, (seed, n, kind))

    def test_reset_to_zero(self):
        """λ = 2λ₀ 时批量与随机原始-对偶算法都返回精确的 0"""
        for seed in range(5):
            prob = make_problem(seed, lam_fraction=2.0)
            for kind in (SolverKind.CP, SolverKind.AMA):
                report = sb.solve_single_block(kind, prob, 1000)
                self.assertFalse(np.any(report.beta_hat), (seed, kind))
                self.assertTrue(report.was_reset_to_zero, (seed, kind))
        prob = make_problem(7, lam_fraction=2.0)
        for kind in (SolverKind.STOC_CP, SolverKind.STOC_AMA_SAG, SolverKind.STOC_AMA_SAGA):
            for seed in range(3):
                report = sb.solve_single_block(kind, prob, 50, seed=seed)
                self.assertFalse(np.any(report.beta_hat), (kind, seed))
                self.assertTrue(report.was_reset_to_zero, (kind, seed))

    def test_dominant_gamma_gives_exact_zero(self):
        """Γ_jj 极大时第 j 个系数恰为 0"""
        base = make_problem(8, n=150, d=6)
        gamma_diag = base.gamma_diag.copy()
        gamma_diag[1] = 1e6
        unpenalized = base.with_penalties(gamma_diag, 0.0)
        prob = unpenalized.with_penalties(gamma_diag, 0.25 * sb.zero_threshold(unpenalized))
        for kind in (SolverKind.ORACLE, SolverKind.CP, SolverKind.STOC_CP, SolverKind.AMA):
            report = sb.solve_single_block(kind, prob, 200, seed=0)
            self.assertEqual(report.beta_hat[1], 0.0, kind)
            self.assertTrue(np.any(report.beta_hat), kind)

    def test_stochastic_solvers_converge(self):
        """随机算法若干扫描后接近精确解"""
        prob = make_problem(5, n=200, d=6)
        for kind in (SolverKind.STOC_CP, SolverKind.STOC_AMA_SAG, SolverKind.STOC_AMA_SAGA):
            report = sb.solve_single_block(kind, prob, 100, seed=11)
            self.assertLessEqual(relative_gap(report.beta_hat, prob), 1e-3, kind)
            self.assertEqual(report.seed, 11)
            self.assertLess(report.bookkeeping_drift, 1e-8)

    def test_stochastic_reproducible(self):
        """相同种子结果逐位一致"""
        prob = make_problem(6)
        a = sb.solve_single_block(SolverKind.STOC_AMA_SAGA, prob, 3, seed=5)
        b = sb.solve_single_block(SolverKind.STOC_AMA_SAGA, prob, 3, seed=5)
        np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
        np.testing.assert_array_equal(a.objective_trace, b.objective_trace)

    def test_cc_descent(self):
        """CC 的扰动目标单调不增"""
        for seed in range(5):
            prob = make_problem(seed)
            report = sb.solve_cc_batch(prob, 200)
            self.assertTrue(np.all(np.diff(report.perturbed_trace) <= 1e-10))

    def test_cc_smoothness_bound(self):
        """光滑部分的梯度 Lipschitz 比值不超过 (1 + λ/√δ)‖X‖²/n"""
        prob = make_problem(7)
        delta = 1e-6
        bound = sb.perturbed_smoothness(prob, delta) * (1.0 + 1e-6)
        rng = np.random.Generator(np.random.Philox(8))
        for _ in range(1000):
            a = rng.standard_normal(prob.d) * 10.0 ** rng.uniform(-4, 0)
            b = rng.standard_normal(prob.d) * 10.0 ** rng.uniform(-4, 0)
            diff = sb.perturbed_smooth_gradient(a, prob, delta) - sb.perturbed_smooth_gradient(b, prob, delta)
            self.assertLessEqual(np.linalg.norm(diff) / np.linalg.norm(a - b), bound)

    def test_stochastic_cc_runs(self):
        """随机 CC 逐步接近精确解"""
        prob = make_problem(9)
        report = sb.solve_single_block(SolverKind.STOC_CC, prob, 60, seed=1)
        self.assertLessEqual(relative_gap(report.beta_hat, prob), 5e-2)
        self.assertEqual(len(report.perturbed_trace), 60)

    def test_divergence_reported(self):
        """步长过大导致发散时报错并给出步数"""
        prob = make_problem(10)
        with self.assertRaises(DivergenceError) as ctx:
            sb.solve_cp_batch(prob, 50, StepSizes(tau=1e200, alpha=1e200))
        self.assertIsNotNone(ctx.exception.step)

    def test_zero_design(self):
        """全零设计直接返回 0"""
        prob = SingleBlockProblem(np.zeros((10, 3)), np.arange(10.0), np.zeros(3), 0.1)
        report = sb.solve_single_block(SolverKind.CP, prob, 5)
        np.testing.assert_array_equal(report.beta_hat, np.zeros(3))

    def test_bad_gamma_rejected(self):
        """负惩罚应报错"""
        with self.assertRaises(ValidationError):
            SingleBlockProblem(np.ones((3, 2)), np.zeros(3), np.array([-1.0, 0.0]), 0.1)


if __name__ == "__main__":
    unittest.main()
