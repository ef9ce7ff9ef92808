# -*- coding: utf-8 -*-
"""
近端算子核心单元测试
"""

import math
import os
import sys
import unittest

import numpy as np
from scipy import optimize

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils import prox_core
from utils.error_handler import ValidationError
from utils.prox_core import EmpiricalNormTerm


def _rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


class TestThresholds(unittest.TestCase):
    """阈值算子"""

    def test_soft_threshold_values(self):
        """逐元素软阈值的手算结果"""
        out = prox_core.soft_threshold([3.0, -0.5, -2.0, 0.0], [1.0, 1.0, 0.5, 0.0])
        np.testing.assert_array_equal(out, [2.0, 0.0, -1.5, 0.0])

    def test_soft_threshold_exact_zero_inside_band(self):
        """|x_i| ≤ γ_i 时结果恰为 0"""
        out = prox_core.soft_threshold([0.3, -0.3], 0.3)
        self.assertTrue(np.all(out == 0.0))

    def test_soft_threshold_length_mismatch(self):
        """长度不一致应报错"""
        with self.assertRaises(ValidationError):
            prox_core.soft_threshold([1.0, 2.0], [0.1, 0.2, 0.3])

    def test_joint_soft_threshold(self):
        """整体软阈值缩短范数、保持方向"""
        out = prox_core.joint_soft_threshold([3.0, 4.0], 1.0)
        np.testing.assert_allclose(out, [2.4, 3.2], rtol=1e-15)
        np.testing.assert_array_equal(prox_core.joint_soft_threshold([0.0, 0.0], 1.0), [0.0, 0.0])
        np.testing.assert_array_equal(prox_core.joint_soft_threshold([0.6, 0.8], 1.0), [0.0, 0.0])

    def test_joint_soft_threshold_nan(self):
        """NaN 输入应报错"""
        with self.assertRaises(ValidationError):
            prox_core.joint_soft_threshold([np.nan, 1.0], 1.0)

    def test_threshold_spec(self):
        """ThresholdSpec 同时给出逐元素与整体阈值"""
        spec = prox_core.ThresholdSpec(gamma_vec=[1.0, 1.0, 0.5], gamma_joint=2.5)
        x = [4.0, -0.5, 4.5]
        np.testing.assert_array_equal(prox_core.soft_threshold(x, spec), [3.0, 0.0, 4.0])
        np.testing.assert_array_equal(prox_core.joint_soft_threshold([3.0, 4.0], spec), [1.5, 2.0])
        np.testing.assert_array_equal(prox_core.sparse_group_threshold(x, spec), [1.5, 0.0, 2.0])
        big = prox_core.ThresholdSpec(gamma_vec=[1.0, 1.0, 0.5], gamma_joint=5.0)
        np.testing.assert_array_equal(prox_core.sparse_group_threshold(x, big), [0.0, 0.0, 0.0])

    def test_threshold_spec_rejects_negative(self):
        """负阈值报错"""
        with self.assertRaises(ValidationError):
            prox_core.ThresholdSpec(gamma_vec=[0.1, -0.1])
        with self.assertRaises(ValidationError):
            prox_core.ThresholdSpec(gamma_vec=[0.1], gamma_joint=-1.0)

    def test_project_l2_ball(self):
        """球外投影到球面，球内不变"""
        np.testing.assert_allclose(prox_core.project_l2_ball([3.0, 4.0], 1.0), [0.6, 0.8])
        np.testing.assert_array_equal(prox_core.project_l2_ball([0.1, 0.2], 1.0), [0.1, 0.2])


class TestProxMaps(unittest.TestCase):
    """f 的近端映射与共轭"""

    def _term(self, rng, n=4, lam=None):
        r = rng.standard_normal(n)
        lam = rng.uniform(0.05, 1.0) if lam is None else lam
        return EmpiricalNormTerm(r, lam)

    def test_term_radius(self):
        """半径 λ√n"""
        term = EmpiricalNormTerm(np.ones(9), 0.5)
        self.assertEqual(term.n, 9)
        self.assertAlmostEqual(term.radius, 1.5, places=15)

    def test_moreau_identity(self):
        """prox_{αf}(x) + α·prox_{f*/α}(x/α) = x"""
        rng = _rng(1)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 8))
            term = self._term(rng, n)
            alpha = float(np.exp(rng.uniform(-3, 3)))
            x = 3.0 * rng.standard_normal(n)
            lhs = prox_core.prox_f(x, alpha, term) + alpha * prox_core.prox_f_star(x / alpha, 1.0 / alpha, term)
            worst = max(worst, float(np.max(np.abs(lhs - x))) / (1.0 + float(np.max(np.abs(x)))))
        self.assertLessEqual(worst, 1e-10)

    def test_prox_f_matches_numeric_minimization(self):
        """prox_f 的目标值不高于数值极小化的结果"""
        rng = _rng(2)
        for _ in range(200):
            n = 3
            term = self._term(rng, n)
            alpha = float(rng.uniform(0.2, 3.0))
            z = 2.0 * rng.standard_normal(n)

            def objective(u):
                return alpha * prox_core.f_value(u, term) + 0.5 * float(np.sum((u - z) ** 2))

            ours = prox_core.prox_f(z, alpha, term)
            numeric = optimize.minimize(objective, z, method='Nelder-Mead',
                                        options={'xatol': 1e-10, 'fatol': 1e-12, 'maxiter': 20000})
            self.assertLessEqual(objective(ours), numeric.fun + 1e-9)

    def test_prox_f_star_matches_numeric_minimization(self):
        """prox_f_star 的目标值不高于数值极小化的结果"""
        rng = _rng(3)
        for _ in range(200):
            n = 3
            term = self._term(rng, n)
            alpha = float(rng.uniform(0.2, 3.0))
            x = 2.0 * rng.standard_normal(n)

            def objective(u):
                return alpha * prox_core.f_star_value(u, term) + 0.5 * float(np.sum((u - x) ** 2))

            ours = prox_core.prox_f_star(x, alpha, term)
            numeric = optimize.minimize(objective, x, method='BFGS', options={'gtol': 1e-10})
            self.assertLessEqual(objective(ours), numeric.fun + 1e-9)
            self.assertLessEqual(float(np.max(np.abs(ours - numeric.x))), 1e-4)

    def test_coord_prox_matches_brent(self):
        """坐标近端与一维 Brent 极小化一致"""
        rng = _rng(4)
        for _ in range(200):
            n = 4
            term = self._term(rng, n, lam=float(rng.uniform(0.2, 1.5)))
            v = rng.standard_normal(n)
            i = int(rng.integers(0, n))
            alpha = float(rng.uniform(0.2, 3.0))
            b_i = float(v[i] + rng.standard_normal())
            s = v + term.r
            sq_minus = float(np.dot(s, s)) - s[i] ** 2

            def h(t):
                hinge = max(math.sqrt((t + term.r[i]) ** 2 + sq_minus) - term.radius, 0.0)
                return 0.5 * (t - b_i) ** 2 + alpha * 0.5 * hinge * hinge

            ours = prox_core.coord_prox_f_star(b_i, i, (term.r[i], sq_minus), alpha, term)
            brent = optimize.minimize_scalar(h, bracket=(b_i - 5.0, b_i + 5.0), method='brent',
                                             options={'xtol': 1e-12}).x
            self.assertLessEqual(abs(ours - brent), 1e-6 * (1.0 + abs(ours)))

    def test_coord_prox_accepts_dict_state(self):
        """状态可用字典传入"""
        term = EmpiricalNormTerm(np.array([1.0, -2.0, 0.5]), 0.1)
        a = prox_core.coord_prox_f_star(0.7, 0, (1.0, 3.0), 1.5, term)
        b = prox_core.coord_prox_f_star(0.7, 0, {'r_i': 1.0, 'sq_norm_minus_i': 3.0}, 1.5, term)
        self.assertEqual(a, b)

    def test_grad_f_star_finite_difference(self):
        """∇f* 与中心差分一致（远离不可微点）"""
        rng = _rng(5)
        checked = 0
        while checked < 100:
            n = 5
            term = self._term(rng, n)
            u = 2.0 * rng.standard_normal(n)
            gap = float(np.linalg.norm(u + term.r)) - term.radius
            if abs(gap) < 0.1:
                continue
            grad = prox_core.grad_f_star(u, term)
            h = 1e-6
            numeric = np.array([
                (prox_core.f_star_value(u + h * e, term) - prox_core.f_star_value(u - h * e, term)) / (2 * h)
                for e in np.eye(n)
            ])
            scale = max(float(np.linalg.norm(grad)), 1e-3)
            self.assertLessEqual(float(np.linalg.norm(grad - numeric)) / scale, 1e-5)
            checked += 1

    def test_length_checked(self):
        """向量长度与 n 不一致应报错"""
        term = EmpiricalNormTerm(np.zeros(3), 0.1)
        with self.assertRaises(ValidationError):
            prox_core.prox_f(np.zeros(4), 1.0, term)
        with self.assertRaises(ValidationError):
            prox_core.prox_f(np.zeros(3), 0.0, term)


if __name__ == "__main__":
    unittest.main()
