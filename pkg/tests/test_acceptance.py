# -*- coding: utf-8 -*-
"""
完整规模的验收测试（耗时较长）

设置环境变量 DPAM_RUN_SLOW=1 后运行:
    DPAM_RUN_SLOW=1 python -m unittest tests.test_acceptance
"""

import os
import sys
import tempfile
import unittest

import numpy as np
import pandas as pd

# 添加项目根目录到路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules import basis
from modules import experiment as exp
from modules import single_block as sb
from modules.datagen import SyntheticSpec, generate
from utils.config_parser import ExperimentConfigParser
from utils.experiment_models import SolverKind
from utils.prox_core import single_block_objective

SLOW = bool(os.getenv('DPAM_RUN_SLOW'))

# 回归函数中真实存在的 14 个分块（下标从 0 开始）
TRUE_BLOCKS = [(j,) for j in range(7)] + [(2, 3), (0, 2), (0, 1), (3, 4), (3, 5), (1, 4), (5, 6)]


@unittest.skipUnless(SLOW, "set DPAM_RUN_SLOW=1 to run acceptance tests")
class TestSingleBlockSuites(unittest.TestCase):
    """单块求解器的大规模对照"""

    def test_oracle_equivalence_and_zero_regime(self):
        """50 个实例：批量算法 1000 步相对差距 ≤ 1e-4；λ = 2λ₀ 时返回精确 0"""
        frames = []
        for i, (n, d) in enumerate([(100, 5), (100, 25), (2000, 5), (2000, 25)]):
            count = 13 if i < 2 else 12
            frames.append(exp.solver_sanity_report(instances=count, n=n, d=d, steps=1000, seed=100 + i))
        report = pd.concat(frames)
        self.assertEqual(len(report), 150)
        self.assertLessEqual(report['relative_gap'].max(), 1e-4)

        zero = pd.concat([
            exp.solver_sanity_report(instances=13, n=n, d=d, steps=1000, seed=200 + i, lam_fraction=2.0,
                                     solvers=(SolverKind.CP, SolverKind.AMA))
            for i, (n, d) in enumerate([(100, 5), (100, 25), (2000, 5), (2000, 25)])
        ])
        self.assertTrue((zero['objective'] == zero['oracle_objective']).all())

    def test_stochastic_beats_batch(self):
        """n=5000、d=100 的二元交互块：10 次扫描后随机算法优于 10 步批量算法，50 次扫描内差距 ≤ 1e-3"""
        data = generate(SyntheticSpec(n=5000, seed=0))
        knots = [basis.compute_knots(data.X[:, j], 11) for j in (0, 1)]
        bases = {j: basis.univariate_basis(data.X[:, j], knots[j], 2) for j in (0, 1)}
        block = basis.tensor_block_basis((0, 1), bases, 2, 2.0 ** -19)
        self.assertEqual(block.d, 100)
        r = data.y - data.y.mean()
        base = sb.SingleBlockProblem(block.basis, r, block.gamma_diag, 0.0, block.spectral_norm_sq, block.gram)
        prob = base.with_penalties(block.gamma_diag, sb.zero_threshold(base) / 4.0)
        best = single_block_objective(sb.solve_oracle(prob).beta_hat, prob)

        def gap(report):
            return (single_block_objective(report.beta_hat, prob) - best) / abs(best)

        for stochastic, batch in ((SolverKind.STOC_CP, SolverKind.CP), (SolverKind.STOC_AMA_SAG, SolverKind.AMA)):
            early = np.mean([gap(sb.solve_single_block(stochastic, prob, 10, seed=s)) for s in range(10)])
            self.assertLess(early, gap(sb.solve_single_block(batch, prob, 10)), stochastic)
            late = [gap(sb.solve_single_block(stochastic, prob, 50, seed=s)) for s in range(10)]
            self.assertLessEqual(max(late), 1e-3, stochastic)


@unittest.skipUnless(SLOW, "set DPAM_RUN_SLOW=1 to run acceptance tests")
class TestDeskScaleExperiments(unittest.TestCase):
    """n=5000 的多分块实验"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.parser = ExperimentConfigParser()

    def tearDown(self):
        self.tmp.cleanup()

    def _run(self, name, **values):
        values.setdefault('out', os.path.join(self.tmp.name, name))
        values.setdefault('generate_n', 5000)
        values.setdefault('seeds', '0')
        return exp.run_experiment(self.parser.build(None, values))

    def test_linear_oracle(self):
        """3×3 网格：ρ=2⁻¹⁹、λ=‖Ỹ‖ₙ/2⁸ 时验证 MSE ∈ [0.42, 0.48]；分块数随 λ 不增，系数个数随 ρ 不增"""
        rhos = ['2^-16', '2^-19', '2^-22']
        lams = ['norm_y/2^6', 'norm_y/2^8', 'norm_y/2^10']
        result = self._run('linear', rho=', '.join(rhos), lam=', '.join(lams))
        table = result.table
        self.assertEqual(table.shape[1], 9)

        def cell(metric, rho, lam):
            return table.loc[metric, f"rho={rho},lam={lam}"]

        self.assertGreaterEqual(cell('validation_mse', '2^-19', 'norm_y/2^8'), 0.42)
        self.assertLessEqual(cell('validation_mse', '2^-19', 'norm_y/2^8'), 0.48)
        self.assertGreaterEqual(cell('nonzero_blocks', '2^-19', 'norm_y/2^8'), 14)
        # λ 从大到小、ρ 从大到小排列，计数沿两轴都不减
        for rho in rhos:
            blocks = [cell('nonzero_blocks', rho, lam) for lam in lams]
            self.assertTrue(all(a <= b for a, b in zip(blocks, blocks[1:])), (rho, blocks))
        for lam in lams:
            coefs = [cell('nonzero_coefs', rho, lam) for rho in rhos]
            self.assertTrue(all(a <= b for a, b in zip(coefs, coefs[1:])), (lam, coefs))

        experiment = self.parser.build(None, {'generate_n': 5000, 'rho': '2^-19', 'lam': 'norm_y/2^8',
                                              'out': self.tmp.name})
        single = exp.run_single(experiment)
        self.assertEqual(single.point.label, 'rho=2^-19,lam=norm_y/2^8')
        selected = set(single.model.nonzero_blocks())
        self.assertTrue(set(TRUE_BLOCKS) <= selected, sorted(set(TRUE_BLOCKS) - selected))

    def test_logistic_oracle(self):
        """验证误分类率 ∈ [25%, 29%]"""
        result = self._run('logistic', generate_family='logistic_g')
        rate = result.table.iloc[:, 0]['validation_misclassification']
        self.assertGreaterEqual(rate, 0.25)
        self.assertLessEqual(rate, 0.29)

    def test_recovery_keeps_block_objective_monotone(self):
        """启用回退时每种求解器的逐块训练目标不增（线性与 logistic）"""
        for family in ('linear_g', 'logistic_g'):
            for solver in SolverKind:
                experiment = self.parser.build(None, {
                    'generate_family': family, 'generate_n': 5000, 'solver': solver.value,
                    'recovery': True, 'epochs': 3, 'out': self.tmp.name,
                })
                trace = exp.run_single(experiment).trace
                self.assertGreater(len(trace.block_losses), 1, (family, solver))
                self.assertTrue(np.all(np.diff(trace.block_losses) <= 1e-10), (family, solver))

    def test_phase_shift(self):
        """相移数据：验证 MSE ≤ 0.02，非零分块 6 到 10 个"""
        result = self._run('phase', generate_family='phase_shift', interaction_K=2,
                           rho='2^-21', lam='norm_y/2^9')
        column = result.table.iloc[:, 0]
        self.assertLessEqual(column['validation_mse'], 0.02)
        self.assertGreaterEqual(column['nonzero_blocks'], 6)
        self.assertLessEqual(column['nonzero_blocks'], 10)


if __name__ == "__main__":
    unittest.main()
