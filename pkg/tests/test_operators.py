#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
operators 模块测试：逐点碰撞算子、弱形式与空间均匀松弛
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from reactkin.equilibrium import (MaxwellianParams, TabulatedField, entropy_production_mech, maxwellian_field,
                                  moments, phase_grid, random_positive_field)
from reactkin.exceptions import StepSizeError, UsageError
from reactkin.invariants import chemical_invariant_space, collision_invariant_basis
from reactkin.kinematics import Zstate
from reactkin.operators import (conservative_projection, grid_collision_rates, moment_of_q, q_chem,
                                q_chem_channel, q_mech, relax_homogeneous, weak_form_chem, weak_form_mech)
from reactkin.quadrature import QuadratureSpec

SMALL_QUAD = QuadratureSpec(orders={"unit": 3, "sphere": 3, "halfline": 8, "velocity": 4, "internal": 4})
TINY_QUAD = QuadratureSpec(orders={"unit": 2, "sphere": 2, "halfline": 6, "velocity": 3, "internal": 3})
RELAX_QUAD = QuadratureSpec(orders={"unit": 2, "sphere": 2, "halfline": 6, "velocity": 3, "internal": 2})

POINTS = [
    (1, Zstate(1, [0.3, -0.2, 0.5])),
    (2, Zstate(2, [-0.7, 0.1, 0.0])),
    (3, Zstate(3, [0.1, 0.4, -0.3], 1.2)),
]


@pytest.fixture
def off_equilibrium(reference_table):
    """不满足质量作用律的麦克斯韦分布"""
    return maxwellian_field(MaxwellianParams((1.0, 2.0, 0.5), T=1.1), reference_table)


class TestPointOperators:
    """测试逐点化学与力学算子"""

    @pytest.mark.parametrize("alpha,Z", POINTS)
    def test_chem_vanishes_at_equilibrium(self, background, reference_table, reference_model,
                                          reference_channel, det_quad, alpha, Z):
        """平衡麦克斯韦分布上增益与损失逐节点相消"""
        field = maxwellian_field(background, reference_table)
        result = q_chem(field, reference_table, reference_model, (reference_channel,), alpha, Z, det_quad)
        assert result.loss > 0
        assert abs(result.value) <= 1e-12 * (result.gain + result.loss)
        assert result.std_error == 0.0

    @pytest.mark.parametrize("alpha,Z", POINTS)
    def test_mech_vanishes_for_maxwellian(self, reference_table, reference_model, alpha, Z):
        """任意麦克斯韦分布使力学算子为 0"""
        field = maxwellian_field(MaxwellianParams((1.0, 2.0, 0.5), T=1.1), reference_table)
        result = q_mech(field, reference_table, reference_model, alpha, Z, SMALL_QUAD)
        assert result.loss > 0
        assert abs(result.value) <= 1e-12 * (result.gain + result.loss)

    def test_empty_channels(self, off_equilibrium, reference_table, reference_model, det_quad):
        result = q_chem(off_equilibrium, reference_table, reference_model, (), 3, POINTS[2][1], det_quad)
        assert result.value == 0.0

    def test_channels_additive(self, off_equilibrium, reference_table, reference_model, reference_channel,
                               det_quad):
        """同一通道重复两次时贡献加倍"""
        alpha, Z = POINTS[2]
        single = q_chem_channel(off_equilibrium, reference_table, reference_model, reference_channel,
                                alpha, Z, det_quad)
        double = q_chem(off_equilibrium, reference_table, reference_model,
                        (reference_channel, reference_channel), alpha, Z, det_quad)
        assert single.value != 0.0
        assert double.value == pytest.approx(2.0 * single.value, rel=1e-12)

    @pytest.mark.parametrize("alpha,Z", POINTS)
    def test_reactant_order_irrelevant(self, reference_table, reference_model, reference_channel, det_quad,
                                       alpha, Z):
        """交换两个反应物的顺序不改变通道贡献"""
        field = random_positive_field(reference_table, np.random.default_rng(2))
        direct = q_chem_channel(field, reference_table, reference_model, reference_channel, alpha, Z, det_quad)
        swapped = q_chem_channel(field, reference_table, reference_model, reference_channel.swapped(), alpha, Z,
                                 det_quad)
        assert direct.loss > 0
        assert swapped.gain == pytest.approx(direct.gain, rel=1e-12)
        assert swapped.loss == pytest.approx(direct.loss, rel=1e-12)
        assert swapped.value == pytest.approx(direct.value, rel=1e-10, abs=1e-14)

    def test_below_threshold_product(self, off_equilibrium, reference_table, reference_model,
                                     reference_channel, det_quad):
        """门限以下的产物态不参与化学反应"""
        Z = Zstate(3, [0.0, 0.0, 0.0], 0.2)
        result = q_chem(off_equilibrium, reference_table, reference_model, (reference_channel,), 3, Z, det_quad)
        assert result.gain == 0.0 and result.loss == 0.0

    def test_point_species_mismatch(self, off_equilibrium, reference_table, reference_model,
                                    reference_channel, det_quad):
        with pytest.raises(UsageError):
            q_chem(off_equilibrium, reference_table, reference_model, (reference_channel,), 1,
                   POINTS[1][1], det_quad)


class TestWeakForms:
    """测试弱形式与守恒律"""

    def _basis(self, reference_table, reference_channel):
        return collision_invariant_basis(reference_table, chemical_invariant_space(3, (reference_channel,)))

    def test_chem_weak_form_invariants(self, off_equilibrium, reference_table, reference_model,
                                       reference_channel, det_quad):
        """碰撞不变量的化学弱形式为 0"""
        basis = self._basis(reference_table, reference_channel)
        for i in range(basis.dim):
            value = weak_form_chem(off_equilibrium, basis.generator(i), reference_table, reference_model,
                                   (reference_channel,), det_quad).value
            assert abs(value) < 1e-9, basis.names[i]

    def test_mech_weak_form_invariants(self, off_equilibrium, reference_table, reference_model,
                                       reference_channel):
        basis = self._basis(reference_table, reference_channel)
        for i in range(basis.dim):
            value = weak_form_mech(off_equilibrium, basis.generator(i), reference_table, reference_model,
                                   TINY_QUAD).value
            assert abs(value) < 1e-9, basis.names[i]

    def test_product_density_decreases(self, reference_table, reference_model, reference_channel, det_quad):
        """n_An_B/n_P 低于平衡值时产物数密度减少"""
        field = maxwellian_field(MaxwellianParams((1.0, 1.0, 1.0)), reference_table)

        def indicator(alpha, xi, I):
            return np.full(len(xi), 1.0 if alpha == 3 else 0.0)

        value = moment_of_q(field, indicator, reference_table, reference_model, (reference_channel,),
                            det_quad, include_mech=False).value
        assert value < 0

    def test_moment_conservation_mc(self, off_equilibrium, reference_table, reference_model, reference_channel):
        """直接积分的质量矩在误差内为 0；加倍增益的故障能被发现"""
        def mass(alpha, xi, I):
            return np.full(len(xi), reference_table[alpha].m)

        quad = QuadratureSpec(mode="monte_carlo", mc_samples=40000, seed=7)
        honest = moment_of_q(off_equilibrium, mass, reference_table, reference_model, (reference_channel,),
                             quad, include_mech=False)
        assert honest.std_error > 0
        assert honest.within(0.0, n_sigma=5.0)
        faulty = moment_of_q(off_equilibrium, mass, reference_table, reference_model, (reference_channel,),
                             replace(quad, debug_fault="kernel_factor"), include_mech=False)
        assert not faulty.within(0.0, n_sigma=5.0)

    def test_fault_shifts_mass_moment(self, off_equilibrium, reference_table, reference_model,
                                      reference_channel, det_quad):
        """同一确定性规则上，加倍增益使质量矩偏离 O(1)"""
        def mass(alpha, xi, I):
            return np.full(len(xi), reference_table[alpha].m)

        honest = moment_of_q(off_equilibrium, mass, reference_table, reference_model, (reference_channel,),
                             det_quad, include_mech=False)
        faulty = moment_of_q(off_equilibrium, mass, reference_table, reference_model, (reference_channel,),
                             replace(det_quad, debug_fault="kernel_factor"), include_mech=False)
        assert faulty.value - honest.value > 1.0

    def test_invariant_moments_with_mech(self, reference_table, reference_model, reference_channel):
        """非麦克斯韦分布上化学加力学算子的全部碰撞不变量矩在误差内为 0"""
        basis = collision_invariant_basis(reference_table, chemical_invariant_space(3, (reference_channel,)))
        field = random_positive_field(reference_table, np.random.default_rng(5))
        quad = QuadratureSpec(mode="monte_carlo", mc_samples=20000, seed=11)
        result = moment_of_q(field, basis.evaluate, reference_table, reference_model, (reference_channel,),
                             quad, include_mech=True)
        assert np.shape(result.value) == (basis.dim,)
        assert np.all(np.asarray(result.std_error) > 0)
        for i in range(basis.dim):
            assert result.component(i).within(0.0, n_sigma=5.0), basis.names[i]


class TestRelaxation:
    """测试网格上的空间均匀松弛"""

    def _relax(self, f0, reference_table, reference_model, reference_channel, dt, steps, **kwargs):
        return relax_homogeneous(f0, reference_table, reference_model, (reference_channel,), dt=dt, steps=steps,
                                 quad=kwargs.pop("quad", RELAX_QUAD), **kwargs)

    def _reference_grid(self, f0, reference_table):
        """与 relax_homogeneous 相同的参考麦克斯韦分布、规则与网格"""
        mom = moments(f0, reference_table, RELAX_QUAD)
        reference = MaxwellianParams(tuple(mom.n), mom.u, mom.T)
        center = tuple(float(x) for x in mom.u)
        rule = RELAX_QUAD.with_scale(mom.T)
        return reference, rule, center, phase_grid(reference_table, rule, center)

    def test_equilibrium_is_fixed_point(self, background, reference_table, reference_model, reference_channel):
        """化学平衡的麦克斯韦分布保持不变，耗散为 0"""
        trajectory = self._relax(background, reference_table, reference_model, reference_channel, 0.05, 3)
        n = trajectory.densities()
        np.testing.assert_allclose(n, np.tile(background.n, (3, 1)), rtol=1e-9)
        np.testing.assert_allclose(trajectory.column("T"), 1.0, rtol=1e-9)
        H = trajectory.column("H")
        np.testing.assert_allclose(H, H[0], rtol=1e-9, atol=1e-12)
        assert np.all(np.abs(trajectory.column("W_chem")) < 1e-10)
        assert np.all(np.abs(trajectory.column("W_mech")) < 1e-12)
        assert isinstance(trajectory.final, TabulatedField)

    def test_off_equilibrium_composition(self, background, reference_table, reference_model, reference_channel,
                                         progress_tracker):
        """H_free 单调下降，耗散非正，产物密度向平衡值移动"""
        params = MaxwellianParams((1.0, 1.0, 1.0))
        trajectory = self._relax(params, reference_table, reference_model, reference_channel, 0.02, 4,
                                 progress_callback=progress_tracker)
        assert len(trajectory) == 4
        assert np.all(np.diff(trajectory.column("H_free")) < 0)
        assert np.all(trajectory.column("W_chem") < 0)
        assert np.all(trajectory.column("W_mech") <= 1e-12)
        n = trajectory.densities()
        assert np.sign(n[-1, 2] - n[0, 2]) == np.sign(background.n[2] - 1.0)
        final = progress_tracker.get_final_progress("松弛")
        assert final['current'] == final['total'] == 4

    def test_conserved_quantities(self, reference_table, reference_model, reference_channel):
        """投影后网格上的化学不变量、动量与能量逐步守恒"""
        params = MaxwellianParams((1.0, 1.0, 1.0), u=(0.2, 0.0, -0.1), T=1.1)
        trajectory = self._relax(params, reference_table, reference_model, reference_channel, 0.02, 4)
        U = chemical_invariant_space(3, (reference_channel,))
        invariants = trajectory.densities() @ U
        np.testing.assert_allclose(invariants, np.tile(invariants[0], (4, 1)), rtol=1e-10)
        momenta = trajectory.momenta(reference_table)
        np.testing.assert_allclose(momenta, np.tile(momenta[0], (4, 1)), rtol=1e-10, atol=1e-12)
        E = trajectory.column("E")
        np.testing.assert_allclose(E, E[0], rtol=1e-10)
        n = trajectory.densities()
        assert not np.allclose(n[-1], n[0])

    def test_non_maxwellian_start(self, reference_table, reference_model, reference_channel):
        """随机正分布出发时力学耗散严格为负，记录值与同一网格上的直接计算一致"""
        f0 = random_positive_field(reference_table, np.random.default_rng(3))
        trajectory = self._relax(f0, reference_table, reference_model, reference_channel, 0.02, 2)
        reference, rule, center, grid = self._reference_grid(f0, reference_table)
        tabulated = TabulatedField.from_field(f0, reference_table, grid, reference)
        expected = entropy_production_mech(tabulated, reference_table, reference_model, rule, center).value
        first = trajectory.records[0]
        assert first.W_mech < 0
        assert first.W_mech == pytest.approx(expected, rel=1e-12)
        np.testing.assert_allclose(first.n, tabulated.moments().n, rtol=1e-12)
        assert trajectory.records[1].H_free < first.H_free

    def test_projection_removes_invariant_moments(self, reference_table, reference_model, reference_channel):
        """投影后的网格速率对全部碰撞不变量的矩为 0"""
        f0 = random_positive_field(reference_table, np.random.default_rng(8))
        reference, rule, center, grid = self._reference_grid(f0, reference_table)
        tabulated = TabulatedField.from_field(f0, reference_table, grid, reference)
        chem, mech = grid_collision_rates(tabulated, reference_table, reference_model, (reference_channel,),
                                          grid, rule, center)
        rates = {alpha: chem[alpha] + mech[alpha] for alpha in chem}
        basis = collision_invariant_basis(reference_table, chemical_invariant_space(3, (reference_channel,)))
        projected = conservative_projection(rates, tabulated, basis)

        def invariant_moments(values):
            return sum(basis.evaluate(a, grid.xi[a], grid.I[a]).T @ (grid.weights[a] * values[a]) for a in values)

        scale = max(float(np.max(np.abs(r))) for r in rates.values())
        np.testing.assert_allclose(invariant_moments(projected), 0.0, atol=1e-10 * scale)
        assert np.max(np.abs(invariant_moments(rates))) > 0

    def test_zero_step(self, reference_table, reference_model, reference_channel):
        """dt = 0 时状态不变"""
        trajectory = self._relax(MaxwellianParams((1.0, 1.0, 1.0)), reference_table, reference_model,
                                 reference_channel, 0.0, 3)
        np.testing.assert_allclose(trajectory.densities(), np.ones((3, 3)), rtol=1e-12)
        H = trajectory.column("H")
        assert H[2] == pytest.approx(H[0], rel=1e-13)

    def test_monte_carlo_falls_back(self, reference_table, reference_model, reference_channel):
        """蒙特卡罗配置按同阶确定性规则松弛"""
        params = MaxwellianParams((1.0, 1.0, 1.0))
        det = self._relax(params, reference_table, reference_model, reference_channel, 0.05, 2)
        mc = self._relax(params, reference_table, reference_model, reference_channel, 0.05, 2,
                         quad=RELAX_QUAD.with_mode("monte_carlo"))
        np.testing.assert_array_equal(mc.densities(), det.densities())

    def test_invalid_arguments(self, reference_table, reference_model, reference_channel):
        params = MaxwellianParams((1.0, 1.0, 1.0))
        with pytest.raises(UsageError):
            self._relax(params, reference_table, reference_model, reference_channel, -1.0, 3)
        with pytest.raises(UsageError):
            self._relax(params, reference_table, reference_model, reference_channel, 0.1, 0)

    def test_step_too_large(self, reference_table, reference_model, reference_channel):
        """步长过大使某个网格节点上的分布变负"""
        with pytest.raises(StepSizeError) as exc_info:
            self._relax(MaxwellianParams((1.0, 1.0, 1.0)), reference_table, reference_model, reference_channel,
                        1e4, 2)
        node = exc_info.value.node
        assert node["step"] == 0
        assert node["f"] <= 0
        assert len(node["xi"]) == 3

    def test_write_csv(self, reference_table, reference_model, reference_channel, temp_output_dir):
        trajectory = self._relax(MaxwellianParams((1.0, 1.0, 1.0)), reference_table, reference_model,
                                 reference_channel, 0.01, 4)
        path = trajectory.write_csv(temp_output_dir / "sub" / "trajectory.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0].split(",") == trajectory.header()
        assert trajectory.header()[:5] == ["step", "t", "n_1", "n_2", "n_3"]
        assert len(lines) == 5
        assert math.isclose(float(lines[2].split(",")[1]), 0.01)
