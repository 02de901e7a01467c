#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
equilibrium 模块测试：麦克斯韦分布、质量作用律、宏观量与熵
"""

import math

import numpy as np
import pytest

from reactkin.equilibrium import (ConservedQuantities, MaxwellianParams, TabulatedField, detailed_balance_defect,
                                  dissociation_rate_coefficient, entropy_H, entropy_production_chem,
                                  entropy_production_mech, equilibrate, mass_action_residual, mass_action_rhs,
                                  maxwellian, maxwellian_entropy, maxwellian_field, moments, normalization_q,
                                  phase_grid, random_positive_field, total_energy, zero_field)
from reactkin.exceptions import ModelDomainError, UsageError
from reactkin.invariants import chemical_invariant_space
from reactkin.kinematics import Zstate
from reactkin.model import ReactionChannel, Species, SpeciesKind, SpeciesTable
from reactkin.quadrature import QuadratureSpec

TINY_QUAD = QuadratureSpec(orders={"unit": 2, "sphere": 2, "halfline": 6, "velocity": 3, "internal": 3})


class TestMaxwellian:
    """测试麦克斯韦分布与归一化常数"""

    def test_mono_at_origin(self, reference_table):
        """n = m = T = 1 时 M(0) = (2π)^{−3/2}"""
        params = MaxwellianParams((1.0, 1.0, 1.0))
        value = maxwellian(params, reference_table, 1, Zstate(1, np.zeros(3)))
        assert value == pytest.approx((2.0 * math.pi) ** -1.5)

    def test_species_mismatch(self, reference_table):
        with pytest.raises(UsageError):
            maxwellian(MaxwellianParams((1.0, 1.0, 1.0)), reference_table, 2, Zstate(1, np.zeros(3)))

    def test_normalization(self, reference_table, poly_table):
        """q(δ=3, T=1) = √π/2，q(δ=4, T=2) = 4"""
        assert normalization_q(reference_table, 3, 1.0) == pytest.approx(math.sqrt(math.pi) / 2.0)
        assert normalization_q(poly_table, 3, 2.0) == pytest.approx(4.0)

    def test_normalization_mono(self, reference_table):
        with pytest.raises(UsageError):
            normalization_q(reference_table, 1, 1.0)

    def test_nonpositive_params(self):
        with pytest.raises(ModelDomainError):
            MaxwellianParams((1.0, 0.0))
        with pytest.raises(ModelDomainError):
            MaxwellianParams((1.0,), T=0.0)

    def test_integrates_to_density(self, reference_table, det_quad):
        """网格上积分得到各组分密度"""
        params = MaxwellianParams((0.5, 1.5, 2.0), T=1.3)
        quad = det_quad.with_scale(1.3)
        grid = phase_grid(reference_table, quad)
        totals = grid.integrate(maxwellian_field(params, reference_table).tabulate(grid))
        assert [totals[a] for a in (1, 2, 3)] == pytest.approx([0.5, 1.5, 2.0], rel=1e-10)


class TestMassAction:
    """测试质量作用律与化学平衡求解"""

    def test_reference_rhs(self, reference_table, reference_channel):
        """参考混合物右端为 16π e^{−1/2}"""
        rhs = mass_action_rhs(reference_table, reference_channel, 1.0)
        assert rhs == pytest.approx(16.0 * math.pi * math.exp(-0.5))

    def test_background_satisfies(self, background, reference_table, reference_channel):
        ratio = background.n[0] * background.n[1] / background.n[2]
        assert ratio == pytest.approx(16.0 * math.pi * math.exp(-0.5), rel=1e-10)
        assert abs(mass_action_residual(background, reference_table, reference_channel)) < 1e-9

    def test_conserved_combinations(self, background, reference_channel):
        """Uᵀn 保持初值"""
        U = chemical_invariant_space(3, (reference_channel,))
        np.testing.assert_allclose(U.T @ background.densities, U.T @ np.ones(3), rtol=1e-12)

    def test_symmetric_channel_closed_form(self):
        """P ⇌ 2A：n_A + 2n_P = 3 与 n_A²/n_P = K 的闭式解"""
        table = SpeciesTable((
            Species(1, 1, 2, 0.3, SpeciesKind.MONO, "A"),
            Species(2, 2, 3, 0.1, SpeciesKind.POLY, "P"),
        ))
        channel = ReactionChannel(2, 1, 1, 0.6)
        U = chemical_invariant_space(2, (channel,))
        params = equilibrate(table, (channel,), ConservedQuantities.from_densities(U, (1.0, 1.0)), 1.0,
                             n0=(1.0, 1.0))
        K = mass_action_rhs(table, channel, 1.0)
        n_A = K * (math.sqrt(1.0 + 24.0 / K) - 1.0) / 4.0
        assert params.n[0] == pytest.approx(n_A, rel=1e-10)
        assert params.n[0] + 2.0 * params.n[1] == pytest.approx(3.0, rel=1e-12)

    def test_no_channels(self, reference_table):
        """无通道时原样返回初值"""
        conserved = ConservedQuantities(np.eye(3), np.array([1.0, 2.0, 3.0]))
        params = equilibrate(reference_table, (), conserved, 1.0, n0=(1.0, 2.0, 3.0))
        assert params.n == (1.0, 2.0, 3.0)
        with pytest.raises(UsageError):
            equilibrate(reference_table, (), conserved, 1.0)

    def test_nonfinite_target(self):
        with pytest.raises(UsageError):
            ConservedQuantities(np.eye(2), np.array([1.0, math.inf]))

    def test_detailed_balance(self, background, reference_table, reference_channel):
        """平衡背景的细致平衡残差为 0，偏离时不为 0"""
        assert detailed_balance_defect(background, reference_table, reference_channel, 2000, seed=1) < 1e-10
        off = MaxwellianParams((1.0, 1.0, 1.0))
        assert detailed_balance_defect(off, reference_table, reference_channel, 2000, seed=1) > 1e-3

    def test_rate_coefficient(self, reference_table, reference_model, reference_channel):
        k_d = dissociation_rate_coefficient(reference_table, reference_model, reference_channel, 1.0)
        assert math.isfinite(k_d) and k_d > 0


class TestEnergy:
    """测试能量记账"""

    def test_closed_form(self, reference_table):
        """平动、内能、生成能与宏观动能之和"""
        params = MaxwellianParams((0.7, 1.1, 0.4), u=(0.1, -0.2, 0.3), T=1.7)
        rho = 0.7 + 1.1 + 2.0 * 0.4
        expected = (1.5 * (0.7 + 1.1) + 3.0 * 0.4) * 1.7 + (0.3 * 0.7 + 0.3 * 1.1 + 0.1 * 0.4) + 0.5 * rho * 0.14
        assert total_energy(params, reference_table) == pytest.approx(expected, rel=1e-12)

    def test_moments_energy_matches_closed_form(self, reference_table, det_quad):
        """由求积矩得到的能量与动量与闭式一致"""
        u = np.array([0.1, -0.2, 0.3])
        params = MaxwellianParams((0.7, 1.1, 0.4), u=u, T=1.7)
        result = moments(maxwellian_field(params, reference_table), reference_table, det_quad.with_scale(1.7),
                         center=u)
        assert result.energy(reference_table) == pytest.approx(total_energy(params, reference_table), rel=1e-10)
        np.testing.assert_allclose(result.momentum(reference_table), (0.7 + 1.1 + 0.8) * u, rtol=1e-10)
        assert moments(zero_field(reference_table), reference_table, det_quad).energy(reference_table) == 0.0


class TestTabulatedField:
    """测试网格制表的分布场"""

    REFERENCE = MaxwellianParams((1.0, 1.0, 1.0), T=1.0)

    def _grid(self, reference_table):
        return phase_grid(reference_table, TINY_QUAD)

    def test_reproduces_maxwellian_between_nodes(self, reference_table):
        """网格内任意点上精确再现另一个麦克斯韦分布"""
        grid = self._grid(reference_table)
        target = maxwellian_field(MaxwellianParams((0.5, 1.5, 2.0), u=(0.1, 0.0, -0.1), T=1.2), reference_table)
        tabulated = TabulatedField.from_field(target, reference_table, grid, self.REFERENCE)
        rng = np.random.default_rng(9)
        for sp in reference_table:
            axes = grid.axes[sp.index]
            xi = np.column_stack([rng.uniform(0.8 * axis.min(), 0.8 * axis.max(), 20) for axis in axes[:3]])
            I = rng.uniform(axes[3].min(), axes[3].max(), 20) if sp.is_poly else np.zeros(20)
            np.testing.assert_allclose(tabulated(sp.index, xi, I), target(sp.index, xi, I), rtol=1e-9)

    def test_grid_moments_and_entropy(self, reference_table):
        """参考分布自身制表后，网格上的宏观量、能量与 H 取闭式值"""
        field = maxwellian_field(self.REFERENCE, reference_table)
        tabulated = TabulatedField.from_field(field, reference_table, self._grid(reference_table), self.REFERENCE)
        np.testing.assert_allclose(tabulated.log_ratio[3], 0.0, atol=1e-12)
        result = tabulated.moments()
        np.testing.assert_allclose(result.n, 1.0, rtol=1e-10)
        assert result.T == pytest.approx(1.0, rel=1e-10)
        assert result.energy(reference_table) == pytest.approx(total_energy(self.REFERENCE, reference_table),
                                                               rel=1e-10)
        assert tabulated.entropy() == pytest.approx(maxwellian_entropy(self.REFERENCE, reference_table), rel=1e-10)
        assert tabulated.entropy() - tabulated.entropy(free=True) == pytest.approx(3.0, rel=1e-10)

    def test_node_values_round_trip(self, reference_table):
        field = random_positive_field(reference_table, np.random.default_rng(1))
        grid = self._grid(reference_table)
        tabulated = TabulatedField.from_field(field, reference_table, grid, self.REFERENCE)
        values = tabulated.node_values()
        np.testing.assert_allclose(values[2], field(2, grid.xi[2], grid.I[2]), rtol=1e-12)
        rebuilt = tabulated.with_node_values(values)
        np.testing.assert_allclose(rebuilt.log_ratio[3], tabulated.log_ratio[3], atol=1e-12)

    def test_rejects_nonpositive_values(self, reference_table):
        field = maxwellian_field(self.REFERENCE, reference_table)
        tabulated = TabulatedField.from_field(field, reference_table, self._grid(reference_table), self.REFERENCE)
        values = tabulated.node_values()
        values[1][0] = -1e-3
        with pytest.raises(ModelDomainError):
            tabulated.with_node_values(values)

    def test_nonpositive_internal_energy(self, reference_table):
        """多原子组分在 I ≤ 0 处 log f = −∞"""
        field = maxwellian_field(self.REFERENCE, reference_table)
        tabulated = TabulatedField.from_field(field, reference_table, self._grid(reference_table), self.REFERENCE)
        assert np.isneginf(tabulated.log(3, np.zeros((1, 3)), np.zeros(1))[0])


class TestMoments:
    """测试宏观量"""

    def test_recovers_parameters(self, reference_table, det_quad):
        """麦克斯韦分布的矩恢复 (n, u, T)"""
        u = np.array([0.2, 0.0, -0.1])
        params = MaxwellianParams((0.5, 1.5, 2.0), u=u, T=1.0)
        result = moments(maxwellian_field(params, reference_table), reference_table, det_quad, center=u)
        np.testing.assert_allclose(result.n, [0.5, 1.5, 2.0], rtol=1e-10)
        np.testing.assert_allclose(result.u, u, atol=1e-10)
        assert result.T == pytest.approx(1.0, rel=1e-10)
        assert result.internal[2] == pytest.approx(2.0 * 1.5, rel=1e-10)
        assert result.flags == ()

    def test_zero_field(self, reference_table, det_quad):
        """总密度为零时 u、T 未定义"""
        result = moments(zero_field(reference_table), reference_table, det_quad)
        assert result.u is None and result.T is None
        assert set(result.flags) == {"u_undefined", "T_undefined"}
        assert result.to_dict()["T"] is None


class TestEntropy:
    """测试 H 泛函与耗散"""

    def test_maxwellian_closed_form(self, reference_table, det_quad):
        params = MaxwellianParams((0.5, 1.5, 2.0), T=1.0)
        value = entropy_H(maxwellian_field(params, reference_table), reference_table, det_quad).value
        assert value == pytest.approx(maxwellian_entropy(params, reference_table), rel=1e-10)

    def test_free_variant(self, reference_table, det_quad):
        """H_free = H − Σn"""
        params = MaxwellianParams((0.5, 1.5, 2.0), T=1.0)
        field = maxwellian_field(params, reference_table)
        H = entropy_H(field, reference_table, det_quad).value
        H_free = entropy_H(field, reference_table, det_quad, free=True).value
        assert H - H_free == pytest.approx(4.0, rel=1e-10)

    def test_nonpositive_field(self, reference_table, det_quad):
        with pytest.raises(ModelDomainError):
            entropy_H(zero_field(reference_table), reference_table, det_quad)

    def test_chem_production_at_equilibrium(self, background, reference_table, reference_channel,
                                            reference_model, det_quad):
        value = entropy_production_chem(maxwellian_field(background, reference_table), reference_table,
                                        (reference_channel,), reference_model, det_quad).value
        assert abs(value) < 1e-10

    def test_chem_production_off_equilibrium(self, reference_table, reference_channel, reference_model,
                                             det_quad):
        """偏离质量作用律时化学耗散严格为负"""
        field = maxwellian_field(MaxwellianParams((1.0, 1.0, 1.0)), reference_table)
        value = entropy_production_chem(field, reference_table, (reference_channel,), reference_model,
                                        det_quad).value
        assert value < -1e-6

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_dissipation_sign_on_random_fields(self, reference_table, reference_channel, reference_model,
                                               det_quad, seed):
        """随机正分布上两种耗散都不为正"""
        field = random_positive_field(reference_table, np.random.default_rng(seed))
        chem = entropy_production_chem(field, reference_table, (reference_channel,), reference_model, det_quad)
        mech = entropy_production_mech(field, reference_table, reference_model, TINY_QUAD)
        assert chem.value < 0
        assert mech.value < 0

    def test_mech_production(self, reference_table, reference_model):
        """任意麦克斯韦分布的力学耗散为 0，随机正分布的为负"""
        field = maxwellian_field(MaxwellianParams((1.0, 2.0, 0.5), T=1.2), reference_table)
        assert abs(entropy_production_mech(field, reference_table, reference_model, TINY_QUAD).value) < 1e-10
        rough = random_positive_field(reference_table, np.random.default_rng(4))
        assert entropy_production_mech(rough, reference_table, reference_model, TINY_QUAD).value < 0
