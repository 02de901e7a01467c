#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
model 模块测试：组分、通道、截面与结构校验
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from reactkin.exceptions import ModelDomainError, UsageError
from reactkin.model import (CrossSectionModel, ReactionChannel, Species, SpeciesKind, SpeciesTable,
                            chem_bound_ratio, chem_compact_bound, delta_eps0, mech_bound_ratio,
                            mech_compact_bound, phi, sigma_chem, sigma_dissociation, sigma_mech,
                            sigma_mech_reverse_defect, validate)


class TestSpecies:
    """测试组分定义的域检查"""

    def test_nonpositive_mass(self):
        """质量必须为正"""
        with pytest.raises(ModelDomainError):
            Species(1, 0, 2, 0.3, SpeciesKind.MONO, "A")

    def test_nonpositive_eps0(self):
        """生成能必须为正"""
        with pytest.raises(ModelDomainError):
            Species(1, 1, 2, 0.0, SpeciesKind.MONO, "A")

    def test_mono_dof_must_be_two(self):
        """单原子自由度恰为 2"""
        with pytest.raises(ModelDomainError):
            Species(1, 1, 3, 0.3, SpeciesKind.MONO, "A")

    def test_poly_dof_lower_bound(self):
        """多原子自由度不小于 2"""
        with pytest.raises(ModelDomainError):
            Species(1, 1, 1.5, 0.3, SpeciesKind.POLY, "P")

    def test_kind_from_string(self):
        """kind 可用字符串给出"""
        sp = Species(1, Fraction(1, 3), 3, 0.2, "poly", "P")
        assert sp.kind is SpeciesKind.POLY
        assert sp.m == pytest.approx(1.0 / 3.0)
        assert sp.phi_exponent == 0.5


class TestSpeciesTable:
    """测试组分表"""

    def test_lookup(self, reference_table):
        """按名称和编号查找"""
        assert len(reference_table) == 3
        assert reference_table.index_of("P") == 3
        assert reference_table.index_of(2) == 2
        assert reference_table[1].name == "A"

    def test_out_of_range(self, reference_table):
        """越界编号"""
        with pytest.raises(UsageError):
            reference_table[4]
        with pytest.raises(UsageError):
            reference_table.index_of("Z")

    def test_mono_before_poly(self):
        """单原子必须排在多原子之前"""
        with pytest.raises(ModelDomainError):
            SpeciesTable((
                Species(1, 2, 3, 0.1, SpeciesKind.POLY, "P"),
                Species(2, 1, 2, 0.3, SpeciesKind.MONO, "A"),
            ))

    def test_indices_contiguous(self):
        """编号必须依次为 1..s"""
        with pytest.raises(ModelDomainError):
            SpeciesTable((Species(2, 1, 2, 0.3, SpeciesKind.MONO, "A"),))


class TestReactionChannel:
    """测试反应通道及其有序形式"""

    def test_orderings_asymmetric(self, reference_channel):
        """γ ≠ ζ 时有两种有序形式"""
        orderings = reference_channel.orderings()
        assert [ch.key for ch in orderings] == [(3, 1, 2), (3, 2, 1)]
        assert not reference_channel.symmetric

    def test_orderings_symmetric(self):
        """γ = ζ 时只有一种"""
        channel = ReactionChannel(2, 1, 1, 0.6)
        assert channel.symmetric
        assert len(channel.orderings()) == 1

    def test_stoichiometry(self, reference_channel):
        """化学计量向量 e_β − e_γ − e_ζ"""
        np.testing.assert_array_equal(reference_channel.stoichiometry(3), [-1.0, -1.0, 1.0])
        np.testing.assert_array_equal(ReactionChannel(2, 1, 1, 0.6).stoichiometry(2), [-2.0, 1.0])

    def test_delta_eps0(self, reference_table, reference_channel):
        """反应热 Δε₀ = 0.3 + 0.3 − 0.1"""
        assert delta_eps0(reference_table, reference_channel) == pytest.approx(0.5)


class TestCrossSectionModel:
    """测试截面模型参数的检查"""

    def test_uniform(self):
        model = CrossSectionModel.uniform(3, 2.0, eta=0.5)
        assert model.c(1, 3) == 2.0
        assert model.eta == 0.5

    def test_asymmetric_matrix(self):
        """C_αβ 必须对称"""
        with pytest.raises(ModelDomainError):
            CrossSectionModel(0.0, np.array([[1.0, 2.0], [1.0, 1.0]]))

    def test_eta_range(self):
        """η ∈ [0,1)"""
        with pytest.raises(ModelDomainError):
            CrossSectionModel.uniform(2, 1.0, eta=1.0)

    def test_negative_entry(self):
        with pytest.raises(ModelDomainError):
            CrossSectionModel(0.0, -np.ones((2, 2)))


class TestValidate:
    """测试通道结构约束"""

    def test_reference_ok(self, reference_table, reference_channel):
        """参考混合物满足全部约束"""
        report = validate(reference_table, [reference_channel])
        assert report.ok
        assert report.codes() == []

    def test_mass_mismatch(self, reference_channel):
        """m_P = 3 时质量不守恒"""
        table = SpeciesTable((
            Species(1, 1, 2, 0.3, SpeciesKind.MONO, "A"),
            Species(2, 1, 2, 0.3, SpeciesKind.MONO, "B"),
            Species(3, 3, 3, 0.1, SpeciesKind.POLY, "P"),
        ))
        report = validate(table, [reference_channel])
        assert not report.ok
        assert "mass_mismatch" in report.codes()
        assert "mass mismatch" in report.to_dict()["issues"][0]["message"]

    def test_transition_energy_low(self, reference_table):
        """K < ε_γ0 + ε_ζ0"""
        report = validate(reference_table, [ReactionChannel(3, 1, 2, 0.5)])
        assert report.codes() == ["transition_energy_low"]

    def test_product_not_poly(self, reference_table):
        report = validate(reference_table, [ReactionChannel(1, 2, 3, 0.6)])
        assert "product_not_poly" in report.codes()

    def test_unknown_species(self, reference_table):
        report = validate(reference_table, [ReactionChannel(3, 1, 7, 0.6)])
        assert report.codes() == ["unknown_species"]

    def test_nonpositive_rate(self, reference_table):
        report = validate(reference_table, [ReactionChannel(3, 1, 2, 0.6, c_chem=0.0)])
        assert "nonpositive_rate" in report.codes()


class TestPhi:
    """测试简并权重 φ"""

    def test_mono(self, reference_table):
        assert phi(reference_table, 1, 5.0) == 1.0

    def test_dof_two(self):
        """δ = 2 的多原子组分 φ ≡ 1"""
        table = SpeciesTable((Species(1, 1, 2, 0.1, SpeciesKind.POLY, "P"),))
        assert phi(table, 1, 7.3) == 1.0

    def test_dof_three(self, reference_table):
        """δ = 3 时 φ(4) = 2"""
        assert phi(reference_table, 3, 4.0) == pytest.approx(2.0)

    def test_poly_requires_positive_energy(self, reference_table):
        with pytest.raises(ModelDomainError):
            phi(reference_table, 3, 0.0)


class TestSigmaChem:
    """测试复合/解离截面"""

    def test_above_threshold(self, reference_model, reference_table, reference_channel):
        """I_* = 2.6 时 σ = √2.6"""
        value = sigma_chem(reference_model, reference_table, reference_channel, 1.0, 0.0, 2.6)
        assert value == pytest.approx(math.sqrt(2.6))

    def test_below_threshold(self, reference_model, reference_table, reference_channel):
        """E_β < K 时为 0"""
        assert sigma_chem(reference_model, reference_table, reference_channel, 1.0, 0.0, 0.4) == 0.0

    def test_poly_poly_dof_two_product(self):
        """δ_β = 2、反应物 δ = 2 时 σ = C"""
        table = SpeciesTable((
            Species(1, 1, 2, 0.3, SpeciesKind.POLY, "C"),
            Species(2, 1, 2, 0.3, SpeciesKind.POLY, "D"),
            Species(3, 2, 2, 0.1, SpeciesKind.POLY, "Q"),
        ))
        channel = ReactionChannel(3, 1, 2, 0.6, 1.7)
        model = CrossSectionModel.uniform(3)
        assert sigma_chem(model, table, channel, 1.0, 0.0, 1.0) == pytest.approx(1.7)

    def test_dissociation_microreversibility(self, reference_model, poly_table, poly_channel):
        """φ_β σ_diss = φ_γ φ_ζ σ_rec"""
        I_s, I_a, I_b = 2.0, 0.4, 0.7
        forward = sigma_chem(reference_model, poly_table, poly_channel, 1.0, 0.0, I_s)
        backward = sigma_dissociation(reference_model, poly_table, poly_channel, 1.0, 0.0, I_a, I_b, I_s)
        assert phi(poly_table, 3, I_s) * backward == pytest.approx(
            phi(poly_table, 1, I_a) * phi(poly_table, 2, I_b) * forward)


class TestSigmaMech:
    """测试力学截面"""

    def test_mono_mono_elastic(self, reference_model, reference_table):
        """单原子弹性碰撞 η = 0 时 σ = C"""
        assert sigma_mech(reference_model, reference_table, 1, 2, 1.3) == pytest.approx(1.0)

    def test_energy_gap_closed(self, reference_model, reference_table):
        """|g|² ≤ 2Δ̃I 时为 0"""
        value = sigma_mech(reference_model, reference_table, 3, 3, 1.0, 0.1, 0.1, 2.0, 2.0)
        assert value == 0.0

    def test_eta_factor(self):
        """m = (1,2)，η = 0.5，g = 2 时 σ = C·(4/3)^{−1/4}"""
        table = SpeciesTable((
            Species(1, 1, 2, 0.3, SpeciesKind.MONO, "A"),
            Species(2, 2, 2, 0.3, SpeciesKind.MONO, "B"),
        ))
        model = CrossSectionModel.uniform(2, 1.5, eta=0.5)
        assert sigma_mech(model, table, 1, 2, 2.0) == pytest.approx(1.5 * (4.0 / 3.0) ** -0.25)

    def test_partner_symmetry(self, reference_model, reference_table):
        """交换碰撞双方时截面不变"""
        g = np.linspace(0.5, 4.0, 9)
        forward = sigma_mech(reference_model, reference_table, 1, 3, g, 0.0, 0.7, 0.0, 0.3)
        backward = sigma_mech(reference_model, reference_table, 3, 1, g, 0.7, 0.0, 0.3, 0.0)
        np.testing.assert_allclose(forward, backward)

    def test_reverse_defect_vanishes(self, reference_model, reference_table):
        """力学微观可逆性残差为 0"""
        rng = np.random.default_rng(3)
        g = rng.uniform(3.0, 5.0, 50)
        I, Is, Ip, Isp = (rng.uniform(0.1, 2.0, 50) for _ in range(4))
        defect = sigma_mech_reverse_defect(reference_model, reference_table, 3, 3, g, I, Is, Ip, Isp)
        np.testing.assert_allclose(defect, 0.0, atol=1e-12)


class TestBounds:
    """测试截面夹逼与紧性谓词"""

    def test_chem_bound_scaled(self, reference_model, reference_table, reference_channel):
        """2 倍参考截面的比值恒为 2"""
        def sigma(g, c, I):
            return 2.0 * sigma_chem(reference_model, reference_table, reference_channel, g, c, I)

        g = np.linspace(0.1, 3.0, 20)
        I = np.linspace(0.1, 4.0, 20)
        check = chem_bound_ratio(sigma, reference_model, reference_table, reference_channel, g, 0.0 * g, I)
        assert check.ok
        assert check.c_minus == pytest.approx(2.0)
        assert check.c_plus == pytest.approx(2.0)

    def test_mech_bound_zero_sigma_fails(self, reference_model, reference_table):
        """截面为 0 时下界不成立"""
        g = np.linspace(0.5, 3.0, 10)
        zeros = np.zeros_like(g)
        check = mech_bound_ratio(lambda *args: 0.0, reference_model, reference_table, 1, 2,
                                 g, zeros, zeros, zeros, zeros)
        assert not check.ok
        assert check.c_minus == 0.0

    def test_compact_bounds(self, reference_model, reference_table, reference_channel):
        g = np.linspace(0.1, 5.0, 30)
        I = np.linspace(0.5, 5.0, 30)
        assert chem_compact_bound(reference_model, reference_table, reference_channel, g, I, 0.5).ok
        zeros = np.zeros_like(g)
        assert mech_compact_bound(reference_model, reference_table, 1, 2, g, zeros, zeros, zeros, zeros, 0.5).ok

    def test_compact_bound_exponent_range(self, reference_model, reference_table, reference_channel):
        with pytest.raises(UsageError):
            chem_compact_bound(reference_model, reference_table, reference_channel, [1.0], [1.0], 1.5)
