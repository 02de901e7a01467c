#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
kinematics 模块测试：化学事件、力学散射与参数化
"""

import math

import numpy as np
import pytest

from reactkin.exceptions import UsageError
from reactkin.kinematics import (ConstituentCase, EventParams, Rejected, Zstate, chem_ledger, direct_vs_parameterized,
                                 dissociate, dissociate_batch, jacobian_chem, mech_conserved, mech_jacobian,
                                 mech_scatter, recombine, recover_params, sample_chem_events, sample_mech_events)
from reactkin.model import ReactionChannel, Species, SpeciesKind, SpeciesTable, delta_eps0

Z_AXIS = np.array([0.0, 0.0, 1.0])


class TestZstate:
    """测试相空间点"""

    def test_poly_requires_energy(self, reference_table):
        with pytest.raises(UsageError):
            Zstate.make(reference_table, 3, np.zeros(3))

    def test_mono_rejects_energy(self, reference_table):
        with pytest.raises(UsageError):
            Zstate.make(reference_table, 1, np.zeros(3), 1.0)

    def test_internal_default(self, reference_table):
        assert Zstate.make(reference_table, 1, [1.0, 2.0, 3.0]).internal == 0.0

    def test_event_params_unit_sigma(self):
        """σ 必须是单位向量"""
        with pytest.raises(UsageError):
            EventParams(0.5, 0.5, [1.0, 1.0, 0.0])


class TestConstituentCase:
    """测试成分情形的判定"""

    def test_reference_case(self, reference_table, reference_channel):
        assert ConstituentCase.of_channel(reference_table, reference_channel) is ConstituentCase.MONO_MONO

    def test_poly_case(self, poly_table, poly_channel):
        assert ConstituentCase.of_channel(poly_table, poly_channel) is ConstituentCase.POLY_POLY


class TestChemLedger:
    """测试化学事件能量账本"""

    def test_open_gate(self, reference_table, reference_channel):
        """I_* = 2.6：E_β = 2.7，Ẽ = 2.1"""
        ledger = chem_ledger(reference_table, reference_channel, Zstate(3, np.zeros(3), 2.6))
        assert ledger.E_beta == pytest.approx(2.7)
        assert ledger.E_tilde == pytest.approx(2.1)
        assert ledger.delta_eps0 == pytest.approx(0.5)
        assert ledger.gate

    def test_closed_gate(self, reference_table, reference_channel):
        ledger = chem_ledger(reference_table, reference_channel, Zstate(3, np.zeros(3), 0.4))
        assert not ledger.gate

    def test_gate_boundary(self, reference_table, reference_channel):
        """E_β = K 时门限打开，Ẽ = 0"""
        ledger = chem_ledger(reference_table, reference_channel, Zstate(3, np.zeros(3), 0.5))
        assert ledger.gate
        assert ledger.E_tilde == pytest.approx(0.0)

    def test_species_mismatch(self, reference_table, reference_channel):
        with pytest.raises(UsageError):
            chem_ledger(reference_table, reference_channel, Zstate(1, np.zeros(3)))


class TestDissociateRecombine:
    """测试解离与复合"""

    def test_dissociate_velocity(self, reference_table, reference_channel):
        """ξ_* = 0，I_* = 2.6，σ = ẑ 时 ξ′ = (0,0,√8.4/2)"""
        result = dissociate(reference_table, reference_channel, Zstate(3, np.zeros(3), 2.6),
                            EventParams(0.0, 1.0, Z_AXIS))
        Z_a, Z_b = result
        np.testing.assert_allclose(Z_a.xi, [0.0, 0.0, math.sqrt(8.4) / 2.0])
        np.testing.assert_allclose(Z_b.xi, [0.0, 0.0, -math.sqrt(8.4) / 2.0])
        assert Z_a.I is None and Z_b.I is None

    def test_dissociate_gate_rejected(self, reference_table, reference_channel):
        result = dissociate(reference_table, reference_channel, Zstate(3, np.zeros(3), 0.4),
                            EventParams(0.0, 1.0, Z_AXIS))
        assert isinstance(result, Rejected)
        assert result.reason == "gate"

    def test_recombine_inverts(self, reference_table, reference_channel):
        """复合恢复 I_* = 2.6"""
        Z_star = Zstate(3, [0.2, -0.1, 0.4], 2.6)
        Z_a, Z_b = dissociate(reference_table, reference_channel, Z_star,
                              EventParams(0.0, 1.0, [0.6, 0.0, 0.8]))
        back = recombine(reference_table, reference_channel, Z_a, Z_b)
        assert back.I == pytest.approx(2.6)
        np.testing.assert_allclose(back.xi, Z_star.xi, atol=1e-14)

    def test_recombine_below_gate(self, reference_table):
        """相对动能不足时复合被拒绝"""
        channel = ReactionChannel(3, 1, 2, 1.0)
        result = recombine(reference_table, channel, Zstate(1, np.zeros(3)), Zstate(2, np.zeros(3)))
        assert isinstance(result, Rejected)

    def test_recombine_species_mismatch(self, reference_table, reference_channel):
        with pytest.raises(UsageError):
            recombine(reference_table, reference_channel, Zstate(2, np.zeros(3)), Zstate(1, np.zeros(3)))

    def test_poly_round_trip(self, poly_table, poly_channel):
        """poly/poly 解离后复合回到原态，参数可反求"""
        Z_star = Zstate(3, [0.3, 0.1, -0.2], 3.0)
        p = EventParams(0.3, 0.6, [0.0, 0.6, 0.8])
        Z_a, Z_b = dissociate(poly_table, poly_channel, Z_star, p)
        ledger = chem_ledger(poly_table, poly_channel, Z_star, Z_a, Z_b)
        E_tilde = 3.0 - delta_eps0(poly_table, poly_channel)
        assert Z_a.I == pytest.approx(0.3 * 0.4 * E_tilde)
        assert Z_b.I == pytest.approx(0.7 * 0.4 * E_tilde)
        assert ledger.delta_I == pytest.approx(3.0 - 0.4 * E_tilde)
        back = recombine(poly_table, poly_channel, Z_a, Z_b)
        assert back.I == pytest.approx(3.0, abs=1e-12)
        np.testing.assert_allclose(back.xi, Z_star.xi, atol=1e-12)
        recovered = recover_params(poly_table, poly_channel, Z_star, Z_a, Z_b)
        assert recovered.r == pytest.approx(0.3)
        assert recovered.R == pytest.approx(0.6)
        np.testing.assert_allclose(recovered.sigma, p.sigma, atol=1e-12)

    def test_batch_conserves(self, reference_table, reference_channel):
        """随机事件守恒质量加权速度与总能量"""
        rng = np.random.default_rng(11)
        batch = sample_chem_events(reference_table, reference_channel, rng, 500)
        assert np.all(batch.gate)
        momentum = 1.0 * batch.xi_a + 1.0 * batch.xi_b - 2.0 * batch.xi_p
        np.testing.assert_allclose(momentum, 0.0, atol=1e-12)
        energy_before = np.sum(batch.xi_p ** 2, axis=1) + batch.I_p + 0.1
        energy_after = 0.5 * np.sum(batch.xi_a ** 2 + batch.xi_b ** 2, axis=1) + 0.6
        np.testing.assert_allclose(energy_before, energy_after, rtol=1e-12)

    def test_batch_marks_closed_gate(self, reference_table, reference_channel):
        batch = dissociate_batch(reference_table, reference_channel, np.zeros((2, 3)), [0.4, 2.0],
                                 0.0, 1.0, np.tile(Z_AXIS, (2, 1)))
        np.testing.assert_array_equal(batch.gate, [False, True])


class TestMechScatter:
    """测试力学散射"""

    def test_conserved_quantities(self):
        """m = (1,2)，ξ = (3,0,0)，ξ_* = 0：G = (1,0,0)，E = 3"""
        table = SpeciesTable((
            Species(1, 1, 2, 0.3, SpeciesKind.MONO, "A"),
            Species(2, 2, 2, 0.3, SpeciesKind.MONO, "B"),
        ))
        G, g, E = mech_conserved(table, Zstate(1, [3.0, 0.0, 0.0]), Zstate(2, np.zeros(3)))
        np.testing.assert_allclose(G, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(g, [3.0, 0.0, 0.0])
        assert E == pytest.approx(3.0)

    def test_mono_elastic(self, reference_table):
        """单原子碰撞 |g′| = |g|"""
        Z, Zs = Zstate(1, [1.0, 2.0, 0.0]), Zstate(2, [-1.0, 0.0, 0.5])
        Zq, Zsq = mech_scatter(reference_table, Z, Zs, EventParams(0.2, 0.3, Z_AXIS))
        assert np.linalg.norm(Zq.xi - Zsq.xi) == pytest.approx(np.linalg.norm(Z.xi - Zs.xi))

    def test_all_kinetic(self, poly_table):
        """R = 1 时碰后内能为 0"""
        Z, Zs = Zstate(1, [1.0, 0.0, 0.0], 0.7), Zstate(2, [0.0, 1.0, 0.0], 0.2)
        Zq, Zsq = mech_scatter(poly_table, Z, Zs, EventParams(0.4, 1.0, Z_AXIS))
        assert Zq.I == 0.0 and Zsq.I == 0.0

    def test_random_conservation(self, reference_table):
        """随机事件守恒 G 与 E"""
        rng = np.random.default_rng(5)
        batch = sample_mech_events(reference_table, 1, 3, rng, 400)
        G_before = (1.0 * batch.xi + 2.0 * batch.xi_s) / 3.0
        G_after = (1.0 * batch.xi_q + 2.0 * batch.xi_sq) / 3.0
        np.testing.assert_allclose(G_before, G_after, atol=1e-12)
        mu = 2.0 / 3.0
        E_after = 0.5 * mu * batch.g_post ** 2 + batch.I_sq
        np.testing.assert_allclose(batch.E, E_after, rtol=1e-12)
        np.testing.assert_array_equal(batch.I_q, 0.0)

    def test_mech_jacobian(self, poly_table, reference_table):
        assert mech_jacobian(reference_table, 1, 2, 2.0, 0.5) == 1.0
        assert mech_jacobian(poly_table, 1, 2, 2.0, 0.25) == pytest.approx(3.0)
        assert mech_jacobian(reference_table, 1, 3, 2.0, 0.25) == pytest.approx(2.0)


class TestJacobianChem:
    """测试换元测度因子"""

    def test_vanishes_at_endpoints(self, poly_table, poly_channel):
        """R = 0 或 R = 1 时为 0"""
        assert jacobian_chem(poly_table, poly_channel, 1.0, 0.0) == 0.0
        assert jacobian_chem(poly_table, poly_channel, 1.0, 1.0) == 0.0

    def test_poly_poly_value(self, poly_table, poly_channel):
        """Ẽ = 1，R = 1/2：√2·2^{3/2}·(1/2)·(1/√2) = √2"""
        assert jacobian_chem(poly_table, poly_channel, 1.0, 0.5) == pytest.approx(math.sqrt(2.0))

    def test_mono_mono_value(self, reference_table, reference_channel):
        """mono/mono：(m_β/(m_γm_ζ))|g′|，|g′| = √(2·2·Ẽ)"""
        assert jacobian_chem(reference_table, reference_channel, 1.0) == pytest.approx(4.0)

    def test_direct_vs_parameterized(self, reference_table, reference_channel):
        """两种坐标下的积分一致，且接近解析值 (2π)^3"""
        def F(xi_a, I_a, xi_b, I_b):
            return np.exp(-0.5 * np.sum(xi_a ** 2, axis=1) - 0.5 * np.sum(xi_b ** 2, axis=1))

        direct, param = direct_vs_parameterized(reference_table, reference_channel, F, 20000, seed=13)
        exact = (2.0 * math.pi) ** 3
        assert direct.value == pytest.approx(exact, rel=1e-10)
        sigma = math.hypot(direct.std_error, param.std_error)
        assert abs(direct.value - param.value) <= 5.0 * sigma + 1e-9 * exact

    def test_worker_count_irrelevant(self, reference_table, reference_channel):
        """并行块数不影响结果"""
        def F(xi_a, I_a, xi_b, I_b):
            return np.exp(-np.sum(xi_a ** 2 + xi_b ** 2, axis=1))

        one = direct_vs_parameterized(reference_table, reference_channel, F, 9000, seed=2, workers=1)
        many = direct_vs_parameterized(reference_table, reference_channel, F, 9000, seed=2, workers=3)
        assert one[0].value == many[0].value
        assert one[1].value == many[1].value
