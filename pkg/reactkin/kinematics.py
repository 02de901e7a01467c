#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
碰撞事件运动学

守恒量、化学事件能量账本、解离/复合参数化 (r, R, σ)、力学散射，
以及各种测度雅可比。核心实现是对事件数组的向量化函数，
逐事件的标量接口在其上包装。

速度映射采用动量守恒的指标分配：
    ξ′ = ξ_* + σ (m_ζ/m_β)|g′|,  ξ*′ = ξ_* − σ (m_γ/m_β)|g′|
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .exceptions import ModelDomainError, UsageError
from .model import ReactionChannel, Species, SpeciesTable, delta_eps0
from .quadrature import (Estimate, ExponentialSampler, GammaSampler, GaussianSampler,
                         ProductSampler, UniformSphereSampler, UniformUnitSampler, mc_integrate)

UNIT_TOL = 1e-9


class ConstituentCase(str, Enum):
    """两个成分的单/多原子组合"""

    MONO_MONO = "mono/mono"
    MONO_POLY = "mono/poly"
    POLY_MONO = "poly/mono"
    POLY_POLY = "poly/poly"

    @classmethod
    def of(cls, first: Species, second: Species) -> "ConstituentCase":
        return {
            (False, False): cls.MONO_MONO,
            (False, True): cls.MONO_POLY,
            (True, False): cls.POLY_MONO,
            (True, True): cls.POLY_POLY,
        }[(first.is_poly, second.is_poly)]

    @classmethod
    def of_channel(cls, table: SpeciesTable, channel: ReactionChannel) -> "ConstituentCase":
        return cls.of(table[channel.reactant_a], table[channel.reactant_b])

    @property
    def n_poly(self) -> int:
        return {"mono/mono": 0, "mono/poly": 1, "poly/mono": 1, "poly/poly": 2}[self.value]


@dataclass(frozen=True)
class Zstate:
    """
    相空间点 Z = (ξ, I)

    Args:
        species (int): 组分编号
        xi: 三维速度
        I (float, optional): 内能，仅多原子组分给出
    """

    species: int
    xi: np.ndarray
    I: Optional[float] = None

    def __post_init__(self) -> None:
        xi = np.array(self.xi, dtype=float).reshape(3)
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        if self.I is not None:
            if self.I < 0:
                raise ModelDomainError("内能 I 必须非负")
            object.__setattr__(self, "I", float(self.I))

    @classmethod
    def make(cls, table: SpeciesTable, species: int, xi: np.ndarray, I: Optional[float] = None) -> "Zstate":
        """按组分类型检查 I 的有无"""
        sp = table[species]
        if sp.is_poly and I is None:
            raise UsageError(f"多原子组分 {sp.label} 需要内能 I")
        if not sp.is_poly and I is not None:
            raise UsageError(f"单原子组分 {sp.label} 不带内能")
        return cls(species, xi, I)

    @property
    def internal(self) -> float:
        return 0.0 if self.I is None else self.I


@dataclass(frozen=True)
class ChemEventLedger:
    """化学事件能量账本"""

    E_beta: float
    E_tilde: float
    delta_eps0: float
    delta_I: Optional[float]
    gate: bool


@dataclass(frozen=True)
class EventParams:
    """事件参数：动能份额 R、内能分配 r、散射方向 σ"""

    r: float
    R: float
    sigma: np.ndarray

    def __post_init__(self) -> None:
        sigma = np.array(self.sigma, dtype=float).reshape(3)
        if abs(np.linalg.norm(sigma) - 1.0) > UNIT_TOL:
            raise UsageError("σ 必须是单位向量")
        if not (0.0 <= self.r <= 1.0 and 0.0 <= self.R <= 1.0):
            raise UsageError("r, R 必须在 [0,1] 内")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class Rejected:
    """被门限或能量条件拒绝的事件"""

    reason: str
    ledger: Optional[ChemEventLedger] = None


@dataclass(frozen=True)
class ChemBatch:
    """向量化化学事件：产物态 (xi_p, I_p) 与反应物态 (xi_a, I_a)、(xi_b, I_b)"""

    xi_p: np.ndarray
    I_p: np.ndarray
    xi_a: np.ndarray
    I_a: np.ndarray
    xi_b: np.ndarray
    I_b: np.ndarray
    g_norm: np.ndarray
    E_tilde: np.ndarray
    gate: np.ndarray


@dataclass(frozen=True)
class MechBatch:
    """向量化力学事件：碰前 (xi, I, xi_s, I_s)、碰后 (xi_q, I_q, xi_sq, I_sq)"""

    xi: np.ndarray
    I: np.ndarray
    xi_s: np.ndarray
    I_s: np.ndarray
    xi_q: np.ndarray
    I_q: np.ndarray
    xi_sq: np.ndarray
    I_sq: np.ndarray
    g_norm: np.ndarray
    g_post: np.ndarray
    E: np.ndarray


def _as_rows(x: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def split_energy(case: ConstituentCase, E: np.ndarray, r: np.ndarray,
                 R: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    按 Borgnakke–Larsen 约定把可用能量 E 分成（相对动能, 第一成分内能, 第二成分内能）
    """
    E = np.asarray(E, dtype=float)
    r = np.asarray(r, dtype=float) * np.ones_like(E)
    R = np.asarray(R, dtype=float) * np.ones_like(E)
    zero = np.zeros_like(E)
    if case is ConstituentCase.MONO_MONO:
        return E, zero, zero
    if case is ConstituentCase.POLY_MONO:
        return R * E, (1.0 - R) * E, zero
    if case is ConstituentCase.MONO_POLY:
        return R * E, zero, (1.0 - R) * E
    return R * E, r * (1.0 - R) * E, (1.0 - r) * (1.0 - R) * E


def mech_conserved(table: SpeciesTable, Z: Zstate, Z_star: Zstate) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    力学碰撞守恒量

    Returns:
        (G, g, E): 质心速度、相对速度、质心系总能量
    """
    sa, sb = table[Z.species], table[Z_star.species]
    M = sa.m + sb.m
    G = (sa.m * Z.xi + sb.m * Z_star.xi) / M
    g = Z.xi - Z_star.xi
    E = (sa.m * sb.m * float(g @ g) / (2.0 * M)
         + Z.internal * float(sa.is_poly) + Z_star.internal * float(sb.is_poly))
    return G, g, E


def chem_ledger(
    table: SpeciesTable,
    channel: ReactionChannel,
    Z_star: Zstate,
    Z_prime: Optional[Zstate] = None,
    Z_star_prime: Optional[Zstate] = None,
) -> ChemEventLedger:
    """
    化学事件能量账本

    Args:
        Z_star (Zstate): 产物态，组分必须是 β
        Z_prime, Z_star_prime (Zstate, optional): 给出时计算内能差 ΔI = I_* − I′ − I*′

    Raises:
        UsageError: 组分不匹配
    """
    if Z_star.species != channel.product:
        raise UsageError(f"产物态组分 {Z_star.species} 与通道产物 {channel.product} 不符")
    beta, gamma, zeta = channel.species(table)
    d_eps = delta_eps0(table, channel)
    I_star = Z_star.internal
    E_beta = I_star + beta.eps0
    delta_I = None
    if Z_prime is not None and Z_star_prime is not None:
        delta_I = (I_star - Z_prime.internal * float(gamma.is_poly)
                   - Z_star_prime.internal * float(zeta.is_poly))
    return ChemEventLedger(
        E_beta=E_beta,
        E_tilde=I_star - d_eps,
        delta_eps0=d_eps,
        delta_I=delta_I,
        gate=bool(E_beta >= channel.k_transition),
    )


def dissociate_batch(
    table: SpeciesTable,
    channel: ReactionChannel,
    xi_p: np.ndarray,
    I_p: np.ndarray,
    r: np.ndarray,
    R: np.ndarray,
    sigma: np.ndarray,
) -> ChemBatch:
    """
    向量化解离：产物态 + (r, R, σ) → 两个反应物态

    门限不满足或 Ẽ < 0 的事件 gate 为 False，其反应物态按 Ẽ = 0 填充。
    """
    beta, gamma, zeta = channel.species(table)
    case = ConstituentCase.of(gamma, zeta)
    xi_p = _as_rows(xi_p)
    I_p = np.asarray(I_p, dtype=float) * np.ones(len(xi_p))
    sigma = _as_rows(sigma)
    E_tilde = I_p - delta_eps0(table, channel)
    gate = (I_p + beta.eps0 >= channel.k_transition) & (E_tilde >= 0.0)
    E_pos = np.where(gate, E_tilde, 0.0)
    kinetic, I_a, I_b = split_energy(case, E_pos, r, R)
    g_norm = np.sqrt(2.0 * beta.m * kinetic / (gamma.m * zeta.m))
    xi_a = xi_p + sigma * ((zeta.m / beta.m) * g_norm)[:, None]
    xi_b = xi_p - sigma * ((gamma.m / beta.m) * g_norm)[:, None]
    return ChemBatch(xi_p, I_p, xi_a, I_a, xi_b, I_b, g_norm, E_tilde, gate)


def recombine_batch(
    table: SpeciesTable,
    channel: ReactionChannel,
    xi_a: np.ndarray,
    I_a: np.ndarray,
    xi_b: np.ndarray,
    I_b: np.ndarray,
) -> ChemBatch:
    """
    向量化复合：两个反应物态 → 产物态

    ξ_* = (m_γξ′ + m_ζξ*′)/m_β，I_* = E′_{γζ} − ε_β0，E′ < K 时 gate 为 False。
    """
    beta, gamma, zeta = channel.species(table)
    xi_a, xi_b = _as_rows(xi_a), _as_rows(xi_b)
    n = max(len(xi_a), len(xi_b))
    I_a = np.asarray(I_a, dtype=float) * np.ones(n) * float(gamma.is_poly)
    I_b = np.asarray(I_b, dtype=float) * np.ones(n) * float(zeta.is_poly)
    xi_p = (gamma.m * xi_a + zeta.m * xi_b) / beta.m
    g = xi_a - xi_b
    g2 = np.sum(g * g, axis=-1)
    E_prime = gamma.m * zeta.m * g2 / (2.0 * beta.m) + I_a + I_b + gamma.eps0 + zeta.eps0
    I_p = E_prime - beta.eps0
    gate = E_prime >= channel.k_transition
    E_tilde = I_p - delta_eps0(table, channel)
    xi_p = xi_p * np.ones((n, 1))
    return ChemBatch(xi_p, I_p, xi_a * np.ones((n, 1)), I_a, xi_b * np.ones((n, 1)), I_b,
                     np.sqrt(g2) * np.ones(n), E_tilde, gate)


def mech_scatter_batch(
    table: SpeciesTable,
    alpha: int,
    beta: int,
    xi: np.ndarray,
    I: np.ndarray,
    xi_s: np.ndarray,
    I_s: np.ndarray,
    r: np.ndarray,
    R: np.ndarray,
    sigma: np.ndarray,
) -> MechBatch:
    """
    向量化力学散射

    质心速度与质心系总能量 E 守恒；碰后相对动能为 R·E，内能按 r 分配，
    与解离参数化相同。两个单原子成分时为弹性碰撞，|g′| = |g|。
    """
    sa, sb = table[alpha], table[beta]
    M = sa.m + sb.m
    mu = sa.m * sb.m / M
    xi, xi_s, sigma = _as_rows(xi), _as_rows(xi_s), _as_rows(sigma)
    n = max(len(xi), len(xi_s), len(sigma))
    I = np.asarray(I, dtype=float) * np.ones(n) * float(sa.is_poly)
    I_s = np.asarray(I_s, dtype=float) * np.ones(n) * float(sb.is_poly)
    G = (sa.m * xi + sb.m * xi_s) / M
    g = xi - xi_s
    g_norm = np.sqrt(np.sum(g * g, axis=-1)) * np.ones(n)
    E = 0.5 * mu * g_norm**2 + I + I_s
    kinetic, I_q, I_sq = split_energy(ConstituentCase.of(sa, sb), E, r, R)
    g_post = np.sqrt(2.0 * kinetic / mu)
    xi_q = G + sigma * ((sb.m / M) * g_post)[:, None]
    xi_sq = G - sigma * ((sa.m / M) * g_post)[:, None]
    return MechBatch(xi * np.ones((n, 1)), I, xi_s * np.ones((n, 1)), I_s,
                     xi_q, I_q, xi_sq, I_sq, g_norm, g_post, E)


def _state(table: SpeciesTable, species: int, xi: np.ndarray, I: float) -> Zstate:
    return Zstate(species, xi, float(I) if table[species].is_poly else None)


def dissociate(
    table: SpeciesTable,
    channel: ReactionChannel,
    Z_star: Zstate,
    p: EventParams,
) -> Union[Tuple[Zstate, Zstate], Rejected]:
    """
    解离事件 Z_* → (Z′, Z*′)

    Returns:
        两个反应物态；门限不满足或 Ẽ_β < 0 时返回 Rejected

    Raises:
        UsageError: Z_* 的组分不是通道产物
    """
    ledger = chem_ledger(table, channel, Z_star)
    if not ledger.gate:
        return Rejected("gate", ledger)
    if ledger.E_tilde < 0:
        return Rejected("energy", ledger)
    batch = dissociate_batch(table, channel, Z_star.xi, Z_star.internal, p.r, p.R, p.sigma)
    return (
        _state(table, channel.reactant_a, batch.xi_a[0], batch.I_a[0]),
        _state(table, channel.reactant_b, batch.xi_b[0], batch.I_b[0]),
    )


def recombine(
    table: SpeciesTable,
    channel: ReactionChannel,
    Z_prime: Zstate,
    Z_star_prime: Zstate,
) -> Union[Zstate, Rejected]:
    """
    复合事件 (Z′, Z*′) → Z_*

    Raises:
        UsageError: 反应物组分与通道 (γ, ζ) 不符
    """
    if (Z_prime.species, Z_star_prime.species) != (channel.reactant_a, channel.reactant_b):
        raise UsageError("反应物组分与通道不符")
    batch = recombine_batch(table, channel, Z_prime.xi, Z_prime.internal,
                            Z_star_prime.xi, Z_star_prime.internal)
    if not batch.gate[0]:
        return Rejected("gate")
    return Zstate(channel.product, batch.xi_p[0], float(batch.I_p[0]))


def mech_scatter(table: SpeciesTable, Z: Zstate, Z_star: Zstate, p: EventParams) -> Tuple[Zstate, Zstate]:
    """力学散射 (Z, Z_*) → (Z′, Z*′)"""
    batch = mech_scatter_batch(table, Z.species, Z_star.species, Z.xi, Z.internal,
                               Z_star.xi, Z_star.internal, p.r, p.R, p.sigma)
    return (
        _state(table, Z.species, batch.xi_q[0], batch.I_q[0]),
        _state(table, Z_star.species, batch.xi_sq[0], batch.I_sq[0]),
    )


def recover_params(
    table: SpeciesTable,
    channel: ReactionChannel,
    Z_star: Zstate,
    Z_prime: Zstate,
    Z_star_prime: Zstate,
) -> EventParams:
    """
    从解离结果反求 (r, R, σ)

    不参与该情形的参数返回 0（r）或 1（R，单原子/单原子）。
    """
    beta, gamma, zeta = channel.species(table)
    case = ConstituentCase.of(gamma, zeta)
    E_tilde = Z_star.internal - delta_eps0(table, channel)
    g = Z_prime.xi - Z_star_prime.xi
    g_norm = float(np.linalg.norm(g))
    sigma = g / g_norm if g_norm > 0 else np.array([0.0, 0.0, 1.0])
    kinetic = gamma.m * zeta.m * g_norm**2 / (2.0 * beta.m)
    if case is ConstituentCase.MONO_MONO or E_tilde <= 0:
        return EventParams(0.0, 1.0, sigma)
    R = min(max(kinetic / E_tilde, 0.0), 1.0)
    r = 0.0
    internal = (1.0 - R) * E_tilde
    if case is ConstituentCase.POLY_POLY and internal > 0:
        r = min(max(Z_prime.internal / internal, 0.0), 1.0)
    return EventParams(r, R, sigma)


def jacobian_chem(
    table: SpeciesTable,
    channel: ReactionChannel,
    E_tilde: Union[float, np.ndarray],
    R: Union[float, np.ndarray] = 1.0,
    case: Optional[ConstituentCase] = None,
) -> Union[float, np.ndarray]:
    """
    反应物坐标到 (G′, Ẽ′, R, r, σ) 的测度因子

    dξ′dξ*′[dI′][dI*′] = J dG′ dẼ′ [dR][dr] dσ，其中
    poly/poly: J = √2 (m_β/(m_γm_ζ))^{3/2} Ẽ^{5/2}(1−R)R^{1/2}；
    单个多原子成分: J = √2 (m_β/(m_γm_ζ))^{3/2} Ẽ^{3/2} R^{1/2}；
    mono/mono: J = (m_β/(m_γm_ζ))|g′|（dξ′dξ*′ = dG′·(m_β/(m_γm_ζ))|g′| dI_* dσ）。
    """
    beta, gamma, zeta = channel.species(table)
    case = case or ConstituentCase.of(gamma, zeta)
    ratio = beta.m / (gamma.m * zeta.m)
    E = np.maximum(np.asarray(E_tilde, dtype=float), 0.0)
    R = np.asarray(R, dtype=float)
    if case is ConstituentCase.MONO_MONO:
        g_norm = np.sqrt(2.0 * ratio * E)
        value = ratio * g_norm
    elif case is ConstituentCase.POLY_POLY:
        value = math.sqrt(2.0) * ratio**1.5 * E**2.5 * (1.0 - R) * np.sqrt(R)
    else:
        value = math.sqrt(2.0) * ratio**1.5 * E**1.5 * np.sqrt(R)
    return value if np.ndim(value) else float(value)


def mech_jacobian(table: SpeciesTable, alpha: int, beta: int,
                  E: Union[float, np.ndarray], R: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """力学参数化 dI′dI*′ = J dr dR：poly/poly 为 (1−R)E²，单个多原子为 E，mono/mono 为 1"""
    case = ConstituentCase.of(table[alpha], table[beta])
    E = np.asarray(E, dtype=float)
    if case is ConstituentCase.MONO_MONO:
        value = np.ones_like(E)
    elif case is ConstituentCase.POLY_POLY:
        value = (1.0 - np.asarray(R)) * E * E
    else:
        value = E * np.ones_like(np.asarray(R, dtype=float))
    return value if np.ndim(value) else float(value)


def sample_params(rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """随机事件参数：r, R 均匀，σ 在球面上均匀"""
    r = rng.random(n)
    R = rng.random(n)
    (sigma,), _ = UniformSphereSampler().draw(rng, n)
    return r, R, sigma


def sample_chem_events(
    table: SpeciesTable,
    channel: ReactionChannel,
    rng: np.random.Generator,
    n: int,
    scale: float = 1.0,
) -> ChemBatch:
    """在门限之上随机抽取被接受的解离事件，用于守恒与不变量检查"""
    beta = table[channel.product]
    I_lo = max(channel.k_transition - beta.eps0, delta_eps0(table, channel))
    I_p = I_lo + rng.exponential(scale, n)
    xi_p = rng.standard_normal((n, 3)) * math.sqrt(scale / beta.m)
    r, R, sigma = sample_params(rng, n)
    return dissociate_batch(table, channel, xi_p, I_p, r, R, sigma)


def sample_mech_events(
    table: SpeciesTable,
    alpha: int,
    beta: int,
    rng: np.random.Generator,
    n: int,
    scale: float = 1.0,
) -> MechBatch:
    """随机抽取力学碰撞事件"""
    sa, sb = table[alpha], table[beta]
    xi = rng.standard_normal((n, 3)) * math.sqrt(scale / sa.m)
    xi_s = rng.standard_normal((n, 3)) * math.sqrt(scale / sb.m)
    I = rng.gamma(sa.dof / 2.0, scale, n)
    I_s = rng.gamma(sb.dof / 2.0, scale, n)
    r, R, sigma = sample_params(rng, n)
    return mech_scatter_batch(table, alpha, beta, xi, I, xi_s, I_s, r, R, sigma)


ReactantFunction = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def direct_vs_parameterized(
    table: SpeciesTable,
    channel: ReactionChannel,
    F: ReactantFunction,
    n: int,
    seed: int,
    scale: float = 1.0,
    workers: int = 1,
) -> Tuple[Estimate, Estimate]:
    """
    换元测度检查

    分别在反应物坐标 (ξ′, ξ*′, I′, I*′) 上直接积分 F，以及在
    (G′, Ẽ′, R, r, σ) 坐标上乘 jacobian_chem 积分，两者应在误差内一致。

    Args:
        F (Callable): F(xi_a, I_a, xi_b, I_b)，向量化
        n (int): 每个积分的样本数
        seed (int): 种子

    Returns:
        (direct, parameterized): 两个估计值
    """
    beta, gamma, zeta = channel.species(table)
    case = ConstituentCase.of(gamma, zeta)

    def internal_sampler(sp: Species) -> object:
        return GammaSampler(sp.dof / 2.0, scale) if sp.is_poly else UniformUnitSampler()

    direct_sampler = ProductSampler(
        GaussianSampler(math.sqrt(scale / gamma.m)), internal_sampler(gamma),
        GaussianSampler(math.sqrt(scale / zeta.m)), internal_sampler(zeta),
    )

    def direct(xi_a: np.ndarray, I_a: np.ndarray, xi_b: np.ndarray, I_b: np.ndarray) -> np.ndarray:
        I_a = I_a if gamma.is_poly else np.zeros_like(I_a)
        I_b = I_b if zeta.is_poly else np.zeros_like(I_b)
        return F(xi_a, I_a, xi_b, I_b)

    param_sampler = ProductSampler(
        GaussianSampler(math.sqrt(scale / beta.m)), ExponentialSampler(scale),
        UniformUnitSampler(), UniformUnitSampler(), UniformSphereSampler(),
    )
    ratio = beta.m / (gamma.m * zeta.m)

    def parameterized(G: np.ndarray, E: np.ndarray, R: np.ndarray, r: np.ndarray,
                      sigma: np.ndarray) -> np.ndarray:
        kinetic, I_a, I_b = split_energy(case, E, r, R)
        g_norm = np.sqrt(2.0 * ratio * kinetic)
        xi_a = G + sigma * ((zeta.m / beta.m) * g_norm)[:, None]
        xi_b = G - sigma * ((gamma.m / beta.m) * g_norm)[:, None]
        J = jacobian_chem(table, channel, E, R, case)
        return F(xi_a, I_a, xi_b, I_b) * J

    est_direct = mc_integrate(direct, direct_sampler, n, seed, stream=(1,), workers=workers)
    est_param = mc_integrate(parameterized, param_sampler, n, seed, stream=(2,), workers=workers)
    return est_direct, est_param
