#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
线性化碰撞算子 L = ν − K

在满足质量作用律、宏观速度为零的麦克斯韦背景 M 附近写 f = M + √M·h。
本模块给出碰撞频率 ν、积分核 k¹ k² k³、K 与 L 的逐点作用、
二次源项 S、Galerkin 矩阵及其谱，以及频率夹逼界的网格拟合。

约定 H = h/√M。所有事件测度与 operators 模块共用（见 events）：
β 槽 K 密度 (√M_β/φ_β)·dA·(H′ + H*′)，γ 槽 √M_γ·sig_jac·M_ζ·(H_* − H*′)，
力学 √M·M_*·Kmech φ′φ*′·(H′ + H*′ − H_*)。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.special import beta as beta_fn
from tqdm import tqdm

from .equilibrium import (DistributionField, MaxwellianParams, log_maxwellian_reduced, mass_action_rhs,
                          maxwellian_field, maxwellian_values, phase_grid)
from .events import (mech_events, phase_args, phase_dims, product_dims, product_events, product_frequency,
                     reactant_args, reactant_dims, reactant_events, split_args, split_dims)
from .exceptions import BackgroundError, NumericalError, SingularKernelError, UsageError
from .invariants import InvariantBasis, chemical_invariant_space, collision_invariant_basis
from .kinematics import ConstituentCase, Zstate, recombine_batch
from .model import CrossSectionModel, ReactionChannel, SpeciesTable, log_phi_values, sigma_chem
from .quadrature import (Dimension, Estimate, QuadratureSpec, count_chunks, integrate_dims, internal_dim,
                         iter_weighted_nodes, velocity_dim, zero_estimate)

logger = logging.getLogger(__name__)

STREAM_COLLISION = 51
STREAM_NU = 52
STREAM_S_CHEM = 53
STREAM_GALERKIN = 54
STREAM_K_COLUMN = 55
STREAM_K2_NORM = 56
STREAM_K_INNER = 57
STREAM_S_WEAK = 58

# 背景质量作用律的相对容差
BACKGROUND_RTOL = 1e-9
# 特征值 |λ| ≤ NULL_TOL·max|λ| 视为零
NULL_TOL = 1e-7
# Gram–Schmidt 中相对剩余范数低于该值的候选视为线性相关
PIVOT_TOL = 1e-10
# exp(-log M / 2) 的指数上限
MAX_EXPONENT = 700.0

FieldEvaluator = Callable[[int, np.ndarray, np.ndarray], np.ndarray]
ProgressCallback = Callable[[str, int, int], None]
ORIGIN = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class LinearizedContext:
    """
    线性化背景

    Args:
        background (MaxwellianParams): 背景麦克斯韦参数，u 必须为 0
        table (SpeciesTable): 组分表
        channels (Sequence[ReactionChannel]): 反应通道
        model (CrossSectionModel): 截面模型
        kB (float): 玻尔兹曼常数
        rtol (float): 质量作用律相对容差

    Raises:
        BackgroundError: 背景不满足质量作用律或 u ≠ 0
    """

    background: MaxwellianParams
    table: SpeciesTable
    channels: Tuple[ReactionChannel, ...]
    model: CrossSectionModel
    kB: float = 1.0
    rtol: float = BACKGROUND_RTOL
    invariants: InvariantBasis = field(init=False, repr=False, compare=False)
    maxwellian: DistributionField = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(self.channels))
        if len(self.background.n) != len(self.table):
            raise UsageError(f"背景有 {len(self.background.n)} 个密度，组分表有 {len(self.table)} 个组分")
        speed = float(np.linalg.norm(self.background.u))
        if speed != 0.0:
            raise BackgroundError(f"线性化背景必须静止: |u| = {speed}", {"u": speed})
        residuals: Dict[str, float] = {}
        for ch in self.channels:
            rhs = mass_action_rhs(self.table, ch, self.background.T, self.kB)
            n = self.background.density
            ratio = n(ch.reactant_a) * n(ch.reactant_b) / n(ch.product)
            residuals[ch.label] = (ratio - rhs) / rhs
        bad = {k: v for k, v in residuals.items() if not abs(v) <= self.rtol}
        if bad:
            raise BackgroundError(f"背景不满足质量作用律: {bad}", residuals)
        U = chemical_invariant_space(len(self.table), self.channels)
        object.__setattr__(self, "invariants", collision_invariant_basis(self.table, U))
        object.__setattr__(self, "maxwellian", maxwellian_field(self.background, self.table, self.kB))
        logger.debug("线性化背景: T=%g, n=%s, dim ker L=%d", self.background.T, self.background.n,
                     self.invariants.dim)

    @property
    def kT(self) -> float:
        return self.kB * self.background.T

    def scaled(self, quad: QuadratureSpec) -> QuadratureSpec:
        """把求积尺度设为背景的 k_BT"""
        return quad.with_scale(self.kT)

    def M(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        return maxwellian_values(self.background, self.table, alpha, xi, I, self.kB)

    def log_M(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        return self.maxwellian.log(alpha, xi, I)

    def sqrt_M(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        return np.sqrt(self.M(alpha, xi, I))

    def log_M_reduced(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        """log(M/φ)"""
        return log_maxwellian_reduced(self.background, self.table, alpha, xi, I, self.kB)

    def ordered_triples(self) -> List[Tuple[int, int, ReactionChannel]]:
        """(通道序号, 排序序号, 有序三元组)"""
        return [(k, o, ordered) for k, ch in enumerate(self.channels) for o, ordered in enumerate(ch.orderings())]

    def mech_pairs(self) -> List[Tuple[int, int]]:
        return [(a.index, b.index) for a in self.table for b in self.table
                if self.model.c(a.index, b.index) != 0]


class Perturbation:
    """
    扰动 h = √M·H，以 H 存储

    Args:
        ctx (LinearizedContext): 线性化背景
        reduced (Callable): H(α, ξ, I)
        description (str): 描述标签
    """

    def __init__(self, ctx: LinearizedContext, reduced: FieldEvaluator, description: str = ""):
        self.ctx = ctx
        self._reduced = reduced
        self.description = description

    def __repr__(self) -> str:
        return f"Perturbation({self.description!r})"

    def reduced(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return np.asarray(self._reduced(alpha, xi, np.asarray(I, dtype=float) * np.ones(len(xi))),
                          dtype=float) * np.ones(len(xi))

    def __call__(self, alpha: int, xi: np.ndarray, I: Optional[np.ndarray] = None) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        I = np.zeros(len(xi)) if I is None else np.asarray(I, dtype=float) * np.ones(len(xi))
        return self.ctx.sqrt_M(alpha, xi, I) * self.reduced(alpha, xi, I)

    def scaled(self, factor: float) -> "Perturbation":
        return Perturbation(self.ctx, lambda a, x, i: factor * self.reduced(a, x, i),
                            f"{factor}*{self.description}")

    def as_field(self) -> DistributionField:
        return DistributionField(self.ctx.table, self, self.description)

    @classmethod
    def from_field(cls, ctx: LinearizedContext, h: DistributionField) -> "Perturbation":
        """由 h 反求 H = h/√M；M = 0 处取 0"""
        def reduced(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
            log_m = ctx.log_M(alpha, xi, I)
            finite = np.isfinite(log_m)
            inv = np.exp(np.minimum(-0.5 * np.where(finite, log_m, 0.0), MAX_EXPONENT))
            return np.where(finite, h(alpha, xi, I) * inv, 0.0)

        return cls(ctx, reduced, getattr(h, "description", "field"))

    @classmethod
    def from_generator(cls, ctx: LinearizedContext, i: int) -> "Perturbation":
        """h = √M·ψ_i，ψ_i 为第 i 个碰撞不变量生成元"""
        return cls(ctx, ctx.invariants.generator(i), ctx.invariants.names[i])


PerturbationLike = Union[Perturbation, DistributionField]


def as_perturbation(ctx: LinearizedContext, h: PerturbationLike) -> Perturbation:
    if isinstance(h, Perturbation):
        return h
    return Perturbation.from_field(ctx, h)


def random_perturbation(ctx: LinearizedContext, rng: np.random.Generator, degree: int = 2) -> Perturbation:
    """H 为按热速度缩放的随机多项式，系数标准正态"""
    table, kT = ctx.table, ctx.kT
    coeffs = {sp.index: rng.standard_normal((degree + 1, 4)) for sp in table}

    def reduced(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        sp = table[alpha]
        c = coeffs[alpha]
        x = xi * math.sqrt(sp.m / kT)
        e = I / kT if sp.is_poly else np.zeros(len(xi))
        value = np.zeros(len(xi))
        for k in range(degree + 1):
            value += (c[k, 0] * x[:, 0] ** k + c[k, 1] * x[:, 1] ** k + c[k, 2] * x[:, 2] ** k
                      + c[k, 3] * e**k) / (k + 1)
        return value

    return Perturbation(ctx, reduced, f"random(degree={degree})")


def frequency_weight(table: SpeciesTable, alpha: int, xi: np.ndarray, I: np.ndarray, eta: float) -> np.ndarray:
    """频率权重 w(Z) = (1 + |ξ| + 1_poly·√I)^{1−η}"""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    I = np.asarray(I, dtype=float) * np.ones(len(xi))
    internal = np.sqrt(np.maximum(I, 0.0)) if table[alpha].is_poly else 0.0
    return np.power(1.0 + np.linalg.norm(xi, axis=-1) + internal, 1.0 - eta)


def _broadcast(Z: Zstate, n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.broadcast_to(Z.xi, (n, 3)), np.full(n, Z.internal)


def _check_point(table: SpeciesTable, alpha: int, Z: Zstate) -> None:
    if Z.species != alpha:
        raise UsageError(f"相空间点属于组分 {Z.species}，不是 {alpha}")
    if table[alpha].is_poly and Z.I is None:
        raise UsageError(f"多原子组分 {table[alpha].label} 的相空间点需要内能")


# 以下三个块函数返回 (ν 密度, K 密度)，它们在同一组节点上求值


def _product_block(ctx: LinearizedContext, h: Perturbation, ordered: ReactionChannel, xi_p: np.ndarray,
                   I_p: np.ndarray, p: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    ev = product_events(ctx.table, ctx.model, ordered, xi_p, I_p, p["r"], p["R"], p["sigma"])
    b = ev.batch
    mask = ev.sig_jac > 0
    nu = np.where(mask, ev.weight / np.where(mask, ev.phi_p, 1.0), 0.0)
    H = h.reduced(ordered.reactant_a, b.xi_a, b.I_a) + h.reduced(ordered.reactant_b, b.xi_b, b.I_b)
    K = np.where(mask, nu * ctx.sqrt_M(ordered.product, b.xi_p, b.I_p) * H, 0.0)
    return nu, K


def _reactant_block(ctx: LinearizedContext, h: Perturbation, slot: ReactionChannel, xi_a: np.ndarray,
                    I_a: np.ndarray, q: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    ev = reactant_events(ctx.table, ctx.model, slot, xi_a, I_a, q["t"], q["sigma"], q["s"])
    b = ev.batch
    mask = ev.sig_jac > 0
    nu = np.where(mask, ev.sig_jac * ctx.M(slot.reactant_b, b.xi_b, b.I_b), 0.0)
    H = h.reduced(slot.product, b.xi_p, b.I_p) - h.reduced(slot.reactant_b, b.xi_b, b.I_b)
    K = np.where(mask, nu * ctx.sqrt_M(slot.reactant_a, b.xi_a, b.I_a) * H, 0.0)
    return nu, K


def _mech_block(ctx: LinearizedContext, h: Perturbation, alpha: int, beta: int, xi: np.ndarray, I: np.ndarray,
                xi_s: np.ndarray, I_s: np.ndarray, p: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    ev = mech_events(ctx.table, ctx.model, alpha, beta, xi, I, xi_s, I_s, p["r"], p["R"], p["sigma"])
    b = ev.batch
    mask = ev.kmech > 0
    nu = np.where(mask, ev.kmech * ev.phi_q * ev.phi_sq * ctx.M(beta, b.xi_s, b.I_s), 0.0)
    H = (h.reduced(alpha, b.xi_q, b.I_q) + h.reduced(beta, b.xi_sq, b.I_sq) - h.reduced(beta, b.xi_s, b.I_s))
    K = np.where(mask, nu * ctx.sqrt_M(alpha, b.xi, b.I) * H, 0.0)
    return nu, K


@dataclass(frozen=True)
class CollisionTerms:
    """同一组节点上的 ν(Z)、ν·h 与 K h；L h = nu_h − K_h"""

    nu: float
    nu_h: float
    K_h: float
    L_h: float
    std_error: Tuple[float, float, float]

    def to_dict(self) -> Dict[str, Any]:
        return {"nu": self.nu, "nu_h": self.nu_h, "K_h": self.K_h, "L_h": self.L_h,
                "std_error": list(self.std_error)}


def _collision_blocks(ctx: LinearizedContext, alpha: int, quad: QuadratureSpec,
                      center: Sequence[float] = ORIGIN) -> List[Tuple[Tuple[int, ...], List[Dimension], Callable, Optional[ReactionChannel]]]:
    """
    点 Z 处 L 的全部积分块

    每块为 (流标识, 内层维度, block(h, xi, I, nodes) -> (ν, K), 产物槽的有序三元组或 None)，
    xi、I 为外层点的数组。
    """
    table = ctx.table
    blocks: List[Tuple[Tuple[int, ...], List[Dimension], Callable, Optional[ReactionChannel]]] = []
    for k, o, ordered in ctx.ordered_triples():
        if alpha == ordered.product:
            dims = split_dims(quad, ConstituentCase.of_channel(table, ordered))

            def product_block(h: Perturbation, xi: np.ndarray, I: np.ndarray, nodes: Dict[str, np.ndarray],
                              ordered: ReactionChannel = ordered) -> Tuple[np.ndarray, np.ndarray]:
                return _product_block(ctx, h, ordered, xi, I, split_args(nodes))

            blocks.append(((k, o, 0), dims, product_block, ordered))
        for slot_id, slot in ((1, ordered), (2, ordered.swapped())):
            if alpha != slot.reactant_a:
                continue

            def reactant_block(h: Perturbation, xi: np.ndarray, I: np.ndarray, nodes: Dict[str, np.ndarray],
                               slot: ReactionChannel = slot) -> Tuple[np.ndarray, np.ndarray]:
                return _reactant_block(ctx, h, slot, xi, I, reactant_args(nodes))

            blocks.append(((k, o, slot_id), reactant_dims(quad, table, slot), reactant_block, None))
    for a, beta in ctx.mech_pairs():
        if a != alpha:
            continue
        dims = phase_dims(quad, table, beta, "b_", center) + split_dims(
            quad, ConstituentCase.of(table[alpha], table[beta]))

        def mech_block(h: Perturbation, xi: np.ndarray, I: np.ndarray, nodes: Dict[str, np.ndarray],
                       beta: int = beta) -> Tuple[np.ndarray, np.ndarray]:
            zb = phase_args(nodes, "b_")
            return _mech_block(ctx, h, alpha, beta, xi, I, zb["xi"], zb["I"], split_args(nodes))

        blocks.append(((99, alpha, beta), dims, mech_block, None))
    return blocks


def collision_terms(ctx: LinearizedContext, h: PerturbationLike, alpha: int, Z: Zstate,
                    quad: QuadratureSpec) -> CollisionTerms:
    """
    在同一组节点上计算 ν(Z)、ν·h(Z) 与 (K h)(Z)

    对 h = √M·ψ（ψ 为碰撞不变量）逐事件有 ν·h = K h，L h 的抵消是精确的。

    Raises:
        NumericalError: 被积函数非有限
    """
    _check_point(ctx.table, alpha, Z)
    h = as_perturbation(ctx, h)
    quad = ctx.scaled(quad)
    h_Z = float(h(alpha, Z.xi, Z.internal)[0])
    total = zero_estimate((3,))
    for stream, dims, block, _ in _collision_blocks(ctx, alpha, quad):

        def integrand(nodes: Dict[str, np.ndarray], block: Callable = block) -> np.ndarray:
            n = len(next(iter(nodes.values())))
            xi, I = _broadcast(Z, n)
            nu, K = block(h, xi, I, nodes)
            return np.column_stack([nu, K, h_Z * nu - K])

        total = total + integrate_dims(quad, dims, integrand, stream=(STREAM_COLLISION, alpha) + stream)
    value = np.asarray(total.value, dtype=float)
    std = np.asarray(total.std_error, dtype=float)
    return CollisionTerms(nu=float(value[0]), nu_h=float(h_Z * value[0]), K_h=float(value[1]),
                          L_h=float(value[2]), std_error=(float(h_Z * std[0]), float(std[1]), float(std[2])))


def apply_K(ctx: LinearizedContext, h: PerturbationLike, alpha: int, Z: Zstate, quad: QuadratureSpec) -> float:
    """(K h)_α(Z) = K_mech + K_chem；h = 0 时为 0"""
    return collision_terms(ctx, h, alpha, Z, quad).K_h


def apply_L(ctx: LinearizedContext, h: PerturbationLike, alpha: int, Z: Zstate, quad: QuadratureSpec) -> float:
    """(L h)_α(Z) = ν_α(Z)h_α(Z) − (K h)_α(Z)"""
    return collision_terms(ctx, h, alpha, Z, quad).L_h


def nu_chem(ctx: LinearizedContext, alpha: int, Z: Zstate, quad: QuadratureSpec) -> float:
    """
    化学碰撞频率 ν_cα(Z)

    产物槽用闭式 product_frequency；反应物槽用伙伴形式
    (m_γm_ζ/m_β)∫ σ^β(I_*)·门限·M_ζ(Z*′) dZ*′。组分在多个通道、多个角色中出现时各项相加。
    """
    _check_point(ctx.table, alpha, Z)
    table, model = ctx.table, ctx.model
    quad = ctx.scaled(quad)
    total = 0.0
    for k, o, ordered in ctx.ordered_triples():
        if alpha == ordered.product:
            total += float(product_frequency(table, model, ordered, Z.internal))
        for slot_id, slot in ((1, ordered), (2, ordered.swapped())):
            if alpha != slot.reactant_a:
                continue
            beta, gamma, zeta = slot.species(table)
            factor = gamma.m * zeta.m / beta.m

            def integrand(nodes: Dict[str, np.ndarray], slot: ReactionChannel = slot,
                          zeta_index: int = zeta.index, factor: float = factor) -> np.ndarray:
                zb = phase_args(nodes, "b_")
                xi_a, I_a = _broadcast(Z, len(zb["xi"]))
                batch = recombine_batch(table, slot, xi_a, I_a, zb["xi"], zb["I"])
                sig = np.asarray(sigma_chem(model, table, slot, batch.g_norm, 0.0,
                                            np.where(batch.gate, batch.I_p, 1.0)))
                return np.where(batch.gate, factor * sig * ctx.M(zeta_index, zb["xi"], zb["I"]), 0.0)

            est = integrate_dims(quad, phase_dims(quad, table, zeta.index, "b_"), integrand,
                                 stream=(STREAM_NU, alpha, k, o, slot_id))
            total += float(est.value)
    return total


def mech_split_factor(table: SpeciesTable, alpha: int, beta: int) -> float:
    """
    ∫ Kmech φ′φ*′ dr dR dσ / (C|g|E^{−η/2}·√E 相关因子) 中的角向与分配积分

    mono/mono: 4π；单个多原子（指数 a）: 4π·B(3/2, a+1)；poly/poly: 4π·B(a+1, b+1)·B(3/2, a+b+2)
    """
    case = ConstituentCase.of(table[alpha], table[beta])
    if case is ConstituentCase.MONO_MONO:
        return 4.0 * math.pi
    if case is ConstituentCase.POLY_POLY:
        a, b = table[alpha].phi_exponent, table[beta].phi_exponent
        return 4.0 * math.pi * float(beta_fn(a + 1.0, b + 1.0) * beta_fn(1.5, a + b + 2.0))
    a = table[alpha].phi_exponent if table[alpha].is_poly else table[beta].phi_exponent
    return 4.0 * math.pi * float(beta_fn(1.5, a + 1.0))


def nu_mech(ctx: LinearizedContext, alpha: int, Z: Zstate, quad: QuadratureSpec) -> float:
    """
    力学碰撞频率 ν_mα(Z) = Σ_β C_αβ·Φ_αβ ∫ M_β(Z_*) √(2E/μ) E^{−η/2} dZ_*

    E = μ|ξ − ξ_*|²/2 + 多原子内能，Φ_αβ 见 mech_split_factor。
    """
    _check_point(ctx.table, alpha, Z)
    table, eta = ctx.table, ctx.model.eta
    quad = ctx.scaled(quad)
    sa = table[alpha]
    total = 0.0
    for a, beta in ctx.mech_pairs():
        if a != alpha:
            continue
        sb = table[beta]
        mu = sa.m * sb.m / (sa.m + sb.m)
        coefficient = ctx.model.c(alpha, beta) * mech_split_factor(table, alpha, beta)

        def integrand(nodes: Dict[str, np.ndarray], beta: int = beta, sb: Any = sb, mu: float = mu) -> np.ndarray:
            zb = phase_args(nodes, "b_")
            g = zb["xi"] - Z.xi
            E = (0.5 * mu * np.sum(g * g, axis=-1) + (Z.internal if sa.is_poly else 0.0)
                 + (zb["I"] if sb.is_poly else 0.0))
            ok = E > 0
            safe = np.where(ok, E, 1.0)
            value = np.sqrt(2.0 * safe / mu) * np.power(safe, -eta / 2.0) * ctx.M(beta, zb["xi"], zb["I"])
            return np.where(ok, value, 0.0)

        est = integrate_dims(quad, phase_dims(quad, table, beta, "b_"), integrand, stream=(STREAM_NU, alpha, 99, beta))
        total += coefficient * float(est.value)
    return total


def _k1_values(ctx: LinearizedContext, triple: ReactionChannel, xi: np.ndarray, I: np.ndarray,
               xi_s: np.ndarray, I_s: np.ndarray, shell_width: Optional[float]) -> np.ndarray:
    """k¹ 的向量化求值：(xi, I) 属于产物 α，(xi_s, I_s) 属于第一反应物 β，γ 为伙伴"""
    table = ctx.table
    sa, sb, sc = triple.species(table)
    if not sc.is_poly and shell_width is None:
        raise SingularKernelError(
            f"通道 {triple.label} 的伙伴 {sc.label} 为单原子，k¹ 是能量壳上的测度；请给出 shell_width")
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    xi_s = np.atleast_2d(np.asarray(xi_s, dtype=float))
    n = max(len(xi), len(xi_s))
    I = np.asarray(I, dtype=float) * np.ones(n) * float(sa.is_poly)
    I_s = np.asarray(I_s, dtype=float) * np.ones(n) * float(sb.is_poly)
    xi_c = (sa.m * xi - sb.m * xi_s) / sc.m
    I_c = (0.5 * sa.m * np.sum(xi * xi, axis=-1) + I + sa.eps0
           - 0.5 * sb.m * np.sum(xi_s * xi_s, axis=-1) - I_s - sb.eps0
           - 0.5 * sc.m * np.sum(xi_c * xi_c, axis=-1) - sc.eps0)
    safe_I = np.where(I > 0, I, 1.0)
    sig = np.asarray(sigma_chem(ctx.model, table, triple, 0.0, 0.0, safe_I)) * np.ones(n)
    inside = (sig > 0) & (I > 0)
    if sb.is_poly:
        inside &= I_s > 0
    if sc.is_poly:
        inside &= I_c > 0
        log_partner = np.where(inside, log_phi_values(sc, np.where(inside, I_c, 1.0)), 0.0)
    else:
        width = float(shell_width)
        log_partner = -0.5 * (I_c / width) ** 2 - math.log(math.sqrt(2.0 * math.pi) * width)
    safe_I_s = np.where(I_s > 0, I_s, 1.0)
    log_value = (math.log(sb.m * sc.m / sa.m) + 3.0 * math.log(sa.m / sc.m)
                 + np.log(np.where(inside, sig, 1.0))
                 + (log_phi_values(sb, safe_I_s) if sb.is_poly else 0.0) + log_partner
                 + 0.5 * ctx.log_M(sa.index, xi, safe_I) - (log_phi_values(sa, safe_I) if sa.is_poly else 0.0)
                 - 0.5 * ctx.log_M(sb.index, xi_s, safe_I_s))
    return np.where(inside, np.exp(log_value), 0.0)


def kernel_k1(ctx: LinearizedContext, triple: ReactionChannel, Z: Zstate, Z_star: Zstate,
              shell_width: Optional[float] = None) -> float:
    """
    k¹_{αβγ}(Z, Z_*)：Z 属于产物 α，Z_* 属于反应物 β，γ 为伙伴

    (m_βm_γ/m_α)(m_α/m_γ)³·σ^α_{βγ}(I)·φ_β(I_*)φ_γ(I_γ)·√M_α(Z)/(φ_α(I)√M_β(Z_*))，
    I_γ 由动量与能量守恒确定。伙伴为单原子时核集中在 I_γ = 0 的壳上，
    需要用宽度 shell_width 的高斯磨光代替 δ(I_γ)。

    Raises:
        SingularKernelError: 伙伴为单原子且未给出 shell_width
    """
    _check_point(ctx.table, triple.product, Z)
    _check_point(ctx.table, triple.reactant_a, Z_star)
    return float(_k1_values(ctx, triple, Z.xi, Z.internal, Z_star.xi, Z_star.internal, shell_width)[0])


def kernel_k3(ctx: LinearizedContext, triple: ReactionChannel, Z: Zstate, Z_star: Zstate,
              shell_width: Optional[float] = None) -> float:
    """k³(Z, Z_*) = k¹(Z_*, Z)：Z 属于反应物 triple.reactant_a，Z_* 属于产物"""
    return kernel_k1(ctx, triple, Z_star, Z, shell_width)


def _k2_values(ctx: LinearizedContext, triple: ReactionChannel, xi: np.ndarray, I: np.ndarray,
               xi_s: np.ndarray, I_s: np.ndarray) -> np.ndarray:
    table = ctx.table
    sg, sa, sb = triple.species(table)
    batch = recombine_batch(table, triple, xi, I, xi_s, I_s)
    sig = np.asarray(sigma_chem(ctx.model, table, triple, batch.g_norm, 0.0,
                                np.where(batch.gate, batch.I_p, 1.0))) * np.ones(len(batch.I_p))
    inside = batch.gate & (sig > 0)
    if sa.is_poly:
        inside &= batch.I_a > 0
    if sb.is_poly:
        inside &= batch.I_b > 0
    safe_a = np.where(batch.I_a > 0, batch.I_a, 1.0)
    safe_b = np.where(batch.I_b > 0, batch.I_b, 1.0)
    log_m = 0.5 * (ctx.log_M(sa.index, batch.xi_a, safe_a) + ctx.log_M(sb.index, batch.xi_b, safe_b))
    value = (sa.m * sb.m / sg.m) * np.where(inside, sig, 0.0) * np.exp(np.where(inside, log_m, 0.0))
    return np.where(inside, value, 0.0)


def kernel_k2(ctx: LinearizedContext, triple: ReactionChannel, Z: Zstate, Z_star: Zstate) -> float:
    """
    k²_{γαβ}(Z, Z_*)：Z 属于 triple.reactant_a，Z_* 属于 triple.reactant_b

    (m_αm_β/m_γ)·σ^γ_{αβ}(I_*)·门限·√(M_α(Z)M_β(Z_*))，I_* 为复合产物的内能。
    """
    _check_point(ctx.table, triple.reactant_a, Z)
    _check_point(ctx.table, triple.reactant_b, Z_star)
    return float(_k2_values(ctx, triple, Z.xi, Z.internal, Z_star.xi, Z_star.internal)[0])


def kernel_k1_column_integral(ctx: LinearizedContext, triple: ReactionChannel, Z_star: Zstate,
                              quad: QuadratureSpec) -> Estimate:
    """
    ∫ k¹(Z, Z_*) dZ，对固定 Z_* 的列积分

    换到伙伴变量 Z_γ 后 δ 被精确积掉，单原子伙伴同样适用：
    (1/√M_β(Z_*))∫ (m_βm_γ/m_α)σ^α(I)·门限·φ_β(I_*)φ_γ(I_γ)·√M_α(Z)/φ_α(I) dZ_γ，
    Z 为 Z_* 与 Z_γ 复合的产物态。
    """
    table = ctx.table
    _check_point(table, triple.reactant_a, Z_star)
    sa, sb, sc = triple.species(table)
    kT = ctx.kT
    quad = ctx.scaled(quad)
    # √M_α(Z) 在 ξ_γ 上的宽度为 √(2m_α kT)/m_γ，中心 −m_β ξ_*/m_γ
    center = tuple(-sb.m * Z_star.xi / sc.m)
    dims = [velocity_dim(quad.with_scale(2.0 * sa.m * kT / sc.m), "c_xi", sc.m, center)]
    if sc.is_poly:
        dims.append(internal_dim(quad.with_scale(2.0 * kT), "c_I", sc.dof / 2.0))
    log_m_star = float(ctx.log_M(sb.index, Z_star.xi, Z_star.internal)[0])
    log_phi_star = float(log_phi_values(sb, Z_star.internal)) if sb.is_poly else 0.0
    prefactor = sb.m * sc.m / sa.m

    def integrand(nodes: Dict[str, np.ndarray]) -> np.ndarray:
        zc = phase_args(nodes, "c_")
        xi_s, I_s = _broadcast(Z_star, len(zc["xi"]))
        batch = recombine_batch(table, triple, xi_s, I_s, zc["xi"], zc["I"])
        sig = np.asarray(sigma_chem(ctx.model, table, triple, batch.g_norm, 0.0,
                                    np.where(batch.gate, batch.I_p, 1.0))) * np.ones(len(batch.I_p))
        inside = batch.gate & (sig > 0) & (batch.I_p > 0)
        if sc.is_poly:
            inside &= zc["I"] > 0
        safe_p = np.where(inside, batch.I_p, 1.0)
        log_value = (np.log(np.where(inside, sig, 1.0)) + log_phi_star
                     + (log_phi_values(sc, np.where(inside, zc["I"], 1.0)) if sc.is_poly else 0.0)
                     + 0.5 * ctx.log_M_reduced(sa.index, batch.xi_p, safe_p)
                     - (0.5 * log_phi_values(sa, safe_p) if sa.is_poly else 0.0)
                     - 0.5 * log_m_star)
        return np.where(inside, prefactor * np.exp(np.where(inside, log_value, 0.0)), 0.0)

    return integrate_dims(quad, dims, integrand, stream=(STREAM_K_COLUMN,) + triple.key)


def k2_hs_norm(ctx: LinearizedContext, triple: ReactionChannel, quad: QuadratureSpec) -> Estimate:
    """Hilbert–Schmidt 范数平方 ∫∫ k²(Z, Z_*)² dZ dZ_*"""
    table = ctx.table
    quad = ctx.scaled(quad)
    a, b = triple.reactant_a, triple.reactant_b
    dims = phase_dims(quad, table, a, "a_") + phase_dims(quad, table, b, "b_")

    def integrand(nodes: Dict[str, np.ndarray]) -> np.ndarray:
        za, zb = phase_args(nodes, "a_"), phase_args(nodes, "b_")
        return _k2_values(ctx, triple, za["xi"], za["I"], zb["xi"], zb["I"]) ** 2

    return integrate_dims(quad, dims, integrand, stream=(STREAM_K2_NORM,) + triple.key)


def k_inner(ctx: LinearizedContext, h: PerturbationLike, g: PerturbationLike, quad: QuadratureSpec) -> Estimate:
    """
    ⟨K h, g⟩ = Σ_α ∫ (K h)_α(Z) g_α(Z) dZ

    外层点与内层节点联合积分，直接使用逐点 K 密度，不经过对称化弱形式，
    因此 ⟨K h, g⟩ 与 ⟨h, K g⟩ 的比较是对 K 自伴性的独立检验。
    """
    h, g = as_perturbation(ctx, h), as_perturbation(ctx, g)
    quad = ctx.scaled(quad)
    table = ctx.table
    total = zero_estimate()
    for sp in table:
        alpha = sp.index
        for stream, dims, block, ordered in _collision_blocks(ctx, alpha, quad):
            if ordered is not None:
                # 产物槽的外层内能从门限起积分
                outer, names = product_dims(quad, table, ordered), ("xi_p", "I_p")
            else:
                outer, names = phase_dims(quad, table, alpha, "z_"), ("z_xi", "z_I")

            def integrand(nodes: Dict[str, np.ndarray], block: Callable = block,
                          names: Tuple[str, str] = names, alpha: int = alpha) -> np.ndarray:
                xi = nodes[names[0]]
                I = nodes.get(names[1], np.zeros(len(xi)))
                _, K = block(h, xi, I, nodes)
                return K * g(alpha, xi, I)

            total = total + integrate_dims(quad, outer + dims, integrand,
                                           stream=(STREAM_K_INNER, alpha) + stream)
    return total


def s_chem(ctx: LinearizedContext, h: PerturbationLike, alpha: int, Z: Zstate, quad: QuadratureSpec) -> float:
    """
    化学二次源项 S_α(h)(Z)

    产物槽 M_β^{−1/2}∫ sig_jac·√(M′_γM*′_ζ)·h′_γh*′_ζ，反应物槽 −h_γ(Z)∫ sig_jac·√M*′_ζ·h*′_ζ。
    对 h 是二次齐次的。
    """
    _check_point(ctx.table, alpha, Z)
    h = as_perturbation(ctx, h)
    table, model = ctx.table, ctx.model
    quad = ctx.scaled(quad)
    h_Z = float(h(alpha, Z.xi, Z.internal)[0])
    total = 0.0
    for k, o, ordered in ctx.ordered_triples():
        if alpha == ordered.product:

            def product_integrand(nodes: Dict[str, np.ndarray], ordered: ReactionChannel = ordered) -> np.ndarray:
                p = split_args(nodes)
                xi, I = _broadcast(Z, len(p["sigma"]))
                ev = product_events(table, model, ordered, xi, I, p["r"], p["R"], p["sigma"])
                b = ev.batch
                mask = ev.sig_jac > 0
                safe_a, safe_b = np.where(mask, b.I_a, 1.0), np.where(mask, b.I_b, 1.0)
                log_w = 0.5 * (ctx.log_M(ordered.reactant_a, b.xi_a, safe_a)
                               + ctx.log_M(ordered.reactant_b, b.xi_b, safe_b) - ctx.log_M(alpha, b.xi_p, b.I_p))
                value = (ev.sig_jac * np.exp(np.where(mask, log_w, 0.0))
                         * h(ordered.reactant_a, b.xi_a, safe_a) * h(ordered.reactant_b, b.xi_b, safe_b))
                return np.where(mask, value, 0.0)

            dims = split_dims(quad, ConstituentCase.of_channel(table, ordered))
            total += float(integrate_dims(quad, dims, product_integrand,
                                          stream=(STREAM_S_CHEM, alpha, k, o, 0)).value)
        for slot_id, slot in ((1, ordered), (2, ordered.swapped())):
            if alpha != slot.reactant_a:
                continue

            def reactant_integrand(nodes: Dict[str, np.ndarray], slot: ReactionChannel = slot) -> np.ndarray:
                q = reactant_args(nodes)
                xi, I = _broadcast(Z, len(q["t"]))
                ev = reactant_events(table, model, slot, xi, I, q["t"], q["sigma"], q["s"])
                b = ev.batch
                mask = ev.sig_jac > 0
                return np.where(mask, ev.sig_jac * ctx.sqrt_M(slot.reactant_b, b.xi_b, b.I_b)
                                * h(slot.reactant_b, b.xi_b, b.I_b), 0.0)

            est = integrate_dims(quad, reactant_dims(quad, table, slot), reactant_integrand,
                                 stream=(STREAM_S_CHEM, alpha, k, o, slot_id))
            total -= h_Z * float(est.value)
    return total


def s_chem_weak(ctx: LinearizedContext, h: PerturbationLike, psi: Callable[[int, np.ndarray, np.ndarray], np.ndarray],
                quad: QuadratureSpec) -> Estimate:
    """
    ⟨S(h), √M ψ⟩，在产物坐标上积分

    Σ_C ∫ sig_jac·√(M′_γM*′_ζ)·h′_γh*′_ζ·(ψ_β* − ψ′_γ − ψ*′_ζ)，对碰撞不变量逐事件为零。
    """
    h = as_perturbation(ctx, h)
    table, model = ctx.table, ctx.model
    quad = ctx.scaled(quad)
    total = zero_estimate()
    for k, o, ordered in ctx.ordered_triples():
        beta, gamma, zeta = ordered.species(table)
        dims = product_dims(quad, table, ordered) + split_dims(quad, ConstituentCase.of_channel(table, ordered))

        def integrand(nodes: Dict[str, np.ndarray], ordered: ReactionChannel = ordered) -> np.ndarray:
            p = split_args(nodes)
            ev = product_events(table, model, ordered, nodes["xi_p"], nodes["I_p"], p["r"], p["R"], p["sigma"])
            b = ev.batch
            mask = ev.sig_jac > 0
            safe_a, safe_b = np.where(mask, b.I_a, 1.0), np.where(mask, b.I_b, 1.0)
            a, c = ordered.reactant_a, ordered.reactant_b
            quadratic = (ctx.sqrt_M(a, b.xi_a, safe_a) * h(a, b.xi_a, safe_a)
                         * ctx.sqrt_M(c, b.xi_b, safe_b) * h(c, b.xi_b, safe_b))
            delta = (np.asarray(psi(ordered.product, b.xi_p, b.I_p)) - np.asarray(psi(a, b.xi_a, safe_a))
                     - np.asarray(psi(c, b.xi_b, safe_b)))
            return np.where(mask, ev.sig_jac * quadratic * delta, 0.0)

        total = total + integrate_dims(quad, dims, integrand, stream=(STREAM_S_WEAK, k, o))
    return total


@dataclass(frozen=True)
class Monomial:
    """组分 species 上的缩放单项式 Π(ξ_k/v)^{p_k}·(I/kT)^q，其它组分上为 0"""

    species: int
    powers: Tuple[int, int, int]
    internal_power: int
    speed_scale: float
    energy_scale: float

    @property
    def name(self) -> str:
        px, py, pz = self.powers
        return f"s{self.species}:x{px}y{py}z{pz}I{self.internal_power}"

    def __call__(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if alpha != self.species:
            return np.zeros(len(xi))
        x = xi / self.speed_scale
        value = x[:, 0] ** self.powers[0] * x[:, 1] ** self.powers[1] * x[:, 2] ** self.powers[2]
        if self.internal_power:
            value = value * (np.asarray(I, dtype=float) / self.energy_scale) ** self.internal_power
        return value


@dataclass(frozen=True)
class GalerkinBasis:
    """
    Galerkin 基 ψ_i = P_i·√M，P_i = Σ_j coefficients[i, j]·candidates[j]

    前 n_invariants 个函数张成碰撞不变量空间，其后为与之正交的多项式。
    """

    table: SpeciesTable
    candidates: Tuple[Callable[[int, np.ndarray, np.ndarray], np.ndarray], ...]
    coefficients: np.ndarray
    n_invariants: int
    degree: int
    internal_degree: int

    @property
    def size(self) -> int:
        return int(self.coefficients.shape[0])

    def candidate_values(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        I = np.asarray(I, dtype=float) * np.ones(len(xi))
        return np.column_stack([np.asarray(c(alpha, xi, I), dtype=float) * np.ones(len(xi))
                                for c in self.candidates])

    def polynomials(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        """全部 P_i 在组分 α 的点上的值，形状 (N, size)"""
        return self.candidate_values(alpha, xi, I) @ self.coefficients.T

    def functions(self, ctx: LinearizedContext) -> List[Perturbation]:
        """每个基函数作为扰动 √M·P_i"""
        def make(i: int) -> Perturbation:
            return Perturbation(ctx, lambda a, x, I: self.polynomials(a, x, I)[:, i], f"basis_{i}")

        return [make(i) for i in range(self.size)]

    def to_dict(self) -> Dict[str, Any]:
        return {"size": self.size, "n_invariants": self.n_invariants, "degree": self.degree,
                "internal_degree": self.internal_degree}


def _monomials(table: SpeciesTable, kT: float, degree: int, internal_degree: int) -> List[Monomial]:
    result: List[Monomial] = []
    for sp in table:
        speed = math.sqrt(kT / sp.m)
        q_max = internal_degree if sp.is_poly else 0
        for total in range(degree + 1):
            for px in range(total, -1, -1):
                for py in range(total - px, -1, -1):
                    pz = total - px - py
                    for q in range(q_max + 1):
                        result.append(Monomial(sp.index, (px, py, pz), q, speed, kT))
    return result


def build_basis(ctx: LinearizedContext, degree: int = 3, internal_degree: int = 2,
                quad: Optional[QuadratureSpec] = None, tol: float = PIVOT_TOL) -> GalerkinBasis:
    """
    构造 Galerkin 基

    候选为碰撞不变量生成元（先插入）与每个组分上速度总次数 ≤ degree、
    内能次数 ≤ internal_degree 的缩放单项式。在 𝔥 中按主元 Gram–Schmidt 正交化：
    不变量按顺序处理，其余候选每次取剩余范数最大者，相对剩余范数低于 tol 的丢弃。
    Gram 矩阵用对麦克斯韦矩精确的张量规则计算。

    Raises:
        NumericalError: 不变量生成元在 𝔥 中线性相关
    """
    if degree < 0 or internal_degree < 0:
        raise UsageError("基的次数必须非负")
    basis = ctx.invariants
    candidates: List[Callable] = [basis.generator(i) for i in range(basis.dim)]
    candidates += _monomials(ctx.table, ctx.kT, degree, internal_degree)
    grid_quad = ctx.scaled(quad or QuadratureSpec()).with_mode("deterministic")
    # Gauss 规则对次数 ≤ 2n−1 的多项式精确
    needed = max(degree + 3, internal_degree + 3)
    orders = {"velocity": max(grid_quad.order("velocity"), needed),
              "internal": max(grid_quad.order("internal"), needed)}
    grid = phase_grid(ctx.table, QuadratureSpec(orders=orders, scale=ctx.kT))
    n_cand = len(candidates)
    G = np.zeros((n_cand, n_cand))
    for sp in ctx.table:
        xi, I, w = grid.xi[sp.index], grid.I[sp.index], grid.weights[sp.index]
        V = np.column_stack([np.asarray(c(sp.index, xi, I), dtype=float) * np.ones(len(xi)) for c in candidates])
        G += (V * (w * ctx.M(sp.index, xi, I))[:, None]).T @ V
    diag = np.diag(G).copy()
    rows: List[np.ndarray] = []

    def residual(j: int) -> Tuple[float, np.ndarray]:
        v = np.zeros(n_cand)
        v[j] = 1.0
        if rows:
            C = np.array(rows)
            v = v - C.T @ (C @ G[:, j])
        return float(v @ G @ v), v

    for j in range(basis.dim):
        norm2, v = residual(j)
        if not norm2 > tol * diag[j]:
            raise NumericalError(f"碰撞不变量生成元 {basis.names[j]} 在 𝔥 中线性相关")
        rows.append(v / math.sqrt(norm2))
    remaining = set(range(basis.dim, n_cand))
    while remaining:
        C = np.array(rows)
        proj = C @ G
        norms = diag - np.sum(proj * proj, axis=0)
        best = max(remaining, key=lambda j: (norms[j] / diag[j], -j))
        if not norms[best] > tol * diag[best]:
            break
        remaining.discard(best)
        _, v = residual(best)
        rows.append(v / math.sqrt(float(v @ G @ v)))
    C = np.array(rows)
    # 再正交化一次，消除经典 Gram–Schmidt 的舍入漂移
    S = C @ G @ C.T
    L = linalg.cholesky(0.5 * (S + S.T), lower=True)
    C = linalg.solve_triangular(L, C, lower=True)
    logger.debug("Galerkin 基: 候选 %d 个，保留 %d 个（不变量 %d 个）", n_cand, len(C), basis.dim)
    return GalerkinBasis(ctx.table, tuple(candidates), C, basis.dim, degree, internal_degree)


@dataclass(frozen=True)
class GalerkinSystem:
    """A_ij = ⟨Lψ_i, ψ_j⟩ 与 N_ij = ⟨νψ_i, ψ_j⟩；symmetry_defect 取自对称化之前的 A"""

    A: np.ndarray
    N: np.ndarray
    symmetry_defect: float
    n_chunks: int


def _galerkin_blocks(ctx: LinearizedContext, quad: QuadratureSpec) -> List[Tuple[Tuple[int, ...], List[Dimension], str, Any]]:
    table = ctx.table
    blocks: List[Tuple[Tuple[int, ...], List[Dimension], str, Any]] = []
    for alpha, beta in ctx.mech_pairs():
        dims = (phase_dims(quad, table, alpha, "a_") + phase_dims(quad, table, beta, "b_")
                + split_dims(quad, ConstituentCase.of(table[alpha], table[beta])))
        blocks.append(((99, alpha, beta), dims, "mech", (alpha, beta)))
    for k, o, ordered in ctx.ordered_triples():
        dims = product_dims(quad, table, ordered) + split_dims(quad, ConstituentCase.of_channel(table, ordered))
        blocks.append(((k, o), dims, "chem", ordered))
    return blocks


def assemble_galerkin(
    ctx: LinearizedContext,
    basis: GalerkinBasis,
    quad: QuadratureSpec,
    show_progress: bool = False,
    progress_callback: Optional[ProgressCallback] = None,
) -> GalerkinSystem:
    """
    用对称弱形式组装 Galerkin 矩阵与 ν 加权 Gram 矩阵

    力学事件权重 (1/4)·M M_*·Kmech φ′φ*′，差分 D = P + P_* − P′ − P*′；
    化学事件权重 (M_β/φ_β)(Z_*)·dA，差分 D = P_* − P′ − P*′。A = Σ 权重·D Dᵀ，
    因而对称半正定且在不变量方向上逐事件为零。N 取各碰撞伙伴的对角项。

    Args:
        ctx (LinearizedContext): 线性化背景
        basis (GalerkinBasis): Galerkin 基
        quad (QuadratureSpec): 求积配置；确定性力学块维度很高，建议用蒙特卡罗
        show_progress (bool): 是否显示 tqdm 进度条
        progress_callback (Callable, optional): 进度回调 (stage, current, total)

    Raises:
        NumericalError: 事件权重非有限
    """
    table, model = ctx.table, ctx.model
    quad = ctx.scaled(quad)
    k = basis.size
    A = np.zeros((k, k))
    N = np.zeros((k, k))
    blocks = _galerkin_blocks(ctx, quad)
    total_chunks = sum(count_chunks(quad, dims) for _, dims, _, _ in blocks)
    logger.debug("Galerkin 组装: 基 %d 个，块 %d 个，分块 %d 个，mode=%s seed=%d", k, len(blocks),
                 total_chunks, quad.mode, quad.seed)
    if progress_callback:
        progress_callback("galerkin", 0, total_chunks)
    done = 0
    bar = tqdm(total=total_chunks, desc="Galerkin", unit="块", disable=not show_progress)
    try:
        for stream, dims, kind, key in blocks:
            for nodes, weight in iter_weighted_nodes(quad, dims, stream=(STREAM_GALERKIN,) + stream):
                if kind == "mech":
                    alpha, beta = key
                    za, zb, p = phase_args(nodes, "a_"), phase_args(nodes, "b_"), split_args(nodes)
                    ev = mech_events(table, model, alpha, beta, za["xi"], za["I"], zb["xi"], zb["I"],
                                     p["r"], p["R"], p["sigma"])
                    b = ev.batch
                    mask = ev.kmech > 0
                    w = np.where(mask, ev.kmech * ev.phi_q * ev.phi_sq * ctx.M(alpha, b.xi, b.I)
                                 * ctx.M(beta, b.xi_s, b.I_s), 0.0) * weight
                    P = basis.polynomials(alpha, b.xi, b.I)
                    D = (P + basis.polynomials(beta, b.xi_s, b.I_s) - basis.polynomials(alpha, b.xi_q, b.I_q)
                         - basis.polynomials(beta, b.xi_sq, b.I_sq))
                    _check_weights(w, "mech", stream)
                    A += 0.25 * (D * w[:, None]).T @ D
                    N += (P * w[:, None]).T @ P
                else:
                    ordered = key
                    p = split_args(nodes)
                    ev = product_events(table, model, ordered, nodes["xi_p"], nodes["I_p"], p["r"], p["R"],
                                        p["sigma"])
                    b = ev.batch
                    mask = ev.sig_jac > 0
                    w = np.where(mask, np.exp(ctx.log_M_reduced(ordered.product, b.xi_p, b.I_p)) * ev.weight,
                                 0.0) * weight
                    safe_a, safe_b = np.where(mask, b.I_a, 1.0), np.where(mask, b.I_b, 1.0)
                    Pp = basis.polynomials(ordered.product, b.xi_p, b.I_p)
                    Pa = basis.polynomials(ordered.reactant_a, b.xi_a, safe_a)
                    Pb = basis.polynomials(ordered.reactant_b, b.xi_b, safe_b)
                    D = Pp - Pa - Pb
                    _check_weights(w, "chem", stream)
                    A += (D * w[:, None]).T @ D
                    N += (Pp * w[:, None]).T @ Pp + (Pa * w[:, None]).T @ Pa + (Pb * w[:, None]).T @ Pb
                done += 1
                bar.update(1)
                if progress_callback and done % 16 == 0:
                    progress_callback("galerkin", done, total_chunks)
    finally:
        bar.close()
    if progress_callback:
        progress_callback("galerkin", total_chunks, total_chunks)
    norm = float(np.linalg.norm(A))
    defect = float(np.linalg.norm(A - A.T) / norm) if norm > 0 else 0.0
    return GalerkinSystem(0.5 * (A + A.T), 0.5 * (N + N.T), defect, total_chunks)


def _check_weights(w: np.ndarray, kind: str, stream: Tuple[int, ...]) -> None:
    if not np.all(np.isfinite(w)):
        bad = int(np.argwhere(~np.isfinite(w))[0][0])
        raise NumericalError(f"Galerkin {kind} 事件权重非有限", node={"stream": list(stream), "index": bad})


def galerkin_matrix(ctx: LinearizedContext, basis: GalerkinBasis, quad: QuadratureSpec, **kwargs: Any) -> np.ndarray:
    """A_ij = ⟨Lψ_i, ψ_j⟩，由对称弱形式组装"""
    return assemble_galerkin(ctx, basis, quad, **kwargs).A


def nu_weighted_gram(ctx: LinearizedContext, basis: GalerkinBasis, quad: QuadratureSpec, **kwargs: Any) -> np.ndarray:
    """N_ij = Σ_α ∫ ν_α ψ_i ψ_j dZ"""
    return assemble_galerkin(ctx, basis, quad, **kwargs).N


@dataclass(frozen=True)
class SpectralReport:
    """对称化矩阵的谱：升序特征值、零空间维数、最小正特征值与对称性缺陷"""

    eigenvalues: List[float]
    nullspace_dim: int
    coercivity_gap: Optional[float]
    symmetry_defect: float
    tol_null: float

    @property
    def min_eigenvalue(self) -> float:
        return self.eigenvalues[0] if self.eigenvalues else 0.0

    @property
    def scale(self) -> float:
        return max((abs(x) for x in self.eigenvalues), default=0.0)

    @property
    def nonnegative(self) -> bool:
        """最小特征值 > −1e−8·‖A‖"""
        return self.min_eigenvalue > -1e-8 * self.scale or self.scale == 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {"eigenvalues": self.eigenvalues, "nullspace_dim": self.nullspace_dim,
                "gap": self.coercivity_gap, "symmetry_defect": self.symmetry_defect,
                "tol_null": self.tol_null, "min_eigenvalue": self.min_eigenvalue,
                "nonnegative": self.nonnegative}


def _null_threshold(eigenvalues: np.ndarray, tol_null: float) -> float:
    return tol_null * float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0


def spectral_report(matrix: np.ndarray, tol_null: float = NULL_TOL, symmetry_defect: Optional[float] = None) -> SpectralReport:
    """
    对称化后求特征值

    Args:
        matrix (np.ndarray): 方阵
        tol_null (float): |λ| ≤ tol_null·max|λ| 计为零
        symmetry_defect (float, optional): 已知的组装对称性缺陷；缺省时由 matrix 计算

    Returns:
        SpectralReport: 谱报告
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise UsageError(f"需要方阵，得到形状 {A.shape}")
    if symmetry_defect is None:
        norm = float(np.linalg.norm(A))
        symmetry_defect = float(np.linalg.norm(A - A.T) / norm) if norm > 0 else 0.0
    eig = linalg.eigh(0.5 * (A + A.T), eigvals_only=True) if A.size else np.zeros(0)
    threshold = _null_threshold(eig, tol_null)
    null = np.abs(eig) <= threshold
    positive = eig[(~null) & (eig > 0)]
    gap = float(np.min(positive)) if positive.size else None
    return SpectralReport([float(x) for x in np.sort(eig)], int(np.count_nonzero(null)), gap,
                          float(symmetry_defect), tol_null)


def coercivity_constant(A: np.ndarray, N: np.ndarray, tol_null: float = NULL_TOL) -> float:
    """
    ⟨h, Lh⟩ ≥ λ⟨h, νh⟩ 在零空间正交补上的最佳常数 λ

    在 A 的值域上求解广义特征问题 A v = λ N v，返回最小特征值。

    Raises:
        NumericalError: A 没有非零谱或 N 在值域上不正定
    """
    A = 0.5 * (np.asarray(A, dtype=float) + np.asarray(A, dtype=float).T)
    N = 0.5 * (np.asarray(N, dtype=float) + np.asarray(N, dtype=float).T)
    eig, V = linalg.eigh(A)
    keep = np.abs(eig) > _null_threshold(eig, tol_null)
    if not np.any(keep):
        raise NumericalError("Galerkin 矩阵没有零空间之外的谱")
    Vr = V[:, keep]
    try:
        values = linalg.eigh(Vr.T @ A @ Vr, Vr.T @ N @ Vr, eigvals_only=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"ν 加权 Gram 矩阵在值域上不正定: {exc}") from exc
    return float(np.min(values))


@dataclass(frozen=True)
class FrequencyBoundFit:
    """网格上 ν/w 的范围与逐点记录"""

    nu_minus: float
    nu_plus: float
    eta: float
    violations: List[str]
    points: List[Dict[str, Any]]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {"nu_minus": self.nu_minus, "nu_plus": self.nu_plus, "eta": self.eta,
                "violations": self.violations, "n_points": len(self.points)}


def frequency_grid(table: SpeciesTable, max_speed: float, max_internal: float, points: int) -> List[Zstate]:
    """沿 ξ_x 方向的速度网格，多原子组分再与内能网格做张量积"""
    if points < 1:
        raise UsageError("网格点数必须为正")
    speeds = np.linspace(0.0, max_speed, points)
    internals = np.linspace(max_internal / points, max_internal, points)
    grid: List[Zstate] = []
    for sp in table:
        for v in speeds:
            xi = np.array([v, 0.0, 0.0])
            if sp.is_poly:
                grid.extend(Zstate.make(table, sp.index, xi, float(I)) for I in internals)
            else:
                grid.append(Zstate.make(table, sp.index, xi))
    return grid


def frequency_bound_fit(
    ctx: LinearizedContext,
    grid: Sequence[Zstate],
    quad: QuadratureSpec,
    eta: Optional[float] = None,
    progress_callback: Optional[ProgressCallback] = None,
) -> FrequencyBoundFit:
    """
    ν = ν_c + ν_m 的夹逼拟合：ν_− = min ν/w，ν_+ = max ν/w

    Args:
        ctx (LinearizedContext): 线性化背景
        grid (Sequence[Zstate]): 相空间点
        quad (QuadratureSpec): 求积配置
        eta (float, optional): 权重指数，缺省取截面模型的 η

    Returns:
        FrequencyBoundFit: violations 为空当且仅当 0 < ν_− ≤ ν_+ < ∞

    Raises:
        UsageError: 网格为空
        NumericalError: 某点 ν 非有限
    """
    if not grid:
        raise UsageError("频率网格为空")
    eta = ctx.model.eta if eta is None else float(eta)
    points: List[Dict[str, Any]] = []
    violations: List[str] = []
    ratios = []
    if progress_callback:
        progress_callback("frequency", 0, len(grid))
    for i, Z in enumerate(grid):
        nu = nu_chem(ctx, Z.species, Z, quad) + nu_mech(ctx, Z.species, Z, quad)
        if not math.isfinite(nu):
            raise NumericalError("碰撞频率非有限", node={"species": Z.species, "xi": Z.xi.tolist(), "I": Z.I})
        w = float(frequency_weight(ctx.table, Z.species, Z.xi, Z.internal, eta)[0])
        ratio = nu / w
        ratios.append(ratio)
        points.append({"species": ctx.table[Z.species].label, "speed": float(np.linalg.norm(Z.xi)),
                       "I": Z.internal, "nu": nu, "weight": w, "ratio": ratio})
        if not nu > 0:
            violations.append(f"ν ≤ 0 于 {ctx.table[Z.species].label} |ξ|={np.linalg.norm(Z.xi):g} I={Z.internal:g}")
        if progress_callback:
            progress_callback("frequency", i + 1, len(grid))
    nu_minus, nu_plus = float(min(ratios)), float(max(ratios))
    if not (0 < nu_minus <= nu_plus < math.inf):
        violations.append(f"夹逼常数不满足 0 < ν_− ≤ ν_+ < ∞: ν_−={nu_minus:g}, ν_+={nu_plus:g}")
    return FrequencyBoundFit(nu_minus, nu_plus, eta, violations, points)
