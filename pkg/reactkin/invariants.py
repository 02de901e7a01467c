#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
碰撞不变量

化学不变量空间 U = {u : u·(e_β − e_γ − e_ζ) = 0, 对所有通道}，
完整的碰撞不变量基 u_1..u_s̃, mξ_x, mξ_y, mξ_z, m|ξ|² + 2𝕀，
以及 𝔥 中到 ker L = span{√M·生成元} 的正交投影。
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Sequence

import numpy as np
from scipy import linalg

from .equilibrium import DistributionField, maxwellian_values, phase_grid
from .events import phase_args, phase_dims
from .exceptions import NumericalError, UsageError
from .kinematics import sample_chem_events, sample_mech_events
from .model import ReactionChannel, SpeciesTable
from .quadrature import Estimate, QuadratureSpec, integrate_dims, stream_generator

if TYPE_CHECKING:
    from .linearized import LinearizedContext

logger = logging.getLogger(__name__)

STREAM_PROJECTION = 41
STREAM_CHEM_DEFECT = 42
STREAM_MECH_DEFECT = 43

# 零空间的奇异值阈值（相对最大奇异值）
NULL_RCOND = 1e-12
# 投影 Gram 矩阵允许的最大条件数
MAX_GRAM_CONDITION = 1e12


def constraint_matrix(s: int, channels: Sequence[ReactionChannel]) -> np.ndarray:
    """每个通道一行 e_β − e_γ − e_ζ；γ = ζ 时自然得到 e_β − 2e_γ"""
    rows = np.zeros((len(channels), s))
    for k, ch in enumerate(channels):
        for alpha in (ch.product, ch.reactant_a, ch.reactant_b):
            if not 1 <= alpha <= s:
                raise UsageError(f"通道 {ch.label} 引用了不存在的组分 {alpha}")
        rows[k, ch.product - 1] += 1.0
        rows[k, ch.reactant_a - 1] -= 1.0
        rows[k, ch.reactant_b - 1] -= 1.0
    return rows


def chemical_invariant_space(s: int, channels: Sequence[ReactionChannel],
                             rcond: float = NULL_RCOND) -> np.ndarray:
    """
    化学不变量空间 U 的正交基

    Args:
        s (int): 组分数
        channels (Sequence[ReactionChannel]): 反应通道

    Returns:
        np.ndarray: 形状 (s, s̃) 的矩阵，列为 U 的正交归一基
    """
    if s < 1:
        raise UsageError("组分数必须为正")
    if not channels:
        return np.eye(s)
    U = linalg.null_space(constraint_matrix(s, channels), rcond=rcond)
    logger.debug("化学不变量空间: s=%d, 通道数=%d, dim U=%d", s, len(channels), U.shape[1])
    return U


@dataclass(frozen=True)
class InvariantBasis:
    """
    碰撞不变量生成元

    Args:
        table (SpeciesTable): 组分表
        u_vectors (np.ndarray): 形状 (s, s̃)，U 的基
    """

    table: SpeciesTable
    u_vectors: np.ndarray

    def __post_init__(self) -> None:
        U = np.asarray(self.u_vectors, dtype=float).reshape(len(self.table), -1)
        U.setflags(write=False)
        object.__setattr__(self, "u_vectors", U)

    @property
    def s_tilde(self) -> int:
        return int(self.u_vectors.shape[1])

    @property
    def dim(self) -> int:
        return self.s_tilde + 4

    @property
    def names(self) -> List[str]:
        return ([f"u_{i + 1}" for i in range(self.s_tilde)]
                + ["m_xi_x", "m_xi_y", "m_xi_z", "energy"])

    def evaluate(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        """全部生成元在组分 α 的点上的值，形状 (N, s̃ + 4)"""
        sp = self.table[alpha]
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        n = len(xi)
        I = np.asarray(I, dtype=float) * np.ones(n)
        chem = np.broadcast_to(self.u_vectors[alpha - 1], (n, self.s_tilde))
        momentum = sp.m * xi
        internal = sp.eps0 + (I if sp.is_poly else 0.0)
        energy = sp.m * np.sum(xi * xi, axis=-1) + 2.0 * internal
        return np.column_stack([chem, momentum, energy])

    def generator(self, i: int):
        """第 i 个生成元的求值器 ψ(α, ξ, I)"""
        if not 0 <= i < self.dim:
            raise UsageError(f"生成元编号越界: {i}")

        def psi(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
            return self.evaluate(alpha, xi, I)[:, i]

        return psi


def collision_invariant_basis(table: SpeciesTable, U: np.ndarray) -> InvariantBasis:
    """由 U 的基构造 s̃ + 4 个碰撞不变量生成元"""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] != len(table):
        raise UsageError(f"U 的形状 {U.shape} 与组分数 {len(table)} 不符")
    return InvariantBasis(table, U)


def chemical_event_defect(
    table: SpeciesTable,
    channels: Sequence[ReactionChannel],
    basis: InvariantBasis,
    n_events: int = 1000,
    seed: int = 0,
    scale: float = 1.0,
) -> float:
    """被接受的随机化学事件上 max|ψ_β* − ψ′_γ − ψ′_ζ*|，对所有生成元取最大"""
    worst = 0.0
    for k, channel in enumerate(channels):
        for o, ordered in enumerate(channel.orderings()):
            rng = stream_generator(seed, (STREAM_CHEM_DEFECT, k, o), 0)
            b = sample_chem_events(table, ordered, rng, n_events, scale)
            ok = b.gate
            if not np.any(ok):
                continue
            defect = (basis.evaluate(ordered.product, b.xi_p, b.I_p)
                      - basis.evaluate(ordered.reactant_a, b.xi_a, b.I_a)
                      - basis.evaluate(ordered.reactant_b, b.xi_b, b.I_b))[ok]
            worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def mechanical_event_defect(
    table: SpeciesTable,
    basis: InvariantBasis,
    n_events: int = 1000,
    seed: int = 0,
    scale: float = 1.0,
) -> float:
    """随机力学事件上 max|ψ + ψ_* − ψ′ − ψ*′|"""
    worst = 0.0
    for sa in table:
        for sb in table:
            rng = stream_generator(seed, (STREAM_MECH_DEFECT, sa.index, sb.index), 0)
            b = sample_mech_events(table, sa.index, sb.index, rng, n_events, scale)
            ok = b.E > 0
            if not np.any(ok):
                continue
            defect = (basis.evaluate(sa.index, b.xi, b.I) + basis.evaluate(sb.index, b.xi_s, b.I_s)
                      - basis.evaluate(sa.index, b.xi_q, b.I_q)
                      - basis.evaluate(sb.index, b.xi_sq, b.I_sq))[ok]
            worst = max(worst, float(np.max(np.abs(defect))))
    return worst


@dataclass(frozen=True)
class KernelProjection:
    """h 在 ker L 上的正交投影：kernel_part = Σ c_i √M ψ_i，residual = h − kernel_part"""

    coefficients: np.ndarray
    std_error: np.ndarray
    kernel_part: DistributionField
    residual: DistributionField
    gram_condition: float

    def to_dict(self) -> Dict[str, object]:
        return {"coefficients": self.coefficients.tolist(), "std_error": self.std_error.tolist(),
                "gram_condition": self.gram_condition}


def kernel_gram(ctx: "LinearizedContext", quad: QuadratureSpec) -> np.ndarray:
    """G_ij = Σ_α ∫ M_α ψ_i ψ_j dZ，用对麦克斯韦矩精确的张量规则"""
    grid_quad = quad.with_mode("deterministic").with_scale(ctx.kB * ctx.background.T)
    grid = phase_grid(ctx.table, grid_quad, ctx.background.u)
    basis = ctx.invariants
    G = np.zeros((basis.dim, basis.dim))
    for sp in ctx.table:
        xi, I, w = grid.xi[sp.index], grid.I[sp.index], grid.weights[sp.index]
        psi = basis.evaluate(sp.index, xi, I)
        M = maxwellian_values(ctx.background, ctx.table, sp.index, xi, I, ctx.kB)
        G += (psi * (w * M)[:, None]).T @ psi
    return G


def project_onto_kernel(ctx: "LinearizedContext", h: DistributionField,
                        quad: QuadratureSpec) -> KernelProjection:
    """
    𝔥 中到 span{√M·生成元} 的正交投影

    Args:
        ctx (LinearizedContext): 线性化背景
        h (DistributionField): 待投影的扰动
        quad (QuadratureSpec): 计算 ⟨h, √Mψ_i⟩ 的求积配置

    Returns:
        KernelProjection: 系数与残差场

    Raises:
        NumericalError: Gram 矩阵病态
    """
    table, params, kB, basis = ctx.table, ctx.background, ctx.kB, ctx.invariants
    G = kernel_gram(ctx, quad)
    condition = float(np.linalg.cond(G))
    if not np.isfinite(condition) or condition > MAX_GRAM_CONDITION:
        raise NumericalError(f"不变量 Gram 矩阵病态: cond = {condition:.3e}")
    if condition > 1e8:
        logger.warning("不变量 Gram 矩阵条件数偏大: %.3e", condition)

    scaled = quad.with_scale(kB * params.T)
    total = Estimate(np.zeros(basis.dim), np.zeros(basis.dim), 0)
    for sp in table:
        alpha = sp.index

        def integrand(nodes: Dict[str, np.ndarray], alpha: int = alpha) -> np.ndarray:
            z = phase_args(nodes, "")
            sqrt_m = np.sqrt(maxwellian_values(params, table, alpha, z["xi"], z["I"], kB))
            return (h(alpha, z["xi"], z["I"]) * sqrt_m)[:, None] * basis.evaluate(alpha, z["xi"], z["I"])

        total = total + integrate_dims(scaled, phase_dims(scaled, table, alpha, "", params.u), integrand,
                                       stream=(STREAM_PROJECTION, alpha))
    G_inv = linalg.inv(G)
    coefficients = G_inv @ np.asarray(total.value, dtype=float)
    std_error = np.sqrt(np.square(G_inv) @ np.square(np.asarray(total.std_error, dtype=float)))

    def kernel_eval(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        sqrt_m = np.sqrt(maxwellian_values(params, table, alpha, xi, I, kB))
        return sqrt_m * (basis.evaluate(alpha, xi, I) @ coefficients)

    kernel_part = DistributionField(table, kernel_eval, "kernel_part")
    residual = h.plus(kernel_part, -1.0)
    return KernelProjection(coefficients, std_error, kernel_part, residual, condition)
