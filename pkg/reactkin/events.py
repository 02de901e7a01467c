#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
约化事件测度

碰撞积分中的 Dirac δ 从不离散化：化学事件在产物坐标 (ξ_*, I_*, r, R, σ)
或反应物壳层坐标 (ξ′, I′, I_*, σ, s) 上参数化，力学事件在 (Z, Z_*, r, R, σ)
上参数化。本模块给出这些坐标下的事件态与测度密度，以及对应的积分维度。

约定：sig_jac 是截面 × 门限 × 约化测度，不含 φ 因子；完整测度为
sig_jac·φ′φ*′（产物槽）。
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np
from scipy.special import beta as beta_fn

from .kinematics import (ChemBatch, ConstituentCase, MechBatch, dissociate_batch, mech_jacobian,
                         mech_scatter_batch, recombine_batch)
from .model import (CrossSectionModel, ReactionChannel, Species, SpeciesTable, delta_eps0, phi_values,
                    sigma_chem)
from .quadrature import (Dimension, QuadratureSpec, halfline_dim, internal_dim, sphere_dim, unit_dim,
                         velocity_dim)


@dataclass(frozen=True)
class ProductEvents:
    """产物槽事件：由产物态与 (r, R, σ) 解离得到的反应物对"""

    batch: ChemBatch
    sig_jac: np.ndarray
    phi_a: np.ndarray
    phi_b: np.ndarray
    phi_p: np.ndarray

    @property
    def weight(self) -> np.ndarray:
        """完整测度密度 sig_jac·φ′φ*′"""
        return self.sig_jac * self.phi_a * self.phi_b


@dataclass(frozen=True)
class ReactantEvents:
    """反应物槽事件：固定第一反应物，壳层坐标 (t, σ, s) 给出伙伴与产物"""

    batch: ChemBatch
    sig_jac: np.ndarray
    phi_a: np.ndarray
    phi_b: np.ndarray
    phi_p: np.ndarray


@dataclass(frozen=True)
class MechEvents:
    """力学事件及其约化核 Kmech"""

    batch: MechBatch
    kmech: np.ndarray
    phi: np.ndarray
    phi_s: np.ndarray
    phi_q: np.ndarray
    phi_sq: np.ndarray


def product_threshold(table: SpeciesTable, channel: ReactionChannel) -> float:
    """产物内能下限 max(K − ε_β0, Δε₀)：门限与 Ẽ ≥ 0 同时成立"""
    beta = table[channel.product]
    return max(channel.k_transition - beta.eps0, delta_eps0(table, channel))


def _safe_phi(species: Species, I: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """只在 mask 处求 φ，其余置 0；单原子恒为 1"""
    I = np.asarray(I, dtype=float)
    if not species.is_poly:
        return np.ones_like(I)
    return np.where(mask, phi_values(species, np.where(mask, I, 1.0)), 0.0)


def product_events(
    table: SpeciesTable,
    model: CrossSectionModel,
    channel: ReactionChannel,
    xi_p: np.ndarray,
    I_p: np.ndarray,
    r: np.ndarray,
    R: np.ndarray,
    sigma: np.ndarray,
) -> ProductEvents:
    """
    产物槽事件与测度

    sig_jac 按情形为 σ^β|g′|（mono/mono，测度 dσ）、σ^β|g′|Ẽ（单个多原子，dR dσ）、
    σ^β|g′|Ẽ²(1−R)（poly/poly，dr dR dσ）。
    """
    beta, gamma, zeta = channel.species(table)
    case = ConstituentCase.of(gamma, zeta)
    batch = dissociate_batch(table, channel, xi_p, I_p, r, R, sigma)
    gate = batch.gate & (batch.E_tilde > 0)
    E = np.where(gate, batch.E_tilde, 0.0)
    R = np.asarray(R, dtype=float) * np.ones_like(E)
    if case is ConstituentCase.MONO_MONO:
        measure = batch.g_norm
    elif case is ConstituentCase.POLY_POLY:
        measure = batch.g_norm * E * E * (1.0 - R)
    else:
        measure = batch.g_norm * E
    sig = np.asarray(sigma_chem(model, table, channel, batch.g_norm, 0.0,
                                np.where(gate, batch.I_p, 1.0))) * np.ones_like(E)
    sig_jac = np.where(gate, sig * measure, 0.0)
    inner = gate & (batch.I_a > 0 if gamma.is_poly else True) & (batch.I_b > 0 if zeta.is_poly else True)
    return ProductEvents(
        batch=batch,
        sig_jac=np.where(inner, sig_jac, 0.0),
        phi_a=_safe_phi(gamma, batch.I_a, inner),
        phi_b=_safe_phi(zeta, batch.I_b, inner),
        phi_p=_safe_phi(beta, batch.I_p, gate),
    )


def reactant_events(
    table: SpeciesTable,
    model: CrossSectionModel,
    channel: ReactionChannel,
    xi_a: np.ndarray,
    I_a: np.ndarray,
    t: np.ndarray,
    sigma: np.ndarray,
    s: np.ndarray,
) -> ReactantEvents:
    """
    反应物槽壳层事件

    固定 Z′ = (ξ′, I′)，产物内能 I_* = I_lo + t，I_lo = max(K − ε_β0, Δε₀ + I′)；
    伙伴内能 I*′ = s·Ẽ′（ζ 为多原子时），相对速度 |g′| 由能量守恒确定，
    ξ*′ = ξ′ − |g′|σ。测度密度 σ^β·门限·|g′|·Ẽ′^{[ζ 多原子]}，对应 dI_* dσ [ds]。
    """
    beta, gamma, zeta = channel.species(table)
    xi_a = np.atleast_2d(np.asarray(xi_a, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    t = np.asarray(t, dtype=float)
    n = max(len(xi_a), len(sigma), t.size)
    I_a_eff = np.asarray(I_a, dtype=float) * np.ones(n) * float(gamma.is_poly)
    d_eps = delta_eps0(table, channel)
    I_lo = np.maximum(channel.k_transition - beta.eps0, d_eps + I_a_eff)
    I_p = I_lo + t * np.ones(n)
    E_a = np.maximum(I_p - d_eps - I_a_eff, 0.0)
    I_b = np.asarray(s, dtype=float) * E_a if zeta.is_poly else np.zeros(n)
    kinetic = np.maximum(E_a - I_b, 0.0)
    g_norm = np.sqrt(2.0 * beta.m * kinetic / (gamma.m * zeta.m))
    xi_b = xi_a - sigma * g_norm[:, None]
    batch = recombine_batch(table, channel, xi_a, I_a_eff, xi_b, I_b)
    gate = batch.gate & (g_norm > 0)
    sig = np.asarray(sigma_chem(model, table, channel, g_norm, 0.0, I_p)) * np.ones(n)
    measure = g_norm * (E_a if zeta.is_poly else 1.0)
    inner = gate & (I_b > 0 if zeta.is_poly else True)
    return ReactantEvents(
        batch=batch,
        sig_jac=np.where(inner, sig * measure, 0.0),
        phi_a=_safe_phi(gamma, I_a_eff, np.ones(n, dtype=bool)),
        phi_b=_safe_phi(zeta, I_b, inner),
        phi_p=_safe_phi(beta, batch.I_p, gate),
    )


def mech_events(
    table: SpeciesTable,
    model: CrossSectionModel,
    alpha: int,
    beta: int,
    xi: np.ndarray,
    I: np.ndarray,
    xi_s: np.ndarray,
    I_s: np.ndarray,
    r: np.ndarray,
    R: np.ndarray,
    sigma: np.ndarray,
) -> MechEvents:
    """
    力学事件与约化核

    Kmech = C_αβ|g′|E^{−η/2}·J/(E^{δ_α/2}E^{δ_β/2})（后两项只对多原子成分出现），
    J 为 mech_jacobian。增益密度 Kmech·φφ_*·f′f*′，损失密度 Kmech·φ′φ*′·f f_*。
    """
    sa, sb = table[alpha], table[beta]
    batch = mech_scatter_batch(table, alpha, beta, xi, I, xi_s, I_s, r, R, sigma)
    E = batch.E
    ok = E > 0
    safe_E = np.where(ok, E, 1.0)
    R = np.asarray(R, dtype=float) * np.ones_like(E)
    J = np.asarray(mech_jacobian(table, alpha, beta, safe_E, R)) * np.ones_like(E)
    power = (sa.dof / 2.0 if sa.is_poly else 0.0) + (sb.dof / 2.0 if sb.is_poly else 0.0)
    kmech = (model.c(alpha, beta) * batch.g_post * np.power(safe_E, -model.eta / 2.0 - power) * J)
    post_ok = ok & (batch.I_q > 0 if sa.is_poly else True) & (batch.I_sq > 0 if sb.is_poly else True)
    pre_ok = ok & (batch.I > 0 if sa.is_poly else True) & (batch.I_s > 0 if sb.is_poly else True)
    valid = pre_ok & post_ok
    return MechEvents(
        batch=batch,
        kmech=np.where(valid, kmech, 0.0),
        phi=_safe_phi(sa, batch.I, valid),
        phi_s=_safe_phi(sb, batch.I_s, valid),
        phi_q=_safe_phi(sa, batch.I_q, valid),
        phi_sq=_safe_phi(sb, batch.I_sq, valid),
    )


def split_dims(quad: QuadratureSpec, case: ConstituentCase) -> List[Dimension]:
    """(r, R, σ) 中该情形实际用到的维度"""
    dims: List[Dimension] = []
    if case is ConstituentCase.POLY_POLY:
        dims.append(unit_dim(quad, "r"))
    if case.n_poly >= 1:
        dims.append(unit_dim(quad, "R"))
    dims.append(sphere_dim(quad, "sigma"))
    return dims


def split_args(nodes: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """补全未参与积分的 r、R（取 1/2 与 1）"""
    n = len(nodes["sigma"])
    return {
        "r": nodes.get("r", np.full(n, 0.5)),
        "R": nodes.get("R", np.ones(n)),
        "sigma": nodes["sigma"],
    }


def phase_dims(quad: QuadratureSpec, table: SpeciesTable, alpha: int, prefix: str,
               center: Sequence[float] = (0.0, 0.0, 0.0)) -> List[Dimension]:
    """组分 α 的相空间维度：速度，多原子时再加内能"""
    sp = table[alpha]
    dims = [velocity_dim(quad, f"{prefix}xi", sp.m, center)]
    if sp.is_poly:
        dims.append(internal_dim(quad, f"{prefix}I", sp.dof / 2.0))
    return dims


def phase_args(nodes: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    xi = nodes[f"{prefix}xi"]
    return {"xi": xi, "I": nodes.get(f"{prefix}I", np.zeros(len(xi)))}


def product_dims(quad: QuadratureSpec, table: SpeciesTable, channel: ReactionChannel,
                 center: Sequence[float] = (0.0, 0.0, 0.0)) -> List[Dimension]:
    """产物槽外层维度 (ξ_*, I_*)，I_* 从 product_threshold 起"""
    return [velocity_dim(quad, "xi_p", table[channel.product].m, center),
            halfline_dim(quad, "I_p", product_threshold(table, channel))]


def reactant_dims(quad: QuadratureSpec, table: SpeciesTable, channel: ReactionChannel) -> List[Dimension]:
    """反应物槽内层维度 (t, σ[, s])"""
    dims = [halfline_dim(quad, "t"), sphere_dim(quad, "sigma")]
    if table[channel.reactant_b].is_poly:
        dims.append(unit_dim(quad, "s"))
    return dims


def reactant_args(nodes: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    n = len(nodes["t"])
    return {"t": nodes["t"], "sigma": nodes["sigma"], "s": nodes.get("s", np.zeros(n))}


def product_frequency(
    table: SpeciesTable,
    model: CrossSectionModel,
    channel: ReactionChannel,
    I: np.ndarray,
) -> np.ndarray:
    """
    产物槽损失频率的闭式

    ν(I) = 4πC E_β^{−η/2}·门限·√(2m_βẼ/(m_γm_ζ))·(Ẽ/I)^p·B，
    mono/mono: p = 0, B = 1；单个多原子（φ 指数 b）: p = b+1, B = B(3/2, b+1)；
    poly/poly（指数 a, b）: p = a+b+2, B = B(a+1, b+1)·B(3/2, a+b+2)。
    与速度无关。
    """
    beta, gamma, zeta = channel.species(table)
    case = ConstituentCase.of(gamma, zeta)
    I = np.asarray(I, dtype=float)
    d_eps = delta_eps0(table, channel)
    E_beta = I + beta.eps0
    gate = (E_beta >= channel.k_transition) & (I > d_eps)
    safe_I = np.where(gate, I, d_eps + 1.0)
    E_tilde = safe_I - d_eps
    g_norm = np.sqrt(2.0 * beta.m * E_tilde / (gamma.m * zeta.m))
    if case is ConstituentCase.MONO_MONO:
        p, factor = 0.0, 1.0
    elif case is ConstituentCase.POLY_POLY:
        a, b = gamma.phi_exponent, zeta.phi_exponent
        p = a + b + 2.0
        factor = float(beta_fn(a + 1.0, b + 1.0) * beta_fn(1.5, a + b + 2.0))
    else:
        b = gamma.phi_exponent if gamma.is_poly else zeta.phi_exponent
        p = b + 1.0
        factor = float(beta_fn(1.5, b + 1.0))
    value = (4.0 * math.pi * channel.c_chem * np.power(np.where(gate, E_beta, 1.0), -model.eta / 2.0)
             * g_norm * np.power(E_tilde / safe_I, p) * factor)
    value = np.where(gate, value, 0.0)
    return value if value.ndim else float(value)
