#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
组分与反应通道数据模型

提供 Species / SpeciesTable / ReactionChannel / CrossSectionModel，
结构约束校验（质量守恒、自由度关系、过渡态能量链），幂律简并权重 φ，
以及具体截面族：化学截面（硬球型，带过渡态门限）与力学截面。
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from numbers import Rational
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ModelDomainError, UsageError

Mass = Union[float, int, Fraction]
ArrayLike = Union[float, np.ndarray]

MASS_RTOL = 1e-12


class SpeciesKind(str, Enum):
    """组分类型：单原子或多原子"""

    MONO = "mono"
    POLY = "poly"


@dataclass(frozen=True)
class Species:
    """
    单个组分

    Args:
        index (int): 从 1 开始的组分编号
        mass (float | Fraction): 质量，可为精确有理数
        dof (float): 内部自由度 δ，单原子恰为 2
        eps0 (float): 生成能 ε_α0
        kind (SpeciesKind): mono / poly
        name (str): 显示名
    """

    index: int
    mass: Mass
    dof: float
    eps0: float
    kind: SpeciesKind
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SpeciesKind(self.kind))
        if not float(self.mass) > 0:
            raise ModelDomainError(f"组分 {self.label} 的质量必须为正")
        if not self.eps0 > 0:
            raise ModelDomainError(f"组分 {self.label} 的生成能必须为正")
        if self.kind is SpeciesKind.MONO and self.dof != 2:
            raise ModelDomainError(f"单原子组分 {self.label} 的自由度必须为 2")
        if self.kind is SpeciesKind.POLY and not self.dof >= 2:
            raise ModelDomainError(f"多原子组分 {self.label} 的自由度必须不小于 2")

    @property
    def label(self) -> str:
        return self.name or str(self.index)

    @property
    def m(self) -> float:
        return float(self.mass)

    @property
    def is_poly(self) -> bool:
        return self.kind is SpeciesKind.POLY

    @property
    def phi_exponent(self) -> float:
        """φ(I) = I^{δ/2-1} 的指数"""
        return self.dof / 2.0 - 1.0 if self.is_poly else 0.0


@dataclass(frozen=True)
class SpeciesTable:
    """组分表，单原子组分排在前面，编号 1..s 连续"""

    species: Tuple[Species, ...]

    def __post_init__(self) -> None:
        species = tuple(self.species)
        object.__setattr__(self, "species", species)
        if not species:
            raise ModelDomainError("组分表不能为空")
        seen_poly = False
        for position, sp in enumerate(species, start=1):
            if sp.index != position:
                raise ModelDomainError(f"组分编号必须依次为 1..s，位置 {position} 处为 {sp.index}")
            if sp.is_poly:
                seen_poly = True
            elif seen_poly:
                raise ModelDomainError("单原子组分必须排在多原子组分之前")

    def __len__(self) -> int:
        return len(self.species)

    def __iter__(self) -> Iterator[Species]:
        return iter(self.species)

    def __getitem__(self, alpha: int) -> Species:
        if not 1 <= alpha <= len(self.species):
            raise UsageError(f"组分编号越界: {alpha}")
        return self.species[alpha - 1]

    def has(self, alpha: int) -> bool:
        return 1 <= alpha <= len(self.species)

    def index_of(self, ref: Union[int, str]) -> int:
        """按名称或编号查找组分，返回 1 起始编号"""
        if isinstance(ref, int) and not isinstance(ref, bool):
            if not self.has(ref):
                raise UsageError(f"组分编号越界: {ref}")
            return ref
        for sp in self.species:
            if sp.name == ref:
                return sp.index
        raise UsageError(f"未知组分: {ref}")

    @property
    def indices(self) -> List[int]:
        return [sp.index for sp in self.species]

    @property
    def n_mono(self) -> int:
        return sum(1 for sp in self.species if not sp.is_poly)

    @property
    def masses(self) -> np.ndarray:
        return np.array([sp.m for sp in self.species])

    @property
    def eps0(self) -> np.ndarray:
        return np.array([sp.eps0 for sp in self.species])


@dataclass(frozen=True)
class ReactionChannel:
    """
    解离/复合通道 β ⇌ γ + ζ

    Args:
        product (int): 产物（多原子）编号 β
        reactant_a (int): 反应物 γ
        reactant_b (int): 反应物 ζ
        k_transition (float): 过渡态能量 K
        c_chem (float): 截面常数 C
        name (str): 通道名
    """

    product: int
    reactant_a: int
    reactant_b: int
    k_transition: float
    c_chem: float = 1.0
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or f"{self.product}<->{self.reactant_a}+{self.reactant_b}"

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.product, self.reactant_a, self.reactant_b)

    @property
    def symmetric(self) -> bool:
        return self.reactant_a == self.reactant_b

    def swapped(self) -> "ReactionChannel":
        return ReactionChannel(self.product, self.reactant_b, self.reactant_a,
                               self.k_transition, self.c_chem, self.name)

    def orderings(self) -> Tuple["ReactionChannel", ...]:
        """通道对应的有序三元组：γ ≠ ζ 时包含交换后的排列"""
        if self.symmetric:
            return (self,)
        return (self, self.swapped())

    def stoichiometry(self, s: int) -> np.ndarray:
        """约束行 e_β − e_γ − e_ζ（γ = ζ 时为 e_β − 2e_γ）"""
        row = np.zeros(s)
        row[self.product - 1] += 1.0
        row[self.reactant_a - 1] -= 1.0
        row[self.reactant_b - 1] -= 1.0
        return row

    def species(self, table: SpeciesTable) -> Tuple[Species, Species, Species]:
        return table[self.product], table[self.reactant_a], table[self.reactant_b]


def delta_eps0(table: SpeciesTable, channel: ReactionChannel) -> float:
    """反应热 Δε₀ = ε_γ0 + ε_ζ0 − ε_β0"""
    beta, gamma, zeta = channel.species(table)
    return gamma.eps0 + zeta.eps0 - beta.eps0


@dataclass(frozen=True)
class CrossSectionModel:
    """
    截面模型参数

    Args:
        eta (float): 共享指数 η ∈ [0,1)
        c_mech (Sequence[Sequence[float]]): 对称的力学截面常数矩阵 C_αβ
        kB (float): 玻尔兹曼常数，默认 1
    """

    eta: float = 0.0
    c_mech: Tuple[Tuple[float, ...], ...] = ((1.0,),)
    kB: float = 1.0

    def __post_init__(self) -> None:
        matrix = np.asarray(self.c_mech, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ModelDomainError("c_mech 必须是方阵")
        if not np.allclose(matrix, matrix.T, rtol=0.0, atol=0.0):
            raise ModelDomainError("c_mech 必须对称")
        if np.any(matrix < 0):
            raise ModelDomainError("c_mech 不能为负")
        if not 0.0 <= self.eta < 1.0:
            raise ModelDomainError("η 必须在 [0,1) 内")
        if not self.kB > 0:
            raise ModelDomainError("kB 必须为正")
        object.__setattr__(self, "c_mech", tuple(tuple(float(v) for v in row) for row in matrix))

    @classmethod
    def uniform(cls, s: int, c: float = 1.0, eta: float = 0.0, kB: float = 1.0) -> "CrossSectionModel":
        return cls(eta=eta, c_mech=tuple(tuple(c for _ in range(s)) for _ in range(s)), kB=kB)

    @property
    def size(self) -> int:
        return len(self.c_mech)

    def c(self, alpha: int, beta: int) -> float:
        return self.c_mech[alpha - 1][beta - 1]


@dataclass(frozen=True)
class ValidationIssue:
    """单条约束违反记录"""

    code: str
    message: str
    channel: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "channel": self.channel}


@dataclass(frozen=True)
class ValidationReport:
    """校验报告，issues 为空当且仅当所有约束成立"""

    issues: Tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> List[str]:
        return [issue.code for issue in self.issues]

    def to_dict(self) -> Dict[str, Any]:
        return {"ok": self.ok, "issues": [issue.to_dict() for issue in self.issues]}


def _masses_balance(beta: Species, gamma: Species, zeta: Species) -> bool:
    exact = all(isinstance(sp.mass, Rational) for sp in (beta, gamma, zeta))
    if exact:
        return Fraction(gamma.mass) + Fraction(zeta.mass) == Fraction(beta.mass)
    return abs(gamma.m + zeta.m - beta.m) <= MASS_RTOL * beta.m


def validate(table: SpeciesTable, channels: Sequence[ReactionChannel]) -> ValidationReport:
    """
    校验反应通道的结构约束

    违反项作为数据返回，不抛异常。

    Args:
        table (SpeciesTable): 组分表
        channels (Sequence[ReactionChannel]): 反应通道

    Returns:
        ValidationReport: 每个违反项带通道标识
    """
    issues: List[ValidationIssue] = []
    for channel in channels:
        label = channel.label
        missing = [i for i in channel.key if not table.has(i)]
        if missing:
            issues.append(ValidationIssue("unknown_species", f"引用了不存在的组分 {missing}", label))
            continue
        beta, gamma, zeta = channel.species(table)
        if not beta.is_poly:
            issues.append(ValidationIssue("product_not_poly", "产物必须是多原子组分", label))
        if not _masses_balance(beta, gamma, zeta):
            issues.append(ValidationIssue(
                "mass_mismatch", f"mass mismatch: m_γ + m_ζ = {gamma.m + zeta.m} ≠ m_β = {beta.m}", label))
        if gamma.dof + zeta.dof < beta.dof + 1:
            issues.append(ValidationIssue(
                "dof_relation", f"自由度关系不成立: {gamma.dof} + {zeta.dof} < {beta.dof} + 1", label))
        if channel.k_transition < gamma.eps0 + zeta.eps0:
            issues.append(ValidationIssue(
                "transition_energy_low",
                f"transition energy below ε_γ0+ε_ζ0: K = {channel.k_transition} < {gamma.eps0 + zeta.eps0}",
                label))
        if not gamma.eps0 + zeta.eps0 > beta.eps0:
            issues.append(ValidationIssue(
                "formation_order", "反应热 Δε₀ = ε_γ0 + ε_ζ0 − ε_β0 必须为正", label))
        if not channel.c_chem > 0:
            issues.append(ValidationIssue("nonpositive_rate", "截面常数 C 必须为正", label))
    return ValidationReport(tuple(issues))


def phi_values(species: Species, I: ArrayLike) -> ArrayLike:
    """φ 的宽松版本：允许 I = 0（求积端点），单原子恒为 1"""
    if not species.is_poly:
        return np.ones_like(np.asarray(I, dtype=float)) if np.ndim(I) else 1.0
    I = np.asarray(I, dtype=float)
    a = species.phi_exponent
    if a == 0.0:
        result = np.ones_like(I)
    else:
        result = np.power(np.maximum(I, 0.0), a)
    return result if result.ndim else float(result)


def log_phi_values(species: Species, I: ArrayLike) -> ArrayLike:
    """log φ，I = 0 且指数为正时为 -inf"""
    if not species.is_poly or species.phi_exponent == 0.0:
        return np.zeros_like(np.asarray(I, dtype=float)) if np.ndim(I) else 0.0
    with np.errstate(divide="ignore"):
        return species.phi_exponent * np.log(np.asarray(I, dtype=float))


def phi(table: SpeciesTable, alpha: int, I: ArrayLike = 0.0) -> ArrayLike:
    """
    简并权重 φ_α(I) = I^{δ/2−1}

    Args:
        table (SpeciesTable): 组分表
        alpha (int): 组分编号
        I (float | ndarray): 内能，单原子时忽略

    Returns:
        φ 值，单原子恒为 1

    Raises:
        ModelDomainError: 多原子组分且 I ≤ 0
    """
    species = table[alpha]
    if species.is_poly and np.any(np.asarray(I) <= 0):
        raise ModelDomainError(f"多原子组分 {species.label} 要求 I > 0")
    return phi_values(species, I)


def _energy_power(species: Species, energy: ArrayLike) -> ArrayLike:
    """𝓔^{δ/2}：多原子组分取能量的幂，单原子为 1"""
    if not species.is_poly:
        return 1.0
    return np.power(energy, species.dof / 2.0)


def sigma_chem(
    model: CrossSectionModel,
    table: SpeciesTable,
    channel: ReactionChannel,
    g_prime: ArrayLike,
    cos_theta: ArrayLike,
    I_star: ArrayLike,
) -> ArrayLike:
    """
    复合截面 σ^β_{γζ}

    C E_β^{−η/2} φ_β(I_*) / (𝓔^{δ_γ/2} 𝓔*^{δ_ζ/2})，多原子成分的 𝓔 取 I_*，
    门限 E_β = I_* + ε_β0 < K 时为 0。模型各向同性，与 g′、cosθ 无关。
    """
    beta, gamma, zeta = channel.species(table)
    I_arr = np.asarray(I_star, dtype=float)
    E_beta = I_arr + beta.eps0
    gate = (E_beta >= channel.k_transition) & (I_arr > 0)
    safe_I = np.where(gate, I_arr, 1.0)
    safe_E = np.where(gate, E_beta, 1.0)
    value = (channel.c_chem * np.power(safe_E, -model.eta / 2.0) * phi_values(beta, safe_I)
             / (_energy_power(gamma, safe_I) * _energy_power(zeta, safe_I)))
    value = np.where(gate, value, 0.0)
    return value if value.ndim else float(value)


def sigma_dissociation(
    model: CrossSectionModel,
    table: SpeciesTable,
    channel: ReactionChannel,
    g_prime: ArrayLike,
    cos_theta: ArrayLike,
    I_prime: ArrayLike,
    I_star_prime: ArrayLike,
    I_star: ArrayLike,
) -> ArrayLike:
    """解离截面，由微观可逆性 φ_β(I_*)σ_β^{γζ} = φ_γ(I′)φ_ζ(I*′)σ^β_{γζ} 定义"""
    beta, gamma, zeta = channel.species(table)
    forward = sigma_chem(model, table, channel, g_prime, cos_theta, I_star)
    safe_I = np.where(np.asarray(I_star) > 0, I_star, 1.0)
    value = (np.asarray(forward) * phi_values(gamma, I_prime) * phi_values(zeta, I_star_prime)
             / phi_values(beta, safe_I))
    return value if np.ndim(value) else float(value)


def mech_energy_gap(table: SpeciesTable, alpha: int, beta: int,
                    I: ArrayLike, I_star: ArrayLike, I_prime: ArrayLike,
                    I_star_prime: ArrayLike) -> ArrayLike:
    """Δ̃I = (m_α+m_β)/(m_α m_β)·((I′+I*′) − (I+I_*))，只计多原子成分"""
    sa, sb = table[alpha], table[beta]
    pa, pb = float(sa.is_poly), float(sb.is_poly)
    delta = (np.asarray(I_prime) - np.asarray(I)) * pa + (np.asarray(I_star_prime) - np.asarray(I_star)) * pb
    return (sa.m + sb.m) / (sa.m * sb.m) * delta


def sigma_mech(
    model: CrossSectionModel,
    table: SpeciesTable,
    alpha: int,
    beta: int,
    g: ArrayLike,
    I: ArrayLike = 0.0,
    I_star: ArrayLike = 0.0,
    I_prime: ArrayLike = 0.0,
    I_star_prime: ArrayLike = 0.0,
    cos_theta: ArrayLike = 0.0,
) -> ArrayLike:
    """
    力学（散射）截面

    C_αβ √(|g|²−2Δ̃I)/(|g| E_αβ^{η/2}) · φ_α(I′)φ_β(I*′)/(𝓔^{δ_α/2}𝓔*^{δ_β/2})，
    多原子成分的 𝓔 取质心系总能量 E_αβ；|g|² ≤ 2Δ̃I 时为 0。
    """
    sa, sb = table[alpha], table[beta]
    mu = sa.m * sb.m / (sa.m + sb.m)
    g = np.asarray(g, dtype=float)
    pa, pb = float(sa.is_poly), float(sb.is_poly)
    disc = g * g - 2.0 * mech_energy_gap(table, alpha, beta, I, I_star, I_prime, I_star_prime)
    ok = (disc > 0) & (g > 0)
    safe_g = np.where(ok, g, 1.0)
    energy = 0.5 * mu * g * g + np.asarray(I) * pa + np.asarray(I_star) * pb
    safe_E = np.where(ok & (energy > 0), energy, 1.0)
    value = (model.c(alpha, beta) * np.sqrt(np.where(ok, disc, 0.0))
             / (safe_g * np.power(safe_E, model.eta / 2.0))
             * phi_values(sa, I_prime) * phi_values(sb, I_star_prime)
             / (_energy_power(sa, safe_E) * _energy_power(sb, safe_E)))
    value = np.where(ok, value, 0.0)
    return value if value.ndim else float(value)


def sigma_mech_reverse_defect(
    model: CrossSectionModel,
    table: SpeciesTable,
    alpha: int,
    beta: int,
    g: ArrayLike,
    I: ArrayLike,
    I_star: ArrayLike,
    I_prime: ArrayLike,
    I_star_prime: ArrayLike,
) -> ArrayLike:
    """
    力学微观可逆性残差

    φ_α(I)φ_β(I_*)|g|²σ(|g|,I,I_*→I′,I*′) − φ_α(I′)φ_β(I*′)|g′|²σ(|g′|,I′,I*′→I,I_*)
    """
    sa, sb = table[alpha], table[beta]
    g = np.asarray(g, dtype=float)
    gap = mech_energy_gap(table, alpha, beta, I, I_star, I_prime, I_star_prime)
    g_post = np.sqrt(np.maximum(g * g - 2.0 * gap, 0.0))
    forward = sigma_mech(model, table, alpha, beta, g, I, I_star, I_prime, I_star_prime)
    backward = sigma_mech(model, table, alpha, beta, g_post, I_prime, I_star_prime, I, I_star)
    lhs = phi_values(sa, I) * phi_values(sb, I_star) * g * g * forward
    rhs = phi_values(sa, I_prime) * phi_values(sb, I_star_prime) * g_post * g_post * backward
    return lhs - rhs


@dataclass(frozen=True)
class BoundCheck:
    """截面夹逼检查：c_minus ≤ σ/σ_ref ≤ c_plus"""

    c_minus: float
    c_plus: float
    ok: bool
    n_samples: int

    def to_dict(self) -> Dict[str, Any]:
        return {"c_minus": self.c_minus, "c_plus": self.c_plus, "ok": self.ok,
                "n_samples": self.n_samples}


def _bound_from_ratios(ratio: np.ndarray, lower_required: bool = True) -> BoundCheck:
    ratio = np.asarray(ratio, dtype=float)
    if ratio.size == 0:
        return BoundCheck(math.nan, math.nan, False, 0)
    c_minus, c_plus = float(np.min(ratio)), float(np.max(ratio))
    finite = bool(np.all(np.isfinite(ratio)))
    ok = finite and c_plus < math.inf and c_minus <= c_plus and (c_minus > 0 or not lower_required)
    return BoundCheck(c_minus, c_plus, ok, int(ratio.size))


def chem_bound_ratio(
    sigma_fn: Callable[..., ArrayLike],
    model: CrossSectionModel,
    table: SpeciesTable,
    channel: ReactionChannel,
    g_prime: np.ndarray,
    cos_theta: np.ndarray,
    I_star: np.ndarray,
) -> BoundCheck:
    """
    化学截面夹逼谓词：σ 与参考族 E_β^{−η/2}φ_β/(𝓔𝓔*) 之比在门限内的上下确界

    Args:
        sigma_fn (Callable): 待检截面 sigma_fn(g′, cosθ, I_*)
        g_prime, cos_theta, I_star: 采样参数数组

    Returns:
        BoundCheck: ok 当且仅当 0 < c_minus ≤ c_plus < ∞
    """
    unit = ReactionChannel(channel.product, channel.reactant_a, channel.reactant_b,
                           channel.k_transition, 1.0, channel.name)
    reference = np.asarray(sigma_chem(model, table, unit, g_prime, cos_theta, I_star))
    inside = reference > 0
    value = np.asarray(sigma_fn(g_prime, cos_theta, I_star), dtype=float) * np.ones_like(reference)
    return _bound_from_ratios(value[inside] / reference[inside])


def mech_bound_ratio(
    sigma_fn: Callable[..., ArrayLike],
    model: CrossSectionModel,
    table: SpeciesTable,
    alpha: int,
    beta: int,
    g: np.ndarray,
    I: np.ndarray,
    I_star: np.ndarray,
    I_prime: np.ndarray,
    I_star_prime: np.ndarray,
) -> BoundCheck:
    """力学截面夹逼谓词：σ 与 C_αβ = 1 的参考族之比的上下确界"""
    unit = CrossSectionModel.uniform(len(table), 1.0, model.eta, model.kB)
    reference = np.asarray(sigma_mech(unit, table, alpha, beta, g, I, I_star, I_prime, I_star_prime))
    inside = reference > 0
    value = np.asarray(sigma_fn(g, I, I_star, I_prime, I_star_prime), dtype=float) * np.ones_like(reference)
    return _bound_from_ratios(value[inside] / reference[inside])


def chem_compact_bound(
    model: CrossSectionModel,
    table: SpeciesTable,
    channel: ReactionChannel,
    g_prime: np.ndarray,
    I_star: np.ndarray,
    chi: float,
) -> BoundCheck:
    """
    化学截面的紧性界：σ ≤ C(1+|g′|^{χ−1})φ_β(I_*)/(𝓔𝓔*)，χ ∈ (0,1)

    返回比值 σ(𝓔𝓔*)/((1+|g′|^{χ−1})φ_β) 的范围，上界有限即满足。
    """
    if not 0 < chi < 1:
        raise UsageError("χ 必须在 (0,1) 内")
    beta, gamma, zeta = channel.species(table)
    g_prime = np.asarray(g_prime, dtype=float)
    I_star = np.asarray(I_star, dtype=float)
    sigma = np.asarray(sigma_chem(model, table, channel, g_prime, 0.0, I_star))
    inside = (sigma > 0) & (g_prime > 0)
    I_in = I_star[inside]
    envelope = ((1.0 + np.power(g_prime[inside], chi - 1.0)) * phi_values(beta, I_in)
                / (_energy_power(gamma, I_in) * _energy_power(zeta, I_in)))
    return _bound_from_ratios(sigma[inside] / envelope, lower_required=False)


def mech_compact_bound(
    model: CrossSectionModel,
    table: SpeciesTable,
    alpha: int,
    beta: int,
    g: np.ndarray,
    I: np.ndarray,
    I_star: np.ndarray,
    I_prime: np.ndarray,
    I_star_prime: np.ndarray,
    tau: float,
) -> BoundCheck:
    """
    力学截面的紧性界：σ ≤ C(Ψ + Ψ^{τ/2})Υ/|g|²，Ψ = |g|√(|g|²−2Δ̃I)，τ ∈ (0,1)
    """
    if not 0 < tau < 1:
        raise UsageError("τ 必须在 (0,1) 内")
    sa, sb = table[alpha], table[beta]
    mu = sa.m * sb.m / (sa.m + sb.m)
    g = np.asarray(g, dtype=float)
    sigma = np.asarray(sigma_mech(model, table, alpha, beta, g, I, I_star, I_prime, I_star_prime))
    disc = g * g - 2.0 * mech_energy_gap(table, alpha, beta, I, I_star, I_prime, I_star_prime)
    inside = (sigma > 0) & (disc > 0) & (g > 0)
    psi = g[inside] * np.sqrt(disc[inside])
    energy = (0.5 * mu * g * g + np.asarray(I) * float(sa.is_poly)
              + np.asarray(I_star) * float(sb.is_poly)) * np.ones_like(g)
    e_in = energy[inside]
    upsilon = (phi_values(sa, np.asarray(I_prime) * np.ones_like(g))[inside]
               * phi_values(sb, np.asarray(I_star_prime) * np.ones_like(g))[inside]
               / (_energy_power(sa, e_in) * _energy_power(sb, e_in)))
    envelope = (psi + np.power(psi, tau / 2.0)) * upsilon / g[inside] ** 2
    return _bound_from_ratios(sigma[inside] / envelope, lower_required=False)
