#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
平衡态与熵泛函

麦克斯韦分布、分布场、矩、质量作用律与化学平衡求解、H 泛函及其
化学/力学耗散，另有松弛所需的能量记账与离解速率系数。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate as sp_integrate
from scipy.interpolate import BarycentricInterpolator
from scipy.special import gammaln

from .events import (mech_events, phase_args, phase_dims, product_dims, product_events, product_frequency,
                     product_threshold, split_args, split_dims)
from .exceptions import ModelDomainError, SolverError, UsageError
from .kinematics import ConstituentCase, Zstate, dissociate_batch, sample_params
from .model import (CrossSectionModel, ReactionChannel, Species, SpeciesTable, delta_eps0,
                    log_phi_values)
from .quadrature import (Estimate, QuadratureSpec, hermite_rule, integrate_dims, internal_dim,
                         velocity_dim, zero_estimate)

logger = logging.getLogger(__name__)

# 蒙特卡罗流标识
STREAM_MOMENTS = 1
STREAM_ENTROPY = 2
STREAM_W_CHEM = 3
STREAM_W_MECH = 4

FieldEvaluator = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MaxwellianParams:
    """
    麦克斯韦参数

    Args:
        n: 各组分数密度（按组分编号顺序）
        u: 宏观速度
        T (float): 温度
    """

    n: Tuple[float, ...]
    u: np.ndarray = field(default_factory=lambda: np.zeros(3))
    T: float = 1.0

    def __post_init__(self) -> None:
        n = tuple(float(x) for x in self.n)
        if not n or any(not x > 0 for x in n):
            raise ModelDomainError(f"数密度必须全部为正: {n}")
        if not self.T > 0:
            raise ModelDomainError(f"温度必须为正: {self.T}")
        u = np.array(self.u, dtype=float).reshape(3)
        u.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "T", float(self.T))

    @property
    def densities(self) -> np.ndarray:
        return np.asarray(self.n)

    def density(self, alpha: int) -> float:
        return self.n[alpha - 1]

    def with_densities(self, n: Sequence[float]) -> "MaxwellianParams":
        return MaxwellianParams(tuple(n), self.u, self.T)

    def with_temperature(self, T: float) -> "MaxwellianParams":
        return MaxwellianParams(self.n, self.u, T)

    def to_dict(self) -> Dict[str, Any]:
        return {"n": list(self.n), "u": self.u.tolist(), "T": self.T}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MaxwellianParams":
        return cls(tuple(data["n"]), np.asarray(data.get("u", (0.0, 0.0, 0.0))), data.get("T", 1.0))


def internal_normalization(species: Species, T: float, kB: float = 1.0) -> float:
    """内能配分因子：多原子为 q_α，单原子按约定为 1"""
    if not species.is_poly:
        return 1.0
    half = species.dof / 2.0
    return math.exp(half * math.log(kB * T) + gammaln(half))


def normalization_q(table: SpeciesTable, alpha: int, T: float, kB: float = 1.0) -> float:
    """
    内能归一化常数 q_α = (k_B T)^{δ/2}Γ(δ/2)

    Raises:
        UsageError: α 为单原子组分
    """
    species = table[alpha]
    if not species.is_poly:
        raise UsageError(f"单原子组分 {species.label} 没有内能归一化常数")
    return internal_normalization(species, T, kB)


def log_maxwellian_reduced(params: MaxwellianParams, table: SpeciesTable, alpha: int,
                           xi: np.ndarray, I: np.ndarray, kB: float = 1.0) -> np.ndarray:
    """log(M_α/φ_α)，在 I = 0 处也有限"""
    sp = table[alpha]
    kT = kB * params.T
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    c2 = np.sum((xi - params.u) ** 2, axis=-1)
    value = (math.log(params.density(alpha)) + 1.5 * math.log(sp.m / (2.0 * math.pi * kT))
             - sp.m * c2 / (2.0 * kT))
    if sp.is_poly:
        value = value - np.asarray(I, dtype=float) / kT - math.log(internal_normalization(sp, params.T, kB))
    return value


def maxwellian_values(params: MaxwellianParams, table: SpeciesTable, alpha: int,
                      xi: np.ndarray, I: np.ndarray, kB: float = 1.0) -> np.ndarray:
    """向量化的 M_α(ξ, I)"""
    sp = table[alpha]
    log_m = log_maxwellian_reduced(params, table, alpha, xi, I, kB)
    if not sp.is_poly:
        return np.exp(log_m)
    I = np.asarray(I, dtype=float) * np.ones_like(log_m)
    positive = I > 0
    log_phi = log_phi_values(sp, np.where(positive, I, 1.0))
    return np.where(positive, np.exp(log_m + log_phi), 0.0)


def maxwellian(params: MaxwellianParams, table: SpeciesTable, alpha: int, Z: Zstate,
               kB: float = 1.0) -> float:
    """
    麦克斯韦分布在单点的值

    单原子: n m^{3/2}(2πk_BT)^{−3/2} exp(−m|ξ−u|²/(2k_BT))；
    多原子再乘 φ_α(I)e^{−I/(k_BT)}/q_α。
    """
    if Z.species != alpha:
        raise UsageError(f"相空间点属于组分 {Z.species}，不是 {alpha}")
    return float(maxwellian_values(params, table, alpha, Z.xi, Z.internal, kB)[0])


@dataclass(frozen=True)
class PhaseGrid:
    """每个组分的张量求积节点与权重"""

    xi: Dict[int, np.ndarray]
    I: Dict[int, np.ndarray]
    weights: Dict[int, np.ndarray]
    axes: Dict[int, Tuple[np.ndarray, ...]] = field(default_factory=dict)

    def integrate(self, values: Dict[int, np.ndarray]) -> Dict[int, float]:
        return {alpha: float(np.dot(self.weights[alpha], values[alpha])) for alpha in values}

    def shape(self, alpha: int) -> Tuple[int, ...]:
        """组分 α 的张量形状 (n_x, n_y, n_z[, n_I])，与扁平节点顺序一致"""
        return tuple(len(axis) for axis in self.axes[alpha])


def phase_grid(table: SpeciesTable, quad: QuadratureSpec,
               center: Sequence[float] = (0.0, 0.0, 0.0)) -> PhaseGrid:
    """
    按 quad 的确定性规则为每个组分建立相空间网格

    扁平节点按 (x, y, z[, I]) 的 C 顺序排列，axes 记录各轴的一维节点。
    """
    xi_nodes, I_nodes, weights, axes = {}, {}, {}, {}
    n_vel = quad.order("velocity")
    for sp in table:
        vel = velocity_dim(quad, "xi", sp.m, center).rule
        scale = math.sqrt(quad.scale / sp.m)
        sp_axes = tuple(hermite_rule(n_vel, scale, float(c)).nodes for c in center)
        if sp.is_poly:
            inner = internal_dim(quad, "I", sp.dof / 2.0).rule
            xi_nodes[sp.index] = np.repeat(vel.points, len(inner.nodes), axis=0)
            I_nodes[sp.index] = np.tile(inner.nodes, len(vel.weights))
            weights[sp.index] = np.outer(vel.weights, inner.weights).ravel()
            sp_axes = sp_axes + (inner.nodes,)
        else:
            xi_nodes[sp.index] = vel.points
            I_nodes[sp.index] = np.zeros(len(vel.weights))
            weights[sp.index] = vel.weights
        axes[sp.index] = sp_axes
    return PhaseGrid(xi_nodes, I_nodes, weights, axes)


class DistributionField:
    """
    分布场 f = (f_1, ..., f_s)

    以可调用求值器表示，便于核在网格外求值；需要时可在网格上制表。

    Args:
        table (SpeciesTable): 组分表
        evaluator (Callable): evaluator(α, ξ(N,3), I(N,)) -> (N,)
        description (str): 描述标签
        log_evaluator (Callable, optional): log f 的直接求值器
    """

    def __init__(self, table: SpeciesTable, evaluator: FieldEvaluator, description: str = "",
                 log_evaluator: Optional[FieldEvaluator] = None):
        self.table = table
        self._evaluator = evaluator
        self._log_evaluator = log_evaluator
        self.description = description

    def __repr__(self) -> str:
        return f"DistributionField({self.description!r})"

    def __call__(self, alpha: int, xi: np.ndarray, I: Optional[np.ndarray] = None) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        I = np.zeros(len(xi)) if I is None else np.asarray(I, dtype=float) * np.ones(len(xi))
        return np.asarray(self._evaluator(alpha, xi, I), dtype=float) * np.ones(len(xi))

    def log(self, alpha: int, xi: np.ndarray, I: Optional[np.ndarray] = None) -> np.ndarray:
        """log f；没有直接求值器时由 f 取对数，非正值返回 -inf"""
        if self._log_evaluator is not None:
            xi = np.atleast_2d(np.asarray(xi, dtype=float))
            I = np.zeros(len(xi)) if I is None else np.asarray(I, dtype=float) * np.ones(len(xi))
            return np.asarray(self._log_evaluator(alpha, xi, I), dtype=float) * np.ones(len(xi))
        values = self(alpha, xi, I)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(values > 0, np.log(np.where(values > 0, values, 1.0)), -np.inf)

    def at(self, Z: Zstate) -> float:
        return float(self(Z.species, Z.xi, Z.internal)[0])

    def tabulate(self, grid: PhaseGrid) -> Dict[int, np.ndarray]:
        return {alpha: self(alpha, grid.xi[alpha], grid.I[alpha]) for alpha in grid.xi}

    def times(self, factor: FieldEvaluator, description: str = "") -> "DistributionField":
        """逐点乘以因子得到新场"""
        def evaluator(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
            return self(alpha, xi, I) * factor(alpha, xi, I)

        return DistributionField(self.table, evaluator, description or f"{self.description}*factor")

    def plus(self, other: "DistributionField", weight: float = 1.0) -> "DistributionField":
        def evaluator(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
            return self(alpha, xi, I) + weight * other(alpha, xi, I)

        return DistributionField(self.table, evaluator, f"{self.description}+{weight}*{other.description}")


def maxwellian_field(params: MaxwellianParams, table: SpeciesTable, kB: float = 1.0) -> DistributionField:
    """把麦克斯韦分布包装为 DistributionField"""
    if len(params.n) != len(table):
        raise UsageError(f"参数中有 {len(params.n)} 个密度，组分表有 {len(table)} 个组分")

    def evaluator(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        return maxwellian_values(params, table, alpha, xi, I, kB)

    def log_evaluator(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        sp = table[alpha]
        log_m = log_maxwellian_reduced(params, table, alpha, xi, I, kB)
        if not sp.is_poly:
            return log_m
        return log_m + log_phi_values(sp, I)

    return DistributionField(table, evaluator, f"maxwellian(n={list(params.n)}, T={params.T})",
                             log_evaluator=log_evaluator)


def zero_field(table: SpeciesTable) -> DistributionField:
    return DistributionField(table, lambda alpha, xi, I: np.zeros(len(xi)), "zero")


def random_positive_field(table: SpeciesTable, rng: np.random.Generator, T: float = 1.0,
                          kB: float = 1.0, drift: float = 0.3) -> DistributionField:
    """
    随机的处处为正的分布：两个漂移麦克斯韦分布之和，不在平衡态

    Args:
        rng (np.random.Generator): 随机数发生器
        T (float): 温度的中心值，两个分量在 [0.8T, 1.25T] 内取
        drift (float): 宏观速度分量的最大幅度
    """
    s = len(table)
    parts = []
    for weight in (1.0, 0.4):
        n = weight * rng.uniform(0.5, 1.5, s)
        u = rng.uniform(-drift, drift, 3)
        parts.append(MaxwellianParams(tuple(n), u, T * rng.uniform(0.8, 1.25)))

    def log_evaluator(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        sp = table[alpha]
        logs = [log_maxwellian_reduced(p, table, alpha, xi, I, kB) for p in parts]
        value = np.logaddexp(logs[0], logs[1])
        return value + log_phi_values(sp, I) if sp.is_poly else value

    def evaluator(alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        return np.exp(log_evaluator(alpha, xi, I))

    return DistributionField(table, evaluator, "random_positive", log_evaluator=log_evaluator)


class TabulatedField(DistributionField):
    """
    网格制表的分布场 f_α = M_ref,α·exp(p_α)

    p_α 在组分 α 的张量网格节点上给定，网格外按各轴的 Lagrange 插值求值，
    坐标先截断到网格范围内，因此 f 处处为正。每轴节点数不少于 3 时
    任意麦克斯韦分布都被精确表示。

    Args:
        table (SpeciesTable): 组分表
        grid (PhaseGrid): 带 axes 的相空间网格
        reference (MaxwellianParams): 参考麦克斯韦分布
        log_ratio (dict): 各组分节点上的 log(f/M_ref)
        kB (float): 玻尔兹曼常数
    """

    def __init__(self, table: SpeciesTable, grid: PhaseGrid, reference: MaxwellianParams,
                 log_ratio: Dict[int, np.ndarray], kB: float = 1.0, description: str = "tabulated"):
        if not grid.axes:
            raise UsageError("网格缺少坐标轴，无法插值")
        self.grid = grid
        self.reference = reference
        self.kB = kB
        self.log_ratio = {alpha: np.asarray(values, dtype=float) for alpha, values in log_ratio.items()}
        self._coeffs = {alpha: values.reshape(grid.shape(alpha)) for alpha, values in self.log_ratio.items()}
        self._bases = {alpha: [(BarycentricInterpolator(axis, np.eye(len(axis))), axis.min(), axis.max())
                               for axis in grid.axes[alpha]] for alpha in self.log_ratio}
        self._log_ref = {sp.index: log_maxwellian_reduced(reference, table, sp.index, grid.xi[sp.index],
                                                          grid.I[sp.index], kB) for sp in table}
        super().__init__(table, self._values, description, log_evaluator=self._log_values)

    @classmethod
    def from_field(cls, f: DistributionField, table: SpeciesTable, grid: PhaseGrid,
                   reference: MaxwellianParams, kB: float = 1.0) -> "TabulatedField":
        """
        在网格节点上对 f 制表

        Raises:
            ModelDomainError: f 在某个网格节点非正
        """
        log_ratio = {}
        for sp in table:
            xi, I = grid.xi[sp.index], grid.I[sp.index]
            _check_positive(f(sp.index, xi, I), sp.index, xi, I)
            log_f = f.log(sp.index, xi, I)
            log_ref = log_maxwellian_reduced(reference, table, sp.index, xi, I, kB)
            log_ratio[sp.index] = log_f - log_ref - (log_phi_values(sp, I) if sp.is_poly else 0.0)
        return cls(table, grid, reference, log_ratio, kB, f"tabulated({f.description})")

    def with_node_values(self, values: Dict[int, np.ndarray]) -> "TabulatedField":
        """
        由节点上的新 f 值构造同一网格上的场

        Raises:
            ModelDomainError: 某个节点值非正
        """
        log_ratio = {}
        for sp in self.table:
            alpha = sp.index
            _check_positive(values[alpha], alpha, self.grid.xi[alpha], self.grid.I[alpha])
            log_ratio[alpha] = np.log(values[alpha] / self.reference_values(alpha))
        return TabulatedField(self.table, self.grid, self.reference, log_ratio, self.kB, self.description)

    def reference_values(self, alpha: int) -> np.ndarray:
        """M_ref,α 在网格节点上的值"""
        return maxwellian_values(self.reference, self.table, alpha, self.grid.xi[alpha], self.grid.I[alpha],
                                 self.kB)

    def node_values(self) -> Dict[int, np.ndarray]:
        return {alpha: self.reference_values(alpha) * np.exp(p) for alpha, p in self.log_ratio.items()}

    def _interpolate(self, alpha: int, coords: Sequence[np.ndarray]) -> np.ndarray:
        out = self._coeffs[alpha]
        for k, ((basis, lo, hi), x) in enumerate(zip(self._bases[alpha], coords)):
            B = basis(np.clip(x, lo, hi))
            out = np.einsum("ni,i...->n...", B, out) if k == 0 else np.einsum("ni,ni...->n...", B, out)
        return out

    def _log_values(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        sp = self.table[alpha]
        coords = [xi[:, 0], xi[:, 1], xi[:, 2]] + ([I] if sp.is_poly else [])
        value = self._interpolate(alpha, coords) + log_maxwellian_reduced(self.reference, self.table, alpha,
                                                                          xi, I, self.kB)
        if not sp.is_poly:
            return value
        positive = I > 0
        return np.where(positive, value + log_phi_values(sp, np.where(positive, I, 1.0)), -np.inf)

    def _values(self, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
        return np.exp(self._log_values(alpha, xi, I))

    def moments(self) -> "Moments":
        """网格求积给出的宏观量，与 moments() 同一公式"""
        values = self.node_values()
        raw = []
        for sp in self.table:
            w = self.grid.weights[sp.index] * values[sp.index]
            xi = self.grid.xi[sp.index]
            raw.append([w.sum(), *(w @ xi), w @ np.sum(xi ** 2, axis=-1), w @ self.grid.I[sp.index]])
        return _moments_from_raw(np.array(raw), self.table, self.kB)

    def entropy(self, free: bool = False) -> float:
        """网格上的 H = Σ_α Σ w·f·log(f/φ)；free 为 True 时减去 Σn"""
        total = 0.0
        for alpha, f_values in self.node_values().items():
            log_ratio = self.log_ratio[alpha] + self._log_ref[alpha]
            total += float(self.grid.weights[alpha] @ (f_values * (log_ratio - 1.0 if free else log_ratio)))
        return total


def mass_action_rhs(table: SpeciesTable, channel: ReactionChannel, T: float, kB: float = 1.0) -> float:
    """
    质量作用律右端

    n_γn_ζ/n_β = (m_β/(m_γm_ζ))^{3/2}(2πk_BT)^{3/2}·q_γq_ζ/q_β·e^{−Δε₀/(k_BT)}，
    单原子组分的 q 取 1。
    """
    beta, gamma, zeta = channel.species(table)
    kT = kB * T
    log_rhs = (1.5 * math.log(beta.m / (gamma.m * zeta.m)) + 1.5 * math.log(2.0 * math.pi * kT)
               + math.log(internal_normalization(gamma, T, kB))
               + math.log(internal_normalization(zeta, T, kB))
               - math.log(internal_normalization(beta, T, kB))
               - delta_eps0(table, channel) / kT)
    return math.exp(log_rhs)


def mass_action_residual(params: MaxwellianParams, table: SpeciesTable, channel: ReactionChannel,
                         kB: float = 1.0) -> float:
    """n_γn_ζ/n_β − 右端；为 0 当且仅当该通道化学平衡"""
    n = params.density
    ratio = n(channel.reactant_a) * n(channel.reactant_b) / n(channel.product)
    return ratio - mass_action_rhs(table, channel, params.T, kB)


@dataclass(frozen=True)
class ConservedQuantities:
    """
    线性守恒量 Uᵀn = values

    Args:
        U: 形状 (s, k) 的矩阵，每列是一个守恒组合
        values: 形状 (k,) 的目标值
    """

    U: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        if U.shape[0] == 1 and U.shape[1] > 1 and np.asarray(self.values).size == 1:
            U = U.T
        values = np.asarray(self.values, dtype=float).reshape(U.shape[1])
        if not np.all(np.isfinite(values)):
            raise UsageError("守恒量的目标值必须有限")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_densities(cls, U: np.ndarray, n0: Sequence[float]) -> "ConservedQuantities":
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return cls(U, U.T @ np.asarray(n0, dtype=float))

    def residual(self, n: np.ndarray) -> np.ndarray:
        return self.U.T @ n - self.values


def _mass_action_rows(table: SpeciesTable, channels: Sequence[ReactionChannel]) -> np.ndarray:
    rows = np.zeros((len(channels), len(table)))
    for k, ch in enumerate(channels):
        rows[k, ch.reactant_a - 1] += 1.0
        rows[k, ch.reactant_b - 1] += 1.0
        rows[k, ch.product - 1] -= 1.0
    return rows


def equilibrate(
    table: SpeciesTable,
    channels: Sequence[ReactionChannel],
    conserved: ConservedQuantities,
    T: float,
    n0: Optional[Sequence[float]] = None,
    u: Optional[Sequence[float]] = None,
    kB: float = 1.0,
    max_iter: int = 200,
    tol: float = 1e-13,
) -> MaxwellianParams:
    """
    求满足全部质量作用律与给定线性守恒量的密度

    在 log n 上做带阻尼的 Newton 迭代，雅可比解析给出；方程组秩亏时
    退化为最小二乘（Gauss–Newton）步。

    Args:
        conserved (ConservedQuantities): 守恒组合与目标值
        T (float): 温度
        n0 (Sequence[float], optional): 初值；无通道时原样返回
        u (Sequence[float], optional): 宏观速度，默认为 0

    Returns:
        MaxwellianParams: 平衡参数

    Raises:
        SolverError: 超过最大迭代次数仍未收敛，附各通道残差
    """
    u = np.zeros(3) if u is None else np.asarray(u, dtype=float)
    if not channels:
        if n0 is None:
            raise UsageError("没有通道时必须给出初始密度")
        return MaxwellianParams(tuple(n0), u, T)

    log_rhs = np.array([math.log(mass_action_rhs(table, ch, T, kB)) for ch in channels])
    rows = _mass_action_rows(table, channels)
    scale = np.full(conserved.values.shape, max(float(np.max(np.abs(conserved.values))), 1e-300))

    def residual(x: np.ndarray) -> np.ndarray:
        n = np.exp(x)
        return np.concatenate([rows @ x - log_rhs, conserved.residual(n) / scale])

    def jacobian(x: np.ndarray) -> np.ndarray:
        n = np.exp(x)
        return np.vstack([rows, (conserved.U.T * n[None, :]) / scale[:, None]])

    if n0 is None:
        guess, *_ = np.linalg.lstsq(conserved.U.T, conserved.values, rcond=None)
        guess = np.maximum(guess, 1e-3 * float(np.max(np.abs(guess)) or 1.0))
    else:
        guess = np.asarray(n0, dtype=float)
        if np.any(guess <= 0):
            raise UsageError("初始密度必须为正")
    x = np.log(guess)
    F = residual(x)
    norm = float(np.linalg.norm(F))
    for iteration in range(max_iter):
        if float(np.max(np.abs(F))) <= tol:
            break
        step, *_ = np.linalg.lstsq(jacobian(x), -F, rcond=None)
        step = np.clip(step, -5.0, 5.0)
        lam = 1.0
        while lam > 1e-10:
            trial = x + lam * step
            F_trial = residual(trial)
            trial_norm = float(np.linalg.norm(F_trial))
            if trial_norm < norm or lam <= 1e-9:
                break
            lam *= 0.5
        x, F, norm = trial, F_trial, trial_norm
        logger.debug("equilibrate: iter=%d |F|=%.3e lambda=%.3g", iteration, norm, lam)
    else:
        params = MaxwellianParams(tuple(np.exp(x)), u, T)
        residuals = {ch.label: mass_action_residual(params, table, ch, kB) for ch in channels}
        raise SolverError(f"化学平衡求解在 {max_iter} 次迭代内未收敛", residuals=residuals)

    params = MaxwellianParams(tuple(np.exp(x)), u, T)
    logger.info("equilibrate: 收敛, n=%s", list(params.n))
    return params


@dataclass(frozen=True)
class Moments:
    """
    宏观量

    Args:
        n: 各组分数密度
        u: 宏观速度，总密度为零时为 None
        T: 平动温度，总密度为零时为 None
        internal: 各组分内能密度 ∫I f
        flags: 未定义量的标记
        n_std: 数密度的标准误差
    """

    n: np.ndarray
    u: Optional[np.ndarray]
    T: Optional[float]
    internal: np.ndarray
    flags: Tuple[str, ...] = ()
    n_std: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n.tolist(),
            "u": None if self.u is None else self.u.tolist(),
            "T": self.T,
            "internal": self.internal.tolist(),
            "flags": list(self.flags),
        }

    def energy(self, table: SpeciesTable, kB: float = 1.0) -> float:
        """总能量 (3/2)nk_BT + ρ|u|²/2 + Σnε₀ + Σ∫I f"""
        if self.T is None or self.u is None:
            return float(np.dot(self.n, table.eps0) + np.sum(self.internal))
        rho = float(np.dot(self.n, table.masses))
        return (1.5 * float(np.sum(self.n)) * kB * self.T + 0.5 * rho * float(self.u @ self.u)
                + float(np.dot(self.n, table.eps0)) + float(np.sum(self.internal)))

    def momentum(self, table: SpeciesTable) -> np.ndarray:
        if self.u is None:
            return np.zeros(3)
        return float(np.dot(self.n, table.masses)) * self.u


def species_moments(f: DistributionField, table: SpeciesTable, alpha: int, quad: QuadratureSpec,
                    center: Sequence[float] = (0.0, 0.0, 0.0)) -> Estimate:
    """组分 α 的 [∫f, ∫ξf (3), ∫|ξ|²f, ∫I f]"""
    dims = phase_dims(quad, table, alpha, "", center)

    def integrand(nodes: Dict[str, np.ndarray]) -> np.ndarray:
        z = phase_args(nodes, "")
        values = f(alpha, z["xi"], z["I"])
        return np.column_stack([values, values[:, None] * z["xi"],
                                values * np.sum(z["xi"] ** 2, axis=-1), values * z["I"]])

    return integrate_dims(quad, dims, integrand, stream=(STREAM_MOMENTS, alpha))


def moments(f: DistributionField, table: SpeciesTable, quad: QuadratureSpec, kB: float = 1.0,
            center: Sequence[float] = (0.0, 0.0, 0.0)) -> Moments:
    """
    数密度、宏观速度与温度

    T = (Σ_α m_α∫|ξ−u|²f_α)/(3nk_B)；总密度为零时 u、T 以标记报告为未定义。
    """
    raw = [species_moments(f, table, sp.index, quad, center) for sp in table]
    values = np.array([np.asarray(e.value) for e in raw])
    n_std = np.array([float(np.asarray(e.std_error)[0]) for e in raw])
    return _moments_from_raw(values, table, kB, n_std)


def _moments_from_raw(values: np.ndarray, table: SpeciesTable, kB: float = 1.0,
                      n_std: Optional[np.ndarray] = None) -> Moments:
    """由每行 [∫f, ∫ξf (3), ∫|ξ|²f, ∫I f] 计算宏观量"""
    n = values[:, 0]
    internal = values[:, 5]
    n_total = float(np.sum(n))
    if not n_total > 0:
        return Moments(n, None, None, internal, ("u_undefined", "T_undefined"), n_std)
    m = table.masses
    rho = float(np.dot(m, n))
    u = (m[:, None] * values[:, 1:4]).sum(axis=0) / rho
    kinetic = float(np.dot(m, values[:, 4])) - rho * float(u @ u)
    T = kinetic / (3.0 * n_total * kB)
    return Moments(n, u, T, internal, (), n_std)


def _check_positive(values: np.ndarray, alpha: int, xi: np.ndarray, I: np.ndarray, mask: Any = True) -> None:
    bad = ~(values > 0) & mask
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ModelDomainError(f"分布在组分 {alpha} 的节点 ξ={xi[k].tolist()}, I={float(I[k])} 处非正")


def entropy_H(f: DistributionField, table: SpeciesTable, quad: QuadratureSpec, free: bool = False,
              center: Sequence[float] = (0.0, 0.0, 0.0)) -> Estimate:
    """
    H 泛函 Σ_α∫f_α log(φ_α^{−1}f_α) dZ

    Args:
        free (bool): 为 True 时返回 H − Σ_α n_α，化学反应下它才单调

    Raises:
        ModelDomainError: f 在某个求积节点非正
    """
    total = zero_estimate()
    for sp in table:
        dims = phase_dims(quad, table, sp.index, "", center)

        def integrand(nodes: Dict[str, np.ndarray], sp: Species = sp) -> np.ndarray:
            z = phase_args(nodes, "")
            values = f(sp.index, z["xi"], z["I"])
            _check_positive(values, sp.index, z["xi"], z["I"])
            log_ratio = f.log(sp.index, z["xi"], z["I"]) - log_phi_values(sp, z["I"])
            return values * (log_ratio - 1.0 if free else log_ratio)

        total = total + integrate_dims(quad, dims, integrand, stream=(STREAM_ENTROPY, sp.index))
    return total


def maxwellian_entropy(params: MaxwellianParams, table: SpeciesTable, kB: float = 1.0) -> float:
    """麦克斯韦分布 H 的闭式：Σ n_α[log n_α + (3/2)log(m/(2πkT)) − 3/2 − log q_α − δ/2]"""
    kT = kB * params.T
    total = 0.0
    for sp in table:
        n = params.density(sp.index)
        value = math.log(n) + 1.5 * math.log(sp.m / (2.0 * math.pi * kT)) - 1.5
        if sp.is_poly:
            value -= math.log(internal_normalization(sp, params.T, kB)) + sp.dof / 2.0
        total += n * value
    return total


def _chem_entropy_density(f: DistributionField, table: SpeciesTable, channel: ReactionChannel,
                          ev: Any) -> np.ndarray:
    """sig_jac·φ′φ*′·(A − B)·log(B/A)，A = f′f*′/(φ′φ*′)，B = f_*/φ_*"""
    beta, gamma, zeta = channel.species(table)
    b = ev.batch
    mask = ev.sig_jac > 0
    fa = f(gamma.index, b.xi_a, b.I_a)
    fb = f(zeta.index, b.xi_b, b.I_b)
    fp = f(beta.index, b.xi_p, b.I_p)
    for values, idx, xi, I in ((fa, gamma.index, b.xi_a, b.I_a), (fb, zeta.index, b.xi_b, b.I_b),
                               (fp, beta.index, b.xi_p, b.I_p)):
        _check_positive(values, idx, xi, I, mask)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_A = (f.log(gamma.index, b.xi_a, b.I_a) + f.log(zeta.index, b.xi_b, b.I_b)
                 - np.log(np.where(mask, ev.phi_a * ev.phi_b, 1.0)))
        log_B = f.log(beta.index, b.xi_p, b.I_p) - np.log(np.where(mask, ev.phi_p, 1.0))
        A = fa * fb / np.where(mask, ev.phi_a * ev.phi_b, 1.0)
        B = fp / np.where(mask, ev.phi_p, 1.0)
        value = ev.weight * (A - B) * (log_B - log_A)
    return np.where(mask, value, 0.0)


def entropy_production_chem(
    f: DistributionField,
    table: SpeciesTable,
    channels: Sequence[ReactionChannel],
    model: CrossSectionModel,
    quad: QuadratureSpec,
    center: Sequence[float] = (0.0, 0.0, 0.0),
) -> Estimate:
    """
    化学耗散 W_chem = Σ_C ∫ Λ(f)·log(f_*φ′φ*′/(φ_*f′f*′)) dA ≤ 0

    在产物坐标上积分，被积函数逐点非正；对有序三元组集合求和。

    Raises:
        ModelDomainError: f 在某个事件点非正
    """
    total = zero_estimate()
    for k, channel in enumerate(channels):
        for o, ordered in enumerate(channel.orderings()):
            dims = product_dims(quad, table, ordered, center) + split_dims(
                quad, ConstituentCase.of_channel(table, ordered))

            def integrand(nodes: Dict[str, np.ndarray], ordered: ReactionChannel = ordered) -> np.ndarray:
                p = split_args(nodes)
                ev = product_events(table, model, ordered, nodes["xi_p"], nodes["I_p"],
                                    p["r"], p["R"], p["sigma"])
                return _chem_entropy_density(f, table, ordered, ev)

            total = total + integrate_dims(quad, dims, integrand, stream=(STREAM_W_CHEM, k, o))
    return total


def entropy_production_mech(
    f: DistributionField,
    table: SpeciesTable,
    model: CrossSectionModel,
    quad: QuadratureSpec,
    center: Sequence[float] = (0.0, 0.0, 0.0),
) -> Estimate:
    """
    力学耗散 W_mech = −(1/4)Σ_{α,β}∫ Kmech φφ_*φ′φ*′ (A′ − A) log(A′/A) ≤ 0

    A = f f_*/(φφ_*)，A′ 为碰后对应量；对有序组分对求和。
    """
    total = zero_estimate()
    for sa in table:
        for sb in table:
            alpha, beta = sa.index, sb.index
            if model.c(alpha, beta) == 0:
                continue
            dims = (phase_dims(quad, table, alpha, "a_", center) + phase_dims(quad, table, beta, "b_", center)
                    + split_dims(quad, ConstituentCase.of(sa, sb)))

            def integrand(nodes: Dict[str, np.ndarray], alpha: int = alpha, beta: int = beta) -> np.ndarray:
                za, zb, p = phase_args(nodes, "a_"), phase_args(nodes, "b_"), split_args(nodes)
                ev = mech_events(table, model, alpha, beta, za["xi"], za["I"], zb["xi"], zb["I"],
                                 p["r"], p["R"], p["sigma"])
                b = ev.batch
                mask = ev.kmech > 0
                phi_pre = np.where(mask, ev.phi * ev.phi_s, 1.0)
                phi_post = np.where(mask, ev.phi_q * ev.phi_sq, 1.0)
                A = f(alpha, b.xi, b.I) * f(beta, b.xi_s, b.I_s) / phi_pre
                A_post = f(alpha, b.xi_q, b.I_q) * f(beta, b.xi_sq, b.I_sq) / phi_post
                _check_positive(A, alpha, b.xi, b.I, mask)
                _check_positive(A_post, alpha, b.xi_q, b.I_q, mask)
                with np.errstate(divide="ignore", invalid="ignore"):
                    value = -0.25 * ev.kmech * phi_pre * phi_post * (A_post - A) * np.log(A_post / A)
                return np.where(mask, value, 0.0)

            total = total + integrate_dims(quad, dims, integrand, stream=(STREAM_W_MECH, alpha, beta))
    return total


def detailed_balance_defect(
    params: MaxwellianParams,
    table: SpeciesTable,
    channel: ReactionChannel,
    n_events: int = 1000,
    seed: int = 0,
    kB: float = 1.0,
) -> float:
    """
    细致平衡残差 max |Λ(M)|/(M_*/φ_*)

    在产物坐标上随机抽取被接受的事件，对通道的每个有序三元组计算
    |M′M*′/(φ′φ*′) − M_*/φ_*| 相对 M_*/φ_* 的最大值。质量作用律成立时为 0。
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    kT = kB * params.T
    for ordered in channel.orderings():
        beta, gamma, zeta = ordered.species(table)
        I_p = product_threshold(table, ordered) + rng.exponential(kT, n_events)
        xi_p = params.u + rng.standard_normal((n_events, 3)) * math.sqrt(kT / beta.m)
        r, R, sigma = sample_params(rng, n_events)
        batch = dissociate_batch(table, ordered, xi_p, I_p, r, R, sigma)
        log_B = log_maxwellian_reduced(params, table, beta.index, batch.xi_p, batch.I_p, kB)
        log_A = (log_maxwellian_reduced(params, table, gamma.index, batch.xi_a, batch.I_a, kB)
                 + log_maxwellian_reduced(params, table, zeta.index, batch.xi_b, batch.I_b, kB))
        defect = np.abs(np.expm1(log_A - log_B))[batch.gate]
        if defect.size:
            worst = max(worst, float(np.max(defect)))
    return worst


def dissociation_rate_coefficient(
    table: SpeciesTable,
    model: CrossSectionModel,
    channel: ReactionChannel,
    T: float,
    kB: float = 1.0,
) -> float:
    """
    麦克斯韦平均离解速率系数 k_d(T) = ∫ φ_β(I)e^{−I/kT}/q_β·ν(I) dI

    ν 为有序三元组 channel 的产物槽闭式损失频率；通道的两个排序各算一次。
    """
    beta = table[channel.product]
    kT = kB * T
    log_q = math.log(internal_normalization(beta, T, kB))

    def integrand(I: float) -> float:
        return math.exp(float(log_phi_values(beta, I)) - I / kT - log_q) * float(
            product_frequency(table, model, channel, I))

    lower = product_threshold(table, channel)
    value, _ = sp_integrate.quad(integrand, lower, math.inf, epsabs=0.0, epsrel=1e-11, limit=200)
    return float(value)


def chemical_energy(params: MaxwellianParams, table: SpeciesTable) -> float:
    """生成能 Σ n_α ε_α0"""
    return float(np.dot(params.densities, table.eps0))


def thermal_energy_per_particle(species: Species, T: float, kB: float = 1.0) -> float:
    """每个粒子的平动加内能 (3/2 + δ/2·[多原子]) k_BT"""
    return (1.5 + (species.dof / 2.0 if species.is_poly else 0.0)) * kB * T


def total_energy(params: MaxwellianParams, table: SpeciesTable, kB: float = 1.0) -> float:
    """总能量 Σn(3/2 + δ/2)k_BT + Σnε₀ + ρ|u|²/2"""
    thermal = sum(params.density(sp.index) * thermal_energy_per_particle(sp, params.T, kB) for sp in table)
    rho = float(np.dot(params.densities, table.masses))
    return thermal + chemical_energy(params, table) + 0.5 * rho * float(params.u @ params.u)


def mass_action_residuals(params: MaxwellianParams, table: SpeciesTable,
                          channels: Sequence[ReactionChannel], kB: float = 1.0) -> Dict[str, float]:
    return {ch.label: mass_action_residual(params, table, ch, kB) for ch in channels}


def species_summary(table: SpeciesTable) -> List[Dict[str, Any]]:
    """组分表的可序列化摘要，供报告使用"""
    return [{"name": sp.label, "kind": sp.kind.value, "mass": float(sp.m), "dof": sp.dof,
             "eps0": sp.eps0} for sp in table]
