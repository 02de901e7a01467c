#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
非线性碰撞算子

化学算子 Q_chem（四种成分组合）与力学算子 Q_mech 的逐点求积、
弱形式、逐点守恒检验 moment_of_q，以及空间均匀松弛演示。

化学通道按有序三元组求和：用户通道 (β,γ,ζ) 在 γ ≠ ζ 时同时代表
(β,γ,ζ) 与 (β,ζ,γ)。每个有序三元组向 β 槽、γ 槽和 ζ 槽各贡献一项，
ζ 槽取交换后三元组的 γ 槽。
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from tqdm import tqdm

from .equilibrium import (DistributionField, MaxwellianParams, PhaseGrid, TabulatedField, entropy_production_chem,
                          entropy_production_mech, maxwellian_field, moments, phase_grid)
from .events import (mech_events, phase_args, phase_dims, product_dims, product_events, reactant_args,
                     reactant_dims, reactant_events, split_args, split_dims)
from .exceptions import ModelDomainError, NumericalError, StepSizeError, UsageError
from .invariants import InvariantBasis, chemical_invariant_space, collision_invariant_basis
from .kinematics import ConstituentCase, Zstate
from .model import CrossSectionModel, ReactionChannel, SpeciesTable
from .quadrature import Estimate, QuadratureSpec, integrate_dims, iter_weighted_nodes, zero_estimate

logger = logging.getLogger(__name__)

STREAM_Q_CHEM = 21
STREAM_Q_MECH = 22
STREAM_WEAK_CHEM = 23
STREAM_WEAK_MECH = 24
STREAM_MOMENT_Q = 25
STREAM_RELAX = 26

# 网格松弛每批求值的事件数上限
GRID_EVENTS = 1 << 18

# 故障注入：产物槽增益加倍
FAULT_KERNEL_FACTOR = "kernel_factor"

TestFunction = Callable[[int, np.ndarray, np.ndarray], np.ndarray]
ProgressCallback = Callable[[str, int, int], None]
Center = Sequence[float]
ORIGIN = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class OperatorValue:
    """算子在一点的值：value = gain − loss，std_error 为确定性求积时为 0"""

    value: float
    std_error: float
    gain: float
    loss: float

    @classmethod
    def zero(cls) -> "OperatorValue":
        return cls(0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_estimate(cls, est: Estimate) -> "OperatorValue":
        """由 [gain, loss, gain − loss] 三分量估计构造"""
        value = np.asarray(est.value, dtype=float)
        std = np.asarray(est.std_error, dtype=float)
        return cls(float(value[0] - value[1]), float(std[2]), float(value[0]), float(value[1]))

    def __add__(self, other: "OperatorValue") -> "OperatorValue":
        return OperatorValue(
            self.value + other.value,
            math.hypot(self.std_error, other.std_error),
            self.gain + other.gain,
            self.loss + other.loss,
        )

    def within(self, target: float = 0.0, n_sigma: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.value - target) <= n_sigma * self.std_error + atol

    def to_dict(self) -> Dict[str, float]:
        return {"value": self.value, "std_error": self.std_error, "gain": self.gain, "loss": self.loss}


def _gain_loss(gain: np.ndarray, loss: np.ndarray) -> np.ndarray:
    return np.column_stack([gain, loss, gain - loss])


def _ratio(num: np.ndarray, den: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, num / np.where(mask, den, 1.0), 0.0)


def product_slot_terms(f: DistributionField, table: SpeciesTable, model: CrossSectionModel,
                       channel: ReactionChannel, xi_p: np.ndarray, I_p: np.ndarray,
                       p: Dict[str, np.ndarray], fault: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray, Any]:
    """
    β 槽增益与损失密度

    gain = sig_jac·f_γ(Z′)f_ζ(Z*′)，loss = sig_jac·φ′φ*′·f_β(Z_*)/φ_β(I_*)
    """
    beta, gamma, zeta = channel.species(table)
    ev = product_events(table, model, channel, xi_p, I_p, p["r"], p["R"], p["sigma"])
    b = ev.batch
    mask = ev.sig_jac > 0
    gain = ev.sig_jac * f(gamma.index, b.xi_a, b.I_a) * f(zeta.index, b.xi_b, b.I_b)
    loss = _ratio(ev.weight * f(beta.index, b.xi_p, b.I_p), ev.phi_p, mask)
    if fault == FAULT_KERNEL_FACTOR:
        gain = 2.0 * gain
    return np.where(mask, gain, 0.0), loss, b


def reactant_slot_terms(f: DistributionField, table: SpeciesTable, model: CrossSectionModel,
                        channel: ReactionChannel, xi_a: np.ndarray, I_a: np.ndarray,
                        q: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray, Any]:
    """
    γ 槽增益与损失密度（壳层坐标）

    gain = sig_jac·φ′φ*′·f_β(Z_*)/φ_β(I_*)，loss = sig_jac·f_γ(Z′)f_ζ(Z*′)
    """
    beta, gamma, zeta = channel.species(table)
    ev = reactant_events(table, model, channel, xi_a, I_a, q["t"], q["sigma"], q["s"])
    b = ev.batch
    mask = ev.sig_jac > 0
    gain = _ratio(ev.sig_jac * ev.phi_a * ev.phi_b * f(beta.index, b.xi_p, b.I_p), ev.phi_p, mask)
    loss = ev.sig_jac * f(gamma.index, b.xi_a, b.I_a) * f(zeta.index, b.xi_b, b.I_b)
    return gain, np.where(mask, loss, 0.0), b


def mech_terms(f: DistributionField, table: SpeciesTable, model: CrossSectionModel, alpha: int, beta: int,
               xi: np.ndarray, I: np.ndarray, xi_s: np.ndarray, I_s: np.ndarray,
               p: Dict[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray, Any]:
    """力学增益 Kmech·φφ_*·f′f*′ 与损失 Kmech·φ′φ*′·f f_*"""
    ev = mech_events(table, model, alpha, beta, xi, I, xi_s, I_s, p["r"], p["R"], p["sigma"])
    b = ev.batch
    gain = ev.kmech * ev.phi * ev.phi_s * f(alpha, b.xi_q, b.I_q) * f(beta, b.xi_sq, b.I_sq)
    loss = ev.kmech * ev.phi_q * ev.phi_sq * f(alpha, b.xi, b.I) * f(beta, b.xi_s, b.I_s)
    return gain, loss, b


def _broadcast_point(Z: Zstate, n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.broadcast_to(Z.xi, (n, 3)), np.full(n, Z.internal)


def _check_point(table: SpeciesTable, alpha: int, Z: Zstate) -> None:
    if Z.species != alpha:
        raise UsageError(f"相空间点属于组分 {Z.species}，不是 {alpha}")
    if table[alpha].is_poly and Z.I is None:
        raise UsageError(f"多原子组分 {table[alpha].label} 的相空间点需要内能")


def _slot_value(quad: QuadratureSpec, dims: List[Any], terms: Callable[[Dict[str, np.ndarray]], Tuple],
                stream: Tuple[int, ...]) -> OperatorValue:
    def integrand(nodes: Dict[str, np.ndarray]) -> np.ndarray:
        return _gain_loss(*terms(nodes)[:2])

    return OperatorValue.from_estimate(integrate_dims(quad, dims, integrand, stream=stream))


def q_chem_channel(
    f: DistributionField,
    table: SpeciesTable,
    model: CrossSectionModel,
    channel: ReactionChannel,
    alpha: int,
    Z: Zstate,
    quad: QuadratureSpec,
    channel_id: int = 0,
) -> OperatorValue:
    """
    单个用户通道对 Q_cα(f)(Z) 的贡献

    α = β 时在 (r, R, σ) 上积分产物槽；α 为反应物时在壳层坐标上积分反应物槽。
    α 不属于该通道时返回 0。

    Raises:
        NumericalError: 被积函数在某节点非有限
    """
    _check_point(table, alpha, Z)
    total = OperatorValue.zero()
    for o, ordered in enumerate(channel.orderings()):
        stream = (STREAM_Q_CHEM, alpha, channel_id, o)
        if alpha == ordered.product:
            dims = split_dims(quad, ConstituentCase.of_channel(table, ordered))

            def terms(nodes: Dict[str, np.ndarray], ordered: ReactionChannel = ordered) -> Tuple:
                p = split_args(nodes)
                xi, I = _broadcast_point(Z, len(p["sigma"]))
                return product_slot_terms(f, table, model, ordered, xi, I, p, quad.debug_fault)

            total = total + _slot_value(quad, dims, terms, stream + (0,))
        for slot, slot_channel in ((1, ordered), (2, ordered.swapped())):
            if alpha != slot_channel.reactant_a:
                continue
            dims = reactant_dims(quad, table, slot_channel)

            def slot_terms(nodes: Dict[str, np.ndarray], slot_channel: ReactionChannel = slot_channel) -> Tuple:
                q = reactant_args(nodes)
                xi, I = _broadcast_point(Z, len(q["t"]))
                return reactant_slot_terms(f, table, model, slot_channel, xi, I, q)

            total = total + _slot_value(quad, dims, slot_terms, stream + (slot,))
    return total


def q_chem(
    f: DistributionField,
    table: SpeciesTable,
    model: CrossSectionModel,
    channels: Sequence[ReactionChannel],
    alpha: int,
    Z: Zstate,
    quad: QuadratureSpec,
) -> OperatorValue:
    """Q_cα(f)(Z) = Σ_通道 q_chem_channel；空通道集为 0"""
    _check_point(table, alpha, Z)
    total = OperatorValue.zero()
    for k, channel in enumerate(channels):
        total = total + q_chem_channel(f, table, model, channel, alpha, Z, quad, channel_id=k)
    return total


def q_mech(
    f: DistributionField,
    table: SpeciesTable,
    model: CrossSectionModel,
    alpha: int,
    Z: Zstate,
    quad: QuadratureSpec,
    center: Center = ORIGIN,
) -> OperatorValue:
    """
    Q_mα(f)(Z) = Σ_β ∫ (gain − loss) dZ_* dr dR dσ

    碰后态由 mech_scatter 参数化给出，截面为 sigma_mech。
    """
    _check_point(table, alpha, Z)
    total = OperatorValue.zero()
    for sb in table:
        beta = sb.index
        if model.c(alpha, beta) == 0:
            continue
        dims = phase_dims(quad, table, beta, "b_", center) + split_dims(
            quad, ConstituentCase.of(table[alpha], sb))

        def terms(nodes: Dict[str, np.ndarray], beta: int = beta) -> Tuple:
            zb, p = phase_args(nodes, "b_"), split_args(nodes)
            xi, I = _broadcast_point(Z, len(p["sigma"]))
            return mech_terms(f, table, model, alpha, beta, xi, I, zb["xi"], zb["I"], p)

        total = total + _slot_value(quad, dims, terms, (STREAM_Q_MECH, alpha, beta))
    return total


def _evaluate(g: TestFunction, alpha: int, xi: np.ndarray, I: np.ndarray) -> np.ndarray:
    values = np.asarray(g(alpha, xi, I), dtype=float)
    return values if values.ndim == 2 else values * np.ones(len(xi))


def _times_test(net: np.ndarray, values: np.ndarray) -> np.ndarray:
    return net[:, None] * values if values.ndim == 2 else net * values


def weak_form_chem(
    f: DistributionField,
    g: TestFunction,
    table: SpeciesTable,
    model: CrossSectionModel,
    channels: Sequence[ReactionChannel],
    quad: QuadratureSpec,
    center: Center = ORIGIN,
) -> Estimate:
    """
    化学弱形式 Σ_C ∫ Λ(f)·(g_β(Z_*) − g_γ(Z′) − g_ζ(Z*′)) dA

    在产物坐标上积分；对碰撞不变量逐事件为零。
    """
    total = zero_estimate()
    for k, channel in enumerate(channels):
        for o, ordered in enumerate(channel.orderings()):
            beta, gamma, zeta = ordered.species(table)
            dims = product_dims(quad, table, ordered, center) + split_dims(
                quad, ConstituentCase.of_channel(table, ordered))

            def integrand(nodes: Dict[str, np.ndarray], ordered: ReactionChannel = ordered,
                          beta: Any = beta, gamma: Any = gamma, zeta: Any = zeta) -> np.ndarray:
                p = split_args(nodes)
                gain, loss, b = product_slot_terms(f, table, model, ordered, nodes["xi_p"], nodes["I_p"], p)
                delta = (_evaluate(g, beta.index, b.xi_p, b.I_p) - _evaluate(g, gamma.index, b.xi_a, b.I_a)
                         - _evaluate(g, zeta.index, b.xi_b, b.I_b))
                return (gain - loss) * delta

            total = total + integrate_dims(quad, dims, integrand, stream=(STREAM_WEAK_CHEM, k, o))
    return total


def weak_form_mech(
    f: DistributionField,
    g: TestFunction,
    table: SpeciesTable,
    model: CrossSectionModel,
    quad: QuadratureSpec,
    center: Center = ORIGIN,
) -> Estimate:
    """
    力学弱形式 (1/2)Σ_{α,β}∫ Kmech φ′φ*′ f f_* (g′ + g*′ − g − g_*)

    由碰前碰后交换与组分交换对称化得到，对碰撞不变量逐事件为零。
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
                loss = ev.kmech * ev.phi_q * ev.phi_sq * f(alpha, b.xi, b.I) * f(beta, b.xi_s, b.I_s)
                delta = (_evaluate(g, alpha, b.xi_q, b.I_q) + _evaluate(g, beta, b.xi_sq, b.I_sq)
                         - _evaluate(g, alpha, b.xi, b.I) - _evaluate(g, beta, b.xi_s, b.I_s))
                return 0.5 * loss * delta

            total = total + integrate_dims(quad, dims, integrand, stream=(STREAM_WEAK_MECH, alpha, beta))
    return total


def moment_of_q(
    f: DistributionField,
    psi: TestFunction,
    table: SpeciesTable,
    model: CrossSectionModel,
    channels: Sequence[ReactionChannel],
    quad: QuadratureSpec,
    include_mech: bool = True,
    center: Center = ORIGIN,
) -> Estimate:
    """
    Σ_α ∫ Q_α(f) ψ_α dZ

    直接积分逐点算子，相空间点与内层节点联合采样，不使用弱形式的对称化，
    用作守恒律的独立检验。psi 返回 (N, k) 时同一组样本上一次得到 k 个矩。
    """
    total = zero_estimate()
    for k, channel in enumerate(channels):
        for o, ordered in enumerate(channel.orderings()):
            dims = product_dims(quad, table, ordered, center) + split_dims(
                quad, ConstituentCase.of_channel(table, ordered))

            def product_integrand(nodes: Dict[str, np.ndarray], ordered: ReactionChannel = ordered) -> np.ndarray:
                p = split_args(nodes)
                gain, loss, _ = product_slot_terms(f, table, model, ordered, nodes["xi_p"], nodes["I_p"], p,
                                                quad.debug_fault)
                return _times_test(gain - loss, _evaluate(psi, ordered.product, nodes["xi_p"], nodes["I_p"]))

            total = total + integrate_dims(quad, dims, product_integrand, stream=(STREAM_MOMENT_Q, k, o, 0))
            for slot, slot_channel in ((1, ordered), (2, ordered.swapped())):
                gamma = slot_channel.reactant_a
                dims = phase_dims(quad, table, gamma, "a_", center) + reactant_dims(quad, table, slot_channel)

                def reactant_integrand(nodes: Dict[str, np.ndarray], slot_channel: ReactionChannel = slot_channel,
                                       gamma: int = gamma) -> np.ndarray:
                    za, q = phase_args(nodes, "a_"), reactant_args(nodes)
                    gain, loss, _ = reactant_slot_terms(f, table, model, slot_channel, za["xi"], za["I"], q)
                    return _times_test(gain - loss, _evaluate(psi, gamma, za["xi"], za["I"]))

                total = total + integrate_dims(quad, dims, reactant_integrand,
                                               stream=(STREAM_MOMENT_Q, k, o, slot))
    if include_mech:
        for sa in table:
            for sb in table:
                alpha, beta = sa.index, sb.index
                if model.c(alpha, beta) == 0:
                    continue
                dims = (phase_dims(quad, table, alpha, "a_", center)
                        + phase_dims(quad, table, beta, "b_", center)
                        + split_dims(quad, ConstituentCase.of(sa, sb)))

                def mech_integrand(nodes: Dict[str, np.ndarray], alpha: int = alpha, beta: int = beta) -> np.ndarray:
                    za, zb, p = phase_args(nodes, "a_"), phase_args(nodes, "b_"), split_args(nodes)
                    gain, loss, _ = mech_terms(f, table, model, alpha, beta, za["xi"], za["I"], zb["xi"], zb["I"], p)
                    return _times_test(gain - loss, _evaluate(psi, alpha, za["xi"], za["I"]))

                total = total + integrate_dims(quad, dims, mech_integrand,
                                               stream=(STREAM_MOMENT_Q, 99, alpha, beta))
    return total


@dataclass(frozen=True)
class RelaxRecord:
    """松弛轨迹的一条记录（第 step 步开始时的状态与耗散）"""

    step: int
    t: float
    n: Tuple[float, ...]
    u: Tuple[float, float, float]
    T: float
    H: float
    H_free: float
    W_mech: float
    W_chem: float
    E: float = 0.0

    def row(self) -> List[Any]:
        return [self.step, self.t, *self.n, *self.u, self.T, self.H, self.W_mech, self.W_chem, self.H_free]


@dataclass
class RelaxTrajectory:
    """松弛轨迹与终态"""

    records: List[RelaxRecord] = field(default_factory=list)
    final: Optional[TabulatedField] = None

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def densities(self) -> np.ndarray:
        return np.array([r.n for r in self.records], dtype=float)

    def momenta(self, table: SpeciesTable) -> np.ndarray:
        """每条记录的总动量 ρu"""
        return np.array([float(np.dot(r.n, table.masses)) * np.asarray(r.u) for r in self.records])

    def header(self) -> List[str]:
        s = len(self.records[0].n) if self.records else 0
        return (["step", "t"] + [f"n_{a}" for a in range(1, s + 1)]
                + ["ux", "uy", "uz", "T", "H", "W_mech", "W_chem", "H_free"])

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for record in self.records:
                writer.writerow([_fmt(x) for x in record.row()])
        return path


def _fmt(x: Any) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _node_rates(quad: QuadratureSpec, dims: List[Any], xi: np.ndarray, I: np.ndarray,
                terms: Callable[[Dict[str, np.ndarray], np.ndarray, np.ndarray], Tuple],
                stream: Tuple[int, ...]) -> np.ndarray:
    """每个网格节点上的 Σ_内层 权重·(gain − loss)，网格节点与内层节点做外积成批求值"""
    N = len(xi)
    rates = np.zeros(N)
    chunk = max(1, GRID_EVENTS // N)
    for nodes, weight in iter_weighted_nodes(quad, dims, stream, chunk_size=chunk):
        M = len(weight)
        tiled = {k: np.tile(v, (N,) + (1,) * (np.ndim(v) - 1)) for k, v in nodes.items()}
        gain, loss = terms(tiled, np.repeat(xi, M, axis=0), np.repeat(I, M))[:2]
        values = (gain - loss).reshape(N, M)
        finite = np.isfinite(values)
        if not finite.all():
            bad = int(np.argwhere(~finite)[0][0])
            raise NumericalError("网格节点上的碰撞算子取非有限值",
                                 node={"xi": xi[bad].tolist(), "I": float(I[bad]), "stream": list(stream)})
        rates += values @ weight
    return rates


def grid_collision_rates(
    f: DistributionField,
    table: SpeciesTable,
    model: CrossSectionModel,
    channels: Sequence[ReactionChannel],
    grid: PhaseGrid,
    quad: QuadratureSpec,
    center: Center = ORIGIN,
) -> Tuple[Dict[int, np.ndarray], Dict[int, np.ndarray]]:
    """
    Q_chem 与 Q_mech 在网格全部节点上的值

    槽的划分与 q_chem_channel、q_mech 相同，内层维度与网格节点成批求值。

    Returns:
        Tuple[dict, dict]: (化学部分, 力学部分)，键为组分编号
    """
    chem = {sp.index: np.zeros(len(grid.weights[sp.index])) for sp in table}
    mech = {sp.index: np.zeros(len(grid.weights[sp.index])) for sp in table}
    for sa in table:
        alpha = sa.index
        xi, I = grid.xi[alpha], grid.I[alpha]
        for k, channel in enumerate(channels):
            for o, ordered in enumerate(channel.orderings()):
                stream = (STREAM_RELAX, alpha, k, o)
                if alpha == ordered.product:
                    dims = split_dims(quad, ConstituentCase.of_channel(table, ordered))

                    def terms(nodes: Dict[str, np.ndarray], xi_g: np.ndarray, I_g: np.ndarray,
                              ordered: ReactionChannel = ordered) -> Tuple:
                        return product_slot_terms(f, table, model, ordered, xi_g, I_g, split_args(nodes),
                                                  quad.debug_fault)

                    chem[alpha] += _node_rates(quad, dims, xi, I, terms, stream + (0,))
                for slot, slot_channel in ((1, ordered), (2, ordered.swapped())):
                    if alpha != slot_channel.reactant_a:
                        continue
                    dims = reactant_dims(quad, table, slot_channel)

                    def slot_terms(nodes: Dict[str, np.ndarray], xi_g: np.ndarray, I_g: np.ndarray,
                                   slot_channel: ReactionChannel = slot_channel) -> Tuple:
                        return reactant_slot_terms(f, table, model, slot_channel, xi_g, I_g, reactant_args(nodes))

                    chem[alpha] += _node_rates(quad, dims, xi, I, slot_terms, stream + (slot,))
        for sb in table:
            beta = sb.index
            if model.c(alpha, beta) == 0:
                continue
            dims = phase_dims(quad, table, beta, "b_", center) + split_dims(quad, ConstituentCase.of(sa, sb))

            def mech_node_terms(nodes: Dict[str, np.ndarray], xi_g: np.ndarray, I_g: np.ndarray,
                                beta: int = beta) -> Tuple:
                zb = phase_args(nodes, "b_")
                return mech_terms(f, table, model, alpha, beta, xi_g, I_g, zb["xi"], zb["I"], split_args(nodes))

            mech[alpha] += _node_rates(quad, dims, xi, I, mech_node_terms, (STREAM_RELAX, alpha, 99, beta))
    return chem, mech


def conservative_projection(rates: Dict[int, np.ndarray], tabulated: TabulatedField,
                            basis: InvariantBasis) -> Dict[int, np.ndarray]:
    """
    去掉网格速率在碰撞不变量上的分量

    Q ← Q − M_ref·ψᵀc，c 使 Σ_α Σ w ψ Q = 0；网格上的守恒量因此逐步精确守恒。
    """
    grid = tabulated.grid
    psi = {alpha: basis.evaluate(alpha, grid.xi[alpha], grid.I[alpha]) for alpha in rates}
    ref = {alpha: tabulated.reference_values(alpha) for alpha in rates}
    gram = sum((psi[a] * (grid.weights[a] * ref[a])[:, None]).T @ psi[a] for a in rates)
    moment = sum(psi[a].T @ (grid.weights[a] * rates[a]) for a in rates)
    coeffs = linalg.solve(gram, moment, assume_a="pos")
    return {a: rates[a] - ref[a] * (psi[a] @ coeffs) for a in rates}


def relax_homogeneous(
    f0: Union[DistributionField, MaxwellianParams],
    table: SpeciesTable,
    model: CrossSectionModel,
    channels: Sequence[ReactionChannel],
    dt: float,
    steps: int,
    quad: QuadratureSpec,
    kB: float = 1.0,
    conservative: bool = True,
    progress_callback: Optional[ProgressCallback] = None,
    show_progress: bool = False,
) -> RelaxTrajectory:
    """
    空间均匀松弛 ∂f/∂t = Q_chem(f) + Q_mech(f)（显式 Euler）

    f 在以初值宏观速度为中心、以 k_BT₀ 为尺度的张量网格上制表，每步在全部节点上
    求 Q_chem + Q_mech，f ← f + dt·Q。每步记录网格上的 n、u、T、H、H − Σn，
    以及以 quad 求得的 W_chem 与 W_mech。

    Args:
        f0: 初始分布场或麦克斯韦参数，必须处处为正
        dt (float): 时间步长，可为 0
        steps (int): 步数，即记录条数
        quad (QuadratureSpec): 网格与内层求积的阶数；蒙特卡罗模式按确定性规则处理
        conservative (bool): 是否把速率投影到守恒量不变的子空间
        progress_callback (Callable, optional): 进度回调函数，参数为(阶段, 当前进度, 总进度)
        show_progress (bool): 是否显示 tqdm 进度条

    Returns:
        RelaxTrajectory: 长度为 steps 的轨迹与终态

    Raises:
        StepSizeError: 某个网格节点上的 f 变为非正
        ModelDomainError: f0 在网格节点上非正
    """
    if dt < 0:
        raise UsageError("dt 不能为负")
    if steps < 1:
        raise UsageError("steps 必须为正")
    if quad.is_mc:
        logger.warning("relax: 网格松弛使用确定性规则，忽略蒙特卡罗设置")
        quad = quad.with_mode("deterministic")
    if isinstance(f0, MaxwellianParams):
        reference = f0
        f0 = maxwellian_field(f0, table, kB)
    else:
        mom = moments(f0, table, quad, kB)
        if mom.T is None or np.any(mom.n <= 0) or not mom.T > 0:
            raise ModelDomainError(f"初始场的密度与温度必须为正: n={mom.n.tolist()}, T={mom.T}")
        reference = MaxwellianParams(tuple(mom.n), mom.u, mom.T)
    center = tuple(float(x) for x in reference.u)
    rule = quad.with_scale(kB * reference.T)
    grid = phase_grid(table, rule, center)
    f = TabulatedField.from_field(f0, table, grid, reference, kB)
    basis = collision_invariant_basis(table, chemical_invariant_space(len(table), channels))
    trajectory = RelaxTrajectory()
    logger.info("relax: dt=%g steps=%d 网格节点 %s, n0=%s T0=%g", dt, steps,
                [len(grid.weights[sp.index]) for sp in table], list(reference.n), reference.T)

    iterator = range(steps)
    if show_progress:
        iterator = tqdm(iterator, desc="松弛", unit="step")
    for k in iterator:
        mom = f.moments()
        W_chem = entropy_production_chem(f, table, channels, model, rule, center)
        W_mech = entropy_production_mech(f, table, model, rule, center)
        H = f.entropy()
        trajectory.records.append(RelaxRecord(
            step=k,
            t=k * dt,
            n=tuple(float(x) for x in mom.n),
            u=tuple(float(x) for x in mom.u),
            T=float(mom.T),
            H=H,
            H_free=H - float(np.sum(mom.n)),
            W_mech=float(W_mech.value),
            W_chem=float(W_chem.value),
            E=mom.energy(table, kB),
        ))
        if progress_callback:
            progress_callback("松弛", k + 1, steps)
        chem, mech = grid_collision_rates(f, table, model, channels, grid, rule, center)
        rates = {alpha: chem[alpha] + mech[alpha] for alpha in chem}
        if conservative:
            rates = conservative_projection(rates, f, basis)
        values = f.node_values()
        for sp in table:
            nxt = values[sp.index] + dt * rates[sp.index]
            if not np.all(nxt > 0):
                bad = int(np.argmin(nxt))
                raise StepSizeError(
                    f"第 {k} 步后组分 {sp.label} 的分布在网格节点处变为非正，请减小 dt",
                    node={"step": k, "species": sp.index, "xi": grid.xi[sp.index][bad].tolist(),
                          "I": float(grid.I[sp.index][bad]), "f": float(nxt[bad])})
            values[sp.index] = nxt
        f = f.with_node_values(values)
    trajectory.final = f
    return trajectory
