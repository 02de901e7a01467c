#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
求积引擎

提供确定性张量求积规则（单位区间、指数映射半直线、球面乘积规则、
Gauss–Hermite 速度规则、广义 Gauss–Laguerre 内能规则）和重要性采样
蒙特卡罗积分。所有归约都使用固定顺序的成对求和，蒙特卡罗随机流按
(种子, 流标识, 分块序号) 派生，因此串行与并行运行逐位一致。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import gammaln, roots_genlaguerre, roots_legendre

from .exceptions import NumericalError, UsageError

logger = logging.getLogger(__name__)

MODES = ("deterministic", "monte_carlo")

# 各积分维度的默认节点数
DEFAULT_ORDERS: Dict[str, int] = {
    "unit": 6,
    "sphere": 6,
    "halfline": 16,
    "velocity": 8,
    "internal": 8,
}

DEFAULT_CHUNK = 4096

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class QuadratureSpec:
    """
    求积配置

    Args:
        mode (str): "deterministic" 或 "monte_carlo"
        orders (Mapping[str, int]): 各维度节点数，未给出的键使用 DEFAULT_ORDERS
        mc_samples (int): 每个蒙特卡罗积分的样本数
        seed (int): 64 位非负种子
        scale (float): 半直线与速度规则的能量尺度 k_B T
        workers (int): 蒙特卡罗分块并行线程数
        debug_fault (str, optional): 故障注入名称，仅用于验证检查能否发现错误
    """

    mode: str = "deterministic"
    orders: Mapping[str, int] = field(default_factory=dict)
    mc_samples: int = 20000
    seed: int = 20240607
    scale: float = 1.0
    workers: int = 1
    debug_fault: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise UsageError(f"未知的求积模式: {self.mode}")
        merged = dict(DEFAULT_ORDERS)
        merged.update(self.orders)
        for key, value in merged.items():
            if int(value) < 1:
                raise UsageError(f"节点数必须为正: {key}={value}")
        if self.mc_samples < 1:
            raise UsageError("mc_samples 必须为正")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed 必须是 64 位非负整数")
        if self.scale <= 0:
            raise UsageError("scale 必须为正")
        if self.workers < 1:
            raise UsageError("workers 必须为正")
        object.__setattr__(self, "orders", merged)

    @property
    def is_mc(self) -> bool:
        return self.mode == "monte_carlo"

    def order(self, key: str) -> int:
        return int(self.orders[key])

    def with_scale(self, scale: float) -> "QuadratureSpec":
        return replace(self, scale=float(scale))

    def with_mode(self, mode: str) -> "QuadratureSpec":
        return replace(self, mode=mode)

    def with_orders(self, orders: Mapping[str, int]) -> "QuadratureSpec":
        """覆盖部分维度的节点数"""
        unknown = sorted(set(orders) - set(DEFAULT_ORDERS))
        if unknown:
            raise UsageError(f"未知的求积维度: {', '.join(unknown)}")
        return replace(self, orders={**self.orders, **{k: int(v) for k, v in orders.items()}})

    def refined(self, factor: int = 2) -> "QuadratureSpec":
        """节点数与样本数同时放大，用于分辨率加倍的稳定性检查"""
        orders = {k: int(v) * factor for k, v in self.orders.items()}
        return replace(self, orders=orders, mc_samples=self.mc_samples * factor)


@dataclass(frozen=True)
class Rule1D:
    """一维求积规则，lower/upper 给出积分区间（upper 可为 inf）"""

    nodes: np.ndarray
    weights: np.ndarray
    lower: float = 0.0
    upper: float = 1.0

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class SphereRule:
    """单位球面求积规则，对次数不超过 2*order-1 的球面多项式精确"""

    points: np.ndarray
    weights: np.ndarray
    order: int

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class PointRule:
    """多维点集规则（例如速度空间张量 Gauss–Hermite 规则）"""

    points: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)


Rule = Union[Rule1D, SphereRule, PointRule]


@dataclass(frozen=True)
class Estimate:
    """
    积分估计值

    确定性求积的 std_error 恒为 0；value 可以是标量或数组。
    """

    value: Any
    std_error: Any
    n_samples: int

    def __add__(self, other: "Estimate") -> "Estimate":
        return Estimate(
            value=self.value + other.value,
            std_error=np.sqrt(np.square(self.std_error) + np.square(other.std_error)),
            n_samples=self.n_samples + other.n_samples,
        )

    def scaled(self, factor: float) -> "Estimate":
        return Estimate(self.value * factor, np.abs(factor) * self.std_error, self.n_samples)

    def component(self, index: Any) -> "Estimate":
        """取出向量值估计的一个分量"""
        return Estimate(
            float(np.asarray(self.value)[index]),
            float(np.asarray(self.std_error)[index]),
            self.n_samples,
        )

    def within(self, target: float, n_sigma: float = 3.0, atol: float = 0.0) -> bool:
        """判断 |value - target| 是否落在 n_sigma 倍标准误差（加绝对容差）之内"""
        return bool(np.all(np.abs(np.asarray(self.value) - target)
                           <= n_sigma * np.asarray(self.std_error) + atol))


def zero_estimate(shape: Tuple[int, ...] = ()) -> Estimate:
    if shape:
        return Estimate(np.zeros(shape), np.zeros(shape), 0)
    return Estimate(0.0, 0.0, 0)


def pairwise_sum(values: Any) -> Any:
    """
    沿第一维做成对求和

    求和顺序只由数组长度决定，与分块方式无关。

    Args:
        values: 形状 (N, ...) 的数组

    Returns:
        标量或形状 (...) 的数组
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 0:
        return float(x)
    if x.shape[0] == 0:
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[1:])
    while x.shape[0] > 1:
        if x.shape[0] % 2:
            x = np.concatenate([x[:-1:2] + x[1::2], x[-1:]], axis=0)
        else:
            x = x[0::2] + x[1::2]
    result = x[0]
    return float(result) if np.ndim(result) == 0 else result


def gauss_unit(n: int) -> Rule1D:
    """
    [0,1] 上的 Gauss–Legendre 规则

    Args:
        n (int): 节点数

    Returns:
        Rule1D: 权重之和为 1
    """
    if n < 1:
        raise UsageError("节点数必须至少为 1")
    x, w = roots_legendre(n)
    return Rule1D(nodes=0.5 * (x + 1.0), weights=0.5 * w, lower=0.0, upper=1.0)


def halfline_exp(n: int, scale: float = 1.0) -> Rule1D:
    """
    [0,∞) 上的指数映射规则：I = -scale·log(1-t)，t 取 [0,1] 上的 Gauss 节点

    Args:
        n (int): 节点数
        scale (float): 映射尺度，通常取 k_B T

    Returns:
        Rule1D: 半直线规则
    """
    if scale <= 0:
        raise UsageError("scale 必须为正")
    unit = gauss_unit(n)
    t = unit.nodes
    nodes = -scale * np.log1p(-t)
    weights = unit.weights * scale / (1.0 - t)
    return Rule1D(nodes=nodes, weights=weights, lower=0.0, upper=math.inf)


def hermite_rule(n: int, scale: float = 1.0, center: float = 0.0) -> Rule1D:
    """
    ℝ 上适配高斯衰减被积函数的 Gauss–Hermite 规则

    对 F(x) = exp(-(x-center)²/(2·scale²))·p(x)，p 为次数不超过 2n-1 的多项式时精确。
    """
    if n < 1:
        raise UsageError("节点数必须至少为 1")
    t, w = hermegauss(n)
    nodes = center + scale * t
    weights = w * scale * np.exp(0.5 * t * t)
    return Rule1D(nodes=nodes, weights=weights, lower=-math.inf, upper=math.inf)


def gamma_rule(n: int, shape: float, scale: float = 1.0) -> Rule1D:
    """
    [0,∞) 上的广义 Gauss–Laguerre 规则

    对 F(I) = I^{shape-1}·exp(-I/scale)·p(I) 精确，适合麦克斯韦内能矩。

    Args:
        n (int): 节点数
        shape (float): 形状参数，对多原子组分取 δ/2
        scale (float): 能量尺度 k_B T
    """
    if n < 1:
        raise UsageError("节点数必须至少为 1")
    if shape <= 0 or scale <= 0:
        raise UsageError("shape 与 scale 必须为正")
    a = shape - 1.0
    t, w = roots_genlaguerre(n, a)
    log_w = np.log(w) + t - a * np.log(t)
    return Rule1D(nodes=scale * t, weights=scale * np.exp(log_w), lower=0.0, upper=math.inf)


def sphere_rule(order: int) -> SphereRule:
    """
    球面乘积规则：cosθ 取 Gauss 节点，方位角均匀取 2·order 个点

    Args:
        order (int): cosθ 方向节点数

    Returns:
        SphereRule: 权重之和为 4π
    """
    if order < 1:
        raise UsageError("球面规则阶数必须至少为 1")
    mu, w_mu = roots_legendre(order)
    n_phi = 2 * order
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    mu_grid, phi_grid = np.meshgrid(mu, phi, indexing="ij")
    sin_theta = np.sqrt(1.0 - mu_grid**2)
    points = np.stack(
        [sin_theta * np.cos(phi_grid), sin_theta * np.sin(phi_grid), mu_grid], axis=-1
    ).reshape(-1, 3)
    weights = np.repeat(w_mu, n_phi) * (2.0 * math.pi / n_phi)
    return SphereRule(points=points, weights=weights, order=order)


def velocity_rule(n: int, scale: float = 1.0, center: Sequence[float] = (0.0, 0.0, 0.0)) -> PointRule:
    """三维张量 Gauss–Hermite 规则，每个方向 n 个节点"""
    center = np.asarray(center, dtype=float)
    rules = [hermite_rule(n, scale, float(c)) for c in center]
    grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r.weights for r in rules], indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = wgrids[0].ravel() * wgrids[1].ravel() * wgrids[2].ravel()
    return PointRule(points=points, weights=weights)


def _rule_arrays(rule: Rule) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(rule, Rule1D):
        return rule.nodes, rule.weights
    return rule.points, rule.weights


def _check_finite(values: np.ndarray, args: Sequence[np.ndarray], where: str) -> None:
    finite = np.isfinite(values)
    if finite.all():
        return
    bad = int(np.argwhere(~finite.reshape(values.shape[0], -1).all(axis=1))[0][0])
    node = {f"arg{i}": np.asarray(a)[bad].tolist() for i, a in enumerate(args)}
    raise NumericalError(f"{where}: 被积函数在节点处取非有限值", node=node)


def tensor_integrate(
    integrand: Callable[..., np.ndarray],
    *rules: Rule,
    chunk_size: int = 65536,
) -> Estimate:
    """
    张量积规则驱动

    integrand 按规则顺序接收各维节点数组（一维规则为 (N,)，球面/点集规则为 (N, d)），
    返回 (N,) 或 (N, k) 的值。

    Args:
        integrand (Callable): 向量化被积函数
        *rules: 参与张量积的规则

    Returns:
        Estimate: std_error 为 0
    """
    if not rules:
        raise UsageError("张量积求积至少需要一条规则")
    arrays = [_rule_arrays(rule) for rule in rules]
    sizes = tuple(len(w) for _, w in arrays)
    total = int(np.prod(sizes))
    partials: List[Any] = []
    for start in range(0, total, chunk_size):
        flat = np.arange(start, min(start + chunk_size, total))
        index = np.unravel_index(flat, sizes)
        args = [nodes[idx] for (nodes, _), idx in zip(arrays, index)]
        weight = np.ones(len(flat))
        for (_, w), idx in zip(arrays, index):
            weight = weight * w[idx]
        values = np.asarray(integrand(*args), dtype=float)
        _check_finite(values, args, "tensor_integrate")
        weighted = values * weight.reshape((-1,) + (1,) * (values.ndim - 1))
        partials.append(pairwise_sum(weighted))
    value = pairwise_sum(np.asarray(partials))
    return Estimate(value=value, std_error=np.zeros_like(value) if np.ndim(value) else 0.0,
                    n_samples=total)


class UniformUnitSampler:
    """[0,1] 上的均匀分布"""

    def draw(self, rng: np.random.Generator, size: int) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
        return (rng.random(size),), np.ones(size)


class UniformSphereSampler:
    """单位球面上的均匀分布，密度 1/(4π)"""

    def draw(self, rng: np.random.Generator, size: int) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
        z = rng.uniform(-1.0, 1.0, size)
        phi = rng.uniform(0.0, 2.0 * math.pi, size)
        s = np.sqrt(1.0 - z * z)
        points = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
        return (points,), np.full(size, 1.0 / (4.0 * math.pi))


@dataclass(frozen=True)
class ExponentialSampler:
    """[shift,∞) 上尺度为 scale 的平移指数分布"""

    scale: float = 1.0
    shift: float = 0.0

    def draw(self, rng: np.random.Generator, size: int) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
        x = rng.exponential(self.scale, size)
        return (self.shift + x,), np.exp(-x / self.scale) / self.scale


@dataclass(frozen=True)
class GammaSampler:
    """形状 shape、尺度 scale 的 Gamma 分布，对应多原子组分的麦克斯韦内能分布"""

    shape: float
    scale: float = 1.0

    def draw(self, rng: np.random.Generator, size: int) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
        x = rng.gamma(self.shape, self.scale, size)
        log_p = ((self.shape - 1.0) * np.log(x) - x / self.scale
                 - gammaln(self.shape) - self.shape * math.log(self.scale))
        return (x,), np.exp(log_p)


@dataclass(frozen=True)
class GaussianSampler:
    """三维各向同性高斯分布"""

    scale: float = 1.0
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def draw(self, rng: np.random.Generator, size: int) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
        c = np.asarray(self.center, dtype=float)
        x = c + self.scale * rng.standard_normal((size, 3))
        r2 = np.sum((x - c) ** 2, axis=-1)
        density = (2.0 * math.pi * self.scale**2) ** -1.5 * np.exp(-0.5 * r2 / self.scale**2)
        return (x,), density


class ProductSampler:
    """独立采样器的乘积：参数按顺序拼接，密度相乘"""

    def __init__(self, *parts: Any):
        self.parts = parts

    def draw(self, rng: np.random.Generator, size: int) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
        args: List[np.ndarray] = []
        density = np.ones(size)
        for part in self.parts:
            part_args, part_density = part.draw(rng, size)
            args.extend(part_args)
            density = density * part_density
        return tuple(args), density


def stream_generator(seed: int, stream: Sequence[int], chunk: int) -> np.random.Generator:
    """按 (种子, 流标识, 分块序号) 派生独立随机流"""
    key = tuple(int(k) for k in stream) + (int(chunk),)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def chunk_sizes(n: int, chunk_size: int = DEFAULT_CHUNK) -> List[int]:
    """把 n 个样本切成固定大小的分块，切分方式与线程数无关"""
    if n < 1:
        raise UsageError("样本数必须为正")
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def mc_integrate(
    integrand: Callable[..., np.ndarray],
    sampler: Any,
    n: int,
    seed: int,
    stream: Sequence[int] = (),
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> Estimate:
    """
    重要性采样蒙特卡罗积分

    每个分块独立派生随机流，分块内用成对求和得到均值与二阶中心矩，
    再按分块顺序合并，因此 workers 取任何值结果都逐位一致。

    Args:
        integrand (Callable): 向量化被积函数，参数与 sampler.draw 的输出一致
        sampler: 提供 draw(rng, size) -> (args, density) 的采样器
        n (int): 样本数
        seed (int): 种子
        stream (Sequence[int]): 流标识，区分同一种子下的不同积分
        chunk_size (int): 分块大小
        workers (int): 并行线程数

    Returns:
        Estimate: 无偏估计及其标准误差

    Raises:
        NumericalError: 样本密度为零或被积函数非有限
    """
    sizes = chunk_sizes(n, chunk_size)

    def run_chunk(k: int) -> Tuple[int, Any, Any]:
        rng = stream_generator(seed, stream, k)
        args, density = sampler.draw(rng, sizes[k])
        density = np.asarray(density, dtype=float)
        if not np.all(density > 0) or not np.all(np.isfinite(density)):
            bad = int(np.argmin(np.where(np.isfinite(density), density, -1.0)))
            raise NumericalError(
                "mc_integrate: 采样密度为零或非有限",
                node={f"arg{i}": np.asarray(a)[bad].tolist() for i, a in enumerate(args)},
            )
        values = np.asarray(integrand(*args), dtype=float)
        values = values / density.reshape((-1,) + (1,) * (values.ndim - 1))
        _check_finite(values, args, "mc_integrate")
        mean = pairwise_sum(values) / sizes[k]
        m2 = pairwise_sum((values - mean) ** 2)
        return sizes[k], mean, m2

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, range(len(sizes))))
    else:
        parts = [run_chunk(k) for k in range(len(sizes))]

    count, mean, m2 = parts[0]
    for n_b, mean_b, m2_b in parts[1:]:
        total = count + n_b
        delta = mean_b - mean
        mean = mean + delta * (n_b / total)
        m2 = m2 + m2_b + delta * delta * (count * n_b / total)
        count = total

    if count > 1:
        std_error = np.sqrt(m2 / (count - 1) / count)
    else:
        std_error = np.zeros_like(mean) if np.ndim(mean) else 0.0
    if np.ndim(mean) == 0:
        return Estimate(float(mean), float(std_error), count)
    return Estimate(mean, std_error, count)


def integrate(
    quad: QuadratureSpec,
    integrand: Callable[..., np.ndarray],
    rules: Sequence[Rule],
    sampler: Any,
    stream: Sequence[int] = (),
) -> Estimate:
    """
    按 quad.mode 在确定性规则与蒙特卡罗采样之间分派

    rules 与 sampler 的参数顺序必须一致。
    """
    if quad.is_mc:
        logger.debug("mc 积分: samples=%d seed=%d stream=%s", quad.mc_samples, quad.seed, tuple(stream))
        return mc_integrate(integrand, sampler, quad.mc_samples, quad.seed,
                            stream=stream, workers=quad.workers)
    return tensor_integrate(integrand, *rules)


@dataclass(frozen=True)
class Dimension:
    """一个命名积分维度：确定性规则与对应的采样器成对出现"""

    name: str
    rule: Rule
    sampler: Any


def velocity_dim(quad: QuadratureSpec, name: str, mass: float,
                 center: Sequence[float] = (0.0, 0.0, 0.0)) -> Dimension:
    """按质量 mass 与能量尺度 quad.scale 取热速度尺度的三维速度维度"""
    scale = math.sqrt(quad.scale / mass)
    center = tuple(float(c) for c in center)
    return Dimension(name, velocity_rule(quad.order("velocity"), scale, center),
                     GaussianSampler(scale, center))


def internal_dim(quad: QuadratureSpec, name: str, shape: float) -> Dimension:
    """形状 shape 的内能维度，对麦克斯韦内能分布精确"""
    return Dimension(name, gamma_rule(quad.order("internal"), shape, quad.scale),
                     GammaSampler(shape, quad.scale))


def halfline_dim(quad: QuadratureSpec, name: str, shift: float = 0.0) -> Dimension:
    """[shift,∞) 上的指数映射维度"""
    base = halfline_exp(quad.order("halfline"), quad.scale)
    rule = Rule1D(nodes=base.nodes + shift, weights=base.weights, lower=shift, upper=math.inf)
    return Dimension(name, rule, ExponentialSampler(quad.scale, shift))


def unit_dim(quad: QuadratureSpec, name: str) -> Dimension:
    return Dimension(name, gauss_unit(quad.order("unit")), UniformUnitSampler())


def sphere_dim(quad: QuadratureSpec, name: str) -> Dimension:
    return Dimension(name, sphere_rule(quad.order("sphere")), UniformSphereSampler())


def integrate_dims(
    quad: QuadratureSpec,
    dims: Sequence[Dimension],
    integrand: Callable[[Dict[str, np.ndarray]], np.ndarray],
    stream: Sequence[int] = (),
) -> Estimate:
    """
    在命名维度的乘积上积分

    Args:
        quad (QuadratureSpec): 求积配置
        dims (Sequence[Dimension]): 积分维度，名称不可重复
        integrand (Callable): 接收 {名称: 节点数组} 的向量化被积函数
        stream (Sequence[int]): 蒙特卡罗流标识

    Returns:
        Estimate: 积分估计
    """
    names = [d.name for d in dims]
    if len(set(names)) != len(names):
        raise UsageError(f"积分维度名称重复: {names}")

    def call(*args: np.ndarray) -> np.ndarray:
        return integrand(dict(zip(names, args)))

    return integrate(quad, call, [d.rule for d in dims],
                     ProductSampler(*[d.sampler for d in dims]), stream)


def iter_weighted_nodes(
    quad: QuadratureSpec,
    dims: Sequence[Dimension],
    stream: Sequence[int] = (),
    chunk_size: int = DEFAULT_CHUNK,
) -> Iterator[Tuple[Dict[str, np.ndarray], np.ndarray]]:
    """
    按块产生 (节点, 权重)

    确定性模式下权重是张量积求积权重；蒙特卡罗模式下是 1/(n·密度)。
    任何被积函数对各块的 Σ 权重·值 之和都是积分估计，适合矩阵值的累加。
    """
    names = [d.name for d in dims]
    if quad.is_mc:
        sampler = ProductSampler(*[d.sampler for d in dims])
        n = quad.mc_samples
        for k, size in enumerate(chunk_sizes(n, chunk_size)):
            rng = stream_generator(quad.seed, stream, k)
            args, density = sampler.draw(rng, size)
            density = np.asarray(density, dtype=float)
            if not np.all(density > 0):
                raise NumericalError("iter_weighted_nodes: 采样密度为零")
            yield dict(zip(names, args)), 1.0 / (n * density)
        return
    arrays = [_rule_arrays(d.rule) for d in dims]
    sizes = tuple(len(w) for _, w in arrays)
    total = int(np.prod(sizes))
    for start in range(0, total, chunk_size):
        flat = np.arange(start, min(start + chunk_size, total))
        index = np.unravel_index(flat, sizes)
        weight = np.ones(len(flat))
        for (_, w), idx in zip(arrays, index):
            weight = weight * w[idx]
        yield {name: nodes[idx] for name, (nodes, _), idx in zip(names, arrays, index)}, weight


def count_chunks(quad: QuadratureSpec, dims: Sequence[Dimension], chunk_size: int = DEFAULT_CHUNK) -> int:
    """iter_weighted_nodes 将产生的块数，用于进度条"""
    if quad.is_mc:
        return len(chunk_sizes(quad.mc_samples, chunk_size))
    total = int(np.prod([len(d.rule) for d in dims]))
    return -(-total // chunk_size)
