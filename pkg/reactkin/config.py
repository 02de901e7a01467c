#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
场景配置文件

JSON 格式，字段说明见 docs/CONFIG.md。未知字段一律拒绝。
"""

import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .equilibrium import ConservedQuantities, MaxwellianParams, equilibrate
from .exceptions import ConfigError, ReactkinError
from .invariants import chemical_invariant_space
from .model import CrossSectionModel, ReactionChannel, Species, SpeciesKind, SpeciesTable
from .quadrature import DEFAULT_ORDERS, MODES, QuadratureSpec

logger = logging.getLogger(__name__)

SCENARIOS = ("validate", "equilibrium", "conservation", "htheorem", "detailed_balance",
             "kernels", "spectrum", "bounds", "relax")

TOP_KEYS = {"scenario", "kB", "species", "channels", "cross_sections", "background", "quadrature",
            "options", "output"}
SPECIES_KEYS = {"name", "kind", "mass", "dof", "eps0"}
CHANNEL_KEYS = {"name", "product", "reactants", "k_transition", "c_chem"}
CROSS_SECTION_KEYS = {"eta", "c_mech"}
BACKGROUND_KEYS = {"T", "n0", "n", "u"}
QUADRATURE_KEYS = {"mode", "orders", "mc_samples", "seed", "workers"}
OUTPUT_KEYS = {"dir"}

# 各场景的可调参数及默认值
OPTION_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "validate": {},
    "equilibrium": {"points": 50, "events": 10000, "n_sigma": 3.0, "residual_tol": 1e-10},
    "conservation": {"fields": 20, "n_sigma": 3.0, "samples": 200000, "mech": True, "defect_events": 1000,
                     "defect_tol": 1e-9},
    "htheorem": {"fields": 100, "n_sigma": 3.0, "dt": 0.01, "steps": 200, "n0": None, "rtol": 1e-6,
                 "start": "maxwellian", "orders": None},
    "detailed_balance": {"events": 10000, "tol": 1e-10},
    "kernels": {"pairs": 20, "n_sigma": 3.0, "columns": 5, "drift": 0.1, "shell_width": 0.05, "det_rtol": 1e-8},
    "spectrum": {"degree": 3, "internal_degree": 2, "samples": None, "tol_null": 1e-7,
                 "symmetry_tol": 1e-10, "expected_nullspace": None, "coercivity": True, "stability_tol": 0.1},
    "bounds": {"max_speed": 20.0, "max_internal": 400.0, "points": 20, "etas": [0.0, 0.5], "drift": 0.2},
    "relax": {"dt": 0.01, "steps": 200, "n0": None, "rtol": 1e-6, "start": "maxwellian", "orders": None},
}

DEFAULT_OUTPUT_DIR = "reactkin-out"


@dataclass(frozen=True)
class BackgroundSpec:
    """
    背景麦克斯韦的配置

    给出 n 时直接使用；否则以 n0 为初值在化学不变量守恒下求平衡。
    """

    T: float = 1.0
    n0: Optional[Tuple[float, ...]] = None
    n: Optional[Tuple[float, ...]] = None
    u: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {"T": self.T, "n0": list(self.n0) if self.n0 else None,
                "n": list(self.n) if self.n else None, "u": list(self.u)}


@dataclass(frozen=True)
class ScenarioConfig:
    """
    一次 reactkin 运行的完整配置

    Args:
        scenario (str): 场景名
        table (SpeciesTable): 组分表
        channels (Tuple[ReactionChannel, ...]): 反应通道
        model (CrossSectionModel): 截面模型
        background (BackgroundSpec): 背景配置
        quad (QuadratureSpec): 求积配置（含种子）
        options (dict): 当前场景的参数，已补全默认值
        output_dir (Path): 输出目录
    """

    scenario: str
    table: SpeciesTable
    channels: Tuple[ReactionChannel, ...]
    model: CrossSectionModel
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    options: Mapping[str, Any] = field(default_factory=dict)
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)

    @property
    def kB(self) -> float:
        return self.model.kB

    @property
    def seed(self) -> int:
        return self.quad.seed

    def option(self, key: str) -> Any:
        return self.options[key]

    def with_overrides(
        self,
        seed: Optional[int] = None,
        mode: Optional[str] = None,
        samples: Optional[int] = None,
        output_dir: Optional[Union[str, Path]] = None,
        debug_fault: Optional[str] = None,
    ) -> "ScenarioConfig":
        """命令行参数覆盖配置文件中的对应字段"""
        quad_changes: Dict[str, Any] = {}
        if seed is not None:
            quad_changes["seed"] = seed
        if mode is not None:
            quad_changes["mode"] = mode
        if samples is not None:
            quad_changes["mc_samples"] = samples
        if debug_fault is not None:
            quad_changes["debug_fault"] = debug_fault
        try:
            quad = replace(self.quad, **quad_changes) if quad_changes else self.quad
        except ReactkinError as exc:
            raise ConfigError(f"命令行参数无效: {exc}") from exc
        out = Path(output_dir) if output_dir is not None else self.output_dir
        options = dict(self.options)
        if samples is not None and "samples" in options:
            options["samples"] = samples
        return replace(self, quad=quad, output_dir=out, options=options)

    def background_params(self) -> MaxwellianParams:
        """
        背景麦克斯韦参数

        Raises:
            ConfigError: 密度个数与组分数不符
        """
        bg = self.background
        s = len(self.table)
        if bg.n is not None:
            if len(bg.n) != s:
                raise ConfigError(f"background.n 需要 {s} 个密度，得到 {len(bg.n)} 个")
            return MaxwellianParams(bg.n, np.asarray(bg.u), bg.T)
        n0 = bg.n0 if bg.n0 is not None else tuple(1.0 for _ in range(s))
        if len(n0) != s:
            raise ConfigError(f"background.n0 需要 {s} 个密度，得到 {len(n0)} 个")
        U = chemical_invariant_space(s, self.channels)
        conserved = ConservedQuantities.from_densities(U, n0)
        return equilibrate(self.table, self.channels, conserved, bg.T, n0=n0, u=bg.u, kB=self.kB)

    def to_dict(self) -> Dict[str, Any]:
        """写入报告的配置回显，不含输出路径"""
        return {
            "scenario": self.scenario,
            "kB": self.kB,
            "species": [{"name": sp.label, "kind": sp.kind.value, "mass": str(sp.mass), "dof": sp.dof,
                         "eps0": sp.eps0} for sp in self.table],
            "channels": [{"name": ch.label, "product": ch.product, "reactants": [ch.reactant_a, ch.reactant_b],
                          "k_transition": ch.k_transition, "c_chem": ch.c_chem} for ch in self.channels],
            "cross_sections": {"eta": self.model.eta, "c_mech": [list(row) for row in self.model.c_mech]},
            "background": self.background.to_dict(),
            "quadrature": {"mode": self.quad.mode, "orders": dict(sorted(self.quad.orders.items())),
                           "mc_samples": self.quad.mc_samples, "seed": self.quad.seed,
                           "workers": self.quad.workers, "debug_fault": self.quad.debug_fault},
            "options": dict(self.options),
        }


def _check_keys(data: Any, allowed: set, where: str) -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} 必须是 JSON 对象")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where} 中有未知字段: {', '.join(unknown)}")
    return data


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} 必须是数值，得到 {value!r}")
    return float(value)


def _integer(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} 必须是整数，得到 {value!r}")
    return value


def _densities(value: Any, where: str) -> Tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where} 必须是非空数组")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def parse_mass(value: Any, where: str = "mass") -> Union[Fraction, float]:
    """整数与 "p/q" 字符串保持为精确有理数，浮点数原样保留"""
    if isinstance(value, bool):
        raise ConfigError(f"{where} 必须是数值或有理数字符串")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{where} 不是合法的有理数: {value!r}") from exc
    raise ConfigError(f"{where} 必须是数值或有理数字符串，得到 {value!r}")


def _parse_species(data: Any) -> SpeciesTable:
    if not isinstance(data, list) or not data:
        raise ConfigError("species 必须是非空数组")
    species: List[Species] = []
    for i, item in enumerate(data, start=1):
        where = f"species[{i - 1}]"
        item = _check_keys(item, SPECIES_KEYS, where)
        for key in ("kind", "mass", "eps0"):
            if key not in item:
                raise ConfigError(f"{where} 缺少字段 {key}")
        try:
            kind = SpeciesKind(item["kind"])
        except ValueError as exc:
            raise ConfigError(f"{where}.kind 必须是 mono 或 poly，得到 {item['kind']!r}") from exc
        if kind is SpeciesKind.POLY and "dof" not in item:
            raise ConfigError(f"{where} 是多原子组分，必须给出 dof")
        dof = _number(item.get("dof", 2), f"{where}.dof")
        name = item.get("name", "")
        if not isinstance(name, str):
            raise ConfigError(f"{where}.name 必须是字符串")
        try:
            species.append(Species(i, parse_mass(item["mass"], f"{where}.mass"), dof,
                                   _number(item["eps0"], f"{where}.eps0"), kind, name))
        except ReactkinError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    names = [sp.name for sp in species if sp.name]
    if len(names) != len(set(names)):
        raise ConfigError("组分名称重复")
    try:
        return SpeciesTable(tuple(species))
    except ReactkinError as exc:
        raise ConfigError(str(exc)) from exc


def _species_ref(table: SpeciesTable, ref: Any, where: str) -> int:
    if isinstance(ref, bool) or not isinstance(ref, (int, str)):
        raise ConfigError(f"{where} 必须是组分名称或 1 起始编号，得到 {ref!r}")
    try:
        return table.index_of(ref)
    except ReactkinError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_channels(data: Any, table: SpeciesTable) -> Tuple[ReactionChannel, ...]:
    if data is None:
        return ()
    if not isinstance(data, list):
        raise ConfigError("channels 必须是数组")
    channels: List[ReactionChannel] = []
    for i, item in enumerate(data):
        where = f"channels[{i}]"
        item = _check_keys(item, CHANNEL_KEYS, where)
        for key in ("product", "reactants", "k_transition"):
            if key not in item:
                raise ConfigError(f"{where} 缺少字段 {key}")
        reactants = item["reactants"]
        if not isinstance(reactants, list) or len(reactants) != 2:
            raise ConfigError(f"{where}.reactants 必须恰好包含两个组分")
        name = item.get("name", "")
        if not isinstance(name, str):
            raise ConfigError(f"{where}.name 必须是字符串")
        channels.append(ReactionChannel(
            _species_ref(table, item["product"], f"{where}.product"),
            _species_ref(table, reactants[0], f"{where}.reactants[0]"),
            _species_ref(table, reactants[1], f"{where}.reactants[1]"),
            _number(item["k_transition"], f"{where}.k_transition"),
            _number(item.get("c_chem", 1.0), f"{where}.c_chem"),
            name,
        ))
    return tuple(channels)


def _parse_model(data: Any, s: int, kB: float) -> CrossSectionModel:
    data = _check_keys(data or {}, CROSS_SECTION_KEYS, "cross_sections")
    eta = _number(data.get("eta", 0.0), "cross_sections.eta")
    c_mech = data.get("c_mech", 1.0)
    try:
        if isinstance(c_mech, list):
            matrix = [[_number(v, "cross_sections.c_mech") for v in row] if isinstance(row, list)
                      else _number(row, "cross_sections.c_mech") for row in c_mech]
            if len(matrix) != s or any(not isinstance(row, list) or len(row) != s for row in matrix):
                raise ConfigError(f"cross_sections.c_mech 必须是 {s}×{s} 矩阵")
            return CrossSectionModel(eta=eta, c_mech=tuple(tuple(row) for row in matrix), kB=kB)
        return CrossSectionModel.uniform(s, _number(c_mech, "cross_sections.c_mech"), eta, kB)
    except ConfigError:
        raise
    except ReactkinError as exc:
        raise ConfigError(f"cross_sections: {exc}") from exc


def _parse_background(data: Any) -> BackgroundSpec:
    data = _check_keys(data or {}, BACKGROUND_KEYS, "background")
    T = _number(data.get("T", 1.0), "background.T")
    if not T > 0:
        raise ConfigError("background.T 必须为正")
    n0 = _densities(data["n0"], "background.n0") if data.get("n0") is not None else None
    n = _densities(data["n"], "background.n") if data.get("n") is not None else None
    if n0 is not None and n is not None:
        raise ConfigError("background.n0 与 background.n 只能给出一个")
    for values, key in ((n0, "n0"), (n, "n")):
        if values is not None and any(not v > 0 for v in values):
            raise ConfigError(f"background.{key} 必须全部为正")
    u = data.get("u", [0.0, 0.0, 0.0])
    if not isinstance(u, list) or len(u) != 3:
        raise ConfigError("background.u 必须是三维向量")
    return BackgroundSpec(T, n0, n, tuple(_number(v, "background.u") for v in u))


def _parse_quadrature(data: Any) -> QuadratureSpec:
    data = _check_keys(data or {}, QUADRATURE_KEYS, "quadrature")
    kwargs: Dict[str, Any] = {}
    if "mode" in data:
        if data["mode"] not in MODES:
            raise ConfigError(f"quadrature.mode 必须是 {' / '.join(MODES)} 之一，得到 {data['mode']!r}")
        kwargs["mode"] = data["mode"]
    if "orders" in data:
        orders = _check_keys(data["orders"], set(DEFAULT_ORDERS), "quadrature.orders")
        kwargs["orders"] = {k: _integer(v, f"quadrature.orders.{k}") for k, v in orders.items()}
    for key in ("mc_samples", "seed", "workers"):
        if key in data:
            kwargs[key] = _integer(data[key], f"quadrature.{key}")
    try:
        return QuadratureSpec(**kwargs)
    except ReactkinError as exc:
        raise ConfigError(f"quadrature: {exc}") from exc


def _parse_options(data: Any, scenario: str) -> Dict[str, Any]:
    data = _check_keys(data or {}, set(SCENARIOS), "options")
    defaults = OPTION_DEFAULTS[scenario]
    for name, block in data.items():
        _check_keys(block, set(OPTION_DEFAULTS[name]), f"options.{name}")
    merged = dict(defaults)
    merged.update(data.get(scenario, {}))
    return merged


def parse_config(data: Any) -> ScenarioConfig:
    """
    从已解析的 JSON 对象构造配置

    Args:
        data: JSON 对象

    Raises:
        ConfigError: 字段缺失、类型不符、未知字段、未知场景或组分引用无效
    """
    data = _check_keys(data, TOP_KEYS, "配置")
    scenario = data.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"未知场景: {scenario!r}，可选 {', '.join(SCENARIOS)}")
    if "species" not in data:
        raise ConfigError("配置缺少 species")
    kB = _number(data.get("kB", 1.0), "kB")
    table = _parse_species(data["species"])
    channels = _parse_channels(data.get("channels"), table)
    model = _parse_model(data.get("cross_sections"), len(table), kB)
    output = _check_keys(data.get("output") or {}, OUTPUT_KEYS, "output")
    out_dir = Path(output.get("dir", DEFAULT_OUTPUT_DIR))
    config = ScenarioConfig(
        scenario=scenario,
        table=table,
        channels=channels,
        model=model,
        background=_parse_background(data.get("background")),
        quad=_parse_quadrature(data.get("quadrature")),
        options=_parse_options(data.get("options"), scenario),
        output_dir=out_dir,
    )
    logger.debug("配置: scenario=%s, 组分 %d 个, 通道 %d 个", scenario, len(table), len(channels))
    return config


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """
    读取场景配置文件

    Args:
        path: JSON 文件路径

    Returns:
        ScenarioConfig: 解析后的配置

    Raises:
        ConfigError: 文件不存在、不是合法 JSON 或内容无效
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"配置文件不存在: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"配置文件不是合法 JSON: {path}: {exc}") from exc
    return parse_config(data)
