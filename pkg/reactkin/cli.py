#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
reactkin 命令行接口

每次运行一个场景：读取配置、执行检查、写出 report.json 与 CSV 表。
退出码 0 全部通过，2 配置或参数错误，3 检查失败或数值错误，1 其它异常。
"""

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .config import ScenarioConfig, load_config
from .equilibrium import (MaxwellianParams, detailed_balance_defect, entropy_production_chem, entropy_production_mech,
                          mass_action_rhs, maxwellian_field, random_positive_field, species_summary)
from .exceptions import ConfigError, NumericalError, ReactkinError, UsageError
from .invariants import (chemical_event_defect, chemical_invariant_space, collision_invariant_basis,
                         mechanical_event_defect)
from .kinematics import Zstate
from .linearized import (LinearizedContext, Perturbation, assemble_galerkin, build_basis,
                         coercivity_constant, collision_terms, frequency_bound_fit, frequency_grid, k2_hs_norm,
                         k_inner, kernel_k1, kernel_k1_column_integral, kernel_k3, random_perturbation,
                         spectral_report)
from .model import (CrossSectionModel, chem_bound_ratio, chem_compact_bound, mech_bound_ratio, mech_compact_bound,
                    sigma_chem, sigma_mech, sigma_mech_reverse_defect, validate)
from .operators import moment_of_q, q_chem, relax_homogeneous
from .quadrature import QuadratureSpec, stream_generator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_FAILED = 3

QUAD_ALIASES = {"det": "deterministic", "mc": "monte_carlo"}

REPORT_NAME = "report.json"
BOUNDS_NAME = "bounds.csv"
TRAJECTORY_NAME = "trajectory.csv"

# 场景内随机抽样的流标识
STREAM_POINTS = 91
STREAM_FIELDS = 92
STREAM_KERNELS = 93
STREAM_VALIDATE = 94
STREAM_RELAX = 95

BOUND_SAMPLES = 2000
# 确定性求积下逐事件相消的相对容差
CANCEL_RTOL = 1e-10
# 松弛网格与内层求积的默认节点数，relax.orders 可覆盖
RELAX_ORDERS = {"unit": 2, "sphere": 2, "halfline": 8, "velocity": 3, "internal": 2}


def progress_callback(stage: str, current: int, total: int):
    """简单的进度回调函数"""
    if total > 0:
        percent = (current / total) * 100
        print(f"\r{stage}: {percent:.1f}% ({current}/{total})", end="", flush=True)
    else:
        print(f"\r{stage}: {current}", end="", flush=True)

    if current == total:
        print()


@dataclass
class Check:
    """单项检查结果"""

    name: str
    passed: bool
    value: Any = None
    std_error: Optional[float] = None
    tolerance: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "value": self.value, "std_error": self.std_error,
                "tolerance": self.tolerance, "details": self.details}


class ScenarioRunner:
    """
    场景执行器

    Args:
        config (ScenarioConfig): 场景配置
        show_progress (bool): 是否显示进度条与进度回调
    """

    def __init__(self, config: ScenarioConfig, show_progress: bool = False):
        self.config = config
        self.show_progress = show_progress
        self.progress: Optional[Callable[[str, int, int], None]] = progress_callback if show_progress else None
        self.checks: List[Check] = []
        self.results: Dict[str, Any] = {}
        self.outputs: List[str] = []
        self.current: Optional[str] = None
        self._background: Optional[MaxwellianParams] = None
        self._ctx: Optional[LinearizedContext] = None

    @property
    def options(self) -> Dict[str, Any]:
        return dict(self.config.options)

    def stage(self, name: str) -> None:
        """记录当前检查名，数值错误时写入报告"""
        self.current = name
        logger.debug("检查: %s", name)

    def check(self, name: str, passed: bool, value: Any = None, std_error: Optional[float] = None,
              tolerance: Optional[float] = None, **details: Any) -> Check:
        item = Check(name, bool(passed), value, std_error, tolerance, details)
        self.checks.append(item)
        return item

    def rng(self, stream: int) -> np.random.Generator:
        return stream_generator(self.config.seed, (stream,), 0)

    def background(self) -> MaxwellianParams:
        if self._background is None:
            self._background = self.config.background_params()
            self.results["background"] = self._background.to_dict()
        return self._background

    def context(self, model: Optional[CrossSectionModel] = None) -> LinearizedContext:
        cfg = self.config
        if model is not None:
            return LinearizedContext(self.background(), cfg.table, cfg.channels, model, cfg.kB)
        if self._ctx is None:
            self._ctx = LinearizedContext(self.background(), cfg.table, cfg.channels, cfg.model, cfg.kB)
        return self._ctx

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)


def monte_carlo(quad: QuadratureSpec) -> QuadratureSpec:
    """跨不同节点集比较的检查只在蒙特卡罗误差意义下成立"""
    return quad if quad.is_mc else quad.with_mode("monte_carlo")


def random_point(table, alpha: int, rng: np.random.Generator, T: float, kB: float = 1.0) -> Zstate:
    """按温度 T 的麦克斯韦尺度抽取组分 α 的相空间点"""
    sp = table[alpha]
    xi = rng.standard_normal(3) * math.sqrt(kB * T / sp.m)
    if sp.is_poly:
        return Zstate.make(table, alpha, xi, float(rng.gamma(sp.dof / 2.0, kB * T)))
    return Zstate.make(table, alpha, xi)


def scenario_validate(runner: ScenarioRunner) -> None:
    """结构约束与截面族的夹逼、紧性与微观可逆性"""
    cfg = runner.config
    table, model = cfg.table, cfg.model
    runner.stage("structural_constraints")
    report = validate(table, cfg.channels)
    runner.results["species"] = species_summary(table)
    runner.results["validation"] = report.to_dict()
    runner.check("structural_constraints", report.ok, value=len(report.issues), codes=report.codes())
    if not report.ok:
        return
    rng = runner.rng(STREAM_VALIDATE)
    n = BOUND_SAMPLES
    for ch in cfg.channels:
        beta = table[ch.product]
        runner.stage(f"chem_bounds[{ch.label}]")
        g = rng.exponential(1.0, n) + 1e-3
        cos_theta = rng.uniform(-1.0, 1.0, n)
        I_star = max(ch.k_transition - beta.eps0, 0.0) + rng.exponential(1.0, n)
        family = chem_bound_ratio(lambda gp, c, I, ch=ch: sigma_chem(model, table, ch, gp, c, I),
                                  model, table, ch, g, cos_theta, I_star)
        runner.check(f"chem_bounds[{ch.label}]", family.ok, value=family.to_dict())
        compact = chem_compact_bound(model, table, ch, g, I_star, chi=0.5)
        runner.check(f"chem_compact[{ch.label}]", compact.ok, value=compact.to_dict())
    for sa in table:
        for sb in table:
            a, b = sa.index, sb.index
            if model.c(a, b) == 0:
                continue
            runner.stage(f"mech_bounds[{sa.label},{sb.label}]")
            g = rng.exponential(2.0, n) + 0.1
            I, I_s, I_p, I_sp = (rng.exponential(0.2, n) for _ in range(4))
            family = mech_bound_ratio(lambda *args, a=a, b=b: sigma_mech(model, table, a, b, *args),
                                      model, table, a, b, g, I, I_s, I_p, I_sp)
            runner.check(f"mech_bounds[{sa.label},{sb.label}]", family.ok, value=family.to_dict())
            compact = mech_compact_bound(model, table, a, b, g, I, I_s, I_p, I_sp, tau=0.5)
            runner.check(f"mech_compact[{sa.label},{sb.label}]", compact.ok, value=compact.to_dict())
            defect = np.abs(np.asarray(sigma_mech_reverse_defect(model, table, a, b, g, I, I_s, I_p, I_sp)))
            scale = float(np.max(np.abs(g * g * np.asarray(sigma_mech(model, table, a, b, g, I, I_s, I_p, I_sp)))))
            relative = float(np.max(defect)) / max(scale, 1e-300)
            runner.check(f"mech_microreversibility[{sa.label},{sb.label}]", relative <= 1e-10,
                         value=relative, tolerance=1e-10)


def _mass_action_check(runner: ScenarioRunner, params: MaxwellianParams, tol: float) -> None:
    cfg = runner.config
    report = {}
    worst = 0.0
    for ch in cfg.channels:
        n = params.density
        ratio = n(ch.reactant_a) * n(ch.reactant_b) / n(ch.product)
        rhs = mass_action_rhs(cfg.table, ch, params.T, cfg.kB)
        relative = abs(ratio - rhs) / rhs
        worst = max(worst, relative)
        report[ch.label] = {"ratio": ratio, "rhs": rhs, "relative_residual": relative}
    runner.results["mass_action"] = report
    runner.check("mass_action_residual", worst <= tol, value=worst, tolerance=tol)


def scenario_equilibrium(runner: ScenarioRunner) -> None:
    """求化学平衡，并检查 Q_chem(M) 逐点为零与细致平衡"""
    cfg, opts = runner.config, runner.options
    runner.stage("equilibrate")
    params = runner.background()
    _mass_action_check(runner, params, opts["residual_tol"])
    f = maxwellian_field(params, cfg.table, cfg.kB)
    rng = runner.rng(STREAM_POINTS)
    runner.stage("q_chem_annihilation")
    worst, failures = 0.0, []
    total = opts["points"]
    if runner.progress:
        runner.progress("Q_chem(M)", 0, total)
    for k in range(total):
        alpha = cfg.table.indices[k % len(cfg.table)]
        Z = random_point(cfg.table, alpha, rng, params.T, cfg.kB)
        value = q_chem(f, cfg.table, cfg.model, cfg.channels, alpha, Z, cfg.quad)
        scale = abs(value.gain) + abs(value.loss)
        if scale > 0:
            worst = max(worst, abs(value.value) / scale)
        if not value.within(0.0, opts["n_sigma"], atol=CANCEL_RTOL * scale):
            failures.append({"species": alpha, "xi": Z.xi.tolist(), "I": Z.internal, **value.to_dict()})
        if runner.progress:
            runner.progress("Q_chem(M)", k + 1, total)
    runner.check("q_chem_annihilation", not failures, value=worst, tolerance=CANCEL_RTOL,
                 n_points=total, failures=failures[:10])
    runner.stage("detailed_balance")
    defects = {ch.label: detailed_balance_defect(params, cfg.table, ch, opts["events"], cfg.seed, cfg.kB)
               for ch in cfg.channels}
    worst = max(defects.values(), default=0.0)
    runner.check("detailed_balance", worst <= opts["residual_tol"], value=worst,
                 tolerance=opts["residual_tol"], per_channel=defects)


def scenario_detailed_balance(runner: ScenarioRunner) -> None:
    """采样事件上 Λ(M) = 0 与质量作用律残差"""
    cfg, opts = runner.config, runner.options
    runner.stage("mass_action_residual")
    params = runner.background()
    _mass_action_check(runner, params, opts["tol"])
    for ch in cfg.channels:
        runner.stage(f"detailed_balance[{ch.label}]")
        defect = detailed_balance_defect(params, cfg.table, ch, opts["events"], cfg.seed, cfg.kB)
        runner.check(f"detailed_balance[{ch.label}]", defect <= opts["tol"], value=defect, tolerance=opts["tol"])


def scenario_conservation(runner: ScenarioRunner) -> None:
    """碰撞不变量逐事件守恒，以及随机正分布下 ⟨Q(f), ψ⟩ = 0"""
    cfg, opts = runner.config, runner.options
    table = cfg.table
    U = chemical_invariant_space(len(table), cfg.channels)
    basis = collision_invariant_basis(table, U)
    T = cfg.background.T
    runner.results["invariants"] = {"dim": basis.dim, "names": basis.names, "u_vectors": U.tolist()}
    runner.stage("event_defects")
    chem = chemical_event_defect(table, cfg.channels, basis, opts["defect_events"], cfg.seed, cfg.kB * T)
    mech = mechanical_event_defect(table, basis, opts["defect_events"], cfg.seed, cfg.kB * T)
    runner.check("chemical_event_defect", chem <= opts["defect_tol"], value=chem, tolerance=opts["defect_tol"])
    runner.check("mechanical_event_defect", mech <= opts["defect_tol"], value=mech, tolerance=opts["defect_tol"])
    rng = runner.rng(STREAM_FIELDS)
    quad = replace(monte_carlo(cfg.quad), mc_samples=int(opts["samples"])).with_scale(cfg.kB * T)
    runner.results["moment_quadrature"] = {"mode": quad.mode, "samples": quad.mc_samples}
    failures = []
    worst = 0.0
    total = opts["fields"]
    if runner.progress:
        runner.progress("守恒", 0, total)
    for k in range(total):
        f = random_positive_field(table, rng, T, cfg.kB)
        runner.stage(f"moment_of_q[{k}]")
        est = moment_of_q(f, basis.evaluate, table, cfg.model, cfg.channels, quad, include_mech=opts["mech"])
        values, stds = np.asarray(est.value, dtype=float), np.asarray(est.std_error, dtype=float)
        for i, name in enumerate(basis.names):
            value, std = float(values[i]), float(stds[i])
            sigmas = abs(value) / std if std > 0 else abs(value)
            worst = max(worst, sigmas)
            if abs(value) > opts["n_sigma"] * std:
                failures.append({"field": k, "invariant": name, "value": value, "std_error": std})
        if runner.progress:
            runner.progress("守恒", k + 1, total)
    runner.check("moment_conservation", not failures, value=worst, tolerance=opts["n_sigma"],
                 n_fields=opts["fields"], failures=failures[:10])


def _relax_start(runner: ScenarioRunner, options: Dict[str, Any]) -> Any:
    """初值：n0 与背景温度下的麦克斯韦分布，或随机正分布"""
    cfg = runner.config
    table = cfg.table
    if options["start"] == "random":
        return random_positive_field(table, runner.rng(STREAM_RELAX), cfg.background.T, cfg.kB)
    if options["start"] != "maxwellian":
        raise ConfigError(f"relax.start 必须是 maxwellian 或 random，得到 {options['start']!r}")
    n0 = options.get("n0") or cfg.background.n0 or cfg.background.n or [1.0] * len(table)
    if len(n0) != len(table):
        raise ConfigError(f"relax.n0 需要 {len(table)} 个密度，得到 {len(n0)} 个")
    return MaxwellianParams(tuple(float(x) for x in n0), np.zeros(3), cfg.background.T)


def _relax(runner: ScenarioRunner, options: Dict[str, Any]) -> None:
    """网格上的显式 Euler 松弛：H_free 单调不增，耗散非正，守恒量保持不变"""
    cfg = runner.config
    table = cfg.table
    start = _relax_start(runner, options)
    try:
        quad = cfg.quad.with_orders({**RELAX_ORDERS, **(options.get("orders") or {})})
    except UsageError as exc:
        raise ConfigError(f"relax.orders: {exc}") from exc
    runner.stage("relax")
    trajectory = relax_homogeneous(start, table, cfg.model, cfg.channels, options["dt"], options["steps"],
                                   quad, cfg.kB, progress_callback=runner.progress,
                                   show_progress=runner.show_progress)
    path = trajectory.write_csv(cfg.output_dir / TRAJECTORY_NAME)
    runner.outputs.append(path.name)
    rtol = options["rtol"]

    H_free = trajectory.column("H_free")
    increase = float(np.max(np.diff(H_free))) if len(H_free) > 1 else 0.0
    slack = rtol * max(1.0, float(np.max(np.abs(H_free))))
    runner.check("h_free_monotone", increase <= slack, value=increase, tolerance=slack)

    W = np.concatenate([trajectory.column("W_chem"), trajectory.column("W_mech")])
    w_slack = CANCEL_RTOL * max(1.0, float(np.max(np.abs(W))))
    runner.check("dissipation_nonpositive", float(np.max(W)) <= w_slack, value=float(np.max(W)),
                 tolerance=w_slack)

    U = chemical_invariant_space(len(table), cfg.channels)
    n = trajectory.densities()
    conserved = n @ U
    scale = max(float(np.max(np.abs(conserved[0]))), 1e-300)
    drift = float(np.max(np.abs(conserved - conserved[0]))) / scale
    runner.check("conserved_densities", drift <= rtol, value=drift, tolerance=rtol)

    first = trajectory.records[0]
    momenta = trajectory.momenta(table)
    rho = float(np.dot(first.n, table.masses))
    p_scale = rho * math.sqrt(cfg.kB * first.T / float(np.min(table.masses)))
    p_drift = float(np.max(np.abs(momenta - momenta[0]))) / p_scale
    runner.check("conserved_momentum", p_drift <= rtol, value=p_drift, tolerance=rtol)

    E = trajectory.column("E")
    energy_drift = float(np.max(np.abs(E - E[0]))) / abs(E[0])
    runner.check("conserved_energy", energy_drift <= rtol, value=energy_drift, tolerance=rtol)

    last = trajectory.records[-1]
    runner.results["relax"] = {
        "steps": len(trajectory),
        "start": options["start"],
        "orders": dict(quad.orders),
        "final": {"n": list(last.n), "u": list(last.u), "T": last.T},
        "H_free": [float(H_free[0]), float(H_free[-1])],
        "W_chem": [first.W_chem, last.W_chem],
        "W_mech": [first.W_mech, last.W_mech],
    }


def scenario_htheorem(runner: ScenarioRunner) -> None:
    """随机正分布的耗散非正，以及松弛轨迹上 H_free 单调"""
    cfg, opts = runner.config, runner.options
    T = cfg.background.T
    quad = cfg.quad.with_scale(cfg.kB * T)
    rng = runner.rng(STREAM_FIELDS)
    failures = []
    worst = -math.inf
    total = opts["fields"]
    if runner.progress:
        runner.progress("耗散", 0, total)
    for k in range(total):
        f = random_positive_field(cfg.table, rng, T, cfg.kB)
        runner.stage(f"entropy_production[{k}]")
        for kind, est in (("chem", entropy_production_chem(f, cfg.table, cfg.channels, cfg.model, quad)),
                          ("mech", entropy_production_mech(f, cfg.table, cfg.model, quad))):
            value, std = float(est.value), float(est.std_error)
            worst = max(worst, value)
            if value > opts["n_sigma"] * std:
                failures.append({"field": k, "kind": kind, "value": value, "std_error": std})
        if runner.progress:
            runner.progress("耗散", k + 1, total)
    runner.check("entropy_production_nonpositive", not failures, value=worst, tolerance=opts["n_sigma"],
                 failures=failures[:10])
    _relax(runner, opts)


def scenario_relax(runner: ScenarioRunner) -> None:
    _relax(runner, runner.options)


def scenario_kernels(runner: ScenarioRunner) -> None:
    """k³/k¹ 转置关系、K 的自伴性、k² 的 Hilbert–Schmidt 范数与 k¹ 列积分的有界性"""
    cfg, opts = runner.config, runner.options
    runner.stage("background")
    ctx = runner.context()
    table = cfg.table
    rng = runner.rng(STREAM_KERNELS)
    T = ctx.background.T
    for k, o, triple in ctx.ordered_triples():
        label = f"{triple.product}:{triple.reactant_a}:{triple.reactant_b}"
        runner.stage(f"k3_transpose[{label}]")
        width = None if table[triple.reactant_b].is_poly else opts["shell_width"]
        mismatch = 0.0
        for _ in range(opts["columns"]):
            Zp = random_point(table, triple.product, rng, T, cfg.kB)
            Za = random_point(table, triple.reactant_a, rng, T, cfg.kB)
            k1 = kernel_k1(ctx, triple, Zp, Za, width)
            k3 = kernel_k3(ctx, triple, Za, Zp, width)
            mismatch = max(mismatch, abs(k1 - k3))
        runner.check(f"k3_transpose[{label}]", mismatch == 0.0, value=mismatch, tolerance=0.0)

        runner.stage(f"k2_hs_norm[{label}]")
        hs = k2_hs_norm(ctx, triple, cfg.quad)
        runner.check(f"k2_hs_norm[{label}]", math.isfinite(float(hs.value)), value=float(hs.value),
                     std_error=float(hs.std_error))

        runner.stage(f"k1_column_bound[{label}]")
        coarse, fine = [], []
        for _ in range(opts["columns"]):
            Z_star = random_point(table, triple.reactant_a, rng, T, cfg.kB)
            coarse.append(float(kernel_k1_column_integral(ctx, triple, Z_star, cfg.quad).value))
            fine.append(float(kernel_k1_column_integral(ctx, triple, Z_star, cfg.quad.refined()).value))
        sup_coarse, sup_fine = max(coarse), max(fine)
        drift = abs(sup_fine - sup_coarse) / sup_fine if sup_fine > 0 else 0.0
        runner.check(f"k1_column_bound[{label}]", math.isfinite(sup_fine) and drift <= opts["drift"],
                     value=sup_fine, tolerance=opts["drift"], drift=drift, coarse=sup_coarse)

    runner.stage("l_annihilates_invariants")
    worst = 0.0
    for i in range(ctx.invariants.dim):
        h = Perturbation.from_generator(ctx, i)
        for sp in table:
            Z = random_point(table, sp.index, rng, T, cfg.kB)
            terms = collision_terms(ctx, h, sp.index, Z, cfg.quad)
            scale = abs(terms.nu_h) + abs(terms.K_h)
            if scale > 0:
                worst = max(worst, abs(terms.L_h) / scale)
    runner.check("l_annihilates_invariants", worst <= CANCEL_RTOL, value=worst, tolerance=CANCEL_RTOL)

    mc_quad = monte_carlo(cfg.quad)
    failures = []
    worst = 0.0
    total = opts["pairs"]
    if runner.progress:
        runner.progress("⟨Kh,g⟩", 0, total)
    for k in range(total):
        runner.stage(f"k_self_adjoint[{k}]")
        h = random_perturbation(ctx, rng)
        g = random_perturbation(ctx, rng)
        lhs, rhs = k_inner(ctx, h, g, mc_quad), k_inner(ctx, g, h, mc_quad)
        diff = abs(float(lhs.value) - float(rhs.value))
        std = math.hypot(float(lhs.std_error), float(rhs.std_error))
        allowed = opts["n_sigma"] * std + opts["det_rtol"] * (abs(float(lhs.value)) + abs(float(rhs.value)))
        worst = max(worst, diff / allowed if allowed > 0 else diff)
        if diff > allowed:
            failures.append({"pair": k, "Kh_g": float(lhs.value), "h_Kg": float(rhs.value), "std_error": std})
        if runner.progress:
            runner.progress("⟨Kh,g⟩", k + 1, total)
    runner.check("k_self_adjoint", not failures, value=worst, tolerance=1.0, failures=failures[:10])


def _spectrum(runner: ScenarioRunner, degree: int, internal_degree: int):
    cfg, opts = runner.config, runner.options
    ctx = runner.context()
    quad = cfg.quad
    if opts["samples"] is not None:
        quad = replace(quad, mc_samples=int(opts["samples"]))
    basis = build_basis(ctx, degree, internal_degree, quad)
    system = assemble_galerkin(ctx, basis, quad, show_progress=runner.show_progress,
                               progress_callback=runner.progress)
    return ctx, basis, system


def scenario_spectrum(runner: ScenarioRunner) -> None:
    """Galerkin 矩阵的对称性、非负性、零空间维数，以及强制常数及其在次数加一时的稳定性"""
    opts = runner.options
    runner.stage("galerkin")
    ctx, basis, system = _spectrum(runner, opts["degree"], opts["internal_degree"])
    report = spectral_report(system.A, opts["tol_null"], system.symmetry_defect)
    expected = opts["expected_nullspace"] if opts["expected_nullspace"] is not None else ctx.invariants.dim
    runner.results["basis"] = basis.to_dict()
    runner.results["spectrum"] = report.to_dict()
    runner.results["spectrum"]["nullspace_expected"] = expected
    runner.check("symmetry_defect", report.symmetry_defect <= opts["symmetry_tol"], value=report.symmetry_defect,
                 tolerance=opts["symmetry_tol"])
    runner.check("nonnegative", report.nonnegative, value=report.min_eigenvalue, tolerance=1e-8 * report.scale)
    runner.check("nullspace_dim", report.nullspace_dim == expected, value=report.nullspace_dim,
                 expected=expected)
    if opts["coercivity"]:
        runner.stage("coercivity")
        lam = coercivity_constant(system.A, system.N, opts["tol_null"])
        runner.results["coercivity"] = lam
        runner.check("coercivity", 0.0 < lam <= 1.0, value=lam)
        runner.stage("coercivity_stable")
        _, _, finer = _spectrum(runner, opts["degree"] + 1, opts["internal_degree"])
        lam_fine = coercivity_constant(finer.A, finer.N, opts["tol_null"])
        change = abs(lam_fine - lam) / lam if lam > 0 else math.inf
        runner.results["coercivity_refined"] = {"degree": opts["degree"] + 1, "value": lam_fine,
                                                "relative_change": change}
        runner.check("coercivity_stable", change < opts["stability_tol"], value=change,
                     tolerance=opts["stability_tol"], refined=lam_fine)


def scenario_bounds(runner: ScenarioRunner) -> None:
    """ν 的夹逼常数拟合，网格加密后的漂移"""
    cfg, opts = runner.config, runner.options
    rows: List[List[Any]] = []
    fits = {}
    for eta in opts["etas"]:
        runner.stage(f"frequency_bounds[eta={eta}]")
        model = CrossSectionModel(eta=float(eta), c_mech=cfg.model.c_mech, kB=cfg.kB)
        ctx = runner.context(model)
        grid = frequency_grid(cfg.table, opts["max_speed"], opts["max_internal"], opts["points"])
        fit = frequency_bound_fit(ctx, grid, cfg.quad, progress_callback=runner.progress)
        dense = frequency_bound_fit(ctx, frequency_grid(cfg.table, opts["max_speed"], opts["max_internal"],
                                                        2 * opts["points"]), cfg.quad,
                                    progress_callback=runner.progress)
        drift = max(abs(dense.nu_minus - fit.nu_minus) / fit.nu_minus,
                    abs(dense.nu_plus - fit.nu_plus) / fit.nu_plus) if fit.ok else math.inf
        fits[str(eta)] = {**fit.to_dict(), "refined": dense.to_dict(), "drift": drift}
        runner.check(f"sandwich[eta={eta}]", fit.ok and dense.ok, value=[fit.nu_minus, fit.nu_plus],
                     violations=(fit.violations + dense.violations)[:10])
        runner.check(f"bound_drift[eta={eta}]", drift <= opts["drift"], value=drift, tolerance=opts["drift"])
        for point in fit.points:
            rows.append([eta, point["species"], point["speed"], point["I"], point["nu"], point["weight"],
                         point["ratio"]])
    runner.results["frequency_bounds"] = fits
    path = cfg.output_dir / BOUNDS_NAME
    write_csv(path, ["eta", "species", "speed", "I", "nu", "weight", "ratio"], rows)
    runner.outputs.append(path.name)


SCENARIO_HANDLERS: Dict[str, Callable[[ScenarioRunner], None]] = {
    "validate": scenario_validate,
    "equilibrium": scenario_equilibrium,
    "conservation": scenario_conservation,
    "htheorem": scenario_htheorem,
    "detailed_balance": scenario_detailed_balance,
    "kernels": scenario_kernels,
    "spectrum": scenario_spectrum,
    "bounds": scenario_bounds,
    "relax": scenario_relax,
}


def _cell(x: Any) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """带表头的 CSV，小数点为 '.'"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(x) for x in row])
    return path


def jsonable(value: Any) -> Any:
    """转换为可 JSON 序列化的值；非有限浮点数写成字符串"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, Path):
        return value.name
    return value


def write_report(path: Path, report: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(jsonable(report), fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")
    return path


def run(config: ScenarioConfig, show_progress: bool = False) -> int:
    """
    执行一个场景并写出报告

    Args:
        config (ScenarioConfig): 场景配置
        show_progress (bool): 是否显示进度

    Returns:
        int: 退出码，0 表示全部检查通过，3 表示有检查失败或数值错误
    """
    runner = ScenarioRunner(config, show_progress)
    handler = SCENARIO_HANDLERS.get(config.scenario)
    if handler is None:
        raise ConfigError(f"未知场景: {config.scenario}")
    error: Optional[Dict[str, Any]] = None
    try:
        handler(runner)
    except NumericalError as exc:
        logger.error("检查 %s 出现数值错误: %s", runner.current, exc)
        error = {"type": type(exc).__name__, "message": str(exc), "check": runner.current, "node": exc.node}
    passed = error is None and runner.passed
    report = {
        "scenario": config.scenario,
        "config": config.to_dict(),
        "checks": [c.to_dict() for c in runner.checks],
        "results": runner.results,
        "outputs": sorted(runner.outputs),
        "passed": passed,
        "error": error,
    }
    write_report(config.output_dir / REPORT_NAME, report)

    for item in runner.checks:
        mark = "✅" if item.passed else "❌"
        print(f"{mark} {item.name}: {item.value}")
    if error is not None:
        print(f"❌ 数值错误（{error['check']}）: {error['message']}")
    return EXIT_OK if passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='reactkin - 反应气体混合物碰撞算子的数值检查')
    parser.add_argument('--config', required=True, help='场景配置文件 (JSON)')
    parser.add_argument('--out', help='输出目录 (覆盖配置文件中的 output.dir)')
    parser.add_argument('--seed', type=int, help='随机种子 (覆盖配置文件)')
    parser.add_argument('--quad', choices=sorted(QUAD_ALIASES), help='求积方式: det 确定性规则, mc 蒙特卡罗')
    parser.add_argument('--samples', type=int, help='蒙特卡罗样本数')
    parser.add_argument('--debug-fault', help='故障注入名称，用于确认检查能发现错误')
    parser.add_argument('--quiet', '-q', action='store_true', help='不显示进度')
    parser.add_argument('--verbose', '-v', action='store_true', help='输出调试日志')
    return parser


def main(argv: Optional[Sequence[str]] = None):
    """主函数"""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        config = load_config(args.config).with_overrides(
            seed=args.seed,
            mode=QUAD_ALIASES[args.quad] if args.quad else None,
            samples=args.samples,
            output_dir=args.out,
            debug_fault=args.debug_fault,
        )
    except ConfigError as e:
        print(f"❌ 配置错误: {e}")
        sys.exit(EXIT_CONFIG)

    print(f"场景: {config.scenario}")
    print(f"输出目录: {config.output_dir}")

    try:
        code = run(config, show_progress=not args.quiet)
    except KeyboardInterrupt:
        print("\n❌ 操作被用户中断")
        sys.exit(EXIT_ERROR)
    except ConfigError as e:
        print(f"\n❌ 配置错误: {e}")
        sys.exit(EXIT_CONFIG)
    except ReactkinError as e:
        print(f"\n❌ 输入不一致: {e}")
        sys.exit(EXIT_CONFIG)
    except Exception as e:
        print(f"\n❌ 运行失败: {str(e)}")
        sys.exit(EXIT_ERROR)

    if code == EXIT_OK:
        print(f"\n🎉 全部检查通过！")
    else:
        print(f"\n❌ 有检查未通过，详见 {config.output_dir / REPORT_NAME}")
    sys.exit(code)


if __name__ == '__main__':
    main()
