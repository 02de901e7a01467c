#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
pytest配置文件和共享fixtures
"""

import copy
import json
import shutil
import tempfile
from fractions import Fraction
from pathlib import Path

import pytest

from reactkin.equilibrium import ConservedQuantities, equilibrate
from reactkin.invariants import chemical_invariant_space
from reactkin.linearized import LinearizedContext
from reactkin.model import CrossSectionModel, ReactionChannel, Species, SpeciesKind, SpeciesTable
from reactkin.quadrature import QuadratureSpec

# 参考混合物 A + B ⇌ P 的配置
REFERENCE_CONFIG = {
    "scenario": "validate",
    "kB": 1.0,
    "species": [
        {"name": "A", "kind": "mono", "mass": 1, "eps0": 0.3},
        {"name": "B", "kind": "mono", "mass": 1, "eps0": 0.3},
        {"name": "P", "kind": "poly", "mass": 2, "dof": 3, "eps0": 0.1},
    ],
    "channels": [
        {"name": "P<->A+B", "product": "P", "reactants": ["A", "B"], "k_transition": 0.6, "c_chem": 1.0},
    ],
    "cross_sections": {"eta": 0.0, "c_mech": 1.0},
    "background": {"T": 1.0, "n0": [1.0, 1.0, 1.0]},
    "quadrature": {"mode": "deterministic", "seed": 7},
}


@pytest.fixture
def reference_table():
    """A、B 单原子，P 多原子 (δ=3)"""
    return SpeciesTable((
        Species(1, Fraction(1), 2, 0.3, SpeciesKind.MONO, "A"),
        Species(2, Fraction(1), 2, 0.3, SpeciesKind.MONO, "B"),
        Species(3, Fraction(2), 3, 0.1, SpeciesKind.POLY, "P"),
    ))


@pytest.fixture
def reference_channel():
    """通道 P ⇌ A + B，K = 0.6"""
    return ReactionChannel(3, 1, 2, 0.6, 1.0, "P<->A+B")


@pytest.fixture
def reference_model():
    return CrossSectionModel.uniform(3, 1.0)


@pytest.fixture
def poly_table():
    """两个多原子反应物 (δ=3) 与多原子产物 (δ=4)"""
    return SpeciesTable((
        Species(1, Fraction(1), 3, 0.3, SpeciesKind.POLY, "C"),
        Species(2, Fraction(1), 3, 0.3, SpeciesKind.POLY, "D"),
        Species(3, Fraction(2), 4, 0.1, SpeciesKind.POLY, "Q"),
    ))


@pytest.fixture
def poly_channel():
    return ReactionChannel(3, 1, 2, 0.6, 1.0, "Q<->C+D")


@pytest.fixture
def background(reference_table, reference_channel):
    """参考混合物在 T = 1 下的化学平衡"""
    channels = (reference_channel,)
    U = chemical_invariant_space(len(reference_table), channels)
    conserved = ConservedQuantities.from_densities(U, (1.0, 1.0, 1.0))
    return equilibrate(reference_table, channels, conserved, 1.0, n0=(1.0, 1.0, 1.0))


@pytest.fixture
def ctx(background, reference_table, reference_channel, reference_model):
    """参考混合物的线性化背景"""
    return LinearizedContext(background, reference_table, (reference_channel,), reference_model)


@pytest.fixture
def det_quad():
    """较小的确定性规则，足以让逐事件相消精确成立"""
    return QuadratureSpec(orders={"unit": 4, "sphere": 4, "halfline": 10, "velocity": 6, "internal": 6})


@pytest.fixture
def mc_quad():
    return QuadratureSpec(mode="monte_carlo", mc_samples=4000, seed=7)


@pytest.fixture
def reference_config():
    """参考混合物配置的深拷贝，测试可自由修改"""
    return copy.deepcopy(REFERENCE_CONFIG)


@pytest.fixture
def temp_output_dir():
    """创建临时输出目录"""
    temp_dir = Path(tempfile.mkdtemp(prefix='test_reactkin_'))

    yield temp_dir

    # 清理
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture
def write_config(temp_output_dir):
    """把配置写到临时目录下的 JSON 文件，返回路径"""
    def _write(data, name='config.json'):
        path = temp_output_dir / name
        path.write_text(json.dumps(data, ensure_ascii=False), encoding='utf-8')
        return path

    return _write


@pytest.fixture
def progress_tracker():
    """进度跟踪器fixture"""
    class ProgressTracker:
        def __init__(self):
            self.calls = []

        def __call__(self, stage, current, total):
            self.calls.append({
                'stage': stage,
                'current': current,
                'total': total
            })

        def get_stages(self):
            return [call['stage'] for call in self.calls]

        def get_final_progress(self, stage):
            stage_calls = [call for call in self.calls if call['stage'] == stage]
            if stage_calls:
                return stage_calls[-1]
            return None

    return ProgressTracker()
