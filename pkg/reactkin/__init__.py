#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
reactkin - 反应气体混合物的 Boltzmann 碰撞算子

单原子与多原子组分、解离/复合反应的碰撞算子、平衡态与熵、
线性化算子及其谱，以及逐场景的数值检查命令行工具。
"""

from .config import ScenarioConfig, load_config
from .equilibrium import DistributionField, MaxwellianParams, TabulatedField, equilibrate, maxwellian_field
from .exceptions import (BackgroundError, ConfigError, ModelDomainError, NumericalError, ReactkinError,
                         SingularKernelError, SolverError, StepSizeError, UsageError)
from .kinematics import Zstate
from .linearized import LinearizedContext
from .model import CrossSectionModel, ReactionChannel, Species, SpeciesKind, SpeciesTable
from .quadrature import QuadratureSpec

__version__ = "1.0.0"
__author__ = "reactkin developers"

__all__ = [
    'BackgroundError',
    'ConfigError',
    'CrossSectionModel',
    'DistributionField',
    'LinearizedContext',
    'MaxwellianParams',
    'ModelDomainError',
    'NumericalError',
    'QuadratureSpec',
    'ReactionChannel',
    'ReactkinError',
    'ScenarioConfig',
    'SingularKernelError',
    'SolverError',
    'Species',
    'SpeciesKind',
    'SpeciesTable',
    'StepSizeError',
    'TabulatedField',
    'UsageError',
    'Zstate',
    'equilibrate',
    'load_config',
    'maxwellian_field',
]
