#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
reactkin 异常类型

库内所有可预期的失败都从 ReactkinError 派生，CLI 根据类型映射退出码。
"""

from typing import Any, Dict, Optional


class ReactkinError(Exception):
    """reactkin 所有异常的基类"""


class ModelDomainError(ReactkinError, ValueError):
    """参数超出模型定义域（例如多原子组分在 I ≤ 0 处求 φ）"""


class UsageError(ReactkinError, ValueError):
    """调用方式错误：组分不匹配、节点数为零等"""


class ConfigError(ReactkinError, ValueError):
    """场景配置文件格式错误或前后不一致"""


class NumericalError(ReactkinError, ArithmeticError):
    """
    数值失败

    Args:
        message (str): 错误描述
        node (dict, optional): 出问题的求积节点或样本
    """

    def __init__(self, message: str, node: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.node = node or {}


class SolverError(NumericalError):
    """质量作用律求解器不收敛，residuals 记录各反应通道的残差"""

    def __init__(self, message: str, residuals: Optional[Dict[str, float]] = None):
        super().__init__(message, node=residuals)
        self.residuals = residuals or {}


class StepSizeError(NumericalError):
    """松弛过程中网格节点上的分布变为非正，需要减小时间步长"""


class SingularKernelError(NumericalError):
    """逐点核函数在单原子共反应物情形下是能量壳上的测度，需要给出 shell_width"""


class BackgroundError(ReactkinError, ValueError):
    """
    线性化背景不是化学平衡的静止麦克斯韦分布

    Args:
        message (str): 错误描述
        residuals (dict): 各反应通道的质量作用律相对残差
    """

    def __init__(self, message: str, residuals: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.residuals = residuals or {}
