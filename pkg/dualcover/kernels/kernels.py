import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from dualcover.common.common import ConfigError, KernelError, KernelFamily, parse_spec_string


@dataclass(frozen=True)
class Kernel:
    """
    平移不变核 K(d)，d为两点距离
    """

    family: KernelFamily
    bandwidth: float  # gaussian/exponential为σ，epanechnikov为支撑半径b

    def __post_init__(self):
        KernelManager.get_param_name(self.family)
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise KernelError(f"核带宽必须为正数，当前为{self.bandwidth}！")
        object.__setattr__(self, "family", KernelFamily(self.family))

    def __call__(self, d: float) -> float:
        return kernel_eval(self, d).value

    def __str__(self):
        return f"{self.family}:{KernelManager.get_param_name(self.family)}={self.bandwidth:g}"


@dataclass(frozen=True)
class KernelEval:
    value: float
    derivative: float
    h: float  # 凹凸分界点


@dataclass(frozen=True)
class BoundExponents:
    theorem_exponent: int  # 8 + ⌈log2 ζ⌉
    illustrative_exponent: float  # 4 + log2 ζ


class KernelManager:
    _param_names: Dict[KernelFamily, str] = {
        KernelFamily.Gaussian: "sigma",
        KernelFamily.Exponential: "sigma",
        KernelFamily.Epanechnikov: "b",
    }

    @staticmethod
    def get_names():
        return [str(family) for family in KernelFamily]

    @staticmethod
    def get_param_name(family: KernelFamily | str) -> str:
        try:
            return KernelManager._param_names[KernelFamily(family)]
        except ValueError:
            raise KernelError(f"未知的核函数“{family}”，可选：{', '.join(KernelManager.get_names())}！") from None

    @staticmethod
    def from_spec(text: str) -> Kernel:
        """
        从描述字符串构造核函数，如 "gaussian:sigma=1.0"、"epanechnikov:b=2"
        :param text: 描述字符串
        :return: Kernel
        """
        try:
            name, params = parse_spec_string(text)
        except ConfigError as e:
            raise KernelError(str(e)) from e
        key = KernelManager.get_param_name(name)
        if set(params) != {key}:
            raise KernelError(f"核函数{name}需要且只需要参数{key}，当前为{sorted(params)}！")
        try:
            bandwidth = float(params[key])
        except ValueError:
            raise KernelError(f"核参数{key}={params[key]}不是数值！") from None
        return Kernel(KernelFamily(name), bandwidth)


def _check_distance(d: float):
    if d < 0 or math.isnan(d):
        raise KernelError(f"核函数的距离参数必须非负，当前为{d}！")


def kernel_eval(kernel: Kernel, d: float) -> KernelEval:
    """
    计算核函数值、导数与凹凸分界点h
    :param kernel: 核函数
    :param d: 距离，须非负
    :return: KernelEval
    """
    _check_distance(d)
    width = kernel.bandwidth
    match kernel.family:
        case KernelFamily.Gaussian:
            value = math.exp(-(d * d) / (2 * width * width))
            return KernelEval(value, -d / (width * width) * value, width)
        case KernelFamily.Exponential:
            value = math.exp(-d / width)
            return KernelEval(value, -value / width, 0.0)
        case KernelFamily.Epanechnikov:
            if d <= width:
                # d = b 处取左导数，|K'| 在 h = b 处最大
                return KernelEval(1 - (d / width) ** 2, -2 * d / (width * width), width)
            return KernelEval(0.0, 0.0, width)
    raise KernelError(f"未知的核函数“{kernel.family}”！")


def kernel_value_array(kernel: Kernel, distances: np.ndarray) -> np.ndarray:
    """
    向量化计算核函数值
    """
    distances = np.asarray(distances, dtype=np.float64)
    if np.any(distances < 0):
        raise KernelError("核函数的距离参数必须非负！")
    width = kernel.bandwidth
    match kernel.family:
        case KernelFamily.Gaussian:
            return np.exp(-(distances**2) / (2 * width * width))
        case KernelFamily.Exponential:
            return np.exp(-distances / width)
        case KernelFamily.Epanechnikov:
            return np.where(distances <= width, 1 - (distances / width) ** 2, 0.0)
    raise KernelError(f"未知的核函数“{kernel.family}”！")


def kernel_inverse(kernel: Kernel, v: float) -> float:
    """
    核函数的反函数：求d使 K(d) = v
    :param kernel: 核函数
    :param v: 核函数值，须在 (0, K(0)] 内
    :return: 距离d
    """
    if not 0 < v <= 1:
        raise KernelError(f"核函数值{v}不在(0, 1]范围内！")
    width = kernel.bandwidth
    match kernel.family:
        case KernelFamily.Gaussian:
            return width * math.sqrt(2 * math.log(1 / v))
        case KernelFamily.Exponential:
            return width * math.log(1 / v)
        case KernelFamily.Epanechnikov:
            return width * math.sqrt(1 - v)
    raise KernelError(f"未知的核函数“{kernel.family}”！")


def _check_epsilon(epsilon: float):
    if not 0 < epsilon < 1:
        raise KernelError(f"误差容限ε={epsilon}必须在(0, 1)范围内！")


def zeta(kernel: Kernel, epsilon: float) -> float:
    """
    ζ = −K'(h)·K⁻¹(ε)/ε

    exponential核按定义取正值 (−ln ε)/ε。
    :param kernel: 核函数
    :param epsilon: 误差容限ε
    :return: ζ > 0
    """
    _check_epsilon(epsilon)
    evaluation = kernel_eval(kernel, kernel_eval(kernel, 0.0).h)
    return -evaluation.derivative * kernel_inverse(kernel, epsilon) / epsilon


def kde_bound_exponents(kernel: Kernel, epsilon: float) -> BoundExponents:
    """
    KDE运行时间上界中 c_r 的指数，同时给出定理形式与示例数值形式
    """
    log_zeta = math.log2(zeta(kernel, epsilon))
    return BoundExponents(8 + math.ceil(log_zeta), 4 + log_zeta)

