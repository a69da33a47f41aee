import math
import unittest

import numpy as np

from dualcover.common.common import KernelError, KernelFamily
from dualcover.kernels.kernels import (
    Kernel,
    KernelManager,
    kde_bound_exponents,
    kernel_eval,
    kernel_inverse,
    kernel_value_array,
    zeta,
)

config = {
    "核函数": [
        Kernel(KernelFamily.Gaussian, 1.0),
        Kernel(KernelFamily.Gaussian, 0.3),
        Kernel(KernelFamily.Exponential, 1.0),
        Kernel(KernelFamily.Exponential, 2.5),
        Kernel(KernelFamily.Epanechnikov, 1.0),
        Kernel(KernelFamily.Epanechnikov, 4.0),
    ],
    # (ε, 示例指数)
    "示例指数": [(0.05, 8.89), (0.01, 11.52), (1e-5, 22.15)],
}


class TestKernelEval(unittest.TestCase):
    def test_value_at_zero(self):
        for kernel in config["核函数"]:
            assert kernel_eval(kernel, 0.0).value == 1.0, f"{kernel} 在0处的值应为1"

    def test_gaussian_slope_at_h(self):
        kernel = Kernel(KernelFamily.Gaussian, 1.0)
        evaluation = kernel_eval(kernel, kernel_eval(kernel, 0.0).h)
        assert math.isclose(-evaluation.derivative, math.exp(-0.5), rel_tol=1e-12), "−K'(h) 应为 e^{−1/2}"

    def test_inflection_points(self):
        assert kernel_eval(Kernel(KernelFamily.Gaussian, 2.0), 1.0).h == 2.0, "高斯核 h = σ"
        assert kernel_eval(Kernel(KernelFamily.Exponential, 2.0), 1.0).h == 0.0, "指数核 h = 0"
        assert kernel_eval(Kernel(KernelFamily.Epanechnikov, 3.0), 1.0).h == 3.0, "Epanechnikov核 h = b"

    def test_finite_differences(self):
        step = 1e-6
        for kernel in config["核函数"]:
            width = kernel.bandwidth
            upper = width * (0.95 if kernel.family == KernelFamily.Epanechnikov else 5.0)
            for d in np.linspace(0.01 * width, upper, 60):
                numeric = (kernel(d + step) - kernel(d - step)) / (2 * step)
                analytic = kernel_eval(kernel, d).derivative
                assert abs(numeric - analytic) < 1e-6, f"{kernel} 在 d={d:g} 处导数与差分不一致"

    def test_monotone_decrease(self):
        for kernel in config["核函数"]:
            values = [kernel(d) for d in np.linspace(0, 6 * kernel.bandwidth, 500)]
            assert all(a >= b for a, b in zip(values, values[1:])), f"{kernel} 应单调不增"
            assert min(values) >= 0.0, f"{kernel} 应非负"

    def test_slope_maximal_at_h(self):
        for kernel in config["核函数"]:
            h = kernel_eval(kernel, 0.0).h
            grid = np.concatenate([np.linspace(0, 6 * kernel.bandwidth, 1000), [h]])
            slopes = [abs(kernel_eval(kernel, d).derivative) for d in grid]
            assert max(slopes) <= abs(kernel_eval(kernel, h).derivative) + 1e-12, f"{kernel} |K'| 应在 h 处最大"

    def test_negative_distance(self):
        with self.assertRaises(KernelError):
            kernel_eval(Kernel(KernelFamily.Gaussian, 1.0), -0.1)

    def test_vectorised_matches_scalar(self):
        distances = np.linspace(0, 5, 101)
        for kernel in config["核函数"]:
            expected = [kernel(d) for d in distances]
            assert np.allclose(kernel_value_array(kernel, distances), expected, rtol=1e-14, atol=0), f"{kernel} 向量化计算不一致"


class TestKernelInverse(unittest.TestCase):
    def test_gaussian_value(self):
        d = kernel_inverse(Kernel(KernelFamily.Gaussian, 1.0), 0.05)
        assert math.isclose(d, math.sqrt(2 * math.log(20)), rel_tol=1e-12), "K⁻¹(0.05) 应为 sqrt(2 ln 20)"
        assert abs(d - 2.4477) < 1e-4, "K⁻¹(0.05) ≈ 2.4477"

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for kernel in config["核函数"]:
            for v in rng.uniform(1e-3, 1.0, 100):
                assert math.isclose(kernel(kernel_inverse(kernel, v)), v, rel_tol=1e-12), f"{kernel} 反函数往返不一致"

    def test_top_value(self):
        for kernel in config["核函数"]:
            assert kernel_inverse(kernel, 1.0) == 0.0, f"{kernel} K⁻¹(K(0)) 应为0"

    def test_out_of_range(self):
        for v in (0.0, -0.5, 1.5):
            with self.assertRaises(KernelError):
                kernel_inverse(Kernel(KernelFamily.Gaussian, 1.0), v)


class TestZeta(unittest.TestCase):
    def test_gaussian_value(self):
        value = zeta(Kernel(KernelFamily.Gaussian, 1.0), 0.05)
        assert abs(value - 29.69) < 0.01, f"高斯核 ε=0.05 时 ζ ≈ 29.69，实际{value}"
        closed_form = math.sqrt(-2 * math.log(0.05) / (math.e * 0.05**2))
        assert math.isclose(value, closed_form, rel_tol=1e-12), "高斯核 ζ 与闭式不一致"

    def test_bandwidth_invariance(self):
        for epsilon in (0.1, 0.05, 1e-3):
            a = zeta(Kernel(KernelFamily.Gaussian, 1.0), epsilon)
            b = zeta(Kernel(KernelFamily.Gaussian, 10.0), epsilon)
            assert math.isclose(a, b, rel_tol=1e-12), "高斯核 ζ 不依赖带宽"

    def test_exponential(self):
        value = zeta(Kernel(KernelFamily.Exponential, 1.0), math.exp(-1))
        assert math.isclose(value, math.e, rel_tol=1e-12), "指数核 ε = e^{−1} 时 ζ = e"

    def test_epanechnikov(self):
        value = zeta(Kernel(KernelFamily.Epanechnikov, 2.0), 0.1)
        assert math.isclose(value, 2 * math.sqrt(0.9) / 0.1, rel_tol=1e-12), "Epanechnikov核 ζ = 2sqrt(1−ε)/ε"

    def test_increasing_as_epsilon_shrinks(self):
        for kernel in config["核函数"]:
            values = [zeta(kernel, epsilon) for epsilon in (0.5, 0.1, 0.05, 0.01, 1e-4)]
            assert all(v > 0 for v in values), f"{kernel} ζ 应为正"
            assert all(a < b for a, b in zip(values, values[1:])), f"{kernel} ζ 应随 ε 减小而增大"

    def test_epsilon_range(self):
        for epsilon in (0.0, 1.0, 2.0):
            with self.assertRaises(KernelError):
                zeta(Kernel(KernelFamily.Gaussian, 1.0), epsilon)


class TestBoundExponents(unittest.TestCase):
    def test_illustrative_values(self):
        kernel = Kernel(KernelFamily.Gaussian, 1.0)
        for epsilon, expected in config["示例指数"]:
            exponents = kde_bound_exponents(kernel, epsilon)
            assert abs(exponents.illustrative_exponent - expected) < 0.01, f"ε={epsilon} 示例指数应约为{expected}"

    def test_theorem_exponent(self):
        exponents = kde_bound_exponents(Kernel(KernelFamily.Gaussian, 1.0), 0.05)
        assert exponents.theorem_exponent == 13, "ε=0.05 时 8 + ⌈log2 ζ⌉ = 13"


class TestKernelSpec(unittest.TestCase):
    def test_from_spec(self):
        assert KernelManager.from_spec("gaussian:sigma=1.5") == Kernel(KernelFamily.Gaussian, 1.5), "高斯核描述解析错误"
        assert KernelManager.from_spec("epanechnikov:b=2").bandwidth == 2.0, "Epanechnikov核描述解析错误"
        assert str(KernelManager.from_spec("exponential:sigma=0.5")) == "exponential:sigma=0.5", "核函数描述应可往返"

    def test_invalid_specs(self):
        for text in ["cosine:sigma=1", "gaussian:b=1", "gaussian:sigma=-1", "gaussian:sigma=x", "gaussian", ":sigma=1"]:
            with self.assertRaises(KernelError, msg=text):
                KernelManager.from_spec(text)

    def test_invalid_kernel(self):
        with self.assertRaises(KernelError):
            Kernel("cosine", 1.0)
        with self.assertRaises(KernelError):
            Kernel(KernelFamily.Gaussian, 0.0)
