import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nldp_halfspace.errors import ConfigError, InvalidInputError
from nldp_halfspace.poly_approx import (MAX_CHEBYSHEV_DEGREE, bernstein_build, bernstein_error_table,
                                        bernstein_eval, bernstein_range_tally, chebyshev_build,
                                        chebyshev_error_table, de_casteljau, h2_derivative, inspect_csv,
                                        logistic_loss, logistic_split, poly_eval_monomial, smoothed_hinge,
                                        smoothed_hinge_derivative, theoretical_bernstein_degree)

# frozen reference values (beta = 0.25, R = 1 unless noted)
BERNSTEIN_SUP_ERROR = {16: 0.025401527786189537, 128: 0.0034603005045974466, 256: 0.0017425662274453968}


class TestSmoothedHinge:
    def test_closed_form_points(self):
        # f(0) = (1 + sqrt(1 + b^2)) / 2 and f'(1/R) = -1/2 exactly
        assert smoothed_hinge(0.0, 0.25, 1.0) == pytest.approx((1 + math.sqrt(1 + 1 / 16)) / 2, abs=1e-15)
        assert smoothed_hinge_derivative(1.0, 0.25, 1.0) == -0.5

    @given(st.floats(-50, 50), st.floats(0.01, 2), st.floats(0.1, 10))
    def test_derivative_range_and_consistency(self, x, beta, R):
        d = smoothed_hinge_derivative(x, beta, R)
        assert -1.0 <= d <= 0.0
        h = 1e-5
        fd = (smoothed_hinge(x + h, beta, R) - smoothed_hinge(x - h, beta, R)) / (2 * h)
        assert d == pytest.approx(fd, abs=1e-6)

    def test_rejects_bad_smoothing(self):
        with pytest.raises(InvalidInputError):
            smoothed_hinge(0.0, 0.0, 1.0)

    def test_theoretical_degree(self):
        # p = 2 / ((alpha/4)^2 alpha)
        assert theoretical_bernstein_degree(0.5, warn=False) == 256.0
        with pytest.warns(RuntimeWarning):
            theoretical_bernstein_degree(0.1)


class TestBernstein:
    def test_coefficients_are_node_values(self):
        approx = bernstein_build(0.25, 1.0, 4)
        expected = smoothed_hinge_derivative(np.arange(5) / 4, 0.25, 1.0)
        np.testing.assert_array_equal(approx.coefficients, expected)
        assert approx.coefficients[0] == pytest.approx(0.5 * (-1 - 1 / math.sqrt(1 + 1 / 16)))
        assert approx.binomials.tolist() == [1, 4, 6, 4, 1]

    def test_endpoint_interpolation(self):
        approx = bernstein_build(0.25, 1.0, 8)
        assert bernstein_eval(approx, 0.0) == pytest.approx(approx.coefficients[0])
        assert bernstein_eval(approx, 1.0) == pytest.approx(approx.coefficients[-1])

    def test_de_casteljau_matches_power_sum(self):
        c = [0.3, -1.0, 2.0, 0.5]
        x = np.linspace(-0.5, 1.5, 11)
        direct = sum(c[j] * math.comb(3, j) * x ** j * (1 - x) ** (3 - j) for j in range(4))
        np.testing.assert_allclose(de_casteljau(c, x), direct, atol=1e-12)

    def test_out_of_range_tally(self):
        approx = bernstein_build(0.25, 1.0, 4)
        bernstein_range_tally.reset()
        bernstein_eval(approx, np.array([-0.1, 0.5, 1.2]))
        assert (bernstein_range_tally.evaluations, bernstein_range_tally.out_of_range) == (3, 2)

    def test_frozen_sup_errors(self):
        table = dict(bernstein_error_table(0.25, 1.0, list(BERNSTEIN_SUP_ERROR)))
        for p, err in BERNSTEIN_SUP_ERROR.items():
            assert table[p] == pytest.approx(err, rel=1e-9)

    def test_degree_zero_and_rejects(self):
        assert bernstein_build(0.25, 1.0, 0).coefficients.shape == (1,)
        with pytest.raises(ConfigError):
            bernstein_build(0.25, 1.0, 2.5)
        with pytest.raises(ConfigError):
            bernstein_build(0.25, 1.0, 2000)


class TestLogistic:
    @given(st.floats(-40, 40), st.sampled_from([-1.0, 1.0]))
    def test_split_identity(self, z, y):
        h1, h2 = logistic_split(z)
        assert -y * h1 + h2 == pytest.approx(float(logistic_loss(y * z)), abs=1e-12)

    def test_h2_derivative(self):
        assert h2_derivative(0.0) == 0.0
        z = np.linspace(-5, 5, 21)
        h = 1e-6
        fd = (logistic_split(z + h)[1] - logistic_split(z - h)[1]) / (2 * h)
        np.testing.assert_allclose(h2_derivative(z), fd, atol=1e-8)

    def test_c1_exact(self):
        approx = chebyshev_build(1.0, 2.0, 15)
        assert approx.c1.tolist() == [0.5] + [0.0] * 15

    def test_c2_accuracy_and_odd_symmetry(self):
        approx = chebyshev_build(1.0, 2.0, 15)
        (p, err), = chebyshev_error_table(1.0, 2.0, [15])
        assert err <= 1e-6
        # h2'(s u) is odd in u, so even monomial coefficients vanish
        assert np.abs(approx.c2[::2]).max() < 1e-10
        # leading behaviour: h2'(2u) = tanh(u)/2 = u/2 - u^3/6 + ...
        assert approx.c2[1] == pytest.approx(0.5, abs=1e-6)
        assert approx.c2[3] == pytest.approx(-1 / 6, abs=1e-5)

    def test_scaled_coefficients(self):
        approx = chebyshev_build(2.0, 1.5, 5)
        c1, c2 = approx.scaled()
        np.testing.assert_allclose(c2 * 3.0 ** np.arange(6), approx.c2)
        assert c1[0] == 0.5

    def test_monomial_horner(self):
        assert poly_eval_monomial([1.0, 2.0, 3.0], 2.0) == 17.0

    def test_rejects(self):
        with pytest.raises(ConfigError):
            chebyshev_build(1.0, 2.0, MAX_CHEBYSHEV_DEGREE + 1)
        with pytest.raises(ConfigError):
            chebyshev_build(1.0, 0.0, 3)


def test_inspect_csv_sections():
    text = inspect_csv(0.25, 1.0, 2.0, 4, [4, 8])
    rows = [line.split(",") for line in text.splitlines()[1:]]
    sections = {r[1] for r in rows}
    assert sections == {"bernstein_coefficient", "chebyshev_c1", "chebyshev_c2",
                        "bernstein_sup_error", "chebyshev_sup_error"}
    assert sum(r[1] == "bernstein_coefficient" for r in rows) == 5
