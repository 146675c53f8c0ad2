import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abcadjust.errors import ConfigError, DomainError, TransformNotApplicable
from abcadjust.transforms import ParamTransform, StatTransform


class TestStatTransform:
    def test_aliases_and_str(self):
        t = StatTransform.parse("id, log")
        assert t.tags == ("identity", "log")
        assert str(t) == "identity,log"
        assert t.complexity == 1
        assert t.label(["xbar", "s2"]) == "xbar + log(s2)"

    def test_unknown_tag(self):
        with pytest.raises(ConfigError):
            StatTransform.parse("exp")

    def test_apply(self):
        t = StatTransform(("sqrt", "log"))
        np.testing.assert_allclose(t.apply(np.array([[4.0, math.e]])), [[2.0, 1.0]])

    def test_domain_error(self):
        with pytest.raises(DomainError):
            StatTransform(("log",)).apply(np.array([[0.0]]))

    def test_prepare_drops_rows(self):
        stats = np.column_stack([np.arange(100.0), np.ones(100)])
        mask, S, so = StatTransform(("log", "identity")).prepare(stats, [5.0, 1.0])
        assert mask.sum() == 99 and not mask[0]
        np.testing.assert_allclose(so, [math.log(5.0), 1.0])
        assert S.shape == (99, 2)

    def test_prepare_too_many_dropped(self):
        stats = np.column_stack([np.r_[np.zeros(20), np.ones(80)]])
        with pytest.raises(TransformNotApplicable):
            StatTransform(("log",)).prepare(stats, [1.0])

    def test_prepare_observed_outside(self):
        with pytest.raises(TransformNotApplicable):
            StatTransform(("log",)).prepare(np.ones((5, 1)), [-1.0])


class TestParamTransform:
    def test_log_roundtrip(self):
        t = ParamTransform.parse("log")
        x = np.array([0.5, 2.0])
        np.testing.assert_allclose(t.inverse(t.forward(x)), x, rtol=1e-14)

    def test_logit_midpoint(self):
        t = ParamTransform("logit", 0.0, 10000.0)
        assert t.forward(np.array([5000.0]))[0] == pytest.approx(0.0, abs=1e-15)

    def test_inverse_logit_stays_inside(self):
        t = ParamTransform("logit", 0.0, 1.0)
        y = t.inverse(np.array([40.0]))[0]
        assert y < 1.0
        # reference: 1 / (1 + e^-40) to 30 digits
        mpmath.mp.dps = 30
        ref = float(1 / (1 + mpmath.e ** (-40)))
        assert y <= ref

    def test_inverse_extreme_values(self):
        t = ParamTransform("logit", 2.0, 3.0)
        out = t.inverse(np.array([-1e4, 1e4, 0.0]))
        assert np.all((out > 2.0) & (out < 3.0))
        out = ParamTransform.parse("log").inverse(np.array([-1e4, 1e4]))
        assert out[0] > 0 and np.isfinite(out[1])

    @pytest.mark.parametrize(
        "support, kind",
        [((0.0, math.inf), "log"), ((0.0, 10000.0), "logit"), ((-math.inf, math.inf), "identity"), ((None, None), "identity")],
    )
    def test_from_support(self, support, kind):
        assert ParamTransform.from_support(*support).kind == kind

    def test_from_support_shifted_half_line(self):
        with pytest.raises(ConfigError):
            ParamTransform.from_support(1.0, math.inf)

    def test_parse(self):
        t = ParamTransform.parse("logit(0, 10000)")
        assert (t.kind, t.lower, t.upper) == ("logit", 0.0, 10000.0)
        assert str(t) == "logit(0,10000)"
        with pytest.raises(ConfigError):
            ParamTransform.parse("probit")

    def test_domain_error_names_draw(self):
        with pytest.raises(DomainError, match="draw 2"):
            ParamTransform.parse("log").forward(np.array([1.0, 2.0, -3.0]))

    def test_jacobian(self):
        t = ParamTransform("logit", 1.0, 5.0)
        x = np.array([1.5, 3.0, 4.9])
        h = 1e-6
        fd = (t.forward(x + h) - t.forward(x - h)) / (2 * h)
        np.testing.assert_allclose(np.exp(t.log_abs_derivative(x)), fd, rtol=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(y=st.floats(-1e6, 1e6), lo=st.floats(-100, 100), width=st.floats(1e-3, 1e4))
    def test_backward_image_in_support(self, y, lo, width):
        t = ParamTransform("logit", lo, lo + width)
        assert bool(t.contains(t.inverse(np.array([y])))[0])
        assert bool(ParamTransform.parse("log").contains(ParamTransform.parse("log").inverse(np.array([y])))[0])
