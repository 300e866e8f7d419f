import math

import pytest
from hypothesis import given, strategies as st

from lobexec.model import (
    ModelParams,
    ParameterError,
    Regime,
    ResetDistribution,
    StripGeometry,
    classify_regime,
    regime_rank,
    validate_params,
)


def test_fig1_parameters_are_valid():
    p = validate_params({"mu": 0, "v_sml": 1, "v_lrg": 3, "v0": (2, 2)})
    assert (p.v0_bid, p.v0_ask) == (2.0, 2.0)
    assert p.up_state == (1.0, 3.0) and p.down_state == (3.0, 1.0)


def test_negative_drift_rejected():
    with pytest.raises(ParameterError, match="mu must be >= 0") as err:
        validate_params({"mu": -0.1, "v_sml": 1, "v_lrg": 3, "v0": (2, 2)})
    assert err.value.field == "mu"


def test_reset_ordering_enforced():
    with pytest.raises(ParameterError, match="v_sml < v_lrg") as err:
        validate_params({"mu": 0, "v_sml": 3, "v_lrg": 1, "v0": (2, 2)})
    assert err.value.field == "v_sml"


@pytest.mark.parametrize("field,value", [("v0_bid", 0.0), ("v0_ask", -1.0),
                                         ("v_sml", 0.0), ("mu", math.nan)])
def test_field_named_in_error(field, value):
    raw = {"mu": 0, "v_sml": 1, "v_lrg": 3, "v0_bid": 2, "v0_ask": 2, field: value}
    with pytest.raises(ParameterError) as err:
        validate_params(raw)
    assert err.value.field == field


def test_missing_and_unknown_keys():
    with pytest.raises(ParameterError, match="missing parameter: v_lrg"):
        validate_params({"mu": 0, "v_sml": 1, "v0": 2})
    with pytest.raises(ParameterError, match="unknown parameter: D"):
        validate_params({"mu": 0, "v_sml": 1, "v_lrg": 3, "v0": 2, "D": 2})


def test_diffusion_fixed():
    with pytest.raises(ParameterError):
        ModelParams(diffusion=2.0)


@pytest.mark.parametrize("q,regime", [(2.0, Regime.INSTANT), (2.5, Regime.BELOW_VLRG),
                                      (3.0, Regime.BELOW_VLRG), (4.0, Regime.GENERAL)])
def test_classify_regime(q, regime):
    assert classify_regime(ModelParams(), StripGeometry(q)) is regime


def test_geometry_positive():
    with pytest.raises(ParameterError):
        StripGeometry(0.0)


def test_reset_distributions():
    d = ResetDistribution.deterministic(ModelParams())
    assert d.lrg_support == (3.0,) and d.sml_support == (1.0,)
    f = ResetDistribution.stochastic()
    assert f.lrg_support == (2.0, 2.5, 3.0, 3.5, 4.0) and f.sml_support == (0.5, 1.0, 1.5)
    with pytest.raises(ParameterError):
        ResetDistribution("discrete-uniform", (1.0, -1.0), (0.5,))


params_st = st.builds(
    lambda mu, s, gap, b, a: ModelParams(mu=mu, v_sml=s, v_lrg=s + gap, v0_bid=b, v0_ask=a),
    st.floats(0, 3), st.floats(0.05, 5), st.floats(0.01, 5), st.floats(0.05, 5),
    st.floats(0.05, 5))


@given(params_st)
def test_validate_idempotent(p):
    assert validate_params(p) == p
    assert validate_params(validate_params(p)) == p


@given(params_st, st.floats(0.01, 20), st.floats(0.0, 10))
def test_regime_monotone_in_q(p, q, dq):
    r1 = classify_regime(p, StripGeometry(q))
    r2 = classify_regime(p, StripGeometry(q + dq))
    assert regime_rank(r2) >= regime_rank(r1)
