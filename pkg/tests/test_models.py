from __future__ import annotations

from fractions import Fraction
from importlib import resources

import pytest
from hypothesis import given
from hypothesis import strategies as st

from magiq.models import (OverheadModelInput, exact, fmt, golden_csv, initiator_csv,
                          load_rtt_table, model_initiator_overhead, model_provider_overhead,
                          model_proto_overhead, proto_csv, provider_csv, regional_proto_csv)


def test_proto_reference_point():
    total, amortized = model_proto_overhead(100, 10, 0, 20.33)
    assert total == Fraction("203.3") and amortized == Fraction("2.033")


def test_proto_single_cycle_and_single_request():
    assert model_proto_overhead(7, 10, 5, 1)[0] == 6
    assert model_proto_overhead(1, 3, "12.5", "20.33")[0] == Fraction("32.83")


@given(st.integers(1, 500), st.integers(1, 50), st.integers(0, 300))
def test_proto_cycles_are_ceiling(m, q, rtt):
    total, amortized = model_proto_overhead(m, q, rtt, 20)
    cycles = -(-m // q)
    assert total == (rtt + 20) * cycles and amortized * m == total


def test_provider_reference_point_and_scaling():
    assert model_provider_overhead(100, 1440, 2.96) == 296
    assert model_provider_overhead(1000, 1440, 2.96) == 2960
    assert model_provider_overhead(100, 720, 2.96) == 592
    with pytest.raises(ValueError):
        model_provider_overhead(1, 0, 1)


def test_initiator_reference_points():
    assert model_initiator_overhead(15, 1) == 175176
    assert model_initiator_overhead(1, 1) == Fraction("11678.4")
    assert model_initiator_overhead(3, 1440) == Fraction("24.33")
    with pytest.raises(ValueError):
        model_initiator_overhead(0, 1)


def test_float_inputs_are_read_as_decimals():
    assert exact(20.33) == Fraction(2033, 100)
    assert exact("2.96") == Fraction(296, 100)


def test_fmt_is_exact_or_nine_places():
    assert fmt(Fraction(2033, 1000)) == "2.033"
    assert fmt(Fraction(296)) == "296"
    assert fmt(Fraction(1, 3)) == "0.333333333"


def test_input_type_invariants():
    OverheadModelInput()
    with pytest.raises(ValueError):
        OverheadModelInput(q_max=0)
    with pytest.raises(ValueError):
        OverheadModelInput(lifetime=Fraction(2000))


def test_golden_csv_is_locked():
    shipped = resources.files("magiq").joinpath("data/golden_models.csv").read_text()
    assert golden_csv() == shipped


def test_csv_shapes():
    assert proto_csv(100, [1, 10], 0).splitlines()[2] == "100,10,0,20.33,203.3,2.033"
    assert provider_csv([100], ["1440"]).splitlines()[1] == "100,1440,2.96,296"
    assert initiator_csv([15], ["1"]).splitlines()[1] == "15,1,175176"


def test_rtt_table_is_symmetric_and_sweepable():
    table = load_rtt_table()
    assert table[("europe", "asia")] == table[("asia", "europe")]
    rows = regional_proto_csv(100, [1, 10], provider_region="us-west").splitlines()
    assert len(rows) == 1 + 4 * 2
    assert load_rtt_table("src,dst,rtt_ms\na,b,1.5\n")[("b", "a")] == Fraction(3, 2)
