import pytest
from hypothesis import given, strategies as st

from cimdrop.ledger import EnergyConstants, EnergyLedger

names = st.sampled_from(["pl_precharge_cycles", "adc_compare_cycles", "rng_bits", "shift_add_ops",
                         "sa_logic_symmetric_ops", "sa_logic_asymmetric_ops"])


def test_counters_are_monotone():
    led = EnergyLedger()
    with pytest.raises(ValueError):
        led.add("rng_bits", -1)


@given(st.lists(st.tuples(names, st.integers(0, 1000)), max_size=30), st.integers(0, 30))
def test_split_merge_equals_single_ledger(events, cut):
    whole, a, b = EnergyLedger(), EnergyLedger(), EnergyLedger()
    for i, (name, amt) in enumerate(events):
        whole.add(name, amt)
        (a if i < cut else b).add(name, amt)
    assert (a + b).as_dict() == whole.as_dict()
    c = EnergyConstants()
    assert c.total(a) + c.total(b) == pytest.approx(c.total(whole))


def test_sa_logic_sum_and_mean_cycles():
    led = EnergyLedger(sa_logic_symmetric_ops=3, sa_logic_asymmetric_ops=4)
    assert led.sa_logic_ops == 7 and led.as_dict()["sa_logic_ops"] == 7
    assert led.mean_conversion_cycles() == 0.0
    led.add("adc_conversions", 2)
    led.add("adc_compare_cycles", 5)
    assert led.mean_conversion_cycles() == 2.5


def test_constants_round_trip():
    c = EnergyConstants()
    assert EnergyConstants.from_dict(c.as_dict()) == c
