import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from cimdrop.analysis import MetricError, energy_report, normalized_entropy, pearson, spearman, uncertainty_report
from cimdrop.ledger import ADC_COUNTERS, COUNTERS, EnergyConstants, EnergyLedger

counts = st.lists(st.integers(0, 50), min_size=2, max_size=12).filter(lambda c: sum(c) > 0)
series = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=40)


def _two_pass_pearson(a, b):
    n = len(a)
    ma, mb = math.fsum(a) / n, math.fsum(b) / n
    cov = math.fsum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = math.fsum((x - ma) ** 2 for x in a)
    vb = math.fsum((y - mb) ** 2 for y in b)
    return cov / (math.sqrt(va) * math.sqrt(vb))


def test_entropy_extremes():
    assert normalized_entropy([30, 0, 0]) == 0.0
    assert normalized_entropy([5, 5, 5, 5]) == pytest.approx(1.0)
    assert normalized_entropy([10, 10], num_classes=4) == pytest.approx(0.5)


@given(counts)
def test_entropy_in_unit_interval(c):
    h = normalized_entropy(c)
    assert 0.0 <= h <= 1.0
    assert math.copysign(1.0, h) == 1.0


@given(counts, st.permutations(range(12)))
def test_entropy_permutation_invariant(c, perm):
    p = [c[i] for i in perm if i < len(c)]
    assert normalized_entropy(p) == pytest.approx(normalized_entropy(c))


def test_entropy_errors():
    for bad in ([5], [0, 0], [-1, 3]):
        with pytest.raises(MetricError):
            normalized_entropy(bad)
    with pytest.raises(MetricError):
        normalized_entropy([1, 2, 3], num_classes=2)


@given(series, st.data())
def test_pearson_matches_two_pass_oracle(a, data):
    b = data.draw(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=len(a), max_size=len(a)))
    # near-constant series are ill-conditioned for any formula; constants are covered below
    assume(np.ptp(a) > 1e-3 and np.ptp(b) > 1e-3)
    assert abs(pearson(a, b) - _two_pass_pearson(a, b)) < 1e-12


def test_pearson_errors():
    with pytest.raises(MetricError):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(MetricError):
        pearson([1], [1])
    with pytest.raises(MetricError):
        pearson([1, 1, 1], [1, 2, 3])


def test_spearman_monotone_and_ties():
    x = np.arange(10.0)
    assert spearman(x, np.exp(x)) == pytest.approx(1.0)
    assert spearman(x, -x ** 3) == pytest.approx(-1.0)
    assert spearman([1, 2, 2, 3], [1, 2, 2, 3]) == pytest.approx(1.0)


def test_uncertainty_report(tmp_path):
    out = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [3.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
    rep = uncertainty_report(out)
    assert rep.class_histogram.tolist() == [3, 1, 0]
    assert rep.prediction == 0
    assert np.allclose(rep.predictive_variance, out.var(axis=0))
    rep.write_csv(tmp_path / "u.csv")
    assert "normalized_entropy" in (tmp_path / "u.csv").read_text()
    with pytest.raises(MetricError):
        uncertainty_report(np.zeros((0, 3)))


def test_prediction_ties_go_to_lowest_class():
    rep = uncertainty_report(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert rep.prediction == 0


def test_energy_report_prices_counts(tmp_path):
    led = EnergyLedger(pl_precharge_cycles=10, adc_compare_cycles=4, adc_dac_precharge_cycles=4,
                       sa_logic_asymmetric_ops=4, rng_bits=2, mac_equivalents=8)
    c = EnergyConstants()
    rep = energy_report({"a": led, "b": led + led}, c)
    expect = 10 * c.pl_precharge_cycle + 4 * (c.adc_compare_cycle + c.adc_dac_precharge_cycle
                                              + c.sa_logic_asymmetric) + 2 * c.rng_bit + 8 * c.mac_equivalent
    assert rep.total("a") == pytest.approx(expect)
    assert rep.ratio("b", "a") == pytest.approx(2.0)
    assert rep.adc_share("a") == pytest.approx(sum(rep.share("a", k) for k in ADC_COUNTERS))
    assert sum(rep.share("a", k) for k in COUNTERS) == pytest.approx(1.0)
    rep.write_csv(tmp_path / "e.csv")
    assert "ratio to a" in rep.to_text()


def test_energy_constants_mapping_must_be_complete():
    with pytest.raises(KeyError, match="rng_bit"):
        energy_report(EnergyLedger(), {k: 1.0 for k in EnergyConstants().as_dict() if k != "rng_bit"})
    with pytest.raises(MetricError):
        energy_report({"z": EnergyLedger(), "y": EnergyLedger()}).ratio("y", "z")
