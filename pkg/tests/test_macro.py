import numpy as np
import pytest
from hypothesis import given, strategies as st

from cimdrop.ledger import EnergyLedger
from cimdrop.macro import MacroBank, MacroConfig, MacroError, MacroState


def test_config_validation():
    with pytest.raises(MacroError):
        MacroConfig(rows=0)
    with pytest.raises(MacroError):
        MacroConfig(vdd=0)
    with pytest.raises(MacroError):
        MacroConfig(mav_denominator="other")


def test_mav_formula():
    m = MacroState(MacroConfig(rows=2, cols=4, vdd=1.0))
    m.write_weights(np.array([[1, 1, 0, 1], [0, 0, 0, 0]]))
    assert m.evaluate_cycle([1, 1, 1, 0], 0) == pytest.approx(1.0 - 2 / 4)
    assert m.evaluate_cycle([1, 1, 1, 1], 1) == pytest.approx(1.0)
    assert m.cycle_counter == 2
    assert m.ledger.pl_precharge_cycles == 2


def test_active_denominator():
    m = MacroState(MacroConfig(rows=1, cols=4, vdd=1.0, mav_denominator="active"))
    m.write_weights(np.ones((1, 4)))
    m.set_masks([1, 1, 0, 0], [1])
    assert m.evaluate_cycle([1, 1, 1, 1], 0) == pytest.approx(0.0)


def test_masked_row_is_refused():
    m = MacroState(MacroConfig(rows=2, cols=2))
    m.set_masks([1, 1], [1, 0])
    with pytest.raises(MacroError):
        m.evaluate_cycle([1, 1], 1)
    with pytest.raises(MacroError):
        m.evaluate_rows([1, 1], [0, 1])


def test_write_validation():
    m = MacroState(MacroConfig(rows=2, cols=2))
    with pytest.raises(MacroError):
        m.write_weights(np.ones((3, 2)))
    with pytest.raises(MacroError):
        m.write_weights(np.full((2, 2), 2))
    with pytest.raises(MacroError):
        m.evaluate_cycle([1, 1, 1], 0)


@given(st.integers(1, 8), st.integers(1, 12), st.data())
def test_differential_pair_counts(rows, cols, data):
    bits = st.lists(st.integers(0, 1), min_size=cols, max_size=cols)
    W = np.array([data.draw(bits) for _ in range(rows)])
    x = np.array(data.draw(bits))
    pol = np.array(data.draw(st.lists(st.sampled_from([-1, 1]), min_size=cols, max_size=cols)))
    m = MacroState(MacroConfig(rows=rows, cols=cols, vdd=1.0))
    m.write_weights(W)
    vl, vr = m.evaluate_rows(x, np.arange(rows), pol)
    left = ((W & x) * (pol > 0)).sum(axis=1)
    right = ((W & x) * (pol < 0)).sum(axis=1)
    assert np.allclose(vl, 1.0 - left / cols)
    assert np.allclose(vr, 1.0 - right / cols)
    assert m.cycle_counter == rows


def test_trace_records_both_lines(tmp_path):
    m = MacroState(MacroConfig(rows=2, cols=3), trace=True)
    m.write_weights(np.ones((2, 3)))
    m.evaluate_rows([1, 0, 1], [0, 1])
    assert len(m.trace) == 4
    m.write_trace_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "cycle,row,line,mav_v"


def test_bank_tiling_and_shared_ledger():
    led = EnergyLedger()
    bank = MacroBank(MacroConfig(), (40, 70), led)
    assert (bank.r_tiles, bank.c_tiles) == (3, 3)
    spans = [(rs.stop - rs.start, cs.stop - cs.start) for _, rs, cs in bank]
    assert sum(r for r, _ in spans[::3]) == 40
    assert sum(c for _, c in spans[:3]) == 70
    bank.tiles[0][0].idle_cycles(5)
    bank.tiles[2][1].idle_cycles(2)
    assert bank.cycle_counter == 7 and led.pl_precharge_cycles == 7


def test_wrap_checks_fit():
    with pytest.raises(MacroError):
        MacroBank.wrap(MacroState(MacroConfig(rows=2, cols=2)), (3, 2))
