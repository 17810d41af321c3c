import numpy as np
import pytest
from hypothesis import given, strategies as st

from cimdrop.fixedpoint import QuantMatrix, QuantVector, max_magnitude
from cimdrop.ledger import EnergyLedger
from cimdrop.macro import MacroBank, MacroConfig, MacroState
from cimdrop.mf_op import (WX, XW, build_schedule, conventional_correlate, conventional_cycles,
                           conventional_reference_matrix, correlate, mf_bitplane_execute, mf_reference,
                           mf_reference_matrix, mf_reference_parts, twos_complement_plane)


def _sign(v):
    return 1 if v >= 0 else -1


def _oracle(w, x):
    # scalar loop, independent of the vectorized reference
    return sum(_sign(xi) * abs(wi) + _sign(wi) * abs(xi) for wi, xi in zip(w, x))


@st.composite
def operand_pair(draw, max_len=31):
    n = draw(st.integers(2, 8))
    top = max_magnitude(n)
    length = draw(st.integers(1, max_len))
    ints = st.lists(st.integers(-top, top), min_size=length, max_size=length)
    return n, draw(ints), draw(ints)


def test_schedule_shape():
    s = build_schedule(6)
    assert len(s) == 10
    assert [st.selector for st in s.steps] == [XW] * 5 + [WX] * 5
    assert [st.plane for st in s.steps[:5]] == list(range(5))
    with pytest.raises(ValueError):
        build_schedule(1)


def test_conventional_cycles():
    assert [conventional_cycles(n) for n in (2, 4, 6, 8)] == [4, 16, 36, 64]


def test_sign_zero_is_positive():
    w = QuantVector.from_ints([0, 3], 4)
    x = QuantVector.from_ints([-2, 0], 4)
    # sign(0)=+1: -1*0 + 1*2 + 1*3 + 1*0
    assert mf_reference(w, x) == 5


def test_operator_is_not_linear():
    w = QuantVector.from_ints([3, -2], 4)
    x1 = QuantVector.from_ints([1, 1], 4)
    x2 = QuantVector.from_ints([2, 2], 4)
    assert mf_reference(w, x2) != 2 * mf_reference(w, x1)


@given(operand_pair())
def test_reference_matches_scalar_oracle(pair):
    n, a, b = pair
    w, x = QuantVector.from_ints(a, n), QuantVector.from_ints(b, n)
    assert mf_reference(w, x) == _oracle(a, b)
    xw, wx = mf_reference_parts(w, x)
    assert xw + wx == _oracle(a, b)


@given(operand_pair())
def test_bitplane_execution_matches_reference(pair):
    n, a, b = pair
    w, x = QuantVector.from_ints(a, n), QuantVector.from_ints(b, n)
    m = MacroState(MacroConfig(rows=1, cols=len(a)))
    assert mf_bitplane_execute(w, x, build_schedule(n), m) == mf_reference(w, x)
    assert m.cycle_counter == 2 * (n - 1)


@given(operand_pair(), st.data())
def test_masked_execution(pair, data):
    n, a, b = pair
    mask = np.array(data.draw(st.lists(st.integers(0, 1), min_size=len(a), max_size=len(a))))
    w, x = QuantVector.from_ints(a, n), QuantVector.from_ints(b, n)
    m = MacroState(MacroConfig(rows=1, cols=len(a)))
    got = mf_bitplane_execute(w, x, build_schedule(n), m, input_mask=mask)
    assert got == _oracle([ai for ai, k in zip(a, mask) if k], [bi for bi, k in zip(b, mask) if k])


def test_record_holds_per_step_partials(rng):
    n = 5
    w = QuantVector.from_ints(rng.integers(-15, 16, 10), n)
    x = QuantVector.from_ints(rng.integers(-15, 16, 10), n)
    rec = []
    mf_bitplane_execute(w, x, build_schedule(n), MacroState(MacroConfig(1, 10)), record=rec)
    assert len(rec) == 2 * (n - 1)
    total = sum(int(p[0]) << step.plane for step, _, p in rec)
    assert total == mf_reference(w, x)


def test_schedule_precision_mismatch():
    w = QuantVector.from_ints([1], 4)
    with pytest.raises(ValueError):
        mf_bitplane_execute(w, w, build_schedule(5), MacroState(MacroConfig(1, 1)))


@pytest.mark.parametrize("shape", [(5, 7), (20, 40), (33, 62)])
def test_tiled_layer_matches_matrix_reference(rng, shape):
    n = 6
    top = max_magnitude(n)
    vals = rng.integers(-top, top + 1, shape)
    W = QuantMatrix(np.where(vals < 0, -1, 1), np.abs(vals), n)
    x = QuantVector.from_ints(rng.integers(-top, top + 1, shape[1]), n)
    mask = rng.integers(0, 2, shape[1])
    bank = MacroBank(MacroConfig(), shape)
    xw, wx = correlate(W, x, bank, col_active=mask)
    exp_xw, exp_wx = mf_reference_matrix(W, x, mask)
    assert np.array_equal(xw, exp_xw) and np.array_equal(wx, exp_wx)
    # every row of every tile spends one clock per schedule step
    assert bank.cycle_counter == shape[0] * bank.c_tiles * 2 * (n - 1)


def test_row_subset_and_gated_rows_cost_clocks(rng):
    n = 4
    vals = rng.integers(-7, 8, (6, 8))
    W = QuantMatrix(np.where(vals < 0, -1, 1), np.abs(vals), n)
    x = QuantVector.from_ints(rng.integers(-7, 8, 8), n)
    bank = MacroBank(MacroConfig(rows=6, cols=8), (6, 8))
    xw, wx = correlate(W, x, bank, rows=[0, 2], gated_rows=[1, 3, 4, 5])
    ref = mf_reference_matrix(W, x)
    assert np.array_equal(xw[[0, 2]], ref[0][[0, 2]])
    assert np.all(xw[[1, 3, 4, 5]] == 0)
    assert bank.cycle_counter == 6 * 2 * (n - 1)


@pytest.mark.parametrize("n", [2, 4, 6])
def test_conventional_matches_integer_dot(rng, n):
    top = max_magnitude(n)
    vals = rng.integers(-top, top + 1, (4, 9))
    W = QuantMatrix(np.where(vals < 0, -1, 1), np.abs(vals), n)
    x = QuantVector.from_ints(rng.integers(-top, top + 1, 9), n)
    bank = MacroBank(MacroConfig(rows=4, cols=9), (4, 9))
    got = conventional_correlate(W, x, bank)
    assert np.array_equal(got, vals @ x.values)
    assert np.array_equal(got, conventional_reference_matrix(W, x))
    assert bank.cycle_counter == 4 * n * n


def test_twos_complement_planes():
    v = np.array([-3, 2, -1])
    planes = [twos_complement_plane(v, k, 3) for k in range(3)]
    back = sum(p.astype(np.int64) << k for k, p in enumerate(planes[:2])) - (planes[2].astype(np.int64) << 2)
    assert back.tolist() == v.tolist()


def test_ledger_counts_conversions_and_shift_adds(rng):
    n = 4
    w = QuantVector.from_ints(rng.integers(1, 8, 5), n)
    x = QuantVector.from_ints(rng.integers(1, 8, 5), n)
    led = EnergyLedger()
    mf_bitplane_execute(w, x, build_schedule(n), MacroState(MacroConfig(1, 5), led))
    assert led.pl_precharge_cycles == 2 * (n - 1)
    assert led.shift_add_ops == 2 * (n - 1)
