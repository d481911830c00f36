"""
Tests for critical rates of the flat Cayley cone and index bookkeeping
"""
import pytest

from cayley.errors import BadRange, CriticalEndpoint, ParityError, RateTableMismatch
from cayley.flat_cone_spectra import (
    REFERENCE_FLAT_RATES,
    RateTable,
    compact_index_formula,
    compute_rate_table,
    extract_operator_coeffs,
    float_kernel_dim,
    homogeneous_kernel_dim,
    index_change,
    load_rate_table,
    negative_rate_kernel_dim,
    save_rate_table,
    verify_rate_table,
)

COMPUTED_FLAT_RATES = [(-3.0, 4), (0.0, 4), (1.0, 12)]


@pytest.fixture(scope="module")
def flat_table():
    return compute_rate_table(lo=-4.0, hi=2.0)


def test_operator_is_elliptic_with_exact_coefficients():
    """B_i have entries in {0, ±1} and the symbol is invertible"""
    op = extract_operator_coeffs()
    assert op.is_elliptic()
    values = {float(x) for mat in op.exact for row in mat for x in row}
    assert values <= {0.0, 1.0, -1.0}


def test_polynomial_kernels():
    """Constants give 4 solutions, linear fields 12"""
    op = extract_operator_coeffs()
    assert homogeneous_kernel_dim(op, 0) == 4
    assert homogeneous_kernel_dim(op, 1) == 12
    assert float_kernel_dim(op, 1) == 12


def test_negative_rate_kernels():
    """Green-type solutions appear at −3 only"""
    op = extract_operator_coeffs()
    assert negative_rate_kernel_dim(op, -3) == 4
    assert negative_rate_kernel_dim(op, -2) == 0
    assert negative_rate_kernel_dim(op, -1) == 0
    with pytest.raises(BadRange):
        negative_rate_kernel_dim(op, -4)


def test_computed_table(flat_table):
    """Exact multiplicities over (−4, 2)"""
    assert [(float(a), int(b)) for a, b in flat_table.entries] == COMPUTED_FLAT_RATES


def test_reference_table_disagrees_with_computation(flat_table):
    """The published table lists (−3, 1), (−1, 1); verification reports the computed one"""
    with pytest.raises(RateTableMismatch) as info:
        verify_rate_table(flat_table)
    assert "(-3.0, 4)" in str(info.value)


def test_index_change_on_both_tables(flat_table):
    """Crossing 0 and 1 adds 16 in either table"""
    assert index_change(flat_table, -0.5, 1.5) == 16
    assert index_change(REFERENCE_FLAT_RATES, -0.5, 1.5) == 16


def test_index_change_errors():
    """Critical endpoints and inverted ranges are rejected"""
    with pytest.raises(CriticalEndpoint):
        index_change(REFERENCE_FLAT_RATES, 0.0, 1.5)
    with pytest.raises(BadRange):
        index_change(REFERENCE_FLAT_RATES, 1.5, -0.5)


def test_compact_index_formula():
    """½(σ + χ) − [N]·[N] + dim 𝒮"""
    assert compact_index_formula(0, 0, 0, 0) == 0
    assert compact_index_formula(0, 2, 0, 0) == 1
    assert compact_index_formula(-16, 24, 0, 0) == 4
    with pytest.raises(ParityError):
        compact_index_formula(1, 0, 0, 0)


def test_quadric_table_ships_with_repo():
    """The quadric cone table loads from conf/"""
    table = load_rate_table()
    assert table.multiplicity(-1.0) == 2
    assert table.multiplicity(0.0) == 8
    assert table.multiplicity(1.0) == 22
    assert table.multiplicity(1.2360679775) == 6
    assert index_change(table, -0.5, 1.1) == 30


def test_saved_table_loads_back(tmp_path):
    """save_rate_table writes the lambda,d layout load_rate_table reads"""
    table = RateTable(entries=[(-1.0, 2), (0.5, 3)])
    path = save_rate_table(table, tmp_path / "rates.csv")
    assert path.read_text(encoding="utf-8").splitlines()[0] == "lambda,d"
    assert load_rate_table(path).entries == table.entries


def test_unsupported_range():
    """Rates below −3 are not computable"""
    with pytest.raises(BadRange):
        compute_rate_table(lo=-6.0, hi=0.5)
