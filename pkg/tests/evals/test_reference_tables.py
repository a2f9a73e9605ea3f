"""
Reproduction checks: each benchmark table against its reference gates.

These run the full default sample sizes and take minutes; deselect with
``-m "not slow"``.
"""

from pathlib import Path

import pytest

from src.evaluation.benchmark_tables import check_table, load_reference, run_benchmark

REFERENCE = load_reference(Path(__file__).with_name("reference_tables.json"))

pytestmark = pytest.mark.slow


def assert_checks(table):
    failed = [f"{c.row}: {c.detail}" for c in check_table(table, REFERENCE) if not c.passed]
    assert not failed, failed


@pytest.mark.parametrize("table_id", [1, 2, 4, 6, 12])
def test_reference_gates(table_id):
    assert_checks(run_benchmark(table_id))


def test_gamma_table():
    table = run_benchmark(3)
    assert_checks(table)
    frame = table.frame
    upper = frame[(frame["event"] == "upper") & (frame["a"] == 20.0)].set_index("arm")["vr_factor"]
    assert upper["theta+eta"] >= 0.5 * max(upper["theta"], upper["eta"])
    inverse = frame[(frame["event"] == "inverse_upper") & (frame["a"] == 1.5)].set_index("arm")["vr_factor"]
    assert inverse["eta"] > inverse["theta"]


def test_mixture_table():
    table = run_benchmark(5)
    assert_checks(table)
    frame = table.frame
    row = frame[frame["a"] == 8.0].set_index("arm")["vr_factor"]
    assert row["mu+theta"] > row["mu+sigma"]
    assert any("not tilted" in note for note in table.notes)


def test_three_factor_base_case():
    assert_checks(run_benchmark(7, grid=False))


def test_gamma_shock_tilts():
    table = run_benchmark(9)
    assert_checks(table)
    frame = table.frame
    variance = frame[frame["b"] == 0.32].set_index("tilt")["variance"]
    assert variance["mu+theta"] < variance["mu+eta"]


def test_exposure_levels_run():
    frame = run_benchmark(8, grid=False).frame
    assert set(frame["exposures"]) == {"two_level", "five_level"}
    assert frame["converged"].all()
    assert (frame["vr_factor"] > 1).all()


def test_cost_table():
    frame = run_benchmark(10).frame
    assert list(frame["b1"]) == [100, 500, 1_000, 2_000, 5_000]
    assert (frame["search_time_s"] >= 0).all()
