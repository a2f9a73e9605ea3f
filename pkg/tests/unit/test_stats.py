"""
Unit tests for estimator summaries.
"""

import math

import numpy as np
import pytest

from src.utils.stats import combined_standard_error, summarize, vr_factor, within_standard_errors


class TestSummaries:

    def test_summarize(self):
        stats = summarize(np.array([1.0, 2.0, 3.0, 4.0]))
        assert stats.mean == 2.5
        assert stats.variance == pytest.approx(5.0 / 3.0)
        assert stats.std_error == pytest.approx(math.sqrt(5.0 / 12.0))
        assert stats.to_dict()["samples"] == 4

    def test_single_and_empty(self):
        assert summarize(np.array([0.2])).variance == 0.0
        empty = summarize(np.array([]))
        assert empty.samples == 0
        assert math.isnan(empty.mean)
        assert math.isnan(empty.std_error)

    def test_vr_factor(self):
        assert vr_factor(0.01, 0.0099 / 50) == pytest.approx(50.0)
        assert vr_factor(0.01, 0.0) == float("inf")
        assert math.isnan(vr_factor(0.0, 1.0))
        assert math.isnan(vr_factor(1.0, 1.0))

    def test_indicator_vr_is_one(self):
        values = np.zeros(1000)
        values[:100] = 1.0
        stats = summarize(values)
        # ddof=1 leaves a factor (n-1)/n
        assert stats.vr_factor == pytest.approx(999 / 1000)

    def test_standard_errors(self):
        assert combined_standard_error(3.0, 4.0) == 5.0
        assert within_standard_errors(1.2, 1.0, 0.1, k=3)
        assert not within_standard_errors(1.5, 1.0, 0.1, k=3)
