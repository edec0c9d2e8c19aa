"""
Test package for the cnls laboratory.
Provides shared grids, the threshold and relative-error assertions.
"""

import logging
import unittest
from functools import lru_cache

import numpy as np

from src.functionals import ThresholdResult, threshold
from src.grid import RadialGrid, make_grid

logging.getLogger("numba").setLevel(logging.WARNING)


@lru_cache(maxsize=None)
def desk_grid(dim: int = 5) -> RadialGrid:
    """The default experiment grid, n = 4096 on [0, 100]."""
    return make_grid(dim, 4096, 100.0)


@lru_cache(maxsize=None)
def desk_threshold(dim: int = 5) -> ThresholdResult:
    """Threshold on the desk grid, computed once per test run."""
    return threshold(desk_grid(dim))


class LabTestCase(unittest.TestCase):
    """
    Base test case class for all lab tests.
    """

    def setUp(self):
        """Set up the shared d = 5 fixtures."""
        self.grid = desk_grid(5)
        self.m = desk_threshold(5).m

    def assert_rel_close(self, actual: float, expected: float, rel: float, msg: str = None):
        """
        Assert |actual - expected| <= rel * |expected|.

        Args:
            actual: Computed value
            expected: Reference value
            rel: Relative tolerance
            msg: Optional assertion message
        """
        err = abs(actual - expected)
        bound = rel * abs(expected)
        self.assertLessEqual(
            err, bound, msg or f"{actual!r} vs {expected!r}: relative error {err / max(abs(expected), 1e-300):.3e} > {rel:g}"
        )

    def assert_close_abs_or_rel(self, actual: float, expected: float, rel: float, abs_tol: float, msg: str = None):
        """Assert |actual - expected| <= max(rel * |expected|, abs_tol)."""
        err = abs(actual - expected)
        self.assertLessEqual(err, max(rel * abs(expected), abs_tol), msg or f"{actual!r} vs {expected!r}")

    def assert_all_finite(self, values, msg: str = None):
        """Assert an array has only finite entries."""
        self.assertTrue(np.all(np.isfinite(values)), msg or "non-finite values")
