"""Derivative-free 1-D search helpers shared by fitting and calibration."""

from __future__ import annotations

import math

import numpy as np

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # 1/phi


class CountingObjective:
    """Wraps a scalar objective, counting evaluations and tracking the best point."""

    def __init__(self, fn):
        self.fn = fn
        self.evaluations = 0
        self.best_x = None
        self.best_f = math.inf

    def __call__(self, x: float) -> float:
        value = float(self.fn(x))
        self.evaluations += 1
        if value < self.best_f:
            self.best_f = value
            self.best_x = x
        return value


def golden_section(fn, a: float, b: float, tol: float = 1e-6, max_evals: int = 100):
    """Golden-section minimization of fn on [a, b].

    Shrinks the bracket until |b - a| < tol or max_evals objective calls
    have been spent. Returns (x, f(x)) for the best point seen.
    """
    counting = fn if isinstance(fn, CountingObjective) else CountingObjective(fn)
    start_evals = counting.evaluations
    c = b - (b - a) * _INV_PHI
    d = a + (b - a) * _INV_PHI
    fc = counting(c)
    fd = counting(d)
    while (b - a) > tol and (counting.evaluations - start_evals) < max_evals:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * _INV_PHI
            fc = counting(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * _INV_PHI
            fd = counting(d)
    return counting.best_x, counting.best_f


def grid_then_golden(fn, lo: float, hi: float, grid_points: int = 64, tol: float = 1e-6,
                     golden_budget: int = 100):
    """Coarse uniform grid probe followed by golden-section refinement.

    The refinement bracket is one grid spacing either side of the best probe
    (clipped to [lo, hi]). Returns (x, f(x), evaluations); the returned value
    is never worse than any probe.
    """
    counting = CountingObjective(fn)
    xs = np.linspace(lo, hi, grid_points)
    for x in xs:
        counting(float(x))
    spacing = (hi - lo) / (grid_points - 1)
    a = max(lo, counting.best_x - spacing)
    b = min(hi, counting.best_x + spacing)
    golden_section(counting, a, b, tol=tol, max_evals=golden_budget)
    return counting.best_x, counting.best_f, counting.evaluations
