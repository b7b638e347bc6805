"""Monotone piecewise-cubic Hermite interpolation with analytic derivatives.

Node slopes follow the standard shape-preserving construction (weighted
harmonic mean of adjacent secants, zero at local extrema, one-sided
three-point rule at the ends), so the interpolant never overshoots the data.
"""

from __future__ import annotations

import numpy as np


def _edge_slope(h0, h1, d0, d1):
    # one-sided three-point estimate, clipped to preserve shape near the end
    m = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    if np.sign(m) != np.sign(d0):
        return 0.0
    if np.sign(d0) != np.sign(d1) and abs(m) > 3 * abs(d0):
        return 3 * d0
    return m


class MonotoneCubicInterpolator:
    """Piecewise-cubic Hermite fit of (x, y) with monotonicity-preserving slopes."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-D arrays of equal length")
        if len(x) < 2:
            raise ValueError("need at least two nodes")
        if np.any(np.diff(x) <= 0):
            raise ValueError("x must be strictly increasing")
        self.x = x
        self.y = y
        self.slopes = self._compute_slopes(x, y)

    @staticmethod
    def _compute_slopes(x, y):
        h = np.diff(x)
        d = np.diff(y) / h
        n = len(x)
        m = np.zeros(n)
        if n == 2:
            m[:] = d[0]
            return m
        for i in range(1, n - 1):
            if d[i - 1] == 0.0 or d[i] == 0.0 or np.sign(d[i - 1]) != np.sign(d[i]):
                m[i] = 0.0
            else:
                w1 = 2 * h[i] + h[i - 1]
                w2 = h[i] + 2 * h[i - 1]
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i])
        m[0] = _edge_slope(h[0], h[1], d[0], d[1])
        m[-1] = _edge_slope(h[-1], h[-2], d[-1], d[-2])
        return m

    def _locate(self, xq):
        idx = np.searchsorted(self.x, xq, side="right") - 1
        return np.clip(idx, 0, len(self.x) - 2)

    def __call__(self, xq):
        xq = np.asarray(xq, dtype=float)
        scalar = xq.ndim == 0
        xq = np.atleast_1d(xq)
        i = self._locate(xq)
        h = self.x[i + 1] - self.x[i]
        t = (xq - self.x[i]) / h
        h00 = (1 + 2 * t) * (1 - t) ** 2
        h10 = t * (1 - t) ** 2
        h01 = t * t * (3 - 2 * t)
        h11 = t * t * (t - 1)
        out = (h00 * self.y[i] + h10 * h * self.slopes[i]
               + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1])
        return float(out[0]) if scalar else out

    def derivative(self, xq):
        xq = np.asarray(xq, dtype=float)
        scalar = xq.ndim == 0
        xq = np.atleast_1d(xq)
        i = self._locate(xq)
        h = self.x[i + 1] - self.x[i]
        t = (xq - self.x[i]) / h
        dh00 = 6 * t * (t - 1) / h
        dh10 = (3 * t - 1) * (t - 1)
        dh01 = -6 * t * (t - 1) / h
        dh11 = t * (3 * t - 2)
        out = (dh00 * self.y[i] + dh10 * self.slopes[i]
               + dh01 * self.y[i + 1] + dh11 * self.slopes[i + 1])
        return float(out[0]) if scalar else out

    def richardson_derivative(self, xq, step: float):
        """Centered-difference derivative of the interpolant, Richardson-refined.

        Combines centered quotients at `step` and `step/2`; used where the
        derivative of the underlying data (not of the cubic pieces) is wanted.
        """
        xq = np.asarray(xq, dtype=float)
        d1 = (self(xq + step) - self(xq - step)) / (2 * step)
        d2 = (self(xq + step / 2) - self(xq - step / 2)) / step
        return (4 * d2 - d1) / 3
