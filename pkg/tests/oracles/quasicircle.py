"""Brute-force quasicircle constant: every vertex pair, both arcs, diameters by exhaustion."""

import math

import numpy as np


def sphere(z):
    z = np.asarray(z, dtype=complex)
    d = 1 + np.abs(z) ** 2
    return np.column_stack([2 * z.real / d, 2 * z.imag / d, (np.abs(z) ** 2 - 1) / d])


def _diam(x):
    if len(x) < 2:
        return 0.0
    return float(np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)).max())


def brute_constant(vertices) -> float:
    x = sphere(vertices)
    n = len(x)
    best = 1.0
    for i in range(n):
        for j in range(i + 1, n):
            s = np.linalg.norm(x[i] - x[j])
            if s == 0:
                continue
            arc1 = x[i : j + 1]
            arc2 = np.concatenate([x[j:], x[: i + 1]])
            best = max(best, min(_diam(arc1), _diam(arc2)) / s)
    return best


def square_supremum() -> float:
    """Continuum value of the constant for a square in the Euclidean metric.

    Closed form of the one-parameter extremal family; the test cross-checks
    it against a dense polygon.
    """
    y = math.sqrt(5) / 2 - 1
    return math.sqrt((1.25 + y + y * y) / (1 + 4 * y * y))
