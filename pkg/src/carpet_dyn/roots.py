"""Polynomial roots by Aberth-Ehrlich simultaneous iteration.

Roots are returned with multiplicities: approximations closer than
``cluster_tol`` (relative to ``max(1, |z|)``) are merged and their count
becomes the multiplicity of the merged root.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import RootFindingError

__all__ = ["aberth", "polynomial_roots", "backward_error"]


def _trim(coeffs: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(coeffs != 0)
    if nz.size == 0:
        return coeffs[:1] * 0
    return coeffs[: nz[-1] + 1]


def backward_error(coeffs: np.ndarray, z) -> np.ndarray:
    """|p(z)| / sum |c_i| |z|^i, the relative residual of a root estimate."""
    z = np.asarray(z, dtype=complex)
    num = np.abs(np.polynomial.polynomial.polyval(z, coeffs))
    den = np.polynomial.polynomial.polyval(np.abs(z), np.abs(coeffs))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / den, num)
    return out


def _initial_guesses(c: np.ndarray) -> np.ndarray:
    n = c.size - 1
    # radius from the geometric mean of the root moduli; the angular offset
    # breaks the symmetry that stalls iteration on z^n - a type inputs
    r = (abs(c[0]) / abs(c[-1])) ** (1.0 / n) if c[0] != 0 else 1.0
    r = min(max(r, 1e-8), 1e8)
    ang = 2 * np.pi * np.arange(n) / n + 0.4
    return r * np.exp(1j * ang)


def aberth(coeffs, tol: float = 1e-15, max_iter: int = 500) -> np.ndarray:
    """Raw Aberth iteration; ``coeffs`` ascending, nonzero leading and constant term."""
    c = np.asarray(coeffs, dtype=complex)
    n = c.size - 1
    if n == 1:
        return np.array([-c[0] / c[1]])
    dc = np.polynomial.polynomial.polyder(c)
    z = _initial_guesses(c)
    active = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        zi = z[idx]
        p = np.polynomial.polynomial.polyval(zi, c)
        dp = np.polynomial.polynomial.polyval(zi, dc)
        diff = zi[:, None] - z[None, :]
        diff[np.arange(idx.size), idx] = 1.0
        s = (1.0 / diff).sum(axis=1) - 1.0
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            ratio = p / dp
            delta = ratio / (1.0 - ratio * s)
        bad = ~np.isfinite(delta)
        if bad.any():
            # stationary on a critical point of p: nudge instead of dividing by zero
            delta[bad] = 1e-3 * (1 + abs(zi[bad])) * np.exp(1j * (idx[bad] + 1.0))
        z[idx] = zi - delta
        done = np.abs(delta) <= tol * np.maximum(1.0, np.abs(z[idx]))
        done |= backward_error(c, z[idx]) <= 1e-17
        active[idx[done]] = False
    return z


def _newton_polish(c: np.ndarray, z: np.ndarray, steps: int = 3) -> np.ndarray:
    dc = np.polynomial.polynomial.polyder(c)
    out = z.copy()
    for _ in range(steps):
        p = np.polynomial.polynomial.polyval(out, c)
        dp = np.polynomial.polynomial.polyval(out, dc)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            cand = out - p / dp
        ok = np.isfinite(cand) & (backward_error(c, cand) <= backward_error(c, out))
        out = np.where(ok, cand, out)
    return out


def _cluster(z: np.ndarray, cluster_tol: float) -> list[tuple[complex, int]]:
    n = z.size
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            scale = max(1.0, abs(z[i]), abs(z[j]))
            if abs(z[i] - z[j]) < cluster_tol * scale:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    out = []
    for members in groups.values():
        out.append((complex(np.mean(z[members])), len(members)))
    return out


def polynomial_roots(
    coeffs,
    tol: float = 1e-12,
    cluster_tol: float = 1e-6,
    max_iter: int = 500,
) -> list[tuple[complex, int]]:
    """All finite roots of the polynomial with ascending ``coeffs``.

    Returns ``(root, multiplicity)`` pairs sorted by real then imaginary part.
    Raises :class:`RootFindingError` when some merged root has a relative
    residual above ``tol``.
    """
    c = _trim(np.asarray(coeffs, dtype=complex))
    if c.size <= 1:
        return []
    # exact zero roots
    nz = np.flatnonzero(c != 0)
    m0 = int(nz[0])
    c = c[m0:]
    out: list[tuple[complex, int]] = []
    if m0:
        out.append((0j, m0))
    if c.size > 1:
        z = aberth(c, max_iter=max_iter)
        z = _newton_polish(c, z)
        merged = _cluster(z, cluster_tol)
        res = backward_error(c, np.array([r for r, _ in merged]))
        worst = float(res.max()) if res.size else 0.0
        if not math.isfinite(worst) or worst > tol:
            raise RootFindingError("root finder did not converge", worst)
        out.extend(merged)
    out.sort(key=lambda rm: (round(rm[0].real, 12), round(rm[0].imag, 12)))
    return out
