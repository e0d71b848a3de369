"""Böttcher coordinate of the example map at infinity by power series.

In the chart w = 1/z the map is F(w) = 16 w^2 / (16 - w^4).  Solve
psi(F(w)) = psi(w)^2 with psi(w) = w (1 + a_1 w + a_2 w^2 + ...) term by term.
"""

import sympy as sp

w = sp.symbols("w")


def series_coefficients(order: int = 24):
    F = 16 * w**2 / (16 - w**4)
    a = sp.symbols(f"a1:{order + 1}")
    psi = w * (1 + sum(a[i] * w ** (i + 1) for i in range(order)))
    lhs = sp.series(psi.subs(w, F), w, 0, order + 2).removeO()
    rhs = sp.series(psi**2, w, 0, order + 2).removeO()
    eqs = sp.Poly(sp.expand(lhs - rhs), w).all_coeffs()[::-1]
    sol = {}
    for e in eqs:
        e = sp.expand(e.subs(sol))
        free = [s for s in a if s in e.free_symbols and s not in sol]
        if free:
            s = free[0]
            sol[s] = sp.solve(e, s)[0]
    return [complex(sol.get(s, 0)) for s in a]


def evaluate(coeffs, wv):
    return wv * (1 + sum(c * wv ** (i + 1) for i, c in enumerate(coeffs)))
