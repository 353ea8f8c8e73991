"""Feasibility of {x >= 0 : A x = b}: exact rational simplex and a floating-point fallback."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


@dataclass
class Feasibility:
    feasible: bool
    x: list | None = None
    certificate: list | None = None   # y with A^T y >= 0 and b . y < 0


def exact_feasibility(A, b) -> Feasibility:
    """Phase-one simplex over the rationals with Bland's rule.

    Returns a feasible point or a Farkas certificate, each verified exactly.
    """
    m = len(A)
    n = len(A[0]) if m else 0
    A = [[Fraction(v) for v in row] for row in A]
    b = [Fraction(v) for v in b]
    # make b >= 0
    sign = [1] * m
    for i in range(m):
        if b[i] < 0:
            sign[i] = -1
            A[i] = [-v for v in A[i]]
            b[i] = -b[i]
    # tableau columns: n originals, m artificials, rhs
    T = [A[i] + [Fraction(1 if j == i else 0) for j in range(m)] + [b[i]] for i in range(m)]
    basis = [n + i for i in range(m)]
    cost = [Fraction(0)] * n + [Fraction(1)] * m

    def reduced():
        # r_j = c_j - sum_i c_B(i) T[i][j]
        r = []
        for j in range(n + m + 1):
            s = cost[j] if j < n + m else Fraction(0)
            for i in range(m):
                cb = cost[basis[i]]
                if cb:
                    s -= cb * T[i][j]
            r.append(s)
        return r

    while True:
        r = reduced()
        enter = next((j for j in range(n + m) if r[j] < 0), None)
        if enter is None:
            break
        ratios = [(T[i][-1] / T[i][enter], basis[i], i) for i in range(m) if T[i][enter] > 0]
        if not ratios:
            break  # cannot happen in phase one (objective bounded below)
        best = min(ratios, key=lambda t: (t[0], t[1]))
        row = best[2]
        piv = T[row][enter]
        T[row] = [v / piv for v in T[row]]
        for i in range(m):
            if i != row and T[i][enter] != 0:
                f = T[i][enter]
                T[i] = [vi - f * vr for vi, vr in zip(T[i], T[row])]
        basis[row] = enter

    objective = sum(cost[basis[i]] * T[i][-1] for i in range(m))
    if objective == 0:
        x = [Fraction(0)] * n
        for i in range(m):
            if basis[i] < n:
                x[basis[i]] = T[i][-1]
        A0 = [[Fraction(v) * sign[i] for v in row] for i, row in enumerate(A)]
        b0 = [v * sign[i] for i, v in enumerate(b)]
        for i in range(m):
            if sum(A0[i][j] * x[j] for j in range(n)) != b0[i]:
                raise ArithmeticError("simplex produced an infeasible point")
        return Feasibility(True, x=x)
    # duals y_i = 1 - reduced cost of artificial i; certificate is -y in the original signs
    r = reduced()
    y = [Fraction(1) - r[n + i] for i in range(m)]
    cert = [-y[i] * sign[i] for i in range(m)]
    A0 = [[v * sign[i] for v in row] for i, row in enumerate(A)]
    b0 = [v * sign[i] for i, v in enumerate(b)]
    if not verify_certificate(A0, b0, cert):
        raise ArithmeticError("simplex produced an invalid infeasibility certificate")
    return Feasibility(False, certificate=cert)


def verify_certificate(A, b, y) -> bool:
    """Exact check of A^T y >= 0 and b . y < 0."""
    m = len(A)
    n = len(A[0]) if m else 0
    for j in range(n):
        if sum(Fraction(A[i][j]) * y[i] for i in range(m)) < 0:
            return False
    return sum(Fraction(b[i]) * y[i] for i in range(m)) < 0


def float_feasibility(A, b, tol: float = 1e-9) -> Feasibility:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    res = linprog(np.zeros(n), A_eq=A, b_eq=b, bounds=[(0, None)] * n, method="highs")
    if res.status == 0 and np.max(np.abs(A @ res.x - b), initial=0) <= tol * 10:
        return Feasibility(True, x=list(res.x))
    # Farkas certificate from the dual: maximise -b.y subject to A^T y >= 0, |y| <= 1
    dual = linprog(b, A_ub=-A.T, b_ub=np.zeros(n), bounds=[(-1, 1)] * m, method="highs")
    cert = list(dual.x) if dual.status == 0 and dual.fun < -tol else None
    return Feasibility(False, certificate=cert)
