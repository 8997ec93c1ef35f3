"""Independent reference computations used by the test suite and ``xpinn-lab check``.

Nothing here is used on the production path; each routine deliberately
takes a different route from the code it checks.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def jacobi_eigenvalues(sym: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(sym, dtype=np.float64, copy=True)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))
        if off <= tol * max(1.0, float(np.abs(a).max())):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
    return np.sort(np.diag(a))


def spectral_norm_jacobi(m: np.ndarray) -> float:
    g = np.asarray(m, dtype=np.float64)
    lam = jacobi_eigenvalues(g.T @ g)
    return math.sqrt(max(lam[-1], 0.0))


def norm_2_1_loop(m: np.ndarray) -> float:
    rows, cols = m.shape
    total = 0.0
    for j in range(cols):
        s = 0.0
        for i in range(rows):
            s += float(m[i, j]) ** 2
        total += math.sqrt(s)
    return total


def path_norm_enumerate(weights: list[np.ndarray]) -> float:
    """Brute-force sum over every index path (i_L, ..., i_0)."""
    widths = [weights[0].shape[1]] + [w.shape[0] for w in weights]
    total = 0.0
    for path in itertools.product(*(range(m) for m in widths)):
        prod = 1.0
        for layer, w in enumerate(weights):
            prod *= abs(float(w[path[layer + 1], path[layer]]))
        total += prod
    return total


def forward_loop(weights, biases, act, x) -> float:
    """Straight-line scalar re-evaluation of an MLP with python loops."""
    h = [float(v) for v in x]
    n_layers = len(weights)
    for layer in range(n_layers):
        w, b = weights[layer], biases[layer]
        z = []
        for i in range(w.shape[0]):
            s = float(b[i])
            for k in range(w.shape[1]):
                s += float(w[i, k]) * h[k]
            z.append(s)
        h = z if layer == n_layers - 1 else [act(v) for v in z]
    return h[0]


def fd_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def fd_hessian(f, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    h = np.zeros((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = step
        h[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / step**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = step
            v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * step**2)
            h[i, j] = h[j, i] = v
    return h


def relative_error(a, b, floor: float = 1e-12) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(float(np.max(np.abs(b))), floor)
    return float(np.max(np.abs(a - b)) / denom)


def residual_bound_formula(L, d, h, K, n, delta, M, N) -> float:
    """Residual posterior bound written out term by term from scratch."""
    prod_m = 1.0
    for v in M:
        prod_m *= v
    split = delta
    for m_, n_ in zip(M, N):
        split /= m_ * (m_ + 1) * n_ * (n_ + 1)
    sum_n = sum(v ** (2.0 / 3.0) for v in N)
    first = (64 * K + 32 * d * (L - 1) * K) / (n * math.sqrt(n))
    stat = 2 * math.sqrt(math.log(2 / split) / (2 * n))
    bracket = 1 + math.sqrt(2) * L * prod_m + math.sqrt(2) * d * (L * L - 1) * prod_m**2
    comp = 144 * K * math.sqrt(d * math.log(2 * h * h)) * math.log(n) / math.sqrt(n)
    comp *= prod_m * sum_n**1.5 * bracket
    return first + stat + comp


def boundary_bound_formula(L, d, h, n, delta, M, N) -> float:
    prod_m = 1.0
    for v in M:
        prod_m *= v
    split = delta
    for m_, n_ in zip(M, N):
        split /= m_ * (m_ + 1) * n_ * (n_ + 1)
    sum_n = sum(v ** (2.0 / 3.0) for v in N)
    first = 32 / (n * math.sqrt(n))
    comp = 144 * math.sqrt(d * math.log(2 * h * h)) * math.log(n) / math.sqrt(n) * prod_m * sum_n**1.5
    stat = 2 * math.sqrt(math.log(2 / split) / (2 * n))
    return first + comp + stat
