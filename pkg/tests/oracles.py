"""Independent brute-force oracles used only by the tests.

These deliberately avoid the library's own numerics: symmetric eigenvalues
come from characteristic-polynomial closed forms (n <= 3) or cyclic Jacobi
rotations (n <= 16), and gradients from central finite differences.
"""

import math

import numpy as np


def eig_sym_charpoly(m):
    """All eigenvalues of a symmetric 1x1..3x3 matrix from its characteristic
    polynomial (closed forms), sorted descending."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if n == 1:
        return np.array([m[0, 0]])
    if n == 2:
        tr = m[0, 0] + m[1, 1]
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        disc = math.sqrt(max(tr * tr - 4.0 * det, 0.0))
        return np.array([(tr + disc) / 2.0, (tr - disc) / 2.0])
    if n == 3:
        # Trigonometric solution of the cubic for symmetric matrices.
        p1 = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
        q = np.trace(m) / 3.0
        if p1 == 0.0:
            return np.sort(np.diag(m))[::-1]
        p2 = sum((m[i, i] - q) ** 2 for i in range(3)) + 2.0 * p1
        p = math.sqrt(p2 / 6.0)
        b = (m - q * np.eye(3)) / p
        r = np.linalg.det(b) / 2.0
        r = min(1.0, max(-1.0, r))
        phi = math.acos(r) / 3.0
        e1 = q + 2.0 * p * math.cos(phi)
        e3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
        e2 = 3.0 * q - e1 - e3
        return np.sort(np.array([e1, e2, e3]))[::-1]
    raise ValueError("charpoly oracle only handles n <= 3")


def eig_sym_jacobi(m, max_sweeps=100, tol=1e-14):
    """All eigenvalues of a symmetric matrix via cyclic Jacobi rotations."""
    a = np.array(m, dtype=float)
    n = a.shape[0]
    scale = max(1.0, float(np.max(np.abs(a))))
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[p, q] ** 2 for p in range(n) for q in range(p + 1, n)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


def eig_max_bruteforce(m):
    """Largest eigenvalue of a symmetric matrix via the matched oracle."""
    m = np.asarray(m, dtype=float)
    if m.shape[0] <= 3:
        return float(eig_sym_charpoly(m)[0])
    return float(eig_sym_jacobi(m)[0])


def central_difference(f, x, h=1e-5):
    """Per-coordinate central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def compare_gradients(ad, fd, rel_tol, abs_floor=1e-8):
    """Max relative error, comparing absolutely below the floor.

    Returns (worst relative error over large coordinates, worst absolute
    error over small ones).
    """
    ad = np.asarray(ad)
    fd = np.asarray(fd)
    small = np.abs(ad) < abs_floor
    rel = np.abs(ad - fd) / np.maximum(np.abs(fd), abs_floor)
    worst_rel = float(rel[~small].max()) if (~small).any() else 0.0
    worst_abs = float(np.abs(ad - fd)[small].max()) if small.any() else 0.0
    return worst_rel, worst_abs
