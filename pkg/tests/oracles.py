"""Independent brute-force oracles used only by the tests.

These deliberately avoid the library's own code paths (and LAPACK where the
tested code is the SVD itself) so that each check has two routes to the same
number.
"""

import math

import numpy as np


def cubic_singular_values(A):
    """Singular values of a 3x3 matrix via the closed-form eigenvalues of
    A^T A (trigonometric solution of the characteristic cubic)."""
    A = np.asarray(A, dtype=np.float64)
    M = A.T @ A
    q = np.trace(M) / 3.0
    p2 = ((M[0, 0] - q) ** 2 + (M[1, 1] - q) ** 2 + (M[2, 2] - q) ** 2
          + 2.0 * (M[0, 1] ** 2 + M[0, 2] ** 2 + M[1, 2] ** 2))
    p = math.sqrt(p2 / 6.0)
    if p == 0.0:
        eigs = np.array([q, q, q])
    else:
        B = (M - q * np.eye(3)) / p
        detB = (B[0, 0] * (B[1, 1] * B[2, 2] - B[1, 2] * B[2, 1])
                - B[0, 1] * (B[1, 0] * B[2, 2] - B[1, 2] * B[2, 0])
                + B[0, 2] * (B[1, 0] * B[2, 1] - B[1, 1] * B[2, 0]))
        r = min(max(detB / 2.0, -1.0), 1.0)
        phi = math.acos(r) / 3.0
        e1 = q + 2.0 * p * math.cos(phi)
        e3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
        eigs = np.array([e1, 3.0 * q - e1 - e3, e3])
    return np.sqrt(np.clip(np.sort(eigs)[::-1], 0.0, None))


def procrustes_grid_min(X, Xbar, n_angles=10000):
    """Brute-force min over 2x2 rotations and reflections on an angle grid."""
    X = np.asarray(X, dtype=np.float64)
    Xbar = np.asarray(Xbar, dtype=np.float64)
    th = np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False)
    c, s = np.cos(th), np.sin(th)
    rots = np.empty((2 * n_angles, 2, 2))
    rots[:n_angles, 0, 0] = c
    rots[:n_angles, 0, 1] = -s
    rots[:n_angles, 1, 0] = s
    rots[:n_angles, 1, 1] = c
    rots[n_angles:, 0, 0] = c
    rots[n_angles:, 0, 1] = s
    rots[n_angles:, 1, 0] = s
    rots[n_angles:, 1, 1] = -c
    diffs = np.einsum("ij,ajk->aik", X, rots) - Xbar
    return float(np.sqrt(np.einsum("aik,aik->a", diffs, diffs).min()))
