"""NumPy fallback for the compiled kernels.

Drop-in replacement for ``sharpstep._kernels._core``.  The sampler produces
bit-identical streams (same SplitMix64 mixing; the Box-Muller log goes
through ``math.log`` elementwise because NumPy's vectorized log can differ
from libm in the last ulp).  The oracle kernels agree with the compiled
ones up to floating-point summation order.
"""

import math

import numpy as np

BACKEND = "python"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_MASK = 0xFFFFFFFFFFFFFFFF
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


def _mix64_array(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX_A
    z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


def _mix64_int(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _stream_key(seed, stream):
    return _mix64_int(_mix64_int(seed) ^ _mix64_int(stream))


def _raw_block(seed, stream, first_counter, count):
    key = np.uint64(_stream_key(seed, stream))
    idx = np.arange(first_counter, first_counter + count, dtype=np.uint64)
    return _mix64_array(key + idx * _GOLDEN)


def uniform_fill(seed, stream, out):
    """Fill ``out`` with uniforms in [0, 1); position i uses counter i."""
    n = out.shape[0]
    raw = _raw_block(seed, stream, 1, n)
    out[:] = (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53


def gaussian_fill(seed, stream, out):
    """Fill ``out`` with standard normals; Box-Muller pair p uses counters
    2p and 2p+1 (cos deviate first)."""
    n = out.shape[0]
    pairs = (n + 1) // 2
    raw = _raw_block(seed, stream, 1, 2 * pairs)
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
    u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
    logs = np.fromiter((math.log(v) for v in u1), dtype=np.float64, count=pairs)
    r = np.sqrt(-2.0 * logs)
    a = _TWO_PI * u2
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(a)
    z[1::2] = r * np.sin(a)
    out[:] = z[:n]


def pr_value(A, b, x):
    """Mean absolute residual of squared linear measurements."""
    t = A @ x
    return float(np.abs(t * t - b).sum() / A.shape[0])


def pr_subgrad(A, b, x, out):
    """sign-weighted chain-rule subgradient of ``pr_value`` at x, sign(0)=0."""
    t = A @ x
    coef = 2.0 * np.sign(t * t - b) * t
    out[:] = (coef @ A) / A.shape[0]


def _pair_residuals(A, b, X):
    n2 = (A.shape[0] // 2) * 2
    P = A[:n2] @ X
    s = np.einsum("ij,ij->i", P, P)
    resid = (s[1::2] - s[0::2]) - (b[1:n2:2] - b[0:n2:2])
    return P, resid


def cov_value(A, b, X, scratch=None):
    """Mean absolute residual over measurement pairs; O(m*d*r) memory-free
    of any d-by-d intermediate."""
    _, resid = _pair_residuals(A, b, X)
    return float(2.0 * np.abs(resid).sum() / A.shape[0])


def cov_subgrad(A, b, X, out, t0=None, t1=None):
    """sign-weighted chain-rule subgradient of ``cov_value`` at X, sign(0)=0."""
    n2 = (A.shape[0] // 2) * 2
    P, resid = _pair_residuals(A, b, X)
    sg = np.sign(resid)
    w = np.empty(n2)
    w[0::2] = -sg
    w[1::2] = sg
    out[:] = (A[:n2].T @ (w[:, None] * P)) * (4.0 / A.shape[0])


def jacobi_singular_values(work, tol, max_sweeps, out):
    """One-sided Jacobi on the columns of ``work`` (destroyed in place).

    Same rotation schedule and stopping rule as the compiled core; returns
    the number of sweeps performed.
    """
    n = work.shape[0]
    sweep = 0
    changed = True
    while changed and sweep < max_sweeps:
        changed = False
        sweep += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                cp = work[:, p]
                cq = work[:, q]
                a = cp @ cp
                b2 = cq @ cq
                c = cp @ cq
                if c * c <= tol * tol * a * b2 or a == 0.0 or b2 == 0.0:
                    continue
                changed = True
                zeta = (b2 - a) / (2.0 * c)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + math.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + math.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                new_p = cs * cp - sn * cq
                new_q = sn * cp + cs * cq
                work[:, p] = new_p
                work[:, q] = new_q
    out[:] = np.sqrt(np.einsum("ij,ij->j", work, work))
    return sweep
