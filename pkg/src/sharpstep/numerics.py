"""Dense float64 utilities shared by every module.

Conventions fixed repo-wide: vectors are 1-D ``numpy.float64`` arrays,
matrices are C-contiguous (row-major) 2-D ``numpy.float64`` arrays, and all
randomness flows through :class:`RngStream`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

#: Generator and transform names, recorded in output metadata so any trace
#: or instance file can be replayed.
RNG_ALGORITHM = "splitmix64"
RNG_NORMAL_TRANSFORM = "box-muller"

_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class RngStream:
    """A value identifying one deterministic random stream.

    Equal ``(seed, stream)`` pairs yield bit-identical sample sequences for
    a given build.  Sampling is counter-based and stateless: calling a
    sampler twice on the same stream returns the same values, so each
    logical draw must own its own stream id.
    """

    seed: int
    stream: int = 0
    algorithm: str = f"{RNG_ALGORITHM}+{RNG_NORMAL_TRANSFORM}"

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    def substream(self, stream: int) -> "RngStream":
        """The sibling stream with the given id (same seed)."""
        return RngStream(self.seed, stream, self.algorithm)


def sample_gaussian(rng: RngStream, n: int) -> np.ndarray:
    """n i.i.d. standard normal deviates from ``rng``.

    Deterministic per (seed, stream id); restarts from the stream origin on
    every call.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    out = np.empty(n, dtype=np.float64)
    _kernels.gaussian_fill(rng.seed, rng.stream, out)
    return out


def sample_uniform(rng: RngStream, n: int) -> np.ndarray:
    """n i.i.d. uniforms in [0, 1) from ``rng``; deterministic like
    :func:`sample_gaussian`."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    out = np.empty(n, dtype=np.float64)
    _kernels.uniform_fill(rng.seed, rng.stream, out)
    return out


def sample_gaussian_matrix(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    """rows*cols standard normals reshaped row-major to (rows, cols)."""
    return sample_gaussian(rng, rows * cols).reshape(rows, cols)


def singular_values(A: np.ndarray, tol: float = 1e-12,
                    max_sweeps: int = 64) -> np.ndarray:
    """Singular values of a small square matrix, descending.

    Uses one-sided Jacobi rotations to relative off-diagonal tolerance
    ``tol``.  Restricted to square matrices with at most 64 rows; entries
    must be finite.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n < 1 or n > 64:
        raise ValueError(f"matrix side must be in [1, 64], got {n}")
    if not np.isfinite(A).all():
        raise ValueError("matrix entries must be finite")
    work = A.copy()
    out = np.empty(n, dtype=np.float64)
    _kernels.jacobi_singular_values(work, tol, max_sweeps, out)
    return np.sort(out)[::-1].copy()


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    Component j is (f(x + h e_j) - f(x - h e_j)) / (2h).  Raises if any
    evaluation is non-finite.
    """
    if h <= 0.0:
        raise ValueError(f"need h > 0, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty(x.size, dtype=np.float64)
    flat = x.reshape(-1).copy()
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        fp = float(f(flat.reshape(x.shape)))
        flat[j] = orig - h
        fm = float(f(flat.reshape(x.shape)))
        flat[j] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value near coordinate {j}")
        grad[j] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)
