"""Problem constructors: oracle bundles for the solver and the estimators.

Provides robust phase retrieval and low-rank covariance estimation from
quadratic measurements (both with optional outlier corruption), a family of
closed-form test instances with exactly known constants, and a generic
composite builder for objectives of the form ``h(c(x))`` with ``h`` convex
and ``c`` smooth.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .numerics import (
    RNG_ALGORITHM,
    RNG_NORMAL_TRANSFORM,
    RngStream,
    sample_gaussian,
    sample_gaussian_matrix,
    sample_uniform,
    singular_values,
)

INSTANCE_MAGIC = "SHARPSTEP-INST v1"

# Stream-id allocation within an instance seed.  Parallel roles never share
# a stream.
STREAM_MEASUREMENTS = 1
STREAM_TRUTH = 2
STREAM_CORRUPT_MASK = 3
STREAM_CORRUPT_MAGNITUDE = 4
STREAM_INIT_DIRECTION = 5
STREAM_ESTIMATOR = 6


class InstanceFormatError(ValueError):
    """Raised when an instance file is malformed or fails integrity checks."""


def _identity(y: np.ndarray) -> np.ndarray:
    return y


@dataclass(frozen=True)
class ProblemInstance:
    """Bundle of oracles defining one instance of ``min_{x in X} g(x)``.

    ``value`` and ``subgrad`` evaluate the objective and one subgradient
    selection; ``project`` maps onto the feasible set (identity when
    unconstrained).  ``min_value`` and ``distance`` are present only when
    known; ``solutions`` holds representative minimizers used as sampling
    anchors.  All oracles are immutable after construction and safe for
    concurrent read-only use.
    """

    dim: int
    value: Callable[[np.ndarray], float]
    subgrad: Callable[[np.ndarray], np.ndarray]
    project: Callable[[np.ndarray], np.ndarray] = _identity
    min_value: Optional[float] = None
    distance: Optional[Callable[[np.ndarray], float]] = None
    solutions: tuple = ()
    metadata: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class AnalyticInstance:
    """A closed-form instance with exactly known regularity constants.

    ``mu`` is the sharpness constant, ``rho`` the (declared) weak-convexity
    constant and ``L`` the largest subgradient norm over the unit tube
    ``dist(x; X*) < mu/rho``.
    """

    name: str
    problem: ProblemInstance
    mu: float
    rho: float
    L: float

    @property
    def tau(self) -> float:
        return self.mu / self.L

    @property
    def tube_radius(self) -> float:
        return self.mu / self.rho


def _check_vector(x, d, what="x"):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise ValueError(f"{what} must have shape ({d},), got {x.shape}")
    return x


def _check_matrix(X, d, r, what="X"):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape != (d, r):
        raise ValueError(f"{what} must have shape ({d}, {r}), got {X.shape}")
    return X


# ---------------------------------------------------------------------------
# Phase retrieval
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseRetrievalSpec:
    """Dimensions, corruption settings and seed for a random instance."""

    d: int
    m: int
    corrupted: bool = False
    p: float = 0.1
    s: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"need d >= 1, got {self.d}")
        if self.m < 1:
            raise ValueError(f"need m >= 1, got {self.m}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"corruption rate must be in [0, 1], got {self.p}")
        if self.s < 0.0:
            raise ValueError(f"outlier std must be >= 0, got {self.s}")


@dataclass(frozen=True)
class PhaseRetrievalInstance:
    spec: PhaseRetrievalSpec
    A: np.ndarray          # (m, d) measurement vectors, one per row
    b: np.ndarray          # (m,) targets
    xbar: np.ndarray       # (d,) signal the targets were generated from
    n_corrupted: int
    problem: ProblemInstance


def gen_phase_retrieval(spec: PhaseRetrievalSpec) -> PhaseRetrievalInstance:
    """Draw a random phase-retrieval instance.

    Measurements are standard Gaussian rows a_i, the signal xbar is standard
    Gaussian, and targets are b_i = <a_i, xbar>^2.  In the corrupted set-up
    a Bernoulli(p) subset of targets is replaced by half-normal outliers
    |N(0, s^2)|.  The exact set-up carries ``min_value = 0``; both carry the
    sign-resolving distance oracle to {xbar, -xbar}.
    """
    rng = RngStream(spec.seed)
    A = sample_gaussian_matrix(rng.substream(STREAM_MEASUREMENTS), spec.m, spec.d)
    xbar = sample_gaussian(rng.substream(STREAM_TRUTH), spec.d)
    clean = (A @ xbar) ** 2
    if spec.corrupted:
        mask = sample_uniform(rng.substream(STREAM_CORRUPT_MASK), spec.m) < spec.p
        outliers = np.abs(
            spec.s * sample_gaussian(rng.substream(STREAM_CORRUPT_MAGNITUDE), spec.m)
        )
        b = np.where(mask, outliers, clean)
        n_corrupted = int(mask.sum())
    else:
        b = clean
        n_corrupted = 0

    d = spec.d

    def value(x):
        return float(_kernels.pr_value(A, b, _check_vector(x, d)))

    def subgrad(x):
        out = np.empty(d)
        _kernels.pr_subgrad(A, b, _check_vector(x, d), out)
        return out

    def distance(x):
        return pr_distance(x, xbar)

    problem = ProblemInstance(
        dim=d,
        value=value,
        subgrad=subgrad,
        min_value=0.0 if not spec.corrupted else None,
        distance=distance,
        solutions=(xbar.copy(), -xbar),
        metadata={
            "kind": "phase_retrieval",
            "seed": spec.seed,
            "rng": f"{RNG_ALGORITHM}+{RNG_NORMAL_TRANSFORM}",
            "norm_scale": float(np.linalg.norm(xbar)),
        },
    )
    return PhaseRetrievalInstance(spec, A, b, xbar, n_corrupted, problem)


def pr_objective(inst: PhaseRetrievalInstance, x) -> float:
    """(1/m) sum_i |<a_i, x>^2 - b_i|."""
    return float(_kernels.pr_value(inst.A, inst.b, _check_vector(x, inst.spec.d)))


def pr_subgradient(inst: PhaseRetrievalInstance, x) -> np.ndarray:
    """Chain-rule subgradient selection with sign(0) = 0."""
    out = np.empty(inst.spec.d)
    _kernels.pr_subgrad(inst.A, inst.b, _check_vector(x, inst.spec.d), out)
    return out


def pr_distance(x, xbar) -> float:
    """Distance to {xbar, -xbar}: min(||x - xbar||, ||x + xbar||)."""
    x = np.asarray(x, dtype=np.float64)
    xbar = np.asarray(xbar, dtype=np.float64)
    if x.shape != xbar.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xbar.shape}")
    return float(min(np.linalg.norm(x - xbar), np.linalg.norm(x + xbar)))


# ---------------------------------------------------------------------------
# Covariance estimation from quadratic measurements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceSpec:
    """Dimensions (rank r factor), corruption settings and seed."""

    d: int
    r: int
    m: int
    corrupted: bool = False
    p: float = 0.1
    s: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.r <= self.d:
            raise ValueError(f"need d >= r >= 1, got d={self.d}, r={self.r}")
        if self.m < 2 or self.m % 2 != 0:
            raise ValueError(f"measurement count must be even and >= 2, got {self.m}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"corruption rate must be in [0, 1], got {self.p}")
        if self.s < 0.0:
            raise ValueError(f"outlier std must be >= 0, got {self.s}")


@dataclass(frozen=True)
class CovarianceInstance:
    spec: CovarianceSpec
    A: np.ndarray          # (m, d)
    b: np.ndarray          # (m,)
    Xbar: np.ndarray       # (d, r)
    n_corrupted: int
    problem: ProblemInstance  # oracles over the flattened (d*r,) variable


def gen_cov_estimation(spec: CovarianceSpec) -> CovarianceInstance:
    """Draw a random covariance-estimation instance.

    Targets are b_i = ||Xbar^T a_i||^2 (optionally corrupted like phase
    retrieval).  The objective differences consecutive measurement pairs, so
    m must be even.  The solver-facing oracles act on the row-major
    flattening of the d-by-r factor; no d-by-d matrix is ever formed.
    """
    rng = RngStream(spec.seed)
    A = sample_gaussian_matrix(rng.substream(STREAM_MEASUREMENTS), spec.m, spec.d)
    Xbar = sample_gaussian_matrix(rng.substream(STREAM_TRUTH), spec.d, spec.r)
    clean = np.einsum("ij,ij->i", A @ Xbar, A @ Xbar)
    if spec.corrupted:
        mask = sample_uniform(rng.substream(STREAM_CORRUPT_MASK), spec.m) < spec.p
        outliers = np.abs(
            spec.s * sample_gaussian(rng.substream(STREAM_CORRUPT_MAGNITUDE), spec.m)
        )
        b = np.where(mask, outliers, clean)
        n_corrupted = int(mask.sum())
    else:
        b = clean
        n_corrupted = 0

    d, r = spec.d, spec.r
    scratch = np.empty(r)

    def value(xflat):
        X = _check_vector(xflat, d * r, "flattened factor").reshape(d, r)
        return float(_kernels.cov_value(A, b, X, scratch))

    def subgrad(xflat):
        X = _check_vector(xflat, d * r, "flattened factor").reshape(d, r)
        out = np.empty((d, r))
        _kernels.cov_subgrad(A, b, X, out, np.empty(r), np.empty(r))
        return out.reshape(-1)

    def distance(xflat):
        X = _check_vector(xflat, d * r, "flattened factor").reshape(d, r)
        return procrustes_distance(X, Xbar)

    problem = ProblemInstance(
        dim=d * r,
        value=value,
        subgrad=subgrad,
        min_value=0.0 if not spec.corrupted else None,
        distance=distance,
        solutions=(Xbar.reshape(-1).copy(),),
        metadata={
            "kind": "covariance",
            "seed": spec.seed,
            "rng": f"{RNG_ALGORITHM}+{RNG_NORMAL_TRANSFORM}",
            "norm_scale": float(np.linalg.norm(Xbar)),
        },
    )
    return CovarianceInstance(spec, A, b, Xbar, n_corrupted, problem)


def cov_objective(inst: CovarianceInstance, X) -> float:
    """(2/m) sum over pairs |<XX^T, A_i> - (b_{2i} - b_{2i-1})|, evaluated
    through ||X^T a||^2 differences."""
    X = _check_matrix(X, inst.spec.d, inst.spec.r)
    return float(_kernels.cov_value(inst.A, inst.b, X, np.empty(inst.spec.r)))


def cov_subgradient(inst: CovarianceInstance, X) -> np.ndarray:
    """Chain-rule subgradient selection with sign(0) = 0, as a d-by-r matrix."""
    X = _check_matrix(X, inst.spec.d, inst.spec.r)
    out = np.empty((inst.spec.d, inst.spec.r))
    _kernels.cov_subgrad(inst.A, inst.b, X, out,
                         np.empty(inst.spec.r), np.empty(inst.spec.r))
    return out


def procrustes_distance(X, Xbar, normalized: bool = False) -> float:
    """min over orthogonal r-by-r R of ||X R - Xbar||_F.

    Computed as sqrt(||X||^2 + ||Xbar||^2 - 2 * sum of singular values of
    X^T Xbar); divided by ||Xbar||_F when ``normalized``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Xbar = np.ascontiguousarray(Xbar, dtype=np.float64)
    if X.ndim != 2 or X.shape != Xbar.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Xbar.shape}")
    nuclear = singular_values(X.T @ Xbar).sum()
    sq = float(np.sum(X * X) + np.sum(Xbar * Xbar) - 2.0 * nuclear)
    dist = float(np.sqrt(max(sq, 0.0)))
    if normalized:
        scale = float(np.linalg.norm(Xbar))
        if scale == 0.0:
            raise ValueError("cannot normalize by a zero reference factor")
        return dist / scale
    return dist


# ---------------------------------------------------------------------------
# Analytic instances with exactly known constants
# ---------------------------------------------------------------------------

def make_abs(rho: float = 1.0) -> AnalyticInstance:
    """|x| on the real line.  Convex, so any declared rho > 0 is valid;
    mu = L = 1 and the solution set is {0}."""
    if rho <= 0.0:
        raise ValueError("declared weak-convexity constant must be positive")

    problem = ProblemInstance(
        dim=1,
        value=lambda x: float(abs(x[0])),
        subgrad=lambda x: np.sign(np.asarray(x, dtype=np.float64)),
        min_value=0.0,
        distance=lambda x: float(abs(x[0])),
        solutions=(np.zeros(1),),
        metadata={"kind": "analytic", "name": "abs"},
    )
    return AnalyticInstance("abs", problem, mu=1.0, rho=rho, L=1.0)


def make_l1(rho: float = 1.0) -> AnalyticInstance:
    """The l1 norm on the plane.  Convex; mu = 1 (attained on the axes),
    L = sqrt(2), solution set {0}."""
    if rho <= 0.0:
        raise ValueError("declared weak-convexity constant must be positive")

    problem = ProblemInstance(
        dim=2,
        value=lambda x: float(np.abs(np.asarray(x, dtype=np.float64)).sum()),
        subgrad=lambda x: np.sign(np.asarray(x, dtype=np.float64)),
        min_value=0.0,
        distance=lambda x: float(np.linalg.norm(x)),
        solutions=(np.zeros(2),),
        metadata={"kind": "analytic", "name": "l1"},
    )
    return AnalyticInstance("l1", problem, mu=1.0, rho=rho, L=np.sqrt(2.0))


def make_quad1d() -> AnalyticInstance:
    """|x^2 - 1| on the real line: single-measurement phase retrieval.

    Solution set {-1, +1}; mu = 1 (the ratio to the distance is minimized
    toward x = 0), rho = 2, and L = 3 on the unit tube dist < 1/2.
    """

    def value(x):
        return float(abs(x[0] * x[0] - 1.0))

    def subgrad(x):
        x0 = float(x[0])
        return np.array([np.sign(x0 * x0 - 1.0) * 2.0 * x0])

    def distance(x):
        x0 = float(x[0])
        return min(abs(x0 - 1.0), abs(x0 + 1.0))

    problem = ProblemInstance(
        dim=1,
        value=value,
        subgrad=subgrad,
        min_value=0.0,
        distance=distance,
        solutions=(np.array([1.0]), np.array([-1.0])),
        metadata={"kind": "analytic", "name": "quad1d"},
    )
    return AnalyticInstance("quad1d", problem, mu=1.0, rho=2.0, L=3.0)


_ANALYTIC_FACTORIES = {
    "abs": make_abs,
    "l1": make_l1,
    "quad1d": make_quad1d,
}


def make_analytic(name: str) -> AnalyticInstance:
    try:
        return _ANALYTIC_FACTORIES[name]()
    except KeyError:
        raise ValueError(
            f"unknown analytic instance {name!r}; "
            f"choose from {sorted(_ANALYTIC_FACTORIES)}"
        ) from None


# ---------------------------------------------------------------------------
# Generic composite h(c(x))
# ---------------------------------------------------------------------------

def make_composite(
    h_value: Callable[[np.ndarray], float],
    h_subgrad: Callable[[np.ndarray], np.ndarray],
    c_value: Callable[[np.ndarray], np.ndarray],
    c_vjp: Callable[[np.ndarray, np.ndarray], np.ndarray],
    dim: int,
    min_value: Optional[float] = None,
    distance: Optional[Callable[[np.ndarray], float]] = None,
    solutions: Sequence[np.ndarray] = (),
    project: Callable[[np.ndarray], np.ndarray] = _identity,
) -> ProblemInstance:
    """Compose a convex outer function with a smooth inner map.

    ``h_value``/``h_subgrad`` evaluate the outer function and one of its
    subgradients; ``c_value`` evaluates the inner map and ``c_vjp(x, v)``
    applies the transposed Jacobian of the inner map at x to v.  The
    returned instance evaluates h(c(x)) and the chain-rule subgradient
    selection (Jacobian transpose applied to the outer subgradient).
    """

    def value(x):
        x = _check_vector(x, dim)
        return float(h_value(np.atleast_1d(np.asarray(c_value(x), dtype=np.float64))))

    def subgrad(x):
        x = _check_vector(x, dim)
        inner = np.atleast_1d(np.asarray(c_value(x), dtype=np.float64))
        outer = np.atleast_1d(np.asarray(h_subgrad(inner), dtype=np.float64))
        if outer.shape != inner.shape:
            raise ValueError(
                f"outer subgradient shape {outer.shape} does not match "
                f"inner map output shape {inner.shape}"
            )
        g = np.asarray(c_vjp(x, outer), dtype=np.float64).reshape(-1)
        if g.shape != (dim,):
            raise ValueError(
                f"transposed Jacobian product has shape {g.shape}, expected ({dim},)"
            )
        return g

    return ProblemInstance(
        dim=dim,
        value=value,
        subgrad=subgrad,
        project=project,
        min_value=min_value,
        distance=distance,
        solutions=tuple(np.asarray(s, dtype=np.float64) for s in solutions),
        metadata={"kind": "composite"},
    )


# ---------------------------------------------------------------------------
# Instance files
# ---------------------------------------------------------------------------

def _hex_line(arr: np.ndarray) -> str:
    return " ".join(float(v).hex() for v in np.asarray(arr, dtype=np.float64).reshape(-1))


def _from_hex_line(line: str) -> np.ndarray:
    return np.array([float.fromhex(tok) for tok in line.split()], dtype=np.float64)


def save_instance(path, inst) -> None:
    """Write a versioned text container from which the instance can be
    reconstructed bit-identically (spec + seed + ground truth)."""
    lines = [INSTANCE_MAGIC]
    if isinstance(inst, PhaseRetrievalInstance):
        s = inst.spec
        lines += [
            "kind = phase_retrieval",
            f"d = {s.d}",
            f"m = {s.m}",
            f"corrupted = {int(s.corrupted)}",
            f"p = {s.p!r}",
            f"s = {s.s!r}",
            f"seed = {s.seed}",
            f"rng = {RNG_ALGORITHM}+{RNG_NORMAL_TRANSFORM}",
            f"truth = {_hex_line(inst.xbar)}",
        ]
    elif isinstance(inst, CovarianceInstance):
        s = inst.spec
        lines += [
            "kind = covariance",
            f"d = {s.d}",
            f"r = {s.r}",
            f"m = {s.m}",
            f"corrupted = {int(s.corrupted)}",
            f"p = {s.p!r}",
            f"s = {s.s!r}",
            f"seed = {s.seed}",
            f"rng = {RNG_ALGORITHM}+{RNG_NORMAL_TRANSFORM}",
            f"truth = {_hex_line(inst.Xbar)}",
        ]
    elif isinstance(inst, AnalyticInstance):
        lines += ["kind = analytic", f"name = {inst.name}"]
    else:
        raise TypeError(f"cannot serialize {type(inst).__name__}")
    data = "\n".join(lines) + "\n"
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_kv_lines(lines):
    out = {}
    for ln in lines:
        ln = ln.strip()
        if not ln:
            continue
        if "=" not in ln:
            raise InstanceFormatError(f"malformed line in instance file: {ln!r}")
        key, _, val = ln.partition("=")
        out[key.strip()] = val.strip()
    return out


def load_instance(path):
    """Reload an instance file, regenerating the oracles from (spec, seed)
    and verifying the stored ground truth bit-for-bit."""
    with open(os.fspath(path), "r") as fh:
        content = fh.read().splitlines()
    if not content or content[0].strip() != INSTANCE_MAGIC:
        raise InstanceFormatError(f"missing magic header {INSTANCE_MAGIC!r}")
    fields = _parse_kv_lines(content[1:])
    kind = fields.get("kind")
    try:
        if kind == "phase_retrieval":
            spec = PhaseRetrievalSpec(
                d=int(fields["d"]),
                m=int(fields["m"]),
                corrupted=bool(int(fields["corrupted"])),
                p=float(fields["p"]),
                s=float(fields["s"]),
                seed=int(fields["seed"]),
            )
            inst = gen_phase_retrieval(spec)
            stored = _from_hex_line(fields["truth"])
            if not np.array_equal(stored, inst.xbar):
                raise InstanceFormatError(
                    "stored ground truth does not match regenerated instance"
                )
            return inst
        if kind == "covariance":
            spec = CovarianceSpec(
                d=int(fields["d"]),
                r=int(fields["r"]),
                m=int(fields["m"]),
                corrupted=bool(int(fields["corrupted"])),
                p=float(fields["p"]),
                s=float(fields["s"]),
                seed=int(fields["seed"]),
            )
            inst = gen_cov_estimation(spec)
            stored = _from_hex_line(fields["truth"]).reshape(spec.d, spec.r)
            if not np.array_equal(stored, inst.Xbar):
                raise InstanceFormatError(
                    "stored ground truth does not match regenerated instance"
                )
            return inst
        if kind == "analytic":
            return make_analytic(fields["name"])
    except KeyError as exc:
        raise InstanceFormatError(f"missing field {exc} in instance file") from None
    except ValueError as exc:
        if isinstance(exc, InstanceFormatError):
            raise
        raise InstanceFormatError(f"invalid instance file: {exc}") from exc
    raise InstanceFormatError(f"unknown instance kind {kind!r}")
