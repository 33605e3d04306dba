"""Projected subgradient iteration with three step-size rules.

The update is always ``x+ = proj(x - step * zeta / ||zeta||)`` for a chosen
subgradient ``zeta``; the rules differ in how the step length is picked:

* polyak:    step = (g(x) - g_min) / ||zeta||, requires the optimal value;
* constant:  step = alpha, converges linearly down to a plateau;
* geometric: step = lam * q**k, converges linearly to the solution set when
  (lam, q) are set from the instance constants.

Also provides the closed-form quantities attached to the constant and
geometric rules: the plateau threshold, the contraction coefficient, and
admissible (lam, q) pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .problems import ProblemInstance

STATUS_MAX_ITERS = "max-iters"
STATUS_ZERO_SUBGRAD = "zero-subgradient-exit"
STATUS_TOLERANCE = "tolerance-met"


class ZeroSubgradientError(ValueError):
    """A step was requested at a point with zero subgradient."""


class OracleError(RuntimeError):
    """An oracle returned a non-finite value during a solve."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class Polyak:
    """Step rule using the optimal value; falls back to the instance's
    declared ``min_value`` when none is given here."""

    min_value: Optional[float] = None


@dataclass(frozen=True)
class Constant:
    alpha: float

    def __post_init__(self):
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise ValueError(f"need alpha > 0, got {self.alpha}")


@dataclass(frozen=True)
class Geometric:
    lam: float
    q: float

    def __post_init__(self):
        if not (self.lam > 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"need lam > 0, got {self.lam}")
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"need q in (0, 1), got {self.q}")


StepSchedule = Union[Polyak, Constant, Geometric]


@dataclass(frozen=True)
class SolveConfig:
    """Loop guards for :func:`solve`.

    ``dist_tol``/``gap_tol`` of zero disable the respective tolerance exits;
    the objective-gap exit applies only under the polyak rule, which is the
    only schedule entitled to read the optimal value.  ``zero_subgrad_tol``
    of None selects the default 1e-14 * max(1, ||zeta_0||).
    """

    max_iters: int = 500
    dist_tol: float = 0.0
    gap_tol: float = 0.0
    zero_subgrad_tol: Optional[float] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"need max_iters >= 1, got {self.max_iters}")
        if self.dist_tol < 0.0 or self.gap_tol < 0.0:
            raise ValueError("tolerances must be >= 0")
        if self.zero_subgrad_tol is not None and self.zero_subgrad_tol < 0.0:
            raise ValueError("zero-subgradient threshold must be >= 0")


@dataclass
class Trace:
    """Per-iterate scalars of one solve.

    Row k describes iterate x_k; ``step_size[k]`` is the length of the move
    made from x_k along the normalized subgradient direction (0 on the final
    recorded iterate, where no move was made).  ``distance`` is None when
    the instance has no distance oracle.
    """

    objective: np.ndarray
    distance: Optional[np.ndarray]
    step_size: np.ndarray
    subgrad_norm: np.ndarray
    status: str
    final_point: np.ndarray
    warnings: tuple = ()

    def __len__(self):
        return self.objective.shape[0]


def polyak_step(x, gx: float, min_value: float, zeta, project) -> np.ndarray:
    """One step of length (gx - min_value)/||zeta|| along -zeta/||zeta||,
    then projection.  A negative gap is clamped to zero."""
    zeta = np.asarray(zeta, dtype=np.float64)
    sq = float(zeta @ zeta)
    if sq == 0.0:
        raise ZeroSubgradientError("polyak step undefined for zero subgradient")
    gap = max(float(gx) - float(min_value), 0.0)
    return project(np.asarray(x, dtype=np.float64) - (gap / sq) * zeta)


def constant_step(x, zeta, alpha: float, project) -> np.ndarray:
    """One step of length alpha along -zeta/||zeta||, then projection."""
    if alpha <= 0.0:
        raise ValueError(f"need alpha > 0, got {alpha}")
    zeta = np.asarray(zeta, dtype=np.float64)
    norm = float(np.linalg.norm(zeta))
    if norm == 0.0:
        raise ZeroSubgradientError("constant step undefined for zero subgradient")
    return project(np.asarray(x, dtype=np.float64) - (alpha / norm) * zeta)


def geometric_stepsize(k: int, lam: float, q: float) -> float:
    """lam * q**k."""
    if k < 0:
        raise ValueError(f"need k >= 0, got {k}")
    if lam <= 0.0 or not 0.0 < q < 1.0:
        raise ValueError(f"need lam > 0 and q in (0, 1), got lam={lam}, q={q}")
    return lam * q**k


def geometric_params(gamma: float, mu: float, rho: float, L: float):
    """Admissible (lam, q) for the geometric rule from instance constants.

    Returns lam = gamma*mu^2/(rho*L) and q = sqrt(1 - (1-gamma)*tau^2) with
    tau = mu/L, valid when tau <= sqrt(1/(2-gamma)); rejects parameters
    outside that range.
    """
    _check_constants(gamma, mu, rho, L)
    tau = mu / L
    limit = math.sqrt(1.0 / (2.0 - gamma))
    if tau > limit:
        raise ValueError(
            f"condition measure tau = {tau:.6g} exceeds sqrt(1/(2-gamma)) = "
            f"{limit:.6g}; the geometric rate is not guaranteed for this gamma"
        )
    lam = gamma * mu * mu / (rho * L)
    q = math.sqrt(1.0 - (1.0 - gamma) * tau * tau)
    return lam, q


def constant_step_threshold(alpha: float, mu: float, rho: float, L: float) -> float:
    """Plateau level for the constant rule: the squared distance the
    iterates contract toward, (alpha*L / (mu + sqrt(mu^2 - alpha*rho*L)))^2.

    This is the minimal positive fixed point of the one-step recurrence
    e = (1 + alpha*rho/L) e - 2 alpha tau sqrt(e) + alpha^2.  Requires
    0 < alpha < tau*mu/rho.
    """
    _check_positive(mu=mu, rho=rho, L=L)
    tau = mu / L
    if not 0.0 < alpha < tau * mu / rho:
        raise ValueError(
            f"need step size in (0, tau*mu/rho) = (0, {tau * mu / rho:.6g}), "
            f"got {alpha}"
        )
    disc = mu * mu - alpha * rho * L
    return (alpha * L / (mu + math.sqrt(disc))) ** 2


def constant_step_bound(E0: float, alpha: float, gamma: float, mu: float,
                        rho: float, L: float, k: int):
    """Bound on E_k - E* for the constant rule started at squared distance E0.

    Returns (bound, D, q) with D = sqrt(max(E0, 2 alpha^2 + E*)),
    q = 1 + (alpha/L)(rho - mu/D) in (0, 1) and
    bound = max(q**k (E0 - E*), 2 alpha^2).  Requires
    0 < alpha < gamma*tau/sqrt(1+2 tau^2) * mu/rho and E0 <= (gamma*mu/rho)^2.
    """
    _check_constants(gamma, mu, rho, L)
    if k < 0:
        raise ValueError(f"need k >= 0, got {k}")
    if E0 < 0.0:
        raise ValueError(f"need E0 >= 0, got {E0}")
    tau = mu / L
    alpha_max = gamma * tau / math.sqrt(1.0 + 2.0 * tau * tau) * (mu / rho)
    if not 0.0 < alpha < alpha_max:
        raise ValueError(
            f"need step size in (0, {alpha_max:.6g}) for gamma={gamma}, got {alpha}"
        )
    if E0 > (gamma * mu / rho) ** 2:
        raise ValueError(
            f"initial squared distance {E0} exceeds the tube bound "
            f"{(gamma * mu / rho) ** 2:.6g}"
        )
    estar = constant_step_threshold(alpha, mu, rho, L)
    D = math.sqrt(max(E0, 2.0 * alpha * alpha + estar))
    q = 1.0 + (alpha / L) * (rho - mu / D)
    bound = max(q**k * (E0 - estar), 2.0 * alpha * alpha)
    return bound, D, q


def _check_positive(**kwargs):
    for name, val in kwargs.items():
        if not (val > 0.0 and math.isfinite(val)):
            raise ValueError(f"need {name} > 0, got {val}")


def _check_constants(gamma, mu, rho, L):
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"need gamma in (0, 1), got {gamma}")
    _check_positive(mu=mu, rho=rho, L=L)


def solve(problem: ProblemInstance, schedule: StepSchedule, x0,
          config: SolveConfig = SolveConfig()) -> Trace:
    """Run the projected subgradient iteration from x0 (projected once).

    Records one row per visited iterate and stops on max_iters, a tolerance,
    or a (near-)zero subgradient.  Identical inputs produce bitwise identical
    traces.  Raises :class:`OracleError` if any oracle output turns
    non-finite, with the offending iteration index.
    """
    min_value = None
    if isinstance(schedule, Polyak):
        min_value = (schedule.min_value if schedule.min_value is not None
                     else problem.min_value)
        if min_value is None:
            raise ValueError(
                "the polyak rule needs a known optimal value: set it on the "
                "schedule or use an instance that declares one"
            )

    x = np.ascontiguousarray(x0, dtype=np.float64)
    if x.shape != (problem.dim,):
        raise ValueError(f"x0 must have shape ({problem.dim},), got {x.shape}")
    x = np.asarray(problem.project(x), dtype=np.float64)

    has_dist = problem.distance is not None
    objective, dist_col, steps, gnorms = [], ([] if has_dist else None), [], []
    warnings: list = []
    eps0 = config.zero_subgrad_tol
    status = STATUS_MAX_ITERS

    for k in range(config.max_iters + 1):
        g = float(problem.value(x))
        if not math.isfinite(g):
            raise OracleError("objective oracle returned a non-finite value", k)
        d = None
        if has_dist:
            d = float(problem.distance(x))
            if not math.isfinite(d) or d < 0.0:
                raise OracleError("distance oracle returned an invalid value", k)
        zeta = np.asarray(problem.subgrad(x), dtype=np.float64)
        if zeta.shape != (problem.dim,):
            raise OracleError("subgradient oracle returned a wrong-shaped vector", k)
        if not np.isfinite(zeta).all():
            raise OracleError("subgradient oracle returned a non-finite value", k)
        norm = float(np.linalg.norm(zeta))
        if eps0 is None:
            eps0 = 1e-14 * max(1.0, norm)

        def emit(step_len):
            objective.append(g)
            if has_dist:
                dist_col.append(d)
            steps.append(step_len)
            gnorms.append(norm)

        if norm <= eps0:
            emit(0.0)
            status = STATUS_ZERO_SUBGRAD
            break
        if config.dist_tol > 0.0 and has_dist and d <= config.dist_tol:
            emit(0.0)
            status = STATUS_TOLERANCE
            break
        if (min_value is not None and config.gap_tol > 0.0
                and g - min_value <= config.gap_tol):
            emit(0.0)
            status = STATUS_TOLERANCE
            break
        if k == config.max_iters:
            emit(0.0)
            status = STATUS_MAX_ITERS
            break

        if isinstance(schedule, Polyak):
            gap = g - min_value
            if gap < 0.0:
                warnings.append(
                    f"objective below the declared optimal value at iteration {k}; "
                    "step clamped to zero"
                )
                gap = 0.0
            step_len = gap / norm
            x_next = problem.project(x - (gap / (norm * norm)) * zeta)
        elif isinstance(schedule, Constant):
            step_len = schedule.alpha
            x_next = problem.project(x - (step_len / norm) * zeta)
        elif isinstance(schedule, Geometric):
            step_len = schedule.lam * schedule.q**k
            x_next = problem.project(x - (step_len / norm) * zeta)
        else:
            raise TypeError(f"unknown schedule {schedule!r}")

        x_next = np.asarray(x_next, dtype=np.float64)
        if not np.isfinite(x_next).all():
            raise OracleError("projected iterate is non-finite", k)
        emit(step_len)
        x = x_next

    return Trace(
        objective=np.asarray(objective),
        distance=None if dist_col is None else np.asarray(dist_col),
        step_size=np.asarray(steps),
        subgrad_norm=np.asarray(gnorms),
        status=status,
        final_point=x,
        warnings=tuple(warnings),
    )
