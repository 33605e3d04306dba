"""Empirical regularity constants, rate fitting, and inequality checks.

The estimators are one-sided by construction: the sharpness estimate is an
upper bound on the true constant over the sampled region (a min of ratios),
while the weak-convexity and subgradient-norm estimates are lower bounds
(maxima over samples).  Reports label observed values against their bounds
so estimates are never silently treated as certified constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import RngStream, sample_gaussian, sample_uniform
from .problems import AnalyticInstance, ProblemInstance, make_abs, make_l1, make_quad1d
from .solver import (
    Constant,
    Geometric,
    Polyak,
    SolveConfig,
    Trace,
    constant_step_threshold,
    constant_step_bound,
    geometric_params,
    solve,
)

#: Relative slack absorbed by every inequality check, to cover rounding.
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class ParamEstimates:
    """Empirical (sharpness, weak convexity, subgradient bound, condition)
    estimates plus the sampling certificate that produced them."""

    mu: float
    rho: float
    L: float
    tau: float
    n_points: int
    n_pairs: int
    radius: Optional[float]
    source: str


@dataclass(frozen=True)
class RateFit:
    """Per-iteration contraction of squared distance fitted from a trace."""

    q: float
    intercept: float
    residual: float
    window: tuple

    def __post_init__(self):
        if self.q <= 0.0:
            raise ValueError(f"fitted rate must be positive, got {self.q}")


@dataclass(frozen=True)
class TubeCheck:
    inside: bool
    margin: float


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    bound: float

    def line(self) -> str:
        word = "pass" if self.passed else "fail"
        return f"CHECK {self.name} {word} {self.observed:.12g} {self.bound:.12g}"


@dataclass(frozen=True)
class BoundReport:
    """Per-iteration satisfaction of a convergence-theorem bound."""

    name: str
    satisfied: np.ndarray
    fraction: float
    worst_violation: float
    constants_exact: bool

    def check(self) -> CheckResult:
        return CheckResult(self.name, bool(self.fraction == 1.0),
                           self.fraction, 1.0)


# ---------------------------------------------------------------------------
# Sampling and estimators
# ---------------------------------------------------------------------------

def sample_near_solutions(problem: ProblemInstance, radius: float, count: int,
                          rng: RngStream) -> np.ndarray:
    """Points x* + r u with x* cycling through the instance's solution
    anchors, u uniform on the sphere and r uniform on (0, radius].

    Consumes stream ids ``rng.stream`` (directions) and ``rng.stream + 1``
    (radii); results are projected onto the feasible set.
    """
    if not problem.solutions:
        raise ValueError("instance has no solution anchors to sample around")
    if radius <= 0.0 or count < 1:
        raise ValueError("need radius > 0 and count >= 1")
    d = problem.dim
    directions = sample_gaussian(rng, count * d).reshape(count, d)
    norms = np.linalg.norm(directions, axis=1)
    norms[norms == 0.0] = 1.0
    radii = radius * (1.0 - sample_uniform(rng.substream(rng.stream + 1), count))
    anchors = np.stack([problem.solutions[i % len(problem.solutions)]
                        for i in range(count)])
    points = anchors + (radii / norms)[:, None] * directions
    return np.stack([np.asarray(problem.project(p), dtype=np.float64)
                     for p in points])


def estimate_sharpness(problem: ProblemInstance, points,
                       best_value: Optional[float] = None) -> float:
    """Smallest observed ratio (g(x) - min g) / dist(x; X*) over the sample.

    An upper bound on the true sharpness constant restricted to the sampled
    region.  Needs the distance oracle and a known (or certified) best value.
    """
    if problem.distance is None:
        raise ValueError("sharpness estimation needs a distance oracle")
    gmin = best_value if best_value is not None else problem.min_value
    if gmin is None:
        raise ValueError("sharpness estimation needs a known best value")
    best = math.inf
    valid = 0
    for p in np.asarray(points, dtype=np.float64):
        dist = float(problem.distance(p))
        if dist <= 0.0:
            continue
        valid += 1
        ratio = (float(problem.value(p)) - gmin) / dist
        if ratio < best:
            best = ratio
    if valid == 0:
        raise ValueError("no sample points fell outside the solution set")
    return best


def estimate_weak_convexity(problem: ProblemInstance, xs, ys) -> float:
    """Largest observed violation ratio 2 (g(x) + <v, y-x> - g(y)) / ||y-x||^2
    over the sampled pairs, clamped below at zero.

    A lower bound on the true weak-convexity constant.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if xs.shape != ys.shape:
        raise ValueError(f"pair arrays must match, got {xs.shape} vs {ys.shape}")
    worst = 0.0
    for x, y in zip(xs, ys):
        gap = y - x
        sq = float(gap @ gap)
        if sq == 0.0:
            continue
        v = np.asarray(problem.subgrad(x), dtype=np.float64)
        num = float(problem.value(x)) + float(v @ gap) - float(problem.value(y))
        ratio = 2.0 * num / sq
        if ratio > worst:
            worst = ratio
    return worst


def estimate_L(problem: ProblemInstance, mu: float, rho: float, points) -> float:
    """Largest subgradient norm over sample points inside the unit tube
    dist(x; X*) < mu/rho.  A lower bound on the true tube supremum."""
    if problem.distance is None:
        raise ValueError("tube filtering needs a distance oracle")
    if mu <= 0.0 or rho <= 0.0:
        raise ValueError("need mu > 0 and rho > 0")
    tube = mu / rho
    best = -math.inf
    for p in np.asarray(points, dtype=np.float64):
        if float(problem.distance(p)) >= tube:
            continue
        norm = float(np.linalg.norm(problem.subgrad(p)))
        if norm > best:
            best = norm
    if not math.isfinite(best):
        raise ValueError("no sample points landed inside the unit tube")
    return best


def estimate_params(problem: ProblemInstance, points=None, *,
                    radius: float = 1.0, count: int = 10000,
                    rng: Optional[RngStream] = None,
                    pair_gap: float = 1e-3) -> ParamEstimates:
    """Full estimation pipeline: sharpness from point ratios, weak convexity
    from consecutive and jittered pairs, subgradient bound over the tube."""
    if rng is None:
        rng = RngStream(0, 16)
    if points is None:
        points = sample_near_solutions(problem, radius, count, rng)
        source = f"sphere radius={radius} count={count} seed={rng.seed} stream={rng.stream}"
        used_radius: Optional[float] = radius
    else:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        source = f"supplied points count={points.shape[0]}"
        used_radius = None

    jitter = sample_gaussian(rng.substream(rng.stream + 2),
                             points.shape[0] * problem.dim).reshape(points.shape)
    jn = np.linalg.norm(jitter, axis=1)
    jn[jn == 0.0] = 1.0
    xs = np.concatenate([points[:-1], points])
    ys = np.concatenate([points[1:], points + pair_gap * jitter / jn[:, None]])

    mu = estimate_sharpness(problem, points)
    rho = estimate_weak_convexity(problem, xs, ys)
    rho_for_tube = rho if rho > 0.0 else 1.0
    L = estimate_L(problem, mu, rho_for_tube, points)
    return ParamEstimates(
        mu=mu, rho=rho, L=L, tau=mu / L,
        n_points=points.shape[0], n_pairs=xs.shape[0],
        radius=used_radius, source=source,
    )


def grid_points_1d(lo: float, hi: float, n: int) -> np.ndarray:
    """Evenly spaced points on [lo, hi], shaped (n, 1) for 1-D instances."""
    return np.linspace(lo, hi, n).reshape(-1, 1)


# ---------------------------------------------------------------------------
# Tube membership and stationary-point checks
# ---------------------------------------------------------------------------

def check_tube(x, problem: ProblemInstance, gamma: float, mu: float,
               rho: float) -> TubeCheck:
    """Whether dist(x; X*) < gamma*mu/rho (strict), and by what margin."""
    if problem.distance is None:
        raise ValueError("tube membership needs a distance oracle")
    if gamma <= 0.0 or mu <= 0.0 or rho <= 0.0:
        raise ValueError("need gamma, mu, rho > 0")
    dist = float(problem.distance(np.asarray(x, dtype=np.float64)))
    bound = gamma * mu / rho
    return TubeCheck(inside=dist < bound, margin=bound - dist)


def verify_no_stationary(problem: ProblemInstance, mu: float, rho: float,
                         points, margin: float,
                         name: str = "no-stationary") -> CheckResult:
    """Check that no sampled point with 0 < dist < 2 mu/rho - margin has a
    zero subgradient; reports the minimum norm found (failure report, not an
    exception, when violated)."""
    if problem.distance is None:
        raise ValueError("the stationary-point check needs a distance oracle")
    outer = 2.0 * mu / rho - margin
    best = math.inf
    checked = 0
    for p in np.asarray(points, dtype=np.float64):
        dist = float(problem.distance(p))
        if not 0.0 < dist < outer:
            continue
        checked += 1
        norm = float(np.linalg.norm(problem.subgrad(p)))
        if norm < best:
            best = norm
    if checked == 0:
        raise ValueError("no sample points landed in the tested region")
    return CheckResult(name=name, passed=best > 0.0, observed=best, bound=0.0)


# ---------------------------------------------------------------------------
# Rate fitting and theorem bounds on traces
# ---------------------------------------------------------------------------

def fit_linear_rate(trace: Trace, window: Optional[tuple] = None) -> RateFit:
    """Least-squares contraction factor of squared distance per iteration.

    Fits log dist^2(x_k) against k over the window (default: the middle 80%
    of the trace after dropping the converged tail, i.e. iterates within
    relative machine noise 1e-14 of the start distance) and reports
    q = exp(slope).  Nonpositive distances truncate the window; at least 3
    positive entries are required.
    """
    if trace.distance is None:
        raise ValueError("rate fitting needs the distance column")
    dist = np.asarray(trace.distance, dtype=np.float64)
    n = dist.shape[0]
    if window is None:
        floor = 1e-14 * dist[0] if n and dist[0] > 0.0 else 0.0
        hit = np.nonzero(dist <= floor)[0]
        n_eff = int(hit[0]) if hit.size else n
        lo = int(math.floor(0.1 * n_eff))
        hi = n_eff - lo
    else:
        lo, hi = int(window[0]), int(window[1])
        if not 0 <= lo < hi <= n:
            raise ValueError(f"window {window} out of trace bounds [0, {n}]")
    seg = dist[lo:hi]
    nonpos = np.nonzero(seg <= 0.0)[0]
    if nonpos.size:
        hi = lo + int(nonpos[0])
        seg = dist[lo:hi]
    if seg.shape[0] < 3:
        raise ValueError("window must contain at least 3 positive distances")
    ks = np.arange(lo, hi, dtype=np.float64)
    ys = 2.0 * np.log(seg)
    slope, intercept = np.polyfit(ks, ys, 1)
    resid = ys - (slope * ks + intercept)
    return RateFit(
        q=float(np.exp(slope)),
        intercept=float(intercept),
        residual=float(np.sqrt(np.mean(resid * resid))),
        window=(lo, hi),
    )


def verify_trace_bounds(trace: Trace, schedule, mu: float, rho: float,
                        L: float, gamma: Optional[float] = None,
                        slack: float = BOUND_SLACK,
                        constants_exact: bool = True) -> BoundReport:
    """Per-iteration satisfaction of the convergence bound matching the
    schedule type.

    polyak:    dist^2(x_{k+1}) <= (1 - (1-gamma) tau^2) dist^2(x_k);
    geometric: dist^2(x_k) <= (gamma mu/rho)^2 (1 - (1-gamma) tau^2)^k,
               requiring the schedule's (lam, q) to match the constants;
    constant:  E_k - E* <= max(q^k (E_0 - E*), 2 alpha^2).

    With exact constants the contract is fraction == 1; with estimated
    constants the report is informational.
    """
    if trace.distance is None:
        raise ValueError("bound verification needs the distance column")
    E = np.asarray(trace.distance, dtype=np.float64) ** 2
    if E.shape[0] < 2:
        raise ValueError("trace too short to verify bounds")
    tau = mu / L

    if isinstance(schedule, Polyak):
        if gamma is None:
            gamma = math.sqrt(E[0]) * rho / mu
        rate = 1.0 - (1.0 - gamma) * tau * tau
        lhs = E[1:]
        rhs = rate * E[:-1]
        name = "polyak-qlinear"
    elif isinstance(schedule, Geometric):
        if gamma is None:
            raise ValueError("the geometric bound needs gamma")
        lam_ref, q_ref = geometric_params(gamma, mu, rho, L)
        if (abs(schedule.lam - lam_ref) > 1e-9 * max(1.0, lam_ref)
                or abs(schedule.q - q_ref) > 1e-9):
            raise ValueError(
                f"schedule (lam={schedule.lam}, q={schedule.q}) does not match "
                f"the bound's (lam={lam_ref:.12g}, q={q_ref:.12g})"
            )
        rate = 1.0 - (1.0 - gamma) * tau * tau
        ks = np.arange(E.shape[0])
        lhs = E
        rhs = (gamma * mu / rho) ** 2 * rate**ks
        name = "geometric-rate"
    elif isinstance(schedule, Constant):
        if gamma is None:
            raise ValueError("the constant-step bound needs gamma")
        estar = constant_step_threshold(schedule.alpha, mu, rho, L)
        _, _, q = constant_step_bound(float(E[0]), schedule.alpha, gamma,
                                      mu, rho, L, 0)
        ks = np.arange(E.shape[0])
        lhs = E - estar
        rhs = np.maximum(q**ks * (E[0] - estar),
                         2.0 * schedule.alpha * schedule.alpha)
        name = "constant-plateau-bound"
    else:
        raise ValueError(f"no bound is associated with schedule {schedule!r}")

    tol = slack * np.maximum(1.0, np.abs(rhs))
    satisfied = lhs <= rhs + tol
    violation = float(np.max(lhs - rhs)) if lhs.size else 0.0
    return BoundReport(
        name=name,
        satisfied=satisfied,
        fraction=float(np.mean(satisfied)),
        worst_violation=violation,
        constants_exact=constants_exact,
    )


def certify_sharpness(problem: ProblemInstance, mu: float, points,
                      name: str = "sharpness",
                      slack: float = BOUND_SLACK) -> CheckResult:
    """Check (g(x) - min g)/dist >= mu on the sample (observed = min ratio)."""
    observed = estimate_sharpness(problem, points)
    return CheckResult(name, observed >= mu - slack * max(1.0, mu), observed, mu)


def certify_weak_convexity(problem: ProblemInstance, rho: float, xs, ys,
                           name: str = "weak-convexity",
                           slack: float = BOUND_SLACK) -> CheckResult:
    """Check the subgradient inequality with modulus rho on the pairs
    (observed = max violation ratio)."""
    observed = estimate_weak_convexity(problem, xs, ys)
    return CheckResult(name, observed <= rho + slack * max(1.0, rho), observed, rho)


def recurrence_check(inst: AnalyticInstance, xs, alphas,
                     name: str = "one-step-recurrence",
                     slack: float = BOUND_SLACK) -> CheckResult:
    """Check the one-step estimate
    E(x+) <= (1 + rho a / L) E(x) - 2 a tau sqrt(E(x)) + a^2 on a grid of
    tube points x and step sizes a (observed = worst gap)."""
    problem = inst.problem
    tau = inst.tau
    worst = -math.inf
    for x in np.atleast_2d(np.asarray(xs, dtype=np.float64)):
        dist = float(problem.distance(x))
        if not dist < inst.tube_radius:
            raise ValueError(f"grid point {x} is outside the unit tube")
        zeta = np.asarray(problem.subgrad(x), dtype=np.float64)
        norm = float(np.linalg.norm(zeta))
        if norm == 0.0:
            continue
        E = dist * dist
        for a in alphas:
            xp = problem.project(x - (a / norm) * zeta)
            Ep = float(problem.distance(xp)) ** 2
            rhs = (1.0 + inst.rho * a / inst.L) * E - 2.0 * a * tau * math.sqrt(E) + a * a
            gap = Ep - rhs
            if gap > worst:
                worst = gap
    return CheckResult(name, worst <= slack, worst, 0.0)


def contraction_check(inst: AnalyticInstance, trace: Trace, alpha: float,
                      name: str = "contraction",
                      slack: float = BOUND_SLACK) -> CheckResult:
    """Check E_{k+1} - E* <= q_k (E_k - E*) with
    q_k = 1 + (alpha/L)(rho - 2 mu/(sqrt(E_k) + sqrt(E*))) on every step of
    the trace taken from inside the unit tube (observed = worst gap)."""
    if trace.distance is None:
        raise ValueError("contraction check needs the distance column")
    estar = constant_step_threshold(alpha, inst.mu, inst.rho, inst.L)
    E = np.asarray(trace.distance, dtype=np.float64) ** 2
    worst = -math.inf
    checked = 0
    for k in range(E.shape[0] - 1):
        if not E[k] < inst.tube_radius**2:
            continue
        if trace.subgrad_norm[k] == 0.0:
            continue
        qk = 1.0 + (alpha / inst.L) * (
            inst.rho - 2.0 * inst.mu / (math.sqrt(E[k]) + math.sqrt(estar))
        )
        if qk >= 1.0:
            return CheckResult(name, False, qk, 1.0)
        gap = (E[k + 1] - estar) - qk * (E[k] - estar)
        checked += 1
        if gap > worst:
            worst = gap
    if checked == 0:
        raise ValueError("no tube iterations to check")
    return CheckResult(name, worst <= slack, worst, 0.0)


# ---------------------------------------------------------------------------
# Verification battery over the analytic instances
# ---------------------------------------------------------------------------

def _axis_circle_points(radius: float, n: int) -> np.ndarray:
    th = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return radius * np.stack([np.cos(th), np.sin(th)], axis=1)


def _square_grid(lo: float, hi: float, n: int) -> np.ndarray:
    side = np.linspace(lo, hi, n)
    gx, gy = np.meshgrid(side, side)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def run_verification_battery() -> list:
    """All lemma/theorem checks on the analytic instance battery.

    Returns a list of :class:`CheckResult`; every check must pass on a
    correct build.
    """
    checks = []
    abs_inst = make_abs()
    l1 = make_l1()
    quad = make_quad1d()

    grid1 = grid_points_1d(-2.0, 2.0, 2001)
    spacing = 4.0 / 2000.0

    # Sharpness certificates: min observed ratio must reach the constant.
    checks.append(certify_sharpness(abs_inst.problem, abs_inst.mu, grid1,
                                    name="sharpness-abs"))
    checks.append(certify_sharpness(l1.problem, l1.mu,
                                    _axis_circle_points(1.0, 720),
                                    name="sharpness-l1"))
    checks.append(certify_sharpness(quad.problem, quad.mu, grid1,
                                    name="sharpness-quad1d"))

    # Weak-convexity certificates over consecutive grid pairs.
    for inst, nm in ((abs_inst, "weak-convexity-abs"),
                     (quad, "weak-convexity-quad1d")):
        checks.append(certify_weak_convexity(
            inst.problem, inst.rho, grid1[:-1], grid1[1:], name=nm))
    ring = _axis_circle_points(1.3, 720)
    checks.append(certify_weak_convexity(l1.problem, l1.rho,
                                         ring[:-1], ring[1:],
                                         name="weak-convexity-l1"))

    # No extraneous stationary points strictly inside the double tube.
    checks.append(verify_no_stationary(abs_inst.problem, abs_inst.mu,
                                       abs_inst.rho, grid1, margin=2 * spacing,
                                       name="no-stationary-abs"))
    checks.append(verify_no_stationary(quad.problem, quad.mu, quad.rho,
                                       grid1, margin=2 * spacing,
                                       name="no-stationary-quad1d"))
    checks.append(verify_no_stationary(l1.problem, l1.mu, l1.rho,
                                       _square_grid(-2.0, 2.0, 201),
                                       margin=0.04, name="no-stationary-l1"))

    # Condition measure never exceeds one.
    worst_tau = max(abs_inst.tau, l1.tau, quad.tau)
    checks.append(CheckResult("condition-measure", worst_tau <= 1.0 + BOUND_SLACK,
                              worst_tau, 1.0))

    # Q-linear contraction of the optimal-value rule from a tube start.
    x0 = np.array([1.2])
    gamma = quad.problem.distance(x0) * quad.rho / quad.mu
    trace = solve(quad.problem, Polyak(), x0, SolveConfig(max_iters=100))
    rep = verify_trace_bounds(trace, Polyak(), quad.mu, quad.rho, quad.L, gamma)
    checks.append(CheckResult("polyak-qlinear-quad1d", rep.fraction == 1.0,
                              rep.fraction, 1.0))

    # Geometric-rule rate on the l1 instance.
    lam, q = geometric_params(0.5, l1.mu, l1.rho, l1.L)
    x0 = np.array([0.28, 0.28])
    trace = solve(l1.problem, Geometric(lam, q), x0, SolveConfig(max_iters=100))
    rep = verify_trace_bounds(trace, Geometric(lam, q), l1.mu, l1.rho, l1.L, 0.5)
    checks.append(CheckResult("geometric-rate-l1", rep.fraction == 1.0,
                              rep.fraction, 1.0))

    # Constant-rule plateau bound and eventual plateau level.
    alpha = 0.05
    x0 = np.array([0.81])
    trace = solve(abs_inst.problem, Constant(alpha), x0, SolveConfig(max_iters=500))
    rep = verify_trace_bounds(trace, Constant(alpha), abs_inst.mu, abs_inst.rho,
                              abs_inst.L, 0.9)
    checks.append(CheckResult("constant-bound-abs", rep.fraction == 1.0,
                              rep.fraction, 1.0))
    estar = constant_step_threshold(alpha, abs_inst.mu, abs_inst.rho, abs_inst.L)
    tail = np.asarray(trace.distance[300:]) ** 2
    plateau = float(tail.max())
    plateau_bound = estar + 2.0 * alpha * alpha
    checks.append(CheckResult("constant-plateau-abs",
                              plateau <= plateau_bound + BOUND_SLACK,
                              plateau, plateau_bound))

    # One-step recurrence on a (tube point, step size) grid.
    branch = np.linspace(0.502, 1.498, 50)
    xs = np.concatenate([branch, -branch]).reshape(-1, 1)
    alphas = np.linspace(0.02, 1.0, 20)
    checks.append(recurrence_check(quad, xs, alphas,
                                   name="one-step-recurrence-quad1d"))

    # Per-iteration contraction toward the plateau threshold.
    trace = solve(quad.problem, Constant(0.1), np.array([1.45]),
                  SolveConfig(max_iters=200))
    checks.append(contraction_check(quad, trace, 0.1,
                                    name="contraction-quad1d"))

    # The plateau threshold solves its defining fixed-point equation.
    worst_resid = 0.0
    for a, mu_, rho_, L_ in ((0.1, 1.0, 2.0, 3.0), (0.05, 1.0, 1.0, 1.0),
                             (0.02, 0.8, 1.5, 2.0)):
        e = constant_step_threshold(a, mu_, rho_, L_)
        resid = abs(e - ((1.0 + a * rho_ / L_) * e
                         - 2.0 * a * (mu_ / L_) * math.sqrt(e) + a * a))
        worst_resid = max(worst_resid, resid)
    checks.append(CheckResult("plateau-fixed-point", worst_resid <= 1e-12,
                              worst_resid, 1e-12))

    return checks
