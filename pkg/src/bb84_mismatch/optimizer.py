"""Eve's optimization: minimize QBER subject to rate-matching constraints.

The search treats Eve's strategy parameters as unconstrained reals (log
intensities; angle rows through exponential normalization), wraps the rate
constraints in a growing quadratic penalty, and runs a multi-start
Nelder-Mead inside each penalty round.  Every quantity reported on the final
result is re-evaluated through the readable model in :mod:`.attack`; the
jitted kernel only steers the search.

Restricted-space searches are embedded verbatim inside every generalized
restart (a generalized restart first optimizes the four diagonal intensities
with identity angle rows, then releases all 28 coordinates), so the best
generalized result can never be worse than the best restricted one for the
same configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .attack import (
    EveMeasurementModel,
    GeneralizedStrategy,
    HonestChannel,
    Observables,
    RestrictedStrategy,
    ScramblingPolicy,
    honest_baseline,
    honest_baseline_per_pol,
    observables,
)
from .receiver import EfficiencyMap, ReceiverParams, rotation_table

STRATEGY_SPACES = ("restricted_4", "generalized_32")
CONSTRAINT_MODES = ("total_rate", "per_channel_rate")

LOG_MU_FLOOR = math.log(1e-9)
_INIT_MU_RANGE = (math.log(1e-3), math.log(1e2))
_IDENTITY_EPS = 1e-4


@dataclass
class Scenario:
    """Physical configuration shared by every evaluation inside one search."""

    eve: EveMeasurementModel
    params: ReceiverParams
    emap: EfficiencyMap
    nominal_eta: float = 0.1


@dataclass
class OptimizerConfig:
    restarts: int = 64
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_rounds: int = 6
    inner_tol: float = 1e-10
    feasibility_tol: float = 1e-6
    mu_max: float = 1e4
    seed: int = 2024
    match_per_pol_baseline: bool = False

    def __post_init__(self) -> None:
        if self.restarts < 1 or self.penalty_rounds < 1:
            raise ValueError("restarts and penalty_rounds must be positive")
        if min(self.penalty_init, self.inner_tol, self.feasibility_tol, self.mu_max) <= 0:
            raise ValueError("tolerances, penalty_init and mu_max must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


@dataclass
class OptimizationResult:
    strategy: RestrictedStrategy | GeneralizedStrategy
    qber: float | None
    residuals: np.ndarray
    feasible: bool
    r_ab: float
    restarts_used: int
    evaluations: int
    trace: list[dict] | None = None


@dataclass
class SweepPoint:
    loss_db: float
    result: OptimizationResult | None
    error: str | None = None


def objective(
    strat: RestrictedStrategy | GeneralizedStrategy,
    scenario: Scenario,
    channel: HonestChannel,
    policy: ScramblingPolicy,
    mode: str = "total_rate",
    match_per_pol_baseline: bool = False,
) -> tuple[float, np.ndarray]:
    """QBER and rate residuals of one strategy (readable path, no penalty).

    An undefined QBER (zero sifted rate) scores as 1 so searches stay total.
    """
    if mode not in CONSTRAINT_MODES:
        raise ValueError(f"constraint mode must be one of {CONSTRAINT_MODES}, got {mode!r}")
    obs = observables(strat, policy, scenario.eve, scenario.params, scenario.emap)
    targets = _baseline_targets(scenario, channel, mode, match_per_pol_baseline)
    if mode == "total_rate":
        residuals = np.array([obs.rate_total - targets[0]])
    else:
        residuals = obs.rate_per_pol - targets
    qber = 1.0 if obs.qber is None else obs.qber
    return qber, residuals


def _baseline_targets(
    scenario: Scenario, channel: HonestChannel, mode: str, match_per_pol: bool
) -> np.ndarray:
    if mode == "per_channel_rate" and match_per_pol:
        return honest_baseline_per_pol(channel, scenario.params, scenario.nominal_eta)
    r_ab = honest_baseline(channel, scenario.params, scenario.nominal_eta)
    return np.full(4, r_ab)


class _Evaluator:
    """Bundles the jitted kernel with one scenario's precomputed arrays."""

    def __init__(
        self,
        scenario: Scenario,
        policy: ScramblingPolicy,
        mode: str,
        targets: np.ndarray,
        r_ab: float,
    ):
        self.fidelity = float(scenario.params.fidelity)
        self.eta = np.ascontiguousarray(scenario.emap.eta)
        self.dark = np.ascontiguousarray(scenario.params.dark_counts)
        self.coef = scenario.eve.coefficient_matrix()
        self.p_none = float(scenario.eve.p_none)
        self.policy = np.ascontiguousarray(policy.weights)
        self.rot = rotation_table()
        self.model_id = 0 if scenario.params.click_model == "paper_approx" else 1
        self.per_channel = mode == "per_channel_rate"
        self.targets = np.ascontiguousarray(targets, dtype=float)
        self.resid_scale = max(float(r_ab), 1e-12)
        self.log_lo = LOG_MU_FLOOR
        self.log_hi = 0.0  # set by configure
        self.evaluations = 0

    def configure(self, mu_max: float) -> None:
        self.log_hi = math.log(mu_max)

    def observe(self, x: np.ndarray, restricted: bool) -> tuple[np.ndarray, np.ndarray]:
        self.evaluations += 1
        return _kernels.observables_from_params(
            np.ascontiguousarray(x, dtype=float),
            restricted,
            self.fidelity,
            self.eta,
            self.dark,
            self.coef,
            self.p_none,
            self.policy,
            self.rot,
            self.model_id,
            self.log_lo,
            self.log_hi,
        )

    def objective_fn(self, restricted: bool, weight: float):
        def fn(x: np.ndarray) -> float:
            self.evaluations += 1
            return _kernels.penalized_objective(
                np.ascontiguousarray(x, dtype=float),
                restricted,
                self.fidelity,
                self.eta,
                self.dark,
                self.coef,
                self.p_none,
                self.policy,
                self.rot,
                self.model_id,
                self.log_lo,
                self.log_hi,
                self.targets,
                self.resid_scale,
                self.per_channel,
                weight,
            )

        return fn

    def point_stats(self, x: np.ndarray, restricted: bool) -> tuple[float, np.ndarray]:
        """(qber-or-1, residual vector) at one search point, kernel path."""
        rate, err = self.observe(x, restricted)
        rate_total = float(rate.sum() / 4.0)
        qber = err.sum() / 4.0 / rate_total if rate_total > 0 else 1.0
        if self.per_channel:
            residuals = rate - self.targets
        else:
            residuals = np.array([rate_total - self.targets[0]])
        return float(qber), residuals


def strategy_from_x(
    x: np.ndarray, space: str, mu_max: float
) -> RestrictedStrategy | GeneralizedStrategy:
    """Strategy tables for one point in search coordinates.

    Delegates to the same compiled mapping the search evaluates, so reported
    strategies are bit-identical to what the optimizer actually scored.
    """
    x = np.ascontiguousarray(x, dtype=float)
    restricted = space == "restricted_4"
    mu, f = _kernels.strategy_from_params(x, restricted, LOG_MU_FLOOR, math.log(mu_max))
    if restricted:
        return RestrictedStrategy(np.diag(mu).copy())
    return GeneralizedStrategy(mu, f)


def _identity_logits(eps: float = _IDENTITY_EPS) -> np.ndarray:
    """Free logits (4 rows x 3) whose softmax is a sharp identity matrix."""
    big = math.log((1.0 - 3.0 * eps) / eps)
    logits = np.zeros((4, 3))
    for q in range(3):
        logits[q, q] = big
    logits[3, :] = -big
    return logits


def _logits_from_rows(f: np.ndarray) -> np.ndarray:
    """Free logits reproducing strictly positive simplex rows under softmax."""
    return np.log(f[:, :3]) - np.log(f[:, 3:4])


def _nelder_mead(fn, x0: np.ndarray, step: float, tol: float) -> np.ndarray:
    n = x0.size
    simplex = np.repeat(x0[None, :], n + 1, axis=0)
    for i in range(n):
        simplex[i + 1, i] += step
    res = minimize(
        fn,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": tol,
            "fatol": tol,
            "maxfev": 200 * n,
            "adaptive": n > 8,
        },
    )
    return np.asarray(res.x, dtype=float)


def _run_penalty_loop(
    ev: _Evaluator,
    cfg: OptimizerConfig,
    restricted: bool,
    x0: np.ndarray,
    trace: list[dict],
    restart_label,
    phase: str,
) -> np.ndarray:
    """One full penalty schedule from ``x0``; returns the best-constrained point.

    The search always continues from the latest round output, but the point
    carried forward as this phase's answer never regresses in constraint
    violation from one round to the next.
    """
    x_cur = np.asarray(x0, dtype=float)
    inc_x: np.ndarray | None = None
    inc_resid = math.inf
    inc_qber = math.inf
    for r in range(cfg.penalty_rounds):
        weight = cfg.penalty_init * cfg.penalty_growth**r
        fn = ev.objective_fn(restricted, weight)
        x_cur = _nelder_mead(fn, x_cur, 0.5 * 0.5**r, cfg.inner_tol)
        qber, residuals = ev.point_stats(x_cur, restricted)
        max_resid = float(np.max(np.abs(residuals)))
        if max_resid <= inc_resid:
            inc_x, inc_resid, inc_qber = x_cur, max_resid, qber
        trace.append(
            {
                "restart": restart_label,
                "phase": phase,
                "round": r,
                "weight": weight,
                "qber": inc_qber,
                "max_abs_residual": inc_resid,
                "evaluations": ev.evaluations,
            }
        )
    assert inc_x is not None
    return inc_x


def _bisect_common_mu(ev: _Evaluator, cfg: OptimizerConfig) -> float:
    """Log of a common intensity whose total rate matches the baseline.

    Scans a log grid for a bracket around the target rate and bisects inside
    it; with no bracket (target unreachable) returns the rate-maximizing grid
    point.  Errors are ignored; this only seeds the search.
    """
    target = float(ev.targets[0]) if not ev.per_channel else float(ev.targets.mean())
    lo, hi = LOG_MU_FLOOR, ev.log_hi
    grid = np.linspace(lo, hi, 200)

    def rate_at(z: float) -> float:
        rate, _ = ev.observe(np.full(4, z), True)
        return float(rate.sum() / 4.0)

    vals = np.array([rate_at(z) for z in grid])
    bracket = None
    for i in range(len(grid) - 1):
        da, db = vals[i] - target, vals[i + 1] - target
        if da == 0.0:
            return float(grid[i])
        if da * db < 0:
            bracket = (grid[i], grid[i + 1])
            break
    if bracket is None:
        return float(grid[int(np.argmax(vals))])
    a, b = bracket
    fa = rate_at(a) - target
    for _ in range(60):
        m = 0.5 * (a + b)
        fm = rate_at(m) - target
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


@dataclass
class _Candidate:
    x: np.ndarray
    restricted: bool
    order: int
    restart_label: object
    qber: float
    residuals: np.ndarray

    @property
    def max_resid(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    @property
    def resid_norm(self) -> float:
        return float(np.linalg.norm(self.residuals))


def optimize(
    space: str,
    mode: str,
    scrambling: ScramblingPolicy,
    channel: HonestChannel,
    config: OptimizerConfig,
    scenario: Scenario,
    warm_starts: list[np.ndarray] | None = None,
) -> OptimizationResult:
    """Multi-start penalty search over one strategy space.

    ``warm_starts`` are extra initial points (search coordinates from a
    previous, related solve) appended as additional restarts.
    """
    if space not in STRATEGY_SPACES:
        raise ValueError(f"strategy space must be one of {STRATEGY_SPACES}, got {space!r}")
    if mode not in CONSTRAINT_MODES:
        raise ValueError(f"constraint mode must be one of {CONSTRAINT_MODES}, got {mode!r}")

    targets = _baseline_targets(scenario, channel, mode, config.match_per_pol_baseline)
    r_ab = honest_baseline(channel, scenario.params, scenario.nominal_eta)
    if r_ab <= 0:
        raise ValueError("honest baseline rate must be positive")
    ev = _Evaluator(scenario, scrambling, mode, targets, r_ab)
    ev.configure(config.mu_max)
    generalized = space == "generalized_32"

    trace: list[dict] = []
    pool: list[_Candidate] = []
    order = 0

    def add_candidate(x: np.ndarray, restricted: bool, label) -> None:
        nonlocal order
        qber, residuals = ev.point_stats(x, restricted)
        pool.append(_Candidate(x.copy(), restricted, order, label, qber, residuals))
        order += 1

    def run_restart(label, x_diag0, off_logmu, logits0, x_full0=None) -> None:
        if x_full0 is not None:
            x_final = _run_penalty_loop(ev, config, False, x_full0, trace, label, "generalized")
            add_candidate(x_final, False, label)
            return
        x_diag = _run_penalty_loop(ev, config, True, x_diag0, trace, label, "restricted")
        add_candidate(x_diag, True, label)
        if generalized:
            logmu = off_logmu.copy()
            np.fill_diagonal(logmu, np.clip(x_diag, LOG_MU_FLOOR, ev.log_hi))
            x_full = np.concatenate([logmu.ravel(), logits0.ravel()])
            x_final = _run_penalty_loop(ev, config, False, x_full, trace, label, "generalized")
            add_candidate(x_final, False, label)

    for i in range(config.restarts):
        if i == 0:
            z = _bisect_common_mu(ev, config)
            x_diag0 = np.full(4, z)
            off_logmu = np.full((4, 4), z)
            logits0 = _identity_logits()
        else:
            rng = np.random.default_rng(np.random.SeedSequence((config.seed, i)))
            off_logmu = rng.uniform(*_INIT_MU_RANGE, size=(4, 4))
            f_init = rng.dirichlet(np.ones(4), size=4)
            x_diag0 = np.diag(off_logmu).copy()
            logits0 = _logits_from_rows(f_init)
        run_restart(i, x_diag0, off_logmu, logits0)

    for w, x_warm in enumerate(warm_starts or []):
        x_warm = np.asarray(x_warm, dtype=float)
        label = f"warm{w}"
        if x_warm.size == 4:
            z = np.clip(x_warm, LOG_MU_FLOOR, ev.log_hi)
            run_restart(label, z, np.repeat(z[:, None], 4, axis=1), _identity_logits())
        elif x_warm.size == 28 and generalized:
            run_restart(label, None, None, None, x_full0=x_warm)

    feasible = [c for c in pool if c.max_resid <= config.feasibility_tol]
    if feasible:
        winner = min(feasible, key=lambda c: (c.qber, c.resid_norm, c.order))
    else:
        winner = min(pool, key=lambda c: (c.resid_norm, c.qber, c.order))

    strategy = strategy_from_x(
        winner.x, "restricted_4" if winner.restricted else "generalized_32", config.mu_max
    )
    if generalized and isinstance(strategy, RestrictedStrategy):
        # A first-phase (diagonal) candidate won; report it in the requested
        # parameter space. The embedding evaluates identically bit for bit.
        strategy = GeneralizedStrategy.from_restricted(strategy)
    _, final_residuals = objective(
        strategy, scenario, channel, scrambling, mode, config.match_per_pol_baseline
    )
    obs = observables(strategy, scrambling, scenario.eve, scenario.params, scenario.emap)
    result = OptimizationResult(
        strategy=strategy,
        qber=obs.qber,
        residuals=final_residuals,
        feasible=bool(np.max(np.abs(final_residuals)) <= config.feasibility_tol),
        r_ab=r_ab,
        restarts_used=config.restarts + len(warm_starts or []),
        evaluations=ev.evaluations,
        trace=[row for row in trace if row["restart"] == winner.restart_label],
    )
    result._winner_x = winner.x  # search coordinates, reused by sweep warm starts
    result._winner_restricted = winner.restricted
    return result


def sweep(
    losses,
    space: str,
    mode: str,
    scrambling: ScramblingPolicy,
    channel_template: HonestChannel,
    config: OptimizerConfig,
    scenario: Scenario,
    warm_start: bool = True,
    jobs: int = 1,
    progress=None,
) -> list[SweepPoint]:
    """One optimization per loss point, in input order.

    With warm starting (default) each point seeds an extra restart from the
    previous point's winner, which chains the points sequentially; disabling
    it makes the points independent so they can be dispatched to worker
    processes.
    """
    losses = [float(x) for x in losses]
    if not losses:
        raise ValueError("loss list must be nonempty")
    if warm_start or jobs <= 1:
        points: list[SweepPoint] = []
        warm: list[np.ndarray] = []
        for loss in losses:
            channel = HonestChannel(loss, channel_template.alice_mu)
            try:
                result = optimize(
                    space, mode, scrambling, channel, config, scenario,
                    warm_starts=warm if warm_start else None,
                )
                warm = [result._winner_x]
                points.append(SweepPoint(loss, result))
            except Exception as exc:  # per-point failure leaves the sweep running
                warm = []
                points.append(SweepPoint(loss, None, f"{type(exc).__name__}: {exc}"))
            if progress is not None:
                progress(points[-1])
        return points

    import concurrent.futures

    args = [
        (space, mode, scrambling, HonestChannel(loss, channel_template.alice_mu), config, scenario)
        for loss in losses
    ]
    points = [None] * len(losses)
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool_exec:
        futures = {pool_exec.submit(_optimize_star, a): idx for idx, a in enumerate(args)}
        for fut in concurrent.futures.as_completed(futures):
            idx = futures[fut]
            try:
                points[idx] = SweepPoint(losses[idx], fut.result())
            except Exception as exc:
                points[idx] = SweepPoint(losses[idx], None, f"{type(exc).__name__}: {exc}")
            if progress is not None:
                progress(points[idx])
    return list(points)


def _optimize_star(args):
    return optimize(*args)
