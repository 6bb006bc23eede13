"""Finite-horizon vaccination planning and the receding-horizon closed loop.

Each day the controller minimizes the predicted death toll

    sum_{n=0}^{N-1} gamma_d' I(n)  +  (1/epsilon) gamma_d' I(N)

over daily vaccination plans u(0..N-1), each constrained to u >= 0 and
sum_k u_k <= v_bar, subject to the reduced (S, I) dynamics.  The horizon-end
state is steered into the terminal region of :mod:`vaxmpc.certificates`,
either as a hard requirement or (default) as a hinge penalty, and only the
first planned day is applied before re-solving.

The solver is projected gradient descent with analytically propagated
sensitivities through the bilinear dynamics (single shooting) and a seeded
multi-start to cope with local minima; identical inputs and seed give
bitwise-identical solutions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import strategies
from .certificates import XSTAR_ATOL, CertificateParams, epsilon_valid
from .errors import ContractViolation, SolverFailure, ValidationError
from .model import EpidemicState, ModelParams, Trajectory, si_step, step
from .results import DayRecord, ScenarioResult

#: Penalty weight used to emulate the hard terminal constraint.
HARD_MODE_WEIGHT = 1e9

_ARMIJO_C = 1e-4
_MAX_BACKTRACKS = 40


@dataclass(frozen=True)
class MpcConfig:
    """Controller, loop and solver settings.

    ``eradication_threshold`` may be a scalar (applied to every group) or a
    per-group vector; vaccination stops for good once every group's infected
    count is at or below it.  Days are one-based: the outbreak starts on day
    1 and vaccination is allowed from ``vaccination_start_day`` on.
    """

    horizon: int = 40
    epsilon: float = 0.1
    v_bar: float = 55191.0
    eradication_threshold: float | tuple | np.ndarray = 1.0
    strategy_horizon: int = 140
    vaccination_start_day: int = 61
    max_iterations: int = 150
    step_tolerance: float = 1e-8
    cost_tolerance: float = 1e-10
    terminal_mode: str = "penalty"
    penalty_weight: float = 1e6
    rng_seed: int = 0
    n_restarts: int = 3

    def validate(self, params: ModelParams | None = None) -> None:
        if self.horizon < 1:
            raise ValidationError("horizon must be a positive number of days")
        if self.v_bar <= 0:
            raise ValidationError("v_bar must be positive")
        if np.any(np.asarray(self.eradication_threshold, dtype=float) <= 0):
            raise ValidationError("eradication_threshold must be positive")
        if self.strategy_horizon < 1:
            raise ValidationError("strategy_horizon must be positive")
        if self.vaccination_start_day < 0:
            raise ValidationError("vaccination_start_day must be nonnegative")
        if self.terminal_mode not in ("hard", "penalty"):
            raise ValidationError("terminal_mode must be 'hard' or 'penalty'")
        if self.max_iterations < 1 or self.n_restarts < 0:
            raise ValidationError("bad solver iteration settings")
        if params is not None and not epsilon_valid(self.epsilon, params):
            upper = float(np.min(params.gamma_r + params.gamma_d))
            raise ValidationError(
                f"epsilon={self.epsilon} outside (0, {upper}) for these rates"
            )

    def eradication_vector(self, n_a: int) -> np.ndarray:
        vec = np.broadcast_to(
            np.asarray(self.eradication_threshold, dtype=float), (n_a,)
        ).copy()
        return vec


@dataclass(frozen=True)
class SiTrajectory:
    """Predicted susceptible/infected paths, shape (N+1, n_a) each."""

    s: np.ndarray
    i: np.ndarray


@dataclass(frozen=True)
class OcpProblem:
    """One day's finite-horizon problem, self-contained and solver-ready."""

    s0: np.ndarray
    i0: np.ndarray
    params: ModelParams
    horizon: int
    v_bar: float
    epsilon: float
    terminal_mode: str
    penalty_weight: float
    ct_lam: np.ndarray
    gamma_vec: np.ndarray
    max_iterations: int
    step_tolerance: float
    cost_tolerance: float
    rng_seed: int
    n_restarts: int

    @property
    def n_a(self) -> int:
        return self.s0.shape[0]

    @property
    def n_decision_vars(self) -> int:
        return self.horizon * self.n_a

    @property
    def effective_weight(self) -> float:
        if self.terminal_mode == "hard":
            return max(self.penalty_weight, HARD_MODE_WEIGHT)
        return self.penalty_weight


@dataclass(frozen=True)
class OcpSolution:
    controls: np.ndarray
    predicted: SiTrajectory
    optimal_value: float
    feasible: bool
    terminal_slack: float
    iterations: int


def build_ocp(
    state: EpidemicState, cfg: MpcConfig, params: ModelParams
) -> OcpProblem:
    """Assemble the day's planning problem from the current state."""
    cfg.validate(params)
    if state.n_a != params.n_a:
        raise ContractViolation("state and params disagree on group count")
    cert = CertificateParams.from_model(params, cfg.epsilon)
    return OcpProblem(
        s0=state.s.copy(),
        i0=state.i.copy(),
        params=params,
        horizon=cfg.horizon,
        v_bar=cfg.v_bar,
        epsilon=cfg.epsilon,
        terminal_mode=cfg.terminal_mode,
        penalty_weight=cfg.penalty_weight,
        ct_lam=cert.ct_lam,
        gamma_vec=cert.gamma_vec,
        max_iterations=cfg.max_iterations,
        step_tolerance=cfg.step_tolerance,
        cost_tolerance=cfg.cost_tolerance,
        rng_seed=cfg.rng_seed,
        n_restarts=cfg.n_restarts,
    )


def predict(problem: OcpProblem, controls: np.ndarray) -> SiTrajectory:
    """Roll the reduced dynamics over the horizon (same step as the plant)."""
    n = problem.n_a
    big_n = problem.horizon
    s = np.empty((big_n + 1, n))
    i = np.empty((big_n + 1, n))
    s[0], i[0] = problem.s0, problem.i0
    for t in range(big_n):
        s[t + 1], i[t + 1], _ = si_step(s[t], i[t], controls[t], problem.params)
    return SiTrajectory(s=s, i=i)


def plan_cost(problem: OcpProblem, predicted: SiTrajectory) -> float:
    """Predicted deaths over the horizon plus the terminal cost."""
    gd = problem.params.gamma_d
    running = float((predicted.i[: problem.horizon] @ gd).sum())
    terminal = float(gd @ predicted.i[problem.horizon]) / problem.epsilon
    return running + terminal


def terminal_slack(problem: OcpProblem, predicted: SiTrajectory) -> float:
    """Total violation of the terminal-set constraint at the horizon end."""
    i_end = predicted.i[problem.horizon]
    if float(np.abs(i_end).sum()) <= XSTAR_ATOL:
        return 0.0
    overshoot = problem.ct_lam @ predicted.s[problem.horizon] - problem.gamma_vec
    return float(np.maximum(0.0, overshoot).sum())


def project_capacity(controls: np.ndarray, v_bar: float) -> np.ndarray:
    """Euclidean projection of each row onto {u >= 0, sum(u) <= v_bar}."""
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    clipped = np.maximum(controls, 0.0)
    over = clipped.sum(axis=1) > v_bar
    if not np.any(over):
        return clipped
    rows = controls[over]
    n = rows.shape[1]
    ordered = np.sort(rows, axis=1)[:, ::-1]
    excess = np.cumsum(ordered, axis=1) - v_bar
    idx = np.arange(1, n + 1)
    rho = np.count_nonzero(ordered - excess / idx > 0, axis=1)
    theta = excess[np.arange(rows.shape[0]), rho - 1] / rho
    out = clipped
    out[over] = np.maximum(rows - theta[:, None], 0.0)
    return out


def _objective(problem: OcpProblem, controls: np.ndarray) -> tuple[float, SiTrajectory]:
    predicted = predict(problem, controls)
    value = plan_cost(problem, predicted)
    value += problem.effective_weight * terminal_slack(problem, predicted)
    return value, predicted


def _objective_and_gradient(
    problem: OcpProblem, controls: np.ndarray
) -> tuple[float, np.ndarray]:
    """Single-shooting objective with the adjoint-propagated gradient.

    The clamp u_eff = min(u, max(0, S - new_infections)) is handled by
    active-set bookkeeping: where the clamp binds, the control has no local
    effect and its gradient entry is zero.
    """
    params = problem.params
    n, big_n = problem.n_a, problem.horizon
    lam, contact = params.lam, params.contact
    removal = params.gamma_r + params.gamma_d
    gd = params.gamma_d

    s = np.empty((big_n + 1, n))
    i = np.empty((big_n + 1, n))
    rate = np.empty((big_n, n))  # marginal infection rate lam * (C @ I)
    free_u = np.empty((big_n, n), dtype=bool)  # u_eff == u and room left
    s_pinned = np.empty((big_n, n), dtype=bool)  # clamp emptied the group
    s[0], i[0] = problem.s0, problem.i0
    for t in range(big_n):
        c = contact @ i[t]
        new_inf = lam * s[t] * c
        room = np.maximum(0.0, s[t] - new_inf)
        u_eff = np.minimum(controls[t], room)
        s[t + 1] = s[t] - new_inf - u_eff
        i[t + 1] = i[t] + new_inf - removal * i[t]
        rate[t] = lam * c
        free_u[t] = (controls[t] <= room) & (room > 0)
        s_pinned[t] = (controls[t] > room) & (room > 0)

    value = float((i[:big_n] @ gd).sum()) + float(gd @ i[big_n]) / problem.epsilon
    i_end_mass = float(np.abs(i[big_n]).sum())
    overshoot = problem.ct_lam @ s[big_n] - problem.gamma_vec
    slack_vec = np.maximum(0.0, overshoot)
    weight = problem.effective_weight
    p_s = np.zeros(n)
    if i_end_mass > XSTAR_ATOL and slack_vec.any():
        value += weight * float(slack_vec.sum())
        p_s = weight * (problem.ct_lam.T @ (overshoot > 0).astype(float))
    p_i = gd / problem.epsilon

    grad = np.empty((big_n, n))
    for t in range(big_n - 1, -1, -1):
        grad[t] = np.where(free_u[t], -p_s, 0.0)
        keep = ~s_pinned[t]
        p_s_next = np.where(keep, (1.0 - rate[t]) * p_s, 0.0) + rate[t] * p_i
        flow = lam * s[t] * (p_i - keep * p_s)
        p_i = gd + (1.0 - removal) * p_i + contact.T @ flow
        p_s = p_s_next
    return value, grad


def _descend(
    problem: OcpProblem, start: np.ndarray
) -> tuple[np.ndarray, float, int]:
    """Projected-gradient descent from one start; returns (U, value, iters)."""
    v_bar = problem.v_bar
    controls = project_capacity(start, v_bar)
    value, grad = _objective_and_gradient(problem, controls)
    if not np.isfinite(value):
        raise SolverFailure(f"non-finite objective {value} at the start point")
    scale = np.max(np.abs(grad))
    step_len = v_bar / scale if scale > 0 else 1.0
    iterations = 0
    stalls = 0
    for _ in range(problem.max_iterations):
        iterations += 1
        moved = False
        for _ in range(_MAX_BACKTRACKS):
            trial = project_capacity(controls - step_len * grad, v_bar)
            displacement = float(np.linalg.norm(trial - controls))
            if displacement == 0.0:
                break
            trial_value, _ = _objective(problem, trial)
            if not np.isfinite(trial_value):
                raise SolverFailure("non-finite objective during line search")
            if trial_value <= value - _ARMIJO_C / step_len * displacement**2:
                moved = True
                break
            step_len *= 0.5
        if not moved:
            break
        drop = value - trial_value
        controls, value = trial, trial_value
        value, grad = _objective_and_gradient(problem, controls)
        if displacement <= problem.step_tolerance * (1.0 + float(np.linalg.norm(controls))):
            break
        if drop <= problem.cost_tolerance * (1.0 + abs(value)):
            stalls += 1
            if stalls >= 3:
                break
        else:
            stalls = 0
        step_len = min(step_len * 2.0, 1e6 * v_bar)
    return controls, value, iterations


#: Enumerate every bang-bang day pattern as extra starts while
#: (n_a + 1) ** horizon stays at or below this; switching optima on tiny
#: instances are otherwise easy to miss.
_PATTERN_START_LIMIT = 64


def _start_points(
    problem: OcpProblem, warm_start: np.ndarray | None
) -> list[np.ndarray]:
    n, big_n, v_bar = problem.n_a, problem.horizon, problem.v_bar
    starts: list[np.ndarray] = []
    if warm_start is not None:
        warm = np.asarray(warm_start, dtype=float)
        if warm.shape != (big_n, n):
            raise ContractViolation(
                f"warm start: expected shape ({big_n}, {n}), got {warm.shape}"
            )
        starts.append(warm)
    starts.append(np.zeros((big_n, n)))
    starts.append(np.full((big_n, n), v_bar / n))
    for k in range(n):
        block = np.zeros((big_n, n))
        block[:, k] = v_bar
        starts.append(block)
    if (n + 1) ** big_n <= _PATTERN_START_LIMIT:
        day_choices = [np.zeros(n)] + [v_bar * row for row in np.eye(n)]
        for combo in itertools.product(range(n + 1), repeat=big_n):
            if all(c == combo[0] for c in combo):
                continue  # constant patterns are already in the start list
            starts.append(np.array([day_choices[c] for c in combo]))
    rng = np.random.default_rng(problem.rng_seed)
    for _ in range(problem.n_restarts):
        starts.append(rng.uniform(0.0, v_bar, size=(big_n, n)))
    return starts


def solve_ocp(
    problem: OcpProblem, warm_start: np.ndarray | None = None
) -> OcpSolution:
    """Best control plan over the multi-start set (deterministic tie-break).

    Starts are descended in a fixed order (warm start first, then structured
    and seeded random points); the lowest penalized objective wins and ties
    go to the earlier start.
    """
    best_controls = None
    best_value = np.inf
    total_iterations = 0
    for start in _start_points(problem, warm_start):
        controls, value, iters = _descend(problem, start)
        total_iterations += iters
        if value < best_value:
            best_controls, best_value = controls, value
    predicted = predict(problem, best_controls)
    slack = terminal_slack(problem, predicted)
    return OcpSolution(
        controls=best_controls,
        predicted=predicted,
        optimal_value=plan_cost(problem, predicted),
        feasible=slack == 0.0,
        terminal_slack=slack,
        iterations=total_iterations,
    )


def _policy_control(
    policy: str,
    state: EpidemicState,
    cfg: MpcConfig,
    params: ModelParams,
    warm: np.ndarray | None,
):
    """One day's control and diagnostics for the active (ungated) policy."""
    n = params.n_a
    if policy == "none":
        return strategies.no_vaccination(state), None, warm
    if policy == "national":
        return strategies.national_allocate(state, cfg.v_bar), None, warm
    if policy == "mpc":
        problem = build_ocp(state, cfg, params)
        solution = solve_ocp(problem, warm_start=warm)
        next_warm = np.vstack([solution.controls[1:], np.zeros((1, n))])
        record = DayRecord(
            day=state.day,
            v_n0=solution.optimal_value,
            feasible=solution.feasible,
            terminal_slack=solution.terminal_slack,
            iterations=solution.iterations,
        )
        return solution.controls[0], record, next_warm
    raise ValidationError(f"unknown policy {policy!r}")


def run_policy_loop(
    state0: EpidemicState,
    cfg: MpcConfig,
    params: ModelParams,
    policy: str = "mpc",
) -> ScenarioResult:
    """Simulate the closed loop for any policy with shared gate semantics.

    Every policy sees the same start-day gate and the same eradication
    latch: no vaccination before ``vaccination_start_day``, and once every
    group's infected count falls to the threshold on a vaccination day, all
    later controls are zero.  The predictive policy warm-starts each solve
    with the previous plan shifted by one day and padded with zeros.
    """
    if policy not in strategies.POLICIES:
        raise ValidationError(f"unknown policy {policy!r}")
    cfg.validate(params)
    state0.validate(params)
    if cfg.vaccination_start_day > state0.time_step + cfg.strategy_horizon:
        raise ValidationError(
            "vaccination_start_day lies beyond the simulated horizon"
        )
    n = params.n_a
    n_days = cfg.strategy_horizon
    i_e = cfg.eradication_vector(n)
    s = np.empty((n_days + 1, n))
    i = np.empty((n_days + 1, n))
    r = np.empty((n_days + 1, n))
    d = np.empty((n_days + 1, n))
    applied = np.empty((n_days, n))
    controls = np.zeros((n_days, n))
    records: list[DayRecord] = []
    state = state0
    s[0], i[0], r[0], d[0] = state.s, state.i, state.r, state.d
    warm = None
    latched = False
    latch_day = None
    for t in range(n_days):
        day = state.day
        u = np.zeros(n)
        record = DayRecord(day=day)
        if day >= cfg.vaccination_start_day and not latched:
            if bool(np.all(state.i <= i_e)):
                latched = True
                latch_day = day
            else:
                try:
                    u, solve_record, warm = _policy_control(
                        policy, state, cfg, params, warm
                    )
                except SolverFailure as exc:
                    raise SolverFailure(f"day {day}: {exc}") from exc
                if solve_record is not None:
                    record = solve_record
        state = step(state, u, params)
        controls[t] = u
        s[t + 1], i[t + 1], r[t + 1], d[t + 1] = state.s, state.i, state.r, state.d
        applied[t] = state.applied_u
        records.append(record)
    trajectory = Trajectory(
        s=s, i=i, r=r, d=d, applied_u=applied, start_time_step=state0.time_step
    )
    return ScenarioResult(
        policy=policy,
        trajectory=trajectory,
        controls=controls,
        params=params,
        v_bar=cfg.v_bar,
        vaccination_start_day=cfg.vaccination_start_day,
        eradication_threshold=i_e,
        day_records=records,
        latch_day=latch_day,
    )


def run_closed_loop(
    state0: EpidemicState, cfg: MpcConfig, params: ModelParams
) -> ScenarioResult:
    """Receding-horizon vaccination run (the predictive policy)."""
    return run_policy_loop(state0, cfg, params, policy="mpc")
