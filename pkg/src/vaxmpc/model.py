"""Discrete-time age-structured SIRD dynamics with a vaccination input.

The population of each age group k is split into susceptible (S), infected
(I), recovered (R) and deceased (D) compartments.  One call to :func:`step`
advances the state by one day:

    S_k' = S_k - lam_k * S_k * sum_j C_kj I_j - u_k
    I_k' = I_k + lam_k * S_k * sum_j C_kj I_j - (gr_k + gd_k) I_k
    R_k' = R_k + gr_k I_k + u_k
    D_k' = D_k + gd_k I_k

with the single exception that the vaccination actually applied is clamped to
the susceptibles left after that day's infections, so S never goes negative:

    u_eff_k = min(u_k, max(0, S_k - new_infections_k))

The clamped value is recorded on the returned state (``applied_u``).

The update is the one-day forward-Euler step of the continuous-time balance
equations (dS = -infections - u, dI = infections - (gr + gd) I,
dR = gr I + u, dD = gd I); the continuous form is documented here for
reference but never integrated, and the step size is fixed at one day.
All functions are pure; states and parameters are immutable value objects.
"""

from __future__ import annotations

import warnings
from dataclasses import InitVar, dataclass

import numpy as np

from .errors import ContractViolation, ValidationError

#: Relative tolerance for the per-group population-conservation invariant.
CONSERVATION_RTOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _check_vector(x: np.ndarray, n: int, name: str) -> None:
    if x.shape != (n,):
        raise ContractViolation(f"{name}: expected shape ({n},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name}: non-finite entries")


@dataclass(frozen=True)
class ModelParams:
    """Per-group epidemic rates, populations and the normalized contact matrix.

    Attributes
    ----------
    lam : (n_a,) array
        Per-contact transmission probabilities, in [0, 1].
    gamma_r : (n_a,) array
        Daily recovery rates, in [0, 1].
    gamma_d : (n_a,) array
        Daily death rates, in (0, 1].  Positivity is required by the
        stage-cost lower bound used in the stability certificates.
    population : (n_a,) array
        Group populations (persons).
    contact : (n_a, n_a) array
        Normalized contact rates; entry (k, j) is the per-person per-day rate
        at which one member of group k meets members of group j.
    """

    lam: np.ndarray
    gamma_r: np.ndarray
    gamma_d: np.ndarray
    population: np.ndarray
    contact: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool):
        for name in ("lam", "gamma_r", "gamma_d", "population"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        object.__setattr__(self, "contact", _freeze(self.contact))
        if validate:
            self._validate()

    @property
    def n_a(self) -> int:
        return self.lam.shape[0]

    def _validate(self) -> None:
        n = self.n_a
        for name in ("lam", "gamma_r", "gamma_d", "population"):
            vec = getattr(self, name)
            _check_vector(vec, n, name)
            if np.any(vec < 0):
                raise ValidationError(f"{name}: negative entries")
        if self.contact.shape != (n, n):
            raise ContractViolation(
                f"contact: expected shape ({n}, {n}), got {self.contact.shape}"
            )
        if not np.all(np.isfinite(self.contact)) or np.any(self.contact < 0):
            raise ValidationError("contact: entries must be finite and nonnegative")
        if np.any(self.lam > 1):
            raise ValidationError("lam: transmission probabilities must be <= 1")
        if np.any(self.gamma_r + self.gamma_d > 1):
            raise ValidationError(
                "gamma_r + gamma_d must be <= 1 per group (one Euler step cannot "
                "remove more infected than exist)"
            )
        if np.any(self.gamma_d <= 0):
            raise ValidationError("gamma_d: death rates must be strictly positive")
        # Worst-case (I = P) infection pressure; beyond 1 the Euler step can
        # drive S negative.  Warn rather than reject: the dynamics stay
        # conservative either way.
        pressure = self.lam * (self.contact @ self.population)
        if np.any(pressure > 1):
            worst = int(np.argmax(pressure))
            warnings.warn(
                f"infection pressure lam_k * sum_j C_kj P_j exceeds 1 for group "
                f"{worst} ({pressure[worst]:.4g}); susceptibles may go negative",
                stacklevel=2,
            )


@dataclass(frozen=True)
class EpidemicState:
    """Compartment counts for every age group at one time step.

    ``time_step`` counts days since the outbreak began (the initial state is
    step 0, i.e. day 1 in the one-based day convention used for reporting).
    ``applied_u`` holds the vaccination actually applied by the step that
    produced this state, after clamping; it is None for initial states.
    """

    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    d: np.ndarray
    time_step: int = 0
    applied_u: np.ndarray | None = None

    def __post_init__(self):
        for name in ("s", "i", "r", "d"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        if self.applied_u is not None:
            object.__setattr__(self, "applied_u", _freeze(self.applied_u))
        n = self.s.shape[0]
        for name in ("i", "r", "d"):
            if getattr(self, name).shape != (n,):
                raise ContractViolation("state vectors must share one length")
        if self.time_step < 0:
            raise ValidationError("time_step must be nonnegative")

    @property
    def n_a(self) -> int:
        return self.s.shape[0]

    @property
    def day(self) -> int:
        """One-based day number (initial state is day 1)."""
        return self.time_step + 1

    def total_by_group(self) -> np.ndarray:
        return self.s + self.i + self.r + self.d

    def validate(self, params: ModelParams) -> None:
        """Check nonnegativity and per-group population conservation."""
        n = params.n_a
        for name in ("s", "i", "r", "d"):
            vec = getattr(self, name)
            _check_vector(vec, n, name)
            if np.any(vec < 0):
                raise ValidationError(f"{name}: negative compartment")
        total = self.total_by_group()
        if not np.allclose(total, params.population, rtol=CONSERVATION_RTOL, atol=0.0):
            raise ValidationError(
                "compartments do not sum to the group populations"
            )


def validate_control(u: np.ndarray, n_a: int, v_bar: float | None = None) -> np.ndarray:
    """Validate a daily vaccination vector; returns it as a float array.

    Nonnegativity and dimension are always required; the capacity bound
    ``sum(u) <= v_bar`` is checked only when ``v_bar`` is given (it lives in
    the scenario configuration, not in the control itself).
    """
    u = np.asarray(u, dtype=float)
    _check_vector(u, n_a, "u")
    if np.any(u < 0):
        raise ValidationError("u: vaccination counts must be nonnegative")
    if v_bar is not None and u.sum() > v_bar * (1 + 1e-12):
        raise ValidationError(f"u: total {u.sum()} exceeds daily capacity {v_bar}")
    return u


def si_step(
    s: np.ndarray, i: np.ndarray, u: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance the (S, I) block one day; returns (s_next, i_next, u_applied).

    This is the single implementation of the reduced dynamics shared by the
    full model step and by the controller's prediction rollout, so predicted
    and realized trajectories agree bitwise.
    """
    new_inf = params.lam * s * (params.contact @ i)
    u_eff = np.minimum(u, np.maximum(0.0, s - new_inf))
    s_next = s - new_inf - u_eff
    i_next = i + new_inf - (params.gamma_r + params.gamma_d) * i
    return s_next, i_next, u_eff


def step(
    state: EpidemicState,
    u: np.ndarray,
    params: ModelParams,
    *,
    validate: bool = True,
) -> EpidemicState:
    """Advance the full state one day under vaccination ``u``.

    The infection, recovery and death flows follow the discrete dynamics
    literally; only the vaccination is clamped to the susceptibles remaining
    after infection, and the clamped value is exposed on the returned state's
    ``applied_u``.
    """
    if state.n_a != params.n_a:
        raise ContractViolation(
            f"state has {state.n_a} groups, params has {params.n_a}"
        )
    u = np.asarray(u, dtype=float)
    if validate:
        for name in ("s", "i", "r", "d"):
            vec = getattr(state, name)
            _check_vector(vec, params.n_a, name)
            if np.any(vec < 0):
                raise ValidationError(f"{name}: negative compartment")
        validate_control(u, params.n_a)
    s_next, i_next, u_eff = si_step(state.s, state.i, u, params)
    r_next = state.r + params.gamma_r * state.i + u_eff
    d_next = state.d + params.gamma_d * state.i
    return EpidemicState(
        s=s_next,
        i=i_next,
        r=r_next,
        d=d_next,
        time_step=state.time_step + 1,
        applied_u=u_eff,
    )


def initial_state(params: ModelParams, i0: np.ndarray) -> EpidemicState:
    """Outbreak-start state: S = P - i0, I = i0, R = D = 0."""
    i0 = np.asarray(i0, dtype=float)
    _check_vector(i0, params.n_a, "i0")
    if np.any(i0 < 0) or np.any(i0 > params.population):
        raise ValidationError("i0 must satisfy 0 <= i0_k <= P_k")
    zeros = np.zeros(params.n_a)
    return EpidemicState(s=params.population - i0, i=i0, r=zeros, d=zeros, time_step=0)


def new_infections(state: EpidemicState, params: ModelParams) -> np.ndarray:
    """Daily new infections per group, lam_k * S_k * sum_j C_kj I_j."""
    if state.n_a != params.n_a:
        raise ContractViolation(
            f"state has {state.n_a} groups, params has {params.n_a}"
        )
    return params.lam * state.s * (params.contact @ state.i)


@dataclass(frozen=True)
class Trajectory:
    """A rollout: compartment arrays of shape (T+1, n_a), controls (T, n_a).

    Row t holds the state at time step ``start_time_step + t``; ``applied_u``
    row t is the clamped vaccination applied while moving to row t+1.
    """

    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    d: np.ndarray
    applied_u: np.ndarray
    start_time_step: int = 0

    def __len__(self) -> int:
        return self.s.shape[0]

    @property
    def n_steps(self) -> int:
        return self.applied_u.shape[0]

    def state(self, t: int) -> EpidemicState:
        """Materialize the state at trajectory index t."""
        return EpidemicState(
            s=self.s[t],
            i=self.i[t],
            r=self.r[t],
            d=self.d[t],
            time_step=self.start_time_step + t,
            applied_u=self.applied_u[t - 1] if t > 0 else None,
        )

    def total_deaths(self, t: int) -> float:
        return float(self.d[t].sum())


def rollout(
    state0: EpidemicState,
    controls: np.ndarray,
    params: ModelParams,
) -> Trajectory:
    """Iterate :func:`step` over a (T, n_a) array of daily controls."""
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    n_steps = controls.shape[0]
    n = params.n_a
    if controls.shape[1] != n:
        raise ContractViolation(
            f"controls: expected shape (T, {n}), got {controls.shape}"
        )
    s = np.empty((n_steps + 1, n))
    i = np.empty((n_steps + 1, n))
    r = np.empty((n_steps + 1, n))
    d = np.empty((n_steps + 1, n))
    applied = np.empty((n_steps, n))
    state = state0
    s[0], i[0], r[0], d[0] = state.s, state.i, state.r, state.d
    for t in range(n_steps):
        try:
            state = step(state, controls[t], params)
        except (ValidationError, ContractViolation) as exc:
            raise type(exc)(f"rollout step {t}: {exc}") from exc
        s[t + 1], i[t + 1], r[t + 1], d[t + 1] = state.s, state.i, state.r, state.d
        applied[t] = state.applied_u
    return Trajectory(
        s=s, i=i, r=r, d=d, applied_u=applied, start_time_step=state0.time_step
    )
