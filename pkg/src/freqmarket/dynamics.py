"""Continuous-time market/frequency flows and fixed-step integration.

Three flow modes are supported:

* ``market_only``: price-adjustment (tatonnement) dynamics alone.
  Generators ramp toward their best response to the price, the price
  integrates the active-power imbalance; frequency is not modeled.
* ``composite``: market dynamics coupled to the swing equation through an
  auxiliary multiplier ``gamma`` on the frequency Lyapunov term.  This is
  the saddle flow of the composite Lagrangian.
* ``reduced``: the composite flow with ``gamma`` pinned to 1, which
  restores the physical swing equation and folds the frequency feedback
  into the generator response as a ``-omega_dot / D`` price correction.

Integration is forward Euler at ``dt_physics`` with a staggered update
order inside each step: the regulation step is computed from the current
state, and the frequency/price states then integrate against the freshly
dispatched regulation.  This mirrors a sampled controller whose setpoint
takes effect immediately, makes the discrete price identity exact, and is
neutrally stable on the price-imbalance oscillation (a synchronous update
amplifies it at any step size).  Velocities are projected at the capacity
box and the state is re-projected after each step to remove Euler
overshoot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import model, scenario as scenario_mod
from .model import GeneratorParams, GridParams, SimConfig, SimState

#: residual threshold and dwell time for equilibrium reporting
EQUILIBRIUM_TOL = 1e-6
EQUILIBRIUM_DWELL_S = 1.0

#: boundary-detection tolerance for velocity projection, MW
BOUNDARY_TOL = 1e-12


class IntegrationDivergedError(RuntimeError):
    """State became non-finite; carries the physics step index."""

    def __init__(self, step: int, t: float):
        self.step = step
        self.t = t
        super().__init__(f"integration diverged at step {step} (t={t:.3f}s)")


@dataclass(frozen=True)
class TimeSeriesRecord:
    """One output row: time, frequency deviation, price, outputs, profits,
    and the disturbance in effect."""

    t: float
    omega: float
    lambda_rt: float
    outputs: np.ndarray
    profits: np.ndarray
    delta: float


@dataclass
class Trajectory:
    """Sampled simulation output (one row per ``dt_sample``).

    For flow modes a row holds the instantaneous state at the sample time.
    For the sampled controller a row holds the price announced at the
    sample time together with the dispatch it induces (held until the next
    sample), and the profit that settles that pairing.
    """

    t: np.ndarray
    omega: np.ndarray
    price: np.ndarray
    pi: np.ndarray
    delta: np.ndarray
    outputs: np.ndarray
    profits: np.ndarray
    gamma: np.ndarray
    mode: str
    lambda_da: float
    dt_sample: float
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def rows(self) -> Iterator[TimeSeriesRecord]:
        for k in range(len(self.t)):
            yield TimeSeriesRecord(
                t=float(self.t[k]), omega=float(self.omega[k]),
                lambda_rt=float(self.price[k]), outputs=self.outputs[k],
                profits=self.profits[k], delta=float(self.delta[k]))


# ---------------------------------------------------------------------------
# right-hand sides (synchronous, pure functions of the state)


def swing_rhs(state: SimState, grid: GridParams) -> float:
    """Frequency-deviation rate (Hz/s): ``(sum(r) - D*omega - delta) / M``."""
    return (float(state.r.sum()) - grid.damping * state.omega - state.delta) / grid.inertia


def project_velocity(r: np.ndarray, v: np.ndarray, lo: np.ndarray,
                     hi: np.ndarray) -> np.ndarray:
    """Zero any velocity component pointing out of the box at its boundary.

    Interior components pass through; components at a bound keep only
    inward motion.  Boundary detection uses an absolute tolerance of
    1e-12 MW.
    """
    out = np.array(v, dtype=float, copy=True)
    at_lo = r <= lo + BOUNDARY_TOL
    at_hi = r >= hi - BOUNDARY_TOL
    out[at_lo & (out < 0.0)] = 0.0
    out[at_hi & (out > 0.0)] = 0.0
    return out


def _r_box(fleet: Sequence[GeneratorParams]) -> tuple[np.ndarray, np.ndarray]:
    p_star = model.p_star_vector(fleet)
    return model.p_min_vector(fleet) - p_star, model.p_max_vector(fleet) - p_star


def market_flow_rhs(state: SimState, fleet: Sequence[GeneratorParams]
                    ) -> tuple[np.ndarray, float]:
    """Tatonnement flow: generators chase the price, the price integrates
    the imbalance."""
    mc = model.fleet_marginal(fleet, model.p_star_vector(fleet) + state.r)
    lo, hi = _r_box(fleet)
    rdot = project_velocity(state.r, state.lam - mc, lo, hi)
    lamdot = state.delta - float(state.r.sum())
    return rdot, lamdot


def composite_flow_rhs(state: SimState, fleet: Sequence[GeneratorParams],
                       grid: GridParams) -> tuple[np.ndarray, float, float, float]:
    """Saddle flow of the composite (market + frequency) Lagrangian."""
    M, D = grid.inertia, grid.damping
    residual = float(state.r.sum()) - D * state.omega - state.delta
    mc = model.fleet_marginal(fleet, model.p_star_vector(fleet) + state.r)
    lo, hi = _r_box(fleet)
    raw = state.lam - (state.gamma / (D * M)) * residual - mc
    rdot = project_velocity(state.r, raw, lo, hi)
    omdot = (state.gamma / M) * residual
    lamdot = state.delta - float(state.r.sum())
    gammadot = (1.0 / (2.0 * D * M)) * residual * residual
    return rdot, omdot, lamdot, gammadot


def reduced_flow_rhs(state: SimState, fleet: Sequence[GeneratorParams],
                     grid: GridParams) -> tuple[np.ndarray, float, float]:
    """Composite flow with the multiplier pinned to 1 (physical swing
    equation); the frequency feedback enters the generator response as a
    ``-omega_dot / D`` price correction."""
    omdot = swing_rhs(state, grid)
    mc = model.fleet_marginal(fleet, model.p_star_vector(fleet) + state.r)
    lo, hi = _r_box(fleet)
    rdot = project_velocity(state.r, (state.lam - omdot / grid.damping) - mc, lo, hi)
    lamdot = state.delta - float(state.r.sum())
    return rdot, omdot, lamdot


def lyapunov_fd(state: SimState, fleet: Sequence[GeneratorParams],
                grid: GridParams) -> float:
    """Frequency-dynamics Lyapunov value
    ``(D*omega - sum(r) + delta)^2 / (2*D*M)``; the swing equation is its
    negative gradient flow in ``omega``."""
    M, D = grid.inertia, grid.damping
    residual = D * state.omega - float(state.r.sum()) + state.delta
    return residual * residual / (2.0 * D * M)


def composite_lagrangian(state: SimState, fleet: Sequence[GeneratorParams],
                         grid: GridParams) -> float:
    """Market Lagrangian plus ``gamma`` times the frequency Lyapunov term."""
    outputs = model.p_star_vector(fleet) + state.r
    ed_part = model.fleet_cost(fleet, outputs) + state.lam * (
        state.delta - float(state.r.sum()))
    return ed_part + state.gamma * lyapunov_fd(state, fleet, grid)


# ---------------------------------------------------------------------------
# integration


def integrate(cfg: SimConfig, schedule: scenario_mod.DisturbanceSchedule,
              mode: Optional[str] = None) -> Trajectory:
    """Integrate one flow mode from the day-ahead initial condition
    (r=0, omega=0, lam=lambda_da, gamma=1, zero frequency integral).

    The disturbance is refreshed from the schedule at every physics step;
    rows are recorded every ``dt_sample``.  Raises
    :class:`IntegrationDivergedError` on non-finite state.
    """
    mode = mode or cfg.mode
    if mode not in model.FLOW_MODES:
        raise ValueError(f"integrate() handles flow modes {model.FLOW_MODES}, got {mode!r}")
    if cfg.lambda_da is None:
        raise ValueError("config has no day-ahead price; run resolve_day_ahead first")

    fleet = list(cfg.generators)
    grid = cfg.grid
    M, D = grid.inertia, grid.damping
    h = cfg.dt_physics
    n_steps = int(round(cfg.horizon / h))
    sample_every = int(round(cfg.dt_sample / h))

    C = model.quad_coefs(fleet)
    c = model.lin_coefs(fleet)
    p_star = model.p_star_vector(fleet)
    lo, hi = _r_box(fleet)

    r = np.zeros(len(fleet))
    omega = 0.0
    lam = float(cfg.lambda_da)
    gamma = 1.0
    omega_integral = 0.0

    outages = sorted(schedule.outages)
    next_outage = 0
    dstate = None

    rows_t, rows_om, rows_price, rows_pi, rows_delta = [], [], [], [], []
    rows_g, rows_profit, rows_gamma = [], [], []
    streak = 0
    equilibrium_time = None

    for k in range(n_steps + 1):
        t = k * h
        while next_outage < len(outages) and outages[next_outage][0] <= t + 1e-12:
            idx = outages[next_outage][1]
            lo[idx] = hi[idx] = -p_star[idx]
            r[idx] = -p_star[idx]
            next_outage += 1
        delta, dstate = scenario_mod.delta_at(schedule, t, h, dstate)

        if k % sample_every == 0:
            if not (np.isfinite(omega) and np.isfinite(lam) and np.all(np.isfinite(r))):
                raise IntegrationDivergedError(step=k, t=t)
            g = p_star + r
            rows_t.append(t)
            rows_om.append(omega)
            rows_price.append(lam)
            rows_pi.append(lam - cfg.lambda_da)
            rows_delta.append(delta)
            rows_g.append(g.copy())
            rows_profit.append(lam * g - (0.5 * C * g * g + c * g))
            rows_gamma.append(gamma)
        if k == n_steps:
            break

        g = p_star + r
        mc = C * g + c
        residual_pre = float(r.sum()) - D * omega - delta  # pre-dispatch imbalance
        if mode == model.MODE_MARKET_ONLY:
            raw = lam - mc
        elif mode == model.MODE_REDUCED:
            raw = (lam - (residual_pre / M) / D) - mc
        else:
            raw = lam - (gamma / (D * M)) * residual_pre - mc
        v = project_velocity(r, raw, lo, hi)
        r_new = np.clip(r + h * cfg.gain_r * v, lo, hi)

        omega_prev = omega
        if mode == model.MODE_REDUCED:
            omega = omega + h * (float(r_new.sum()) - D * omega - delta) / M
        elif mode == model.MODE_COMPOSITE:
            res_new = float(r_new.sum()) - D * omega - delta
            omega = omega + h * (gamma / M) * res_new
            gamma = gamma + h * cfg.gain_gamma * res_new * res_new / (2.0 * D * M)
        omega_integral += h * omega_prev
        lamdot = delta - float(r_new.sum())
        lam = lam + h * cfg.gain_lambda * lamdot
        r = r_new

        if not (np.isfinite(omega) and np.isfinite(lam)):
            raise IntegrationDivergedError(step=k, t=t)

        res = max(abs(omega - omega_prev) / h, abs(lamdot), float(np.abs(v).max()))
        streak = streak + 1 if res < EQUILIBRIUM_TOL else 0
        if equilibrium_time is None and streak * h >= EQUILIBRIUM_DWELL_S:
            equilibrium_time = t + h - streak * h

    return Trajectory(
        t=np.array(rows_t),
        omega=np.array(rows_om),
        price=np.array(rows_price),
        pi=np.array(rows_pi),
        delta=np.array(rows_delta),
        outputs=np.array(rows_g),
        profits=np.array(rows_profit),
        gamma=np.array(rows_gamma),
        mode=mode,
        lambda_da=float(cfg.lambda_da),
        dt_sample=cfg.dt_sample,
        meta={
            "rng": scenario_mod.RNG_ALGORITHM,
            "seed": cfg.seed,
            "equilibrium_time_s": equilibrium_time,
        },
    )
