"""Measurement-driven online pricing and projected generator best response.

At every sampling instant the controller turns the local frequency
measurement into a price adjustment with proportional, integral, and
derivative terms::

    pi = -M * omega - D * integral(omega) - omega_dot / D

and each generator takes one projected gradient step toward its best
response to the real-time price ``lambda_da + pi`` using only that shared
scalar, its own parameters, and its own regulation state.  The step size
``eta = 1 / quad_cost`` makes the update the exact myopic profit
maximizer over the capacity box, which guarantees a nonnegative profit
for the dispatched output at the announcing price whenever the output
floor is zero.

Discretization conventions (these make the discrete price identity exact
and make the closed loop with ``eta = dt`` coincide with the Euler
discretization of the reduced flow):

* the frequency integral uses the rectangle rule over past samples: the
  adjustment at sample k is computed *before* the current sample is
  accumulated;
* ``omega_dot`` is a backward difference across the sampling interval
  (zero at the first sample); an exact-derivative injection hook exists
  for equivalence testing;
* the setpoint computed at a sample is dispatched immediately and held
  until the next sample (zero-order hold).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import model, scenario as scenario_mod
from .dynamics import IntegrationDivergedError, Trajectory
from .model import GeneratorParams, GridParams, SimConfig


class NonMonotoneTimeError(ValueError):
    """Samples must arrive with strictly increasing timestamps."""


@dataclass(frozen=True)
class ControllerState:
    """Controller memory between samples.

    ``omega_integral`` holds the rectangle-rule integral of all samples
    seen so far; ``omega_prev``/``t_prev`` feed the backward-difference
    derivative estimate; ``pi_last`` is the last computed adjustment.
    """

    lambda_da: float
    omega_integral: float = 0.0
    omega_prev: float = 0.0
    t_prev: float = 0.0
    pi_last: float = 0.0


@dataclass(frozen=True)
class MeasuredSample:
    """One frequency measurement; ``omega_dot_override`` injects an exact
    derivative in place of the backward-difference estimate."""

    t: float
    omega: float
    omega_dot_override: Optional[float] = None


def price_adjustment(cs: ControllerState, sample: MeasuredSample,
                     grid: GridParams) -> tuple[float, ControllerState]:
    """Compute the price adjustment for one sample and advance the state.

    The adjustment uses the integral accumulated from *previous* samples;
    the current sample is folded into the integral afterwards, so the
    integral term is the left-rectangle integral of the measured frequency.
    """
    dt = sample.t - cs.t_prev
    if dt < 0.0 or (dt == 0.0 and sample.t != 0.0):
        raise NonMonotoneTimeError(
            f"sample at t={sample.t} does not advance past t={cs.t_prev}")

    if sample.omega_dot_override is not None:
        omega_dot = sample.omega_dot_override
    elif dt > 0.0:
        omega_dot = (sample.omega - cs.omega_prev) / dt
    else:
        omega_dot = 0.0  # first sample

    pi = (-grid.inertia * sample.omega
          - grid.damping * cs.omega_integral
          - omega_dot / grid.damping)
    new_state = ControllerState(
        lambda_da=cs.lambda_da,
        omega_integral=cs.omega_integral + sample.omega * dt,
        omega_prev=sample.omega,
        t_prev=sample.t,
        pi_last=pi,
    )
    return pi, new_state


def rt_price(cs: ControllerState, pi: float) -> float:
    """Real-time price: day-ahead price plus the frequency-derived adjustment."""
    return cs.lambda_da + pi


def regulation_step(r_i: float, lam_rt: float, gen: GeneratorParams) -> float:
    """One generator's projected best-response step (fully local).

    Reads only the shared price, the generator's own parameters, and its
    own regulation state.
    """
    p_star = gen.p_star if gen.p_star is not None else 0.0
    grad = lam_rt - model.marginal_cost(gen, p_star + r_i)
    r_hat = r_i + gen.step_size() * grad
    return model.project_box(r_hat, gen.p_min - p_star, gen.p_max - p_star)


def regulation_update(r: np.ndarray, lam_rt: float,
                      fleet: Sequence[GeneratorParams]) -> np.ndarray:
    """Apply :func:`regulation_step` generator by generator."""
    return np.array([regulation_step(float(r_i), lam_rt, gen)
                     for r_i, gen in zip(r, fleet)])


def default_step_sizes(fleet: Sequence[GeneratorParams]) -> np.ndarray:
    """Cost-recovery step sizes: reciprocal of each quadratic coefficient."""
    for i, g in enumerate(fleet):
        if not g.quad_cost > 0:
            raise ValueError(f"generator {i}: quad_cost must be > 0")
    return np.array([1.0 / g.quad_cost for g in fleet])


def closed_loop(cfg: SimConfig, schedule: scenario_mod.DisturbanceSchedule,
                exact_omega_dot: bool = False) -> Trajectory:
    """Run the sampled controller against the swing-equation plant.

    The physics integrates at ``dt_physics`` with the dispatched output
    held between controller samples (every ``dt_sample``).  Each record
    holds the price announced at the sample instant together with the
    output it dispatches, and the profit settling that pairing.  With
    ``exact_omega_dot`` the derivative term is fed the exact pre-dispatch
    swing right-hand side instead of the backward difference.
    """
    if cfg.lambda_da is None:
        raise ValueError("config has no day-ahead price; run resolve_day_ahead first")
    fleet = list(cfg.generators)
    plant = cfg.grid
    ctrl_grid = cfg.controller_grid()
    M, D = plant.inertia, plant.damping
    h = cfg.dt_physics
    n_sub = int(round(cfg.dt_sample / h))
    n_samples = int(round(cfg.horizon / cfg.dt_sample))

    p_star = model.p_star_vector(fleet)
    lo = model.p_min_vector(fleet) - p_star
    hi = model.p_max_vector(fleet) - p_star

    r = np.zeros(len(fleet))
    omega = 0.0
    cs = ControllerState(lambda_da=float(cfg.lambda_da))
    outages = sorted(schedule.outages)
    next_outage = 0
    dstate = None

    C = model.quad_coefs(fleet)
    c = model.lin_coefs(fleet)

    rows_t, rows_om, rows_price, rows_pi, rows_delta = [], [], [], [], []
    rows_g, rows_profit = [], []

    def apply_events(t: float) -> None:
        nonlocal next_outage, r
        while next_outage < len(outages) and outages[next_outage][0] <= t + 1e-12:
            idx = outages[next_outage][1]
            lo[idx] = hi[idx] = -p_star[idx]
            r[idx] = -p_star[idx]  # tripped unit drops out immediately
            next_outage += 1

    for k in range(n_samples + 1):
        t = k * cfg.dt_sample
        apply_events(t)
        delta, dstate = scenario_mod.delta_at(schedule, t, h, dstate)

        if not np.isfinite(omega):
            raise IntegrationDivergedError(step=k * n_sub, t=t)

        override = None
        if exact_omega_dot:
            # exact swing RHS seen by a measurement just before dispatch
            override = (float(r.sum()) - D * omega - delta) / M
        pi, cs = price_adjustment(
            cs, MeasuredSample(t=t, omega=omega, omega_dot_override=override),
            ctrl_grid)
        lam_rt = rt_price(cs, pi)
        if cfg.price_floor is not None and lam_rt < cfg.price_floor:
            lam_rt = cfg.price_floor

        r = regulation_update(r, lam_rt, fleet)
        g = p_star + r

        rows_t.append(t)
        rows_om.append(omega)
        rows_price.append(lam_rt)
        rows_pi.append(pi)
        rows_delta.append(delta)
        rows_g.append(g.copy())
        rows_profit.append(lam_rt * g - (0.5 * C * g * g + c * g))

        if k == n_samples:
            break
        for j in range(n_sub):
            ts = t + j * h
            apply_events(ts)
            delta_s, dstate = scenario_mod.delta_at(schedule, ts, h, dstate)
            # regulation holds between samples; day-ahead setpoints cancel
            # the nominal demand, so the imbalance is sum(r) - D*omega - delta
            omega = omega + h * (float(r.sum()) - D * omega - delta_s) / M

    return Trajectory(
        t=np.array(rows_t),
        omega=np.array(rows_om),
        price=np.array(rows_price),
        pi=np.array(rows_pi),
        delta=np.array(rows_delta),
        outputs=np.array(rows_g),
        profits=np.array(rows_profit),
        gamma=np.ones(len(rows_t)),
        mode=model.MODE_CONTROLLER,
        lambda_da=float(cfg.lambda_da),
        dt_sample=cfg.dt_sample,
        meta={
            "rng": scenario_mod.RNG_ALGORITHM,
            "seed": cfg.seed,
            "exact_omega_dot": exact_omega_dot,
        },
    )
