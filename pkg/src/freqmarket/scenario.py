"""Disturbance signals: demand steps, generator outages, and a seeded
Wiener demand process.

The disturbance is sampled on the physics grid and is piecewise constant
between physics steps, right-continuous at step events.  Wiener increments
are drawn per physics step as ``sigma * sqrt(dt) * N(0, 1)`` from a
counter-based Philox generator, so paths are bit-reproducible for a given
seed on any platform.  The diffusion scale ``sigma`` is in MW per sqrt(s):
increments over a window of length ``T`` seconds have standard deviation
``sigma * sqrt(T)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import dispatch, model
from .model import GeneratorParams, GridParams, SimConfig

#: identifier of the pseudo-random generator recorded in run metadata
RNG_ALGORITHM = "numpy.random.Philox (4x64, counter-based)"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class WienerSpec:
    """Zero-drift Wiener demand component: diffusion ``sigma`` (MW/sqrt(s))."""

    sigma: float
    seed: int


@dataclass(frozen=True)
class DisturbanceSchedule:
    """Ordered timeline of demand steps, outages, and an optional Wiener term.

    ``steps`` holds ``(time_s, amount_mw)`` demand changes; ``outages``
    holds ``(time_s, generator_index)`` trip events (at most one per
    generator).
    """

    steps: tuple[tuple[float, float], ...] = ()
    outages: tuple[tuple[float, int], ...] = ()
    wiener: Optional[WienerSpec] = None


@dataclass
class DisturbanceState:
    """Position of a disturbance stream on the physics grid.

    Wiener accumulation is strictly sequential (one draw per physics step)
    so that every consumer of the same schedule sees identical bits.
    """

    step_index: int
    wiener_accum: float
    rng: Optional[np.random.Generator]


def _fresh_state(schedule: DisturbanceSchedule) -> DisturbanceState:
    rng = None
    if schedule.wiener is not None:
        rng = np.random.Generator(np.random.Philox(key=schedule.wiener.seed))
    return DisturbanceState(step_index=0, wiener_accum=0.0, rng=rng)


def delta_at(schedule: DisturbanceSchedule, t: float, dt_physics: float,
             state: Optional[DisturbanceState] = None
             ) -> tuple[float, DisturbanceState]:
    """Disturbance at time ``t`` plus the advanced stream state.

    Pass the returned state back in when querying forward in time; a query
    behind the current position restarts the stream from the seed so the
    same path is reproduced.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    target = int(round(t / dt_physics))
    if state is None or target < state.step_index:
        state = _fresh_state(schedule)
    if schedule.wiener is not None and target > state.step_index:
        n = target - state.step_index
        scale = schedule.wiener.sigma * np.sqrt(dt_physics)
        draws = state.rng.standard_normal(n)
        acc = state.wiener_accum
        for x in draws:  # sequential accumulation, summation order is part of the contract
            acc += scale * float(x)
        state = DisturbanceState(step_index=target, wiener_accum=acc, rng=state.rng)
    elif target > state.step_index:
        state = DisturbanceState(step_index=target, wiener_accum=0.0, rng=None)

    grid_t = target * dt_physics
    delta = sum(amount for et, amount in schedule.steps if et <= grid_t + 1e-12)
    return float(delta + state.wiener_accum), state


def apply_outage(fleet: Sequence[GeneratorParams], event: tuple[float, int]
                 ) -> list[GeneratorParams]:
    """Trip one generator: its capacity box collapses to zero output.

    The day-ahead setpoint is kept, so the regulation state is forced to
    ``-p_star`` and the lost output shows up as a power deficit through the
    aggregate regulation term of the frequency dynamics.  No synthetic
    demand adjustment is added, and no other generator's bounds change.
    """
    _, idx = event
    if not (0 <= idx < len(fleet)):
        raise ScenarioError(f"outage index {idx} out of range (fleet size {len(fleet)})")
    gen = fleet[idx]
    if gen.p_max == 0.0 and gen.p_min == 0.0:
        raise ScenarioError(f"generator {idx} is already out")
    out = list(fleet)
    out[idx] = replace(gen, p_min=0.0, p_max=0.0)
    return out


def fleet_at(fleet: Sequence[GeneratorParams], schedule: DisturbanceSchedule,
             t: float) -> list[GeneratorParams]:
    """Fleet with every outage at or before ``t`` applied."""
    active = list(fleet)
    for event in sorted(schedule.outages):
        if event[0] <= t + 1e-12:
            active = apply_outage(active, event)
    return active


# ---------------------------------------------------------------------------
# canned experiments
#
# Five fully dispatchable 50 MW generators serve a 200 MW nominal demand.
# The quadratic coefficients span 0.01..0.015 $/MWh^2 on an evenly spaced
# grid (the exact spacing is an assumption; only the range is pinned down).

PAPER_QUAD_COSTS = (0.01, 0.01125, 0.0125, 0.01375, 0.015)
PAPER_LIN_COST = 27.4
PAPER_CAPACITY = 50.0
PAPER_DEMAND = 200.0
PAPER_INERTIA = 12.0
PAPER_DAMPING = 35.0


def paper_fleet() -> list[GeneratorParams]:
    return [
        GeneratorParams(quad_cost=q, lin_cost=PAPER_LIN_COST,
                        p_min=0.0, p_max=PAPER_CAPACITY)
        for q in PAPER_QUAD_COSTS
    ]


def paper_grid() -> GridParams:
    return GridParams(inertia=PAPER_INERTIA, damping=PAPER_DAMPING,
                      f_nominal=60.0, demand=PAPER_DEMAND)


def _paper_config(mode: str, seed: int, baseline_interval: Optional[float]) -> SimConfig:
    cfg = SimConfig(
        generators=tuple(paper_fleet()),
        grid=paper_grid(),
        dt_physics=0.05,
        dt_sample=0.25,
        horizon=600.0,
        mode=mode,
        seed=seed,
        baseline_interval=baseline_interval,
    )
    return dispatch.resolve_day_ahead(cfg)


def paper_scenario_a() -> tuple[SimConfig, DisturbanceSchedule]:
    """Constant-disturbance experiment: a 30 MW demand drop at t=30 s, then
    a generator outage at t=300 s (the highest-quadratic-cost unit)."""
    cfg = _paper_config(mode=model.MODE_CONTROLLER, seed=0, baseline_interval=None)
    schedule = DisturbanceSchedule(
        steps=((30.0, -30.0),),
        outages=((300.0, len(PAPER_QUAD_COSTS) - 1),),
    )
    model.validate_config(cfg, schedule)
    return cfg, schedule


def paper_scenario_b(seed: int) -> tuple[SimConfig, DisturbanceSchedule]:
    """Stochastic-demand experiment: zero-drift Wiener demand with a 1 MW
    diffusion scale, offline repricing every 5 minutes."""
    cfg = _paper_config(mode=model.MODE_CONTROLLER, seed=seed, baseline_interval=300.0)
    schedule = DisturbanceSchedule(wiener=WienerSpec(sigma=1.0, seed=seed))
    model.validate_config(cfg, schedule)
    return cfg, schedule


# ---------------------------------------------------------------------------
# archival export


def schedule_to_json(schedule: DisturbanceSchedule) -> dict:
    """Standalone JSON document: event list plus RNG metadata."""
    doc: dict = {
        "steps": [{"t_s": t, "amount_mw": a} for t, a in schedule.steps],
        "outages": [{"t_s": t, "generator": i} for t, i in schedule.outages],
    }
    if schedule.wiener is not None:
        doc["wiener"] = {
            "sigma_mw_per_sqrt_s": schedule.wiener.sigma,
            "seed": schedule.wiener.seed,
            "rng": RNG_ALGORITHM,
        }
    return doc


def schedule_from_json(doc: dict) -> DisturbanceSchedule:
    wiener = None
    if "wiener" in doc:
        wiener = WienerSpec(sigma=float(doc["wiener"]["sigma_mw_per_sqrt_s"]),
                            seed=int(doc["wiener"]["seed"]))
    return DisturbanceSchedule(
        steps=tuple((float(e["t_s"]), float(e["amount_mw"])) for e in doc.get("steps", [])),
        outages=tuple((float(e["t_s"]), int(e["generator"])) for e in doc.get("outages", [])),
        wiener=wiener,
    )
