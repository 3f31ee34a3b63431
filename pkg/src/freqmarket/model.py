"""Domain types, unit conventions, and elementary cost evaluations.

Unit conventions used throughout the package:

* power and regulation in MW, energy in MWh
* frequency deviation ``omega`` in Hz (displayed frequency is
  ``f_nominal + omega``)
* inertia in MW.s/Hz and damping in MW/Hz, so the swing equation
  ``d(omega)/dt = (sum(r) - D*omega - delta) / M`` is dimensionally
  consistent
* prices in $/MWh, generation cost rates in $/h

All per-generator quantities are dense vectors indexed by generator order
in the configuration; the order is significant and preserved in every
output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MODE_MARKET_ONLY = "market_only"
MODE_COMPOSITE = "composite"
MODE_REDUCED = "reduced"
MODE_CONTROLLER = "controller"

FLOW_MODES = (MODE_MARKET_ONLY, MODE_COMPOSITE, MODE_REDUCED)
ALL_MODES = FLOW_MODES + (MODE_CONTROLLER,)


class ConfigValidationError(ValueError):
    """Raised by :func:`validate_config`; carries every violated invariant."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class GeneratorParams:
    """Cost curve, capacity box, and controller step size of one generator.

    Attributes:
        quad_cost: quadratic cost coefficient, $/MWh^2 (must be > 0; the
            cost curve is strictly convex).
        lin_cost: linear cost coefficient, $/MWh.
        p_min: minimum output, MW.
        p_max: maximum output (capacity), MW.
        p_star: day-ahead setpoint, MW. ``None`` until day-ahead clearing
            assigns it.
        eta: regulation step size, MW^2.h/$. ``None`` selects the
            cost-recovery default ``1 / quad_cost``.
    """

    quad_cost: float
    lin_cost: float
    p_min: float
    p_max: float
    p_star: Optional[float] = None
    eta: Optional[float] = None

    def step_size(self) -> float:
        """Effective regulation step size (defaults to 1/quad_cost)."""
        return self.eta if self.eta is not None else 1.0 / self.quad_cost


@dataclass(frozen=True)
class GridParams:
    """Single-area grid parameters.

    Attributes:
        inertia: system inertia M, MW.s/Hz.
        damping: load damping D, MW/Hz.
        f_nominal: nominal frequency, Hz (display offset only).
        demand: nominal demand d, MW.
    """

    inertia: float
    damping: float
    f_nominal: float = 60.0
    demand: float = 0.0


@dataclass
class SimState:
    """Full dynamical state at one instant.

    ``r`` is the regulation vector (one entry per generator, MW, relative
    to the day-ahead setpoint); it must lie in the box
    ``[p_min - p_star, p_max - p_star]`` component-wise.
    """

    t: float
    r: np.ndarray
    omega: float
    lam: float
    gamma: float
    omega_integral: float
    delta: float


@dataclass(frozen=True)
class SimConfig:
    """One simulation run: fleet, grid, timing, and mode.

    ``dt_sample`` must be an integer multiple of ``dt_physics``.
    ``lambda_da`` is normally assigned by day-ahead clearing together with
    the setpoints ``p_star``; an explicit value overrides the clearing.
    The flow gains rescale the regulation, price, and auxiliary-multiplier
    flows and default to 1 (unscaled gradient flows).
    """

    generators: tuple[GeneratorParams, ...]
    grid: GridParams
    dt_physics: float = 0.05
    dt_sample: float = 0.25
    horizon: float = 600.0
    mode: str = MODE_CONTROLLER
    lambda_da: Optional[float] = None
    seed: int = 0
    gain_r: float = 1.0
    gain_lambda: float = 1.0
    gain_gamma: float = 1.0
    price_floor: Optional[float] = None
    ctrl_inertia: Optional[float] = None
    ctrl_damping: Optional[float] = None
    baseline_interval: Optional[float] = None

    def controller_grid(self) -> GridParams:
        """Grid parameters as seen by the price controller.

        The controller's inertia/damping may deliberately differ from the
        plant's for mismatch experiments; they default to the plant values.
        """
        return GridParams(
            inertia=self.ctrl_inertia if self.ctrl_inertia is not None else self.grid.inertia,
            damping=self.ctrl_damping if self.ctrl_damping is not None else self.grid.damping,
            f_nominal=self.grid.f_nominal,
            demand=self.grid.demand,
        )


# ---------------------------------------------------------------------------
# elementary evaluations


def generator_cost(gen: GeneratorParams, output: float) -> float:
    """Generation cost rate ($/h) at the given total output (MW)."""
    return 0.5 * gen.quad_cost * output * output + gen.lin_cost * output


def marginal_cost(gen: GeneratorParams, output: float) -> float:
    """Marginal cost ($/MWh) at the given total output (MW)."""
    return gen.quad_cost * output + gen.lin_cost


def project_box(value: float, lo: float, hi: float) -> float:
    """Clamp ``value`` to the closed interval [lo, hi]."""
    if lo > hi:
        raise ValueError(f"invalid bounds: lo={lo} > hi={hi}")
    return min(max(value, lo), hi)


# ---------------------------------------------------------------------------
# fleet vector helpers


def quad_coefs(fleet: Sequence[GeneratorParams]) -> np.ndarray:
    return np.array([g.quad_cost for g in fleet], dtype=float)


def lin_coefs(fleet: Sequence[GeneratorParams]) -> np.ndarray:
    return np.array([g.lin_cost for g in fleet], dtype=float)


def p_min_vector(fleet: Sequence[GeneratorParams]) -> np.ndarray:
    return np.array([g.p_min for g in fleet], dtype=float)


def p_max_vector(fleet: Sequence[GeneratorParams]) -> np.ndarray:
    return np.array([g.p_max for g in fleet], dtype=float)


def p_star_vector(fleet: Sequence[GeneratorParams]) -> np.ndarray:
    return np.array(
        [g.p_star if g.p_star is not None else 0.0 for g in fleet], dtype=float
    )


def step_sizes(fleet: Sequence[GeneratorParams]) -> np.ndarray:
    return np.array([g.step_size() for g in fleet], dtype=float)


def fleet_cost(fleet: Sequence[GeneratorParams], outputs: np.ndarray) -> float:
    """Total generation cost rate ($/h) for the given output vector (MW)."""
    C = quad_coefs(fleet)
    c = lin_coefs(fleet)
    return float(np.sum(0.5 * C * outputs * outputs + c * outputs))


def fleet_marginal(fleet: Sequence[GeneratorParams], outputs: np.ndarray) -> np.ndarray:
    """Marginal-cost vector ($/MWh) at the given output vector (MW)."""
    return quad_coefs(fleet) * outputs + lin_coefs(fleet)


# ---------------------------------------------------------------------------
# validation


def config_errors(cfg: SimConfig, schedule=None) -> list[str]:
    """Collect every violated invariant (never stops at the first)."""
    errors: list[str] = []
    if not cfg.generators:
        errors.append("generators: at least one generator is required")
    for i, g in enumerate(cfg.generators):
        tag = f"generator[{i}]"
        if not g.quad_cost > 0:
            errors.append(f"{tag}.quad_cost must be > 0 (got {g.quad_cost})")
        if g.p_min < 0:
            errors.append(f"{tag}.p_min must be >= 0 (got {g.p_min})")
        if g.p_min > g.p_max:
            errors.append(f"{tag}: p_min={g.p_min} exceeds p_max={g.p_max}")
        if g.p_star is not None and not (g.p_min <= g.p_star <= g.p_max):
            errors.append(
                f"{tag}.p_star={g.p_star} outside [p_min={g.p_min}, p_max={g.p_max}]"
            )
        if g.eta is not None and not g.eta > 0:
            errors.append(f"{tag}.eta must be > 0 (got {g.eta})")

    if not cfg.grid.inertia > 0:
        errors.append(f"grid.inertia must be > 0 (got {cfg.grid.inertia})")
    if not cfg.grid.damping > 0:
        errors.append(f"grid.damping must be > 0 (got {cfg.grid.damping})")
    if cfg.grid.demand < 0:
        errors.append(f"grid.demand must be >= 0 (got {cfg.grid.demand})")

    if not cfg.dt_physics > 0:
        errors.append(f"simulation.dt_physics must be > 0 (got {cfg.dt_physics})")
    if not cfg.horizon > 0:
        errors.append(f"simulation.horizon must be > 0 (got {cfg.horizon})")
    if cfg.dt_physics > 0:
        ratio = cfg.dt_sample / cfg.dt_physics
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            errors.append(
                f"simulation.dt_sample={cfg.dt_sample} is not an integer multiple "
                f"of dt_physics={cfg.dt_physics}"
            )
    if cfg.mode not in ALL_MODES:
        errors.append(f"simulation.mode must be one of {ALL_MODES} (got {cfg.mode!r})")
    for name in ("gain_r", "gain_lambda", "gain_gamma"):
        if not getattr(cfg, name) > 0:
            errors.append(f"simulation.{name} must be > 0")
    if cfg.baseline_interval is not None and not cfg.baseline_interval > 0:
        errors.append("scenario.baseline_interval must be > 0")

    if schedule is not None:
        errors.extend(_schedule_errors(cfg, schedule))
    return errors


def _schedule_errors(cfg: SimConfig, schedule) -> list[str]:
    errors: list[str] = []
    n = len(cfg.generators)
    for t, amount in schedule.steps:
        if not (0.0 <= t <= cfg.horizon):
            errors.append(f"scenario.step at t={t} outside [0, horizon={cfg.horizon}]")
    seen: set[int] = set()
    for t, idx in schedule.outages:
        if not (0.0 <= t <= cfg.horizon):
            errors.append(f"scenario.outage at t={t} outside [0, horizon={cfg.horizon}]")
        if not (0 <= idx < n):
            errors.append(f"scenario.outage index {idx} out of range (fleet size {n})")
        elif idx in seen:
            errors.append(f"scenario: more than one outage for generator {idx}")
        seen.add(idx)
    if schedule.wiener is not None and schedule.wiener.sigma < 0:
        errors.append("scenario.wiener sigma must be >= 0")
    return errors


def validate_config(cfg: SimConfig, schedule=None) -> SimConfig:
    """Check every invariant; raise :class:`ConfigValidationError` listing all
    violations, otherwise return the config unchanged."""
    errors = config_errors(cfg, schedule)
    if errors:
        raise ConfigValidationError(errors)
    return cfg
