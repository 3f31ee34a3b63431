"""Economic post-processing: profits, cost-recovery verification, and
online-versus-offline price comparisons."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import dispatch, model, scenario as scenario_mod
from .dynamics import Trajectory
from .model import GeneratorParams, GridParams

#: profit below this threshold counts as a cost-recovery violation; the
#: exact-arithmetic bound is zero, the slack absorbs floating-point noise
PROFIT_TOL = -1e-9

#: settling detection: |omega| below this for at least this long
SETTLE_BAND_HZ = 1e-3
SETTLE_DWELL_S = 5.0


class TimebaseMismatchError(ValueError):
    """Two series being compared do not share a sample grid."""


def profit(g_i: float, lam: float, gen: GeneratorParams) -> float:
    """Instantaneous profit rate ($/h): revenue at the uniform price minus
    the generation cost rate."""
    return lam * g_i - model.generator_cost(gen, g_i)


def profit_matrix(trajectory: Trajectory, fleet: Sequence[GeneratorParams],
                  prices: np.ndarray) -> np.ndarray:
    """Profit of the trajectory's output path priced at ``prices``."""
    C = model.quad_coefs(fleet)
    c = model.lin_coefs(fleet)
    g = trajectory.outputs
    return prices[:, None] * g - (0.5 * C[None, :] * g * g + c[None, :] * g)


@dataclass(frozen=True)
class ProfitRecord:
    """Per-generator settlement at one instant."""

    t: float
    outputs: np.ndarray
    revenues: np.ndarray
    costs: np.ndarray
    profits: np.ndarray
    price_used: str  # "online" or "offline"


@dataclass(frozen=True)
class CostRecoveryReport:
    """Minimum per-generator profit over a trajectory and the first time,
    if any, it fell below the violation threshold."""

    min_profit: np.ndarray
    min_profit_time: np.ndarray
    first_violation_time: tuple[Optional[float], ...]
    any_violation: bool


def cost_recovery_report(trajectory: Trajectory,
                         fleet: Sequence[GeneratorParams],
                         tol: float = PROFIT_TOL) -> CostRecoveryReport:
    """Scan every sample for per-generator profits below ``tol``."""
    n = len(fleet)
    if len(trajectory) == 0:
        return CostRecoveryReport(
            min_profit=np.full(n, np.inf),
            min_profit_time=np.full(n, np.nan),
            first_violation_time=tuple(None for _ in range(n)),
            any_violation=False)
    profits = trajectory.profits
    kmin = np.argmin(profits, axis=0)
    min_profit = profits[kmin, np.arange(n)]
    min_time = trajectory.t[kmin]
    firsts = []
    for i in range(n):
        bad = np.nonzero(profits[:, i] < tol)[0]
        firsts.append(float(trajectory.t[bad[0]]) if len(bad) else None)
    return CostRecoveryReport(
        min_profit=min_profit,
        min_profit_time=min_time,
        first_violation_time=tuple(firsts),
        any_violation=any(f is not None for f in firsts))


@dataclass(frozen=True)
class OnlineOfflineComparison:
    """The same generation path settled at the online price and at the
    piecewise-constant offline baseline price."""

    t: np.ndarray
    lambda_online: np.ndarray
    lambda_offline: np.ndarray
    profit_online: np.ndarray
    profit_offline: np.ndarray


def compare_online_offline(trajectory: Trajectory,
                           baseline: dispatch.OfflineBaseline,
                           fleet: Sequence[GeneratorParams]
                           ) -> OnlineOfflineComparison:
    """Price the trajectory's actual generation path both ways.

    The offline settlement deliberately uses the online run's physical
    output path, so the comparison isolates the price signal.
    """
    if len(trajectory) and trajectory.t[-1] > baseline.horizon + 1e-9:
        raise TimebaseMismatchError(
            f"trajectory extends to t={trajectory.t[-1]} but the baseline "
            f"covers only [0, {baseline.horizon}]")
    lam_off = np.array([baseline.price_at(t) for t in trajectory.t])
    return OnlineOfflineComparison(
        t=trajectory.t,
        lambda_online=trajectory.price,
        lambda_offline=lam_off,
        profit_online=trajectory.profits,
        profit_offline=profit_matrix(trajectory, fleet, lam_off),
    )


def tracking_error(trajectory: Trajectory, fleet: Sequence[GeneratorParams],
                   grid: GridParams,
                   schedule: scenario_mod.DisturbanceSchedule) -> np.ndarray:
    """Sup-norm gap between the trajectory's dispatch and the dispatch an
    instantaneous re-solve would produce at each sample's disturbance."""
    errors = np.empty(len(trajectory))
    for k in range(len(trajectory)):
        active = scenario_mod.fleet_at(fleet, schedule, float(trajectory.t[k]))
        try:
            sol = dispatch.solve_ed(active, grid, float(trajectory.delta[k]))
        except dispatch.InfeasibleDispatchError as exc:
            raise dispatch.InfeasibleDispatchError(
                f"instantaneous re-solve infeasible at t={trajectory.t[k]:.3f}s: {exc}",
                shortfall_mw=exc.shortfall_mw) from exc
        errors[k] = np.abs(trajectory.outputs[k] - sol.outputs).max()
    return errors


def settling_time(trajectory: Trajectory, band_hz: float = SETTLE_BAND_HZ,
                  dwell_s: float = SETTLE_DWELL_S) -> Optional[float]:
    """First time from which |omega| stays inside the band for ``dwell_s``."""
    if len(trajectory) == 0:
        return None
    inside = np.abs(trajectory.omega) < band_hz
    need = max(1, int(round(dwell_s / trajectory.dt_sample)))
    run = 0
    for k, ok in enumerate(inside):
        run = run + 1 if ok else 0
        if run >= need:
            return float(trajectory.t[k - run + 1])
    return None


def summarize(trajectory: Trajectory) -> dict:
    """Headline numbers for one run (JSON-serializable).

    Energy and cumulative profit use the rectangle rule over the sample
    grid; profits are rates in $/h, integrated into $.
    """
    if len(trajectory) == 0:
        return {"n_samples": 0, "settling_time_s": None, "peak_abs_omega_hz": 0.0,
                "final_lambda_rt": None, "energy_mwh": [], "cumulative_profit_usd": [],
                "profit_violations": 0}
    dt_h = trajectory.dt_sample / 3600.0
    energy = trajectory.outputs[:-1].sum(axis=0) * dt_h if len(trajectory) > 1 \
        else np.zeros(trajectory.outputs.shape[1])
    cum_profit = trajectory.profits[:-1].sum(axis=0) * dt_h if len(trajectory) > 1 \
        else np.zeros(trajectory.profits.shape[1])
    violations = int((trajectory.profits < PROFIT_TOL).sum())
    return {
        "n_samples": len(trajectory),
        "mode": trajectory.mode,
        "lambda_da": trajectory.lambda_da,
        "settling_time_s": settling_time(trajectory),
        "peak_abs_omega_hz": float(np.abs(trajectory.omega).max()),
        "final_lambda_rt": float(trajectory.price[-1]),
        "final_delta_mw": float(trajectory.delta[-1]),
        "energy_mwh": [float(x) for x in energy],
        "cumulative_profit_usd": [float(x) for x in cum_profit],
        "profit_violations": violations,
        "equilibrium_time_s": trajectory.meta.get("equilibrium_time_s"),
    }
