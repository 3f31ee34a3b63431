"""Offline economic dispatch: day-ahead clearing, ground-truth optima, and
the interval-repriced baseline.

The dispatch problem minimizes total quadratic generation cost subject to
the power-balance constraint and per-generator capacity boxes.  With a
single equality constraint the KKT system reduces to a scalar equation in
the price: each generator's optimal output is its clamped best response
``clip((lam - lin_cost) / quad_cost, p_min, p_max)``, and total clamped
output is a nondecreasing, piecewise-linear function of ``lam``.  The
solver therefore bisects on the price (lambda iteration / waterfilling),
which is exact, dependency-free, and O(n) per step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import model
from .model import GeneratorParams, GridParams, SimConfig

#: demand-balance tolerance inside the solver, MW
BALANCE_TOL = 1e-9
#: KKT stationarity tolerance used by the residual check
KKT_TOL = 1e-6
#: bound-attribution tolerance for binding flags, MW
BINDING_TOL = 1e-6

BISECTION_ITERS = 200


class InfeasibleDispatchError(ValueError):
    """Demand cannot be met within the fleet capacity box."""

    def __init__(self, message: str, shortfall_mw: float, interval_index: Optional[int] = None):
        self.shortfall_mw = shortfall_mw
        self.interval_index = interval_index
        super().__init__(message)


@dataclass(frozen=True)
class DispatchSolution:
    """KKT-optimal dispatch for one demand level.

    ``outputs`` are total generator outputs (MW); ``r_opt`` is the same
    solution expressed as regulation around the day-ahead setpoints.
    ``binding`` flags which box constraint is active per generator.
    """

    outputs: np.ndarray
    r_opt: np.ndarray
    lambda_opt: float
    total_cost: float
    binding: tuple[str, ...]


def _box(fleet: Sequence[GeneratorParams]) -> tuple[np.ndarray, np.ndarray]:
    return model.p_min_vector(fleet), model.p_max_vector(fleet)


def _clamped_response(lam: float, C: np.ndarray, c: np.ndarray,
                      lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.clip((lam - c) / C, lo, hi)


def _binding_flags(outputs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[str, ...]:
    flags = []
    for g, a, b in zip(outputs, lo, hi):
        if g <= a + BINDING_TOL:
            flags.append("lower")
        elif g >= b - BINDING_TOL:
            flags.append("upper")
        else:
            flags.append("interior")
    return tuple(flags)


def solve_ed(fleet: Sequence[GeneratorParams], grid: GridParams, delta: float,
             balance_tol: float = BALANCE_TOL) -> DispatchSolution:
    """Solve the dispatch problem for demand ``grid.demand + delta``.

    Raises :class:`InfeasibleDispatchError` (reporting the shortfall in MW)
    when demand falls outside ``[sum(p_min), sum(p_max)]``.
    """
    C = model.quad_coefs(fleet)
    c = model.lin_coefs(fleet)
    lo, hi = _box(fleet)
    demand = grid.demand + delta

    if demand > hi.sum() + balance_tol:
        short = demand - hi.sum()
        raise InfeasibleDispatchError(
            f"demand {demand:.6f} MW exceeds fleet capacity {hi.sum():.6f} MW "
            f"(shortfall {short:.6f} MW)", shortfall_mw=short)
    if demand < lo.sum() - balance_tol:
        short = lo.sum() - demand
        raise InfeasibleDispatchError(
            f"demand {demand:.6f} MW below minimum generation {lo.sum():.6f} MW "
            f"(excess {short:.6f} MW)", shortfall_mw=short)

    if demand <= lo.sum() + balance_tol:
        # Degenerate corner: every generator pinned at its floor.  The dual
        # is not unique there; report the lowest marginal cost at the floor
        # (the infimum of prices that clear no additional output).
        outputs = lo.copy()
        lam = float(np.min(C * lo + c))
    else:
        a = float(np.min(c)) - 1.0
        b = float(np.max(c + C * hi)) + 1.0
        for _ in range(BISECTION_ITERS):
            mid = 0.5 * (a + b)
            if _clamped_response(mid, C, c, lo, hi).sum() > demand:
                b = mid
            else:
                a = mid
        lam = 0.5 * (a + b)
        outputs = _clamped_response(lam, C, c, lo, hi)

    balance = float(outputs.sum() - demand)
    if abs(balance) > max(balance_tol, 1e-12 * max(1.0, demand)):
        raise RuntimeError(f"bisection failed to balance: residual {balance} MW")

    p_star = model.p_star_vector(fleet)
    return DispatchSolution(
        outputs=outputs,
        r_opt=outputs - p_star,
        lambda_opt=lam,
        total_cost=model.fleet_cost(fleet, outputs),
        binding=_binding_flags(outputs, lo, hi),
    )


def day_ahead(fleet: Sequence[GeneratorParams], grid: GridParams
              ) -> tuple[list[GeneratorParams], float]:
    """Clear the day-ahead market at the nominal demand.

    Returns a new fleet with ``p_star`` assigned to the cleared outputs,
    together with the day-ahead price.
    """
    sol = solve_ed(fleet, grid, delta=0.0)
    cleared = [replace(g, p_star=float(out)) for g, out in zip(fleet, sol.outputs)]
    return cleared, sol.lambda_opt


def resolve_day_ahead(cfg: SimConfig) -> SimConfig:
    """Fill in missing ``p_star`` values and ``lambda_da`` via day-ahead clearing.

    An explicit ``lambda_da`` in the config overrides the cleared price;
    explicit setpoints on every generator skip the clearing entirely
    (the price, if missing, is then the dispatch dual at nominal demand).
    """
    fleet = list(cfg.generators)
    lam_da = cfg.lambda_da
    if any(g.p_star is None for g in fleet):
        fleet, cleared_price = day_ahead(fleet, cfg.grid)
        if lam_da is None:
            lam_da = cleared_price
    elif lam_da is None:
        lam_da = solve_ed(fleet, cfg.grid, delta=0.0).lambda_opt
    return replace(cfg, generators=tuple(fleet), lambda_da=float(lam_da))


def brute_force_ed(fleet: Sequence[GeneratorParams], demand: float,
                   resolution: float) -> DispatchSolution:
    """Exhaustive grid search over the feasible box (test oracle).

    Supports at most three generators; the balance constraint eliminates
    one variable.  Cost grows with ``(span/resolution)**(n-1)``, so use a
    coarse resolution for three generators.  The price is estimated as the
    marginal cost of an interior generator (of the solution point itself
    when every generator is pinned).
    """
    n = len(fleet)
    if n == 0 or n > 3:
        raise ValueError(f"brute force oracle supports 1..3 generators, got {n}")
    if not resolution > 0:
        raise ValueError("resolution must be > 0")

    C = model.quad_coefs(fleet)
    c = model.lin_coefs(fleet)
    lo, hi = _box(fleet)
    if demand > hi.sum() + BALANCE_TOL or demand < lo.sum() - BALANCE_TOL:
        short = demand - hi.sum() if demand > hi.sum() else lo.sum() - demand
        raise InfeasibleDispatchError(
            f"demand {demand:.6f} MW infeasible for the oracle fleet "
            f"(shortfall {abs(short):.6f} MW)", shortfall_mw=abs(short))

    def cost_of(cols: list[np.ndarray]) -> np.ndarray:
        total = np.zeros_like(cols[0])
        for i, g in enumerate(cols):
            total += 0.5 * C[i] * g * g + c[i] * g
        return total

    if n == 1:
        best = np.array([min(max(demand, lo[0]), hi[0])])
    else:
        axes = [np.arange(lo[i], hi[i] + 0.5 * resolution, resolution) for i in range(n - 1)]
        if n == 2:
            g0 = axes[0]
            g1 = demand - g0
            ok = (g1 >= lo[1] - 1e-12) & (g1 <= hi[1] + 1e-12)
            if not ok.any():
                raise InfeasibleDispatchError(
                    "no feasible grid point at this resolution", shortfall_mw=0.0)
            g0, g1 = g0[ok], np.clip(g1[ok], lo[1], hi[1])
            costs = cost_of([g0, g1])
            k = int(np.argmin(costs))
            best = np.array([g0[k], g1[k]])
        else:
            m0, m1 = np.meshgrid(axes[0], axes[1], indexing="ij")
            g0, g1 = m0.ravel(), m1.ravel()
            g2 = demand - g0 - g1
            ok = (g2 >= lo[2] - 1e-12) & (g2 <= hi[2] + 1e-12)
            if not ok.any():
                raise InfeasibleDispatchError(
                    "no feasible grid point at this resolution", shortfall_mw=0.0)
            g0, g1, g2 = g0[ok], g1[ok], np.clip(g2[ok], lo[2], hi[2])
            costs = cost_of([g0, g1, g2])
            k = int(np.argmin(costs))
            best = np.array([g0[k], g1[k], g2[k]])

    flags = _binding_flags(best, lo, hi)
    mc = C * best + c
    interior = [i for i, f in enumerate(flags) if f == "interior"]
    lam = float(mc[interior[0]]) if interior else float(mc[0])
    p_star = model.p_star_vector(fleet)
    return DispatchSolution(
        outputs=best,
        r_opt=best - p_star,
        lambda_opt=lam,
        total_cost=model.fleet_cost(fleet, best),
        binding=flags,
    )


def kkt_residual(fleet: Sequence[GeneratorParams], sol: DispatchSolution,
                 demand: float) -> float:
    """Stationarity plus balance residual of a candidate solution.

    Interior generators must price at the dual; generators at a bound may
    only deviate with the sign the bound permits (marginal cost above the
    price at the floor, below it at the cap).
    """
    lo, hi = _box(fleet)
    mc = model.fleet_marginal(fleet, sol.outputs)
    worst = 0.0
    for i, g in enumerate(sol.outputs):
        if g <= lo[i] + BINDING_TOL:
            viol = max(0.0, sol.lambda_opt - mc[i])
        elif g >= hi[i] - BINDING_TOL:
            viol = max(0.0, mc[i] - sol.lambda_opt)
        else:
            viol = abs(mc[i] - sol.lambda_opt)
        worst = max(worst, float(viol))
    return worst + abs(float(sol.outputs.sum()) - demand)


@dataclass(frozen=True)
class OfflineBaseline:
    """Piecewise-constant price/dispatch trajectory from interval repricing.

    ``times[k]`` is the start of interval ``k``; its price and dispatch are
    held until ``times[k+1]``.
    """

    times: np.ndarray
    prices: np.ndarray
    dispatches: np.ndarray
    interval: float
    horizon: float

    def index_at(self, t: float) -> int:
        if t < 0 or t > self.horizon:
            raise ValueError(f"t={t} outside baseline horizon [0, {self.horizon}]")
        return min(int(np.searchsorted(self.times, t, side="right")) - 1,
                   len(self.times) - 1)

    def price_at(self, t: float) -> float:
        return float(self.prices[self.index_at(t)])

    def dispatch_at(self, t: float) -> np.ndarray:
        return self.dispatches[self.index_at(t)]


def offline_baseline(fleet: Sequence[GeneratorParams], grid: GridParams,
                     schedule, interval: float, horizon: float,
                     dt_physics: float) -> OfflineBaseline:
    """Re-solve dispatch every ``interval`` seconds at the then-current
    disturbance, holding price and dispatch constant in between.

    Repricing sees the fleet as of the interval start (outages included);
    events inside an interval are ignored until the next re-solve.
    Infeasibility at a re-solve is reported with the interval index.
    """
    from . import scenario as scenario_mod

    if not interval > 0:
        raise ValueError("interval must be > 0")
    times = []
    prices = []
    dispatches = []
    t = 0.0
    k = 0
    state = None
    while t <= horizon + 1e-12:
        delta, state = scenario_mod.delta_at(schedule, t, dt_physics, state)
        active = scenario_mod.fleet_at(fleet, schedule, t)
        try:
            sol = solve_ed(active, grid, delta)
        except InfeasibleDispatchError as exc:
            raise InfeasibleDispatchError(
                f"offline re-solve at interval {k} (t={t:.3f}s): {exc}",
                shortfall_mw=exc.shortfall_mw, interval_index=k) from exc
        times.append(t)
        prices.append(sol.lambda_opt)
        dispatches.append(sol.outputs)
        t += interval
        k += 1
    return OfflineBaseline(
        times=np.array(times),
        prices=np.array(prices),
        dispatches=np.array(dispatches),
        interval=interval,
        horizon=horizon,
    )
