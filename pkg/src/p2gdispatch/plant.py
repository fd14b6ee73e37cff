"""Device models and cost functions for the hybrid plant.

Three devices share the hourly dispatch problem:

* Battery energy storage (BES): SOC bookkeeping with charge efficiency
  applied on the way in and discharge efficiency applied on the way out
  (the SOC deduction is clipped at the floor first, then the efficiency is
  applied to the deduction to obtain the delivered power).  Operating cost
  is a cyclic-aging charge driven by the change in depth of discharge.
* Gas turbine (GT): piecewise-linear fuel curve, a fuel/energy correction
  for the start-up hour, and a maintenance scheme that bills a lump sum at
  every start plus an hourly fee once a continuous run exceeds the
  life-hours / life-cycles ratio.
* Power-to-gas (P2G): converts electric power into synthetic natural gas
  stored for the GT.  Cost is a fixed per-hour degradation term plus a
  CO2-purchase term proportional to the produced fuel mass.

Sign convention: consuming setpoints (BES charging, P2G) are negative MW,
producing setpoints (BES discharging, GT) are positive MW.  All functions
are pure; they never mutate their inputs, so they are safe to call from any
number of concurrent simulations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace


class GtMode(enum.IntEnum):
    """Operating state of the gas turbine as exposed to the agent."""

    OFF = 0
    STARTED_RECENTLY = 1   # running, but not yet past life_hours/life_cycles
    RUNNING_LONG = 2       # continuous run longer than life_hours/life_cycles


@dataclass(frozen=True)
class GtStatus:
    """GT operating mode plus the hour counter of the current run."""

    mode: GtMode = GtMode.OFF
    run_hours: int = 0

    @staticmethod
    def off() -> "GtStatus":
        return GtStatus(GtMode.OFF, 0)


@dataclass(frozen=True)
class PlantParams:
    """All plant constants (defaults reproduce the reference case study).

    BES power limits are signed (charging negative); the P2G band is fully
    negative with ``p2g_power_max < p2g_power_min < 0``, i.e. ``p2g_power_min``
    is the smallest admissible draw when the system is on.
    """

    # Battery energy storage
    bes_capacity_mwh: float = 50.0
    bes_soc_min: float = 0.1
    bes_soc_max: float = 0.9
    bes_power_min_mw: float = -20.0
    bes_power_max_mw: float = 20.0
    eta_ch: float = 0.92
    eta_dis: float = 0.92
    peukert_kp: float = 1.14
    cycles_to_failure: float = 6_000.0
    bes_investment_per_mwh: float = 300_000.0

    # Gas turbine
    gt_power_max_mw: float = 32.6
    gt_life_cycles: float = 26_000.0
    gt_life_hours: float = 200_000.0
    gt_lifetime_om_cost: float = 33_000_000.0

    # Fuel curve (lbs/h as a function of MW) and start-up correction
    fuel_curve_breakpoint_mw: float = 1.0
    fuel_curve_low_slope: float = 700.0
    fuel_curve_low_intercept: float = 1550.0
    fuel_curve_high_slope: float = 360.0
    fuel_curve_high_intercept: float = 2200.0
    startup_minutes: float = 20.0
    startup_fuel_rate_lbs_per_h: float = 1200.0

    # Power-to-gas system
    p2g_capacity_lbs: float = 1_000_000.0
    p2g_power_min_mw: float = -12.0
    p2g_power_max_mw: float = -30.0
    eta_p2g: float = 0.56
    alpha_p2g_lbs_per_mwh: float = 158.73
    k_p2g_fix: float = 300.0
    k_p2g_var_per_kg: float = 0.03375
    kg_per_lb: float = 0.45359237

    # Simulation resolution
    dt_hours: float = 1.0

    # Derived quantities -------------------------------------------------

    @property
    def bes_investment_total(self) -> float:
        """Total battery investment, the C_inv of the aging-cost formula."""
        return self.bes_investment_per_mwh * self.bes_capacity_mwh

    @property
    def k_cycle(self) -> float:
        """Maintenance cost billed at each GT start."""
        return self.gt_lifetime_om_cost / self.gt_life_cycles

    @property
    def k_oper(self) -> float:
        """Maintenance cost billed per long-run GT operating hour."""
        return self.gt_lifetime_om_cost / self.gt_life_hours

    @property
    def gt_long_run_threshold(self) -> float:
        """Run-hour count beyond which k_oper applies (life hours / cycles)."""
        return self.gt_life_hours / self.gt_life_cycles

    @property
    def startup_hours(self) -> float:
        return self.startup_minutes / 60.0

    def validate(self) -> None:
        if not (0.0 < self.eta_ch <= 1.0 and 0.0 < self.eta_dis <= 1.0
                and 0.0 < self.eta_p2g <= 1.0):
            raise ValueError("efficiencies must lie in (0, 1]")
        if not self.bes_soc_min < self.bes_soc_max:
            raise ValueError("bes_soc_min must be below bes_soc_max")
        if not (self.p2g_power_max_mw < self.p2g_power_min_mw < 0.0):
            raise ValueError("P2G power band must satisfy max < min < 0")
        if self.bes_capacity_mwh <= 0 or self.p2g_capacity_lbs <= 0:
            raise ValueError("capacities must be positive")
        if self.gt_power_max_mw <= 0 or self.dt_hours <= 0:
            raise ValueError("gt_power_max_mw and dt_hours must be positive")
        if self.startup_hours >= self.dt_hours:
            raise ValueError("start-up time must be shorter than one step")

    def with_overrides(self, **kwargs) -> "PlantParams":
        p = replace(self, **kwargs)
        p.validate()
        return p


@dataclass(frozen=True)
class StepOutcome:
    """Result of advancing one device by one step.

    ``new_soc`` is set for BES/P2G, ``new_status`` for the GT.  ``fuel_lbs``
    is fuel generated (P2G) or burned (GT).  ``effective_power_mw`` is the
    average power actually exchanged with the plant bus over the step, which
    can differ from the request due to clipping, efficiency, or the start-up
    correction.
    """

    effective_power_mw: float
    fuel_lbs: float
    cost: float
    new_soc: float | None = None
    new_status: GtStatus | None = None


# ---------------------------------------------------------------------------
# Battery energy storage


def bes_aging_cost(soc_prev: float, soc_new: float, params: PlantParams) -> float:
    """Cyclic-aging cost of moving the battery between two SOC levels.

    Cost is proportional to the change of depth-of-discharge raised to the
    Peukert exponent, scaled by total investment over twice the cycle life.
    """
    if not (0.0 <= soc_prev <= 1.0 and 0.0 <= soc_new <= 1.0):
        raise ValueError("SOC values must lie in [0, 1]")
    kp = params.peukert_kp
    dod_term = abs((1.0 - soc_new) ** kp - (1.0 - soc_prev) ** kp)
    return dod_term / (2.0 * params.cycles_to_failure) * params.bes_investment_total


def bes_step(soc: float, requested_power_mw: float, params: PlantParams) -> StepOutcome:
    """Advance the battery by one step at the requested (signed) power.

    Charging stores ``eta_ch`` of the drawn energy; discharging deducts the
    requested energy from the SOC (clipped at the floor) and delivers
    ``eta_dis`` of the deduction.  Requests outside the power limits are a
    contract violation: callers are expected to pre-project.
    """
    lo, hi = params.bes_power_min_mw, params.bes_power_max_mw
    if not lo <= requested_power_mw <= hi:
        raise ValueError(
            f"BES power {requested_power_mw} outside [{lo}, {hi}] MW")
    if not params.bes_soc_min <= soc <= params.bes_soc_max:
        raise ValueError(f"BES SOC {soc} outside "
                         f"[{params.bes_soc_min}, {params.bes_soc_max}]")

    cap, dt = params.bes_capacity_mwh, params.dt_hours
    if requested_power_mw == 0.0:
        return StepOutcome(0.0, 0.0, 0.0, new_soc=soc)

    if requested_power_mw < 0.0:  # charging
        dsoc = -params.eta_ch * requested_power_mw * dt / cap
        if soc + dsoc > params.bes_soc_max:
            new_soc = params.bes_soc_max
            dsoc = new_soc - soc
        else:
            new_soc = soc + dsoc
        effective = -dsoc * cap / (params.eta_ch * dt)
    else:  # discharging
        deduction = requested_power_mw * dt / cap
        max_deduction = soc - params.bes_soc_min
        if deduction > max_deduction:
            deduction = max_deduction
        new_soc = soc - deduction
        if new_soc < params.bes_soc_min:  # keep the floor exact under rounding
            new_soc = params.bes_soc_min
            deduction = soc - params.bes_soc_min
        effective = deduction * cap * params.eta_dis / dt

    cost = bes_aging_cost(soc, new_soc, params)
    return StepOutcome(effective, 0.0, cost, new_soc=new_soc)


# ---------------------------------------------------------------------------
# Gas turbine


def gt_fuel_rate(power_mw: float, params: PlantParams) -> float:
    """Fuel consumption rate (lbs/h) at a sustained GT power setpoint.

    The two linear branches overlap at the breakpoint; the low branch is
    used at exactly the breakpoint, and the curve is intentionally
    discontinuous across it.
    """
    if not 0.0 <= power_mw <= params.gt_power_max_mw:
        raise ValueError(
            f"GT power {power_mw} outside [0, {params.gt_power_max_mw}] MW")
    if power_mw == 0.0:
        return 0.0
    if power_mw <= params.fuel_curve_breakpoint_mw:
        return params.fuel_curve_low_slope * power_mw + params.fuel_curve_low_intercept
    return params.fuel_curve_high_slope * power_mw + params.fuel_curve_high_intercept


def gt_max_power_for_rate(budget_rate_lbs_per_h: float, params: PlantParams) -> float:
    """Largest setpoint whose fuel rate stays within a lbs/h budget.

    Inverts the fuel curve branch by branch; returns 0.0 when even an
    infinitesimal positive setpoint would exceed the budget.
    """
    bp = params.fuel_curve_breakpoint_mw
    low_max = params.fuel_curve_low_slope * bp + params.fuel_curve_low_intercept
    high_min = params.fuel_curve_high_slope * bp + params.fuel_curve_high_intercept
    if budget_rate_lbs_per_h >= high_min:
        p = (budget_rate_lbs_per_h - params.fuel_curve_high_intercept) \
            / params.fuel_curve_high_slope
        return min(p, params.gt_power_max_mw)
    if budget_rate_lbs_per_h >= low_max:
        # Between the branch tops only the breakpoint itself is affordable.
        return bp
    p = (budget_rate_lbs_per_h - params.fuel_curve_low_intercept) \
        / params.fuel_curve_low_slope
    return max(p, 0.0)


def gt_step(status: GtStatus, requested_power_mw: float,
            fuel_available_lbs: float, params: PlantParams) -> StepOutcome:
    """Advance the GT by one step.

    A start from Off loses the start-up time of the step (zero output during
    start-up, full setpoint afterwards), burns the start-up fuel flow during
    that window, and bills the per-start maintenance fee.  Continuing hours
    burn the fuel-curve rate for the full step and bill the hourly fee once
    the run counter passes the long-run threshold.  If the requested
    setpoint needs more fuel than is available, power is reduced to the
    largest feasible setpoint (callers normally pre-project).
    """
    if not 0.0 <= requested_power_mw <= params.gt_power_max_mw:
        raise ValueError(
            f"GT power {requested_power_mw} outside [0, {params.gt_power_max_mw}] MW")

    if requested_power_mw == 0.0:
        return StepOutcome(0.0, 0.0, 0.0, new_status=GtStatus.off())

    dt = params.dt_hours
    starting = status.mode == GtMode.OFF
    if starting:
        su = params.startup_hours
        run_h = dt - su
        startup_fuel = params.startup_fuel_rate_lbs_per_h * su
        budget_rate = (fuel_available_lbs - startup_fuel) / run_h
        power = min(requested_power_mw, gt_max_power_for_rate(budget_rate, params))
        if power <= 0.0:
            return StepOutcome(0.0, 0.0, 0.0, new_status=GtStatus.off())
        fuel = startup_fuel + gt_fuel_rate(power, params) * run_h
        effective = power * run_h / dt
        n_h = 1
        cost = params.k_cycle
    else:
        budget_rate = fuel_available_lbs / dt
        power = min(requested_power_mw, gt_max_power_for_rate(budget_rate, params))
        if power <= 0.0:
            return StepOutcome(0.0, 0.0, 0.0, new_status=GtStatus.off())
        fuel = gt_fuel_rate(power, params) * dt
        effective = power
        n_h = status.run_hours + 1
        cost = params.k_oper if n_h > params.gt_long_run_threshold else 0.0

    mode = GtMode.RUNNING_LONG if n_h > params.gt_long_run_threshold \
        else GtMode.STARTED_RECENTLY
    return StepOutcome(effective, fuel, cost, new_status=GtStatus(mode, n_h))


# ---------------------------------------------------------------------------
# Power-to-gas system


def p2g_step(soc: float, requested_power_mw: float, params: PlantParams) -> StepOutcome:
    """Advance the P2G system by one step at the requested (negative) power.

    Produced fuel is clipped to the remaining storage headroom by reducing
    power proportionally; if even the minimum admissible power would overfill
    the store, the system is forced off.  A request strictly inside the
    forbidden band (0, p2g_power_min) is a contract violation.
    """
    if requested_power_mw == 0.0:
        return StepOutcome(0.0, 0.0, 0.0, new_soc=soc)
    if not params.p2g_power_max_mw <= requested_power_mw <= params.p2g_power_min_mw:
        raise ValueError(
            f"P2G power {requested_power_mw} outside "
            f"[{params.p2g_power_max_mw}, {params.p2g_power_min_mw}] MW")

    cap, dt = params.p2g_capacity_lbs, params.dt_hours
    conv = params.eta_p2g * params.alpha_p2g_lbs_per_mwh
    fuel = -requested_power_mw * conv * dt
    headroom = (1.0 - soc) * cap
    power = requested_power_mw
    if fuel > headroom:
        fuel = headroom
        power = -fuel / (conv * dt)
        if -power < -params.p2g_power_min_mw:
            # Even minimum power would overfill the store.
            return StepOutcome(0.0, 0.0, 0.0, new_soc=soc)
    new_soc = min(soc + fuel / cap, 1.0)
    cost = params.k_p2g_fix + fuel * params.kg_per_lb * params.k_p2g_var_per_kg
    return StepOutcome(power, fuel, cost, new_soc=new_soc)


# ---------------------------------------------------------------------------
# Closed-form break-even prices (plant-economics sanity anchors)


def bes_breakeven_price(params: PlantParams, charge_price: float,
                        charge_power_mw: float | None = None) -> float:
    """Discharge price at which one charge/discharge BES cycle breaks even.

    Charges for one step at ``charge_power_mw`` (default: full power) from
    the SOC floor, fully discharges the stored energy the next step, and
    solves revenue = lost sales + aging cost for the discharge price.
    """
    power = -abs(charge_power_mw if charge_power_mw is not None
                 else params.bes_power_min_mw)
    charge = bes_step(params.bes_soc_min, power, params)
    discharge = bes_step(charge.new_soc, params.bes_power_max_mw, params)
    lost_sales = -charge.effective_power_mw * charge_price * params.dt_hours
    total_cost = lost_sales + charge.cost + discharge.cost
    sold_energy = discharge.effective_power_mw * params.dt_hours
    return total_cost / sold_energy


def p2g_gt_breakeven_price(params: PlantParams, charge_price: float,
                           charge_hours: int = 5) -> float:
    """Selling price at which a P2G charge campaign plus one GT hour breaks even.

    Runs the P2G system at full power for ``charge_hours`` steps (counting
    lost renewable sales at ``charge_price``), then burns the stored fuel in
    a single GT hour at the largest setpoint the fuel curve allows, paying
    the per-start maintenance fee.  The start-up fuel/energy correction is a
    simulator refinement and is deliberately not part of this closed-form
    comparison.
    """
    soc = 0.0
    fuel_total = 0.0
    p2g_cost = 0.0
    lost_sales = 0.0
    for _ in range(charge_hours):
        out = p2g_step(soc, params.p2g_power_max_mw, params)
        soc = out.new_soc
        fuel_total += out.fuel_lbs
        p2g_cost += out.cost
        lost_sales += -out.effective_power_mw * charge_price * params.dt_hours
    power = gt_max_power_for_rate(fuel_total / params.dt_hours, params)
    sold_energy = power * params.dt_hours
    total_cost = lost_sales + p2g_cost + params.k_cycle
    return total_cost / sold_energy
