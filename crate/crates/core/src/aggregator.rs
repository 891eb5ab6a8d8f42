//! Per-EV scheduling MILP, fleet optimization and boundary aggregation.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{validate_ev, AggregatorSpec, EvSchedule, EvSpec, FlexBoundary, PriceSet, TimeGrid};
use crate::solver::{solve_milp_with, LinearProgram, MilpProblem, Relation, Sense, SolverOptions, Var};

/// Values below this magnitude are reported as exact zeros.
const ZERO_SNAP: f64 = 1e-9;
/// Slack allowed when asserting the post-solve schedule invariants.
const SCHEDULE_TOL: f64 = 1e-6;

/// The MILP for one EV together with the variable handles needed to read a schedule back.
#[derive(Clone, Debug)]
pub struct EvProblem {
    pub problem: MilpProblem,
    e_up: Vec<Var>,
    e_down: Vec<Var>,
    e_da: Vec<Var>,
    soc: Vec<Var>,
}

impl EvProblem {
    pub fn e_up(&self) -> &[Var] {
        &self.e_up
    }

    pub fn e_down(&self) -> &[Var] {
        &self.e_down
    }

    pub fn e_da(&self) -> &[Var] {
        &self.e_da
    }

    pub fn soc(&self) -> &[Var] {
        &self.soc
    }
}

/// Which market variables may be nonzero at a step.
#[derive(Clone, Copy, Debug)]
struct Modes {
    up: bool,
    down: bool,
    da: bool,
}

impl Modes {
    fn count(self) -> usize {
        self.up as usize + self.down as usize + self.da as usize
    }
}

/// Builds the per-EV MILP: maximize balancing plus day-ahead benefit subject to
/// power limits, per-step mode exclusivity and the state-of-charge trajectory.
pub fn build_ev_problem(spec: &EvSpec, prices: &PriceSet, grid: &TimeGrid) -> Result<EvProblem> {
    let mut violations = grid.validate();
    violations.extend(validate_ev(spec, grid));
    violations.extend(prices.validate(grid));
    if !violations.is_empty() {
        return Err(Error::InfeasibleSpec { ev_id: spec.id.clone(), violations });
    }

    let n = grid.steps;
    let dt = grid.delta_t;
    let up_max = spec.discharge_power_max_mw * dt;
    let up_min = spec.discharge_power_min_mw * dt;
    let down_max = spec.charge_power_max_mw * dt;
    let down_min = spec.charge_power_min_mw * dt;
    let full = spec.soc_full();
    let brp = prices.brp_fee;

    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut binaries = Vec::new();
    let mut e_up = Vec::with_capacity(n);
    let mut e_down = Vec::with_capacity(n);
    let mut e_da = Vec::with_capacity(n);
    let mut soc = Vec::with_capacity(n);

    for t in 0..n {
        let home_market = t > 0 && !spec.trip.as_ref().is_some_and(|trip| trip.is_away(t));
        let modes = Modes {
            up: home_market && prices.up[t] != 0.0 && up_max > 0.0,
            down: home_market && prices.down[t] != 0.0 && down_max > 0.0,
            da: home_market && down_max > 0.0,
        };

        let xu = lp.add_var(format!("e_up[{t}]"), prices.up[t] - brp, 0.0, if modes.up { up_max } else { 0.0 });
        let xd =
            lp.add_var(format!("e_down[{t}]"), prices.down[t] + brp, if modes.down { -down_max } else { 0.0 }, 0.0);
        let xa = lp.add_var(
            format!("e_da[{t}]"),
            prices.da[t] - prices.consumer_price,
            if modes.da { -down_max } else { 0.0 },
            0.0,
        );

        let fixed_soc = t == 0 || t == n - 1 || spec.trip.as_ref().is_some_and(|trip| trip.depart_step == t);
        let s = if fixed_soc {
            lp.add_var(format!("soc[{t}]"), 0.0, full, full)
        } else {
            lp.add_var(format!("soc[{t}]"), 0.0, spec.soc_min(), full)
        };

        // A lone mode without a minimum power needs no switch: its binary is fixed on.
        let lone = modes.count() == 1;
        let mut switches = Vec::new();
        for (x, on, sign, lo, hi, name) in [
            (xu, modes.up, 1.0, up_min, up_max, "u"),
            (xd, modes.down, -1.0, down_min, down_max, "v"),
            (xa, modes.da, -1.0, down_min, down_max, "w"),
        ] {
            let b = lp.add_var(format!("{name}[{t}]"), 0.0, 0.0, 1.0);
            binaries.push(b);
            if !on {
                lp.set_bounds(b, 0.0, 0.0);
                continue;
            }
            if lone && lo == 0.0 {
                lp.set_bounds(b, 1.0, 1.0);
                continue;
            }
            // |x| <= hi * b and |x| >= lo * b, written in the variable's own sign.
            lp.add_constraint(vec![(x, sign), (b, -hi)], Relation::Le, 0.0);
            if lo > 0.0 {
                lp.add_constraint(vec![(x, sign), (b, -lo)], Relation::Ge, 0.0);
            }
            switches.push(b);
        }
        if switches.len() > 1 {
            lp.add_constraint(switches.iter().map(|&b| (b, 1.0)).collect(), Relation::Le, 1.0);
        }

        if t > 0 {
            let prev = soc[t - 1];
            match spec.trip.as_ref().filter(|trip| trip.is_away(t)) {
                Some(trip) => {
                    let drop = trip.energy_mwh / trip.length() as f64;
                    lp.add_constraint(vec![(s, 1.0), (prev, -1.0)], Relation::Eq, -drop);
                }
                None => {
                    lp.add_constraint(vec![(xu, 1.0), (xd, 1.0), (xa, 1.0), (s, 1.0), (prev, -1.0)], Relation::Eq, 0.0);
                }
            }
        }

        e_up.push(xu);
        e_down.push(xd);
        e_da.push(xa);
        soc.push(s);
    }

    Ok(EvProblem { problem: MilpProblem { lp, binaries }, e_up, e_down, e_da, soc })
}

/// Solves one EV and returns its checked schedule.
pub fn optimize_ev(spec: &EvSpec, prices: &PriceSet, grid: &TimeGrid) -> Result<EvSchedule> {
    optimize_ev_with(spec, prices, grid, &SolverOptions::default())
}

pub fn optimize_ev_with(spec: &EvSpec, prices: &PriceSet, grid: &TimeGrid, opts: &SolverOptions) -> Result<EvSchedule> {
    let built = build_ev_problem(spec, prices, grid)?;
    let sol = solve_milp_with(&built.problem, opts);
    if !sol.is_optimal() {
        return Err(Error::Solver { context: format!("EV {}", spec.id), status: sol.status });
    }
    let snap = |v: f64| if v.abs() < ZERO_SNAP { 0.0 } else { v };
    let read = |vars: &[Var]| vars.iter().map(|&v| snap(sol.value(v))).collect::<Vec<_>>();
    let e_up = read(&built.e_up);
    let e_down = read(&built.e_down);
    let e_da = read(&built.e_da);
    let soc = read(&built.soc);
    let objective = (0..grid.steps)
        .map(|t| {
            e_up[t] * (prices.up[t] - prices.brp_fee)
                + e_down[t] * (prices.down[t] + prices.brp_fee)
                + e_da[t] * (prices.da[t] - prices.consumer_price)
        })
        .sum();
    let schedule = EvSchedule {
        ev_id: spec.id.clone(),
        u: e_up.iter().map(|&x| x != 0.0).collect(),
        v: e_down.iter().map(|&x| x != 0.0).collect(),
        w: e_da.iter().map(|&x| x != 0.0).collect(),
        e_up,
        e_down,
        e_da,
        soc,
        objective,
    };
    if let Some(msg) = check_schedule(spec, grid, &schedule) {
        return Err(Error::Solver {
            context: format!("EV {}: solver output breaks schedule invariant ({msg})", spec.id),
            status: sol.status,
        });
    }
    Ok(schedule)
}

/// Returns a description of the first schedule invariant that does not hold.
pub fn check_schedule(spec: &EvSpec, grid: &TimeGrid, s: &EvSchedule) -> Option<String> {
    let n = grid.steps;
    if [s.e_up.len(), s.e_down.len(), s.e_da.len(), s.soc.len(), s.u.len(), s.v.len(), s.w.len()]
        .iter()
        .any(|&len| len != n)
    {
        return Some("series length differs from the grid".into());
    }
    let tol = SCHEDULE_TOL * spec.capacity_mwh.max(1.0);
    let full = spec.soc_full();
    for t in 0..n {
        if s.e_up[t] < 0.0 || s.e_down[t] > 0.0 || s.e_da[t] > 0.0 {
            return Some(format!("sign convention broken at step {t}"));
        }
        if s.u[t] as u8 + s.v[t] as u8 + s.w[t] as u8 > 1 {
            return Some(format!("more than one mode active at step {t}"));
        }
        if s.soc[t] < spec.soc_min() - tol || s.soc[t] > full + tol {
            return Some(format!("SOC out of bounds at step {t}"));
        }
        let away = spec.trip.as_ref().is_some_and(|trip| trip.is_away(t));
        if (t == 0 || away) && (s.e_up[t] != 0.0 || s.e_down[t] != 0.0 || s.e_da[t] != 0.0) {
            return Some(format!("market activity while unavailable at step {t}"));
        }
        if t > 0 {
            let delta = s.soc[t - 1] - s.soc[t];
            let expected = match spec.trip.as_ref().filter(|trip| trip.is_away(t)) {
                Some(trip) => trip.energy_mwh / trip.length() as f64,
                None => s.e_up[t] + s.e_down[t] + s.e_da[t],
            };
            if (delta - expected).abs() > tol {
                return Some(format!("energy balance broken at step {t}"));
            }
        }
    }
    let mut full_steps = vec![0, n - 1];
    if let Some(trip) = &spec.trip {
        full_steps.push(trip.depart_step);
    }
    if full_steps.iter().any(|&t| (s.soc[t] - full).abs() > tol) {
        return Some("SOC not full at a fixed step".into());
    }
    None
}

/// Optimizes every EV of the fleet. EVs with identical physics share one solve.
pub fn optimize_fleet(agg: &AggregatorSpec, prices: &PriceSet, grid: &TimeGrid) -> Result<Vec<EvSchedule>> {
    optimize_evs(&agg.fleet, prices, grid)
}

/// Optimizes an arbitrary list of EVs, returning schedules in input order.
pub fn optimize_evs(fleet: &[EvSpec], prices: &PriceSet, grid: &TimeGrid) -> Result<Vec<EvSchedule>> {
    let mut unique: Vec<&EvSpec> = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    let slots: Vec<usize> = fleet
        .iter()
        .map(|ev| {
            *index_of.entry(ev.physics_key()).or_insert_with(|| {
                unique.push(ev);
                unique.len() - 1
            })
        })
        .collect();
    let solved: Vec<EvSchedule> = unique.par_iter().map(|ev| optimize_ev(ev, prices, grid)).collect::<Result<_>>()?;
    Ok(fleet.iter().zip(slots).map(|(ev, k)| EvSchedule { ev_id: ev.id.clone(), ..solved[k].clone() }).collect())
}

/// Sum of per-EV objectives.
pub fn fleet_objective(schedules: &[EvSchedule]) -> f64 {
    schedules.iter().map(|s| s.objective).sum()
}

/// Sums fleet schedules into the envelope offered to the TSO.
pub fn aggregate_boundaries(aggregator_id: &str, schedules: &[EvSchedule]) -> Result<FlexBoundary> {
    let Some(first) = schedules.first() else {
        return Ok(FlexBoundary::zeros(aggregator_id, 0));
    };
    let n = first.e_up.len();
    let mut out = FlexBoundary::zeros(aggregator_id, n);
    for s in schedules {
        for len in [s.e_up.len(), s.e_down.len()] {
            if len != n {
                return Err(Error::MixedGrids { expected: n, found: len });
            }
        }
        for t in 0..n {
            out.upper[t] += s.e_up[t];
            out.lower[t] += s.e_down[t];
        }
    }
    Ok(out)
}

/// Per-step day-ahead purchase of the fleet (non-positive).
pub fn aggregate_day_ahead(schedules: &[EvSchedule], steps: usize) -> Vec<f64> {
    let mut out = vec![0.0; steps];
    for s in schedules {
        for (o, e) in out.iter_mut().zip(&s.e_da) {
            *o += e;
        }
    }
    out
}
