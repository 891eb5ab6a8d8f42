//! Least-cost congestion relief on the linearized network.

use serde::{Deserialize, Serialize};

use super::powerflow::{bus_injections, line_susceptance};
use crate::error::{Error, Result};
use crate::model::{DsoConfig, Network, TimeGrid};
use crate::solver::{solve_lp, LinearProgram, Relation, Sense, Status, Var};

/// Flexibility the DSO may activate at one bus for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliefOffer {
    pub aggregator_id: String,
    pub bus_id: u32,
    /// Relief price, EUR/MWh.
    pub price: f64,
    /// Largest extra injection, MWh (non-negative).
    pub max_up: f64,
    /// Largest extra withdrawal, MWh (non-positive).
    pub max_down: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliefSolution {
    pub feasible: bool,
    /// Activated injection per offer, MWh (non-negative).
    pub v_up: Vec<f64>,
    /// Activated withdrawal per offer, MWh (non-positive).
    pub v_down: Vec<f64>,
    /// EUR.
    pub cost: f64,
}

impl ReliefSolution {
    fn infeasible(n: usize) -> Self {
        Self { feasible: false, v_up: vec![0.0; n], v_down: vec![0.0; n], cost: 0.0 }
    }
}

/// Minimizes relief cost at step `t` so that every branch flow stays within
/// `min(power_factor, loading_threshold) * rated_mva`.
pub fn solve_relief_opf(
    net: &Network,
    offers: &[ReliefOffer],
    cfg: &DsoConfig,
    grid: &TimeGrid,
    t: usize,
) -> Result<ReliefSolution> {
    let dt = grid.delta_t;
    let slack = net.bus_index(net.slack_bus).ok_or(Error::UnknownBus(net.slack_bus))?;
    let mut lp = LinearProgram::new(Sense::Minimize);
    let theta: Vec<Var> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (lo, hi) = if i == slack { (0.0, 0.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
            lp.add_var(format!("theta_{}", b.id), 0.0, lo, hi)
        })
        .collect();
    let external = lp.add_var("external", 0.0, f64::NEG_INFINITY, f64::INFINITY);
    let mut offer_bus = Vec::with_capacity(offers.len());
    let mut v_up = Vec::with_capacity(offers.len());
    let mut v_down = Vec::with_capacity(offers.len());
    for o in offers {
        offer_bus.push(net.bus_index(o.bus_id).ok_or(Error::UnknownBus(o.bus_id))?);
        v_up.push(lp.add_var(format!("v_up_{}", o.aggregator_id), o.price * dt, 0.0, o.max_up.max(0.0) / dt));
        v_down.push(lp.add_var(format!("v_down_{}", o.aggregator_id), -o.price * dt, o.max_down.min(0.0) / dt, 0.0));
    }

    let mut balance: Vec<Vec<(Var, f64)>> = vec![Vec::new(); net.buses.len()];
    let limit = cfg.flow_limit_fraction();
    for br in &net.branches {
        let f = net.bus_index(br.from_bus).ok_or(Error::UnknownBus(br.from_bus))?;
        let to = net.bus_index(br.to_bus).ok_or(Error::UnknownBus(br.to_bus))?;
        let w = net.base_mva * line_susceptance(br.r_pu, br.x_pu)?;
        let flow = vec![(theta[f], w), (theta[to], -w)];
        balance[f].extend(flow.iter().copied());
        balance[to].extend(flow.iter().map(|&(v, c)| (v, -c)));
        lp.add_constraint(flow.clone(), Relation::Le, limit * br.rated_mva);
        lp.add_constraint(flow, Relation::Ge, -limit * br.rated_mva);
    }
    balance[slack].push((external, -1.0));
    for (k, &i) in offer_bus.iter().enumerate() {
        balance[i].push((v_up[k], -1.0));
        balance[i].push((v_down[k], -1.0));
    }
    let injections = bus_injections(net, t);
    for (terms, inj) in balance.into_iter().zip(injections) {
        lp.add_constraint(terms, Relation::Eq, inj);
    }

    let sol = solve_lp(&lp);
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Ok(ReliefSolution::infeasible(offers.len())),
        status => return Err(Error::Solver { context: format!("relief OPF at step {t}"), status }),
    }
    let snap = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
    let up: Vec<f64> = v_up.iter().map(|&v| snap(sol.value(v) * dt)).collect();
    let down: Vec<f64> = v_down.iter().map(|&v| snap(sol.value(v) * dt)).collect();
    let cost = offers.iter().enumerate().map(|(k, o)| (up[k] - down[k]) * o.price).sum();
    Ok(ReliefSolution { feasible: true, v_up: up, v_down: down, cost })
}
