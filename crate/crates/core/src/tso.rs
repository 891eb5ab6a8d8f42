//! Merit-order lists and per-ISP economic dispatch of balancing energy.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AggregatorSpec, Direction, FlexBoundary, PriceSet, RegulationDemand};
use crate::solver::{solve_lp, LinearProgram, Relation, Sense};

const ZERO_SNAP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MolEntry {
    pub aggregator_id: String,
    pub bus_id: u32,
    pub price: f64,
    /// Offered volume per horizon step: non-negative upward, non-positive downward.
    pub bounds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeritOrderList {
    pub direction: Direction,
    pub horizon: Range<usize>,
    pub entries: Vec<MolEntry>,
}

impl MeritOrderList {
    pub fn bound(&self, entry: usize, t: usize) -> f64 {
        self.entries[entry].bounds[t - self.horizon.start]
    }

    /// Writes one row per entry and horizon step, ranked from cheapest.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.into());
        w.write_record(["step", "rank", "aggregator_id", "bus_id", "direction", "price_eur_mwh", "bound_mwh"])
            .map_err(io)?;
        for t in self.horizon.clone() {
            for (rank, e) in self.entries.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    (rank + 1).to_string(),
                    e.aggregator_id.clone(),
                    e.bus_id.to_string(),
                    self.direction.to_string(),
                    e.price.to_string(),
                    e.bounds[t - self.horizon.start].to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Collects the offers of one direction over `horizon`, cheapest first,
/// ties broken by aggregator id.
pub fn build_mol(
    offers: &[(&AggregatorSpec, &FlexBoundary)],
    direction: Direction,
    horizon: Range<usize>,
) -> MeritOrderList {
    let mut entries: Vec<MolEntry> = offers
        .iter()
        .filter(|(agg, _)| agg.direction == direction)
        .map(|(agg, boundary)| {
            let side = match direction {
                Direction::Upward => &boundary.upper,
                Direction::Downward => &boundary.lower,
            };
            MolEntry {
                aggregator_id: agg.id.clone(),
                bus_id: agg.bus_id,
                price: agg.bid_price,
                bounds: side[horizon.clone()].to_vec(),
            }
        })
        .collect();
    entries.sort_by(|a, b| a.price.total_cmp(&b.price).then_with(|| a.aggregator_id.cmp(&b.aggregator_id)));
    MeritOrderList { direction, horizon, entries }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub aggregator_id: String,
    pub bus_id: u32,
    pub price: f64,
    pub energy: f64,
}

/// Activated volumes of one ISP, in MOL order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub step: usize,
    pub up: Vec<Activation>,
    pub down: Vec<Activation>,
    pub reserve_up: f64,
    pub reserve_down: f64,
    pub cost: f64,
}

impl DispatchResult {
    pub fn energy_of(&self, aggregator_id: &str) -> f64 {
        self.up.iter().chain(&self.down).filter(|a| a.aggregator_id == aggregator_id).map(|a| a.energy).sum()
    }
}

/// Minimizes balancing cost at step `t`: aggregator offers at their bids,
/// unlimited reserve at the balancing prices.
pub fn dispatch(
    mol_up: &MeritOrderList,
    mol_down: &MeritOrderList,
    demand: &RegulationDemand,
    reserve_prices: &PriceSet,
    t: usize,
) -> Result<DispatchResult> {
    let mut lp = LinearProgram::new(Sense::Minimize);
    let up_vars: Vec<_> = mol_up
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| lp.add_var(format!("up_{}", e.aggregator_id), e.price, 0.0, mol_up.bound(k, t).max(0.0)))
        .collect();
    let down_vars: Vec<_> = mol_down
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| lp.add_var(format!("down_{}", e.aggregator_id), -e.price, mol_down.bound(k, t).min(0.0), 0.0))
        .collect();
    let res_up = lp.add_var("reserve_up", reserve_prices.up[t], 0.0, f64::INFINITY);
    let res_down = lp.add_var("reserve_down", -reserve_prices.down[t], f64::NEG_INFINITY, 0.0);
    let mut row: Vec<_> = up_vars.iter().map(|&v| (v, 1.0)).collect();
    row.push((res_up, 1.0));
    lp.add_constraint(row, Relation::Eq, demand.up[t]);
    let mut row: Vec<_> = down_vars.iter().map(|&v| (v, 1.0)).collect();
    row.push((res_down, 1.0));
    lp.add_constraint(row, Relation::Eq, demand.down[t]);

    let sol = solve_lp(&lp);
    if !sol.is_optimal() {
        return Err(Error::Solver { context: format!("dispatch at step {t}"), status: sol.status });
    }
    let snap = |x: f64| if x.abs() < ZERO_SNAP { 0.0 } else { x };
    let collect = |mol: &MeritOrderList, vars: &[crate::solver::Var]| -> Vec<Activation> {
        mol.entries
            .iter()
            .zip(vars)
            .map(|(e, &v)| Activation {
                aggregator_id: e.aggregator_id.clone(),
                bus_id: e.bus_id,
                price: e.price,
                energy: snap(sol.value(v)),
            })
            .collect()
    };
    let up = collect(mol_up, &up_vars);
    let down = collect(mol_down, &down_vars);
    // Reserve closes each balance exactly.
    let reserve_up = snap(demand.up[t] - up.iter().map(|a| a.energy).sum::<f64>()).max(0.0);
    let reserve_down = snap(demand.down[t] - down.iter().map(|a| a.energy).sum::<f64>()).min(0.0);
    let cost = up.iter().map(|a| a.energy * a.price).sum::<f64>()
        - down.iter().map(|a| a.energy * a.price).sum::<f64>()
        + reserve_up * reserve_prices.up[t]
        - reserve_down * reserve_prices.down[t];
    Ok(DispatchResult { step: t, up, down, reserve_up, reserve_down, cost })
}
