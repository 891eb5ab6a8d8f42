//! End-to-end runs of the hybrid-managed and DSO-managed coordination schemes
//! and the resulting money flows.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::aggregator::{aggregate_boundaries, aggregate_day_ahead, fleet_objective, optimize_evs};
use crate::dso::{
    bus_injections, detect_congestion, validate_dso_managed, validate_hybrid, PowerFlowModel, ReliefActivation,
    TrafficLight, ValidationOutcome,
};
use crate::error::{Error, Result};
use crate::model::{
    validate_ev, validate_network, AggregatorSpec, Direction, DsoConfig, EvSchedule, FlexBoundary, Network, PriceSet,
    RegulationDemand, TimeGrid, Violation,
};
use crate::tso::{build_mol, dispatch, DispatchResult};

/// Steps per TSO/DSO exchange window.
pub const WINDOW_STEPS: usize = 2;
/// Accounting tolerance for ledger reconciliation, EUR.
pub const LEDGER_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Hybrid,
    DsoManaged,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Hybrid => "hybrid",
            Scheme::DsoManaged => "dso-managed",
        })
    }
}

/// Price basis for the aggregator's balancing revenue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevenueBasis {
    /// Realized objective terms: activated energy at the balancing prices.
    #[default]
    BalancingPrice,
    /// Activated energy at the aggregator's own bid.
    PayAsBid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementOptions {
    pub revenue_basis: RevenueBasis,
    pub include_congestion_payments: bool,
}

impl Default for SettlementOptions {
    fn default() -> Self {
        Self { revenue_basis: RevenueBasis::BalancingPrice, include_congestion_payments: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub grid: TimeGrid,
    pub network: Network,
    pub aggregators: Vec<AggregatorSpec>,
    pub prices: PriceSet,
    pub regulation: RegulationDemand,
    pub dso: DsoConfig,
    pub scheme: Scheme,
    #[serde(default)]
    pub settlement: SettlementOptions,
    pub seed: u64,
}

impl Scenario {
    /// Every model-level violation of the scenario, across all components.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = self.grid.validate();
        v.extend(validate_network(&self.network));
        if self.network.steps() != self.grid.steps {
            v.push(Violation::new(
                "network",
                "profiles",
                format!("profiles cover {} steps, grid has {}", self.network.steps(), self.grid.steps),
            ));
        }
        v.extend(self.prices.validate(&self.grid));
        v.extend(self.regulation.validate(&self.grid));
        v.extend(self.dso.validate());
        let mut ids = std::collections::BTreeSet::new();
        for agg in &self.aggregators {
            if !ids.insert(agg.id.as_str()) {
                v.push(Violation::new(&agg.id, "id", "duplicate aggregator id"));
            }
            if !self.network.has_bus(agg.bus_id) {
                v.push(Violation::new(&agg.id, "bus_id", "bus does not exist in the network"));
            }
            if agg.fleet.is_empty() {
                v.push(Violation::new(&agg.id, "fleet", "fleet is empty"));
            }
            if !agg.bid_price.is_finite() {
                v.push(Violation::new(&agg.id, "bid_price", "must be finite"));
            }
            for ev in &agg.fleet {
                v.extend(validate_ev(ev, &self.grid));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.grid.steps).step_by(WINDOW_STEPS).map(|s| s..(s + WINDOW_STEPS).min(self.grid.steps))
    }
}

/// Volumes of one aggregator at one step, MWh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub step: usize,
    pub aggregator_id: String,
    pub e_up: f64,
    pub e_down: f64,
    pub e_da: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadingRecord {
    pub step: usize,
    pub branch_id: usize,
    pub loading: f64,
    pub state: TrafficLight,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VolumeTotals {
    /// Σ e_up, MWh.
    pub up: f64,
    /// Σ |e_down|, MWh.
    pub down: f64,
    /// Σ |e_da|, MWh.
    pub da: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorSettlement {
    pub aggregator_id: String,
    pub direction: Direction,
    pub bid_price: f64,
    /// Activated balancing energy, MWh (signed).
    pub activated: f64,
    /// Balancing revenue on the configured basis, EUR.
    pub market_revenue: f64,
    /// Receipts at the bid price (what the TSO pays), EUR.
    pub bid_receipts: f64,
    /// Deviation fees owed to the BRP, EUR (non-negative).
    pub brp_fees: f64,
    /// Day-ahead purchase term, EUR.
    pub da_benefit: f64,
    /// Relief payments from the DSO, EUR.
    pub congestion_payment: f64,
    pub benefit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub start: usize,
    pub divisions_used: usize,
    pub exhausted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub scenario: String,
    pub scheme: Scheme,
    pub tso_cost: f64,
    pub reserve_cost: f64,
    pub dso_congestion_cost: f64,
    pub aggregator_benefit: f64,
    /// Sum of the aggregators' optimal planning objectives.
    pub planned_objective: f64,
    pub planned: VolumeTotals,
    pub dispatched: VolumeTotals,
    pub aggregators: Vec<AggregatorSettlement>,
    pub relief: Vec<ReliefActivation>,
    pub windows: Vec<WindowRecord>,
    pub volumes: Vec<VolumeRecord>,
    pub loadings: Vec<LoadingRecord>,
}

/// Everything the aggregators decide before the market exchange.
#[derive(Clone, Debug)]
pub struct AggregatorPlans {
    pub schedules: Vec<Vec<EvSchedule>>,
    /// Offered boundary per aggregator, own direction only.
    pub offers: Vec<FlexBoundary>,
    /// Fleet day-ahead purchase per aggregator and step.
    pub day_ahead: Vec<Vec<f64>>,
}

impl AggregatorPlans {
    pub fn objective(&self) -> f64 {
        self.schedules.iter().map(|s| fleet_objective(s)).sum()
    }

    pub fn totals(&self) -> VolumeTotals {
        let mut t = VolumeTotals::default();
        for s in self.schedules.iter().flatten() {
            t.up += s.e_up.iter().sum::<f64>();
            t.down -= s.e_down.iter().sum::<f64>();
            t.da -= s.e_da.iter().sum::<f64>();
        }
        t
    }
}

/// Optimizes every fleet of the scenario and derives the offers.
pub fn plan_aggregators(s: &Scenario) -> Result<AggregatorPlans> {
    let all: Vec<_> = s.aggregators.iter().flat_map(|a| a.fleet.iter().cloned()).collect();
    let mut solved = optimize_evs(&all, &s.prices, &s.grid)?.into_iter();
    let mut plans = AggregatorPlans { schedules: Vec::new(), offers: Vec::new(), day_ahead: Vec::new() };
    for agg in &s.aggregators {
        let schedules: Vec<EvSchedule> = solved.by_ref().take(agg.fleet.len()).collect();
        let boundary = aggregate_boundaries(&agg.id, &schedules)?;
        plans.offers.push(boundary.offered(agg.direction));
        plans.day_ahead.push(aggregate_day_ahead(&schedules, s.grid.steps));
        plans.schedules.push(schedules);
    }
    Ok(plans)
}

pub fn run_hybrid(s: &Scenario) -> Result<SettlementReport> {
    run_scheme(s, Scheme::Hybrid)
}

pub fn run_dso_managed(s: &Scenario) -> Result<SettlementReport> {
    run_scheme(s, Scheme::DsoManaged)
}

/// Runs the scheme stored in the scenario.
pub fn run(s: &Scenario) -> Result<SettlementReport> {
    run_scheme(s, s.scheme)
}

pub fn run_scheme(s: &Scenario, scheme: Scheme) -> Result<SettlementReport> {
    s.validate()?;
    let plans = plan_aggregators(s)?;
    run_with_plans(s, scheme, &plans)
}

/// Market exchange and settlement for already optimized fleets.
pub fn run_with_plans(s: &Scenario, scheme: Scheme, plans: &AggregatorPlans) -> Result<SettlementReport> {
    let mut dispatches = Vec::with_capacity(s.grid.steps);
    let mut relief = Vec::new();
    let mut windows = Vec::new();
    for window in s.windows() {
        let ctx = |e: Error| e.context(format!("{scheme} window starting at step {}", window.start));
        let (outcome, final_dispatch) = match scheme {
            Scheme::Hybrid => {
                let first = dispatch_window(s, &plans.offers, window.clone()).map_err(ctx)?;
                let outcome = validate_hybrid(&first, &s.aggregators, &s.network, &s.dso, &s.grid).map_err(ctx)?;
                let bounds = widen(&outcome, s.grid.steps);
                (outcome, dispatch_window(s, &bounds, window.clone()).map_err(ctx)?)
            }
            Scheme::DsoManaged => {
                let offers: Vec<_> = s.aggregators.iter().zip(&plans.offers).collect();
                let outcome =
                    validate_dso_managed(&offers, &s.network, &s.dso, &s.grid, window.clone()).map_err(ctx)?;
                let bounds = widen(&outcome, s.grid.steps);
                (outcome, dispatch_window(s, &bounds, window.clone()).map_err(ctx)?)
            }
        };
        windows.push(WindowRecord {
            start: window.start,
            divisions_used: outcome.divisions_used,
            exhausted: outcome.exhausted,
        });
        relief.extend(outcome.relief);
        dispatches.extend(final_dispatch);
    }

    let settlement = settle(&s.aggregators, &s.prices, &dispatches, &relief, &plans.day_ahead, &s.settlement)?;
    let loadings = realized_loadings(s, &dispatches, &relief)?;
    let mut dispatched = VolumeTotals::default();
    for r in &settlement.volumes {
        dispatched.up += r.e_up;
        dispatched.down -= r.e_down;
        dispatched.da -= r.e_da;
    }
    Ok(SettlementReport {
        scenario: s.name.clone(),
        scheme,
        tso_cost: settlement.tso_cost,
        reserve_cost: settlement.reserve_cost,
        dso_congestion_cost: settlement.dso_congestion_cost,
        aggregator_benefit: settlement.aggregators.iter().map(|a| a.benefit).sum(),
        planned_objective: plans.objective(),
        planned: plans.totals(),
        dispatched,
        aggregators: settlement.aggregators,
        relief,
        windows,
        volumes: settlement.volumes,
        loadings,
    })
}

/// Window-local boundaries laid out on the full horizon.
fn widen(outcome: &ValidationOutcome, steps: usize) -> Vec<FlexBoundary> {
    outcome
        .boundaries
        .iter()
        .map(|b| {
            let mut full = FlexBoundary::zeros(b.aggregator_id.clone(), steps);
            full.upper[outcome.window.clone()].copy_from_slice(&b.upper);
            full.lower[outcome.window.clone()].copy_from_slice(&b.lower);
            full
        })
        .collect()
}

fn dispatch_window(s: &Scenario, bounds: &[FlexBoundary], window: Range<usize>) -> Result<Vec<DispatchResult>> {
    let offers: Vec<_> = s.aggregators.iter().zip(bounds).collect();
    let up = build_mol(&offers, Direction::Upward, window.clone());
    let down = build_mol(&offers, Direction::Downward, window.clone());
    window.map(|t| dispatch(&up, &down, &s.regulation, &s.prices, t)).collect()
}

/// Loadings with the final dispatch and relief activations applied.
fn realized_loadings(
    s: &Scenario,
    dispatches: &[DispatchResult],
    relief: &[ReliefActivation],
) -> Result<Vec<LoadingRecord>> {
    let model = PowerFlowModel::new(&s.network)?;
    let mut out = Vec::new();
    for d in dispatches {
        let mut inj = bus_injections(&s.network, d.step);
        for a in d.up.iter().chain(&d.down) {
            let i = s.network.bus_index(a.bus_id).ok_or(Error::UnknownBus(a.bus_id))?;
            inj[i] += a.energy / s.grid.delta_t;
        }
        for r in relief.iter().filter(|r| r.step == d.step) {
            let i = s.network.bus_index(r.bus_id).ok_or(Error::UnknownBus(r.bus_id))?;
            inj[i] += r.energy / s.grid.delta_t;
        }
        let pf = model.solve(&inj);
        let report = detect_congestion(&pf, &s.dso);
        for (k, &loading) in pf.loading.iter().enumerate() {
            let state =
                if report.overloaded.iter().any(|&(b, _)| b == k) { TrafficLight::Yellow } else { TrafficLight::Green };
            out.push(LoadingRecord { step: d.step, branch_id: k, loading, state });
        }
    }
    Ok(out)
}

/// Money flows of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub tso_cost: f64,
    pub reserve_cost: f64,
    pub dso_congestion_cost: f64,
    pub aggregators: Vec<AggregatorSettlement>,
    pub volumes: Vec<VolumeRecord>,
}

/// Settles activated volumes: the TSO pays each activation at its bid and the
/// reserve at the balancing price, the DSO pays relief at the bid, every
/// activated MWh owes the BRP fee.
pub fn settle(
    aggregators: &[AggregatorSpec],
    prices: &PriceSet,
    dispatches: &[DispatchResult],
    relief: &[ReliefActivation],
    day_ahead: &[Vec<f64>],
    options: &SettlementOptions,
) -> Result<Settlement> {
    let steps = prices.da.len();
    let index: BTreeMap<&str, usize> = aggregators.iter().enumerate().map(|(i, a)| (a.id.as_str(), i)).collect();
    let mut energy = vec![vec![0.0; steps]; aggregators.len()];
    let mut tso_cost = 0.0;
    let mut reserve_cost = 0.0;
    let mut tso_paid_to_aggregators = 0.0;
    for d in dispatches {
        for a in d.up.iter().chain(&d.down) {
            let i = *index.get(a.aggregator_id.as_str()).ok_or_else(|| {
                Error::LedgerMismatch(format!("dispatch names unknown aggregator {}", a.aggregator_id))
            })?;
            energy[i][d.step] += a.energy;
            tso_paid_to_aggregators += a.energy.abs() * a.price;
        }
        let reserve = d.reserve_up * prices.up[d.step] - d.reserve_down * prices.down[d.step];
        reserve_cost += reserve;
        tso_cost += d.cost;
    }

    let mut dso_congestion_cost = 0.0;
    let mut congestion = vec![0.0; aggregators.len()];
    for r in relief {
        let i = *index
            .get(r.aggregator_id.as_str())
            .ok_or_else(|| Error::LedgerMismatch(format!("relief names unknown aggregator {}", r.aggregator_id)))?;
        dso_congestion_cost += r.payment();
        congestion[i] += r.payment();
    }

    let mut rows = Vec::with_capacity(aggregators.len());
    let mut volumes = Vec::with_capacity(aggregators.len() * steps);
    for (i, agg) in aggregators.iter().enumerate() {
        let da = day_ahead.get(i).cloned().unwrap_or_else(|| vec![0.0; steps]);
        let mut row = AggregatorSettlement {
            aggregator_id: agg.id.clone(),
            direction: agg.direction,
            bid_price: agg.bid_price,
            activated: 0.0,
            market_revenue: 0.0,
            bid_receipts: 0.0,
            brp_fees: 0.0,
            da_benefit: 0.0,
            congestion_payment: congestion[i],
            benefit: 0.0,
        };
        for t in 0..steps {
            let e = energy[i][t];
            let (e_up, e_down) = match agg.direction {
                Direction::Upward => (e, 0.0),
                Direction::Downward => (0.0, e),
            };
            row.activated += e;
            row.bid_receipts += e.abs() * agg.bid_price;
            row.market_revenue += match options.revenue_basis {
                RevenueBasis::BalancingPrice => e_up * prices.up[t] + e_down * prices.down[t],
                RevenueBasis::PayAsBid => e.abs() * agg.bid_price,
            };
            row.brp_fees += e.abs() * prices.brp_fee;
            row.da_benefit += da[t] * (prices.da[t] - prices.consumer_price);
            volumes.push(VolumeRecord { step: t, aggregator_id: agg.id.clone(), e_up, e_down, e_da: da[t] });
        }
        row.benefit = row.market_revenue - row.brp_fees + row.da_benefit;
        if options.include_congestion_payments {
            row.benefit += row.congestion_payment;
        }
        rows.push(row);
    }
    volumes.sort_by_key(|r| r.step);

    let receipts: f64 = rows.iter().map(|r| r.bid_receipts).sum();
    let scale = 1.0 + tso_cost.abs() + dso_congestion_cost.abs();
    if (tso_cost - reserve_cost - receipts).abs() > LEDGER_TOL * scale
        || (tso_paid_to_aggregators - receipts).abs() > LEDGER_TOL * scale
    {
        return Err(Error::LedgerMismatch(format!(
            "TSO pays {tso_paid_to_aggregators} for activations but aggregators receive {receipts}"
        )));
    }
    let paid: f64 = rows.iter().map(|r| r.congestion_payment).sum();
    if (paid - dso_congestion_cost).abs() > LEDGER_TOL * scale {
        return Err(Error::LedgerMismatch(format!(
            "DSO pays {dso_congestion_cost} for relief but aggregators receive {paid}"
        )));
    }
    Ok(Settlement { tso_cost, reserve_cost, dso_congestion_cost, aggregators: rows, volumes })
}
