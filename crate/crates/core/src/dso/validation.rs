//! Iterative boundary reduction: divide the volumes under validation until the
//! grid can be kept below its limits, buying relief where it is needed.
//!
//! Each window step is checked at the two extremes of the dispatch box: every
//! upward unit at its full volume with downward units idle (highest injection),
//! and every downward unit at its full volume with upward units idle (lowest
//! injection). On a radial feeder every branch flow is monotone in the bus
//! injections, so these two cases bound the loading of any dispatch inside the
//! box. The high case can only be relieved by extra withdrawal at downward
//! units, the low case only by extra injection at upward units.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::powerflow::{bus_injections, detect_congestion, CongestionReport, PowerFlowModel, TrafficLight};
use super::relief::{solve_relief_opf, ReliefOffer};
use crate::error::{Error, Result};
use crate::model::{AggregatorSpec, Bus, Direction, DsoConfig, FlexBoundary, Network, TimeGrid};
use crate::tso::DispatchResult;

/// Volumes of one aggregator submitted for validation over a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexVolume {
    pub aggregator_id: String,
    pub bus_id: u32,
    pub direction: Direction,
    pub price: f64,
    /// MWh per window step; non-negative upward, non-positive downward.
    pub energy: Vec<f64>,
}

/// Energy the DSO activates for congestion relief.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliefActivation {
    pub aggregator_id: String,
    pub bus_id: u32,
    pub step: usize,
    /// MWh in the aggregator's direction sign.
    pub energy: f64,
    pub price: f64,
}

impl ReliefActivation {
    /// Payment from the DSO to the aggregator, EUR.
    pub fn payment(&self) -> f64 {
        self.energy.abs() * self.price
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub window: Range<usize>,
    /// Updated boundary per submitted volume, indexed by window step.
    pub boundaries: Vec<FlexBoundary>,
    pub divisions_used: usize,
    pub exhausted: bool,
    pub relief: Vec<ReliefActivation>,
    /// Worst of the two extreme cases per window step after the update.
    pub reports: Vec<CongestionReport>,
}

impl ValidationOutcome {
    pub fn boundary(&self, aggregator_id: &str) -> Option<&FlexBoundary> {
        self.boundaries.iter().find(|b| b.aggregator_id == aggregator_id)
    }

    pub fn relief_cost(&self) -> f64 {
        self.relief.iter().map(ReliefActivation::payment).sum()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Extreme {
    High,
    Low,
}

/// Validates the TSO's dispatch of one window; undispatched units end with a zero boundary.
pub fn validate_hybrid(
    dispatch: &[DispatchResult],
    aggregators: &[AggregatorSpec],
    net: &Network,
    cfg: &DsoConfig,
    grid: &TimeGrid,
) -> Result<ValidationOutcome> {
    let window = match (dispatch.first(), dispatch.last()) {
        (Some(a), Some(b)) => a.step..b.step + 1,
        _ => 0..0,
    };
    let volumes: Vec<FlexVolume> = aggregators
        .iter()
        .map(|agg| FlexVolume {
            aggregator_id: agg.id.clone(),
            bus_id: agg.bus_id,
            direction: agg.direction,
            price: agg.bid_price,
            energy: dispatch.iter().map(|d| d.energy_of(&agg.id)).collect(),
        })
        .collect();
    validate_volumes(&volumes, net, cfg, grid, window)
}

/// Validates full offered envelopes of one window before the TSO sees them.
pub fn validate_dso_managed(
    boundaries: &[(&AggregatorSpec, &FlexBoundary)],
    net: &Network,
    cfg: &DsoConfig,
    grid: &TimeGrid,
    window: Range<usize>,
) -> Result<ValidationOutcome> {
    let volumes: Vec<FlexVolume> = boundaries
        .iter()
        .map(|(agg, b)| FlexVolume {
            aggregator_id: agg.id.clone(),
            bus_id: agg.bus_id,
            direction: agg.direction,
            price: agg.bid_price,
            energy: match agg.direction {
                Direction::Upward => b.upper[window.clone()].to_vec(),
                Direction::Downward => b.lower[window.clone()].to_vec(),
            },
        })
        .collect();
    validate_volumes(&volumes, net, cfg, grid, window)
}

/// Division loop shared by both coordination schemes.
pub fn validate_volumes(
    volumes: &[FlexVolume],
    net: &Network,
    cfg: &DsoConfig,
    grid: &TimeGrid,
    window: Range<usize>,
) -> Result<ValidationOutcome> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let len = window.len();
    for v in volumes {
        if v.energy.len() != len {
            return Err(Error::MixedGrids { expected: len, found: v.energy.len() });
        }
        if !net.has_bus(v.bus_id) {
            return Err(Error::UnknownBus(v.bus_id));
        }
    }
    let model = PowerFlowModel::new(net)?;

    'divisor: for s in 0..=cfg.max_divisions {
        let d = cfg.divisor_sequence[s];
        let scaled: Vec<Vec<f64>> = volumes.iter().map(|v| v.energy.iter().map(|e| e / d).collect()).collect();
        // Relief per volume and window step, MWh.
        let mut relief = vec![vec![0.0; len]; volumes.len()];
        for (k, t) in window.clone().enumerate() {
            for case in [Extreme::High, Extreme::Low] {
                let inj = extreme_injections(net, volumes, &scaled, k, t, case, grid);
                if detect_congestion(&model.solve(&inj), cfg).state == TrafficLight::Green {
                    continue;
                }
                let relieving = match case {
                    Extreme::High => Direction::Downward,
                    Extreme::Low => Direction::Upward,
                };
                let offers: Vec<ReliefOffer> = volumes
                    .iter()
                    .zip(&scaled)
                    .map(|(v, e)| {
                        let cap = if v.direction == relieving { e[k] } else { 0.0 };
                        ReliefOffer {
                            aggregator_id: v.aggregator_id.clone(),
                            bus_id: v.bus_id,
                            price: v.price,
                            max_up: cap.max(0.0),
                            max_down: cap.min(0.0),
                        }
                    })
                    .collect();
                let sol = solve_relief_opf(&snapshot(net, &inj), &offers, cfg, grid, 0)
                    .map_err(|e| e.context(format!("validation at step {t}, divisor {d}")))?;
                if !sol.feasible {
                    log::debug!("step {t}: relief infeasible at divisor {d}");
                    continue 'divisor;
                }
                for (j, v) in volumes.iter().enumerate() {
                    if v.direction == relieving {
                        relief[j][k] = sol.v_up[j] + sol.v_down[j];
                    }
                }
            }
        }

        let updated: Vec<Vec<f64>> = scaled
            .iter()
            .zip(&relief)
            .zip(volumes)
            .map(|((e, r), v)| {
                e.iter()
                    .zip(r)
                    .map(|(&e, &r)| match v.direction {
                        Direction::Upward => (e - r).max(0.0),
                        Direction::Downward => (e - r).min(0.0),
                    })
                    .collect()
            })
            .collect();
        let mut activations = Vec::new();
        for (j, v) in volumes.iter().enumerate() {
            for (k, t) in window.clone().enumerate() {
                if relief[j][k] != 0.0 {
                    activations.push(ReliefActivation {
                        aggregator_id: v.aggregator_id.clone(),
                        bus_id: v.bus_id,
                        step: t,
                        energy: relief[j][k],
                        price: v.price,
                    });
                }
            }
        }
        let reports = final_reports(net, &model, volumes, &updated, &relief, cfg, grid, &window);
        return Ok(ValidationOutcome {
            boundaries: boundaries_from(volumes, updated),
            window,
            divisions_used: s,
            exhausted: false,
            relief: activations,
            reports,
        });
    }

    log::info!("validation of steps {window:?} exhausted {} divisions", cfg.max_divisions);
    let zeros = vec![vec![0.0; len]; volumes.len()];
    let reports = final_reports(net, &model, volumes, &zeros, &zeros, cfg, grid, &window);
    Ok(ValidationOutcome {
        boundaries: boundaries_from(volumes, zeros),
        window,
        divisions_used: cfg.max_divisions,
        exhausted: true,
        relief: Vec::new(),
        reports,
    })
}

/// Bus injections (MW) at window step `k` with the given volumes at one extreme of the box.
fn extreme_injections(
    net: &Network,
    volumes: &[FlexVolume],
    energy: &[Vec<f64>],
    k: usize,
    t: usize,
    case: Extreme,
    grid: &TimeGrid,
) -> Vec<f64> {
    let mut inj = bus_injections(net, t);
    for (v, e) in volumes.iter().zip(energy) {
        let active =
            matches!((case, v.direction), (Extreme::High, Direction::Upward) | (Extreme::Low, Direction::Downward));
        if active {
            let i = net.bus_index(v.bus_id).expect("bus checked on entry");
            inj[i] += e[k] / grid.delta_t;
        }
    }
    inj
}

/// Loadings at both extremes of the updated box, relief activated, keeping the worse case.
#[allow(clippy::too_many_arguments)]
fn final_reports(
    net: &Network,
    model: &PowerFlowModel,
    volumes: &[FlexVolume],
    updated: &[Vec<f64>],
    relief: &[Vec<f64>],
    cfg: &DsoConfig,
    grid: &TimeGrid,
    window: &Range<usize>,
) -> Vec<CongestionReport> {
    window
        .clone()
        .enumerate()
        .map(|(k, t)| {
            [Extreme::High, Extreme::Low]
                .into_iter()
                .map(|case| {
                    let mut inj = extreme_injections(net, volumes, updated, k, t, case, grid);
                    for (v, r) in volumes.iter().zip(relief) {
                        let i = net.bus_index(v.bus_id).expect("bus checked on entry");
                        inj[i] += r[k] / grid.delta_t;
                    }
                    detect_congestion(&model.solve(&inj), cfg)
                })
                .max_by(|a, b| a.max_loading.total_cmp(&b.max_loading))
                .expect("two cases")
        })
        .collect()
}

fn boundaries_from(volumes: &[FlexVolume], energy: Vec<Vec<f64>>) -> Vec<FlexBoundary> {
    volumes
        .iter()
        .zip(energy)
        .map(|(v, e)| {
            let zeros = vec![0.0; e.len()];
            match v.direction {
                Direction::Upward => FlexBoundary { aggregator_id: v.aggregator_id.clone(), upper: e, lower: zeros },
                Direction::Downward => FlexBoundary { aggregator_id: v.aggregator_id.clone(), upper: zeros, lower: e },
            }
        })
        .collect()
}

/// Single-step copy of the network carrying the given injections as generation.
fn snapshot(net: &Network, injections: &[f64]) -> Network {
    Network {
        base_mva: net.base_mva,
        buses: net
            .buses
            .iter()
            .zip(injections)
            .map(|(b, &p)| Bus { id: b.id, gen_mw: vec![p], demand_mw: vec![0.0] })
            .collect(),
        branches: net.branches.clone(),
        slack_bus: net.slack_bus,
    }
}
