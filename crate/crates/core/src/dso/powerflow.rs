//! Linearized (DC) power flow and traffic-light congestion detection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::model::{DsoConfig, Network, TimeGrid};

/// Largest nodal balance residual (MW) accepted from a power-flow solve.
pub const BALANCE_TOL: f64 = 1e-8;

/// Per-bus energy series keyed by bus id, MWh per step.
pub type BusSeries = BTreeMap<u32, Vec<f64>>;

/// Branch susceptance from series resistance and reactance: X / (R² + X²).
pub fn line_susceptance(r_pu: f64, x_pu: f64) -> Result<f64> {
    let z2 = r_pu * r_pu + x_pu * x_pu;
    if z2 == 0.0 {
        return Err(Error::ZeroImpedance);
    }
    Ok(x_pu / z2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowResult {
    /// Voltage angle per bus in network order, radians.
    pub theta: Vec<f64>,
    /// Flow per branch from `from_bus` to `to_bus`, MW.
    pub flow: Vec<f64>,
    /// |flow| / rated_mva per branch.
    pub loading: Vec<f64>,
    /// Injection absorbed at the slack bus, MW.
    pub slack_injection: f64,
}

impl PowerFlowResult {
    pub fn max_loading(&self) -> f64 {
        self.loading.iter().fold(0.0, |m, &l| m.max(l))
    }
}

/// Reduced susceptance system of a network, factored once and reused per step.
#[derive(Clone, Debug)]
pub struct PowerFlowModel {
    base_mva: f64,
    slack: usize,
    endpoints: Vec<(usize, usize)>,
    susceptance: Vec<f64>,
    rated: Vec<f64>,
    /// Position of each non-slack bus in the reduced system.
    reduced: Vec<Option<usize>>,
    lu: Option<Lu>,
}

impl PowerFlowModel {
    pub fn new(net: &Network) -> Result<Self> {
        let slack = net.bus_index(net.slack_bus).ok_or(Error::UnknownBus(net.slack_bus))?;
        let nb = net.buses.len();
        let mut endpoints = Vec::with_capacity(net.branches.len());
        let mut susceptance = Vec::with_capacity(net.branches.len());
        for br in &net.branches {
            let f = net.bus_index(br.from_bus).ok_or(Error::UnknownBus(br.from_bus))?;
            let t = net.bus_index(br.to_bus).ok_or(Error::UnknownBus(br.to_bus))?;
            endpoints.push((f, t));
            susceptance.push(line_susceptance(br.r_pu, br.x_pu)?);
        }
        let mut reduced = vec![None; nb];
        let mut k = 0;
        for (i, slot) in reduced.iter_mut().enumerate() {
            if i != slack {
                *slot = Some(k);
                k += 1;
            }
        }
        let m = nb - 1;
        let lu = if m == 0 {
            None
        } else {
            let mut a = vec![0.0; m * m];
            for (&(f, t), &b) in endpoints.iter().zip(&susceptance) {
                let w = net.base_mva * b;
                for (x, y) in [(f, t), (t, f)] {
                    if let Some(i) = reduced[x] {
                        a[i * m + i] += w;
                        if let Some(j) = reduced[y] {
                            a[i * m + j] -= w;
                        }
                    }
                }
            }
            Some(Lu::factor(a, m, 1e-12).ok_or(Error::SingularSystem)?)
        };
        Ok(Self {
            base_mva: net.base_mva,
            slack,
            endpoints,
            susceptance,
            rated: net.branches.iter().map(|b| b.rated_mva).collect(),
            reduced,
            lu,
        })
    }

    /// Solves for angles and flows given net injections per bus (MW, network order).
    /// Whatever the other buses do not balance is absorbed at the slack.
    pub fn solve(&self, injections: &[f64]) -> PowerFlowResult {
        let nb = self.reduced.len();
        assert_eq!(injections.len(), nb, "one injection per bus");
        let mut theta = vec![0.0; nb];
        if let Some(lu) = &self.lu {
            let rhs: Vec<f64> = (0..nb).filter(|&i| i != self.slack).map(|i| injections[i]).collect();
            let sol = lu.solve(&rhs);
            for (i, r) in self.reduced.iter().enumerate() {
                if let Some(k) = r {
                    theta[i] = sol[*k];
                }
            }
        }
        let flow: Vec<f64> = self
            .endpoints
            .iter()
            .zip(&self.susceptance)
            .map(|(&(f, t), &b)| self.base_mva * b * (theta[f] - theta[t]))
            .collect();
        let loading = flow.iter().zip(&self.rated).map(|(p, r)| p.abs() / r).collect();
        let others: f64 = (0..nb).filter(|&i| i != self.slack).map(|i| injections[i]).sum();
        let result = PowerFlowResult { theta, flow, loading, slack_injection: -others };
        debug_assert!(self.balance_residual(&result, injections) <= BALANCE_TOL * (1.0 + others.abs()));
        result
    }

    /// Largest nodal mismatch between injections and net outflow.
    pub fn balance_residual(&self, pf: &PowerFlowResult, injections: &[f64]) -> f64 {
        let mut net_out = vec![0.0; self.reduced.len()];
        for (&(f, t), &p) in self.endpoints.iter().zip(&pf.flow) {
            net_out[f] += p;
            net_out[t] -= p;
        }
        net_out
            .iter()
            .enumerate()
            .map(|(i, &out)| {
                let inj = if i == self.slack { pf.slack_injection } else { injections[i] };
                (out - inj).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Flow from bus index `x` to bus index `y` summed over parallel branches; antisymmetric.
    pub fn flow_between(&self, pf: &PowerFlowResult, x: usize, y: usize) -> f64 {
        self.endpoints
            .iter()
            .zip(&pf.flow)
            .map(|(&(f, t), &p)| {
                if (f, t) == (x, y) {
                    p
                } else if (f, t) == (y, x) {
                    -p
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Net injections (generation minus demand) per bus at step `t`, MW.
pub fn bus_injections(net: &Network, t: usize) -> Vec<f64> {
    net.buses.iter().map(|b| b.gen_mw[t] - b.demand_mw[t]).collect()
}

/// One-shot DC power flow; prefer [`PowerFlowModel`] when solving many steps.
pub fn dc_power_flow(net: &Network, injections: &[f64]) -> Result<PowerFlowResult> {
    Ok(PowerFlowModel::new(net)?.solve(injections))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrafficLight {
    Green,
    Yellow,
}

impl std::fmt::Display for TrafficLight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrafficLight::Green => "green",
            TrafficLight::Yellow => "yellow",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongestionReport {
    pub state: TrafficLight,
    /// Branch index and loading of every branch above the threshold.
    pub overloaded: Vec<(usize, f64)>,
    pub max_loading: f64,
}

/// Yellow iff some loading strictly exceeds the threshold.
pub fn detect_congestion(pf: &PowerFlowResult, cfg: &DsoConfig) -> CongestionReport {
    let overloaded: Vec<(usize, f64)> =
        pf.loading.iter().enumerate().filter(|&(_, &l)| l > cfg.loading_threshold).map(|(k, &l)| (k, l)).collect();
    CongestionReport {
        state: if overloaded.is_empty() { TrafficLight::Green } else { TrafficLight::Yellow },
        overloaded,
        max_loading: pf.max_loading(),
    }
}

/// Adds flexibility activations to the bus profiles: upward energy raises
/// generation, downward (non-positive) energy raises demand.
pub fn apply_flexibility(net: &Network, up: &BusSeries, down: &BusSeries, grid: &TimeGrid) -> Result<Network> {
    let mut out = net.clone();
    for (series, is_up) in [(up, true), (down, false)] {
        for (&bus, energy) in series {
            let idx = out.bus_index(bus).ok_or(Error::UnknownBus(bus))?;
            let b = &mut out.buses[idx];
            for (t, &e) in energy.iter().enumerate() {
                if is_up {
                    b.gen_mw[t] += e / grid.delta_t;
                } else {
                    b.demand_mw[t] -= e / grid.delta_t;
                }
            }
        }
    }
    Ok(out)
}
