//! Domain types shared across the simulation.
//!
//! Sign convention is grid injection: upward energy is positive (the EV
//! discharges into the grid), downward and day-ahead energy are negative
//! (withdrawal). Energies are MWh, powers MW, prices EUR/MWh.

// Negated comparisons also reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

const EPS: f64 = 1e-12;

/// A field-level invariant violation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub subject: String,
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(subject: impl Into<String>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { subject: subject.into(), field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}: {}", self.subject, self.field, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub steps: usize,
    /// Hours per step.
    pub delta_t: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { steps: 96, delta_t: 0.25 }
    }
}

impl TimeGrid {
    pub fn new(steps: usize, delta_t: f64) -> Self {
        Self { steps, delta_t }
    }

    pub fn is_daily(&self) -> bool {
        (self.steps as f64 * self.delta_t - 24.0).abs() < 1e-9
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.steps < 2 {
            v.push(Violation::new("time_grid", "steps", "at least 2 steps are required"));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            v.push(Violation::new("time_grid", "delta_t", "step length must be positive"));
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    /// Last step at home before leaving; SOC is full here.
    pub depart_step: usize,
    /// Step at which the EV is back; energy drops linearly over the steps in between.
    pub arrive_step: usize,
    pub energy_mwh: f64,
}

impl Trip {
    pub fn length(&self) -> usize {
        self.arrive_step.saturating_sub(self.depart_step)
    }

    /// Whether `t` lies strictly after departure and up to arrival.
    pub fn is_away(&self, t: usize) -> bool {
        t > self.depart_step && t <= self.arrive_step
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvSpec {
    pub id: String,
    pub capacity_mwh: f64,
    pub charge_power_min_mw: f64,
    pub charge_power_max_mw: f64,
    pub discharge_power_min_mw: f64,
    pub discharge_power_max_mw: f64,
    pub trip: Option<Trip>,
    #[serde(default = "default_soc_min")]
    pub soc_min_frac: f64,
    #[serde(default = "default_soc_max")]
    pub soc_max_frac: f64,
}

fn default_soc_min() -> f64 {
    0.2
}

fn default_soc_max() -> f64 {
    1.0
}

impl EvSpec {
    pub fn soc_min(&self) -> f64 {
        self.soc_min_frac * self.capacity_mwh
    }

    /// The "fully charged" level the schedule returns to.
    pub fn soc_full(&self) -> f64 {
        self.soc_max_frac * self.capacity_mwh
    }

    /// Everything but the identifier; two EVs with equal physics get equal schedules.
    pub(crate) fn physics_key(&self) -> String {
        let mut clone = self.clone();
        clone.id.clear();
        format!("{clone:?}")
    }
}

/// Checks every [`EvSpec`] invariant against `grid`; empty means valid.
pub fn validate_ev(spec: &EvSpec, grid: &TimeGrid) -> Vec<Violation> {
    let mut v = Vec::new();
    let id = spec.id.as_str();
    let mut push = |field: &str, msg: &str| v.push(Violation::new(id, field, msg));

    if !(spec.capacity_mwh > 0.0 && spec.capacity_mwh.is_finite()) {
        push("capacity_mwh", "capacity must be positive");
    }
    for (field, val) in [
        ("charge_power_min_mw", spec.charge_power_min_mw),
        ("charge_power_max_mw", spec.charge_power_max_mw),
        ("discharge_power_min_mw", spec.discharge_power_min_mw),
        ("discharge_power_max_mw", spec.discharge_power_max_mw),
    ] {
        if !(val >= 0.0 && val.is_finite()) {
            push(field, "power limit must be a non-negative number");
        }
    }
    if spec.charge_power_min_mw > spec.charge_power_max_mw {
        push("charge_power_min_mw", "charge minimum exceeds maximum");
    }
    if spec.discharge_power_min_mw > spec.discharge_power_max_mw {
        push("discharge_power_min_mw", "discharge minimum exceeds maximum");
    }
    if !(0.0..=1.0).contains(&spec.soc_min_frac) {
        push("soc_min_frac", "must lie in [0, 1]");
    }
    if !(0.0..=1.0).contains(&spec.soc_max_frac) {
        push("soc_max_frac", "must lie in [0, 1]");
    }
    if spec.soc_min_frac > spec.soc_max_frac {
        push("soc_min_frac", "minimum SOC exceeds maximum SOC");
    }
    if let Some(trip) = &spec.trip {
        if trip.arrive_step <= trip.depart_step {
            push("arrive_step", "trip length must be ≥ 1");
        }
        if grid.steps > 0 && trip.arrive_step > grid.steps - 1 {
            push("arrive_step", "arrival lies beyond the horizon");
        }
        if !(trip.energy_mwh >= 0.0 && trip.energy_mwh.is_finite()) {
            push("energy_mwh", "trip energy must be non-negative");
        } else {
            let usable = (spec.soc_max_frac - spec.soc_min_frac) * spec.capacity_mwh;
            if trip.energy_mwh > usable + EPS {
                push("energy_mwh", "trip exceeds usable energy");
            }
            let home_after = (grid.steps - 1).saturating_sub(trip.arrive_step);
            let per_step_max = spec.charge_power_max_mw * grid.delta_t;
            let per_step_min = spec.charge_power_min_mw * grid.delta_t;
            if trip.arrive_step < grid.steps && trip.energy_mwh > EPS {
                if trip.energy_mwh > home_after as f64 * per_step_max + EPS {
                    push("arrive_step", "not enough time at home to recharge the trip energy");
                } else if !(1..=home_after).any(|k| {
                    let k = k as f64;
                    k * per_step_min <= trip.energy_mwh + EPS && trip.energy_mwh <= k * per_step_max + EPS
                }) {
                    push("charge_power_min_mw", "trip energy cannot be recharged in whole charging steps");
                }
            }
        }
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upward,
    Downward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Upward => "upward",
            Direction::Downward => "downward",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorSpec {
    pub id: String,
    pub bus_id: u32,
    pub direction: Direction,
    /// Offer price for the aggregator's direction, EUR/MWh.
    pub bid_price: f64,
    pub fleet: Vec<EvSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSet {
    pub da: Vec<f64>,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
    pub brp_fee: f64,
    pub consumer_price: f64,
}

pub const DEFAULT_BRP_FEE: f64 = 30.0;
pub const DEFAULT_CONSUMER_PRICE: f64 = 85.0;

impl PriceSet {
    pub fn flat(steps: usize, da: f64, up: f64, down: f64) -> Self {
        Self {
            da: vec![da; steps],
            up: vec![up; steps],
            down: vec![down; steps],
            brp_fee: DEFAULT_BRP_FEE,
            consumer_price: DEFAULT_CONSUMER_PRICE,
        }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Vec<Violation> {
        let mut v = Vec::new();
        for (name, series) in [("da", &self.da), ("up", &self.up), ("down", &self.down)] {
            if series.len() != grid.steps {
                v.push(Violation::new(
                    "prices",
                    name,
                    format!("expected {} steps, found {}", grid.steps, series.len()),
                ));
            }
            if series.iter().any(|p| !p.is_finite()) {
                v.push(Violation::new("prices", name, "prices must be finite"));
            }
        }
        if !(self.brp_fee >= 0.0) {
            v.push(Violation::new("prices", "brp_fee", "BRP fee must be non-negative"));
        }
        if !self.consumer_price.is_finite() {
            v.push(Violation::new("prices", "consumer_price", "must be finite"));
        }
        v
    }
}

/// Optimized energy plan of one EV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvSchedule {
    pub ev_id: String,
    pub e_up: Vec<f64>,
    pub e_down: Vec<f64>,
    pub e_da: Vec<f64>,
    pub soc: Vec<f64>,
    pub u: Vec<bool>,
    pub v: Vec<bool>,
    pub w: Vec<bool>,
    /// This EV's share of the aggregator objective.
    pub objective: f64,
}

impl EvSchedule {
    pub fn steps(&self) -> usize {
        self.soc.len()
    }
}

/// Per-step flexibility envelope an aggregator offers upward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexBoundary {
    pub aggregator_id: String,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

impl FlexBoundary {
    pub fn zeros(aggregator_id: impl Into<String>, steps: usize) -> Self {
        Self { aggregator_id: aggregator_id.into(), upper: vec![0.0; steps], lower: vec![0.0; steps] }
    }

    pub fn steps(&self) -> usize {
        self.upper.len()
    }

    pub fn is_signed(&self) -> bool {
        self.upper.iter().all(|&u| u >= 0.0) && self.lower.iter().all(|&l| l <= 0.0)
    }

    /// The boundary the aggregator offers in its own direction; the other side is zero.
    pub fn offered(&self, direction: Direction) -> Self {
        let n = self.steps();
        match direction {
            Direction::Upward => {
                Self { aggregator_id: self.aggregator_id.clone(), upper: self.upper.clone(), lower: vec![0.0; n] }
            }
            Direction::Downward => {
                Self { aggregator_id: self.aggregator_id.clone(), upper: vec![0.0; n], lower: self.lower.clone() }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegulationDemand {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl RegulationDemand {
    pub fn zeros(steps: usize) -> Self {
        Self { up: vec![0.0; steps], down: vec![0.0; steps] }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.up.len() != grid.steps || self.down.len() != grid.steps {
            v.push(Violation::new("regulation", "steps", format!("expected {} steps", grid.steps)));
        }
        if self.up.iter().any(|&e| !(e >= 0.0)) {
            v.push(Violation::new("regulation", "up", "upward demand must be non-negative"));
        }
        if self.down.iter().any(|&e| !(e <= 0.0)) {
            v.push(Violation::new("regulation", "down", "downward demand must be non-positive"));
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub gen_mw: Vec<f64>,
    pub demand_mw: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r_pu: f64,
    pub x_pu: f64,
    pub rated_mva: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub slack_bus: u32,
}

impl Network {
    pub fn steps(&self) -> usize {
        self.buses.first().map_or(0, |b| b.demand_mw.len())
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn has_bus(&self, id: u32) -> bool {
        self.bus_index(id).is_some()
    }
}

/// Checks topology, impedances, ratings, the slack and profile lengths.
pub fn validate_network(net: &Network) -> Vec<Violation> {
    let mut v = Vec::new();
    if !(net.base_mva > 0.0) {
        v.push(Violation::new("network", "base_mva", "base power must be positive"));
    }
    if net.buses.is_empty() {
        v.push(Violation::new("network", "buses", "network has no buses"));
        return v;
    }
    let mut seen = BTreeSet::new();
    for b in &net.buses {
        if !seen.insert(b.id) {
            v.push(Violation::new(format!("bus {}", b.id), "id", "duplicate bus id"));
        }
    }
    if !seen.contains(&net.slack_bus) {
        v.push(Violation::new("network", "slack_bus", "slack bus is not a network bus"));
    }
    let steps = net.steps();
    for b in &net.buses {
        if b.gen_mw.len() != steps || b.demand_mw.len() != steps {
            v.push(Violation::new(
                format!("bus {}", b.id),
                "profiles",
                format!("profile length differs from {steps} steps"),
            ));
        }
        if b.gen_mw.iter().chain(&b.demand_mw).any(|p| !p.is_finite()) {
            v.push(Violation::new(format!("bus {}", b.id), "profiles", "non-finite power"));
        }
    }
    for (k, br) in net.branches.iter().enumerate() {
        let subject = format!("branch {k}");
        if !seen.contains(&br.from_bus) || !seen.contains(&br.to_bus) {
            v.push(Violation::new(&subject, "endpoints", "branch references an unknown bus"));
        }
        if br.from_bus == br.to_bus {
            v.push(Violation::new(&subject, "endpoints", "branch is a self-loop"));
        }
        if br.x_pu == 0.0 {
            v.push(Violation::new(&subject, "x_pu", "zero reactance"));
        } else if !(br.x_pu > 0.0) {
            v.push(Violation::new(&subject, "x_pu", "reactance must be positive"));
        }
        if !(br.r_pu >= 0.0) {
            v.push(Violation::new(&subject, "r_pu", "resistance must be non-negative"));
        }
        if !(br.rated_mva > 0.0) {
            v.push(Violation::new(&subject, "rated_mva", "rating must be positive"));
        }
    }
    if !is_connected(net) {
        v.push(Violation::new("network", "branches", "network not connected"));
    }
    v
}

fn is_connected(net: &Network) -> bool {
    let mut adj: BTreeMap<u32, Vec<u32>> = net.buses.iter().map(|b| (b.id, Vec::new())).collect();
    for br in &net.branches {
        if adj.contains_key(&br.from_bus) && adj.contains_key(&br.to_bus) {
            adj.get_mut(&br.from_bus).unwrap().push(br.to_bus);
            adj.get_mut(&br.to_bus).unwrap().push(br.from_bus);
        }
    }
    let start = net.buses[0].id;
    let mut visited = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(b) = queue.pop_front() {
        for &n in &adj[&b] {
            if visited.insert(n) {
                queue.push_back(n);
            }
        }
    }
    visited.len() == adj.len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsoConfig {
    pub power_factor: f64,
    pub loading_threshold: f64,
    pub max_divisions: usize,
    /// Divisor for attempt `s` (1-based) is `divisor_sequence[s - 1]`.
    pub divisor_sequence: Vec<f64>,
}

impl Default for DsoConfig {
    fn default() -> Self {
        Self {
            power_factor: 0.98,
            loading_threshold: 0.95,
            max_divisions: 5,
            divisor_sequence: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        }
    }
}

impl DsoConfig {
    /// Fraction of the rating the relief OPF binds flows to.
    pub fn flow_limit_fraction(&self) -> f64 {
        self.power_factor.min(self.loading_threshold)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.loading_threshold > 0.0 && self.loading_threshold <= 1.0) {
            v.push(Violation::new("dso", "loading_threshold", "must lie in (0, 1]"));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            v.push(Violation::new("dso", "power_factor", "must lie in (0, 1]"));
        }
        if self.max_divisions < 1 {
            v.push(Violation::new("dso", "max_divisions", "at least one division is required"));
        }
        if self.divisor_sequence.len() < self.max_divisions + 1 {
            v.push(Violation::new("dso", "divisor_sequence", "needs one divisor per attempt (max_divisions + 1)"));
        }
        if self.divisor_sequence.first().is_some_and(|&d| d != 1.0) {
            v.push(Violation::new("dso", "divisor_sequence", "first attempt must be undivided"));
        }
        if self.divisor_sequence.iter().any(|&d| !(d >= 1.0)) {
            v.push(Violation::new("dso", "divisor_sequence", "divisors must be at least 1"));
        }
        v
    }
}
