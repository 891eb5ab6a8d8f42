//! Seeded synthetic scenarios: a 20-bus radial feeder with ten EV aggregators
//! (five upward, five downward), synthetic day-ahead and balancing
//! price series, and matching regulation demand.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coordination::{Scenario, Scheme, SettlementOptions};
use crate::model::{
    AggregatorSpec, Branch, Bus, Direction, DsoConfig, EvSpec, Network, PriceSet, RegulationDemand, TimeGrid, Trip,
    DEFAULT_BRP_FEE, DEFAULT_CONSUMER_PRICE,
};

pub const DEFAULT_SEED: u64 = 2024;
pub const EVS_PER_AGGREGATOR: usize = 100;

/// Aggregator roles: name, bus, direction, bid price.
pub const TABLE_ONE: [(&str, u32, Direction, f64); 10] = [
    ("EV_Agg1", 4, Direction::Upward, 25.0),
    ("EV_Agg2", 9, Direction::Upward, 30.0),
    ("EV_Agg3", 17, Direction::Upward, 20.0),
    ("EV_Agg4", 18, Direction::Upward, 40.0),
    ("EV_Agg5", 19, Direction::Upward, 35.0),
    ("EV_Agg6", 6, Direction::Downward, 5.0),
    ("EV_Agg7", 5, Direction::Downward, 10.0),
    ("EV_Agg8", 12, Direction::Downward, 15.0),
    ("EV_Agg9", 10, Direction::Downward, -5.0),
    ("EV_Agg10", 13, Direction::Downward, -10.0),
];

/// Steps (0-based) of the midday window in which upward activation meets low demand.
pub const CONGESTED_STEPS: std::ops::Range<usize> = 44..48;

/// Which grid variant to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridVariant {
    /// Main line rated so that full offered envelopes overload it at midday.
    Congested,
    /// Same feeder with generous ratings; validation never binds.
    Uncongested,
    /// Tiny ratings and no base flows: any flexibility overloads and cannot be relieved.
    Unrelievable,
}

fn hour_of(t: usize, grid: &TimeGrid) -> f64 {
    (t as f64 + 0.5) * grid.delta_t
}

fn solar_shape(h: f64) -> f64 {
    if (6.5..=19.5).contains(&h) {
        (PI * (h - 6.5) / 13.0).sin().powi(2)
    } else {
        0.0
    }
}

fn load_shape(h: f64) -> f64 {
    0.55 + 0.2 * (2.0 * PI * (h - 8.0) / 24.0).sin().max(0.0) + 0.3 * (-((h - 19.0) / 2.5).powi(2)).exp()
}

/// Radial feeder: slack bus 1, main line 1-2, three laterals from bus 2.
pub fn radial_network(grid: &TimeGrid, variant: GridVariant) -> Network {
    let laterals: [&[u32]; 3] = [&[3, 4, 5, 6, 7], &[8, 9, 10, 11, 12, 13], &[14, 15, 16, 17, 18, 19, 20]];
    let (main_rating, lateral_rating) = match variant {
        GridVariant::Congested => (8.0, 8.0),
        GridVariant::Uncongested => (40.0, 40.0),
        GridVariant::Unrelievable => (0.01, 0.01),
    };
    let mut branches = vec![Branch { from_bus: 1, to_bus: 2, r_pu: 0.004, x_pu: 0.012, rated_mva: main_rating }];
    for lateral in laterals {
        let mut prev = 2;
        for &b in lateral {
            branches.push(Branch { from_bus: prev, to_bus: b, r_pu: 0.02, x_pu: 0.03, rated_mva: lateral_rating });
            prev = b;
        }
    }
    // PV sits on the first two laterals, load spreads over every non-slack bus.
    let pv_mw = |id: u32| match id {
        3..=13 => 0.7,
        _ => 0.0,
    };
    let buses = (1..=20)
        .map(|id| {
            let (gen, demand): (Vec<f64>, Vec<f64>) = (0..grid.steps)
                .map(|t| {
                    if id == 1 || variant == GridVariant::Unrelievable {
                        return (0.0, 0.0);
                    }
                    let h = hour_of(t, grid);
                    (pv_mw(id) * solar_shape(h), 0.2 * load_shape(h))
                })
                .unzip();
            Bus { id, gen_mw: gen, demand_mw: demand }
        })
        .collect();
    Network { base_mva: 10.0, buses, branches, slack_bus: 1 }
}

/// Three-bus chain 1-2-3 with a constant 0.5 MW load at bus 3.
pub fn three_bus_network(grid: &TimeGrid) -> Network {
    let bus = |id: u32, demand: f64| Bus { id, gen_mw: vec![0.0; grid.steps], demand_mw: vec![demand; grid.steps] };
    Network {
        base_mva: 10.0,
        buses: vec![bus(1, 0.0), bus(2, 0.0), bus(3, 0.5)],
        branches: vec![
            Branch { from_bus: 1, to_bus: 2, r_pu: 0.0, x_pu: 0.1, rated_mva: 1.0 },
            Branch { from_bus: 2, to_bus: 3, r_pu: 0.0, x_pu: 0.1, rated_mva: 1.0 },
        ],
        slack_bus: 1,
    }
}

type Archetype = (&'static str, f64, f64, Option<(usize, usize, f64)>);

/// EV archetypes: (name, capacity MWh, power MW, trip as (depart, arrive, MWh) on a 96-step day).
const ARCHETYPES: [Archetype; 4] = [
    ("commuter", 0.06, 0.011, Some((30, 70, 0.018))),
    ("evening", 0.05, 0.011, Some((70, 86, 0.012))),
    ("errand", 0.04, 0.0074, Some((56, 62, 0.006))),
    ("home", 0.075, 0.011, None),
];

fn archetype_ev(id: String, k: usize, grid: &TimeGrid) -> EvSpec {
    let (_, capacity, power, trip) = ARCHETYPES[k];
    let scale = grid.steps as f64 / 96.0;
    EvSpec {
        id,
        capacity_mwh: capacity,
        charge_power_min_mw: 0.0,
        charge_power_max_mw: power,
        discharge_power_min_mw: 0.0,
        discharge_power_max_mw: power,
        trip: trip.map(|(d, a, e)| Trip {
            depart_step: (d as f64 * scale) as usize,
            arrive_step: (a as f64 * scale) as usize,
            energy_mwh: e,
        }),
        soc_min_frac: 0.2,
        soc_max_frac: 1.0,
    }
}

/// One fleet composition, drawn once and shared by every aggregator so that
/// all aggregators offer the same volume and differ only in price.
pub fn fleet_composition(seed: u64, size: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = [0.35, 0.2, 0.2, 0.25];
    let mut out: Vec<usize> = (0..size)
        .map(|_| {
            let r: f64 = rng.gen();
            let mut acc = 0.0;
            weights
                .iter()
                .position(|w| {
                    acc += w;
                    r < acc
                })
                .unwrap_or(weights.len() - 1)
        })
        .collect();
    out.sort_unstable();
    out
}

pub fn table_one_aggregators(grid: &TimeGrid, seed: u64, fleet_size: usize) -> Vec<AggregatorSpec> {
    let composition = fleet_composition(seed, fleet_size);
    TABLE_ONE
        .iter()
        .map(|&(name, bus, direction, price)| AggregatorSpec {
            id: name.to_string(),
            bus_id: bus,
            direction,
            bid_price: price,
            fleet: composition
                .iter()
                .enumerate()
                .map(|(n, &k)| {
                    let index = n - composition.partition_point(|&c| c < k);
                    archetype_ev(format!("{name}-{}-{index}", ARCHETYPES[k].0), k, grid)
                })
                .collect(),
        })
        .collect()
}

/// Day-ahead prices with an evening peak and a solar dip; balancing prices in
/// one direction per step, high upward prices in the congested window.
pub fn synthetic_prices(grid: &TimeGrid, seed: u64) -> PriceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let mut p = PriceSet::flat(grid.steps, 0.0, 0.0, 0.0);
    p.brp_fee = DEFAULT_BRP_FEE;
    p.consumer_price = DEFAULT_CONSUMER_PRICE;
    let congested = scaled_range(CONGESTED_STEPS, grid);
    for t in 0..grid.steps {
        let h = hour_of(t, grid);
        let da = 75.0 + 30.0 * (2.0 * PI * (h - 19.0) / 24.0).cos() - 45.0 * (-((h - 12.5) / 2.5).powi(2)).exp();
        p.da[t] = round2(da + rng.gen_range(-5.0..5.0));
        let r: f64 = rng.gen();
        if congested.contains(&t) {
            p.up[t] = round2(rng.gen_range(220.0..250.0));
        } else if r < 0.15 {
            p.up[t] = round2(rng.gen_range(60.0..250.0));
        } else if r < 0.32 {
            p.down[t] = round2(rng.gen_range(-130.0..10.0));
        }
    }
    p
}

/// Regulation demand in the direction of each step's balancing price.
pub fn synthetic_regulation(prices: &PriceSet, grid: &TimeGrid, seed: u64) -> RegulationDemand {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002);
    let congested = scaled_range(CONGESTED_STEPS, grid);
    let mut d = RegulationDemand::zeros(grid.steps);
    for t in 0..grid.steps {
        if prices.up[t] != 0.0 {
            d.up[t] = if congested.contains(&t) { 0.6 } else { round2(rng.gen_range(0.1..0.8)) };
        } else if prices.down[t] != 0.0 {
            d.down[t] = -round2(rng.gen_range(0.1..0.8));
        }
    }
    d
}

fn scaled_range(r: std::ops::Range<usize>, grid: &TimeGrid) -> std::ops::Range<usize> {
    let scale = grid.steps as f64 / 96.0;
    (r.start as f64 * scale) as usize..(r.end as f64 * scale) as usize
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Full synthetic day on the given grid variant.
pub fn scenario(variant: GridVariant, seed: u64) -> Scenario {
    let grid = TimeGrid::default();
    let prices = synthetic_prices(&grid, seed);
    let regulation = synthetic_regulation(&prices, &grid, seed);
    Scenario {
        name: match variant {
            GridVariant::Congested => "congested",
            GridVariant::Uncongested => "uncongested",
            GridVariant::Unrelievable => "unrelievable",
        }
        .to_string(),
        network: radial_network(&grid, variant),
        aggregators: table_one_aggregators(&grid, seed, EVS_PER_AGGREGATOR),
        prices,
        regulation,
        grid,
        dso: DsoConfig::default(),
        scheme: Scheme::Hybrid,
        settlement: SettlementOptions::default(),
        seed,
    }
}
