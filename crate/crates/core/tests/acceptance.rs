//! Acceptance suite: one PASS/FAIL line per criterion, tolerances and time budgets pinned below.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use flexcoord::aggregator::optimize_ev;
use flexcoord::coordination::{plan_aggregators, run_dso_managed, run_hybrid, run_with_plans, Scenario, Scheme};
use flexcoord::dso::{
    bus_injections, dc_power_flow, validate_dso_managed, validate_hybrid, PowerFlowModel, ValidationOutcome,
};
use flexcoord::io::{export_results, load_scenario, load_settlement, save_scenario};
use flexcoord::model::{AggregatorSpec, Direction, EvSpec, FlexBoundary, PriceSet, RegulationDemand, TimeGrid};
use flexcoord::solver::{solve_lp, solve_milp, Status};
use flexcoord::synthetic::TABLE_ONE;
use flexcoord::tso::{build_mol, dispatch, DispatchResult, MeritOrderList};
use rand::Rng;

use common::{
    check_lp_certificate, dense_power_flow, enumerate_ev, enumerate_milp, greedy_fill, random_milp, random_network, rng,
};

/// Money amounts compared between schemes or against zero.
const EURO_TOL: f64 = 1e-6;
/// Relative cost agreement between LP dispatch and greedy fill.
const DISPATCH_REL_TOL: f64 = 1e-9;
/// Power-flow agreement with the dense oracle and nodal balance residual.
const FLOW_TOL: f64 = 1e-9;
/// Loading slack on top of the congestion threshold.
const LOADING_TOL: f64 = 1e-9;
/// Objective gap between branch and bound and enumeration.
const MILP_GAP: f64 = 1e-6;
/// Lattice step of the per-EV enumeration oracle, in MWh.
const EV_QUANTUM: f64 = 0.005;
/// Agreement required for the worked per-EV example.
const WORKED_EXAMPLE_TOL: f64 = 1e-9;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn run(&mut self, id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; over the {:.0} s budget", budget.as_secs_f64()))
            }
        });
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                self.failed += 1;
                ("FAIL", d)
            }
        };
        println!("{id} {tag} {title} [{:.2} s of {:.0} s]: {detail}", elapsed.as_secs_f64(), budget.as_secs_f64());
    }
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: 0 };
    suite.run("AC1", "scheme ordering", Duration::from_secs(120), scheme_ordering);
    suite.run("AC2", "brp sensitivity", Duration::from_secs(120), brp_sensitivity);
    suite.run("AC3", "per-EV MILP oracle", Duration::from_secs(60), ev_oracle);
    suite.run("AC4", "dispatch oracle", Duration::from_secs(30), dispatch_oracle);
    suite.run("AC5", "post-validation safety", Duration::from_secs(60), post_validation_safety);
    suite.run("AC6", "power-flow correctness", Duration::from_secs(60), power_flow);
    suite.run("AC7", "division loop contract", Duration::from_secs(60), division_loop);
    suite.run("AC8", "solver soundness", Duration::from_secs(120), solver_soundness);
    suite.run("AC9", "round trip and determinism", Duration::from_secs(120), round_trip);
    if suite.failed == 0 {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", suite.failed);
        ExitCode::FAILURE
    }
}

fn scheme_ordering() -> Outcome {
    let s = load_scenario(&fixture("congested.json")).map_err(|e| e.to_string())?;
    ensure(s.prices.brp_fee == 30.0, || format!("fixture brp fee {}", s.prices.brp_fee))?;
    let plans = plan_aggregators(&s).map_err(|e| e.to_string())?;
    let h = run_with_plans(&s, Scheme::Hybrid, &plans).map_err(|e| e.to_string())?;
    let d = run_with_plans(&s, Scheme::DsoManaged, &plans).map_err(|e| e.to_string())?;
    ensure(h.aggregator_benefit > d.aggregator_benefit, || {
        format!("benefit hybrid {} <= dso-managed {}", h.aggregator_benefit, d.aggregator_benefit)
    })?;
    ensure(h.tso_cost <= d.tso_cost + EURO_TOL, || {
        format!("tso cost hybrid {} > dso-managed {}", h.tso_cost, d.tso_cost)
    })?;

    let u = load_scenario(&fixture("uncongested.json")).map_err(|e| e.to_string())?;
    let uplans = plan_aggregators(&u).map_err(|e| e.to_string())?;
    let uh = run_with_plans(&u, Scheme::Hybrid, &uplans).map_err(|e| e.to_string())?;
    let ud = run_with_plans(&u, Scheme::DsoManaged, &uplans).map_err(|e| e.to_string())?;
    let gap = (uh.aggregator_benefit - ud.aggregator_benefit).abs().max((uh.tso_cost - ud.tso_cost).abs());
    ensure(gap <= EURO_TOL, || format!("uncongested schemes differ by {gap} EUR"))?;
    Ok(format!(
        "benefit {:.2} > {:.2} EUR ({:.1}% gap), tso cost {:.2} <= {:.2} EUR, uncongested gap {gap:.1e} EUR",
        h.aggregator_benefit,
        d.aggregator_benefit,
        100.0 * (h.aggregator_benefit - d.aggregator_benefit) / h.aggregator_benefit.abs(),
        h.tso_cost,
        d.tso_cost
    ))
}

fn brp_sensitivity() -> Outcome {
    let base = load_scenario(&fixture("congested.json")).map_err(|e| e.to_string())?;
    let fees = [30.0, 60.0, 100.0, 150.0, 200.0];
    let mut rows = Vec::new();
    for fee in fees {
        let mut s = base.clone();
        s.prices.brp_fee = fee;
        let plans = plan_aggregators(&s).map_err(|e| e.to_string())?;
        let t = plans.totals();
        rows.push((fee, t.up, t.down, plans.objective()));
    }
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    ensure(last.2 <= 0.1 * first.2, || format!("downward {} at 200 vs {} at 30", last.2, first.2))?;
    ensure(last.1 < first.1, || format!("upward {} at 200 not below {} at 30", last.1, first.1))?;
    for w in rows.windows(2) {
        ensure(w[1].3 <= w[0].3 + EURO_TOL, || {
            format!("objective rises from {} to {} at fee {}", w[0].3, w[1].3, w[1].0)
        })?;
    }
    Ok(format!(
        "up {:.3} -> {:.3} MWh, down {:.3} -> {:.3} MWh, objective {:.2} -> {:.2} EUR over fees {fees:?}",
        first.1, last.1, first.2, last.2, first.3, last.3
    ))
}

/// Random 4-step EV without a trip whose energies all sit on the oracle's lattice.
fn lattice_ev(r: &mut impl Rng) -> (EvSpec, PriceSet) {
    let grid_dt = 0.25;
    let q = EV_QUANTUM;
    let quanta = r.gen_range(4..=16);
    let capacity = q * quanta as f64;
    let step_power = |r: &mut dyn rand::RngCore| q * r.gen_range(1..=4) as f64 / grid_dt;
    let spec = EvSpec {
        id: "ev".into(),
        capacity_mwh: capacity,
        charge_power_min_mw: 0.0,
        charge_power_max_mw: step_power(r),
        discharge_power_min_mw: 0.0,
        discharge_power_max_mw: step_power(r),
        trip: None,
        soc_min_frac: r.gen_range(0..=quanta / 2) as f64 / quanta as f64,
        soc_max_frac: 1.0,
    };
    let price = |r: &mut dyn rand::RngCore, lo: i32, hi: i32| {
        if r.gen_bool(0.3) {
            0.0
        } else {
            r.gen_range(lo..=hi) as f64
        }
    };
    let prices = PriceSet {
        da: (0..4).map(|_| r.gen_range(0..=90) as f64).collect(),
        up: (0..4).map(|_| price(r, 0, 150)).collect(),
        down: (0..4).map(|_| price(r, -60, 40)).collect(),
        brp_fee: r.gen_range(0..=60) as f64,
        consumer_price: 85.0,
    };
    (spec, prices)
}

fn ev_oracle() -> Outcome {
    let grid = TimeGrid::new(4, 0.25);
    let worked = EvSpec {
        id: "ev".into(),
        capacity_mwh: 0.05,
        charge_power_min_mw: 0.0,
        charge_power_max_mw: 0.04,
        discharge_power_min_mw: 0.0,
        discharge_power_max_mw: 0.04,
        trip: None,
        soc_min_frac: 0.2,
        soc_max_frac: 1.0,
    };
    let worked_prices = PriceSet {
        da: vec![10.0; 4],
        up: vec![0.0, 100.0, 0.0, 0.0],
        down: vec![0.0; 4],
        brp_fee: 30.0,
        consumer_price: 85.0,
    };
    let w = optimize_ev(&worked, &worked_prices, &grid).map_err(|e| e.to_string())?.objective;
    ensure((w - 1.45).abs() <= WORKED_EXAMPLE_TOL, || format!("worked example gives {w}, expected 1.45"))?;

    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    let instances = 200;
    for k in 0..instances {
        let (spec, prices) = lattice_ev(&mut r);
        let oracle = enumerate_ev(&spec, &prices, &grid, EV_QUANTUM).ok_or("oracle found no schedule")?;
        let milp = optimize_ev(&spec, &prices, &grid).map_err(|e| e.to_string())?.objective;
        // One lattice step at the steepest per-MWh coefficient of the instance, per step.
        let steepest = (0..4)
            .flat_map(|t| {
                [
                    (prices.up[t] - prices.brp_fee).abs(),
                    (prices.down[t] + prices.brp_fee).abs(),
                    (prices.consumer_price - prices.da[t]).abs(),
                ]
            })
            .fold(0.0, f64::max);
        let resolution = EV_QUANTUM * steepest * grid.steps as f64;
        ensure(milp >= oracle - MILP_GAP, || format!("instance {k}: MILP {milp} below lattice optimum {oracle}"))?;
        ensure(milp - oracle <= resolution + MILP_GAP, || {
            format!("instance {k}: MILP {milp} exceeds lattice optimum {oracle} by more than {resolution}")
        })?;
        worst = worst.max(milp - oracle);
    }
    Ok(format!("worked example {w:.6} EUR; {instances} instances, largest MILP minus lattice gap {worst:.2e} EUR"))
}

fn table_one() -> Vec<AggregatorSpec> {
    TABLE_ONE
        .iter()
        .map(|&(id, bus_id, direction, bid_price)| AggregatorSpec {
            id: id.into(),
            bus_id,
            direction,
            bid_price,
            fleet: Vec::new(),
        })
        .collect()
}

fn mols(aggs: &[AggregatorSpec], bounds: &[FlexBoundary]) -> (MeritOrderList, MeritOrderList) {
    let offers: Vec<_> = aggs.iter().zip(bounds).collect();
    (build_mol(&offers, Direction::Upward, 0..1), build_mol(&offers, Direction::Downward, 0..1))
}

fn dispatch_oracle() -> Outcome {
    let aggs = table_one();
    let unit: Vec<FlexBoundary> = aggs
        .iter()
        .map(|a| {
            let mut b = FlexBoundary::zeros(a.id.clone(), 1);
            match a.direction {
                Direction::Upward => b.upper[0] = 1.0,
                Direction::Downward => b.lower[0] = -1.0,
            }
            b
        })
        .collect();
    let (up, down) = mols(&aggs, &unit);
    let example = dispatch(
        &up,
        &down,
        &RegulationDemand { up: vec![2.5], down: vec![0.0] },
        &PriceSet::flat(1, 50.0, 60.0, 0.0),
        0,
    )
    .map_err(|e| e.to_string())?;
    ensure((example.cost - 60.0).abs() <= DISPATCH_REL_TOL * 60.0, || {
        format!("2.5 MWh example costs {}", example.cost)
    })?;

    let mut r = rng(404);
    let mut worst: f64 = 0.0;
    let draws = 1000;
    for k in 0..draws {
        let bounds: Vec<FlexBoundary> = aggs
            .iter()
            .map(|a| {
                let mut b = FlexBoundary::zeros(a.id.clone(), 1);
                let v = if r.gen_bool(0.2) { 0.0 } else { r.gen_range(0.0..3.0) };
                match a.direction {
                    Direction::Upward => b.upper[0] = v,
                    Direction::Downward => b.lower[0] = -v,
                }
                b
            })
            .collect();
        let (up, down) = mols(&aggs, &bounds);
        let demand = RegulationDemand { up: vec![r.gen_range(0.0..8.0)], down: vec![-r.gen_range(0.0..8.0)] };
        let prices = PriceSet::flat(1, 50.0, r.gen_range(-20.0..120.0), r.gen_range(-40.0..30.0));
        let lp = dispatch(&up, &down, &demand, &prices, 0).map_err(|e| e.to_string())?;
        let magnitudes =
            |m: &MeritOrderList| m.entries.iter().map(|e| (e.price, e.bounds[0].abs())).collect::<Vec<_>>();
        let greedy = greedy_fill(&magnitudes(&up), prices.up[0], demand.up[0]).0
            + greedy_fill(&magnitudes(&down), prices.down[0], -demand.down[0]).0;
        let rel = (lp.cost - greedy).abs() / greedy.abs().max(1.0);
        ensure(rel <= DISPATCH_REL_TOL, || format!("draw {k}: LP {} vs greedy {greedy}", lp.cost))?;
        worst = worst.max(rel);
    }
    Ok(format!("2.5 MWh example {:.6} EUR; {draws} draws, worst relative gap {worst:.1e}", example.cost))
}

/// Loading of every vertex of the validated box, with relief applied; returns the worst.
fn worst_vertex_loading(s: &Scenario, model: &PowerFlowModel, o: &ValidationOutcome) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (k, t) in o.window.clone().enumerate() {
        let mut base = bus_injections(&s.network, t);
        for r in o.relief.iter().filter(|r| r.step == t) {
            base[s.network.bus_index(r.bus_id).ok_or("relief on unknown bus")?] += r.energy / s.grid.delta_t;
        }
        let active: Vec<(usize, f64)> = o
            .boundaries
            .iter()
            .filter_map(|b| {
                let e = b.upper[k] + b.lower[k];
                let agg = s.aggregators.iter().find(|a| a.id == b.aggregator_id)?;
                (e != 0.0).then(|| (s.network.bus_index(agg.bus_id).unwrap(), e / s.grid.delta_t))
            })
            .collect();
        for mask in 0u32..(1 << active.len()) {
            let mut inj = base.clone();
            for (j, &(i, p)) in active.iter().enumerate() {
                if (mask >> j) & 1 == 1 {
                    inj[i] += p;
                }
            }
            worst = worst.max(model.solve(&inj).max_loading());
        }
    }
    Ok(worst)
}

fn first_dispatch(
    s: &Scenario,
    offers: &[FlexBoundary],
    window: std::ops::Range<usize>,
) -> Result<Vec<DispatchResult>, String> {
    let pairs: Vec<_> = s.aggregators.iter().zip(offers).collect();
    let up = build_mol(&pairs, Direction::Upward, window.clone());
    let down = build_mol(&pairs, Direction::Downward, window.clone());
    window.map(|t| dispatch(&up, &down, &s.regulation, &s.prices, t).map_err(|e| e.to_string())).collect()
}

fn post_validation_safety() -> Outcome {
    let s = load_scenario(&fixture("congested.json")).map_err(|e| e.to_string())?;
    let plans = plan_aggregators(&s).map_err(|e| e.to_string())?;
    let model = PowerFlowModel::new(&s.network).map_err(|e| e.to_string())?;
    let threshold = s.dso.loading_threshold;
    let mut detail = Vec::new();
    let mut binding_total = 0;
    for scheme in [Scheme::Hybrid, Scheme::DsoManaged] {
        let mut worst: f64 = 0.0;
        let mut binding = 0;
        for window in s.windows() {
            let o = match scheme {
                Scheme::Hybrid => {
                    let d = first_dispatch(&s, &plans.offers, window.clone())?;
                    validate_hybrid(&d, &s.aggregators, &s.network, &s.dso, &s.grid)
                }
                Scheme::DsoManaged => {
                    let offers: Vec<_> = s.aggregators.iter().zip(&plans.offers).collect();
                    validate_dso_managed(&offers, &s.network, &s.dso, &s.grid, window.clone())
                }
            }
            .map_err(|e| e.to_string())?;
            if o.divisions_used > 0 {
                binding += 1;
            }
            worst = worst.max(worst_vertex_loading(&s, &model, &o)?);
        }
        binding_total += binding;
        ensure(worst <= threshold + LOADING_TOL, || format!("{scheme}: box vertex loading {worst}"))?;
        let report = run_with_plans(&s, scheme, &plans).map_err(|e| e.to_string())?;
        let realized = report.loadings.iter().map(|l| l.loading).fold(0.0, f64::max);
        ensure(realized <= threshold + LOADING_TOL, || format!("{scheme}: realized loading {realized}"))?;
        detail.push(format!("{scheme}: {binding} binding windows, worst vertex {worst:.4}, realized {realized:.4}"));
    }
    ensure(binding_total > 0, || "validation never binds on the fixture".into())?;
    Ok(format!("{} (threshold {threshold})", detail.join("; ")))
}

fn power_flow() -> Outcome {
    let mut r = rng(606);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let net = random_network(&mut r, 10, true);
        let inj: Vec<f64> = (0..net.buses.len()).map(|_| r.gen_range(-3.0..3.0)).collect();
        let pf = dc_power_flow(&net, &inj).map_err(|e| e.to_string())?;
        let (_, flows) = dense_power_flow(&net, &inj);
        for (a, b) in pf.flow.iter().zip(&flows) {
            ensure((a - b).abs() <= FLOW_TOL, || format!("network {k}: flow {a} vs dense {b}"))?;
            worst = worst.max((a - b).abs());
        }
        let model = PowerFlowModel::new(&net).map_err(|e| e.to_string())?;
        let residual = model.balance_residual(&pf, &inj);
        ensure(residual <= FLOW_TOL, || format!("network {k}: nodal balance residual {residual}"))?;
        worst = worst.max(residual);
        for x in 0..net.buses.len() {
            for y in 0..net.buses.len() {
                let (f, b) = (model.flow_between(&pf, x, y), model.flow_between(&pf, y, x));
                ensure(f == -b, || format!("network {k}: flow {x}->{y} is {f}, reverse {b}"))?;
            }
        }
    }
    Ok(format!("100 networks, worst deviation or residual {worst:.1e}"))
}

fn division_loop() -> Outcome {
    let s = load_scenario(&fixture("unrelievable.json")).map_err(|e| e.to_string())?;
    let plans = plan_aggregators(&s).map_err(|e| e.to_string())?;
    let offers: Vec<_> = s.aggregators.iter().zip(&plans.offers).collect();
    let mut exhausted = 0;
    for window in s.windows() {
        let o =
            validate_dso_managed(&offers, &s.network, &s.dso, &s.grid, window.clone()).map_err(|e| e.to_string())?;
        ensure(o.divisions_used <= s.dso.max_divisions, || {
            format!("window {}: {} divisions", window.start, o.divisions_used)
        })?;
        if o.exhausted {
            exhausted += 1;
            let zero = o.boundaries.iter().all(|b| b.upper.iter().chain(&b.lower).all(|&x| x == 0.0));
            ensure(zero, || format!("window {}: exhausted with nonzero boundaries", window.start))?;
        }
    }
    ensure(exhausted > 0, || "no window exhausted the division loop".into())?;

    let reserve_only: f64 =
        (0..s.grid.steps).map(|t| s.regulation.up[t] * s.prices.up[t] - s.regulation.down[t] * s.prices.down[t]).sum();
    let mut costs = Vec::new();
    for scheme in [Scheme::Hybrid, Scheme::DsoManaged] {
        let r = run_with_plans(&s, scheme, &plans).map_err(|e| e.to_string())?;
        ensure(r.windows.iter().all(|w| w.divisions_used <= s.dso.max_divisions), || {
            format!("{scheme}: too many divisions")
        })?;
        ensure(r.dispatched.up == 0.0 && r.dispatched.down == 0.0, || {
            format!("{scheme}: aggregators were dispatched")
        })?;
        ensure((r.tso_cost - reserve_only).abs() <= EURO_TOL, || {
            format!("{scheme}: tso cost {} vs reserve-only {reserve_only}", r.tso_cost)
        })?;
        costs.push(r.tso_cost);
    }
    Ok(format!(
        "{exhausted} exhausted windows with zero boundaries; tso cost {:.3} / {:.3} EUR equals reserve-only {reserve_only:.3} EUR",
        costs[0], costs[1]
    ))
}

fn solver_soundness() -> Outcome {
    let mut r = rng(808);
    let mut optimal = 0;
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let p = random_milp(&mut r, 12, 4);
        let sol = solve_milp(&p);
        match enumerate_milp(&p) {
            None => ensure(sol.status == Status::Infeasible, || {
                format!("instance {k}: {:?} on an infeasible MILP", sol.status)
            })?,
            Some(best) => {
                ensure(sol.status == Status::Optimal, || {
                    format!("instance {k}: {:?}, enumeration found {best}", sol.status)
                })?;
                let gap = (sol.objective - best).abs() / best.abs().max(1.0);
                ensure(gap <= MILP_GAP, || format!("instance {k}: {} vs enumeration {best}", sol.objective))?;
                worst = worst.max(gap);
                optimal += 1;
            }
        }
    }
    let mut certified = 0;
    for k in 0..500 {
        let p = random_milp(&mut r, 0, 20);
        let sol = solve_lp(&p.lp);
        if sol.is_optimal() {
            check_lp_certificate(&p.lp, &sol).map_err(|e| format!("lp {k}: {e}"))?;
            certified += 1;
        }
    }
    Ok(format!("1000 MILPs ({optimal} optimal), worst gap {worst:.1e}; {certified} LP dual certificates verified"))
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walk(dir)
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn round_trip() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for name in ["congested", "uncongested", "unrelievable"] {
        let s = load_scenario(&fixture(&format!("{name}.json"))).map_err(|e| e.to_string())?;
        let path = tmp.path().join(format!("{name}.json"));
        save_scenario(&s, &path).map_err(|e| e.to_string())?;
        ensure(load_scenario(&path).map_err(|e| e.to_string())? == s, || {
            format!("{name}: scenario changed on round trip")
        })?;

        for run in [run_hybrid, run_dso_managed] {
            let a = run(&s).map_err(|e| e.to_string())?;
            let b = run(&s).map_err(|e| e.to_string())?;
            let dir_a = tmp.path().join(format!("{name}-{}-a", a.scheme));
            let dir_b = tmp.path().join(format!("{name}-{}-b", a.scheme));
            export_results(&a, &dir_a).map_err(|e| e.to_string())?;
            export_results(&b, &dir_b).map_err(|e| e.to_string())?;
            ensure(files_of(&dir_a) == files_of(&dir_b), || format!("{name}/{}: repeated runs differ", a.scheme))?;

            let mut reloaded = load_settlement(&dir_a.join("settlement.json")).map_err(|e| e.to_string())?;
            reloaded.volumes = a.volumes.clone();
            reloaded.loadings = a.loadings.clone();
            let dir_c = tmp.path().join(format!("{name}-{}-c", a.scheme));
            export_results(&reloaded, &dir_c).map_err(|e| e.to_string())?;
            ensure(files_of(&dir_a) == files_of(&dir_c), || {
                format!("{name}/{}: export of the reloaded report differs", a.scheme)
            })?;
            checked += 1;
        }
    }
    Ok(format!("3 scenarios round-trip exactly; {checked} runs export byte-identical results twice and after reload"))
}
