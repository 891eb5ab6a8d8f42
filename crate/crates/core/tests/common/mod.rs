//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use flexcoord::model::{Branch, Bus, EvSpec, Network, PriceSet, TimeGrid};
use flexcoord::solver::{solve_lp, LinearProgram, MilpProblem, Relation, Sense, Solution, Status, Var};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random bounded MILP with integer data: up to `max_bin` binaries and `max_cont` continuous variables.
pub fn random_milp(rng: &mut ChaCha8Rng, max_bin: usize, max_cont: usize) -> MilpProblem {
    let sense = if rng.gen_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let mut p = MilpProblem::new(LinearProgram::new(sense));
    let nb = rng.gen_range(0..=max_bin);
    let nc = rng.gen_range(0..=max_cont);
    let mut vars: Vec<Var> = Vec::new();
    for j in 0..nb {
        vars.push(p.add_binary(format!("b{j}"), rng.gen_range(-10..=10) as f64));
    }
    for j in 0..nc {
        let lo = if rng.gen_bool(0.2) { -(rng.gen_range(1..=5) as f64) } else { 0.0 };
        let hi = lo + rng.gen_range(1..=10) as f64;
        vars.push(p.lp.add_var(format!("x{j}"), rng.gen_range(-10..=10) as f64, lo, hi));
    }
    let rows = rng.gen_range(1..=8);
    for _ in 0..rows {
        let mut terms: Vec<(Var, f64)> = Vec::new();
        for &v in &vars {
            let a = rng.gen_range(-5..=5) as f64;
            if rng.gen_bool(0.5) && a != 0.0 {
                terms.push((v, a));
            }
        }
        let relation = match rng.gen_range(0..10) {
            0 => Relation::Eq,
            1..=5 => Relation::Le,
            _ => Relation::Ge,
        };
        let rhs = match relation {
            Relation::Le => rng.gen_range(0..=12) as f64,
            Relation::Ge => rng.gen_range(-12..=2) as f64,
            Relation::Eq => rng.gen_range(-3..=3) as f64,
        };
        p.lp.add_constraint(terms, relation, rhs);
    }
    p
}

/// Best objective over all binary assignments, each completed by an LP; `None` when infeasible.
pub fn enumerate_milp(p: &MilpProblem) -> Option<f64> {
    let nb = p.binaries.len();
    let better = |a: f64, b: f64| match p.lp.sense {
        Sense::Maximize => a > b,
        Sense::Minimize => a < b,
    };
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << nb) {
        let mut lp = p.lp.clone();
        for (k, &v) in p.binaries.iter().enumerate() {
            let x = f64::from((mask >> k) & 1);
            lp.set_bounds(v, x, x);
        }
        let sol = solve_lp(&lp);
        match sol.status {
            Status::Optimal => {
                if best.is_none_or(|b| better(sol.objective, b)) {
                    best = Some(sol.objective);
                }
            }
            Status::Infeasible => {}
            other => panic!("enumeration LP ended with {other:?}"),
        }
    }
    best
}

/// Checks an optimal LP solution against an explicit dual certificate:
/// primal feasibility, dual sign conditions, complementary slackness and
/// equal primal and dual objectives.
pub fn check_lp_certificate(lp: &LinearProgram, sol: &Solution) -> Result<(), String> {
    let tol = 1e-6;
    if sol.status != Status::Optimal {
        return Err(format!("status {:?}", sol.status));
    }
    let x = &sol.values;
    let viol = lp.max_violation(x);
    if viol > 1e-7 {
        return Err(format!("primal violation {viol:e}"));
    }
    if sol.duals.len() != lp.constraints.len() {
        return Err("missing duals".into());
    }
    // Work in minimization form.
    let s = if lp.sense == Sense::Minimize { 1.0 } else { -1.0 };
    let y: Vec<f64> = sol.duals.iter().map(|d| s * d).collect();
    let mut reduced: Vec<f64> = lp.objective.iter().map(|c| s * c).collect();
    let mut dual_obj = 0.0;
    for (i, row) in lp.constraints.iter().enumerate() {
        match row.relation {
            Relation::Le if y[i] > tol => return Err(format!("row {i}: <= row with dual {}", y[i])),
            Relation::Ge if y[i] < -tol => return Err(format!("row {i}: >= row with dual {}", y[i])),
            _ => {}
        }
        let activity: f64 = row.terms.iter().map(|&(v, a)| a * x[v.0]).sum();
        if y[i].abs() > tol && (activity - row.rhs).abs() > 1e-6 {
            return Err(format!("row {i}: slack {} with dual {}", activity - row.rhs, y[i]));
        }
        for &(v, a) in &row.terms {
            reduced[v.0] -= a * y[i];
        }
        dual_obj += row.rhs * y[i];
    }
    for (j, &d) in reduced.iter().enumerate() {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        let at_lo = (x[j] - lo).abs() <= 1e-7;
        let at_hi = (x[j] - hi).abs() <= 1e-7;
        let ok = if at_lo && at_hi {
            true
        } else if at_lo {
            d >= -tol
        } else if at_hi {
            d <= tol
        } else {
            d.abs() <= tol
        };
        if !ok {
            return Err(format!("column {j}: reduced cost {d} at x={} in [{lo}, {hi}]", x[j]));
        }
        dual_obj += if d > 0.0 {
            if lo.is_finite() {
                d * lo
            } else {
                0.0
            }
        } else if hi.is_finite() {
            d * hi
        } else {
            0.0
        };
    }
    let primal = s * lp.evaluate(x);
    if (primal - dual_obj).abs() > tol * primal.abs().max(1.0) {
        return Err(format!("duality gap: primal {primal} dual {dual_obj}"));
    }
    Ok(())
}

/// Greedy merit-order fill: cheapest offers first, the reserve as an unlimited offer.
/// `offers` are (price, capacity magnitude); returns (cost, filled per offer, reserve).
pub fn greedy_fill(offers: &[(f64, f64)], reserve_price: f64, demand: f64) -> (f64, Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..offers.len()).collect();
    order.sort_by(|&a, &b| offers[a].0.total_cmp(&offers[b].0));
    let mut remaining = demand;
    let mut filled = vec![0.0; offers.len()];
    let mut cost = 0.0;
    for &k in &order {
        let (price, cap) = offers[k];
        if price >= reserve_price || remaining <= 0.0 {
            break;
        }
        let take = cap.min(remaining);
        filled[k] = take;
        cost += take * price;
        remaining -= take;
    }
    cost += remaining * reserve_price;
    (cost, filled, remaining)
}

/// Dense DC power flow: solves the reduced susceptance system with a general LU.
pub fn dense_power_flow(net: &Network, injections: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = net.buses.len();
    let slack = net.bus_index(net.slack_bus).unwrap();
    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut weights = Vec::new();
    for br in &net.branches {
        let f = net.bus_index(br.from_bus).unwrap();
        let t = net.bus_index(br.to_bus).unwrap();
        let w = net.base_mva * br.x_pu / (br.r_pu * br.r_pu + br.x_pu * br.x_pu);
        b[(f, f)] += w;
        b[(t, t)] += w;
        b[(f, t)] -= w;
        b[(t, f)] -= w;
        weights.push((f, t, w));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let reduced = DMatrix::from_fn(n - 1, n - 1, |r, c| b[(keep[r], keep[c])]);
    let rhs = DVector::from_iterator(n - 1, keep.iter().map(|&i| injections[i]));
    let solved = reduced.lu().solve(&rhs).expect("connected network");
    let mut theta = vec![0.0; n];
    for (r, &i) in keep.iter().enumerate() {
        theta[i] = solved[r];
    }
    let flows = weights.iter().map(|&(f, t, w)| w * (theta[f] - theta[t])).collect();
    (theta, flows)
}

/// Random connected network: a random spanning tree, plus a few extra branches when `meshed`.
pub fn random_network(rng: &mut ChaCha8Rng, max_buses: usize, meshed: bool) -> Network {
    let n = rng.gen_range(2..=max_buses);
    let ids: Vec<u32> = (0..n as u32).map(|k| 10 + 3 * k).collect();
    let mut branches = Vec::new();
    let line = |rng: &mut ChaCha8Rng, a: u32, b: u32| {
        let (from_bus, to_bus) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        Branch {
            from_bus,
            to_bus,
            r_pu: if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.001..0.1) },
            x_pu: rng.gen_range(0.005..0.3),
            rated_mva: rng.gen_range(0.5..5.0),
        }
    };
    for k in 1..n {
        let parent = rng.gen_range(0..k);
        branches.push(line(rng, ids[parent], ids[k]));
    }
    let extra = if meshed { rng.gen_range(0..=n / 2) } else { 0 };
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            branches.push(line(rng, ids[a], ids[b]));
        }
    }
    let buses = ids
        .iter()
        .map(|&id| Bus { id, gen_mw: vec![rng.gen_range(0.0..2.0)], demand_mw: vec![rng.gen_range(0.0..2.0)] })
        .collect();
    Network { base_mva: 10.0, buses, branches, slack_bus: ids[rng.gen_range(0..n)] }
}

/// Exhaustive search over schedules with every energy on a `quantum` MWh lattice.
/// Supports EVs without a trip; returns the best objective of the
/// planning problem or `None` when no lattice schedule is feasible.
pub fn enumerate_ev(spec: &EvSpec, prices: &PriceSet, grid: &TimeGrid, quantum: f64) -> Option<f64> {
    assert!(spec.trip.is_none(), "lattice oracle covers EVs without trips");
    let dt = grid.delta_t;
    let levels = |pmin: f64, pmax: f64| -> Vec<f64> {
        let kmax = (pmax * dt / quantum + 1e-9).floor() as i64;
        (1..=kmax).map(|k| k as f64 * quantum).filter(|e| *e >= pmin * dt - 1e-12).collect()
    };
    let up_levels = levels(spec.discharge_power_min_mw, spec.discharge_power_max_mw);
    let charge_levels = levels(spec.charge_power_min_mw, spec.charge_power_max_mw);
    // Per step: list of (energy leaving the battery, objective contribution).
    let actions: Vec<Vec<(f64, f64)>> = (0..grid.steps)
        .map(|t| {
            let mut a = vec![(0.0, 0.0)];
            if t == 0 {
                return a;
            }
            if prices.up[t] != 0.0 {
                a.extend(up_levels.iter().map(|&e| (e, e * (prices.up[t] - prices.brp_fee))));
            }
            if prices.down[t] != 0.0 {
                a.extend(charge_levels.iter().map(|&e| (-e, -e * (prices.down[t] + prices.brp_fee))));
            }
            a.extend(charge_levels.iter().map(|&e| (-e, -e * (prices.da[t] - prices.consumer_price))));
            a
        })
        .collect();
    let full = spec.soc_full();
    let min = spec.soc_min();
    let mut best: Option<f64> = None;
    fn walk(t: usize, soc: f64, value: f64, actions: &[Vec<(f64, f64)>], bounds: (f64, f64), best: &mut Option<f64>) {
        if t == actions.len() {
            if (soc - bounds.1).abs() < 1e-9 && best.is_none_or(|b| value > b) {
                *best = Some(value);
            }
            return;
        }
        for &(out, gain) in &actions[t] {
            let next = soc - out;
            if next < bounds.0 - 1e-9 || next > bounds.1 + 1e-9 {
                continue;
            }
            walk(t + 1, next, value + gain, actions, bounds, best);
        }
    }
    walk(0, full, 0.0, &actions, (min, full), &mut best);
    best
}
