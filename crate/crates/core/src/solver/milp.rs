//! Best-first branch-and-bound over LP relaxations.
//!
//! Nodes are ordered by their parent's relaxation bound, ties by creation
//! order. After branching the solver plunges into the child on the rounding
//! side of the branching variable, which finds incumbents early without
//! changing the final answer.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::solve_lp_with;
use super::{MilpProblem, Sense, Solution, SolverOptions, Status, INTEGRALITY_TOL, OPTIMALITY_GAP};

pub fn solve_milp(p: &MilpProblem) -> Solution {
    solve_milp_with(p, &SolverOptions::default())
}

pub fn solve_milp_with(p: &MilpProblem, opts: &SolverOptions) -> Solution {
    let n = p.lp.num_vars();
    for b in &p.binaries {
        assert!(b.0 < n, "binary index {} out of range", b.0);
    }
    if p.binaries.is_empty() {
        return solve_lp_with(&p.lp, opts);
    }
    let sign = match p.lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut binaries: Vec<usize> = p.binaries.iter().map(|v| v.0).collect();
    binaries.sort_unstable();
    binaries.dedup();

    let mut base = p.lp.clone();
    for &b in &binaries {
        base.lower[b] = base.lower[b].max(0.0);
        base.upper[b] = base.upper[b].min(1.0);
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0u64;
    heap.push(Node { bound: f64::NEG_INFINITY, id: next_id, fixes: Vec::new() });
    next_id += 1;

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;

    while let Some(node) = heap.pop() {
        let mut current = Some(node);
        while let Some(node) = current.take() {
            if pruned(node.bound, &incumbent) {
                continue;
            }
            if nodes >= opts.max_nodes {
                return Solution::failed(Status::NodeLimit, n, nodes);
            }
            nodes += 1;

            let mut lp = base.clone();
            for &(j, v) in &node.fixes {
                lp.lower[j] = v;
                lp.upper[j] = v;
            }
            let relax = solve_lp_with(&lp, opts);
            match relax.status {
                Status::Optimal => {}
                Status::Infeasible => continue,
                Status::Unbounded => {
                    if incumbent.is_none() && node.fixes.is_empty() {
                        return Solution::failed(Status::Unbounded, n, nodes);
                    }
                    continue;
                }
                other => return Solution::failed(other, n, nodes),
            }
            let bound = sign * relax.objective;
            if pruned(bound, &incumbent) {
                continue;
            }

            // Most fractional binary, lowest index on ties.
            let mut branch: Option<(usize, f64)> = None;
            for &b in &binaries {
                let v = relax.values[b];
                let frac = (v - v.round()).abs();
                if frac > INTEGRALITY_TOL && branch.is_none_or(|(_, f)| frac > f + 1e-12) {
                    branch = Some((b, frac));
                }
            }

            match branch {
                None => {
                    let (obj, values) = polish(&lp, &binaries, relax, sign, opts);
                    if incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
                        incumbent = Some((obj, values));
                    }
                }
                Some((b, _)) => {
                    let first = if relax.values[b] >= 0.5 { 1.0 } else { 0.0 };
                    let mut dive = node.fixes.clone();
                    dive.push((b, first));
                    let mut other = node.fixes;
                    other.push((b, 1.0 - first));
                    heap.push(Node { bound, id: next_id, fixes: other });
                    next_id += 1;
                    current = Some(Node { bound, id: next_id, fixes: dive });
                    next_id += 1;
                }
            }
        }
    }

    match incumbent {
        Some((obj, values)) => {
            Solution { status: Status::Optimal, objective: sign * obj, values, duals: Vec::new(), work: nodes }
        }
        None => Solution::failed(Status::Infeasible, n, nodes),
    }
}

fn pruned(bound: f64, incumbent: &Option<(f64, Vec<f64>)>) -> bool {
    incumbent.as_ref().is_some_and(|(best, _)| bound >= best - OPTIMALITY_GAP)
}

/// Rounds binaries and re-solves the continuous part so the incumbent is exactly integral.
fn polish(
    lp: &super::LinearProgram,
    binaries: &[usize],
    relax: Solution,
    sign: f64,
    opts: &SolverOptions,
) -> (f64, Vec<f64>) {
    let mut fixed = lp.clone();
    for &b in binaries {
        let v = relax.values[b].round();
        fixed.lower[b] = v;
        fixed.upper[b] = v;
    }
    let clean = solve_lp_with(&fixed, opts);
    if clean.is_optimal() {
        (sign * clean.objective, clean.values)
    } else {
        (sign * relax.objective, relax.values)
    }
}

struct Node {
    bound: f64,
    id: u64,
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound and older id must compare greater.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}
