//! Dense bounded-variable primal simplex, two phases.
//!
//! Every row `a x (<=|>=|=) b` gets a slack `s` with `a x + s = b`, bounded
//! `[0, inf)`, `(-inf, 0]` or `[0, 0]`. Nonbasic columns sit at a finite bound
//! (or at zero when free). Rows whose starting slack falls outside its bounds
//! receive an artificial column driven to zero by phase one.

#![allow(clippy::needless_range_loop)]

use super::{LinearProgram, Relation, Sense, Solution, SolverOptions, Status, FEASIBILITY_TOL};
use crate::linalg::Lu;

const PIVOT_TOL: f64 = 1e-9;
const OPTIMALITY_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;

pub fn solve_lp(lp: &LinearProgram) -> Solution {
    solve_lp_with(lp, &SolverOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &SolverOptions) -> Solution {
    if let Some(msg) = lp.check_well_formed() {
        panic!("malformed linear program: {msg}");
    }
    match Tableau::build(lp) {
        Build::Ready(mut t) => t.run(lp, opts),
        Build::Infeasible => Solution::failed(Status::Infeasible, lp.num_vars(), 0),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural(usize),
    Slack(usize),
    Artificial,
}

enum Build {
    Ready(Box<Tableau>),
    Infeasible,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Row-major `m x ncols`, holding `B^-1 A`.
    rows: Vec<f64>,
    /// Original (unreduced) column data for refactorization: row-major `m x ncols`.
    original: Vec<f64>,
    rhs: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    kind: Vec<Kind>,
    /// Current value of every column; basic entries are refreshed from `beta`.
    x: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    beta: Vec<f64>,
    d: Vec<f64>,
    /// Problem row index for each tableau row.
    row_origin: Vec<usize>,
    /// Fixed structural values, indexed by original variable.
    fixed: Vec<Option<f64>>,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Build {
        let n = lp.num_vars();
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let fixed: Vec<Option<f64>> = (0..n).map(|j| (lp.lower[j] == lp.upper[j]).then_some(lp.lower[j])).collect();

        let mut kind = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut cost = Vec::new();
        let mut col_of = vec![usize::MAX; n];
        for j in 0..n {
            if fixed[j].is_none() {
                col_of[j] = kind.len();
                kind.push(Kind::Structural(j));
                lo.push(lp.lower[j]);
                hi.push(lp.upper[j]);
                cost.push(sign * lp.objective[j]);
            }
        }

        // Reduce rows: fold fixed columns into the rhs and drop empty rows.
        let mut dense_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut rhs = Vec::new();
        let mut relations = Vec::new();
        let mut row_origin = Vec::new();
        for (i, c) in lp.constraints.iter().enumerate() {
            let mut b = c.rhs;
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for &(v, a) in &c.terms {
                if a == 0.0 {
                    continue;
                }
                match fixed[v.0] {
                    Some(val) => b -= a * val,
                    None => acc.push((col_of[v.0], a)),
                }
            }
            acc.sort_by_key(|&(k, _)| k);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
            for (k, a) in acc {
                match merged.last_mut() {
                    Some(last) if last.0 == k => last.1 += a,
                    _ => merged.push((k, a)),
                }
            }
            merged.retain(|&(_, a)| a != 0.0);
            if merged.is_empty() {
                let tol = FEASIBILITY_TOL * (1.0 + c.rhs.abs());
                let ok = match c.relation {
                    Relation::Le => b >= -tol,
                    Relation::Ge => b <= tol,
                    Relation::Eq => b.abs() <= tol,
                };
                if !ok {
                    return Build::Infeasible;
                }
                continue;
            }
            dense_rows.push(merged);
            rhs.push(b);
            relations.push(c.relation);
            row_origin.push(i);
        }
        let m = dense_rows.len();

        for (r, rel) in relations.iter().enumerate() {
            kind.push(Kind::Slack(r));
            let (l, h) = match rel {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
            cost.push(0.0);
        }

        // Starting point: structurals at a finite bound, else zero.
        let mut x: Vec<f64> = (0..kind.len())
            .map(|k| {
                if lo[k].is_finite() {
                    lo[k]
                } else if hi[k].is_finite() {
                    hi[k]
                } else {
                    0.0
                }
            })
            .collect();

        let mut basis = Vec::with_capacity(m);
        let mut beta = Vec::with_capacity(m);
        let mut artificials: Vec<(usize, f64)> = Vec::new();
        for r in 0..m {
            let slack = kind.iter().position(|k| *k == Kind::Slack(r)).unwrap();
            let activity: f64 = dense_rows[r].iter().map(|&(k, a)| a * x[k]).sum();
            let resid = rhs[r] - activity;
            if resid >= lo[slack] && resid <= hi[slack] {
                basis.push(slack);
                beta.push(resid);
                x[slack] = resid;
            } else {
                let clamp = resid.clamp(lo[slack], hi[slack]);
                x[slack] = clamp;
                let excess = resid - clamp;
                let sigma = if excess > 0.0 { 1.0 } else { -1.0 };
                artificials.push((r, sigma));
                basis.push(usize::MAX);
                beta.push(excess.abs());
            }
        }
        for &(r, _) in &artificials {
            let col = kind.len();
            kind.push(Kind::Artificial);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            cost.push(0.0);
            x.push(0.0);
            basis[r] = col;
        }
        let ncols = kind.len();

        let mut original = vec![0.0; m * ncols];
        for r in 0..m {
            for &(k, a) in &dense_rows[r] {
                original[r * ncols + k] = a;
            }
        }
        for (k, kd) in kind.iter().enumerate() {
            if let Kind::Slack(r) = kd {
                original[r * ncols + k] = 1.0;
            }
        }
        for (idx, &(r, sigma)) in artificials.iter().enumerate() {
            let col = ncols - artificials.len() + idx;
            original[r * ncols + col] = sigma;
        }

        // Tableau rows in terms of the starting basis: divide artificial rows by sigma.
        let mut rows = original.clone();
        for &(r, sigma) in &artificials {
            if sigma < 0.0 {
                for v in &mut rows[r * ncols..(r + 1) * ncols] {
                    *v = -*v;
                }
            }
        }

        let mut is_basic = vec![false; ncols];
        for &b in &basis {
            is_basic[b] = true;
        }
        for (r, &b) in basis.iter().enumerate() {
            x[b] = beta[r];
        }

        Build::Ready(Box::new(Self {
            m,
            ncols,
            rows,
            original,
            rhs,
            lo,
            hi,
            cost,
            kind,
            x,
            basis,
            is_basic,
            beta,
            d: vec![0.0; ncols],
            row_origin,
            fixed,
            pivots: 0,
        }))
    }

    fn run(&mut self, lp: &LinearProgram, opts: &SolverOptions) -> Solution {
        let n = lp.num_vars();
        let has_artificials = self.kind.contains(&Kind::Artificial);
        if has_artificials {
            let phase1: Vec<f64> = self.kind.iter().map(|k| if *k == Kind::Artificial { 1.0 } else { 0.0 }).collect();
            self.price(&phase1);
            match self.iterate(&phase1, opts) {
                Outcome::Optimal => {}
                Outcome::IterationLimit => return Solution::failed(Status::IterationLimit, n, self.pivots),
                Outcome::Unbounded => unreachable!("phase one is bounded below by zero"),
            }
            let infeas: f64 =
                (0..self.ncols).filter(|&k| self.kind[k] == Kind::Artificial).map(|k| self.value(k)).sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            if infeas > FEASIBILITY_TOL * scale {
                return Solution::failed(Status::Infeasible, n, self.pivots);
            }
            for k in 0..self.ncols {
                if self.kind[k] == Kind::Artificial {
                    self.hi[k] = 0.0;
                    if !self.is_basic[k] {
                        self.x[k] = 0.0;
                    }
                }
            }
            self.drive_out_artificials();
        }

        let cost = self.cost.clone();
        self.price(&cost);
        match self.iterate(&cost, opts) {
            Outcome::Optimal => {}
            Outcome::Unbounded => return Solution::failed(Status::Unbounded, n, self.pivots),
            Outcome::IterationLimit => return Solution::failed(Status::IterationLimit, n, self.pivots),
        }
        self.extract(lp)
    }

    fn value(&self, k: usize) -> f64 {
        if self.is_basic[k] {
            let r = self.basis.iter().position(|&b| b == k).unwrap();
            self.beta[r]
        } else {
            self.x[k]
        }
    }

    /// Recomputes reduced costs `d = c - c_B B^-1 A` from the tableau.
    fn price(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.rows[r * self.ncols..(r + 1) * self.ncols];
            for (dk, a) in self.d.iter_mut().zip(row) {
                *dk -= cb * a;
            }
        }
    }

    fn iterate(&mut self, cost: &[f64], opts: &SolverOptions) -> Outcome {
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run >= opts.degenerate_limit;
            let Some((q, dir)) = self.choose_entering(bland) else {
                return Outcome::Optimal;
            };
            if self.pivots >= opts.max_pivots {
                return Outcome::IterationLimit;
            }
            let step = self.ratio_test(q, dir, bland);
            let theta = match step {
                Step::Unbounded => return Outcome::Unbounded,
                Step::Flip(theta) => {
                    self.apply_step(q, dir, theta);
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    theta
                }
                Step::Pivot(r, theta, to_upper) => {
                    self.apply_step(q, dir, theta);
                    let leaving = self.basis[r];
                    let entering_value = self.x[q] + dir * theta;
                    self.x[leaving] = if to_upper { self.hi[leaving] } else { self.lo[leaving] };
                    self.pivot(r, q);
                    self.beta[r] = entering_value;
                    self.x[q] = entering_value;
                    theta
                }
            };
            self.pivots += 1;
            if theta <= DEGENERATE_STEP {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            // Refresh reduced costs occasionally to bound drift.
            if self.pivots.is_multiple_of(200) {
                self.price(cost);
            }
        }
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for k in 0..self.ncols {
            if self.is_basic[k] || self.hi[k] <= self.lo[k] {
                continue;
            }
            let dk = self.d[k];
            let can_inc = self.x[k] < self.hi[k];
            let can_dec = self.x[k] > self.lo[k];
            let candidate = if dk < -OPTIMALITY_TOL && can_inc {
                Some((1.0, -dk))
            } else if dk > OPTIMALITY_TOL && can_dec {
                Some((-1.0, dk))
            } else {
                None
            };
            if let Some((dir, score)) = candidate {
                if bland {
                    return Some((k, dir));
                }
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((k, dir, score));
                }
            }
        }
        best.map(|(k, dir, _)| (k, dir))
    }

    fn ratio_test(&self, q: usize, dir: f64, bland: bool) -> Step {
        let mut flip = self.hi[q] - self.lo[q];
        if !flip.is_finite() {
            flip = f64::INFINITY;
        }
        let mut best: Option<(usize, f64, bool, f64)> = None;
        for r in 0..self.m {
            let alpha = self.rows[r * self.ncols + q];
            if alpha.abs() < PIVOT_TOL {
                continue;
            }
            let b = self.basis[r];
            let rate = -dir * alpha;
            let (ratio, to_upper) = if rate < 0.0 {
                if !self.lo[b].is_finite() {
                    continue;
                }
                (((self.beta[r] - self.lo[b]) / -rate).max(0.0), false)
            } else {
                if !self.hi[b].is_finite() {
                    continue;
                }
                (((self.hi[b] - self.beta[r]) / rate).max(0.0), true)
            };
            let better = match best {
                None => true,
                Some((br, bratio, _, balpha)) => {
                    if ratio < bratio - DEGENERATE_STEP {
                        true
                    } else if ratio <= bratio + DEGENERATE_STEP {
                        if bland {
                            b < self.basis[br]
                        } else {
                            alpha.abs() > balpha
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((r, ratio, to_upper, alpha.abs()));
            }
        }
        match best {
            Some((r, ratio, to_upper, _)) if ratio < flip => Step::Pivot(r, ratio, to_upper),
            _ if flip.is_finite() => Step::Flip(flip),
            Some((r, ratio, to_upper, _)) => Step::Pivot(r, ratio, to_upper),
            None => Step::Unbounded,
        }
    }

    fn apply_step(&mut self, q: usize, dir: f64, theta: f64) {
        if theta == 0.0 {
            return;
        }
        for r in 0..self.m {
            let alpha = self.rows[r * self.ncols + q];
            if alpha != 0.0 {
                self.beta[r] -= dir * alpha * theta;
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let alpha = self.rows[r * nc + q];
        {
            let row = &mut self.rows[r * nc..(r + 1) * nc];
            for v in row.iter_mut() {
                *v /= alpha;
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.rows[r * nc..(r + 1) * nc].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.rows[i * nc + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.rows[i * nc..(i + 1) * nc];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if *p != 0.0 {
                    *v -= f * p;
                }
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.d[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
    }

    /// Pivots zero-valued artificials out of the basis where a replacement exists.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if self.kind[self.basis[r]] != Kind::Artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for k in 0..self.ncols {
                if self.is_basic[k] || self.kind[k] == Kind::Artificial {
                    continue;
                }
                let a = self.rows[r * self.ncols + k].abs();
                if a > 1e-7 && best.is_none_or(|(_, b)| a > b) {
                    best = Some((k, a));
                }
            }
            if let Some((k, _)) = best {
                let leaving = self.basis[r];
                self.x[leaving] = 0.0;
                let entering_value = self.x[k];
                self.pivot(r, k);
                // The artificial was (numerically) zero, so other basics keep their values.
                self.beta[r] = entering_value;
            }
        }
    }

    /// Refactors the final basis against the original rows and assembles the answer.
    fn extract(&mut self, lp: &LinearProgram) -> Solution {
        let m = self.m;
        let nc = self.ncols;
        let n = lp.num_vars();
        if m > 0 {
            let mut bmat = vec![0.0; m * m];
            for (c, &k) in self.basis.iter().enumerate() {
                for r in 0..m {
                    bmat[r * m + c] = self.original[r * nc + k];
                }
            }
            if let Some(lu) = Lu::factor(bmat, m, 1e-14) {
                let mut resid = self.rhs.clone();
                for k in 0..nc {
                    if self.is_basic[k] || self.x[k] == 0.0 {
                        continue;
                    }
                    for r in 0..m {
                        resid[r] -= self.original[r * nc + k] * self.x[k];
                    }
                }
                let xb = lu.solve(&resid);
                for (r, &k) in self.basis.iter().enumerate() {
                    self.beta[r] = xb[r];
                    self.x[k] = xb[r];
                }
                let cb: Vec<f64> = self.basis.iter().map(|&k| self.cost[k]).collect();
                let y = lu.solve_transpose(&cb);
                self.finish(lp, Some(y))
            } else {
                for (r, &k) in self.basis.iter().enumerate() {
                    self.x[k] = self.beta[r];
                }
                self.finish(lp, None)
            }
        } else {
            let _ = n;
            self.finish(lp, Some(Vec::new()))
        }
    }

    fn finish(&self, lp: &LinearProgram, y: Option<Vec<f64>>) -> Solution {
        let n = lp.num_vars();
        let mut values = vec![0.0; n];
        for j in 0..n {
            if let Some(v) = self.fixed[j] {
                values[j] = v;
            }
        }
        for (k, kd) in self.kind.iter().enumerate() {
            if let Kind::Structural(j) = *kd {
                // Snap to bounds that drift has overshot by less than the tolerance.
                let v = self.x[k];
                values[j] = if v < lp.lower[j] && v > lp.lower[j] - FEASIBILITY_TOL {
                    lp.lower[j]
                } else if v > lp.upper[j] && v < lp.upper[j] + FEASIBILITY_TOL {
                    lp.upper[j]
                } else {
                    v
                };
            }
        }
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut duals = vec![0.0; lp.constraints.len()];
        if let Some(y) = y {
            for (r, &orig) in self.row_origin.iter().enumerate() {
                duals[orig] = sign * y[r];
            }
        }
        Solution { status: Status::Optimal, objective: lp.evaluate(&values), values, duals, work: self.pivots }
    }
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot(usize, f64, bool),
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn maximize_single_bound() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var("x", 1.0, 0.0, f64::INFINITY);
        lp.add_constraint(vec![(x, 1.0)], Relation::Le, 3.0);
        let s = solve_lp(&lp);
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn minimize_cover() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 1.0, 0.0, 5.0);
        let y = lp.add_var("y", 1.0, 0.0, 5.0);
        lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Ge, 2.0);
        let s = solve_lp(&lp);
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_rows_are_infeasible() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 0.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_constraint(vec![(x, 1.0)], Relation::Ge, 1.0);
        lp.add_constraint(vec![(x, 1.0)], Relation::Le, 0.0);
        assert_eq!(solve_lp(&lp).status, Status::Infeasible);
    }

    #[test]
    fn unbounded_ray_is_detected() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var("x", 1.0, 0.0, f64::INFINITY);
        let y = lp.add_var("y", 0.0, 0.0, f64::INFINITY);
        lp.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(solve_lp(&lp).status, Status::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |style| problem: min t s.t. t >= x - 3, t >= 3 - x, x free, x = 1.
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 0.0, f64::NEG_INFINITY, f64::INFINITY);
        let t = lp.add_var("t", 1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_constraint(vec![(t, 1.0), (x, -1.0)], Relation::Ge, -3.0);
        lp.add_constraint(vec![(t, 1.0), (x, 1.0)], Relation::Ge, 3.0);
        lp.add_constraint(vec![(x, 1.0)], Relation::Eq, 1.0);
        let s = solve_lp(&lp);
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value(t) - 2.0).abs() < 1e-9);
        assert!((s.value(x) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_variables_fold_into_rows() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var("x", 1.0, 0.0, 10.0);
        let f = lp.add_var("f", 5.0, 2.0, 2.0);
        lp.add_constraint(vec![(x, 1.0), (f, 1.0)], Relation::Le, 6.0);
        lp.add_constraint(vec![(f, 1.0)], Relation::Le, 2.0);
        let s = solve_lp(&lp);
        assert!((s.value(x) - 4.0).abs() < 1e-12);
        assert!((s.objective - 14.0).abs() < 1e-12);
        lp.add_constraint(vec![(f, 1.0)], Relation::Ge, 3.0);
        assert_eq!(solve_lp(&lp).status, Status::Infeasible);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let vars: Vec<_> = (0..5).map(|i| lp.add_var(format!("x{i}"), 1.0, 0.0, 1.0)).collect();
        lp.add_constraint(vars.iter().map(|&v| (v, 1.0)).collect(), Relation::Le, 2.5);
        let opts = SolverOptions { max_pivots: 1, ..Default::default() };
        assert_eq!(solve_lp_with(&lp, &opts).status, Status::IterationLimit);
    }
}
