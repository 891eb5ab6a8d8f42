//! Linear and mixed-binary programming.
//!
//! A dense bounded-variable primal simplex backs [`solve_lp`]; [`solve_milp`]
//! runs best-first branch-and-bound over LP relaxations. Problem sizes in this
//! crate stay below a few hundred rows, so no sparse factorization is used.

mod lp_format;
mod milp;
mod simplex;

pub use lp_format::write_lp;
pub use milp::{solve_milp, solve_milp_with};
pub use simplex::{solve_lp, solve_lp_with};

/// Primal feasibility tolerance on constraint rows and variable bounds.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Distance from {0, 1} under which a binary counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Absolute optimality gap at which branch-and-bound stops.
pub const OPTIMALITY_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// Index of a variable inside a [`LinearProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(Var, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub names: Vec<String>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            names: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> Var {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        Var(self.objective.len() - 1)
    }

    pub fn add_constraint(&mut self, terms: Vec<(Var, f64)>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint { terms, relation, rhs });
        self.constraints.len() - 1
    }

    pub fn set_bounds(&mut self, var: Var, lower: f64, upper: f64) {
        self.lower[var.0] = lower;
        self.upper[var.0] = upper;
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Objective value of `values` in the problem's own sense.
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Largest violation of any bound or constraint row at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &x) in values.iter().enumerate() {
            worst = worst.max(self.lower[j] - x).max(x - self.upper[j]);
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|(v, a)| a * values[v.0]).sum();
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Returns a description of the first malformed element, if any.
    pub fn check_well_formed(&self) -> Option<String> {
        let n = self.num_vars();
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Some(format!("objective coefficient of {} is not finite", self.names[j]));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Some(format!("invalid bounds on {}", self.names[j]));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Some(format!("infinite bound on the wrong side of {}", self.names[j]));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Some(format!("row {i} has a non-finite right-hand side"));
            }
            for (v, a) in &c.terms {
                if v.0 >= n {
                    return Some(format!("row {i} references unknown variable {}", v.0));
                }
                if !a.is_finite() {
                    return Some(format!("row {i} has a non-finite coefficient"));
                }
            }
        }
        None
    }
}

/// A linear program whose listed variables are restricted to {0, 1}.
#[derive(Clone, Debug, PartialEq)]
pub struct MilpProblem {
    pub lp: LinearProgram,
    pub binaries: Vec<Var>,
}

impl MilpProblem {
    pub fn new(lp: LinearProgram) -> Self {
        Self { lp, binaries: Vec::new() }
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> Var {
        let v = self.lp.add_var(name, cost, 0.0, 1.0);
        self.binaries.push(v);
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NodeLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub status: Status,
    /// Objective in the problem's own sense. NaN unless optimal.
    pub objective: f64,
    pub values: Vec<f64>,
    /// Row duals (LP only): d objective / d rhs.
    pub duals: Vec<f64>,
    /// Simplex pivots (LP) or explored nodes (MILP).
    pub work: usize,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn value(&self, var: Var) -> f64 {
        self.values[var.0]
    }

    pub(crate) fn failed(status: Status, n: usize, work: usize) -> Self {
        Self { status, objective: f64::NAN, values: vec![f64::NAN; n], duals: Vec::new(), work }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub max_pivots: usize,
    pub max_nodes: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_pivots: 50_000, max_nodes: 100_000, degenerate_limit: 1_000 }
    }
}
