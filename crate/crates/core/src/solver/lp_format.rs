//! CPLEX LP text dump, for cross-checking instances against external solvers.

use std::fmt::Write;

use super::{LinearProgram, MilpProblem, Relation, Sense};

fn sanitize(name: &str, idx: usize) -> String {
    let cleaned: String =
        name.chars().map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' }).collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("x{idx}_{cleaned}")
    } else {
        cleaned
    }
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (String, f64)>) {
    let mut any = false;
    for (name, coef) in terms {
        if coef == 0.0 {
            continue;
        }
        let op = if coef < 0.0 { "-" } else { "+" };
        let _ = write!(out, " {op} {} {name}", coef.abs());
        any = true;
    }
    if !any {
        out.push_str(" 0");
    }
}

/// Renders the problem in CPLEX LP format. `binaries` may be empty.
pub fn write_lp(lp: &LinearProgram, binaries: &[super::Var]) -> String {
    let names: Vec<String> = lp.names.iter().enumerate().map(|(i, n)| sanitize(n, i)).collect();
    let mut out = String::new();
    out.push_str(match lp.sense {
        Sense::Minimize => "Minimize\n obj:",
        Sense::Maximize => "Maximize\n obj:",
    });
    write_terms(&mut out, lp.objective.iter().enumerate().map(|(j, &c)| (names[j].clone(), c)));
    out.push_str("\nSubject To\n");
    for (i, c) in lp.constraints.iter().enumerate() {
        let _ = write!(out, " c{i}:");
        write_terms(&mut out, c.terms.iter().map(|(v, a)| (names[v.0].clone(), *a)));
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        let _ = writeln!(out, " {rel} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for (j, name) in names.iter().enumerate() {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l == u {
            let _ = writeln!(out, " {name} = {l}");
        } else if l.is_infinite() && u.is_infinite() {
            let _ = writeln!(out, " {name} free");
        } else {
            let lo = if l.is_infinite() { "-inf".to_string() } else { l.to_string() };
            let hi = if u.is_infinite() { "+inf".to_string() } else { u.to_string() };
            let _ = writeln!(out, " {lo} <= {name} <= {hi}");
        }
    }
    if !binaries.is_empty() {
        out.push_str("Binary\n");
        for b in binaries {
            let _ = writeln!(out, " {}", names[b.0]);
        }
    }
    out.push_str("End\n");
    out
}

impl MilpProblem {
    pub fn to_lp_string(&self) -> String {
        write_lp(&self.lp, &self.binaries)
    }
}
