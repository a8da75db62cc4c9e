//! Linear programs and a self-contained simplex solver.
//!
//! Programs are always minimizations over variables with (possibly
//! infinite) bounds and sparse constraint rows.

mod simplex;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute feasibility tolerance on normalized rows.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    names: Vec<Option<String>>,
    constraints: Vec<Constraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Numerical breakdown or iteration limit; never reported as optimal.
    SolverFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_variables(&self) -> usize {
        self.cost.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_variable(&mut self, lower: f64, upper: f64, cost: f64) -> Result<VarId> {
        if lower.is_nan() || upper.is_nan() || lower > upper || lower == f64::INFINITY {
            return Err(Error::InvalidProgram(format!(
                "bounds [{lower}, {upper}] for variable {}",
                self.cost.len()
            )));
        }
        if !cost.is_finite() {
            return Err(Error::InvalidProgram(format!("cost {cost} is not finite")));
        }
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        self.names.push(None);
        Ok(VarId(self.cost.len() - 1))
    }

    pub fn add_named_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
    ) -> Result<VarId> {
        let id = self.add_variable(lower, upper, cost)?;
        self.names[id.0] = Some(name.into());
        Ok(id)
    }

    pub fn add_constraint(
        &mut self,
        terms: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<()> {
        if !rhs.is_finite() {
            return Err(Error::InvalidProgram(format!("right-hand side {rhs}")));
        }
        for &(var, coef) in &terms {
            if var.0 >= self.cost.len() {
                return Err(Error::InvalidProgram(format!(
                    "constraint references undeclared variable {}",
                    var.0
                )));
            }
            if !coef.is_finite() {
                return Err(Error::InvalidProgram(format!("coefficient {coef}")));
            }
        }
        self.constraints.push(Constraint {
            terms,
            relation,
            rhs,
        });
        Ok(())
    }

    pub fn bounds(&self, var: VarId) -> (f64, f64) {
        (self.lower[var.0], self.upper[var.0])
    }

    pub fn cost(&self, var: VarId) -> f64 {
        self.cost[var.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_at(&self, values: &[f64]) -> f64 {
        self.cost.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Largest violation of any bound or row at `values`, with each row
    /// divided by its largest coefficient magnitude.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (i, &x) in values.iter().enumerate() {
            worst = worst.max(self.lower[i] - x).max(x - self.upper[i]);
        }
        for c in &self.constraints {
            let norm = c.terms.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs()));
            let norm = if norm > 0.0 { norm } else { 1.0 };
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v.0]).sum();
            let gap = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap / norm);
        }
        worst
    }

    pub fn solve(&self) -> LpSolution {
        simplex::solve(self)
    }

    /// Renders the program in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let name = |i: usize| match &self.names[i] {
            Some(n) => n.clone(),
            None => format!("x{i}"),
        };
        let mut out = String::from("\\ intergrid linear program\nMinimize\n obj:");
        let mut any = false;
        for (i, &c) in self.cost.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(out, " {} {} {}", sign(c), c.abs(), name(i));
                any = true;
            }
        }
        if !any {
            out.push_str(" 0 x0");
        }
        out.push_str("\nSubject To\n");
        for (r, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{r}:");
            if c.terms.is_empty() {
                out.push_str(" 0 x0");
            }
            for &(v, a) in &c.terms {
                let _ = write!(out, " {} {} {}", sign(a), a.abs(), name(v.0));
            }
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {rel} {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for i in 0..self.cost.len() {
            let (l, u) = (self.lower[i], self.upper[i]);
            let n = name(i);
            match (l.is_finite(), u.is_finite()) {
                (true, true) if l == u => {
                    let _ = writeln!(out, " {n} = {l}");
                }
                (true, true) => {
                    let _ = writeln!(out, " {l} <= {n} <= {u}");
                }
                (true, false) => {
                    let _ = writeln!(out, " {n} >= {l}");
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {n} <= {u}");
                }
                (false, false) => {
                    let _ = writeln!(out, " {n} free");
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

fn sign(x: f64) -> char {
    if x < 0.0 {
        '-'
    } else {
        '+'
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lower_bound_is_optimum() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(f64::NEG_INFINITY, f64::INFINITY, 1.0).unwrap();
        lp.add_constraint(vec![(x, 1.0)], Relation::Ge, 3.0).unwrap();
        let sol = lp.solve();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.value(x), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(f64::NEG_INFINITY, f64::INFINITY, 0.0).unwrap();
        lp.add_constraint(vec![(x, 1.0)], Relation::Le, 1.0).unwrap();
        lp.add_constraint(vec![(x, 1.0)], Relation::Ge, 2.0).unwrap();
        assert_eq!(lp.solve().status, LpStatus::Infeasible);
    }

    #[test]
    fn contradictory_bounds_and_rows_are_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(0.0, 1.0, 1.0).unwrap();
        let y = lp.add_variable(0.0, 1.0, 1.0).unwrap();
        lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Eq, 3.0).unwrap();
        assert_eq!(lp.solve().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_is_detected() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(0.0, f64::INFINITY, -1.0).unwrap();
        let y = lp.add_variable(0.0, f64::INFINITY, 0.0).unwrap();
        lp.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Le, 2.0).unwrap();
        assert_eq!(lp.solve().status, LpStatus::Unbounded);

        let mut lp = LinearProgram::new();
        let z = lp.add_variable(f64::NEG_INFINITY, 5.0, 1.0).unwrap();
        let _ = z;
        assert_eq!(lp.solve().status, LpStatus::Unbounded);
    }

    #[test]
    fn upper_bounds_and_free_variables() {
        // max x + y  s.t. x + 2y <= 4, x <= 3, y free, y >= -1 via row.
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(f64::NEG_INFINITY, 3.0, -1.0).unwrap();
        let y = lp.add_variable(f64::NEG_INFINITY, f64::INFINITY, -1.0).unwrap();
        lp.add_constraint(vec![(x, 1.0), (y, 2.0)], Relation::Le, 4.0).unwrap();
        lp.add_constraint(vec![(y, 1.0)], Relation::Ge, -1.0).unwrap();
        lp.add_constraint(vec![(x, 1.0)], Relation::Ge, -10.0).unwrap();
        let sol = lp.solve();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.value(x), 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.value(y), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, -3.5, epsilon = 1e-9);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(0.0, 10.0, 1.0).unwrap();
        let y = lp.add_variable(0.0, 10.0, 2.0).unwrap();
        lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Eq, 4.0).unwrap();
        lp.add_constraint(vec![(x, 2.0), (y, 2.0)], Relation::Eq, 8.0).unwrap();
        let sol = lp.solve();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_rows() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable(0.0, 1.0, -1.0).unwrap();
        lp.add_constraint(vec![], Relation::Le, 1.0).unwrap();
        let sol = lp.solve();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.value(x), 1.0);
        lp.add_constraint(vec![], Relation::Ge, 1.0).unwrap();
        assert_eq!(lp.solve().status, LpStatus::Infeasible);
    }

    #[test]
    fn rejects_malformed_input() {
        let mut lp = LinearProgram::new();
        assert!(lp.add_variable(2.0, 1.0, 0.0).is_err());
        assert!(lp.add_variable(0.0, 1.0, f64::NAN).is_err());
        assert!(lp
            .add_constraint(vec![(VarId(3), 1.0)], Relation::Le, 0.0)
            .is_err());
    }

    #[test]
    fn lp_format_dump() {
        let mut lp = LinearProgram::new();
        let x = lp.add_named_variable("gen_0", 0.0, 5.0, -1.0).unwrap();
        let y = lp.add_variable(f64::NEG_INFINITY, f64::INFINITY, 0.0).unwrap();
        lp.add_constraint(vec![(x, 1.0), (y, -2.0)], Relation::Eq, 1.0).unwrap();
        let text = lp.to_lp_format();
        assert!(text.contains("obj: - 1 gen_0"));
        assert!(text.contains("c0: + 1 gen_0 - 2 x1 = 1"));
        assert!(text.contains("0 <= gen_0 <= 5"));
        assert!(text.contains("x1 free"));
        assert!(text.ends_with("End\n"));
    }
}
