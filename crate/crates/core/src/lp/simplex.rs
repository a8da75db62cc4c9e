//! Dense two-phase primal simplex on a bounded-variable standard form.
//!
//! Every user variable is mapped to columns with bounds `[0, u]` (shifted,
//! negated or split into positive and negative parts), rows are scaled to a
//! unit largest coefficient and turned into equalities with slack columns,
//! and rows without a usable slack get an artificial column. Nonbasic
//! columns sit at either bound, so finite upper bounds never become rows.
//!
//! Pricing is Dantzig's largest reduced cost. After a run of degenerate
//! pivots the solver switches to Bland's smallest-index rule until the
//! objective moves again, which rules out cycling. The final basis is
//! refactored from the original rows to clean up accumulated round-off, and
//! the point is checked against the caller's program before it is reported
//! as optimal.

use nalgebra::{DMatrix, DVector};

use super::{LinearProgram, LpSolution, LpStatus, Relation, FEASIBILITY_TOLERANCE};

const PIVOT_TOLERANCE: f64 = 1e-9;
const COST_TOLERANCE: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Copy, Debug)]
enum Mapping {
    /// `x = offset + y`
    Shift { col: usize, offset: f64 },
    /// `x = offset − y`
    Negate { col: usize, offset: f64 },
    /// `x = y⁺ − y⁻`
    Split { pos: usize, neg: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Position {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    n: usize,
    /// `B⁻¹A`, row-major `m × n`.
    t: Vec<f64>,
    /// Current values of the basic columns.
    beta: Vec<f64>,
    basis: Vec<usize>,
    position: Vec<Position>,
    upper: Vec<f64>,
    iterations: usize,
    limit: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    Stalled,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.n + j]
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.n..(i + 1) * self.n];
                for (dj, &tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        d
    }

    fn eligible(&self, j: usize, dj: f64) -> bool {
        match self.position[j] {
            Position::Basic => false,
            Position::Lower => dj < -COST_TOLERANCE && self.upper[j] > 0.0,
            Position::Upper => dj > COST_TOLERANCE,
        }
    }

    fn pivot(&mut self, r: usize, q: usize, d: &mut [f64]) {
        let n = self.n;
        let p = self.at(r, q);
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[q] = 1.0;
        }
        let support: Vec<usize> = (0..n).filter(|&j| self.t[r * n + j] != 0.0).collect();
        let pivot_row: Vec<f64> = support.iter().map(|&j| self.t[r * n + j]).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = self.t[i * n + q];
            if factor == 0.0 {
                continue;
            }
            let row = &mut self.t[i * n..(i + 1) * n];
            for (&j, &v) in support.iter().zip(&pivot_row) {
                row[j] -= factor * v;
            }
            row[q] = 0.0;
        }
        let dq = d[q];
        if dq != 0.0 {
            for (&j, &v) in support.iter().zip(&pivot_row) {
                d[j] -= dq * v;
            }
            d[q] = 0.0;
        }
        self.basis[r] = q;
        self.position[q] = Position::Basic;
    }

    fn run(&mut self, cost: &[f64]) -> Outcome {
        let mut d = self.reduced_costs(cost);
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.limit {
                return Outcome::Stalled;
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let entering = if bland {
                (0..self.n).find(|&j| self.eligible(j, d[j]))
            } else {
                let mut best = None;
                let mut best_score = 0.0;
                for j in 0..self.n {
                    if self.eligible(j, d[j]) && d[j].abs() > best_score {
                        best_score = d[j].abs();
                        best = Some(j);
                    }
                }
                best
            };
            let Some(q) = entering else {
                return Outcome::Optimal;
            };
            self.iterations += 1;
            let dir = if self.position[q] == Position::Lower {
                1.0
            } else {
                -1.0
            };

            // Ratio test. `None` leaving row means the entering column flips
            // to its opposite bound.
            let mut step = self.upper[q];
            let mut leaving: Option<(usize, Position)> = None;
            for i in 0..self.m {
                let alpha = dir * self.at(i, q);
                let (ratio, bound) = if alpha > PIVOT_TOLERANCE {
                    (self.beta[i].max(0.0) / alpha, Position::Lower)
                } else if alpha < -PIVOT_TOLERANCE && self.upper[self.basis[i]].is_finite() {
                    let room = (self.upper[self.basis[i]] - self.beta[i]).max(0.0);
                    (room / -alpha, Position::Upper)
                } else {
                    continue;
                };
                let better = match leaving {
                    _ if ratio < step - 1e-12 => true,
                    Some((r, _)) if ratio <= step + 1e-12 => {
                        if bland {
                            self.basis[i] < self.basis[r]
                        } else {
                            self.at(i, q).abs() > self.at(r, q).abs()
                        }
                    }
                    None if ratio <= step + 1e-12 && step.is_finite() => {
                        // Tie with the bound flip: prefer a pivot only under
                        // Bland's rule for a deterministic smallest index.
                        bland
                    }
                    _ => false,
                };
                if better {
                    step = ratio;
                    leaving = Some((i, bound));
                }
            }
            if !step.is_finite() {
                return Outcome::Unbounded;
            }
            if step > 1e-12 {
                degenerate = 0;
            } else {
                degenerate += 1;
            }

            for i in 0..self.m {
                let a = self.at(i, q);
                if a != 0.0 {
                    self.beta[i] -= step * dir * a;
                }
            }
            match leaving {
                None => {
                    self.position[q] = if self.position[q] == Position::Lower {
                        Position::Upper
                    } else {
                        Position::Lower
                    };
                }
                Some((r, bound)) => {
                    let entering_value = if dir > 0.0 {
                        step
                    } else {
                        self.upper[q] - step
                    };
                    let out = self.basis[r];
                    self.pivot(r, q, &mut d);
                    self.position[out] = bound;
                    self.beta[r] = entering_value;
                }
            }
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for j in 0..self.n {
            x[j] = match self.position[j] {
                Position::Lower | Position::Basic => 0.0,
                Position::Upper => self.upper[j],
            };
        }
        for (i, &j) in self.basis.iter().enumerate() {
            x[j] = self.beta[i];
        }
        x
    }
}

pub(super) fn solve(lp: &LinearProgram) -> LpSolution {
    let nvars = lp.num_variables();
    let failed = |status: LpStatus, iterations: usize| LpSolution {
        status,
        values: vec![0.0; nvars],
        objective: f64::NAN,
        iterations,
    };

    // Columns for the user variables.
    let mut mapping = Vec::with_capacity(nvars);
    let mut upper = Vec::new();
    let mut cost = Vec::new();
    for i in 0..nvars {
        let (l, u) = (lp.lower[i], lp.upper[i]);
        let c = lp.cost[i];
        if l.is_finite() {
            mapping.push(Mapping::Shift {
                col: upper.len(),
                offset: l,
            });
            upper.push(u - l);
            cost.push(c);
        } else if u.is_finite() {
            mapping.push(Mapping::Negate {
                col: upper.len(),
                offset: u,
            });
            upper.push(f64::INFINITY);
            cost.push(-c);
        } else {
            mapping.push(Mapping::Split {
                pos: upper.len(),
                neg: upper.len() + 1,
            });
            upper.extend([f64::INFINITY, f64::INFINITY]);
            cost.extend([c, -c]);
        }
    }
    let structural = upper.len();

    // Rows over the structural columns.
    struct Row {
        coef: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    }
    let mut rows = Vec::new();
    for con in lp.constraints() {
        let mut dense = vec![0.0; structural];
        let mut rhs = con.rhs;
        for &(v, a) in &con.terms {
            match mapping[v.0] {
                Mapping::Shift { col, offset } => {
                    dense[col] += a;
                    rhs -= a * offset;
                }
                Mapping::Negate { col, offset } => {
                    dense[col] -= a;
                    rhs -= a * offset;
                }
                Mapping::Split { pos, neg } => {
                    dense[pos] += a;
                    dense[neg] -= a;
                }
            }
        }
        let scale = dense.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if scale == 0.0 {
            let ok = match con.relation {
                Relation::Le => rhs >= -FEASIBILITY_TOLERANCE,
                Relation::Ge => rhs <= FEASIBILITY_TOLERANCE,
                Relation::Eq => rhs.abs() <= FEASIBILITY_TOLERANCE,
            };
            if !ok {
                return failed(LpStatus::Infeasible, 0);
            }
            continue;
        }
        let coef = dense
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (j, a / scale))
            .collect();
        rows.push(Row {
            coef,
            relation: con.relation,
            rhs: rhs / scale,
        });
    }

    let m = rows.len();
    let slack_count = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    // A row needs an artificial unless its slack enters with +1 after the
    // sign flip that makes the right-hand side nonnegative.
    let needs_artificial: Vec<bool> = rows
        .iter()
        .map(|r| match r.relation {
            Relation::Eq => true,
            Relation::Le => r.rhs < 0.0,
            Relation::Ge => r.rhs > 0.0,
        })
        .collect();
    let artificial_count = needs_artificial.iter().filter(|&&a| a).count();
    let art_start = structural + slack_count;
    let n = art_start + artificial_count;

    upper.resize(art_start, f64::INFINITY);
    upper.resize(n, f64::INFINITY);
    cost.resize(n, 0.0);

    let mut t = vec![0.0; m * n];
    let mut b = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut next_slack = structural;
    let mut next_art = art_start;
    for (i, row) in rows.iter().enumerate() {
        // Flip rows with a negative right-hand side, and `≥` rows with a zero
        // one so that their slack starts basic with a +1 coefficient.
        let flip = row.rhs < 0.0 || (row.rhs == 0.0 && row.relation == Relation::Ge);
        let sign = if flip { -1.0 } else { 1.0 };
        for &(j, a) in &row.coef {
            t[i * n + j] = sign * a;
        }
        b[i] = sign * row.rhs;
        match row.relation {
            Relation::Eq => {}
            Relation::Le | Relation::Ge => {
                let s = if row.relation == Relation::Le { 1.0 } else { -1.0 };
                t[i * n + next_slack] = sign * s;
                if !needs_artificial[i] {
                    basis[i] = next_slack;
                }
                next_slack += 1;
            }
        }
        if needs_artificial[i] {
            t[i * n + next_art] = 1.0;
            basis[i] = next_art;
            next_art += 1;
        }
    }
    let original = t.clone();

    let mut position = vec![Position::Lower; n];
    for &j in &basis {
        position[j] = Position::Basic;
    }
    let mut tab = Tableau {
        m,
        n,
        t,
        beta: b.clone(),
        basis,
        position,
        upper,
        iterations: 0,
        limit: 50 * (m + n) + 10_000,
    };

    // Phase one.
    if artificial_count > 0 {
        let mut phase_one = vec![0.0; n];
        for c in phase_one.iter_mut().skip(art_start) {
            *c = 1.0;
        }
        match tab.run(&phase_one) {
            Outcome::Optimal => {}
            Outcome::Unbounded | Outcome::Stalled => {
                return failed(LpStatus::SolverFailure, tab.iterations)
            }
        }
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= art_start)
            .map(|i| tab.beta[i].abs())
            .sum();
        if infeasibility > FEASIBILITY_TOLERANCE {
            return LpSolution {
                status: LpStatus::Infeasible,
                values: vec![0.0; nvars],
                objective: f64::NAN,
                iterations: tab.iterations,
            };
        }
        // Drive artificials out of the basis where possible; rows where no
        // pivot exists are redundant and keep a zero-valued artificial.
        let mut scratch = vec![0.0; n];
        for r in 0..m {
            if tab.basis[r] < art_start {
                continue;
            }
            let candidate = (0..art_start)
                .filter(|&j| tab.position[j] != Position::Basic)
                .map(|j| (j, tab.at(r, j).abs()))
                .filter(|&(_, a)| a > 1e-7)
                .max_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((q, _)) = candidate {
                let value = match tab.position[q] {
                    Position::Upper => tab.upper[q],
                    _ => 0.0,
                };
                let out = tab.basis[r];
                tab.pivot(r, q, &mut scratch);
                tab.position[out] = Position::Lower;
                tab.beta[r] = value;
            }
        }
        for j in art_start..n {
            tab.upper[j] = 0.0;
        }
    }

    // Phase two on the scaled objective.
    let cost_scale = cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let cost_scale = if cost_scale > 0.0 { cost_scale } else { 1.0 };
    let scaled: Vec<f64> = cost.iter().map(|c| c / cost_scale).collect();
    match tab.run(&scaled) {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return failed(LpStatus::Unbounded, tab.iterations);
        }
        Outcome::Stalled => return failed(LpStatus::SolverFailure, tab.iterations),
    }

    let to_user = |cols: &[f64]| -> Vec<f64> {
        mapping
            .iter()
            .enumerate()
            .map(|(i, map)| {
                let x = match *map {
                    Mapping::Shift { col, offset } => offset + cols[col],
                    Mapping::Negate { col, offset } => offset - cols[col],
                    Mapping::Split { pos, neg } => cols[pos] - cols[neg],
                };
                x.clamp(lp.lower[i], lp.upper[i])
            })
            .collect()
    };

    let tableau_point = to_user(&tab.column_values());
    let mut best = tableau_point;
    let mut best_violation = lp.max_violation(&best);
    if let Some(cols) = refactor(&tab, &original, &b) {
        let refined = to_user(&cols);
        let violation = lp.max_violation(&refined);
        if violation <= best_violation {
            best = refined;
            best_violation = violation;
        }
    }
    if best_violation > FEASIBILITY_TOLERANCE {
        return failed(LpStatus::SolverFailure, tab.iterations);
    }
    LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_at(&best),
        values: best,
        iterations: tab.iterations,
    }
}

/// Recomputes the basic values from the original rows.
fn refactor(tab: &Tableau, original: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (tab.m, tab.n);
    if m == 0 {
        return Some(tab.column_values());
    }
    let mut x = tab.column_values();
    let mut rhs = DVector::from_column_slice(b);
    for j in 0..n {
        if tab.position[j] == Position::Upper && x[j] != 0.0 {
            for i in 0..m {
                rhs[i] -= original[i * n + j] * x[j];
            }
        }
    }
    let basis = DMatrix::from_fn(m, m, |i, k| original[i * n + tab.basis[k]]);
    let solved = basis.lu().solve(&rhs)?;
    for (k, &j) in tab.basis.iter().enumerate() {
        let v = solved[k];
        if !v.is_finite() {
            return None;
        }
        x[j] = v.clamp(0.0, tab.upper[j]);
    }
    Some(x)
}
