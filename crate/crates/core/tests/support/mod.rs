//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use intergrid_core::interdependency::Coupling;
use intergrid_core::lp::{LinearProgram, Relation, VarId};
use intergrid_core::network::BusRole;
use intergrid_core::power_flow::FlowSolution;
use intergrid_core::{InterdependentNetwork, NodeId, PowerGrid, Removals};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random connected grid: a random spanning tree plus extra lines, random
/// reactances, balanced injections.
pub fn random_grid<R: Rng>(rng: &mut R, n: usize, extra: usize) -> PowerGrid {
    let mut g = PowerGrid::new();
    let mut raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    for p in &mut raw {
        *p -= mean;
    }
    for &p in &raw {
        let role = if p >= 0.0 { BusRole::Generator } else { BusRole::Load };
        g.add_bus(role, p).unwrap();
    }
    for i in 1..n {
        let j = rng.gen_range(0..i);
        g.add_line(NodeId(j), NodeId(i), rng.gen_range(0.1..2.0)).unwrap();
    }
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b && g.graph().find_edge(NodeId(a), NodeId(b)).is_none() {
            g.add_line(NodeId(a), NodeId(b), rng.gen_range(0.1..2.0)).unwrap();
        }
    }
    g
}

/// Largest node-balance error `|A f − P|` and largest Ohm's-law error
/// `|θ_from − θ_to − x f|` over alive elements.
pub fn flow_residuals(grid: &PowerGrid, sol: &FlowSolution) -> (f64, f64) {
    let mut net = vec![0.0; grid.bus_count()];
    let mut ohm = 0.0_f64;
    for line in grid.graph().alive_edges() {
        let (a, b) = grid.endpoints(line);
        let f = sol.flow(line);
        net[a.0] += f;
        net[b.0] -= f;
        let x = grid.line(line).reactance;
        ohm = ohm.max((sol.phase(a) - sol.phase(b) - x * f).abs());
    }
    let balance = grid
        .graph()
        .alive_nodes()
        .map(|b| (net[b.0] - grid.bus(b).injection).abs())
        .fold(0.0, f64::max);
    (balance, ohm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// Best vertex of the program intersected with the box `|x| ≤ big`, by
/// enumerating every square subsystem of active rows.
fn boxed_vertex_optimum(lp: &LinearProgram, big: f64) -> Option<f64> {
    let n = lp.num_variables();
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for c in lp.constraints() {
        let mut a = vec![0.0; n];
        for &(v, coef) in &c.terms {
            a[v.0] += coef;
        }
        rows.push((a, c.relation, c.rhs));
    }
    for j in 0..n {
        let (lo, hi) = lp.bounds(VarId(j));
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), Relation::Ge, lo.max(-big)));
        rows.push((e, Relation::Le, hi.min(big)));
    }
    let feasible = |x: &[f64]| {
        rows.iter().all(|(a, rel, b)| {
            let lhs: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            let tol = 1e-7 * (1.0 + b.abs());
            match rel {
                Relation::Le => lhs <= b + tol,
                Relation::Ge => lhs >= b - tol,
                Relation::Eq => (lhs - b).abs() <= tol,
            }
        })
    };
    let cost: Vec<f64> = (0..n).map(|j| lp.cost(VarId(j))).collect();
    if n == 0 {
        return feasible(&[]).then_some(0.0);
    }
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(n);
    subsets(rows.len(), n, 0, &mut pick, &mut |chosen| {
        let a = DMatrix::from_fn(n, n, |r, c| rows[chosen[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| rows[chosen[r]].2);
        let Some(x) = a.lu().solve(&b) else { return };
        if x.iter().any(|v| !v.is_finite()) {
            return;
        }
        let x: Vec<f64> = x.iter().copied().collect();
        if feasible(&x) {
            let obj: f64 = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    });
    best
}

fn subsets(total: usize, k: usize, start: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..total {
        if total - i < k - pick.len() {
            break;
        }
        pick.push(i);
        subsets(total, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Status and optimum by vertex enumeration. A program whose boxed optimum
/// keeps improving as the box grows is unbounded.
pub fn lp_oracle(lp: &LinearProgram) -> Oracle {
    match (boxed_vertex_optimum(lp, 1e4), boxed_vertex_optimum(lp, 1e5)) {
        (None, None) => Oracle::Infeasible,
        (Some(a), Some(b)) if (a - b).abs() <= 1e-6 * (1.0 + a.abs()) => Oracle::Optimal(a),
        (None, Some(_)) => Oracle::Infeasible,
        _ => Oracle::Unbounded,
    }
}

/// Supply–demand feasibility by Hall's condition: every subset `T` of the
/// chosen nodes needs `p_req · |T|` at most the budget of loads adjacent to
/// `T`.
pub fn hall_feasible(budgets: &[f64], coupling: &Coupling, chosen: &[usize]) -> bool {
    let k = chosen.len();
    let edges = coupling.supply_edges();
    for mask in 1u32..(1 << k) {
        let mut adjacent = vec![false; budgets.len()];
        let mut count = 0;
        for (bit, &c) in chosen.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                count += 1;
                for &e in coupling.supplies_of(NodeId(c)) {
                    adjacent[edges[e].load_bus.0] = true;
                }
            }
        }
        let supply: f64 = budgets
            .iter()
            .zip(&adjacent)
            .filter(|(_, &a)| a)
            .map(|(b, _)| b)
            .sum();
        if coupling.p_req() * count as f64 > supply * (1.0 + 1e-9) + 1e-12 {
            return false;
        }
    }
    true
}

/// Largest Hall-feasible set among `candidates`.
pub fn max_feasible_count(budgets: &[f64], coupling: &Coupling, candidates: &[usize]) -> usize {
    let k = candidates.len();
    let mut best = 0;
    for mask in 0u32..(1 << k) {
        let n = mask.count_ones() as usize;
        if n <= best {
            continue;
        }
        let chosen: Vec<usize> = (0..k)
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| candidates[b])
            .collect();
        if hall_feasible(budgets, coupling, &chosen) {
            best = n;
        }
    }
    best
}

/// Connectivity rules applied one node at a time in random order until no
/// alive node violates them. Returns the alive masks.
pub fn prune_one_by_one<R: Rng>(
    net: &InterdependentNetwork,
    removals: &Removals,
    rng: &mut R,
) -> (Vec<bool>, Vec<bool>) {
    let np = net.grid.bus_count();
    let nc = net.comm.node_count();
    let mut ap = vec![true; np];
    let mut ac = vec![true; nc];
    for b in &removals.power {
        ap[b.0] = false;
    }
    for c in &removals.comm {
        ac[c.0] = false;
    }
    let power_adj: Vec<Vec<usize>> = (0..np)
        .map(|i| {
            net.grid
                .graph()
                .edges()
                .filter_map(|(_, e)| {
                    if e.from.0 == i {
                        Some(e.to.0)
                    } else if e.to.0 == i {
                        Some(e.from.0)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let comm_adj: Vec<Vec<usize>> = (0..nc)
        .map(|i| {
            net.comm
                .graph()
                .edges()
                .filter_map(|(_, e)| {
                    if e.from.0 == i {
                        Some(e.to.0)
                    } else if e.to.0 == i {
                        Some(e.from.0)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let reaches = |adj: &[Vec<usize>], alive: &[bool], start: usize, goal: &dyn Fn(usize) -> bool| {
        let mut seen = vec![false; alive.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            if goal(v) {
                return true;
            }
            for &w in &adj[v] {
                if alive[w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        false
    };
    let coupling = &net.coupling;
    loop {
        let mut violators: Vec<(bool, usize)> = Vec::new();
        for i in (0..np).filter(|&i| ap[i]) {
            let is_gen = net.grid.bus(NodeId(i)).role == BusRole::Generator;
            let fed = reaches(&power_adj, &ap, i, &|v| {
                net.grid.bus(NodeId(v)).role == BusRole::Generator
            });
            let controlled = coupling
                .controllers_of(NodeId(i))
                .iter()
                .any(|&k| ac[coupling.control_edges()[k].comm_node.0]);
            let isolated = is_gen && !power_adj[i].iter().any(|&w| ap[w]);
            if !fed || !controlled || isolated {
                violators.push((true, i));
            }
        }
        for j in (0..nc).filter(|&j| ac[j]) {
            let linked = reaches(&comm_adj, &ac, j, &|v| {
                net.comm.role(NodeId(v)) == intergrid_core::CommRole::ControlCenter
            });
            let supplied = coupling
                .supplies_of(NodeId(j))
                .iter()
                .any(|&k| ap[coupling.supply_edges()[k].load_bus.0]);
            if !linked || !supplied {
                violators.push((false, j));
            }
        }
        let Some(&(power, id)) = violators.choose(rng) else {
            return (ap, ac);
        };
        if power {
            ap[id] = false;
        } else {
            ac[id] = false;
        }
    }
}
