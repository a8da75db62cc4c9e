//! DC power flow and the uniform balancing step.
//!
//! Every island (connected component of the alive grid) is balanced and
//! solved on its own. The solver builds the reduced weighted Laplacian of an
//! island with the smallest bus as reference, factors it with a dense
//! Cholesky decomposition and recovers line flows from phase differences:
//! `f = (θ_from − θ_to) / x`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, NodeId};
use crate::network::PowerGrid;

/// Relative acceptance bound on the node-balance residual of a solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Relative bound on the injection sum of an island handed to the solver.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaledSide {
    None,
    Loads,
    Generators,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub side: ScaledSide,
    pub factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// Smallest bus of the island.
    pub island: NodeId,
    pub side: ScaledSide,
    pub factor: f64,
}

/// Relative mismatch treated as already balanced.
pub const ROUNDING_TOLERANCE: f64 = 1e-12;

/// Scales the larger side of an island so that injections sum to zero.
///
/// Loads are multiplied by `g/ℓ` when demand exceeds generation, generators
/// by `ℓ/g` otherwise. Zero injections are left alone, as are islands whose
/// sides already agree to rounding.
pub fn balance_island(injections: &[f64]) -> (Vec<f64>, Scaling) {
    let generation: f64 = injections.iter().filter(|&&p| p > 0.0).sum();
    let load: f64 = injections.iter().filter(|&&p| p < 0.0).map(|p| -p).sum();
    let rounding = ROUNDING_TOLERANCE * generation.max(load);
    if (generation - load).abs() <= rounding && generation > 0.0 && load > 0.0 {
        return (
            injections.to_vec(),
            Scaling {
                side: ScaledSide::None,
                factor: 1.0,
            },
        );
    }
    if load > generation {
        let factor = generation / load;
        let out = injections
            .iter()
            .map(|&p| if p < 0.0 { p * factor } else { p })
            .collect();
        (
            out,
            Scaling {
                side: ScaledSide::Loads,
                factor,
            },
        )
    } else if generation > load {
        let factor = load / generation;
        let out = injections
            .iter()
            .map(|&p| if p > 0.0 { p * factor } else { p })
            .collect();
        (
            out,
            Scaling {
                side: ScaledSide::Generators,
                factor,
            },
        )
    } else {
        (
            injections.to_vec(),
            Scaling {
                side: ScaledSide::None,
                factor: 1.0,
            },
        )
    }
}

/// Balances every island of the alive grid in place.
pub fn balance_grid(grid: &mut PowerGrid) -> Vec<BalanceReport> {
    let mut reports = Vec::new();
    for island in grid.islands() {
        let before: Vec<f64> = island.iter().map(|&b| grid.bus(b).injection).collect();
        let (after, scaling) = balance_island(&before);
        if scaling.side != ScaledSide::None {
            for (&bus, &p) in island.iter().zip(&after) {
                // Scaling by a factor in [0, 1] keeps the sign, so the role
                // check cannot fail.
                grid.set_injection(bus, p).expect("scaling preserves sign");
            }
        }
        reports.push(BalanceReport {
            island: island[0],
            side: scaling.side,
            factor: scaling.factor,
        });
    }
    reports
}

/// Line flows and bus phases over the whole grid. Entries outside the solved
/// islands (dead lines, dead buses) are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub flows: Vec<f64>,
    pub phases: Vec<f64>,
    /// Largest absolute node-balance error.
    pub residual: f64,
}

impl FlowSolution {
    pub fn zeros(grid: &PowerGrid) -> Self {
        Self {
            flows: vec![0.0; grid.line_count()],
            phases: vec![0.0; grid.bus_count()],
            residual: 0.0,
        }
    }

    pub fn flow(&self, line: EdgeId) -> f64 {
        self.flows[line.0]
    }

    pub fn phase(&self, bus: NodeId) -> f64 {
        self.phases[bus.0]
    }
}

/// Island bookkeeping shared by the flow solver and the shift factors.
struct IslandSystem {
    buses: Vec<NodeId>,
    lines: Vec<EdgeId>,
    /// Grid bus index → position in `buses`.
    local: Vec<usize>,
    reference: usize,
}

impl IslandSystem {
    fn new(grid: &PowerGrid, island: &[NodeId], reference: NodeId) -> Result<Self> {
        let mut local = vec![usize::MAX; grid.bus_count()];
        for (i, &b) in island.iter().enumerate() {
            if !grid.is_bus_alive(b) {
                return Err(Error::DeadSource(b.0));
            }
            local[b.0] = i;
        }
        let reference = match local[reference.0] {
            usize::MAX => return Err(Error::UnknownNode(reference.0)),
            r => r,
        };
        let mut lines = Vec::new();
        for &b in island {
            for (other, line) in grid.graph().neighbors(b) {
                if b < other {
                    lines.push(line);
                }
            }
        }
        lines.sort_unstable();
        Ok(Self {
            buses: island.to_vec(),
            lines,
            local,
            reference,
        })
    }

    /// Position in the reduced system, `None` for the reference bus.
    fn reduced(&self, local: usize) -> Option<usize> {
        match local.cmp(&self.reference) {
            std::cmp::Ordering::Less => Some(local),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(local - 1),
        }
    }

    fn laplacian(&self, grid: &PowerGrid) -> DMatrix<f64> {
        let k = self.buses.len() - 1;
        let mut b = DMatrix::zeros(k, k);
        for &line in &self.lines {
            let (from, to) = grid.endpoints(line);
            let y = 1.0 / grid.line(line).reactance;
            let (i, j) = (
                self.reduced(self.local[from.0]),
                self.reduced(self.local[to.0]),
            );
            if let Some(i) = i {
                b[(i, i)] += y;
            }
            if let Some(j) = j {
                b[(j, j)] += y;
            }
            if let (Some(i), Some(j)) = (i, j) {
                b[(i, j)] -= y;
                b[(j, i)] -= y;
            }
        }
        b
    }
}

/// Solves one balanced island with its smallest bus as phase reference.
pub fn solve_dc_flow(grid: &PowerGrid, island: &[NodeId]) -> Result<FlowSolution> {
    let reference = *island.iter().min().ok_or(Error::UnknownNode(usize::MAX))?;
    solve_dc_flow_with_reference(grid, island, reference)
}

/// Solves one balanced island with `reference` pinned to phase zero.
pub fn solve_dc_flow_with_reference(
    grid: &PowerGrid,
    island: &[NodeId],
    reference: NodeId,
) -> Result<FlowSolution> {
    let mut solution = FlowSolution::zeros(grid);
    solve_into(grid, island, reference, &mut solution)?;
    Ok(solution)
}

fn solve_into(
    grid: &PowerGrid,
    island: &[NodeId],
    reference: NodeId,
    out: &mut FlowSolution,
) -> Result<()> {
    let label = island.iter().min().map_or(0, |b| b.0);
    let injections: Vec<f64> = island.iter().map(|&b| grid.bus(b).injection).collect();
    let generation: f64 = injections.iter().filter(|&&p| p > 0.0).sum();
    let imbalance: f64 = injections.iter().sum();
    if imbalance.abs() > BALANCE_TOLERANCE * generation.max(1.0) {
        return Err(Error::Unbalanced {
            island: label,
            imbalance,
        });
    }
    if island.len() == 1 {
        out.phases[island[0].0] = 0.0;
        return Ok(());
    }

    let system = IslandSystem::new(grid, island, reference)?;
    let k = island.len() - 1;
    let rhs = DVector::from_iterator(
        k,
        (0..island.len())
            .filter(|&i| i != system.reference)
            .map(|i| injections[i]),
    );
    let chol = system
        .laplacian(grid)
        .cholesky()
        .ok_or(Error::SingularSystem { island: label })?;
    let theta = chol.solve(&rhs);

    let phase = |local: usize| system.reduced(local).map_or(0.0, |r| theta[r]);
    for (i, &b) in island.iter().enumerate() {
        out.phases[b.0] = phase(i);
    }
    let mut balance = injections.clone();
    for &line in &system.lines {
        let (from, to) = grid.endpoints(line);
        let (i, j) = (system.local[from.0], system.local[to.0]);
        let f = (phase(i) - phase(j)) / grid.line(line).reactance;
        out.flows[line.0] = f;
        balance[i] -= f;
        balance[j] += f;
    }
    let residual = balance.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let scale = injections.iter().fold(1.0f64, |m, p| m.max(p.abs()));
    if residual > RESIDUAL_TOLERANCE * scale {
        return Err(Error::Residual {
            island: label,
            residual,
        });
    }
    out.residual = out.residual.max(residual);
    Ok(())
}

/// Solves every island of the alive grid. Islands must already be balanced.
pub fn solve_grid_flow(grid: &PowerGrid) -> Result<FlowSolution> {
    let mut solution = FlowSolution::zeros(grid);
    for island in grid.islands() {
        let reference = island[0];
        solve_into(grid, &island, reference, &mut solution)?;
    }
    Ok(solution)
}

/// Sensitivities of line flows to bus injections within one island, with the
/// reference bus absorbing the mismatch: `f = H · P` for balanced `P`.
#[derive(Clone, Debug)]
pub struct ShiftFactors {
    pub buses: Vec<NodeId>,
    pub lines: Vec<EdgeId>,
    /// `lines.len() × buses.len()`.
    pub matrix: DMatrix<f64>,
}

pub fn shift_factors(grid: &PowerGrid, island: &[NodeId]) -> Result<ShiftFactors> {
    let label = island.iter().min().map_or(0, |b| b.0);
    let reference = *island.iter().min().ok_or(Error::UnknownNode(usize::MAX))?;
    let system = IslandSystem::new(grid, island, reference)?;
    let n = island.len();
    let mut matrix = DMatrix::zeros(system.lines.len(), n);
    if n > 1 {
        let inverse = system
            .laplacian(grid)
            .cholesky()
            .ok_or(Error::SingularSystem { island: label })?
            .inverse();
        let row = |local: usize, col: usize| match (system.reduced(local), system.reduced(col)) {
            (Some(r), Some(c)) => inverse[(r, c)],
            _ => 0.0,
        };
        for (l, &line) in system.lines.iter().enumerate() {
            let (from, to) = grid.endpoints(line);
            let (i, j) = (system.local[from.0], system.local[to.0]);
            let y = 1.0 / grid.line(line).reactance;
            for c in 0..n {
                matrix[(l, c)] = (row(i, c) - row(j, c)) * y;
            }
        }
    }
    Ok(ShiftFactors {
        buses: system.buses,
        lines: system.lines,
        matrix,
    })
}
