//! Best-first branch-and-bound over the binary variables of a boxed MILP.

use super::simplex::{solve_lp, LinearProgram, LpError, LpStatus};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// A linear program plus the indices of its binary variables and a name map
/// back to the model structure.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub lp: LinearProgram,
    /// LP variable indices constrained to {0, 1}.
    pub binaries: Vec<usize>,
    /// Input-coordinate variable indices (demand coordinates).
    pub input_vars: Vec<usize>,
    /// `(layer, neuron)` of each binary, in `binaries` order.
    pub binary_names: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct BnbConfig {
    /// Absolute optimality gap at which a node / the tree is closed.
    pub gap_tol: f64,
    pub max_nodes: usize,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            gap_tol: 1e-6,
            max_nodes: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
    /// Proven absolute gap (best bound minus incumbent).
    pub gap: f64,
    pub node_count: usize,
    pub certified: bool,
}

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("MILP node budget exhausted after {} nodes (gap {:.3e})", partial.node_count, partial.gap)]
    BudgetExhausted { partial: MilpSolution },
    #[error("MILP infeasible")]
    Infeasible,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Produces a feasible point (and its true objective) from an LP-relaxation
/// point, e.g. by a forward pass through the encoded network.
pub type IncumbentHeuristic<'a> = dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)> + 'a;

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    /// Per-binary fixing: -1 free, 0 or 1 fixed.
    fixed: Vec<i8>,
    /// Relaxation point at this node's fixing (computed when pushed).
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Node {}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // best-first: highest bound; ties broken deeper-first, then FIFO
        self.bound
            .partial_cmp(&other.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn relaxation(model: &MilpModel, fixed: &[i8]) -> Result<Option<(f64, Vec<f64>)>, LpError> {
    let mut lp = model.lp.clone();
    for (k, &f) in fixed.iter().enumerate() {
        let j = model.binaries[k];
        match f {
            0 => {
                lp.lower[j] = 0.0;
                lp.upper[j] = 0.0;
            }
            1 => {
                lp.lower[j] = 1.0;
                lp.upper[j] = 1.0;
            }
            _ => {}
        }
    }
    let r = solve_lp(&lp)?;
    Ok(match r.status {
        LpStatus::Optimal => Some((r.objective, r.x)),
        LpStatus::Infeasible => None,
    })
}

const INT_TOL: f64 = 1e-6;

/// Best-first branch-and-bound. `heuristic`, when given, is called on each
/// node's relaxation point to propose integer-feasible incumbents.
pub fn solve_milp_bnb(
    model: &MilpModel,
    cfg: &BnbConfig,
    heuristic: Option<&IncumbentHeuristic>,
) -> Result<MilpSolution, MilpError> {
    let nb = model.binaries.len();
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let mut nodes = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;

    let root_fixed = vec![-1i8; nb];
    let Some((root_bound, root_x)) = relaxation(model, &root_fixed)? else {
        return Err(MilpError::Infeasible);
    };
    nodes += 1;
    if let Some(h) = heuristic {
        if let Some((val, x)) = h(&root_x) {
            incumbent = Some((val, x));
        }
    }
    heap.push(Node {
        bound: root_bound,
        depth: 0,
        seq,
        fixed: root_fixed,
        x: root_x,
    });

    let mut best_bound = root_bound;
    while let Some(node) = heap.pop() {
        best_bound = node.bound;
        if let Some((inc, _)) = &incumbent {
            if best_bound <= inc + cfg.gap_tol {
                break;
            }
        }
        let (bound, x) = (node.bound, &node.x);

        // most-fractional branching, ties by (layer, neuron) order
        let mut branch: Option<usize> = None;
        let mut best_frac = INT_TOL;
        for k in 0..nb {
            if node.fixed[k] >= 0 {
                continue;
            }
            let v = x[model.binaries[k]].clamp(0.0, 1.0);
            let f = v.min(1.0 - v);
            if f > best_frac {
                best_frac = f;
                branch = Some(k);
            }
        }

        match branch {
            None => {
                // integral relaxation point: candidate incumbent
                if incumbent.as_ref().map_or(true, |(i, _)| bound > *i) {
                    incumbent = Some((bound, x.clone()));
                }
            }
            Some(k) => {
                for val in [1i8, 0i8] {
                    let mut fixed = node.fixed.clone();
                    fixed[k] = val;
                    nodes += 1;
                    if nodes > cfg.max_nodes {
                        let (obj, x) = incumbent.clone().unwrap_or((f64::NEG_INFINITY, Vec::new()));
                        return Err(MilpError::BudgetExhausted {
                            partial: MilpSolution {
                                objective: obj,
                                x,
                                gap: best_bound - obj,
                                node_count: nodes,
                                certified: false,
                            },
                        });
                    }
                    if let Some((cb, cx)) = relaxation(model, &fixed)? {
                        if let Some(h) = heuristic {
                            if let Some((hv, hx)) = h(&cx) {
                                if incumbent.as_ref().map_or(true, |(i, _)| hv > *i) {
                                    incumbent = Some((hv, hx));
                                }
                            }
                        }
                        let prune = incumbent
                            .as_ref()
                            .map_or(false, |(i, _)| cb <= i + cfg.gap_tol);
                        if !prune {
                            seq += 1;
                            heap.push(Node {
                                bound: cb,
                                depth: node.depth + 1,
                                seq,
                                fixed,
                                x: cx,
                            });
                        }
                    }
                }
            }
        }
        if heap.is_empty() {
            best_bound = incumbent.as_ref().map_or(f64::NEG_INFINITY, |(i, _)| *i);
        }
    }

    match incumbent {
        Some((obj, x)) => {
            let gap = (best_bound - obj).max(0.0);
            Ok(MilpSolution {
                objective: obj,
                x,
                gap,
                node_count: nodes,
                certified: gap <= cfg.gap_tol,
            })
        }
        None => Err(MilpError::Infeasible),
    }
}
