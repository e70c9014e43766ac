//! Ground-truth references: exhaustive grid search over per-switch splitting
//! simplices on tiny instances, and an independent path-enumeration flow
//! calculator used to cross-check the propagation engine.

use crate::routing::{flows_under_policy, LinkLoads, RoutingPolicy};
use crate::routing::{policy_from_actions, JointAction, SplitAction};
use crate::topology::{ecmp_next_hops, AdmissibleSets, DistanceTable, Topology};
use crate::traffic::TrafficMatrix;
use thiserror::Error;

const GRID_GUARD: usize = 10_000_000;
const PATH_ENUM_MAX_NODES: usize = 8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid search space {0} exceeds guard {GRID_GUARD}")]
    SearchSpaceTooLarge(u128),
    #[error("path enumeration limited to {PATH_ENUM_MAX_NODES} nodes, topology has {0}")]
    TooManyNodes(usize),
    #[error("granularity {0} does not divide 1")]
    BadGranularity(f64),
}

/// Simplex lattice: compositions summing to 1 in steps of `granularity`.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub granularity: f64,
}

impl GridSpec {
    pub fn steps(&self) -> Result<usize, OracleError> {
        let steps = (1.0 / self.granularity).round();
        if (steps * self.granularity - 1.0).abs() > 1e-12 || steps < 1.0 {
            return Err(OracleError::BadGranularity(self.granularity));
        }
        Ok(steps as usize)
    }
}

/// All length-`dims` compositions of `steps` in lexicographic order.
fn compositions(dims: usize, steps: usize) -> Vec<Vec<usize>> {
    fn rec(dims: usize, steps: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if dims == 1 {
            prefix.push(steps);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=steps {
            prefix.push(first);
            rec(dims - 1, steps - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dims, steps, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive minimum-MLU search over the joint lattice of per-switch
/// splitting ratios. Ties break to the lexicographically smallest action.
pub fn brute_force_min_mlu(
    topo: &Topology,
    dists: &DistanceTable,
    admissible: &AdmissibleSets,
    tm: &TrafficMatrix,
    grid: GridSpec,
) -> Result<(f64, JointAction), OracleError> {
    let steps = grid.steps()?;
    let sdn = topo.sdn_nodes();
    assert!(!sdn.is_empty(), "no SDN nodes to optimize");
    let lattices: Vec<Vec<Vec<usize>>> = sdn
        .iter()
        .map(|&h| compositions(topo.out_degree(h), steps))
        .collect();
    let space: u128 = lattices.iter().map(|l| l.len() as u128).product();
    if space > GRID_GUARD as u128 {
        return Err(OracleError::SearchSpaceTooLarge(space));
    }


    let mut best_mlu = f64::INFINITY;
    let mut best_action = None;
    let mut idx = vec![0usize; sdn.len()];
    loop {
        let action = JointAction::new(sdn.iter().enumerate().map(|(i, &h)| SplitAction {
            node: h,
            ratios: normalize_lattice(&lattices[i][idx[i]]),
        }));
        let policy = policy_from_actions(&action, topo, admissible)
            .expect("lattice actions are always valid");
        let loads = flows_under_policy(topo, dists, admissible, tm, &policy);
        let mlu = crate::routing::utilization(&loads, topo).mlu;
        // strict improvement keeps the first (lexicographically smallest) argmin
        if mlu < best_mlu {
            best_mlu = mlu;
            best_action = Some(action);
        }
        // advance the joint index odometer, last switch fastest
        let mut carry = true;
        for i in (0..idx.len()).rev() {
            if !carry {
                break;
            }
            idx[i] += 1;
            if idx[i] == lattices[i].len() {
                idx[i] = 0;
            } else {
                carry = false;
            }
        }
        if carry {
            break;
        }
    }
    Ok((best_mlu, best_action.unwrap()))
}

fn normalize_lattice(counts: &[usize]) -> Vec<f64> {
    // divide by the integer total so the simplex sum is exact
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Independent flow calculator: enumerates every decreasing-distance path per
/// source-destination pair, multiplying branch fractions along the way.
pub fn path_enum_flows(
    topo: &Topology,
    dists: &DistanceTable,
    admissible: &AdmissibleSets,
    tm: &TrafficMatrix,
    policy: &RoutingPolicy,
) -> Result<LinkLoads, OracleError> {
    let n = topo.node_count();
    if n > PATH_ENUM_MAX_NODES {
        return Err(OracleError::TooManyNodes(n));
    }
    let m = topo.link_count();
    let mut load = vec![0.0; m];
    let mut per_dest = vec![vec![0.0; m]; n];
    let mut unrouted = 0.0;
    for q in 0..n {
        for src in 0..n {
            let demand = tm.get(src, q);
            if demand == 0.0 {
                continue;
            }
            if !dists.get(q, src).is_finite() {
                unrouted += demand;
                continue;
            }
            walk(topo, dists, admissible, policy, src, q, demand, &mut per_dest[q]);
        }
        for e in 0..m {
            load[e] += per_dest[q][e];
        }
    }
    Ok(LinkLoads { load, per_dest, unrouted })
}

fn walk(
    topo: &Topology,
    dists: &DistanceTable,
    admissible: &AdmissibleSets,
    policy: &RoutingPolicy,
    v: usize,
    q: usize,
    volume: f64,
    loads_q: &mut [f64],
) {
    if v == q || volume == 0.0 {
        return;
    }
    let links = admissible.get(v, q);
    let use_policy = topo.is_sdn(v) && !links.is_empty() && policy.fractions(v, q).is_some();
    if use_policy {
        let fracs = policy.fractions(v, q).unwrap();
        for (pos, &e) in topo.out_links(v).iter().enumerate() {
            let share = volume * fracs[pos];
            if share == 0.0 {
                continue;
            }
            loads_q[e] += share;
            walk(topo, dists, admissible, policy, topo.link(e).dst, q, share, loads_q);
        }
    } else {
        let hops = ecmp_next_hops(topo, dists, v, q);
        let share = volume / hops.len() as f64;
        for &e in &hops {
            loads_q[e] += share;
            walk(topo, dists, admissible, policy, topo.link(e).dst, q, share, loads_q);
        }
    }
}
