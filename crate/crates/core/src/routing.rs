//! Destination-based flow propagation: OSPF/ECMP baseline flows, splitting
//! policies derived from raw agent actions, flows under a hybrid policy, link
//! utilization, and per-switch observations.

use crate::topology::{ecmp_next_hops, AdmissibleSets, DistanceTable, Topology};
use std::collections::BTreeMap;
use thiserror::Error;

const SIMPLEX_EPS: f64 = 1e-9;
/// Below this mass the renormalization denominator counts as zero.
const ZERO_MASS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("joint action covers node {0} which is not an SDN node")]
    NotSdn(usize),
    #[error("joint action is missing SDN node {0}")]
    MissingAgent(usize),
    #[error("action for node {node} has {got} ratios, out-degree is {expected}")]
    BadActionLength { node: usize, got: usize, expected: usize },
    #[error("action for node {node} is not on the simplex (sum {sum})")]
    NotSimplex { node: usize, sum: f64 },
}

/// Splitting ratios of one SDN switch over its out-links, ascending link id.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAction {
    pub node: usize,
    pub ratios: Vec<f64>,
}

impl SplitAction {
    /// Equal split over all out-links of `node`.
    pub fn uniform(topo: &Topology, node: usize) -> Self {
        let d = topo.out_degree(node);
        SplitAction { node, ratios: vec![1.0 / d as f64; d] }
    }
}

/// One `SplitAction` per SDN node, keyed by node id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointAction {
    pub actions: BTreeMap<usize, SplitAction>,
}

impl JointAction {
    pub fn new(actions: impl IntoIterator<Item = SplitAction>) -> Self {
        JointAction { actions: actions.into_iter().map(|a| (a.node, a)).collect() }
    }
}

/// `frac[h][q][pos]`: fraction of destination-`q` traffic at SDN node `h`
/// sent on the out-link at position `pos` of `h`'s out-link list.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingPolicy {
    frac: BTreeMap<usize, Vec<Vec<f64>>>,
}

impl RoutingPolicy {
    pub fn fractions(&self, h: usize, q: usize) -> Option<&[f64]> {
        self.frac.get(&h).map(|per_dest| per_dest[q].as_slice())
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.frac.keys().copied()
    }
}

/// Masks each switch's raw ratios to the admissible set and renormalizes;
/// if the admissible mass is below `1e-12` the split falls back to uniform
/// over the admissible links.
pub fn policy_from_actions(
    u: &JointAction,
    topo: &Topology,
    admissible: &AdmissibleSets,
) -> Result<RoutingPolicy, RoutingError> {
    for h in topo.sdn_nodes() {
        if !u.actions.contains_key(&h) {
            return Err(RoutingError::MissingAgent(h));
        }
    }
    let n = topo.node_count();
    let mut frac = BTreeMap::new();
    for (&h, action) in &u.actions {
        if !topo.is_sdn(h) {
            return Err(RoutingError::NotSdn(h));
        }
        let out = topo.out_links(h);
        if action.ratios.len() != out.len() {
            return Err(RoutingError::BadActionLength {
                node: h,
                got: action.ratios.len(),
                expected: out.len(),
            });
        }
        let sum: f64 = action.ratios.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_EPS || action.ratios.iter().any(|r| *r < -SIMPLEX_EPS) {
            return Err(RoutingError::NotSimplex { node: h, sum });
        }
        let mut per_dest = vec![vec![0.0; out.len()]; n];
        for q in 0..n {
            if q == h {
                continue;
            }
            let links = admissible.get(h, q);
            if links.is_empty() {
                continue;
            }
            let mass: f64 = out
                .iter()
                .enumerate()
                .filter(|(_, e)| links.contains(e))
                .map(|(pos, _)| action.ratios[pos])
                .sum();
            for (pos, e) in out.iter().enumerate() {
                if !links.contains(e) {
                    continue;
                }
                per_dest[q][pos] = if mass < ZERO_MASS {
                    1.0 / links.len() as f64
                } else {
                    action.ratios[pos] / mass
                };
            }
        }
        frac.insert(h, per_dest);
    }
    Ok(RoutingPolicy { frac })
}

/// Per-link traffic volumes with per-destination breakdown and the total
/// demand that could not reach its destination.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkLoads {
    pub load: Vec<f64>,
    pub per_dest: Vec<Vec<f64>>,
    pub unrouted: f64,
}

/// OSPF baseline: every node splits equally over its ECMP next hops.
pub fn ospf_flows(topo: &Topology, dists: &DistanceTable, tm: &crate::traffic::TrafficMatrix) -> LinkLoads {
    propagate(topo, dists, tm, None, None)
}

/// Hybrid routing: SDN nodes split destination traffic by the policy, legacy
/// nodes use ECMP.
pub fn flows_under_policy(
    topo: &Topology,
    dists: &DistanceTable,
    admissible: &AdmissibleSets,
    tm: &crate::traffic::TrafficMatrix,
    policy: &RoutingPolicy,
) -> LinkLoads {
    propagate(topo, dists, tm, Some(admissible), Some(policy))
}

fn propagate(
    topo: &Topology,
    dists: &DistanceTable,
    tm: &crate::traffic::TrafficMatrix,
    admissible: Option<&AdmissibleSets>,
    policy: Option<&RoutingPolicy>,
) -> LinkLoads {
    let n = topo.node_count();
    assert_eq!(tm.n(), n, "traffic matrix does not match topology");
    let m = topo.link_count();
    let mut load = vec![0.0; m];
    let mut per_dest = vec![vec![0.0; m]; n];
    let mut unrouted = 0.0;

    for q in 0..n {
        let d = dists.to_dest(q);
        // process nodes in strictly decreasing distance to q; equal-distance
        // nodes never route to each other, so id order breaks ties
        let mut order: Vec<usize> = (0..n).filter(|&v| v != q && d[v].is_finite()).collect();
        order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap().then(a.cmp(&b)));
        for v in 0..n {
            if v != q && !d[v].is_finite() {
                unrouted += tm.get(v, q);
            }
        }
        let mut inflow = vec![0.0; n];
        let loads_q = &mut per_dest[q];
        for &v in &order {
            let volume = tm.get(v, q) + inflow[v];
            if volume == 0.0 {
                continue;
            }
            let sdn_policy = policy.and_then(|p| {
                let links = admissible.unwrap().get(v, q);
                if topo.is_sdn(v) && !links.is_empty() {
                    p.fractions(v, q)
                } else {
                    None
                }
            });
            match sdn_policy {
                Some(fracs) => {
                    for (pos, &e) in topo.out_links(v).iter().enumerate() {
                        let share = volume * fracs[pos];
                        if share == 0.0 {
                            continue;
                        }
                        loads_q[e] += share;
                        inflow[topo.link(e).dst] += share;
                    }
                }
                None => {
                    let hops = ecmp_next_hops(topo, dists, v, q);
                    debug_assert!(!hops.is_empty(), "reachable node without next hop");
                    let share = volume / hops.len() as f64;
                    for &e in &hops {
                        loads_q[e] += share;
                        inflow[topo.link(e).dst] += share;
                    }
                }
            }
        }
        for e in 0..m {
            load[e] += loads_q[e];
        }
    }
    LinkLoads { load, per_dest, unrouted }
}

/// Per-link utilization and the maximum link utilization. Utilization may
/// exceed 1; overload surfaces through the reward, traffic is never dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilizationState {
    pub util: Vec<f64>,
    pub mlu: f64,
}

pub fn utilization(loads: &LinkLoads, topo: &Topology) -> UtilizationState {
    assert_eq!(loads.load.len(), topo.link_count());
    let util: Vec<f64> = loads
        .load
        .iter()
        .enumerate()
        .map(|(e, l)| l / topo.link(e).capacity)
        .collect();
    let mlu = util.iter().copied().fold(0.0, f64::max);
    UtilizationState { util, mlu }
}

/// Observation of SDN node `h`: utilizations of its out-links then in-links,
/// each ascending link id. Length is 2·deg(h) and stable across failures.
pub fn observe(state: &UtilizationState, topo: &Topology, h: usize) -> Vec<f64> {
    assert!(topo.is_sdn(h), "node {h} is not an SDN switch");
    topo.out_links(h)
        .iter()
        .chain(topo.in_links(h).iter())
        .map(|&e| state.util[e])
        .collect()
}

/// CSV export: one row per link plus a trailing `# mlu=` comment.
pub fn loads_to_csv(loads: &LinkLoads, topo: &Topology) -> String {
    let state = utilization(loads, topo);
    let mut out = String::from("link_id,src,dst,load,capacity,utilization\n");
    for l in topo.links() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            l.id, l.src, l.dst, loads.load[l.id], l.capacity, state.util[l.id]
        ));
    }
    out.push_str(&format!("# mlu={}\n", state.mlu));
    out
}
