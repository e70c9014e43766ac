//! Network model: nodes, directed links, shortest-path distances, ECMP next
//! hops, admissible out-link sets for SDN switches, and link-failure handling.
//!
//! Undirected input edges expand to two directed links with equal capacity and
//! weight: edge `k` becomes link `2k` (u→v) and `2k+1` (v→u). Link ids stay
//! stable across failures; a failed link is marked down rather than dropped so
//! observation and state vectors keep their shape.

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Relative tolerance for shortest-path tie detection.
const DIST_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Sdn,
    Legacy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedLink {
    pub id: usize,
    pub src: usize,
    pub dst: usize,
    pub capacity: f64,
    pub weight: f64,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid edge index {0} (topology has {1} undirected edges)")]
    InvalidEdgeIndex(usize, usize),
}

#[derive(Debug, Clone)]
pub struct Topology {
    kinds: Vec<NodeKind>,
    links: Vec<DirectedLink>,
    up: Vec<bool>,
    out: Vec<Vec<usize>>,
    inn: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(
        kinds: Vec<NodeKind>,
        edges: Vec<(usize, usize, f64, f64)>,
    ) -> Result<Self, TopologyError> {
        let n = kinds.len();
        let mut links = Vec::with_capacity(edges.len() * 2);
        for (k, &(u, v, cap, w)) in edges.iter().enumerate() {
            assert!(u < n && v < n && u != v && cap > 0.0 && w > 0.0);
            links.push(DirectedLink { id: 2 * k, src: u, dst: v, capacity: cap, weight: w });
            links.push(DirectedLink { id: 2 * k + 1, src: v, dst: u, capacity: cap, weight: w });
        }
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        for l in &links {
            out[l.src].push(l.id);
            inn[l.dst].push(l.id);
        }
        // ascending link id everywhere for bit-stable vector layouts
        for v in 0..n {
            out[v].sort_unstable();
            inn[v].sort_unstable();
        }
        let up = vec![true; links.len()];
        Ok(Topology { kinds, links, up, out, inn })
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.links.len() / 2
    }

    pub fn kind(&self, v: usize) -> NodeKind {
        self.kinds[v]
    }

    pub fn is_sdn(&self, v: usize) -> bool {
        self.kinds[v] == NodeKind::Sdn
    }

    /// SDN node ids in ascending order.
    pub fn sdn_nodes(&self) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&v| self.is_sdn(v)).collect()
    }

    pub fn link(&self, e: usize) -> &DirectedLink {
        &self.links[e]
    }

    pub fn links(&self) -> &[DirectedLink] {
        &self.links
    }

    pub fn is_up(&self, e: usize) -> bool {
        self.up[e]
    }

    /// All out-link ids of `v` (ascending id, failed links included).
    pub fn out_links(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    /// All in-link ids of `v` (ascending id, failed links included).
    pub fn in_links(&self, v: usize) -> &[usize] {
        &self.inn[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out[v].len()
    }

    /// Out-links of `v` that are currently up.
    pub fn active_out_links(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[v].iter().copied().filter(|&e| self.up[e])
    }

    /// Returns a copy with both directions of undirected edge `k` taken down.
    /// The original is unchanged; callers must recompute distances and
    /// admissible sets on the returned topology.
    pub fn apply_failure(&self, k: usize) -> Result<Topology, TopologyError> {
        if k >= self.edge_count() {
            return Err(TopologyError::InvalidEdgeIndex(k, self.edge_count()));
        }
        let mut t = self.clone();
        t.up[2 * k] = false;
        t.up[2 * k + 1] = false;
        Ok(t)
    }

    /// Hex digest of a canonical serialization; binds checkpoints to the
    /// topology they were trained on. Failure state is excluded so trained
    /// agents remain loadable in failure sweeps.
    pub fn canonical_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"TOPO v1\n");
        for (v, k) in self.kinds.iter().enumerate() {
            let kind = match k {
                NodeKind::Sdn => "sdn",
                NodeKind::Legacy => "legacy",
            };
            hasher.update(format!("node {v} {kind}\n"));
        }
        for k in 0..self.edge_count() {
            let l = &self.links[2 * k];
            hasher.update(format!("edge {} {} {:.17e} {:.17e}\n", l.src, l.dst, l.capacity, l.weight));
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses the TOPO v1 text format: a `TOPO v1` header, `node <id> <sdn|legacy>`
/// lines, then `edge <u> <v> <capacity> [weight]` lines. `#` starts a comment.
pub fn load_topology(text: &str) -> Result<Topology, TopologyError> {
    let err = |line: usize, msg: String| TopologyError::Parse { line, msg };
    let mut kinds: Vec<Option<NodeKind>> = Vec::new();
    let mut edges: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut saw_header = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != "TOPO v1" {
                return Err(err(lineno, format!("expected `TOPO v1` header, got `{line}`")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "node" => {
                if fields.len() != 3 {
                    return Err(err(lineno, "expected `node <id> <sdn|legacy>`".into()));
                }
                let id: usize = fields[1]
                    .parse()
                    .map_err(|_| err(lineno, format!("bad node id `{}`", fields[1])))?;
                let kind = match fields[2] {
                    "sdn" => NodeKind::Sdn,
                    "legacy" => NodeKind::Legacy,
                    other => return Err(err(lineno, format!("unknown node kind `{other}`"))),
                };
                if id >= kinds.len() {
                    kinds.resize(id + 1, None);
                }
                if kinds[id].is_some() {
                    return Err(err(lineno, format!("duplicate node id {id}")));
                }
                kinds[id] = Some(kind);
            }
            "edge" => {
                if fields.len() != 4 && fields.len() != 5 {
                    return Err(err(lineno, "expected `edge <u> <v> <capacity> [weight]`".into()));
                }
                let u: usize = fields[1]
                    .parse()
                    .map_err(|_| err(lineno, format!("bad node id `{}`", fields[1])))?;
                let v: usize = fields[2]
                    .parse()
                    .map_err(|_| err(lineno, format!("bad node id `{}`", fields[2])))?;
                let cap: f64 = fields[3]
                    .parse()
                    .map_err(|_| err(lineno, format!("bad capacity `{}`", fields[3])))?;
                let weight: f64 = if fields.len() == 5 {
                    fields[4]
                        .parse()
                        .map_err(|_| err(lineno, format!("bad weight `{}`", fields[4])))?
                } else {
                    1.0
                };
                if u >= kinds.len() || kinds[u].is_none() {
                    return Err(err(lineno, format!("edge references unknown node {u}")));
                }
                if v >= kinds.len() || kinds[v].is_none() {
                    return Err(err(lineno, format!("edge references unknown node {v}")));
                }
                if u == v {
                    return Err(err(lineno, format!("self-loop on node {u}")));
                }
                if !(cap > 0.0) {
                    return Err(err(lineno, format!("non-positive capacity {cap}")));
                }
                if !(weight > 0.0) {
                    return Err(err(lineno, format!("non-positive weight {weight}")));
                }
                edges.push((u, v, cap, weight));
            }
            other => return Err(err(lineno, format!("unknown directive `{other}`"))),
        }
    }
    if !saw_header {
        return Err(err(1, "empty topology file".into()));
    }
    let mut resolved = Vec::with_capacity(kinds.len());
    for (id, k) in kinds.iter().enumerate() {
        match k {
            Some(k) => resolved.push(*k),
            None => return Err(err(0, format!("node ids must be dense: missing node {id}"))),
        }
    }
    Topology::new(resolved, edges)
}

/// Shortest-path distances `dist[q][v]` from every node `v` to destination `q`.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    dist: Vec<Vec<f64>>,
}

impl DistanceTable {
    pub fn get(&self, q: usize, v: usize) -> f64 {
        self.dist[q][v]
    }

    pub fn to_dest(&self, q: usize) -> &[f64] {
        &self.dist[q]
    }
}

/// Dijkstra per destination over reversed links; unreachable nodes get ∞.
pub fn shortest_distances(topo: &Topology) -> DistanceTable {
    let n = topo.node_count();
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for q in 0..n {
        let d = &mut dist[q];
        d[q] = 0.0;
        let mut heap = std::collections::BinaryHeap::new();
        heap.push(HeapEntry { dist: 0.0, node: q });
        let mut settled = vec![false; n];
        while let Some(HeapEntry { dist: dv, node: v }) = heap.pop() {
            if settled[v] {
                continue;
            }
            settled[v] = true;
            // relax links w→v (traverse in reverse)
            for &e in topo.in_links(v) {
                if !topo.is_up(e) {
                    continue;
                }
                let l = topo.link(e);
                let cand = dv + l.weight;
                if cand < d[l.src] {
                    d[l.src] = cand;
                    heap.push(HeapEntry { dist: cand, node: l.src });
                }
            }
        }
    }
    DistanceTable { dist }
}

struct HeapEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // min-heap on distance, deterministic node tie-break
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Out-links of `v` lying on a shortest path to `q`, i.e. those with
/// `weight(e) + dist[q][e.dst] = dist[q][v]`. Empty iff `q` is unreachable.
pub fn ecmp_next_hops(topo: &Topology, dists: &DistanceTable, v: usize, q: usize) -> Vec<usize> {
    let dv = dists.get(q, v);
    if !dv.is_finite() {
        return Vec::new();
    }
    topo.active_out_links(v)
        .filter(|&e| {
            let l = topo.link(e);
            let dd = dists.get(q, l.dst);
            dd.is_finite() && (l.weight + dd - dv).abs() <= DIST_EPS * dv.max(1.0)
        })
        .collect()
}

/// Per SDN node and destination: the ordered set of admissible out-link ids.
#[derive(Debug, Clone)]
pub struct AdmissibleSets {
    // indexed [node][dest]; empty for legacy nodes and for dest == node
    sets: Vec<Vec<Vec<usize>>>,
}

impl AdmissibleSets {
    pub fn get(&self, h: usize, q: usize) -> &[usize] {
        &self.sets[h][q]
    }
}

/// Builds the admissible sets with the strictly-decreasing-distance rule:
/// `L[h][q]` holds out-links whose head is strictly closer to `q` than `h` is.
/// When that set is empty but `q` is reachable, the ECMP next hops are used so
/// the switch always has at least the OSPF choice.
pub fn admissible_links(topo: &Topology, dists: &DistanceTable) -> AdmissibleSets {
    let n = topo.node_count();
    let mut sets = vec![vec![Vec::new(); n]; n];
    for h in 0..n {
        if !topo.is_sdn(h) {
            continue;
        }
        for q in 0..n {
            if q == h {
                continue;
            }
            let dh = dists.get(q, h);
            if !dh.is_finite() {
                continue;
            }
            let mut admissible: Vec<usize> = topo
                .active_out_links(h)
                .filter(|&e| {
                    let dd = dists.get(q, topo.link(e).dst);
                    dd.is_finite() && dd < dh
                })
                .collect();
            if admissible.is_empty() {
                admissible = ecmp_next_hops(topo, dists, h, q);
            }
            sets[h][q] = admissible;
        }
    }
    AdmissibleSets { sets }
}
