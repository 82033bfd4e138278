//! Dual classical/quantum LAN graph, structural validation and the Q-STP
//! active tree.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::codec::MacAddr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    User,
    Switch,
}

/// A user device or switch. `index` counts nodes of the same kind.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
    pub mac: MacAddr,
    pub name: String,
}

/// Physical constants of one link. Times in seconds, lengths in km.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkParams {
    pub d_km: f64,
    /// Classical rate, bits/s.
    pub rb: f64,
    /// Quantum rate, qubits/s.
    pub rq: f64,
    /// Per-bit error probability.
    pub pb: f64,
    /// Per-qubit loss probability.
    pub pq: f64,
    pub tproc: f64,
    pub tbo: f64,
    pub pcol: f64,
    pub cc: f64,
    pub cq: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            d_km: 1.0,
            rb: 1e9,
            rq: 1e9,
            pb: 0.0,
            pq: 0.0,
            tproc: 0.0,
            tbo: 0.0,
            pcol: 0.0,
            cc: 1.0,
            cq: 1.0,
        }
    }
}

impl LinkParams {
    /// Checks ranges; returns a description of the first bad field.
    pub fn check(&self) -> Result<(), String> {
        let probs = [("pb", self.pb), ("pq", self.pq), ("pcol", self.pcol)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name}={p} outside [0,1]"));
            }
        }
        for (name, r) in [("rb", self.rb), ("rq", self.rq)] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(format!("{name}={r} must be positive"));
            }
        }
        let nonneg = [
            ("d", self.d_km),
            ("tproc", self.tproc),
            ("tbo", self.tbo),
            ("cc", self.cc),
            ("cq", self.cq),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name}={v} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Default costs: `k_classical / R_b` and `k_quantum / (R_q (1 - P_q))`.
    pub fn with_derived_costs(mut self, k_classical: f64, k_quantum: f64) -> Self {
        self.cc = k_classical / self.rb;
        self.cq = if self.pq >= 1.0 {
            f64::INFINITY
        } else {
            k_quantum / (self.rq * (1.0 - self.pq))
        };
        self
    }
}

/// Joint classical + quantum cost of a paired link.
pub fn link_cost(p: &LinkParams) -> f64 {
    p.cc + p.cq
}

/// Qubit loss over `d_km` of fiber with attenuation `alpha_db_per_km`.
pub fn fiber_loss(d_km: f64, alpha_db_per_km: f64) -> f64 {
    1.0 - 10f64.powf(-alpha_db_per_km * d_km / 10.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub classical: bool,
    pub quantum: bool,
    pub params: LinkParams,
}

impl Link {
    pub fn is_paired(&self) -> bool {
        self.classical && self.quantum
    }

    pub fn other(&self, node: usize) -> usize {
        if self.a == node {
            self.b
        } else {
            self.a
        }
    }

    fn key(&self) -> (usize, usize) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

/// A node's attachment to one link. Port ids are local to the node and follow
/// link declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Port {
    pub id: u16,
    pub link: usize,
    pub peer: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkTopology {
    pub nodes: Vec<NodeId>,
    pub links: Vec<Link>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DuplicateMac {
        mac: MacAddr,
        a: String,
        b: String,
    },
    DuplicateName(String),
    UserUserLink {
        a: String,
        b: String,
    },
    UnpairedQuantumLink {
        a: String,
        b: String,
    },
    DuplicateLink {
        a: String,
        b: String,
    },
    SelfLoop(String),
    EmptyLink {
        a: String,
        b: String,
    },
    BadParams {
        a: String,
        b: String,
        reason: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateMac { mac, a, b } => {
                write!(f, "duplicate MAC {mac} on {a} and {b}")
            }
            Violation::DuplicateName(n) => write!(f, "duplicate node name {n}"),
            Violation::UserUserLink { a, b } => write!(f, "user-user link {a}-{b}"),
            Violation::UnpairedQuantumLink { a, b } => write!(f, "unpaired quantum link {a}-{b}"),
            Violation::DuplicateLink { a, b } => write!(f, "duplicate link {a}-{b}"),
            Violation::SelfLoop(n) => write!(f, "self loop on {n}"),
            Violation::EmptyLink { a, b } => {
                write!(f, "link {a}-{b} is neither classical nor quantum")
            }
            Violation::BadParams { a, b, reason } => write!(f, "link {a}-{b}: {reason}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("quantum graph is disconnected: {0} unreachable from {1}")]
    DisconnectedQuantumGraph(String, String),
    #[error("no paired links in topology")]
    NoQuantumNodes,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no active path from {0} to {1}")]
    NoPath(String, String),
}

impl NetworkTopology {
    pub fn add_node(&mut self, kind: NodeKind, name: &str, mac: MacAddr) -> usize {
        let index = self.nodes.iter().filter(|n| n.kind == kind).count();
        self.nodes.push(NodeId {
            kind,
            index,
            mac,
            name: name.to_owned(),
        });
        self.nodes.len() - 1
    }

    pub fn add_link(&mut self, a: usize, b: usize, quantum: bool, params: LinkParams) -> usize {
        self.links.push(Link {
            a,
            b,
            classical: true,
            quantum,
            params,
        });
        self.links.len() - 1
    }

    pub fn node_by_name(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn name(&self, node: usize) -> &str {
        &self.nodes[node].name
    }

    pub fn is_user(&self, node: usize) -> bool {
        self.nodes[node].kind == NodeKind::User
    }

    /// Counts of (users, switches).
    pub fn counts(&self) -> (usize, usize) {
        let users = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::User)
            .count();
        (users, self.nodes.len() - users)
    }

    pub fn ports(&self, node: usize) -> Vec<Port> {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.a == node || l.b == node)
            .enumerate()
            .map(|(id, (link, l))| Port {
                id: id as u16,
                link,
                peer: l.other(node),
            })
            .collect()
    }

    pub fn port_on_link(&self, node: usize, link: usize) -> Option<u16> {
        self.ports(node)
            .into_iter()
            .find(|p| p.link == link)
            .map(|p| p.id)
    }

    pub fn paired_links(&self) -> impl Iterator<Item = (usize, &Link)> {
        self.links.iter().enumerate().filter(|(_, l)| l.is_paired())
    }

    /// L = |L_c ∩ L_q|.
    pub fn paired_count(&self) -> usize {
        self.paired_links().count()
    }

    pub fn quantum_count(&self) -> usize {
        self.links.iter().filter(|l| l.quantum).count()
    }

    /// Nodes incident to at least one paired link.
    pub fn quantum_capable(&self) -> BTreeSet<usize> {
        self.paired_links().flat_map(|(_, l)| [l.a, l.b]).collect()
    }

    /// Linear chain `alice - sw1 - ... - swS - bob` with identical links. With
    /// `switches == 0` the two users share a direct link, the degenerate
    /// point-to-point case, which [`validate_topology`] reports as a user-user link.
    pub fn chain(switches: usize, link: LinkParams) -> Self {
        let mut t = NetworkTopology::default();
        let alice = t.add_node(NodeKind::User, "alice", MacAddr::local(0x01));
        let mut prev = alice;
        for i in 1..=switches {
            let sw = t.add_node(
                NodeKind::Switch,
                &format!("sw{i}"),
                MacAddr::local(0x0100 + i as u64),
            );
            t.add_link(prev, sw, true, link);
            prev = sw;
        }
        let bob = t.add_node(NodeKind::User, "bob", MacAddr::local(0x02));
        t.add_link(prev, bob, true, link);
        t
    }
}

/// Reports every structural violation. An empty list means the topology is valid.
pub fn validate_topology(t: &NetworkTopology) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut macs: BTreeMap<MacAddr, usize> = BTreeMap::new();
    let mut names: BTreeSet<&str> = BTreeSet::new();
    for (i, n) in t.nodes.iter().enumerate() {
        if let Some(&j) = macs.get(&n.mac) {
            out.push(Violation::DuplicateMac {
                mac: n.mac,
                a: t.nodes[j].name.clone(),
                b: n.name.clone(),
            });
        } else {
            macs.insert(n.mac, i);
        }
        if !names.insert(&n.name) {
            out.push(Violation::DuplicateName(n.name.clone()));
        }
    }

    let mut seen = BTreeSet::new();
    for l in &t.links {
        let (a, b) = (t.name(l.a).to_owned(), t.name(l.b).to_owned());
        if l.a == l.b {
            out.push(Violation::SelfLoop(a));
            continue;
        }
        if !seen.insert(l.key()) {
            out.push(Violation::DuplicateLink {
                a: a.clone(),
                b: b.clone(),
            });
        }
        if !l.classical && !l.quantum {
            out.push(Violation::EmptyLink {
                a: a.clone(),
                b: b.clone(),
            });
        }
        if t.is_user(l.a) && t.is_user(l.b) {
            out.push(Violation::UserUserLink {
                a: a.clone(),
                b: b.clone(),
            });
        }
        if l.quantum && !l.classical {
            out.push(Violation::UnpairedQuantumLink {
                a: a.clone(),
                b: b.clone(),
            });
        }
        if let Err(reason) = l.params.check() {
            out.push(Violation::BadParams { a, b, reason });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortState {
    Forwarding,
    Blocked,
}

/// Loop-free active topology over the paired links.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveTree {
    pub root: usize,
    /// Link indices kept in the tree, in selection order.
    pub active_links: Vec<usize>,
    /// State of every paired-link port, keyed by (node, port id).
    pub port_states: BTreeMap<(usize, u16), PortState>,
    pub total_cost: f64,
}

impl ActiveTree {
    pub fn is_forwarding(&self, node: usize, port: u16) -> bool {
        self.port_states.get(&(node, port)) == Some(&PortState::Forwarding)
    }

    pub fn contains(&self, link: usize) -> bool {
        self.active_links.contains(&link)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Q-STP: minimum-cost spanning tree of the paired-link subgraph with edge
/// weight `C_c + C_q`. Ties are broken by the lower endpoint MAC pair; the root
/// is the quantum-capable node with the lowest MAC.
pub fn run_qstp(t: &NetworkTopology) -> Result<ActiveTree, TopologyError> {
    let capable = t.quantum_capable();
    let root = capable
        .iter()
        .copied()
        .min_by_key(|&n| t.nodes[n].mac)
        .ok_or(TopologyError::NoQuantumNodes)?;

    let mac_pair = |l: &Link| {
        let (x, y) = (t.nodes[l.a].mac, t.nodes[l.b].mac);
        (x.min(y), x.max(y))
    };
    let mut edges: Vec<(usize, &Link)> = t.paired_links().collect();
    edges.sort_by(|(_, x), (_, y)| {
        link_cost(&x.params)
            .total_cmp(&link_cost(&y.params))
            .then_with(|| mac_pair(x).cmp(&mac_pair(y)))
    });

    let mut dsu = DisjointSet::new(t.nodes.len());
    let mut active_links = Vec::new();
    let mut total_cost = 0.0;
    for (idx, l) in edges {
        if dsu.union(l.a, l.b) {
            active_links.push(idx);
            total_cost += link_cost(&l.params);
        }
    }

    let root_set = dsu.find(root);
    if let Some(&lost) = capable.iter().find(|&&n| dsu.find(n) != root_set) {
        return Err(TopologyError::DisconnectedQuantumGraph(
            t.name(lost).to_owned(),
            t.name(root).to_owned(),
        ));
    }

    let mut port_states = BTreeMap::new();
    for &node in &capable {
        for port in t.ports(node) {
            if t.links[port.link].is_paired() {
                let state = if active_links.contains(&port.link) {
                    PortState::Forwarding
                } else {
                    PortState::Blocked
                };
                port_states.insert((node, port.id), state);
            }
        }
    }

    Ok(ActiveTree {
        root,
        active_links,
        port_states,
        total_cost,
    })
}

/// Node sequence from `from` to `to` over the active tree.
pub fn tree_path(
    t: &NetworkTopology,
    tree: &ActiveTree,
    from: usize,
    to: usize,
) -> Result<Vec<usize>, TopologyError> {
    let mut prev: Vec<Option<usize>> = vec![None; t.nodes.len()];
    let mut seen = vec![false; t.nodes.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(n) = queue.pop_front() {
        if n == to {
            break;
        }
        for port in t.ports(n) {
            if tree.contains(port.link) && !seen[port.peer] {
                seen[port.peer] = true;
                prev[port.peer] = Some(n);
                queue.push_back(port.peer);
            }
        }
    }
    if !seen[to] {
        return Err(TopologyError::NoPath(
            t.name(from).to_owned(),
            t.name(to).to_owned(),
        ));
    }
    let mut path = vec![to];
    let mut cur = to;
    while let Some(p) = prev[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    Ok(path)
}

/// Link index joining two adjacent nodes on the active tree (or any paired link
/// when the tree is not given).
pub fn link_between(t: &NetworkTopology, a: usize, b: usize) -> Option<usize> {
    t.links
        .iter()
        .position(|l| l.is_paired() && ((l.a == a && l.b == b) || (l.a == b && l.b == a)))
}
