//! The three-phase gossip protocol.
//!
//! Initialization: every alive node starts with a packet holding only its own
//! ID and a transmit probability `f = f_initial`; nobody has broadcast yet.
//!
//! Dissemination runs in synchronous rounds with two phases:
//!
//! - Phase A (reception): every node that broadcast in the *previous* round
//!   is heard by each of its alive neighbors independently with probability
//!   `1 - q` (the receiver's erasure probability). A heard packet whose
//!   membership is not already contained in the receiver's packet is
//!   *innovative*: the receiver merges it (`P_i <- (P_i u P_j) \ {i}` with
//!   its own ID re-appended last) and moves its transmit probability one
//!   halving step toward 1, `f <- (f + 1) / 2`, once per innovative packet.
//!   Hearing any packet, innovative or not, identifies the sender as a
//!   neighbor.
//! - Phase B (transmission): each node broadcasts with probability `f` and,
//!   if it does, resets `f = f_initial`. The payload delivered next round is
//!   the packet as it stands now, after this round's merges.
//!
//! Because the initial transmitter set is empty, the first round delivers
//! nothing: packets can only change from round 2 on.
//!
//! Determinism: given one RNG, Phase A consumes exactly one draw per
//! (receiver, transmitting true neighbor) pair, receivers in ascending ID
//! order and senders in ascending ID order within a receiver; Phase B then
//! consumes one draw per alive node in ascending ID order. Merging in
//! ascending sender order fixes packet-internal order; membership is
//! order-independent.
//!
//! In topology mode packets also carry each member's coordinates, which a
//! collector can later use to rebuild the communication graph. The packet
//! cost accounting charges `ceil(log2(n_max))` bits per carried ID, plus
//! `2 * coord_bits` per entry when coordinates ride along.

use crate::error::{Error, Result};
use crate::geometry::{Network, NodeId, Point};
use fixedbitset::FixedBitSet;
use rand::Rng;
use std::collections::HashMap;
use std::sync::Arc;

/// Per-receiver erasure probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum Erasure {
    /// Every node erases incoming packets with the same probability.
    Constant(f64),
    /// Per-node probabilities; must cover every alive ID. Entries for dead
    /// IDs are ignored.
    PerNode(HashMap<NodeId, f64>),
}

impl Erasure {
    fn q_for(&self, id: NodeId) -> Option<f64> {
        match self {
            Erasure::Constant(q) => Some(*q),
            Erasure::PerNode(map) => map.get(&id).copied(),
        }
    }

    /// The constant probability, if this is the constant variant.
    pub fn constant(&self) -> Option<f64> {
        match self {
            Erasure::Constant(q) => Some(*q),
            Erasure::PerNode(_) => None,
        }
    }
}

/// Protocol parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Baseline transmit probability, in (0, 1]. `1.0` floods.
    pub f_initial: f64,
    /// Reception erasure probabilities, each in [0, 1).
    pub erasure: Erasure,
    /// When set, packets carry member coordinates.
    pub topology: bool,
    /// Fixed-point bits per coordinate in the cost accounting (only used in
    /// topology mode).
    pub coord_bits: u32,
}

impl ProtocolConfig {
    /// Cardinality-mode config with a constant erasure probability.
    pub fn new(f_initial: f64, q: f64) -> Self {
        ProtocolConfig { f_initial, erasure: Erasure::Constant(q), topology: false, coord_bits: 32 }
    }

    pub fn with_topology(mut self) -> Self {
        self.topology = true;
        self
    }

    /// Validates against a network and resolves per-dense-index erasure
    /// probabilities.
    fn resolve(&self, net: &Network) -> Result<Vec<f64>> {
        if !self.f_initial.is_finite() || self.f_initial <= 0.0 || self.f_initial > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "f_initial must lie in (0, 1], got {}",
                self.f_initial
            )));
        }
        if self.topology && !(1..=64).contains(&self.coord_bits) {
            return Err(Error::InvalidConfig(format!(
                "coord_bits must lie in [1, 64], got {}",
                self.coord_bits
            )));
        }
        net.alive()
            .iter()
            .map(|&id| {
                let q = self
                    .erasure
                    .q_for(id)
                    .ok_or_else(|| Error::InvalidConfig(format!("no erasure entry for node {id}")))?;
                if !q.is_finite() || !(0.0..1.0).contains(&q) {
                    return Err(Error::InvalidConfig(format!(
                        "erasure probability for node {id} must lie in [0, 1), got {q}"
                    )));
                }
                Ok(q)
            })
            .collect()
    }
}

/// An ordered ID list with set semantics. The owner's ID is always the last
/// element, so a receiver can tell who it heard from even though IDs carry no
/// addresses.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    order: Vec<NodeId>,
    members: FixedBitSet,
}

impl Packet {
    fn singleton(id: NodeId, n_max: u32) -> Self {
        let mut members = FixedBitSet::with_capacity(n_max as usize);
        members.insert(id.0 as usize);
        Packet { order: vec![id], members }
    }

    /// Number of carried IDs.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a packet always carries at least its owner
    }

    /// Carried IDs in packet order; the owner's ID is last.
    pub fn ids(&self) -> &[NodeId] {
        &self.order
    }

    pub fn contains(&self, id: NodeId) -> bool {
        (id.0 as usize) < self.members.len() && self.members.contains(id.0 as usize)
    }

    /// Membership as bits over the ID space.
    pub fn members(&self) -> &FixedBitSet {
        &self.members
    }

    /// Union-merge an incoming ID list, keeping the own ID last. Returns the
    /// newly added IDs in arrival order.
    fn absorb(&mut self, incoming: &[NodeId]) -> Vec<NodeId> {
        let own = self.order.pop().expect("packet always holds its owner");
        let mut added = Vec::new();
        for &id in incoming {
            if !self.members.contains(id.0 as usize) {
                self.members.insert(id.0 as usize);
                self.order.push(id);
                added.push(id);
            }
        }
        self.order.push(own);
        added
    }
}

/// One node's protocol state.
#[derive(Debug, Clone)]
pub struct NodeState {
    id: NodeId,
    packet: Packet,
    f: f64,
    /// Senders heard at least once; a subset of the true neighbor set.
    discovered: FixedBitSet,
    /// Topology mode: coordinates for every packet member.
    coords: Option<HashMap<NodeId, Point>>,
}

impl NodeState {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn packet(&self) -> &Packet {
        &self.packet
    }

    /// Current transmit probability.
    pub fn f(&self) -> f64 {
        self.f
    }

    /// Neighbors heard so far, ascending.
    pub fn discovered(&self) -> Vec<NodeId> {
        self.discovered.ones().map(|b| NodeId(b as u32)).collect()
    }

    /// Member coordinates (topology mode only).
    pub fn coords(&self) -> Option<&HashMap<NodeId, Point>> {
        self.coords.as_ref()
    }
}

/// The synchronous simulation state for all alive nodes.
#[derive(Debug, Clone)]
pub struct SimState {
    net: Arc<Network>,
    f_initial: f64,
    topology: bool,
    coord_bits: u32,
    /// Erasure probability per dense index.
    q: Vec<f64>,
    round: u32,
    /// Node states in ascending ID order (dense layout).
    nodes: Vec<NodeState>,
    /// Dense indices of the nodes that broadcast in the last executed round.
    transmitted_prev: Vec<usize>,
}

/// Bits needed to name one ID out of `[0, n_max)`.
fn id_bits(n_max: u32) -> u32 {
    if n_max <= 1 {
        0
    } else {
        32 - (n_max - 1).leading_zeros()
    }
}

/// Sets up round 0: singleton packets, `f = f_initial`, empty transmitter
/// set, nothing discovered.
pub fn init(net: Arc<Network>, cfg: &ProtocolConfig) -> Result<SimState> {
    let q = cfg.resolve(&net)?;
    let n_max = net.n_max();
    let nodes = net
        .alive()
        .iter()
        .map(|&id| NodeState {
            id,
            packet: Packet::singleton(id, n_max),
            f: cfg.f_initial,
            discovered: FixedBitSet::with_capacity(n_max as usize),
            coords: cfg
                .topology
                .then(|| HashMap::from([(id, net.position(id).expect("alive node has position"))])),
        })
        .collect();
    Ok(SimState {
        net,
        f_initial: cfg.f_initial,
        topology: cfg.topology,
        coord_bits: cfg.coord_bits,
        q,
        round: 0,
        nodes,
        transmitted_prev: Vec::new(),
    })
}

struct Payload {
    dense: usize,
    id: NodeId,
    order: Vec<NodeId>,
    members: FixedBitSet,
    coords: Option<HashMap<NodeId, Point>>,
}

impl SimState {
    /// Completed rounds.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }

    /// Whether packets carry coordinates.
    pub fn topology(&self) -> bool {
        self.topology
    }

    /// Baseline transmit probability.
    pub fn f_initial(&self) -> f64 {
        self.f_initial
    }

    /// The erasure probability shared by all nodes, if there is one.
    pub fn uniform_erasure(&self) -> Option<f64> {
        let first = *self.q.first()?;
        self.q.iter().all(|&q| q == first).then_some(first)
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeState> {
        self.net.dense_index(id).map(|k| &self.nodes[k])
    }

    /// All node states in ascending ID order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeState> {
        self.nodes.iter()
    }

    /// IDs that broadcast in the last executed round, ascending.
    pub fn transmitters(&self) -> Vec<NodeId> {
        self.transmitted_prev.iter().map(|&k| self.nodes[k].id).collect()
    }

    pub fn packet(&self, id: NodeId) -> Result<&Packet> {
        self.node(id).map(|n| &n.packet).ok_or(Error::NotAlive(id))
    }

    /// Neighbors of `id` heard at least once so far, ascending. Never
    /// contains a non-neighbor.
    pub fn discovered_neighbors(&self, id: NodeId) -> Result<Vec<NodeId>> {
        self.node(id).map(|n| n.discovered()).ok_or(Error::NotAlive(id))
    }

    /// Size of `id`'s packet on the air, in bits: `len * ceil(log2 n_max)`,
    /// plus `len * 2 * coord_bits` in topology mode.
    pub fn packet_bits(&self, id: NodeId) -> Result<u64> {
        let node = self.node(id).ok_or(Error::NotAlive(id))?;
        let per_entry = id_bits(self.net.n_max()) as u64
            + if self.topology { 2 * self.coord_bits as u64 } else { 0 };
        Ok(node.packet.len() as u64 * per_entry)
    }

    /// Executes one synchronous round (Phase A then Phase B).
    pub fn step(&mut self, rng: &mut impl Rng) {
        // Phase A: payloads are the packets as they stood when their senders
        // chose to broadcast; nothing has mutated packets since Phase B of
        // the previous round, so snapshotting here is equivalent.
        let payloads: Vec<Payload> = self
            .transmitted_prev
            .iter()
            .map(|&k| {
                let node = &self.nodes[k];
                Payload {
                    dense: k,
                    id: node.id,
                    order: node.packet.order.clone(),
                    members: node.packet.members.clone(),
                    coords: node.coords.clone(),
                }
            })
            .collect();

        let net = &self.net;
        let q = &self.q;
        for (i, node) in self.nodes.iter_mut().enumerate() {
            for p in &payloads {
                if !net.adjacent_dense(i, p.dense) {
                    continue;
                }
                // one draw per (receiver, transmitting neighbor) pair
                if rng.gen::<f64>() < q[i] {
                    continue; // erased
                }
                node.discovered.insert(p.id.0 as usize);
                if p.members.is_subset(&node.packet.members) {
                    continue; // nothing new: packet and f stay put
                }
                let added = node.packet.absorb(&p.order);
                node.f = (node.f + 1.0) / 2.0;
                if let Some(coords) = &mut node.coords {
                    let from = p.coords.as_ref().expect("topology payloads carry coords");
                    for id in added {
                        coords.insert(id, from[&id]);
                    }
                }
            }
        }

        // Phase B: broadcast with probability f, reset f on transmission.
        let mut transmitters = Vec::new();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if rng.gen::<f64>() < node.f {
                transmitters.push(i);
                node.f = self.f_initial;
            }
        }
        self.transmitted_prev = transmitters;
        self.round += 1;
    }

    /// Runs `rounds` further rounds.
    pub fn run(&mut self, rounds: u32, rng: &mut impl Rng) {
        for _ in 0..rounds {
            self.step(rng);
        }
    }

    /// Snapshot of every node after the last executed round; `transmitted`
    /// flags membership in that round's transmitter set.
    pub fn trace_records(&self) -> Vec<TraceRecord> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(k, node)| TraceRecord {
                round: self.round,
                node: node.id,
                packet_len: node.packet.len() as u32,
                packet_bits: self.packet_bits(node.id).expect("node is alive"),
                f: node.f,
                transmitted: self.transmitted_prev.contains(&k),
            })
            .collect()
    }
}

/// One row of the per-round trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub round: u32,
    pub node: NodeId,
    pub packet_len: u32,
    pub packet_bits: u64,
    pub f: f64,
    pub transmitted: bool,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "round,node,packet_len,packet_bits,f,transmitted";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.round, self.node, self.packet_len, self.packet_bits, self.f, self.transmitted
        )
    }
}
