//! Random geometric networks on a rectangular field.
//!
//! A network draws `n` alive nodes out of an ID space `[0, n_max)` and places
//! them i.i.d. uniformly on an `length x width` field. Two alive nodes are
//! connected exactly when their distance is at most the communication radius
//! `R` (boundary inclusive). Distance is either plain Euclidean or toroidal
//! (wrap-around per axis), which removes field-border effects.
//!
//! Dead IDs exist only as names: they have no position and no edges.
//!
//! The `t`-degree ball `B_t(i)` is the set of alive nodes within `t` hops of
//! `i` (`B_0(i) = {i}`). Under the disk idealization the expected shell size
//! `|B_t \ B_{t-1}|` is `n * pi * R^2 * (2t - 1) / (length * width)`; see
//! [`expected_ball_increment`]. The idealization treats the `t`-hop ball as a
//! full disk of radius `t*R`, which real hop balls only approach at high
//! density, so for `t >= 2` the measured shells run well below it at moderate
//! degree.

use crate::error::{Error, Result};
use fixedbitset::FixedBitSet;
use rand::Rng;
use std::collections::VecDeque;
use std::fmt;

/// Identifier out of the ID space `[0, n_max)`. IDs are names, not indices:
/// an ID can belong to a dead node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A position on the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// How distances are measured on the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMode {
    /// Plain Euclidean distance; nodes near the border have truncated
    /// neighborhoods.
    #[default]
    Planar,
    /// Wrap-around distance: per axis the shorter of the direct and the
    /// wrapped separation. Every point sees a full-disk neighborhood.
    Toroidal,
}

/// Field dimensions, communication radius, and distance mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConfig {
    pub length: f64,
    pub width: f64,
    pub radius: f64,
    pub mode: DistanceMode,
}

impl FieldConfig {
    /// A `length x width` planar field with communication radius `radius`.
    pub fn new(length: f64, width: f64, radius: f64) -> Self {
        FieldConfig { length, width, radius, mode: DistanceMode::Planar }
    }

    /// The unit square with the given radius.
    pub fn unit(radius: f64) -> Self {
        FieldConfig::new(1.0, 1.0, radius)
    }

    pub fn with_mode(mut self, mode: DistanceMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("length", self.length), ("width", self.width), ("radius", self.radius)]
        {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "field {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Distance between two points under the configured mode.
    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let (dx, dy) = match self.mode {
            DistanceMode::Planar => (a.x - b.x, a.y - b.y),
            DistanceMode::Toroidal => {
                let dx = (a.x - b.x).abs();
                let dy = (a.y - b.y).abs();
                (dx.min(self.length - dx), dy.min(self.width - dy))
            }
        };
        dx.hypot(dy)
    }
}

/// An immutable sampled network: alive set, positions, and the derived
/// adjacency. Safe to share across threads once built.
#[derive(Debug, Clone)]
pub struct Network {
    n_max: u32,
    field: FieldConfig,
    /// Alive IDs in ascending order.
    alive: Vec<NodeId>,
    /// ID -> dense index into `alive`, `None` for dead IDs.
    dense: Vec<Option<u32>>,
    /// Position per ID; `Some` exactly for alive IDs.
    positions: Vec<Option<Point>>,
    /// Neighbor IDs per dense index, ascending.
    adjacency: Vec<Vec<NodeId>>,
    /// Dense x dense adjacency bits, one row per dense index.
    adj_rows: Vec<FixedBitSet>,
}

impl Network {
    /// Builds a network from explicit node placements. `nodes` lists the
    /// alive IDs with their positions; every other ID in `[0, n_max)` is dead.
    pub fn from_parts(n_max: u32, field: FieldConfig, nodes: &[(NodeId, Point)]) -> Result<Self> {
        field.validate()?;
        if nodes.is_empty() {
            return Err(Error::InvalidConfig("a network needs at least one alive node".into()));
        }
        if nodes.len() as u64 > n_max as u64 {
            return Err(Error::InvalidConfig(format!(
                "{} alive nodes exceed the ID space of {n_max}",
                nodes.len()
            )));
        }
        let mut positions: Vec<Option<Point>> = vec![None; n_max as usize];
        for &(id, p) in nodes {
            if id.0 >= n_max {
                return Err(Error::InvalidConfig(format!(
                    "node ID {id} outside the ID space [0, {n_max})"
                )));
            }
            if positions[id.0 as usize].is_some() {
                return Err(Error::InvalidConfig(format!("duplicate node ID {id}")));
            }
            if !(0.0..=field.length).contains(&p.x) || !(0.0..=field.width).contains(&p.y) {
                return Err(Error::InvalidConfig(format!(
                    "node {id} at ({}, {}) lies outside the {} x {} field",
                    p.x, p.y, field.length, field.width
                )));
            }
            positions[id.0 as usize] = Some(p);
        }
        let alive: Vec<NodeId> =
            (0..n_max).filter(|&i| positions[i as usize].is_some()).map(NodeId).collect();
        let mut dense = vec![None; n_max as usize];
        for (k, id) in alive.iter().enumerate() {
            dense[id.0 as usize] = Some(k as u32);
        }

        let n = alive.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut adj_rows = vec![FixedBitSet::with_capacity(n); n];
        for i in 0..n {
            let pi = positions[alive[i].0 as usize].unwrap();
            for j in (i + 1)..n {
                let pj = positions[alive[j].0 as usize].unwrap();
                // boundary inclusive: distance exactly R still connects
                if field.distance(pi, pj) <= field.radius {
                    adjacency[i].push(alive[j]);
                    adjacency[j].push(alive[i]);
                    adj_rows[i].insert(j);
                    adj_rows[j].insert(i);
                }
            }
        }

        Ok(Network { n_max, field, alive, dense, positions, adjacency, adj_rows })
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn field(&self) -> &FieldConfig {
        &self.field
    }

    /// Alive IDs in ascending order.
    pub fn alive(&self) -> &[NodeId] {
        &self.alive
    }

    /// Number of alive nodes (the quantity the estimators target).
    pub fn alive_count(&self) -> u32 {
        self.alive.len() as u32
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        id.0 < self.n_max && self.dense[id.0 as usize].is_some()
    }

    /// Position of an alive ID, `None` for dead or out-of-range IDs.
    pub fn position(&self, id: NodeId) -> Option<Point> {
        if id.0 < self.n_max {
            self.positions[id.0 as usize]
        } else {
            None
        }
    }

    pub(crate) fn dense_index(&self, id: NodeId) -> Option<usize> {
        if id.0 < self.n_max {
            self.dense[id.0 as usize].map(|k| k as usize)
        } else {
            None
        }
    }

    pub(crate) fn adjacent_dense(&self, i: usize, j: usize) -> bool {
        self.adj_rows[i].contains(j)
    }

    /// Alive neighbors of `id` (distance <= R, excluding `id` itself),
    /// ascending.
    pub fn neighbors(&self, id: NodeId) -> Result<&[NodeId]> {
        let k = self.dense_index(id).ok_or(Error::NotAlive(id))?;
        Ok(&self.adjacency[k])
    }

    /// The `t`-degree ball `B_t(id)`: alive nodes within `t` hops, ascending.
    /// `B_0 = {id}`; the ball stops growing once the connected component of
    /// `id` is exhausted.
    pub fn t_degree_ball(&self, id: NodeId, t: u32) -> Result<Vec<NodeId>> {
        let hops = self.hop_distances(id)?;
        let mut ball: Vec<NodeId> = self
            .alive
            .iter()
            .enumerate()
            .filter(|&(k, _)| hops[k].is_some_and(|h| h <= t))
            .map(|(_, &v)| v)
            .collect();
        ball.sort_unstable();
        Ok(ball)
    }

    /// Hop distance from `id` to every dense index (`None` = unreachable).
    pub(crate) fn hop_distances(&self, id: NodeId) -> Result<Vec<Option<u32>>> {
        let start = self.dense_index(id).ok_or(Error::NotAlive(id))?;
        let mut hops: Vec<Option<u32>> = vec![None; self.alive.len()];
        hops[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            let next = hops[k].unwrap() + 1;
            for nb in &self.adjacency[k] {
                let kn = self.dense[nb.0 as usize].unwrap() as usize;
                if hops[kn].is_none() {
                    hops[kn] = Some(next);
                    queue.push_back(kn);
                }
            }
        }
        Ok(hops)
    }

    /// Whether the alive graph is a single connected component.
    pub fn is_connected(&self) -> bool {
        self.hop_distances(self.alive[0]).unwrap().iter().all(|h| h.is_some())
    }

    /// Hop diameter of the alive graph, `None` if disconnected.
    pub fn diameter(&self) -> Option<u32> {
        let mut best = 0;
        for &id in &self.alive {
            let hops = self.hop_distances(id).unwrap();
            for h in hops {
                best = best.max(h?);
            }
        }
        Some(best)
    }

    /// True edge set of the alive graph as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (k, &a) in self.alive.iter().enumerate() {
            for &b in &self.adjacency[k] {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Samples a network: `n` alive IDs drawn uniformly without replacement from
/// `[0, n_max)`, positions i.i.d. uniform over the field. Equal seeds (equal
/// RNG states) give bit-identical networks.
pub fn generate_network(
    n: u32,
    n_max: u32,
    field: FieldConfig,
    rng: &mut impl Rng,
) -> Result<Network> {
    field.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    if n > n_max {
        return Err(Error::InvalidConfig(format!("n = {n} exceeds n_max = {n_max}")));
    }
    let mut ids: Vec<u32> =
        rand::seq::index::sample(rng, n_max as usize, n as usize).iter().map(|i| i as u32).collect();
    ids.sort_unstable();
    // positions are drawn in ascending-ID order so the stream layout is fixed
    let nodes: Vec<(NodeId, Point)> = ids
        .into_iter()
        .map(|id| {
            let x = rng.gen_range(0.0..field.length);
            let y = rng.gen_range(0.0..field.width);
            (NodeId(id), Point { x, y })
        })
        .collect();
    Network::from_parts(n_max, field, &nodes)
}

/// Expected shell size `|B_t \ B_{t-1}|` under the disk idealization:
/// `n * pi * R^2 * (2t - 1) / (length * width)`.
///
/// Exact for `t = 1` up to the `(n-1)/n` factor; for `t >= 2` it assumes the
/// `t`-hop ball fills the disk of radius `t*R`, which overstates real hop
/// balls except at high density.
pub fn expected_ball_increment(n: u32, field: &FieldConfig, t: u32) -> Result<f64> {
    field.validate()?;
    if t < 1 {
        return Err(Error::InvalidArgument("shell index t must be at least 1".into()));
    }
    Ok(n as f64 * std::f64::consts::PI * field.radius * field.radius * (2.0 * t as f64 - 1.0)
        / field.area())
}
