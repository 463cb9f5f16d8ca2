//! Querying and cardinality estimation.
//!
//! A collector draws `K` IDs uniformly without replacement from the full ID
//! space `[0, n_max)`, collects the packets of the queried nodes that are
//! alive, and counts the distinct IDs in their union, `Z`. Modelling each of
//! the `n_max` ID slots as covered independently with probability `n * alpha`
//! makes `Z / (n_max * alpha)` the best linear unbiased estimate of `n`, with
//! a regime-specific coverage factor `alpha`:
//!
//! - fresh network (no delivery yet): `alpha = K / n_max^2`, so the estimate
//!   reduces to `Z * n_max / K`;
//! - exactly one delivered broadcast: the fresh factor times
//!   `1 + (n_max - K) / (L * W) * pi * R^2 * f * (1 - q)`, accounting for the
//!   IDs a queried node picked up from its first heard neighbors;
//! - saturated network (every packet complete): `alpha = 1 / n_max`, so the
//!   union count itself is the estimate.
//!
//! Because the first protocol round delivers nothing, those regimes
//! correspond to rounds <= 1, round 2, and late rounds respectively;
//! [`estimate_size`] refuses a regime that does not match the round recorded
//! on the query. The rounds in between have no closed form; the `empirical`
//! regime covers them with a coverage factor calibrated on networks of known
//! size (see `analysis::empirical_alpha_product`).
//!
//! The same query can rebuild the communication graph when packets carry
//! coordinates: [`reconstruct_topology`] unions the collected coordinate
//! tables and re-derives edges from the distance rule.

use crate::error::{Error, Result};
use crate::geometry::{FieldConfig, Network, NodeId, Point};
use crate::protocol::SimState;
use fixedbitset::FixedBitSet;
use rand::Rng;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

/// Which knowledge state the coverage factor models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// No broadcast delivered yet (rounds 0 and 1).
    T0,
    /// Exactly one delivered broadcast (round 2).
    T1,
    /// Fully disseminated packets (late rounds).
    TInfinity,
    /// Coverage factor measured on calibration runs rather than derived;
    /// the only option for the rounds between one delivery and saturation.
    Empirical,
}

impl Regime {
    /// The regime the closed forms assume after `round` executed rounds.
    pub fn for_round(round: u32) -> Regime {
        match round {
            0 | 1 => Regime::T0,
            2 => Regime::T1,
            _ => Regime::TInfinity,
        }
    }

    /// Whether this regime describes a state queried after `round` rounds.
    /// A calibrated factor is trusted at whatever round it was measured.
    pub fn matches_round(self, round: u32) -> bool {
        match self {
            Regime::T0 => round <= 1,
            Regime::T1 => round == 2,
            Regime::TInfinity => round >= 3,
            Regime::Empirical => true,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.write_str(match self {
            Regime::T0 => "t0",
            Regime::T1 => "t1",
            Regime::TInfinity => "tinf",
            Regime::Empirical => "empirical",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Regime> {
        match s {
            "t0" => Ok(Regime::T0),
            "t1" => Ok(Regime::T1),
            "tinf" | "t_infinity" => Ok(Regime::TInfinity),
            "empirical" => Ok(Regime::Empirical),
            other => Err(Error::InvalidArgument(format!(
                "unknown regime {other:?}, expected t0, t1, tinf or empirical"
            ))),
        }
    }
}

/// Per-ID coverage probability of a query at a fresh network: the chance
/// that one particular alive ID is queried directly, `K / n_max^2` when
/// averaged over the ID's alive-or-not indicator slot.
pub fn alpha0(k: u32, n_max: u32) -> Result<f64> {
    if n_max == 0 || k == 0 || k > n_max {
        return Err(Error::InvalidArgument(format!(
            "query size must satisfy 1 <= K <= n_max, got K = {k}, n_max = {n_max}"
        )));
    }
    Ok(k as f64 / (n_max as f64 * n_max as f64))
}

/// Multiplicative coverage gain from one delivered broadcast: each queried
/// alive node has picked up, on expectation, the IDs of its neighbors that
/// transmitted (probability `f`) and were heard (probability `1 - q`), and
/// only the `n_max - K` unqueried IDs add anything new.
pub fn alpha1(k: u32, n_max: u32, field: &FieldConfig, f: f64, q: f64) -> Result<f64> {
    if k == 0 || k > n_max {
        return Err(Error::InvalidArgument(format!(
            "query size must satisfy 1 <= K <= n_max, got K = {k}, n_max = {n_max}"
        )));
    }
    field.validate()?;
    if !(0.0..=1.0).contains(&f) || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "f and q must lie in [0, 1], got f = {f}, q = {q}"
        )));
    }
    let disk = std::f64::consts::PI * field.radius * field.radius;
    Ok(1.0 + (n_max - k) as f64 / field.area() * disk * f * (1.0 - q))
}

/// Everything the closed-form coverage factors need.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateParams {
    pub n_max: u32,
    pub k: u32,
    pub field: FieldConfig,
    pub f_initial: f64,
    pub q: f64,
    /// Calibrated coverage factor; required by [`Regime::Empirical`].
    pub empirical_alpha: Option<f64>,
}

impl EstimateParams {
    pub fn new(n_max: u32, k: u32, field: FieldConfig, f_initial: f64, q: f64) -> Self {
        EstimateParams { n_max, k, field, f_initial, q, empirical_alpha: None }
    }

    /// Attaches a coverage factor measured on calibration runs.
    pub fn with_empirical_alpha(mut self, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "a calibrated coverage factor must be positive, got {alpha}"
            )));
        }
        self.empirical_alpha = Some(alpha);
        Ok(self)
    }

    /// Reads everything but `k` off a simulation. Requires a single shared
    /// erasure probability; the closed forms have no per-node version.
    pub fn from_state(state: &SimState, k: u32) -> Result<Self> {
        let q = state.uniform_erasure().ok_or_else(|| {
            Error::InvalidArgument(
                "per-node erasure probabilities do not fit the closed-form coverage factors"
                    .into(),
            )
        })?;
        let net = state.network();
        Ok(EstimateParams {
            n_max: net.n_max(),
            k,
            field: *net.field(),
            f_initial: state.f_initial(),
            q,
            empirical_alpha: None,
        })
    }

    /// The coverage factor `alpha` for a regime.
    pub fn alpha_product(&self, regime: Regime) -> Result<f64> {
        match regime {
            Regime::T0 => alpha0(self.k, self.n_max),
            Regime::T1 => Ok(alpha0(self.k, self.n_max)?
                * alpha1(self.k, self.n_max, &self.field, self.f_initial, self.q)?),
            Regime::TInfinity => {
                if self.n_max == 0 {
                    return Err(Error::InvalidArgument("n_max must be positive".into()));
                }
                Ok(1.0 / self.n_max as f64)
            }
            Regime::Empirical => self.empirical_alpha.ok_or_else(|| {
                Error::InvalidArgument(
                    "the empirical regime needs a calibrated coverage factor; \
                     set one with with_empirical_alpha"
                        .into(),
                )
            }),
        }
    }
}

/// Result of one collector query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    queried: Vec<NodeId>,
    alive_queried: Vec<NodeId>,
    union: FixedBitSet,
    round: u32,
    coords: Option<HashMap<NodeId, Point>>,
}

impl QueryResult {
    /// Queried IDs in draw order.
    pub fn queried(&self) -> &[NodeId] {
        &self.queried
    }

    /// The queried IDs that answered, in draw order.
    pub fn alive_queried(&self) -> &[NodeId] {
        &self.alive_queried
    }

    /// Union of the collected packets, as bits over the ID space.
    pub fn union(&self) -> &FixedBitSet {
        &self.union
    }

    /// Number of distinct IDs in the union, `Z`.
    pub fn z_count(&self) -> u32 {
        self.union.count_ones(..) as u32
    }

    /// Rounds the network had run when the query was taken.
    pub fn round(&self) -> u32 {
        self.round
    }

    /// Reported coordinates of the union members, when packets carried them.
    pub fn coords(&self) -> Option<&HashMap<NodeId, Point>> {
        self.coords.as_ref()
    }
}

/// A uniform random permutation of `[0, n_max)`. Always consumes the same
/// number of draws, and any prefix of it is itself a uniform sample without
/// replacement, so a query of size `K` is the first `K` entries.
pub(crate) fn query_permutation(n_max: u32, rng: &mut impl Rng) -> Vec<NodeId> {
    let mut perm: Vec<NodeId> = (0..n_max).map(NodeId).collect();
    for i in 0..n_max.saturating_sub(1) as usize {
        let j = rng.gen_range(i..n_max as usize);
        perm.swap(i, j);
    }
    perm
}

/// Queries `k` IDs drawn without replacement from the full ID space and
/// unions the packets of those that are alive. Dead IDs simply do not
/// answer. The draw is the prefix of a full permutation, so enlarging `k`
/// under the same RNG state only extends the queried set. In topology mode
/// the collected coordinate tables come along.
pub fn query(state: &SimState, k: u32, rng: &mut impl Rng) -> Result<QueryResult> {
    let n_max = state.network().n_max();
    if k == 0 || k > n_max {
        return Err(Error::InvalidArgument(format!(
            "query size must satisfy 1 <= K <= n_max, got K = {k}, n_max = {n_max}"
        )));
    }
    let mut perm = query_permutation(n_max, rng);
    perm.truncate(k as usize);

    let mut union = FixedBitSet::with_capacity(n_max as usize);
    let mut alive_queried = Vec::new();
    let mut coords = state.topology().then(HashMap::new);
    for &id in &perm {
        if let Some(node) = state.node(id) {
            alive_queried.push(id);
            union.union_with(node.packet().members());
            if let Some(coords) = &mut coords {
                coords.extend(node.coords().expect("topology mode carries coords"));
            }
        }
    }
    Ok(QueryResult { queried: perm, alive_queried, union, round: state.round(), coords })
}

/// The size estimate derived from one query.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub regime: Regime,
    pub z_count: u32,
    /// The coverage factor `alpha` the estimate divided by.
    pub alpha_product: f64,
    pub n_hat: f64,
}

/// Turns a query's union count into a size estimate,
/// `n_hat = Z / (n_max * alpha)`. Fails when the requested regime does not
/// match the number of rounds the queried network had run.
pub fn estimate_size(
    result: &QueryResult,
    params: &EstimateParams,
    regime: Regime,
) -> Result<EstimateReport> {
    if !regime.matches_round(result.round) {
        return Err(Error::InvalidArgument(format!(
            "regime {regime} does not describe a network queried after {} rounds",
            result.round
        )));
    }
    if params.n_max as usize != result.union.len() {
        return Err(Error::InvalidArgument(format!(
            "params assume n_max = {}, query ranged over {}",
            params.n_max,
            result.union.len()
        )));
    }
    if params.k as usize != result.queried.len() {
        return Err(Error::InvalidArgument(format!(
            "params assume K = {}, query drew {}",
            params.k,
            result.queried.len()
        )));
    }
    let alpha = params.alpha_product(regime)?;
    let z = result.z_count();
    Ok(EstimateReport {
        regime,
        z_count: z,
        alpha_product: alpha,
        n_hat: blue_estimate(z as f64, params.n_max as u64, alpha)?,
    })
}

/// Best linear unbiased estimate of `n` from `sum_x` successes over `n_obs`
/// Bernoulli(`n * alpha`) slots: `sum_x / (n_obs * alpha)`.
pub fn blue_estimate(sum_x: f64, n_obs: u64, alpha: f64) -> Result<f64> {
    if n_obs == 0 || !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "estimate needs n_obs >= 1 and alpha > 0, got n_obs = {n_obs}, alpha = {alpha}"
        )));
    }
    if !(0.0..=n_obs as f64).contains(&sum_x) {
        return Err(Error::InvalidArgument(format!(
            "success count must lie in [0, {n_obs}], got {sum_x}"
        )));
    }
    Ok(sum_x / (n_obs as f64 * alpha))
}

fn check_slot_model(n: f64, n_obs: u64, alpha: f64) -> Result<()> {
    if n_obs == 0 || !alpha.is_finite() || alpha <= 0.0 || !n.is_finite() || n < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 0, n_obs >= 1, alpha > 0, got n = {n}, n_obs = {n_obs}, alpha = {alpha}"
        )));
    }
    if n * alpha > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "slot probability n * alpha = {} is not a valid Bernoulli parameter",
            n * alpha
        )));
    }
    Ok(())
}

/// Variance of the estimator at true size `n`:
/// `n * (1 - n * alpha) / (n_obs * alpha)`. Zero at the degenerate
/// boundaries `n = 0` and `n * alpha = 1`.
pub fn estimator_variance(n: f64, n_obs: u64, alpha: f64) -> Result<f64> {
    check_slot_model(n, n_obs, alpha)?;
    Ok(n * (1.0 - n * alpha) / (n_obs as f64 * alpha))
}

/// Fisher information the `n_obs` slots carry about `n`:
/// `n_obs * alpha / (n * (1 - n * alpha))`, the exact reciprocal of
/// [`estimator_variance`], so the estimator meets the Cramér-Rao bound.
/// Unlike the variance this blows up at the boundaries, so `n = 0` and
/// `n * alpha = 1` are rejected.
pub fn fisher_information(n: f64, n_obs: u64, alpha: f64) -> Result<f64> {
    check_slot_model(n, n_obs, alpha)?;
    if n == 0.0 || n * alpha == 1.0 {
        return Err(Error::InvalidArgument(format!(
            "information is unbounded at the degenerate slot probability {}",
            n * alpha
        )));
    }
    Ok(n_obs as f64 * alpha / (n * (1.0 - n * alpha)))
}

/// Success probability of the OR of independent Bernoulli variables:
/// `1 - prod(1 - p_i)`.
pub fn max_bernoulli_param(ps: &[f64]) -> Result<f64> {
    if ps.is_empty() {
        return Err(Error::InvalidArgument(
            "the maximum of zero Bernoulli variables is undefined".into(),
        ));
    }
    let mut miss = 1.0;
    for &p in ps {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "probabilities must lie in [0, 1], got {p}"
            )));
        }
        miss *= 1.0 - p;
    }
    Ok(1.0 - miss)
}

/// A communication graph rebuilt from collected coordinate tables.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyEstimate {
    /// Discovered nodes with their reported coordinates, ascending by ID.
    pub vertices: Vec<(NodeId, Point)>,
    /// Edges re-derived from the distance rule, each pair ascending.
    pub edges: Vec<(NodeId, NodeId)>,
}

impl TopologyEstimate {
    /// Fraction of the true alive nodes present in the reconstruction.
    pub fn vertex_recall(&self, net: &Network) -> f64 {
        let found = self.vertices.iter().filter(|(id, _)| net.is_alive(*id)).count();
        found as f64 / net.alive_count() as f64
    }

    /// Fraction of the true edges present in the reconstruction.
    pub fn edge_recall(&self, net: &Network) -> f64 {
        let truth = net.edges();
        if truth.is_empty() {
            return 1.0;
        }
        let found = self.edges.iter().filter(|e| truth.binary_search(e).is_ok()).count();
        found as f64 / truth.len() as f64
    }

    /// Reconstructed edges that do not exist in the true graph.
    pub fn false_edges(&self, net: &Network) -> usize {
        let truth = net.edges();
        self.edges.iter().filter(|e| truth.binary_search(e).is_err()).count()
    }
}

/// Rebuilds the graph a query's union implies: every union member is a
/// vertex, and two vertices share an edge when their reported coordinates
/// lie within the communication radius. Requires a query taken in topology
/// mode, so the union comes with coordinates.
pub fn reconstruct_topology(result: &QueryResult, field: &FieldConfig) -> Result<TopologyEstimate> {
    let coords = result.coords().ok_or_else(|| {
        Error::InvalidState(
            "the query collected no coordinates; run the protocol in topology mode".into(),
        )
    })?;
    let mut vertices = Vec::with_capacity(result.z_count() as usize);
    for id in result.union.ones() {
        let id = NodeId(id as u32);
        let pos = coords.get(&id).ok_or_else(|| {
            Error::InvalidState(format!("union member {id} arrived without coordinates"))
        })?;
        vertices.push((id, *pos));
    }

    let mut edges = Vec::new();
    for (a, &(id_a, pos_a)) in vertices.iter().enumerate() {
        for &(id_b, pos_b) in &vertices[a + 1..] {
            if field.distance(pos_a, pos_b) <= field.radius {
                edges.push((id_a, id_b));
            }
        }
    }
    Ok(TopologyEstimate { vertices, edges })
}

/// One trial's estimate with the inputs that produced it; renders as one CSV
/// row of the standard results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub seed: u64,
    pub n: u32,
    pub n_max: u32,
    pub k: u32,
    pub rounds: u32,
    pub f_initial: f64,
    pub q: f64,
    pub regime: Regime,
    pub z_count: u32,
    pub alpha_product: f64,
    pub n_hat: f64,
}

impl ReportRow {
    pub const CSV_HEADER: &'static str =
        "seed,n,n_max,k,rounds,f_initial,q,regime,z_count,alpha_product,n_hat";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.n,
            self.n_max,
            self.k,
            self.rounds,
            self.f_initial,
            self.q,
            self.regime,
            self.z_count,
            self.alpha_product,
            self.n_hat
        )
    }
}
