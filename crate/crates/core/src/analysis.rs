//! Monte Carlo drivers, parameter sweeps, and an exhaustive oracle.
//!
//! A trial is fully described by `(TrialConfig, trial index)`: the index is
//! added to the base seed, and the network, the protocol randomness, and the
//! query each read their own named substream of that seed. Two consequences
//! drive the design here:
//!
//! - any single trial can be reproduced later from its seed alone;
//! - runs that differ in one parameter but share a base seed are *paired*:
//!   they see identical networks and identical protocol draws, so comparisons
//!   across a parameter grid cancel most of the sampling noise. Queries draw
//!   a whole permutation (not just `K` IDs), which keeps the RNG aligned and
//!   makes a larger query a strict superset of a smaller one.
//!
//! The exhaustive oracle enumerates every reachable trajectory of the
//! protocol on a tiny instance, weighting each by its exact probability, and
//! averages the query count over all possible query subsets. It shares no
//! code or randomness with the simulator, so agreement between the two is a
//! meaningful check; it refuses instances whose outcome space would exceed a
//! fixed budget rather than silently truncating.

use crate::error::{Error, Result};
use crate::estimation::{
    blue_estimate, query_permutation, EstimateParams, Regime, ReportRow,
};
use crate::geometry::{generate_network, FieldConfig, Network, NodeId};
use crate::protocol::{init, ProtocolConfig, SimState, TraceRecord};
use crate::rng::{substream, Stream};
use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Everything one Monte Carlo run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    /// Alive nodes per trial.
    pub n: u32,
    /// Size of the ID space.
    pub n_max: u32,
    pub field: FieldConfig,
    pub f_initial: f64,
    /// Shared erasure probability.
    pub q: f64,
    /// Rounds to run before querying.
    pub rounds: u32,
    /// Query size.
    pub k: u32,
    pub trials: u32,
    pub base_seed: u64,
    /// Carry coordinates in packets.
    pub topology: bool,
    pub coord_bits: u32,
}

impl Default for TrialConfig {
    /// The reference experiment scale: 300 alive nodes out of 350 IDs on a
    /// unit field with communication radius 0.1, f = 0.5, q = 0.1.
    fn default() -> Self {
        TrialConfig {
            n: 300,
            n_max: 350,
            field: FieldConfig::unit(0.1),
            f_initial: 0.5,
            q: 0.1,
            rounds: 2,
            k: 30,
            trials: 1000,
            base_seed: 0,
            topology: false,
            coord_bits: 32,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        if self.n == 0 || self.n > self.n_max {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= n <= n_max, got n = {}, n_max = {}",
                self.n, self.n_max
            )));
        }
        if self.k == 0 || self.k > self.n_max {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= K <= n_max, got K = {}, n_max = {}",
                self.k, self.n_max
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("need at least one trial".into()));
        }
        if !self.f_initial.is_finite() || self.f_initial <= 0.0 || self.f_initial > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "f_initial must lie in (0, 1], got {}",
                self.f_initial
            )));
        }
        if !self.q.is_finite() || !(0.0..1.0).contains(&self.q) {
            return Err(Error::InvalidConfig(format!("q must lie in [0, 1), got {}", self.q)));
        }
        Ok(())
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        let mut cfg = ProtocolConfig::new(self.f_initial, self.q);
        cfg.topology = self.topology;
        cfg.coord_bits = self.coord_bits;
        cfg
    }

    pub fn estimate_params(&self) -> EstimateParams {
        EstimateParams::new(self.n_max, self.k, self.field, self.f_initial, self.q)
    }

    /// The estimator regime [`run_trials`] applies after `rounds` rounds.
    pub fn regime(&self) -> Regime {
        Regime::for_round(self.rounds)
    }
}

/// Seed of one trial within a run.
pub fn trial_seed(base_seed: u64, trial: u32) -> u64 {
    base_seed.wrapping_add(trial as u64)
}

/// One trial's essentials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub z_count: u32,
    pub n_hat: f64,
}

fn run_one(cfg: &TrialConfig, seed: u64) -> Result<(u32, f64, f64)> {
    let mut net_rng = substream(seed, Stream::Network);
    let net = Arc::new(generate_network(cfg.n, cfg.n_max, cfg.field, &mut net_rng)?);
    let mut state = init(net, &cfg.protocol_config())?;
    let mut proto_rng = substream(seed, Stream::Protocol);
    state.run(cfg.rounds, &mut proto_rng);
    let mut query_rng = substream(seed, Stream::Query);
    let result = crate::estimation::query(&state, cfg.k, &mut query_rng)?;
    let report = crate::estimation::estimate_size(&result, &cfg.estimate_params(), cfg.regime())?;
    Ok((report.z_count, report.n_hat, report.alpha_product))
}

/// Runs `cfg.trials` independent trials in parallel. Trial `i` uses seed
/// `base_seed + i`; outcomes keep trial order.
pub fn run_trial_outcomes(cfg: &TrialConfig) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.base_seed, t);
            let (z_count, n_hat, _) = run_one(cfg, seed)?;
            Ok(TrialOutcome { seed, z_count, n_hat })
        })
        .collect()
}

/// Runs `cfg.trials` independent end-to-end trials and aggregates the union
/// counts, the size estimates, and the coverage of the true count.
pub fn run_trials(cfg: &TrialConfig) -> Result<SweepResult> {
    let outcomes = run_trial_outcomes(cfg)?;
    let zs: Vec<f64> = outcomes.iter().map(|o| o.z_count as f64).collect();
    let hats: Vec<f64> = outcomes.iter().map(|o| o.n_hat).collect();
    let z = summarize(&zs);
    let hat = summarize(&hats);
    Ok(SweepResult {
        n: cfg.n,
        n_max: cfg.n_max,
        k: cfg.k,
        rounds: cfg.rounds,
        f_initial: cfg.f_initial,
        q: cfg.q,
        trials: cfg.trials,
        mean_z: z.mean,
        std_z: z.std,
        ci95_z: z.ci95,
        mean_n_hat: hat.mean,
        std_n_hat: hat.std,
        ci95_n_hat: hat.ci95,
        mean_coverage: z.mean / cfg.n as f64,
    })
}

/// Like [`run_trial_outcomes`], but each outcome carries the full parameter
/// echo, ready for the standard results table.
pub fn run_trials_detailed(cfg: &TrialConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let regime = cfg.regime();
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.base_seed, t);
            let (z_count, n_hat, alpha_product) = run_one(cfg, seed)?;
            Ok(ReportRow {
                seed,
                n: cfg.n,
                n_max: cfg.n_max,
                k: cfg.k,
                rounds: cfg.rounds,
                f_initial: cfg.f_initial,
                q: cfg.q,
                regime,
                z_count,
                alpha_product,
                n_hat,
            })
        })
        .collect()
}

/// Re-runs one trial of a config and returns the node-level trace after
/// every round, the initial state included.
pub fn trace_trial(cfg: &TrialConfig, trial: u32) -> Result<Vec<TraceRecord>> {
    cfg.validate()?;
    let seed = trial_seed(cfg.base_seed, trial);
    let mut net_rng = substream(seed, Stream::Network);
    let net = Arc::new(generate_network(cfg.n, cfg.n_max, cfg.field, &mut net_rng)?);
    let mut state = init(net, &cfg.protocol_config())?;
    let mut proto_rng = substream(seed, Stream::Protocol);
    let mut records = state.trace_records();
    for _ in 0..cfg.rounds {
        state.step(&mut proto_rng);
        records.extend(state.trace_records());
    }
    Ok(records)
}

/// Sample statistics with a normal-approximation confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n: u32,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 below two samples.
    pub std: f64,
    pub se: f64,
    pub ci95: (f64, f64),
}

/// Mean, sample standard deviation, standard error, and a 95% interval.
pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary { n: 0, mean: f64::NAN, std: 0.0, se: 0.0, ci95: (f64::NAN, f64::NAN) };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let se = std / (n as f64).sqrt();
    Summary { n: n as u32, mean, std, se, ci95: (mean - 1.96 * se, mean + 1.96 * se) }
}

/// Empirical coverage factor after `rounds` rounds (`cfg.rounds` is
/// ignored): `mean(Z) / (n_max * n)`, the quantity the closed-form alpha
/// products predict and the calibration input of the `empirical` estimator
/// regime. Needs enough trials to mean anything.
pub fn empirical_alpha_product(cfg: &TrialConfig, rounds: u32) -> Result<f64> {
    if cfg.trials < 500 {
        return Err(Error::InvalidArgument(format!(
            "empirical coverage needs at least 500 trials, got {}",
            cfg.trials
        )));
    }
    let cfg = TrialConfig { rounds, ..cfg.clone() };
    let outcomes = run_trial_outcomes(&cfg)?;
    let mean_z = outcomes.iter().map(|o| o.z_count as f64).sum::<f64>() / outcomes.len() as f64;
    Ok(mean_z / (cfg.n_max as f64 * cfg.n as f64))
}

/// One swept parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepOverride {
    Queried(u32),
    Rounds(u32),
    FInitial(f64),
    Erasure(f64),
    Alive(u32),
}

impl SweepOverride {
    pub fn parameter(&self) -> &'static str {
        match self {
            SweepOverride::Queried(_) => "k",
            SweepOverride::Rounds(_) => "rounds",
            SweepOverride::FInitial(_) => "f_initial",
            SweepOverride::Erasure(_) => "q",
            SweepOverride::Alive(_) => "n",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            SweepOverride::Queried(v) | SweepOverride::Rounds(v) | SweepOverride::Alive(v) => {
                v as f64
            }
            SweepOverride::FInitial(v) | SweepOverride::Erasure(v) => v,
        }
    }

    fn apply(&self, cfg: &mut TrialConfig) {
        match *self {
            SweepOverride::Queried(v) => cfg.k = v,
            SweepOverride::Rounds(v) => cfg.rounds = v,
            SweepOverride::FInitial(v) => cfg.f_initial = v,
            SweepOverride::Erasure(v) => cfg.q = v,
            SweepOverride::Alive(v) => cfg.n = v,
        }
    }
}

/// Aggregates of one batch of trials: the grid point that produced them and
/// the statistics of the union count, the size estimate, and the coverage of
/// the true count. Intervals are normal-approximation 95% CIs of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub n: u32,
    pub n_max: u32,
    pub k: u32,
    pub rounds: u32,
    pub f_initial: f64,
    pub q: f64,
    pub trials: u32,
    pub mean_z: f64,
    pub std_z: f64,
    pub ci95_z: (f64, f64),
    pub mean_n_hat: f64,
    pub std_n_hat: f64,
    pub ci95_n_hat: (f64, f64),
    /// Mean fraction of alive nodes in the queried union, `mean(Z) / n`.
    pub mean_coverage: f64,
}

/// Runs the base config once per grid point, overriding one parameter each
/// time. Every point reuses the base seed, so the points are paired: they
/// share networks and protocol randomness and differ only in the swept
/// parameter's effect.
pub fn sweep(base: &TrialConfig, points: &[SweepOverride]) -> Result<Vec<SweepResult>> {
    points
        .iter()
        .map(|point| {
            let mut cfg = base.clone();
            point.apply(&mut cfg);
            run_trials(&cfg)
        })
        .collect()
}

/// Sweeps the query size: the estimate-versus-K curve.
pub fn sweep_queried_vs_estimated(base: &TrialConfig, ks: &[u32]) -> Result<Vec<SweepResult>> {
    let points: Vec<SweepOverride> = ks.iter().map(|&k| SweepOverride::Queried(k)).collect();
    sweep(base, &points)
}

/// What a coverage target is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoverageMetric {
    /// Fraction of alive nodes present in the queried union, `Z / n`.
    #[default]
    Count,
    /// Accuracy of the size estimate, `1 - |n_hat - n| / n`, with the regime
    /// picked by the round being measured. A threshold of 0.95 asks for a
    /// relative error within 5%. Negative when the estimate is off by more
    /// than the truth itself.
    Estimate,
}

impl fmt::Display for CoverageMetric {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.write_str(match self {
            CoverageMetric::Count => "count",
            CoverageMetric::Estimate => "estimate",
        })
    }
}

impl FromStr for CoverageMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<CoverageMetric> {
        match s {
            "count" => Ok(CoverageMetric::Count),
            "estimate" => Ok(CoverageMetric::Estimate),
            other => Err(Error::InvalidArgument(format!(
                "unknown coverage metric {other:?}, expected count or estimate"
            ))),
        }
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !threshold.is_finite() || threshold <= 0.0 || threshold > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "coverage threshold must lie in (0, 1], got {threshold}"
        )));
    }
    Ok(())
}

/// One trial's first-passage time to a coverage target.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeToCoveragePoint {
    pub seed: u64,
    /// First round at which coverage reached the threshold; `None` when the
    /// cap hit first.
    pub rounds: Option<u32>,
    /// Coverage at that round, or at the cap when censored.
    pub coverage: f64,
}

/// For each trial, fixes a query set of size `cfg.k` up front and replays
/// the protocol round by round until the queried union covers the target
/// fraction, or `round_cap` rounds have run (`cfg.rounds` is ignored).
pub fn time_to_coverage(
    cfg: &TrialConfig,
    threshold: f64,
    metric: CoverageMetric,
    round_cap: u32,
) -> Result<Vec<TimeToCoveragePoint>> {
    cfg.validate()?;
    check_threshold(threshold)?;
    let params = cfg.estimate_params();
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.base_seed, t);
            let mut net_rng = substream(seed, Stream::Network);
            let net = Arc::new(generate_network(cfg.n, cfg.n_max, cfg.field, &mut net_rng)?);
            let mut state = init(net, &cfg.protocol_config())?;
            let mut query_rng = substream(seed, Stream::Query);
            let mut queried = query_permutation(cfg.n_max, &mut query_rng);
            queried.truncate(cfg.k as usize);

            let coverage_now = |state: &SimState| -> Result<f64> {
                let mut union = FixedBitSet::with_capacity(cfg.n_max as usize);
                for &id in &queried {
                    if let Some(node) = state.node(id) {
                        union.union_with(node.packet().members());
                    }
                }
                let z = union.count_ones(..) as f64;
                match metric {
                    CoverageMetric::Count => Ok(z / cfg.n as f64),
                    CoverageMetric::Estimate => {
                        let alpha = params.alpha_product(Regime::for_round(state.round()))?;
                        let n_hat = blue_estimate(z, cfg.n_max as u64, alpha)?;
                        Ok(1.0 - (n_hat - cfg.n as f64).abs() / cfg.n as f64)
                    }
                }
            };

            let mut proto_rng = substream(seed, Stream::Protocol);
            let mut coverage = coverage_now(&state)?;
            let mut rounds = None;
            if coverage >= threshold {
                rounds = Some(0);
            } else {
                for r in 1..=round_cap {
                    state.step(&mut proto_rng);
                    coverage = coverage_now(&state)?;
                    if coverage >= threshold {
                        rounds = Some(r);
                        break;
                    }
                }
            }
            Ok(TimeToCoveragePoint { seed, rounds, coverage })
        })
        .collect()
}

/// The smallest query size meeting a coverage target.
#[derive(Debug, Clone, PartialEq)]
pub struct MinQueriedPoint {
    pub rounds: u32,
    pub threshold: f64,
    /// Smallest `K` whose mean coverage reaches the threshold, or `None`
    /// when even querying every ID misses it.
    pub min_k: Option<u32>,
    /// Mean coverage at `min_k`, or at `K = n_max` when unreachable.
    pub coverage: f64,
}

/// Finds the smallest query size whose mean coverage after `cfg.rounds`
/// rounds reaches `threshold` (`cfg.k` is ignored). Each trial draws one
/// query permutation and scores every prefix of it, so all `K` values are
/// evaluated on identical randomness; under the count metric coverage is
/// then monotone in `K` by construction and a binary search is sound, while
/// the estimate metric has no such structure and is scanned linearly.
pub fn min_queried_for_coverage(
    cfg: &TrialConfig,
    threshold: f64,
    metric: CoverageMetric,
) -> Result<MinQueriedPoint> {
    cfg.validate()?;
    check_threshold(threshold)?;
    let n_max = cfg.n_max as usize;

    // per-trial union counts after each permutation prefix, in trial order
    let curves: Vec<Vec<u64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.base_seed, t);
            let mut net_rng = substream(seed, Stream::Network);
            let net = Arc::new(generate_network(cfg.n, cfg.n_max, cfg.field, &mut net_rng)?);
            let mut state = init(net, &cfg.protocol_config())?;
            let mut proto_rng = substream(seed, Stream::Protocol);
            state.run(cfg.rounds, &mut proto_rng);

            let mut query_rng = substream(seed, Stream::Query);
            let perm = query_permutation(cfg.n_max, &mut query_rng);
            let mut union = FixedBitSet::with_capacity(n_max);
            let mut by_k = Vec::with_capacity(n_max);
            for id in perm {
                if let Some(node) = state.node(id) {
                    union.union_with(node.packet().members());
                }
                by_k.push(union.count_ones(..) as u64);
            }
            Ok(by_k)
        })
        .collect::<Result<_>>()?;

    // mean coverage per query size, summed in a fixed order so results are
    // reproducible bit for bit
    let trials = cfg.trials as f64;
    let n = cfg.n as f64;
    let coverage: Vec<f64> = match metric {
        CoverageMetric::Count => {
            let mut sums = vec![0u64; n_max];
            for curve in &curves {
                for (s, &z) in sums.iter_mut().zip(curve) {
                    *s += z;
                }
            }
            sums.iter().map(|&s| s as f64 / trials / n).collect()
        }
        CoverageMetric::Estimate => {
            let regime = cfg.regime();
            let alphas: Vec<f64> = (1..=cfg.n_max)
                .map(|k| {
                    EstimateParams::new(cfg.n_max, k, cfg.field, cfg.f_initial, cfg.q)
                        .alpha_product(regime)
                })
                .collect::<Result<_>>()?;
            let mut err_sums = vec![0.0f64; n_max];
            for curve in &curves {
                for ((e, &z), &alpha) in err_sums.iter_mut().zip(curve).zip(&alphas) {
                    let n_hat = z as f64 / (cfg.n_max as f64 * alpha);
                    *e += (n_hat - n).abs();
                }
            }
            err_sums.iter().map(|&e| 1.0 - e / trials / n).collect()
        }
    };

    let found = match metric {
        CoverageMetric::Count => {
            debug_assert!(coverage.windows(2).all(|w| w[0] <= w[1]));
            let first = coverage.partition_point(|&c| c < threshold);
            (first < n_max).then_some(first)
        }
        CoverageMetric::Estimate => coverage.iter().position(|&c| c >= threshold),
    };

    let (min_k, coverage) = match found {
        Some(k_index) => (Some((k_index + 1) as u32), coverage[k_index]),
        None => (None, coverage[n_max - 1]),
    };
    Ok(MinQueriedPoint { rounds: cfg.rounds, threshold, min_k, coverage })
}

/// Exact query-count moments from full enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactExpectation {
    pub mean: f64,
    pub variance: f64,
    /// Distinct positive-probability protocol trajectories.
    pub leaves: u64,
    /// Query subsets averaged per trajectory.
    pub query_subsets: u64,
}

const ORACLE_OUTCOME_BUDGET: u64 = 1_000_000;
// free binary choices per phase; 2^21 single-round outcomes already exceed
// the budget
const ORACLE_MAX_FREE: usize = 20;

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    c as u64
}

fn k_subset_masks(n_max: u32, k: u32) -> Vec<u64> {
    let mut masks = Vec::new();
    let mut idx: Vec<u32> = (0..k).collect();
    loop {
        masks.push(idx.iter().fold(0u64, |m, &i| m | (1 << i)));
        // advance to the next combination in lexicographic order
        let mut pos = k as i64 - 1;
        while pos >= 0 && idx[pos as usize] == n_max - k + pos as u32 {
            pos -= 1;
        }
        if pos < 0 {
            return masks;
        }
        idx[pos as usize] += 1;
        for j in (pos as usize + 1)..k as usize {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

struct Oracle<'a> {
    net: &'a Network,
    q: Vec<f64>,
    f_initial: f64,
    /// Query subsets as bit masks over the ID space.
    subsets: Vec<u64>,
    /// Dense index of each ID, if alive.
    dense_of_id: Vec<Option<usize>>,
    leaves: u64,
    total_p: f64,
    e_z: f64,
    e_z2: f64,
}

impl Oracle<'_> {
    fn leaf(&mut self, packets: &[(u64, f64)], p: f64) -> Result<()> {
        self.leaves += 1;
        if self.leaves.saturating_mul(self.subsets.len() as u64) > ORACLE_OUTCOME_BUDGET {
            return Err(Error::OutcomeSpaceTooLarge(format!(
                "aborted after {} trajectories x {} query subsets; budget is {}",
                self.leaves,
                self.subsets.len(),
                ORACLE_OUTCOME_BUDGET
            )));
        }
        let mut sum_z = 0.0;
        let mut sum_z2 = 0.0;
        for &subset in &self.subsets {
            let mut union = 0u64;
            let mut rest = subset;
            while rest != 0 {
                let id = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                if let Some(dense) = self.dense_of_id[id] {
                    union |= packets[dense].0;
                }
            }
            let z = union.count_ones() as f64;
            sum_z += z;
            sum_z2 += z * z;
        }
        let c = self.subsets.len() as f64;
        self.total_p += p;
        self.e_z += p * sum_z / c;
        self.e_z2 += p * sum_z2 / c;
        Ok(())
    }

    fn explore(
        &mut self,
        nodes: &[(u64, f64)],
        prev_tx: &[usize],
        rounds_left: u32,
        p: f64,
    ) -> Result<()> {
        if rounds_left == 0 {
            return self.leaf(nodes, p);
        }

        // Phase A branch points: (receiver, transmitting neighbor) pairs in
        // the simulator's draw order. A pair with q = 0 has only the heard
        // outcome.
        let mut pairs = Vec::new();
        let mut free_pairs = Vec::new();
        for i in 0..nodes.len() {
            for &s in prev_tx {
                if self.net.adjacent_dense(i, s) {
                    let free = self.q[i] > 0.0;
                    if free {
                        free_pairs.push(pairs.len());
                    }
                    pairs.push((i, s));
                }
            }
        }
        if free_pairs.len() > ORACLE_MAX_FREE {
            return Err(Error::OutcomeSpaceTooLarge(format!(
                "one round has 2^{} reception outcomes; budget is {}",
                free_pairs.len(),
                ORACLE_OUTCOME_BUDGET
            )));
        }

        for heard_bits in 0..(1u64 << free_pairs.len()) {
            let mut p_heard = 1.0;
            let mut merged: Vec<(u64, f64)> = nodes.to_vec();
            for (pair_index, &(i, s)) in pairs.iter().enumerate() {
                let heard = match free_pairs.iter().position(|&fp| fp == pair_index) {
                    Some(bit) => {
                        let h = heard_bits >> bit & 1 == 1;
                        p_heard *= if h { 1.0 - self.q[i] } else { self.q[i] };
                        h
                    }
                    None => true,
                };
                if !heard {
                    continue;
                }
                // payloads come from the round-start state, not the merged
                // copy, matching the simulator's snapshot
                let payload = nodes[s].0;
                if payload & !merged[i].0 != 0 {
                    merged[i].0 |= payload;
                    merged[i].1 = (merged[i].1 + 1.0) / 2.0;
                }
            }

            // Phase B branch points: one transmit choice per node; f = 1 has
            // only the transmit outcome.
            let free_tx: Vec<usize> =
                (0..merged.len()).filter(|&i| merged[i].1 < 1.0).collect();
            if free_tx.len() > ORACLE_MAX_FREE {
                return Err(Error::OutcomeSpaceTooLarge(format!(
                    "one round has 2^{} transmission outcomes; budget is {}",
                    free_tx.len(),
                    ORACLE_OUTCOME_BUDGET
                )));
            }
            for tx_bits in 0..(1u64 << free_tx.len()) {
                let mut p_tx = 1.0;
                let mut next = merged.clone();
                let mut tx = Vec::new();
                for (i, node) in next.iter_mut().enumerate() {
                    let sends = match free_tx.iter().position(|&ft| ft == i) {
                        Some(bit) => {
                            let s = tx_bits >> bit & 1 == 1;
                            p_tx *= if s { node.1 } else { 1.0 - node.1 };
                            s
                        }
                        None => true,
                    };
                    if sends {
                        tx.push(i);
                        node.1 = self.f_initial;
                    }
                }
                if p_tx == 0.0 {
                    continue;
                }
                self.explore(&next, &tx, rounds_left - 1, p * p_heard * p_tx)?;
            }
        }
        Ok(())
    }
}

/// Exact mean and variance of the query count `Z` on a fixed network, from
/// full enumeration of the protocol's outcome space and all query subsets.
/// Instances whose outcome space exceeds a fixed budget are refused.
pub fn exhaustive_expectation(
    net: &Network,
    proto: &ProtocolConfig,
    rounds: u32,
    k: u32,
) -> Result<ExactExpectation> {
    let n_max = net.n_max();
    if n_max > 64 {
        return Err(Error::OutcomeSpaceTooLarge(format!(
            "exhaustive packets are 64-bit masks; n_max = {n_max} does not fit"
        )));
    }
    if k == 0 || k > n_max {
        return Err(Error::InvalidArgument(format!(
            "query size must satisfy 1 <= K <= n_max, got K = {k}, n_max = {n_max}"
        )));
    }
    let subsets_count = binomial(n_max as u64, k as u64);
    if subsets_count > ORACLE_OUTCOME_BUDGET {
        return Err(Error::OutcomeSpaceTooLarge(format!(
            "{subsets_count} query subsets already exceed the budget of {ORACLE_OUTCOME_BUDGET}"
        )));
    }

    // reuse the simulator's own config validation and q resolution
    let probe = init(Arc::new(net.clone()), proto)?;
    let q: Vec<f64> = net
        .alive()
        .iter()
        .map(|&id| match &proto.erasure {
            crate::protocol::Erasure::Constant(v) => *v,
            crate::protocol::Erasure::PerNode(m) => m[&id],
        })
        .collect();
    drop(probe);

    let dense_of_id: Vec<Option<usize>> =
        (0..n_max).map(|id| net.dense_index(NodeId(id))).collect();
    let start: Vec<(u64, f64)> =
        net.alive().iter().map(|id| (1u64 << id.0, proto.f_initial)).collect();

    let mut oracle = Oracle {
        net,
        q,
        f_initial: proto.f_initial,
        subsets: k_subset_masks(n_max, k),
        dense_of_id,
        leaves: 0,
        total_p: 0.0,
        e_z: 0.0,
        e_z2: 0.0,
    };
    oracle.explore(&start, &[], rounds, 1.0)?;

    debug_assert!((oracle.total_p - 1.0).abs() < 1e-9, "probabilities sum to {}", oracle.total_p);
    let variance = (oracle.e_z2 - oracle.e_z * oracle.e_z).max(0.0);
    Ok(ExactExpectation {
        mean: oracle.e_z,
        variance,
        leaves: oracle.leaves,
        query_subsets: oracle.subsets.len() as u64,
    })
}

/// Monte Carlo counterpart of [`exhaustive_expectation`]: runs the real
/// simulator on the same fixed network with fresh randomness per trial and
/// summarizes the query counts.
pub fn monte_carlo_expectation(
    net: &Arc<Network>,
    proto: &ProtocolConfig,
    rounds: u32,
    k: u32,
    trials: u32,
    base_seed: u64,
) -> Result<Summary> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let zs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(base_seed, t);
            let mut state = init(net.clone(), proto)?;
            let mut proto_rng = substream(seed, Stream::Protocol);
            state.run(rounds, &mut proto_rng);
            let mut query_rng = substream(seed, Stream::Query);
            let result = crate::estimation::query(&state, k, &mut query_rng)?;
            Ok(result.z_count() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(&zs))
}
