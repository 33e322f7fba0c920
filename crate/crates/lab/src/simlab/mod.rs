//! Simulation harness: scenario configuration, deterministic seeding, the
//! replication engine, and aggregation into tidy summaries.
//!
//! A scenario is a design (feature law plus hypothesis family), an amplitude
//! law, a method roster, and a sweep axis of n/p ratios. Every replicate is
//! reproducible from (master seed, point index, replicate index) alone;
//! aggregation is independent of worker count and completion order.

pub mod generate;
pub mod methods;
pub mod metrics;

use crate::knockoffs::{
    equicorrelated_recipe, group_equicorrelated_recipe, GaussianDesign, KnockoffError,
    KnockoffSampler,
};
use crate::lasso::LassoError;
use kelp_core::elp::ElpError;
use kelp_core::evalue::EValueError;
use kelp_core::family::{FamilyError, HypothesisFamily, PartitionSpec};
use kelp_core::kelp::{GammaPolicy, KelpError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Knockoff(#[from] KnockoffError),
    #[error(transparent)]
    Lasso(#[from] LassoError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Kelp(#[from] KelpError),
    #[error(transparent)]
    Elp(#[from] ElpError),
    #[error(transparent)]
    EValue(#[from] EValueError),
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of two seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

/// Seed of one replicate at one sweep point. Streams inside the replicate
/// derive from this with further `mix_seed` tags.
pub fn replicate_seed(master: u64, point: usize, replicate: usize) -> u64 {
    mix_seed(mix_seed(master, point as u64), replicate as u64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DesignSpec {
    /// Block-diagonal AR(1) features, one outcome, model-X group knockoffs
    /// per resolution.
    BlockAr1 { block: usize, rho: f64, resolutions: Vec<usize> },
    /// Global AR(1) features; `outcomes > 1` turns on the shared-design
    /// multi-outcome mode used by the partial-conjunction methods.
    Ar1Global {
        rho: f64,
        resolutions: Vec<usize>,
        #[serde(default = "one")]
        outcomes: usize,
        #[serde(default = "one")]
        conjunction_u: usize,
    },
    /// Global AR(1) features with fixed-design knockoffs and two layers
    /// (individual and grouped) for the multilayer filter.
    FixedEquiMlkf {
        rho: f64,
        group: usize,
        #[serde(default = "two")]
        signal_groups: usize,
    },
    /// Four binary leaf outcomes on a shared Gaussian design; parents are
    /// logical ORs of their descendants. Hypotheses live on (outcome node,
    /// feature) pairs across three tree levels.
    OutcomeTree { rho: f64 },
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

impl DesignSpec {
    pub fn kind_str(&self) -> &'static str {
        match self {
            DesignSpec::BlockAr1 { .. } => "block-ar1",
            DesignSpec::Ar1Global { .. } => "ar1-global",
            DesignSpec::FixedEquiMlkf { .. } => "fixed-equi-mlkf",
            DesignSpec::OutcomeTree { .. } => "outcome-tree",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AmplitudeLaw {
    /// Centered Gaussian magnitudes with |draw| floored at floor_frac * tau.
    Gaussian {
        tau: f64,
        #[serde(default = "default_floor")]
        floor_frac: f64,
    },
    /// Magnitude a/sqrt(n) with signs from fair coin flips.
    FixedOverSqrtN { a: f64 },
    /// Uncentered Gaussian draws used as-is (tree coefficients).
    GaussianShifted { mu: f64, tau: f64 },
}

fn default_floor() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaSpec {
    Moderate,
    HighDim,
    Graded,
    Fixed(f64),
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::Moderate
    }
}

impl GammaSpec {
    pub fn to_policy(self) -> GammaPolicy {
        match self {
            GammaSpec::Moderate => GammaPolicy::Moderate,
            GammaSpec::HighDim => GammaPolicy::HighDim,
            GammaSpec::Graded => GammaPolicy::Graded,
            GammaSpec::Fixed(v) => GammaPolicy::Fixed(v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodId {
    Kelp,
    KnockoffPerResolution,
    KnockoffsOuter,
    EbhKnockoffsOuter,
    Efilter,
    Emkf,
    PcKelp,
}

impl MethodId {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Kelp => "kelp",
            MethodId::KnockoffPerResolution => "knockoff-per-resolution",
            MethodId::KnockoffsOuter => "knockoffs-outer",
            MethodId::EbhKnockoffsOuter => "ebh-knockoffs-outer",
            MethodId::Efilter => "efilter",
            MethodId::Emkf => "emkf",
            MethodId::PcKelp => "pc-kelp",
        }
    }
}

// No deny_unknown_fields here: serde cannot combine it with the flattened
// design. Stray keys still fail because the design enum is strict and
// receives everything the named fields leave behind.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(flatten)]
    pub design: DesignSpec,
    pub p: usize,
    /// Sweep axis; n = round(ratio * p) at each point.
    pub n_over_p: Vec<f64>,
    pub sparsity: f64,
    pub amplitude: AmplitudeLaw,
    pub methods: Vec<MethodId>,
    pub alpha: f64,
    #[serde(default)]
    pub gamma: GammaSpec,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_grid")]
    pub lasso_grid: usize,
}

fn default_folds() -> usize {
    10
}

fn default_grid() -> usize {
    100
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResolvedPoint {
    pub n_over_p: f64,
    pub n: usize,
}

/// Per-sweep immutable state: the hypothesis family, the feature law, and
/// the knockoff samplers, all independent of n.
pub struct ScenarioContext {
    pub config: ScenarioConfig,
    pub family: HypothesisFamily,
    pub design: GaussianDesign,
    /// One sampler per family resolution for model-X designs; a single
    /// feature-level sampler for the outcome tree; empty for fixed-design
    /// knockoffs.
    pub samplers: Vec<KnockoffSampler>,
    pub points: Vec<ResolvedPoint>,
}

fn resolution_id(size: usize) -> String {
    if size == 1 { "individual".to_string() } else { format!("group{size}") }
}

fn sized_partitions(p: usize, sizes: &[usize]) -> Result<Vec<PartitionSpec>, SimError> {
    if sizes.is_empty() {
        return Err(SimError::Config("at least one resolution is required".into()));
    }
    let mut specs = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == 0 || size > p {
            return Err(SimError::Config(format!(
                "resolution group size {size} is outside 1..={p}"
            )));
        }
        let groups: Vec<Vec<usize>> =
            (0..p).step_by(size).map(|start| (start..(start + size).min(p)).collect()).collect();
        specs.push(PartitionSpec::new(resolution_id(size), groups));
    }
    Ok(specs)
}

pub const TREE_LEAVES: usize = 4;
pub const TREE_NODES: usize = 7;

/// Family over (leaf outcome, feature) base pairs: singleton leaves, sibling
/// pairs at the internal level, all four at the root. Base index = 4j + leaf.
fn tree_partitions(p: usize) -> Vec<PartitionSpec> {
    let leaves: Vec<Vec<usize>> = (0..TREE_LEAVES * p).map(|b| vec![b]).collect();
    let internal: Vec<Vec<usize>> = (0..2 * p)
        .map(|g| {
            let (j, t) = (g / 2, g % 2);
            vec![4 * j + 2 * t, 4 * j + 2 * t + 1]
        })
        .collect();
    let root: Vec<Vec<usize>> = (0..p).map(|j| (4 * j..4 * j + 4).collect()).collect();
    vec![
        PartitionSpec::new("leaves", leaves),
        PartitionSpec::new("internal", internal),
        PartitionSpec::new("root", root),
    ]
}

impl ScenarioContext {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        validate_config(&config)?;
        let p = config.p;
        let (family, design) = match &config.design {
            DesignSpec::BlockAr1 { block, rho, resolutions } => (
                HypothesisFamily::new(p, sized_partitions(p, resolutions)?)?,
                GaussianDesign::block_ar1(p, *block, *rho),
            ),
            DesignSpec::Ar1Global { rho, resolutions, .. } => (
                HypothesisFamily::new(p, sized_partitions(p, resolutions)?)?,
                GaussianDesign::ar1(p, *rho),
            ),
            DesignSpec::FixedEquiMlkf { rho, group, .. } => (
                HypothesisFamily::new(p, sized_partitions(p, &[1, *group])?)?,
                GaussianDesign::ar1(p, *rho),
            ),
            DesignSpec::OutcomeTree { rho } => (
                HypothesisFamily::new(TREE_LEAVES * p, tree_partitions(p))?,
                GaussianDesign::ar1(p, *rho),
            ),
        };
        let samplers = match &config.design {
            DesignSpec::BlockAr1 { .. } | DesignSpec::Ar1Global { .. } => {
                let mut out = Vec::with_capacity(family.n_resolutions());
                for m in 0..family.n_resolutions() {
                    let partition = family.partition(m);
                    let recipe = if partition.is_singletons() {
                        equicorrelated_recipe(&design)?
                    } else {
                        group_equicorrelated_recipe(&design, partition.groups())?
                    };
                    out.push(KnockoffSampler::new(&design, &recipe)?);
                }
                out
            }
            DesignSpec::FixedEquiMlkf { .. } => Vec::new(),
            DesignSpec::OutcomeTree { .. } => {
                let recipe = equicorrelated_recipe(&design)?;
                vec![KnockoffSampler::new(&design, &recipe)?]
            }
        };
        let points = config
            .n_over_p
            .iter()
            .map(|&ratio| ResolvedPoint {
                n_over_p: ratio,
                n: (ratio * p as f64).round() as usize,
            })
            .collect();
        Ok(ScenarioContext { config, family, design, samplers, points })
    }
}

fn validate_config(config: &ScenarioConfig) -> Result<(), SimError> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(SimError::Config(format!("alpha must be in (0,1), got {}", config.alpha)));
    }
    if config.replicates == 0 {
        return Err(SimError::Config("replicates must be at least 1".into()));
    }
    if config.p == 0 {
        return Err(SimError::Config("p must be positive".into()));
    }
    if config.n_over_p.is_empty() {
        return Err(SimError::Config("n_over_p sweep axis is empty".into()));
    }
    if !(0.0..=1.0).contains(&config.sparsity) {
        return Err(SimError::Config(format!(
            "sparsity must be in [0,1], got {}",
            config.sparsity
        )));
    }
    for &ratio in &config.n_over_p {
        let n = (ratio * config.p as f64).round();
        if !(ratio > 0.0) || n < 4.0 {
            return Err(SimError::Config(format!("n/p ratio {ratio} gives n = {n}, too small")));
        }
        if matches!(config.design, DesignSpec::FixedEquiMlkf { .. }) && n < 2.0 * config.p as f64
        {
            return Err(SimError::Config(format!(
                "fixed-design knockoffs need n >= 2p; ratio {ratio} gives n = {n} for p = {}",
                config.p
            )));
        }
    }
    if let GammaSpec::Fixed(v) = config.gamma {
        if !(v > 0.0 && v <= 1.0) {
            return Err(SimError::Config(format!("gamma must be in (0,1], got {v}")));
        }
    }
    if config.methods.is_empty() {
        return Err(SimError::Config("method roster is empty".into()));
    }
    for &method in &config.methods {
        let ok = match (&config.design, method) {
            (DesignSpec::BlockAr1 { .. } | DesignSpec::Ar1Global { .. }, MethodId::Emkf) => false,
            (DesignSpec::Ar1Global { outcomes, .. }, MethodId::PcKelp) => *outcomes >= 1,
            (DesignSpec::BlockAr1 { .. }, MethodId::PcKelp) => false,
            (DesignSpec::BlockAr1 { .. } | DesignSpec::Ar1Global { .. }, _) => true,
            (DesignSpec::FixedEquiMlkf { .. }, MethodId::Emkf | MethodId::Efilter) => true,
            (DesignSpec::FixedEquiMlkf { .. }, MethodId::KnockoffPerResolution) => true,
            (DesignSpec::FixedEquiMlkf { .. }, _) => false,
            (
                DesignSpec::OutcomeTree { .. },
                MethodId::Kelp
                | MethodId::KnockoffPerResolution
                | MethodId::KnockoffsOuter
                | MethodId::EbhKnockoffsOuter,
            ) => true,
            (DesignSpec::OutcomeTree { .. }, _) => false,
        };
        if !ok {
            return Err(SimError::Config(format!(
                "method {} is not defined for the {} design",
                method.as_str(),
                config.design.kind_str()
            )));
        }
    }
    if let DesignSpec::Ar1Global { outcomes, conjunction_u, .. } = &config.design {
        if *outcomes == 0 {
            return Err(SimError::Config("outcomes must be at least 1".into()));
        }
        if *conjunction_u == 0 || conjunction_u > outcomes {
            return Err(SimError::Config(format!(
                "conjunction order {conjunction_u} is outside 1..={outcomes}"
            )));
        }
    }
    if let DesignSpec::FixedEquiMlkf { group, signal_groups, .. } = &config.design {
        let n_groups = config.p.div_ceil(*group);
        if *signal_groups == 0 || *signal_groups > n_groups {
            return Err(SimError::Config(format!(
                "signal_groups {signal_groups} is outside 1..={n_groups}"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsRow {
    pub n_over_p: f64,
    pub replicate: usize,
    pub method: String,
    pub fdp: f64,
    pub power: f64,
    /// Total number of base features implicated by the rejection set.
    pub size: f64,
    /// Singularly-implicated-outcome count; tree scenarios only.
    pub precision: Option<f64>,
    /// Mean rejected-group cardinality; empty when nothing was rejected.
    pub mean_group_size: Option<f64>,
    pub realized_snr: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FailureRecord {
    pub n_over_p: f64,
    pub replicate: usize,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub n_over_p: f64,
    pub metric: String,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<FailureRecord>,
    pub summary: Vec<SummaryRow>,
    pub failure_fraction: f64,
    /// Fully resolved configuration and environment, for the metadata file.
    pub meta: serde_json::Value,
}

/// Run every (point, replicate) task, score the roster, and aggregate.
/// Failed replicates are recorded and excluded from the summaries.
pub fn replicate_sweep(config: &ScenarioConfig, threads: usize) -> Result<SweepOutput, SimError> {
    let ctx = ScenarioContext::new(config.clone())?;
    let tasks: Vec<(usize, usize)> = (0..ctx.points.len())
        .flat_map(|pt| (0..config.replicates).map(move |rep| (pt, rep)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<MetricsRow>, FailureRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(pt, rep)| {
                let seed = replicate_seed(ctx.config.seed, pt, rep);
                methods::run_replicate(&ctx, pt, rep, seed).map_err(|e| FailureRecord {
                    n_over_p: ctx.points[pt].n_over_p,
                    replicate: rep,
                    error: e.to_string(),
                })
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(mut r) => rows.append(&mut r),
            Err(f) => failures.push(f),
        }
    }
    let failure_fraction = failures.len() as f64 / tasks.len() as f64;
    let summary = summarize(&rows);
    let meta = serde_json::json!({
        "config": serde_json::to_value(config).expect("config serializes"),
        "points": ctx.points,
        "replicates_attempted": tasks.len(),
        "replicates_failed": failures.len(),
        "defaults": {
            "lasso_folds": config.folds,
            "lasso_grid_len": config.lasso_grid,
            "lasso_lambda_min_ratio": 1e-2,
            "gamma": format!("{:?}", config.gamma),
        },
        "version": env!("CARGO_PKG_VERSION"),
    });
    Ok(SweepOutput { rows, failures, summary, failure_fraction, meta })
}

/// Long-format means and Monte Carlo standard errors per (method, point).
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    #[derive(Default)]
    struct Acc {
        values: Vec<f64>,
    }
    let mut keys: Vec<(String, u64, String)> = Vec::new();
    let mut accs: std::collections::HashMap<(String, u64, String), Acc> =
        std::collections::HashMap::new();
    let push = |keys: &mut Vec<(String, u64, String)>,
                    accs: &mut std::collections::HashMap<(String, u64, String), Acc>,
                    method: &str,
                    point: f64,
                    metric: &str,
                    value: f64| {
        let key = (method.to_string(), point.to_bits(), metric.to_string());
        if !accs.contains_key(&key) {
            keys.push(key.clone());
        }
        accs.entry(key).or_default().values.push(value);
    };
    for row in rows {
        push(&mut keys, &mut accs, &row.method, row.n_over_p, "fdp", row.fdp);
        push(&mut keys, &mut accs, &row.method, row.n_over_p, "power", row.power);
        push(&mut keys, &mut accs, &row.method, row.n_over_p, "size", row.size);
        if let Some(precision) = row.precision {
            push(&mut keys, &mut accs, &row.method, row.n_over_p, "precision", precision);
        }
        push(&mut keys, &mut accs, &row.method, row.n_over_p, "realized_snr", row.realized_snr);
    }
    // Deterministic order: first appearance, which follows row order.
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        let acc = &accs[&key];
        let n = acc.values.len() as f64;
        let mean = acc.values.iter().sum::<f64>() / n;
        let se = if acc.values.len() > 1 {
            let var =
                acc.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        out.push(SummaryRow {
            method: key.0,
            n_over_p: f64::from_bits(key.1),
            metric: key.2,
            mean,
            se,
        });
    }
    out
}
