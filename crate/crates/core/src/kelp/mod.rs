//! Knockoff-based relaxed e-values and the selection pipelines built on them:
//! per-resolution stopping times, the budgeted e-value construction, the full
//! multi-resolution run, partial-conjunction runs over several outcomes, and
//! the multilayer threshold filter.

mod efilter;

pub use efilter::{
    efilter, efilter_from_base, run_emkf, EfilterResult, EmkfResult, MultilayerThresholds,
};

use alloc::vec::Vec;
use core::fmt;

use crate::elp::{ElpError, ElpProblem, ElpSolution, SolverChoice};
use crate::evalue::{partial_conjunction_evalue, EValueError, EValueTable, Provenance};
use crate::family::{FamilyError, HypothesisFamily};

/// Relative slack for the budget checks so that a sum meant to hit the cap
/// exactly is not rejected over the last bit of a float total.
const BUDGET_FUZZ: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum KelpError {
    EmptyScores,
    ScoreCountMismatch { resolution: usize, expected: usize, got: usize },
    NonFiniteScore { resolution: usize, index: usize },
    ResolutionCountMismatch { expected: usize, got: usize },
    InvalidAlpha { alpha: f64 },
    InvalidGamma { gamma: f64 },
    InvalidBudgetEntry { resolution: usize, value: f64 },
    BudgetExceeded { total: f64, cap: f64 },
    /// The tightened budget required when combining over several outcomes.
    ConjunctionBudgetExceeded { required: f64, cap: f64 },
    NoOutcomes,
    ConjunctionOrderOutOfRange { u: usize, n_outcomes: usize },
    LevelCountMismatch { expected: usize, got: usize },
    EValue(EValueError),
    Elp(ElpError),
    Family(FamilyError),
}

impl fmt::Display for KelpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KelpError::EmptyScores => write!(f, "score list must not be empty"),
            KelpError::ScoreCountMismatch { resolution, expected, got } => write!(
                f,
                "resolution {resolution} has {expected} groups but {got} scores"
            ),
            KelpError::NonFiniteScore { resolution, index } => {
                write!(f, "score {index} of resolution {resolution} is not finite")
            }
            KelpError::ResolutionCountMismatch { expected, got } => {
                write!(f, "expected {expected} per-resolution entries, got {got}")
            }
            KelpError::InvalidAlpha { alpha } => {
                write!(f, "alpha must lie in (0,1), got {alpha}")
            }
            KelpError::InvalidGamma { gamma } => {
                write!(f, "gamma must lie in (0,1), got {gamma}")
            }
            KelpError::InvalidBudgetEntry { resolution, value } => write!(
                f,
                "budget multiplier for resolution {resolution} must be finite and >= 0, got {value}"
            ),
            KelpError::BudgetExceeded { total, cap } => {
                write!(f, "budget sum {total} exceeds the group count {cap}")
            }
            KelpError::ConjunctionBudgetExceeded { required, cap } => write!(
                f,
                "scaled conjunction budget {required} exceeds the group count {cap}; \
                 shrink the multipliers or opt out of the strict bound"
            ),
            KelpError::NoOutcomes => write!(f, "at least one outcome is required"),
            KelpError::ConjunctionOrderOutOfRange { u, n_outcomes } => {
                write!(f, "conjunction order {u} must lie in 1..={n_outcomes}")
            }
            KelpError::LevelCountMismatch { expected, got } => {
                write!(f, "expected {expected} per-layer levels, got {got}")
            }
            KelpError::EValue(e) => write!(f, "{e}"),
            KelpError::Elp(e) => write!(f, "{e}"),
            KelpError::Family(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for KelpError {}

impl From<EValueError> for KelpError {
    fn from(e: EValueError) -> Self {
        KelpError::EValue(e)
    }
}

impl From<ElpError> for KelpError {
    fn from(e: ElpError) -> Self {
        KelpError::Elp(e)
    }
}

impl From<FamilyError> for KelpError {
    fn from(e: FamilyError) -> Self {
        KelpError::Family(e)
    }
}

/// Signed importance scores, one per group per resolution, aligned with a
/// family's partitions.
#[derive(Clone, Debug)]
pub struct KnockoffScores {
    scores: Vec<Vec<f64>>,
}

impl KnockoffScores {
    pub fn new(family: &HypothesisFamily, scores: Vec<Vec<f64>>) -> Result<Self, KelpError> {
        if scores.len() != family.n_resolutions() {
            return Err(KelpError::ResolutionCountMismatch {
                expected: family.n_resolutions(),
                got: scores.len(),
            });
        }
        for (m, w) in scores.iter().enumerate() {
            let expected = family.partition(m).len();
            if w.len() != expected {
                return Err(KelpError::ScoreCountMismatch {
                    resolution: m,
                    expected,
                    got: w.len(),
                });
            }
            if let Some(index) = w.iter().position(|v| !v.is_finite()) {
                return Err(KelpError::NonFiniteScore { resolution: m, index });
            }
        }
        Ok(KnockoffScores { scores })
    }

    pub fn resolution(&self, m: usize) -> &[f64] {
        &self.scores[m]
    }

    pub fn n_resolutions(&self) -> usize {
        self.scores.len()
    }
}

/// How the per-resolution stopping levels are chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaPolicy {
    Fixed(f64),
    /// alpha/2 everywhere, the default.
    Moderate,
    /// alpha/4 everywhere, for sparse high-dimensional settings.
    HighDim,
    /// alpha at the finest resolution, halved at each step up in coarseness:
    /// coarse rejections are cheaper to make, so they face a stricter gate.
    Graded,
}

impl GammaPolicy {
    pub fn resolve(&self, family: &HypothesisFamily, alpha: f64) -> Vec<f64> {
        let m = family.n_resolutions();
        match *self {
            GammaPolicy::Fixed(g) => alloc::vec![g; m],
            GammaPolicy::Moderate => alloc::vec![alpha / 2.0; m],
            GammaPolicy::HighDim => alloc::vec![alpha / 4.0; m],
            GammaPolicy::Graded => {
                let order = family.resolutions_by_coarseness();
                let mut gammas = alloc::vec![0.0; m];
                for (rank, &res) in order.iter().enumerate() {
                    gammas[res] = alpha / (1u64 << rank.min(52)) as f64;
                }
                gammas
            }
        }
    }
}

/// Target level, per-resolution budget multipliers, and stopping levels.
#[derive(Clone, Debug)]
pub struct KelpConfig {
    pub alpha: f64,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl KelpConfig {
    pub fn new(
        family: &HypothesisFamily,
        alpha: f64,
        c: Vec<f64>,
        gamma: Vec<f64>,
    ) -> Result<Self, KelpError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(KelpError::InvalidAlpha { alpha });
        }
        let m = family.n_resolutions();
        if c.len() != m {
            return Err(KelpError::ResolutionCountMismatch { expected: m, got: c.len() });
        }
        if gamma.len() != m {
            return Err(KelpError::ResolutionCountMismatch { expected: m, got: gamma.len() });
        }
        for (res, &v) in c.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(KelpError::InvalidBudgetEntry { resolution: res, value: v });
            }
        }
        for &g in &gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(KelpError::InvalidGamma { gamma: g });
            }
        }
        let total: f64 = c.iter().sum();
        let cap = family.n_groups() as f64;
        if total > cap * (1.0 + BUDGET_FUZZ) {
            return Err(KelpError::BudgetExceeded { total, cap });
        }
        Ok(KelpConfig { alpha, c, gamma })
    }

    /// Even budget split across resolutions, stopping levels from the policy.
    pub fn with_policy(
        family: &HypothesisFamily,
        alpha: f64,
        policy: GammaPolicy,
    ) -> Result<Self, KelpError> {
        let m = family.n_resolutions();
        let c = alloc::vec![family.n_groups() as f64 / m as f64; m];
        let gamma = policy.resolve(family, alpha);
        KelpConfig::new(family, alpha, c, gamma)
    }

    pub fn budget_total(&self) -> f64 {
        self.c.iter().sum()
    }
}

/// Smallest candidate threshold (among the distinct nonzero score magnitudes)
/// at which the estimated false-to-true ratio drops to `gamma`; infinite when
/// no candidate qualifies. The comparison is kept in product form so an empty
/// positive side never divides by zero.
pub fn knockoff_stopping_time(w: &[f64], gamma: f64) -> Result<f64, KelpError> {
    if w.is_empty() {
        return Err(KelpError::EmptyScores);
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(KelpError::InvalidGamma { gamma });
    }
    let mut pos: Vec<f64> = w.iter().copied().filter(|&v| v > 0.0).collect();
    let mut neg: Vec<f64> = w.iter().copied().filter(|&v| v < 0.0).map(|v| -v).collect();
    pos.sort_unstable_by(f64::total_cmp);
    neg.sort_unstable_by(f64::total_cmp);

    let mut cands: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    cands.sort_unstable_by(f64::total_cmp);
    cands.dedup();

    for &t in &cands {
        let n_pos = pos.len() - pos.partition_point(|&v| v < t);
        let n_neg = neg.len() - neg.partition_point(|&v| v < t);
        if (1 + n_neg) as f64 <= gamma * n_pos as f64 {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// E-values for one resolution: total mass `c` split over the scores at or
/// above the stopping time, all zero when the stopping time is infinite.
pub fn knockoff_evalues_single(w: &[f64], gamma: f64, c: f64) -> Result<Vec<f64>, KelpError> {
    let t = knockoff_stopping_time(w, gamma)?;
    if t.is_infinite() {
        return Ok(alloc::vec![0.0; w.len()]);
    }
    let denom = (1 + w.iter().filter(|&&v| v <= -t).count()) as f64;
    Ok(w.iter().map(|&v| if v >= t { c / denom } else { 0.0 }).collect())
}

/// Classical one-resolution knockoff selection: indices with scores at or
/// above the stopping time.
pub fn knockoff_filter(w: &[f64], gamma: f64) -> Result<Vec<usize>, KelpError> {
    let t = knockoff_stopping_time(w, gamma)?;
    Ok(w.iter()
        .enumerate()
        .filter(|&(_, &v)| v >= t)
        .map(|(i, _)| i)
        .collect())
}

/// Build the full e-value table across resolutions under a config's budgets
/// and stopping levels. The table's total is the family group count, which is
/// what makes the relaxed budget argument go through.
pub fn knockoff_evalues(
    family: &HypothesisFamily,
    scores: &KnockoffScores,
    config: &KelpConfig,
) -> Result<EValueTable, KelpError> {
    if scores.n_resolutions() != family.n_resolutions() {
        return Err(KelpError::ResolutionCountMismatch {
            expected: family.n_resolutions(),
            got: scores.n_resolutions(),
        });
    }
    let mut values = Vec::with_capacity(family.n_resolutions());
    for m in 0..family.n_resolutions() {
        values.push(knockoff_evalues_single(
            scores.resolution(m),
            config.gamma[m],
            config.c[m],
        )?);
    }
    Ok(EValueTable::new(family, values, Provenance::Knockoff, family.n_groups())?)
}

#[derive(Clone, Debug)]
pub struct KelpRun {
    pub table: EValueTable,
    pub solution: ElpSolution,
    pub stopping_times: Vec<f64>,
}

pub fn run_kelp(
    family: &HypothesisFamily,
    scores: &KnockoffScores,
    config: &KelpConfig,
    solver: SolverChoice,
) -> Result<KelpRun, KelpError> {
    let table = knockoff_evalues(family, scores, config)?;
    let stopping_times = (0..family.n_resolutions())
        .map(|m| knockoff_stopping_time(scores.resolution(m), config.gamma[m]))
        .collect::<Result<Vec<f64>, _>>()?;
    let problem = ElpProblem::new(family, &table, config.alpha)?;
    let solution = problem.solve(solver)?;
    Ok(KelpRun { table, solution, stopping_times })
}

/// Whether a multi-outcome run shrinks its budget to keep the nominal level,
/// or keeps the budget and accepts control at an inflated level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConjunctionBudget {
    Strict,
    OptOut,
}

#[derive(Clone, Debug)]
pub struct PcKelpRun {
    pub table: EValueTable,
    pub solution: ElpSolution,
    /// Stopping times indexed [outcome][resolution].
    pub stopping_times: Vec<Vec<f64>>,
    pub u: usize,
    pub n_outcomes: usize,
    /// Level at which the false discovery rate is controlled: the nominal
    /// alpha under the strict budget, alpha * L/(L-u+1) under the opt-out.
    pub control_level: f64,
}

/// Combine per-outcome knockoff e-values into partial-conjunction e-values
/// (each group's value is the mean of its L-u+1 smallest per-outcome values)
/// and run the selection program on the combined table.
pub fn run_partial_conjunction_kelp(
    family: &HypothesisFamily,
    per_outcome: &[KnockoffScores],
    u: usize,
    config: &KelpConfig,
    solver: SolverChoice,
    budget: ConjunctionBudget,
) -> Result<PcKelpRun, KelpError> {
    let l = per_outcome.len();
    if l == 0 {
        return Err(KelpError::NoOutcomes);
    }
    if u == 0 || u > l {
        return Err(KelpError::ConjunctionOrderOutOfRange { u, n_outcomes: l });
    }
    let inflation = l as f64 / (l - u + 1) as f64;
    let cap = family.n_groups() as f64;
    if budget == ConjunctionBudget::Strict {
        let required = inflation * config.budget_total();
        if required > cap * (1.0 + BUDGET_FUZZ) {
            return Err(KelpError::ConjunctionBudgetExceeded { required, cap });
        }
    }

    let tables: Vec<EValueTable> = per_outcome
        .iter()
        .map(|scores| knockoff_evalues(family, scores, config))
        .collect::<Result<_, _>>()?;
    let flats: Vec<Vec<f64>> = tables.iter().map(|t| t.flat()).collect();

    let mut values = Vec::with_capacity(family.n_resolutions());
    let mut per_outcome_buf = alloc::vec![0.0; l];
    for m in 0..family.n_resolutions() {
        let offset = family.flat_index(crate::family::GroupRef { resolution: m, group: 0 });
        let n_m = family.partition(m).len();
        let mut row = Vec::with_capacity(n_m);
        for g in 0..n_m {
            for (o, flat) in flats.iter().enumerate() {
                per_outcome_buf[o] = flat[offset + g];
            }
            row.push(partial_conjunction_evalue(&per_outcome_buf, u)?);
        }
        values.push(row);
    }
    let table =
        EValueTable::new(family, values, Provenance::PartialConjunction, family.n_groups())?;

    let stopping_times = per_outcome
        .iter()
        .map(|scores| {
            (0..family.n_resolutions())
                .map(|m| knockoff_stopping_time(scores.resolution(m), config.gamma[m]))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let problem = ElpProblem::new(family, &table, config.alpha)?;
    let solution = problem.solve(solver)?;
    let control_level = match budget {
        ConjunctionBudget::Strict => config.alpha,
        ConjunctionBudget::OptOut => config.alpha * inflation,
    };
    Ok(PcKelpRun { table, solution, stopping_times, u, n_outcomes: l, control_level })
}
