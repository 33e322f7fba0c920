//! Weighted self-consistent group selection over a multi-resolution family.
//!
//! The program: maximize the summed weight of selected groups subject to
//! (a) pairwise disjointness of the selected groups' members and (b) the
//! self-consistency requirement that every selected group's e-value is at
//! least `n_total / (alpha * R)` where `R` is the number selected.
//!
//! All solvers share one decomposition: for each target count `R`, the
//! consistency constraint becomes the fixed threshold `n_total / (alpha*R)`;
//! the inner problem is maximum-weight disjoint selection among groups that
//! pass the threshold, subject to picking at least `R` of them (any feasible
//! selection of size >= R is self-consistent at its own, larger count). The
//! best inner solution over `R` is the global optimum.

mod dp;
mod focused;
mod search;

pub use focused::{focused_ebh, outer_nodes, FocusFilter, FocusedResult, IdentityFilter, OuterNodeFilter};

use alloc::vec::Vec;
use core::fmt;

use crate::evalue::{EValueError, EValueTable, RejectionSet};
use crate::family::{FamilyError, HypothesisFamily};

pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum ElpError {
    /// Table totals must equal the family's group count here: the program's
    /// consistency threshold is defined against the full family size.
    NTotalMismatch { expected: usize, got: usize },
    NonContiguous { resolution: usize },
    InvalidAlpha { alpha: f64 },
    InvalidBudget,
    EValue(EValueError),
    Family(FamilyError),
}

impl fmt::Display for ElpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElpError::NTotalMismatch { expected, got } => write!(
                f,
                "e-value table n_total {got} must equal the family group count {expected}"
            ),
            ElpError::NonContiguous { resolution } => write!(
                f,
                "interval solver requires contiguous groups; resolution {resolution} is not"
            ),
            ElpError::InvalidAlpha { alpha } => write!(f, "alpha must lie in (0,1), got {alpha}"),
            ElpError::InvalidBudget => write!(f, "node budget must be positive"),
            ElpError::EValue(e) => write!(f, "{e}"),
            ElpError::Family(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ElpError {}

impl From<EValueError> for ElpError {
    fn from(e: EValueError) -> Self {
        ElpError::EValue(e)
    }
}

impl From<FamilyError> for ElpError {
    fn from(e: FamilyError) -> Self {
        ElpError::Family(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Exact,
    IntervalDp,
    BranchBound,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Exact => "exact",
            SolverKind::IntervalDp => "interval-dp",
            SolverKind::BranchBound => "branch-bound",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverChoice {
    /// Interval DP when every partition is contiguous, branch and bound
    /// with the default node budget otherwise.
    Auto,
    Exact,
    IntervalDp,
    BranchBound { node_budget: u64 },
}

#[derive(Clone, Debug)]
pub struct ElpSolution {
    pub rejection: RejectionSet,
    /// Summed weight of the rejected groups.
    pub objective: f64,
    /// Self-consistency threshold at the realized count, infinite when empty.
    pub threshold: f64,
    pub solver: SolverKind,
    /// False only when a budgeted search was truncated.
    pub optimal: bool,
}

/// One selection instance: a family, aligned e-values, and a level.
#[derive(Debug)]
pub struct ElpProblem<'a> {
    family: &'a HypothesisFamily,
    evalues: Vec<f64>,
    alpha: f64,
}

/// Per-candidate data handed to the inner selectors.
pub(crate) struct ProblemCtx<'a> {
    pub family: &'a HypothesisFamily,
    pub weights: Vec<f64>,
    pub members: Vec<&'a [usize]>,
}

impl<'a> ProblemCtx<'a> {
    pub(crate) fn new(family: &'a HypothesisFamily) -> Self {
        let mut weights = Vec::with_capacity(family.n_groups());
        let mut members = Vec::with_capacity(family.n_groups());
        for gref in family.iter_groups() {
            weights.push(family.weight(gref));
            members.push(family.members(gref));
        }
        ProblemCtx { family, weights, members }
    }
}

pub(crate) trait InnerSelector {
    /// Maximum-weight disjoint subset of `candidates` (flat ids, ascending)
    /// containing at least `min_count` groups. `None` when no disjoint subset
    /// reaches `min_count`.
    fn select(
        &mut self,
        ctx: &ProblemCtx<'_>,
        candidates: &[usize],
        min_count: usize,
    ) -> Option<(f64, Vec<usize>)>;
}

impl<'a> ElpProblem<'a> {
    pub fn new(
        family: &'a HypothesisFamily,
        table: &EValueTable,
        alpha: f64,
    ) -> Result<Self, ElpError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ElpError::InvalidAlpha { alpha });
        }
        if table.n_total() != family.n_groups() {
            return Err(ElpError::NTotalMismatch {
                expected: family.n_groups(),
                got: table.n_total(),
            });
        }
        Ok(ElpProblem { family, evalues: table.flat(), alpha })
    }

    pub fn family(&self) -> &HypothesisFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn solve(&self, choice: SolverChoice) -> Result<ElpSolution, ElpError> {
        match choice {
            SolverChoice::Auto => {
                if self.family.all_contiguous() {
                    self.solve_interval_dp()
                } else {
                    self.solve_branch_bound(DEFAULT_NODE_BUDGET)
                }
            }
            SolverChoice::Exact => self.solve_exact(),
            SolverChoice::IntervalDp => self.solve_interval_dp(),
            SolverChoice::BranchBound { node_budget } => self.solve_branch_bound(node_budget),
        }
    }

    /// Reference solver: exhaustive inner search. Exponential in the worst
    /// case; intended for small instances and cross-checking.
    pub fn solve_exact(&self) -> Result<ElpSolution, ElpError> {
        let mut selector = search::ExhaustiveSelector;
        self.run(&mut selector, SolverKind::Exact)
    }

    /// Weighted-interval-scheduling dynamic program. Requires every
    /// partition's groups to be contiguous index ranges.
    pub fn solve_interval_dp(&self) -> Result<ElpSolution, ElpError> {
        if let Some(m) = (0..self.family.n_resolutions())
            .find(|&m| !self.family.partition(m).is_contiguous())
        {
            return Err(ElpError::NonContiguous { resolution: m });
        }
        let mut selector = dp::IntervalDpSelector;
        self.run(&mut selector, SolverKind::IntervalDp)
    }

    /// Depth-first search with a dual weight bound, stopped after
    /// `node_budget` nodes. The optimality flag reports truncation.
    pub fn solve_branch_bound(&self, node_budget: u64) -> Result<ElpSolution, ElpError> {
        if node_budget == 0 {
            return Err(ElpError::InvalidBudget);
        }
        let mut selector = search::BranchBoundSelector::new(node_budget);
        let mut sol = self.run(&mut selector, SolverKind::BranchBound)?;
        sol.optimal = !selector.truncated();
        Ok(sol)
    }

    pub(crate) fn run<S: InnerSelector>(
        &self,
        selector: &mut S,
        kind: SolverKind,
    ) -> Result<ElpSolution, ElpError> {
        let ctx = ProblemCtx::new(self.family);
        let n_total = self.family.n_groups();
        let n = n_total as f64;

        // Candidate order by e-value descending, flat id ascending on ties.
        let mut by_e: Vec<usize> = (0..self.evalues.len()).collect();
        by_e.sort_unstable_by(|&a, &b| {
            self.evalues[b].total_cmp(&self.evalues[a]).then(a.cmp(&b))
        });

        // No rejection is possible below the loosest threshold 1/alpha.
        let loosest = 1.0 / self.alpha;
        let r_max = by_e
            .iter()
            .take_while(|&&i| self.evalues[i] >= loosest)
            .count();

        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut prev_size = usize::MAX;
        for r in 1..=r_max {
            let t = n / (self.alpha * r as f64);
            let size = by_e
                .partition_point(|&i| self.evalues[i] >= t);
            if size == 0 || size == prev_size || size < r {
                // Same candidate set as a smaller R is dominated by it, and
                // fewer than R candidates can never reach count R.
                continue;
            }
            prev_size = size;
            let mut cand: Vec<usize> = by_e[..size].to_vec();
            cand.sort_unstable();
            if let Some((_, sel)) = selector.select(&ctx, &cand, r) {
                // Re-sum in flat-id order so the reported objective does not
                // depend on the selector's internal summation order.
                let w: f64 = sel.iter().map(|&id| ctx.weights[id]).sum();
                let better = match &best {
                    None => true,
                    Some((bw, _)) => w > *bw,
                };
                if better {
                    best = Some((w, sel));
                }
            }
        }

        let (objective, chosen) = best.unwrap_or((0.0, Vec::new()));
        let rejection = RejectionSet::from_flat(
            self.family,
            &self.evalues,
            &chosen,
            self.alpha,
            n_total,
        )?;
        debug_assert!(rejection.certificate.consistent);
        debug_assert!(rejection.disjoint);
        let threshold = if chosen.is_empty() {
            f64::INFINITY
        } else {
            n / (self.alpha * chosen.len() as f64)
        };
        Ok(ElpSolution { rejection, objective, threshold, solver: kind, optimal: true })
    }
}
