//! Enumeration-based inner selectors: a plain exhaustive search and a
//! bounded depth-first search with a dual upper bound.

use alloc::vec;
use alloc::vec::Vec;

use super::{InnerSelector, ProblemCtx};

// Upper bounds are inflated by one part in 1e9 before pruning so that float
// rounding in a bound can never cut a branch holding a strictly better
// selection.
const BOUND_SLACK: f64 = 1.0 + 1e-9;

/// Complete include/exclude enumeration in ascending flat-id order, with a
/// remaining-weight bound. Worst case exponential; it is the reference path.
pub(crate) struct ExhaustiveSelector;

impl InnerSelector for ExhaustiveSelector {
    fn select(
        &mut self,
        ctx: &ProblemCtx<'_>,
        candidates: &[usize],
        min_count: usize,
    ) -> Option<(f64, Vec<usize>)> {
        if candidates.len() < min_count {
            return None;
        }
        let mut suffix = vec![0.0; candidates.len() + 1];
        for i in (0..candidates.len()).rev() {
            suffix[i] = suffix[i + 1] + ctx.weights[candidates[i]];
        }
        let mut st = Enumerate {
            ctx,
            candidates,
            suffix,
            min_count,
            used: vec![false; ctx.family.p()],
            chosen: Vec::new(),
            best: None,
        };
        st.dfs(0, 0.0);
        st.best
    }
}

struct Enumerate<'a, 'b> {
    ctx: &'a ProblemCtx<'b>,
    candidates: &'a [usize],
    suffix: Vec<f64>,
    min_count: usize,
    used: Vec<bool>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Enumerate<'_, '_> {
    fn dfs(&mut self, i: usize, cur_w: f64) {
        if self.chosen.len() + (self.candidates.len() - i) < self.min_count {
            return;
        }
        if let Some((bw, _)) = &self.best {
            if (cur_w + self.suffix[i]) * BOUND_SLACK <= *bw {
                return;
            }
        }
        if i == self.candidates.len() {
            if self.chosen.len() >= self.min_count
                && self.best.as_ref().map_or(true, |(bw, _)| cur_w > *bw)
            {
                self.best = Some((cur_w, self.chosen.clone()));
            }
            return;
        }
        let id = self.candidates[i];
        let members = self.ctx.members[id];
        if members.iter().all(|&j| !self.used[j]) {
            for &j in members {
                self.used[j] = true;
            }
            self.chosen.push(id);
            self.dfs(i + 1, cur_w + self.ctx.weights[id]);
            self.chosen.pop();
            for &j in members {
                self.used[j] = false;
            }
        }
        self.dfs(i + 1, cur_w);
    }
}

/// Depth-first search ordered by weight density, pruned with the bound
/// `sum_j max_{A contains j} w(A)/|A|` over still-free features (a feasible
/// dual of the selection relaxation), truncated at a node budget.
pub(crate) struct BranchBoundSelector {
    budget: u64,
    nodes: u64,
    truncated: bool,
}

impl BranchBoundSelector {
    pub(crate) fn new(budget: u64) -> Self {
        BranchBoundSelector { budget, nodes: 0, truncated: false }
    }

    pub(crate) fn truncated(&self) -> bool {
        self.truncated
    }
}

impl InnerSelector for BranchBoundSelector {
    fn select(
        &mut self,
        ctx: &ProblemCtx<'_>,
        candidates: &[usize],
        min_count: usize,
    ) -> Option<(f64, Vec<usize>)> {
        if candidates.len() < min_count {
            return None;
        }
        let density =
            |id: usize| ctx.weights[id] / ctx.members[id].len() as f64;
        let mut order: Vec<usize> = candidates.to_vec();
        order.sort_unstable_by(|&a, &b| density(b).total_cmp(&density(a)).then(a.cmp(&b)));

        let mut y = vec![0.0f64; ctx.family.p()];
        for &id in candidates {
            let d = density(id);
            for &j in ctx.members[id] {
                if d > y[j] {
                    y[j] = d;
                }
            }
        }
        let free_y: f64 = y.iter().sum();
        let mut suffix = vec![0.0; order.len() + 1];
        for i in (0..order.len()).rev() {
            suffix[i] = suffix[i + 1] + ctx.weights[order[i]];
        }

        let mut st = Bounded {
            ctx,
            order: &order,
            y: &y,
            suffix,
            min_count,
            used: vec![false; ctx.family.p()],
            chosen: Vec::new(),
            best: None,
            budget: self.budget,
            nodes: &mut self.nodes,
            truncated: &mut self.truncated,
        };
        st.dfs(0, 0.0, free_y);
        st.best
    }
}

struct Bounded<'a, 'b> {
    ctx: &'a ProblemCtx<'b>,
    order: &'a [usize],
    y: &'a [f64],
    suffix: Vec<f64>,
    min_count: usize,
    used: Vec<bool>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    budget: u64,
    nodes: &'a mut u64,
    truncated: &'a mut bool,
}

impl Bounded<'_, '_> {
    /// Returns true when the budget ran out and the search must unwind.
    fn dfs(&mut self, i: usize, cur_w: f64, free_y: f64) -> bool {
        *self.nodes += 1;
        if *self.nodes > self.budget {
            *self.truncated = true;
            return true;
        }
        if self.chosen.len() + (self.order.len() - i) < self.min_count {
            return false;
        }
        if let Some((bw, _)) = &self.best {
            let bound = cur_w + if free_y < self.suffix[i] { free_y } else { self.suffix[i] };
            if bound * BOUND_SLACK <= *bw {
                return false;
            }
        }
        if i == self.order.len() {
            if self.chosen.len() >= self.min_count
                && self.best.as_ref().map_or(true, |(bw, _)| cur_w > *bw)
            {
                let mut sel = self.chosen.clone();
                sel.sort_unstable();
                self.best = Some((cur_w, sel));
            }
            return false;
        }
        let id = self.order[i];
        let members = self.ctx.members[id];
        if members.iter().all(|&j| !self.used[j]) {
            let mut dy = 0.0;
            for &j in members {
                self.used[j] = true;
                dy += self.y[j];
            }
            self.chosen.push(id);
            let abort = self.dfs(i + 1, cur_w + self.ctx.weights[id], free_y - dy);
            self.chosen.pop();
            for &j in members {
                self.used[j] = false;
            }
            if abort {
                return true;
            }
        }
        self.dfs(i + 1, cur_w, free_y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{HypothesisFamily, PartitionSpec};

    fn ctx_family() -> HypothesisFamily {
        HypothesisFamily::new(
            3,
            vec![
                PartitionSpec::new("1", vec![vec![0], vec![1], vec![2]]),
                PartitionSpec::new("pairs", vec![vec![0, 1], vec![2]]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn exhaustive_respects_min_count() {
        let family = ctx_family();
        let ctx = ProblemCtx::new(&family);
        let mut s = ExhaustiveSelector;
        // Flat ids: 0,1,2 singletons; 3 = {0,1}, 4 = {2}.
        let all = [0usize, 1, 2, 3, 4];
        let (w, sel) = s.select(&ctx, &all, 1).unwrap();
        assert_eq!(sel, vec![0, 1, 2]);
        assert_eq!(w, 3.0);
        // Count 4 is impossible: only 3 features.
        assert!(s.select(&ctx, &all, 4).is_none());
    }

    #[test]
    fn branch_bound_matches_exhaustive() {
        let family = ctx_family();
        let ctx = ProblemCtx::new(&family);
        let all = [0usize, 1, 2, 3, 4];
        for mc in 0..=3 {
            let a = ExhaustiveSelector.select(&ctx, &all, mc);
            let b = BranchBoundSelector::new(u64::MAX).select(&ctx, &all, mc);
            assert_eq!(a, b, "min_count={mc}");
        }
    }
}
