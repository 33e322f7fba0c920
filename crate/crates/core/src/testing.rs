//! Reference oracles and random instance generators used by the test suites.
//! Everything here is deliberately naive: the oracle enumerates rather than
//! optimizes so that solver bugs cannot hide in shared cleverness.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::family::{HypothesisFamily, PartitionSpec};

/// Small deterministic generator (splitmix64) so the suites do not need an
/// RNG dependency in the library itself.
pub struct TestRng {
    state: u64,
}

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Uniform in `[0, 1)`.
    pub fn f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Every selected group's members pairwise disjoint and every selected
/// e-value at or above `n_total / (alpha |S|)`.
pub fn is_feasible(
    family: &HypothesisFamily,
    evalues: &[f64],
    selection: &[usize],
    alpha: f64,
) -> bool {
    let mut used = alloc::vec![false; family.p()];
    for &id in selection {
        for &j in family.members(family.group_by_flat(id)) {
            if used[j] {
                return false;
            }
            used[j] = true;
        }
    }
    if selection.is_empty() {
        return true;
    }
    let t = family.n_groups() as f64 / (alpha * selection.len() as f64);
    selection.iter().all(|&id| evalues[id] >= t)
}

/// Exhaustive reference optimum: enumerate every disjoint subset of groups
/// and keep the heaviest self-consistent one. The only pruning is dropping
/// groups below `1/alpha`, which no selection of any size can ever carry.
/// Intended for instances with at most a couple dozen eligible groups.
pub fn enumerate_optimum(
    family: &HypothesisFamily,
    evalues: &[f64],
    alpha: f64,
) -> (f64, Vec<usize>) {
    assert_eq!(evalues.len(), family.n_groups());
    let loosest = 1.0 / alpha;
    let ids: Vec<usize> = (0..family.n_groups()).filter(|&i| evalues[i] >= loosest).collect();
    let member_vecs: Vec<Vec<usize>> = ids
        .iter()
        .map(|&id| family.members(family.group_by_flat(id)).to_vec())
        .collect();
    let weights: Vec<f64> = ids
        .iter()
        .map(|&id| family.weight(family.group_by_flat(id)))
        .collect();
    let n = family.n_groups() as f64;

    struct Enumerate<'a> {
        ids: &'a [usize],
        members: &'a [Vec<usize>],
        weights: &'a [f64],
        evalues: &'a [f64],
        alpha: f64,
        n: f64,
        used: Vec<bool>,
        cur: Vec<usize>,
        cur_w: f64,
        best_w: f64,
        best: Vec<usize>,
    }

    impl Enumerate<'_> {
        fn dfs(&mut self, pos: usize) {
            // Feasibility is not monotone in the selection size (larger
            // selections loosen the threshold), so every subset is visited
            // and checked independently.
            if !self.cur.is_empty() {
                let t = self.n / (self.alpha * self.cur.len() as f64);
                if self.cur.iter().all(|&id| self.evalues[id] >= t) && self.cur_w > self.best_w {
                    self.best_w = self.cur_w;
                    self.best = self.cur.clone();
                }
            }
            for k in pos..self.ids.len() {
                if self.members[k].iter().any(|&j| self.used[j]) {
                    continue;
                }
                for &j in &self.members[k] {
                    self.used[j] = true;
                }
                self.cur.push(self.ids[k]);
                self.cur_w += self.weights[k];
                self.dfs(k + 1);
                self.cur_w -= self.weights[k];
                self.cur.pop();
                for &j in &self.members[k] {
                    self.used[j] = false;
                }
            }
        }
    }

    let mut state = Enumerate {
        ids: &ids,
        members: &member_vecs,
        weights: &weights,
        evalues,
        alpha,
        n,
        used: alloc::vec![false; family.p()],
        cur: Vec::new(),
        cur_w: 0.0,
        best_w: 0.0,
        best: Vec::new(),
    };
    state.dfs(0);
    // Canonical objective: re-sum the winner in flat-id order.
    state.best.sort_unstable();
    let obj = state.best.iter().map(|&id| {
        family.weight(family.group_by_flat(id))
    }).sum::<f64>();
    (obj, state.best)
}

/// Weights of the form k/16 with k in 1..=16. Sums of these are exact in
/// floating point whatever the summation order, which lets tests demand
/// bitwise-equal objectives from different solvers.
pub fn dyadic_weight(rng: &mut TestRng) -> f64 {
    (1 + rng.below(16)) as f64 / 16.0
}

/// Nested contiguous partition specs built by repeatedly merging adjacent
/// groups of the previous level, with the family's default inverse-size
/// weights. Level "1" is always the singletons.
pub fn random_nested_specs(rng: &mut TestRng, p: usize, extra_levels: usize) -> Vec<PartitionSpec> {
    let mut specs = Vec::new();
    let singles: Vec<Vec<usize>> = (0..p).map(|j| alloc::vec![j]).collect();
    specs.push(PartitionSpec::new("1", singles.clone()));

    let mut prev = singles;
    for level in 0..extra_levels {
        let mut next: Vec<Vec<usize>> = Vec::new();
        let mut i = 0;
        while i < prev.len() {
            let run = 1 + rng.below(3.min(prev.len() - i));
            let mut merged = Vec::new();
            for g in &prev[i..i + run] {
                merged.extend_from_slice(g);
            }
            next.push(merged);
            i += run;
        }
        if next.len() == prev.len() && next.len() > 1 {
            // Force at least one real merge so the level is coarser.
            let tail = next.pop().unwrap();
            next.last_mut().unwrap().extend(tail);
        }
        let id: String = format!("L{}", level + 2);
        specs.push(PartitionSpec::new(id, next.clone()));
        prev = next;
    }
    specs
}

/// Same construction with independent dyadic weights on every group.
pub fn random_nested_family(rng: &mut TestRng, p: usize, extra_levels: usize) -> HypothesisFamily {
    let specs = random_nested_specs(rng, p, extra_levels)
        .into_iter()
        .map(|spec| {
            let w: Vec<f64> = (0..spec.groups.len()).map(|_| dyadic_weight(rng)).collect();
            spec.with_weights(w)
        })
        .collect();
    HypothesisFamily::new(p, specs).expect("generated nested family must validate")
}

/// Family whose extra levels are blockings of independently shuffled feature
/// orders: groups cross each other, so the family is generally not nested
/// and not contiguous. Level "1" is always the singletons.
pub fn random_general_family(rng: &mut TestRng, p: usize, extra_levels: usize) -> HypothesisFamily {
    let mut specs = Vec::new();
    let singles: Vec<Vec<usize>> = (0..p).map(|j| alloc::vec![j]).collect();
    let w: Vec<f64> = (0..p).map(|_| dyadic_weight(rng)).collect();
    specs.push(PartitionSpec::new("1", singles).with_weights(w));

    for level in 0..extra_levels {
        let mut order: Vec<usize> = (0..p).collect();
        for i in (1..p).rev() {
            order.swap(i, rng.below(i + 1));
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut i = 0;
        while i < p {
            let run = 1 + rng.below(3.min(p - i));
            groups.push(order[i..i + run].to_vec());
            i += run;
        }
        let w: Vec<f64> = (0..groups.len()).map(|_| dyadic_weight(rng)).collect();
        specs.push(PartitionSpec::new(format!("L{}", level + 2), groups).with_weights(w));
    }
    HypothesisFamily::new(p, specs).expect("generated family must validate")
}

/// Per-resolution e-values with mass at zero, below `1/alpha`, and spread
/// over the self-consistency thresholds, so instances exercise all the
/// interesting count regimes.
pub fn random_evalue_rows(
    rng: &mut TestRng,
    family: &HypothesisFamily,
    alpha: f64,
) -> Vec<Vec<f64>> {
    let n = family.n_groups() as f64;
    (0..family.n_resolutions())
        .map(|m| {
            (0..family.partition(m).len())
                .map(|_| match rng.below(10) {
                    0..=3 => 0.0,
                    4..=5 => rng.f64() / alpha,
                    _ => {
                        // Around n/(alpha k) for a random k, scaled a little
                        // up or down so both sides of each threshold appear.
                        let k = 1 + rng.below(family.n_groups());
                        let scale = 0.8 + 0.4 * rng.f64();
                        scale * n / (alpha * k as f64)
                    }
                })
                .collect()
        })
        .collect()
}
