//! Threshold scan with a focusing filter: find the smallest e-value threshold
//! whose filtered candidate set is self-consistent, then reject that filtered
//! set. With the identity filter this is exactly e-BH; with the outer-node
//! filter it removes redundant coarse rejections before the budget is spent.

use alloc::vec::Vec;

use super::search::BranchBoundSelector;
use super::{ElpError, InnerSelector, ProblemCtx};
use crate::evalue::{EValueTable, RejectionSet};
use crate::family::{GroupRelation, HypothesisFamily};

pub trait FocusFilter {
    /// Map a candidate set (flat ids, ascending) to the subset to reject.
    /// The output must be disjoint and no heavier than the maximum-weight
    /// disjoint subset of the candidates.
    fn focus(&self, family: &HypothesisFamily, candidates: &[usize], evalues: &[f64])
        -> Vec<usize>;
}

/// Keeps every candidate: the plain e-BH scan.
pub struct IdentityFilter;

impl FocusFilter for IdentityFilter {
    fn focus(
        &self,
        _family: &HypothesisFamily,
        candidates: &[usize],
        _evalues: &[f64],
    ) -> Vec<usize> {
        candidates.to_vec()
    }
}

/// For nested families, keeps candidates with no finer candidate inside them;
/// for general families, solves maximum-weight disjoint selection over the
/// candidates (ties break toward the lowest flat id).
pub struct OuterNodeFilter;

impl FocusFilter for OuterNodeFilter {
    fn focus(
        &self,
        family: &HypothesisFamily,
        candidates: &[usize],
        _evalues: &[f64],
    ) -> Vec<usize> {
        if family.is_nested() {
            outer_nodes(family, candidates)
        } else {
            let ctx = ProblemCtx::new(family);
            let mut bb = BranchBoundSelector::new(u64::MAX);
            bb.select(&ctx, candidates, 0).map(|(_, sel)| sel).unwrap_or_default()
        }
    }
}

/// Candidates with no strictly finer candidate contained in them. When two
/// candidates from different resolutions have identical members, the one at
/// the finer resolution (by mean group size, declared order on ties) counts
/// as the inner node and survives. Requires a nested family to guarantee a
/// disjoint result.
pub fn outer_nodes(family: &HypothesisFamily, candidates: &[usize]) -> Vec<usize> {
    let coarse_order = family.resolutions_by_coarseness();
    let mut rank = alloc::vec![0usize; family.n_resolutions()];
    for (pos, &m) in coarse_order.iter().enumerate() {
        rank[m] = pos;
    }
    let grefs: Vec<_> = candidates.iter().map(|&id| family.group_by_flat(id)).collect();
    candidates
        .iter()
        .enumerate()
        .filter(|&(ia, _)| {
            let a = grefs[ia];
            !grefs.iter().enumerate().any(|(ib, &b)| {
                ib != ia
                    && match family.relation(b, a) {
                        GroupRelation::FirstInSecond => true,
                        GroupRelation::Equal => rank[b.resolution] < rank[a.resolution],
                        _ => false,
                    }
            })
        })
        .map(|(_, &id)| id)
        .collect()
}

#[derive(Clone, Debug)]
pub struct FocusedResult {
    pub rejection: RejectionSet,
    /// The winning threshold; infinite when only infinite e-values (or
    /// nothing) can be rejected.
    pub t_star: f64,
}

pub fn focused_ebh(
    family: &HypothesisFamily,
    table: &EValueTable,
    alpha: f64,
    filter: &dyn FocusFilter,
) -> Result<FocusedResult, ElpError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ElpError::InvalidAlpha { alpha });
    }
    if table.n_total() != family.n_groups() {
        return Err(ElpError::NTotalMismatch {
            expected: family.n_groups(),
            got: table.n_total(),
        });
    }
    let flat = table.flat();
    let mut by_e_desc: Vec<usize> = (0..flat.len()).collect();
    by_e_desc.sort_unstable_by(|&a, &b| flat[b].total_cmp(&flat[a]).then(a.cmp(&b)));

    // Scan thresholds over the distinct e-values plus infinity, ascending.
    let mut grid: Vec<f64> = flat.clone();
    grid.sort_unstable_by(f64::total_cmp);
    grid.dedup();
    if grid.last() != Some(&f64::INFINITY) {
        grid.push(f64::INFINITY);
    }

    let n_total = table.n_total();
    let target = n_total as f64 / alpha;
    for &t in &grid {
        let size = by_e_desc.partition_point(|&i| flat[i] >= t);
        let mut cand = by_e_desc[..size].to_vec();
        cand.sort_unstable();
        let focused = filter.focus(family, &cand, &flat);
        let m = focused.len().max(1) as f64;
        // t = infinity always satisfies this, so the scan always terminates.
        if t * m >= target {
            let rejection = RejectionSet::from_flat(family, &flat, &focused, alpha, n_total)?;
            debug_assert!(rejection.certificate.consistent);
            return Ok(FocusedResult { rejection, t_star: t });
        }
    }
    let rejection = RejectionSet::from_flat(family, &flat, &[], alpha, n_total)?;
    Ok(FocusedResult { rejection, t_star: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalue::{ebh_indices, EValueTable, Provenance};
    use crate::family::{GroupRef, HypothesisFamily, PartitionSpec};
    use alloc::vec;
    use alloc::vec::Vec;

    fn nested_family() -> HypothesisFamily {
        HypothesisFamily::new(
            2,
            vec![
                PartitionSpec::new("1", vec![vec![0], vec![1]]),
                PartitionSpec::new("pair", vec![vec![0, 1]]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn outer_filter_drops_covering_parent() {
        let family = nested_family();
        // Flat ids: 0={0}, 1={1}, 2={0,1}.
        assert_eq!(outer_nodes(&family, &[0, 1, 2]), vec![0, 1]);
        assert_eq!(outer_nodes(&family, &[0, 2]), vec![0]);
        assert_eq!(outer_nodes(&family, &[2]), vec![2]);
    }

    #[test]
    fn outer_filter_resolves_equal_groups_to_finer() {
        let family = HypothesisFamily::new(
            2,
            vec![
                PartitionSpec::new("fine", vec![vec![0], vec![1]]),
                PartitionSpec::new("coarse-a", vec![vec![0, 1]]),
                PartitionSpec::new("coarse-b", vec![vec![0, 1]]),
            ],
        )
        .unwrap();
        // Flat ids: 0,1 singletons; 2 and 3 identical pairs.
        let kept = outer_nodes(&family, &[2, 3]);
        assert_eq!(kept, vec![2], "finer-ranked twin survives");
    }

    #[test]
    fn general_filter_breaks_ties_to_lowest_id() {
        let family = HypothesisFamily::new(
            3,
            vec![
                PartitionSpec::new("a", vec![vec![0, 1], vec![2]]),
                PartitionSpec::new("b", vec![vec![0], vec![1, 2]]),
            ],
        )
        .unwrap();
        assert!(!family.is_nested());
        // Flat ids: 0={0,1}, 1={2}, 2={0}, 3={1,2}; candidates {0,1} and {1,2}
        // overlap and have equal weight 1/2.
        let sel = OuterNodeFilter.focus(&family, &[0, 3], &[]);
        assert_eq!(sel, vec![0]);
    }

    #[test]
    fn focused_scan_nested_example() {
        let family = nested_family();
        let table = EValueTable::new(
            &family,
            vec![vec![8.0, 0.0], vec![4.0]],
            Provenance::Raw,
            3,
        )
        .unwrap();
        let res = focused_ebh(&family, &table, 0.4, &OuterNodeFilter).unwrap();
        assert_eq!(res.rejection.rejected, vec![GroupRef { resolution: 0, group: 0 }]);
        assert_eq!(res.t_star, 8.0);
    }

    #[test]
    fn identity_filter_reduces_to_ebh() {
        let groups: Vec<Vec<usize>> = (0..4).map(|j| vec![j]).collect();
        let family = HypothesisFamily::new(4, vec![PartitionSpec::new("1", groups)]).unwrap();
        for (values, alpha) in [
            (vec![8.0, 0.0, 0.0, 0.0], 0.5),
            (vec![8.0, 8.0, 0.0, 0.0], 0.5),
            (vec![2.0, 3.0, 9.0, 1.0], 0.3),
            (vec![0.0, 0.0, 0.0, 0.0], 0.5),
        ] {
            let table =
                EValueTable::new(&family, vec![values.clone()], Provenance::Raw, 4).unwrap();
            let res = focused_ebh(&family, &table, alpha, &IdentityFilter).unwrap();
            let got: Vec<usize> = res.rejection.rejected.iter().map(|g| g.group).collect();
            let want = ebh_indices(&values, 4, alpha).unwrap();
            assert_eq!(got, want, "values={values:?} alpha={alpha}");
        }
    }

    #[test]
    fn infinite_evalues_reject_at_infinity() {
        let family = nested_family();
        let table = EValueTable::new(
            &family,
            vec![vec![f64::INFINITY, 0.0], vec![0.0]],
            Provenance::Raw,
            3,
        )
        .unwrap();
        // Nothing finite passes at alpha = 0.1 (needs t*1 >= 30), but the
        // infinite e-value always does.
        let res = focused_ebh(&family, &table, 0.1, &IdentityFilter).unwrap();
        assert_eq!(res.rejection.rejected, vec![GroupRef { resolution: 0, group: 0 }]);
        assert!(res.t_star.is_infinite());
    }
}
