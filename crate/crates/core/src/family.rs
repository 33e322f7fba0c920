//! Hypothesis families: several partitions of the same base hypotheses into
//! groups, with per-group rejection weights and optional ground-truth labels.
//!
//! Base hypotheses are indexed `0..p`. Every partition (one "resolution")
//! must cover `0..p` exactly once; groups from different partitions may
//! overlap arbitrarily unless the family is nested.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Identifies a group by (resolution index, group index within resolution).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupRef {
    pub resolution: usize,
    pub group: usize,
}

/// How two groups relate as sets of base hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupRelation {
    Disjoint,
    Equal,
    /// First group is a strict subset of the second.
    FirstInSecond,
    /// Second group is a strict subset of the first.
    SecondInFirst,
    /// Overlapping, neither contains the other.
    Crossing,
}

/// Raw description of one resolution, as supplied by a caller or a file loader.
#[derive(Clone, Debug)]
pub struct PartitionSpec {
    pub id: String,
    /// Groups of 0-based hypothesis indices. Need not be sorted.
    pub groups: Vec<Vec<usize>>,
    /// Per-group weights; `None` means the inverse-size default 1/|A|.
    pub weights: Option<Vec<f64>>,
}

impl PartitionSpec {
    pub fn new(id: impl Into<String>, groups: Vec<Vec<usize>>) -> Self {
        PartitionSpec { id: id.into(), groups, weights: None }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }
}

/// One validated resolution: groups partition `0..p`.
#[derive(Clone, Debug)]
pub struct Partition {
    id: String,
    groups: Vec<Vec<usize>>,
    feature_to_group: Vec<usize>,
    contiguous: bool,
}

impl Partition {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of groups in this resolution.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Members of group `g`, sorted ascending.
    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Index of the group containing base hypothesis `j`.
    pub fn group_of(&self, j: usize) -> usize {
        self.feature_to_group[j]
    }

    /// True when every group is a contiguous index range.
    pub fn is_contiguous(&self) -> bool {
        self.contiguous
    }

    pub fn is_singletons(&self) -> bool {
        self.groups.iter().all(|g| g.len() == 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilyError {
    ZeroFeatures,
    NoPartitions,
    NoGroups { partition: String },
    EmptyGroup { partition: String, group: usize },
    IndexOutOfRange { partition: String, group: usize, index: usize, p: usize },
    DuplicateIndex { partition: String, group: usize, index: usize },
    Overlap { partition: String, index: usize, group_a: usize, group_b: usize },
    CoverageGap { partition: String, index: usize },
    /// A partition labeled "1" must consist of singleton groups.
    SingletonConvention { partition: String, group: usize },
    WeightCountMismatch { partition: String, expected: usize, got: usize },
    InvalidWeight { partition: String, group: usize },
    DuplicatePartitionId { id: String },
    UnknownGroup { resolution: usize, group: usize },
    TruthLengthMismatch { expected: usize, got: usize },
}

impl fmt::Display for FamilyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use FamilyError::*;
        match self {
            ZeroFeatures => write!(f, "family needs at least one base hypothesis"),
            NoPartitions => write!(f, "family needs at least one resolution"),
            NoGroups { partition } => write!(f, "resolution '{partition}' has no groups"),
            EmptyGroup { partition, group } => {
                write!(f, "resolution '{partition}' group {group} is empty")
            }
            IndexOutOfRange { partition, group, index, p } => write!(
                f,
                "resolution '{partition}' group {group}: index {index} outside 0..{p}"
            ),
            DuplicateIndex { partition, group, index } => write!(
                f,
                "resolution '{partition}' group {group}: index {index} repeated"
            ),
            Overlap { partition, index, group_a, group_b } => write!(
                f,
                "resolution '{partition}': index {index} in both group {group_a} and group {group_b}"
            ),
            CoverageGap { partition, index } => write!(
                f,
                "resolution '{partition}': index {index} not covered by any group"
            ),
            SingletonConvention { partition, group } => write!(
                f,
                "resolution '{partition}' is labeled as the individual level but group {group} has size > 1"
            ),
            WeightCountMismatch { partition, expected, got } => write!(
                f,
                "resolution '{partition}': {expected} groups but {got} weights"
            ),
            InvalidWeight { partition, group } => write!(
                f,
                "resolution '{partition}' group {group}: weights must be finite and positive"
            ),
            DuplicatePartitionId { id } => write!(f, "resolution id '{id}' declared twice"),
            UnknownGroup { resolution, group } => {
                write!(f, "no group ({resolution}, {group}) in family")
            }
            TruthLengthMismatch { expected, got } => {
                write!(f, "truth labels cover {got} hypotheses, family has {expected}")
            }
        }
    }
}

impl core::error::Error for FamilyError {}

/// A validated multi-resolution family with weights.
#[derive(Clone, Debug)]
pub struct HypothesisFamily {
    p: usize,
    partitions: Vec<Partition>,
    weights: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    n_groups: usize,
    nested: bool,
}

impl HypothesisFamily {
    pub fn new(p: usize, specs: Vec<PartitionSpec>) -> Result<Self, FamilyError> {
        if p == 0 {
            return Err(FamilyError::ZeroFeatures);
        }
        if specs.is_empty() {
            return Err(FamilyError::NoPartitions);
        }
        let mut partitions = Vec::with_capacity(specs.len());
        let mut weights = Vec::with_capacity(specs.len());
        for spec in specs {
            let PartitionSpec { id, groups, weights: w } = spec;
            if partitions.iter().any(|q: &Partition| q.id == id) {
                return Err(FamilyError::DuplicatePartitionId { id });
            }
            if groups.is_empty() {
                return Err(FamilyError::NoGroups { partition: id });
            }
            let mut sorted_groups = Vec::with_capacity(groups.len());
            let mut owner: Vec<Option<usize>> = vec![None; p];
            for (g, members) in groups.into_iter().enumerate() {
                if members.is_empty() {
                    return Err(FamilyError::EmptyGroup { partition: id, group: g });
                }
                let mut members = members;
                members.sort_unstable();
                for pair in members.windows(2) {
                    if pair[0] == pair[1] {
                        return Err(FamilyError::DuplicateIndex {
                            partition: id,
                            group: g,
                            index: pair[0],
                        });
                    }
                }
                for &j in &members {
                    if j >= p {
                        return Err(FamilyError::IndexOutOfRange {
                            partition: id,
                            group: g,
                            index: j,
                            p,
                        });
                    }
                    if let Some(prev) = owner[j] {
                        return Err(FamilyError::Overlap {
                            partition: id,
                            index: j,
                            group_a: prev,
                            group_b: g,
                        });
                    }
                    owner[j] = Some(g);
                }
                sorted_groups.push(members);
            }
            let mut feature_to_group = Vec::with_capacity(p);
            for (j, o) in owner.iter().enumerate() {
                match o {
                    Some(g) => feature_to_group.push(*g),
                    None => return Err(FamilyError::CoverageGap { partition: id, index: j }),
                }
            }
            // "1" labels the individual level by convention; hold it to that.
            if id == "1" {
                if let Some(g) = sorted_groups.iter().position(|g| g.len() != 1) {
                    return Err(FamilyError::SingletonConvention { partition: id, group: g });
                }
            }
            let w = match w {
                Some(w) => {
                    if w.len() != sorted_groups.len() {
                        return Err(FamilyError::WeightCountMismatch {
                            partition: id,
                            expected: sorted_groups.len(),
                            got: w.len(),
                        });
                    }
                    if let Some(g) = w.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                        return Err(FamilyError::InvalidWeight { partition: id, group: g });
                    }
                    w
                }
                None => sorted_groups.iter().map(|g| 1.0 / g.len() as f64).collect(),
            };
            let contiguous = sorted_groups
                .iter()
                .all(|g| g[g.len() - 1] - g[0] + 1 == g.len());
            partitions.push(Partition { id, groups: sorted_groups, feature_to_group, contiguous });
            weights.push(w);
        }
        let mut offsets = Vec::with_capacity(partitions.len());
        let mut n_groups = 0usize;
        for q in &partitions {
            offsets.push(n_groups);
            n_groups += q.len();
        }
        let nested = nested_check(p, &partitions);
        Ok(HypothesisFamily { p, partitions, weights, offsets, n_groups, nested })
    }

    /// Number of base hypotheses.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn partition(&self, m: usize) -> &Partition {
        &self.partitions[m]
    }

    pub fn n_resolutions(&self) -> usize {
        self.partitions.len()
    }

    /// Total number of groups across all resolutions.
    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// True when any two groups from different resolutions are either
    /// disjoint or ordered by inclusion.
    pub fn is_nested(&self) -> bool {
        self.nested
    }

    pub fn all_contiguous(&self) -> bool {
        self.partitions.iter().all(|q| q.contiguous)
    }

    pub fn check_group(&self, gref: GroupRef) -> Result<(), FamilyError> {
        if gref.resolution < self.partitions.len()
            && gref.group < self.partitions[gref.resolution].len()
        {
            Ok(())
        } else {
            Err(FamilyError::UnknownGroup { resolution: gref.resolution, group: gref.group })
        }
    }

    pub fn members(&self, gref: GroupRef) -> &[usize] {
        self.partitions[gref.resolution].group(gref.group)
    }

    pub fn weight(&self, gref: GroupRef) -> f64 {
        self.weights[gref.resolution][gref.group]
    }

    pub fn weights_of(&self, m: usize) -> &[f64] {
        &self.weights[m]
    }

    /// Flat index of a group in declared order (resolution-major).
    pub fn flat_index(&self, gref: GroupRef) -> usize {
        self.offsets[gref.resolution] + gref.group
    }

    pub fn group_by_flat(&self, flat: usize) -> GroupRef {
        debug_assert!(flat < self.n_groups);
        let resolution = match self.offsets.binary_search(&flat) {
            Ok(m) => m,
            Err(m) => m - 1,
        };
        GroupRef { resolution, group: flat - self.offsets[resolution] }
    }

    pub fn iter_groups(&self) -> impl Iterator<Item = GroupRef> + '_ {
        self.partitions.iter().enumerate().flat_map(|(m, q)| {
            (0..q.len()).map(move |g| GroupRef { resolution: m, group: g })
        })
    }

    pub fn relation(&self, a: GroupRef, b: GroupRef) -> GroupRelation {
        set_relation(self.members(a), self.members(b))
    }

    /// Resolutions ordered finest to coarsest by mean group size
    /// (ties keep declared order).
    pub fn resolutions_by_coarseness(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.partitions.len()).collect();
        order.sort_by(|&a, &b| {
            let ka = self.p as f64 / self.partitions[a].len() as f64;
            let kb = self.p as f64 / self.partitions[b].len() as f64;
            ka.partial_cmp(&kb).unwrap().then(a.cmp(&b))
        });
        order
    }
}

fn set_relation(a: &[usize], b: &[usize]) -> GroupRelation {
    // Both sorted ascending.
    let mut ia = 0;
    let mut ib = 0;
    let mut common = 0usize;
    while ia < a.len() && ib < b.len() {
        if a[ia] == b[ib] {
            common += 1;
            ia += 1;
            ib += 1;
        } else if a[ia] < b[ib] {
            ia += 1;
        } else {
            ib += 1;
        }
    }
    if common == 0 {
        GroupRelation::Disjoint
    } else if common == a.len() && common == b.len() {
        GroupRelation::Equal
    } else if common == a.len() {
        GroupRelation::FirstInSecond
    } else if common == b.len() {
        GroupRelation::SecondInFirst
    } else {
        GroupRelation::Crossing
    }
}

fn nested_check(p: usize, partitions: &[Partition]) -> bool {
    // For each pair of resolutions, every group of one must either sit inside
    // a single group of the other or be a disjoint union of its groups.
    for m1 in 0..partitions.len() {
        for m2 in (m1 + 1)..partitions.len() {
            let (qa, qb) = (&partitions[m1], &partitions[m2]);
            let mut hits = vec![0usize; qb.len()];
            for a in qa.groups() {
                let mut seen: Vec<usize> = Vec::new();
                for &j in a {
                    debug_assert!(j < p);
                    let g2 = qb.group_of(j);
                    if hits[g2] == 0 {
                        seen.push(g2);
                    }
                    hits[g2] += 1;
                }
                let ok = if seen.len() == 1 {
                    true // a lies inside one group of qb
                } else {
                    seen.iter().all(|&g2| hits[g2] == qb.group(g2).len())
                };
                for &g2 in &seen {
                    hits[g2] = 0;
                }
                if !ok {
                    return false;
                }
            }
        }
    }
    true
}

/// Ground truth over base hypotheses: which are non-null.
#[derive(Clone, Debug)]
pub struct TruthLabels {
    nonzero: Vec<bool>,
}

impl TruthLabels {
    pub fn new(p: usize, nonzero_indices: &[usize]) -> Result<Self, FamilyError> {
        let mut nonzero = vec![false; p];
        for &j in nonzero_indices {
            if j >= p {
                return Err(FamilyError::IndexOutOfRange {
                    partition: String::new(),
                    group: 0,
                    index: j,
                    p,
                });
            }
            nonzero[j] = true;
        }
        Ok(TruthLabels { nonzero })
    }

    pub fn from_mask(nonzero: Vec<bool>) -> Self {
        TruthLabels { nonzero }
    }

    pub fn p(&self) -> usize {
        self.nonzero.len()
    }

    pub fn is_feature_nonzero(&self, j: usize) -> bool {
        self.nonzero[j]
    }

    pub fn count_nonzero(&self) -> usize {
        self.nonzero.iter().filter(|&&b| b).count()
    }
}

/// A group is null exactly when every base hypothesis it covers is null.
/// This makes truth monotone: a non-null subgroup forces every supergroup
/// containing it to be non-null.
pub fn group_is_null(
    family: &HypothesisFamily,
    truth: &TruthLabels,
    gref: GroupRef,
) -> Result<bool, FamilyError> {
    if truth.p() != family.p() {
        return Err(FamilyError::TruthLengthMismatch { expected: family.p(), got: truth.p() });
    }
    family.check_group(gref)?;
    Ok(family.members(gref).iter().all(|&j| !truth.is_feature_nonzero(j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn two_level(p: usize, block: usize) -> HypothesisFamily {
        let singles: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
        let blocks: Vec<Vec<usize>> =
            (0..p / block).map(|b| (b * block..(b + 1) * block).collect()).collect();
        HypothesisFamily::new(
            p,
            vec![PartitionSpec::new("1", singles), PartitionSpec::new("blocks", blocks)],
        )
        .unwrap()
    }

    #[test]
    fn block_family_counts_groups() {
        // Singletons plus blocks of 5 over p=1000 yields 1200 groups.
        let f = two_level(1000, 5);
        assert_eq!(f.n_groups(), 1200);
        assert!(f.is_nested());
        assert!(f.all_contiguous());
        assert_eq!(f.weight(GroupRef { resolution: 1, group: 0 }), 1.0 / 5.0);
    }

    #[test]
    fn overlap_is_rejected() {
        let err = HypothesisFamily::new(
            3,
            vec![PartitionSpec::new("r", vec![vec![0, 1], vec![1, 2]])],
        )
        .unwrap_err();
        assert_eq!(
            err,
            FamilyError::Overlap { partition: "r".to_string(), index: 1, group_a: 0, group_b: 1 }
        );
    }

    #[test]
    fn coverage_gap_is_rejected() {
        let err =
            HypothesisFamily::new(3, vec![PartitionSpec::new("r", vec![vec![0], vec![2]])])
                .unwrap_err();
        assert_eq!(err, FamilyError::CoverageGap { partition: "r".to_string(), index: 1 });
    }

    #[test]
    fn singleton_convention_enforced() {
        let err = HypothesisFamily::new(2, vec![PartitionSpec::new("1", vec![vec![0, 1]])])
            .unwrap_err();
        assert!(matches!(err, FamilyError::SingletonConvention { .. }));
    }

    #[test]
    fn weight_overrides_are_validated() {
        let err = HypothesisFamily::new(
            2,
            vec![PartitionSpec::new("r", vec![vec![0], vec![1]]).with_weights(vec![1.0])],
        )
        .unwrap_err();
        assert!(matches!(err, FamilyError::WeightCountMismatch { .. }));
        let err = HypothesisFamily::new(
            2,
            vec![PartitionSpec::new("r", vec![vec![0], vec![1]]).with_weights(vec![1.0, 0.0])],
        )
        .unwrap_err();
        assert!(matches!(err, FamilyError::InvalidWeight { .. }));
    }

    #[test]
    fn nestedness_detection() {
        let f = HypothesisFamily::new(
            4,
            vec![
                PartitionSpec::new("a", vec![vec![0, 1], vec![2, 3]]),
                PartitionSpec::new("b", vec![vec![0, 1, 2, 3]]),
            ],
        )
        .unwrap();
        assert!(f.is_nested());
        let g = HypothesisFamily::new(
            4,
            vec![
                PartitionSpec::new("a", vec![vec![0, 1], vec![2, 3]]),
                PartitionSpec::new("b", vec![vec![0], vec![1, 2], vec![3]]),
            ],
        )
        .unwrap();
        assert!(!g.is_nested());
    }

    #[test]
    fn truth_labels_and_null_status() {
        let f = two_level(10, 5);
        let truth = TruthLabels::new(10, &[7]).unwrap();
        // Group covering 7 at the block level is non-null.
        assert!(!group_is_null(&f, &truth, GroupRef { resolution: 1, group: 1 }).unwrap());
        assert!(group_is_null(&f, &truth, GroupRef { resolution: 1, group: 0 }).unwrap());
        assert!(group_is_null(&f, &truth, GroupRef { resolution: 0, group: 6 }).unwrap());
        assert!(!group_is_null(&f, &truth, GroupRef { resolution: 0, group: 7 }).unwrap());
        let err = group_is_null(&f, &truth, GroupRef { resolution: 2, group: 0 }).unwrap_err();
        assert!(matches!(err, FamilyError::UnknownGroup { .. }));
    }

    #[test]
    fn flat_index_round_trip() {
        let f = two_level(10, 5);
        for (k, gref) in f.iter_groups().enumerate() {
            assert_eq!(f.flat_index(gref), k);
            assert_eq!(f.group_by_flat(k), gref);
        }
    }

    #[test]
    fn coarseness_order() {
        let f = two_level(10, 5);
        assert_eq!(f.resolutions_by_coarseness(), vec![0, 1]);
    }

    #[test]
    fn relations() {
        let f = HypothesisFamily::new(
            4,
            vec![
                PartitionSpec::new("a", vec![vec![0, 1], vec![2, 3]]),
                PartitionSpec::new("b", vec![vec![0], vec![1, 2], vec![3]]),
            ],
        )
        .unwrap();
        let a0 = GroupRef { resolution: 0, group: 0 };
        let b0 = GroupRef { resolution: 1, group: 0 };
        let b1 = GroupRef { resolution: 1, group: 1 };
        let b2 = GroupRef { resolution: 1, group: 2 };
        assert_eq!(f.relation(b0, a0), GroupRelation::FirstInSecond);
        assert_eq!(f.relation(a0, b0), GroupRelation::SecondInFirst);
        assert_eq!(f.relation(a0, b1), GroupRelation::Crossing);
        assert_eq!(f.relation(a0, b2), GroupRelation::Disjoint);
        assert_eq!(f.relation(a0, a0), GroupRelation::Equal);
    }
}
