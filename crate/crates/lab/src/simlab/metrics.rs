//! Replicate scoring: FDP, power, implicated-set size, and the tree
//! precision score. Scoring is pure and independent of rejection order.

use super::SimError;
use kelp_core::family::{group_is_null, GroupRef, HypothesisFamily, TruthLabels};

pub enum TruthView<'a> {
    /// One outcome: base hypotheses are the p features.
    SingleOutcome { support: &'a [usize] },
    /// Outcome tree: base hypotheses are (leaf, feature) pairs at 4j + leaf,
    /// and a pair is non-null when the feature is in that leaf's support.
    Tree { leaf_supports: &'a [Vec<usize>] },
}

impl TruthView<'_> {
    /// Truth over the family's base hypotheses.
    pub fn labels(&self, family: &HypothesisFamily) -> Result<TruthLabels, SimError> {
        let mut mask = vec![false; family.p()];
        match self {
            TruthView::SingleOutcome { support } => {
                for &j in support.iter() {
                    mask[j] = true;
                }
            }
            TruthView::Tree { leaf_supports } => {
                for (leaf, support) in leaf_supports.iter().enumerate() {
                    for &j in support {
                        mask[4 * j + leaf] = true;
                    }
                }
            }
        }
        Ok(TruthLabels::from_mask(mask))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Scored {
    pub fdp: f64,
    pub power: f64,
    pub size: f64,
    pub precision: Option<f64>,
    pub mean_group_size: Option<f64>,
}

fn precision_weight(family: &HypothesisFamily, gref: GroupRef) -> f64 {
    match family.partition(gref.resolution).id() {
        "leaves" => 1.0,
        "internal" => 0.5,
        _ => 0.25,
    }
}

/// Score one rejection set against the truth. Power counts base hypotheses
/// covered by any rejected group over the total non-null base count; size is
/// the number of distinct implicated features; a group is a false rejection
/// when every base member under it is null.
pub fn score(
    family: &HypothesisFamily,
    rejected: &[GroupRef],
    view: &TruthView,
) -> Result<Scored, SimError> {
    let truth = view.labels(family)?;
    let is_tree = matches!(view, TruthView::Tree { .. });

    let mut false_rejections = 0usize;
    let mut implicated = vec![false; family.p()];
    let mut precision = 0.0;
    let mut member_total = 0usize;
    for &gref in rejected {
        if group_is_null(family, &truth, gref)? {
            false_rejections += 1;
        }
        for &b in family.members(gref) {
            implicated[b] = true;
        }
        precision += precision_weight(family, gref);
        member_total += family.members(gref).len();
    }

    let fdp = false_rejections as f64 / rejected.len().max(1) as f64;

    let total_true = (0..family.p()).filter(|&b| truth.is_feature_nonzero(b)).count();
    let covered = (0..family.p())
        .filter(|&b| implicated[b] && truth.is_feature_nonzero(b))
        .count();
    let power = if total_true == 0 { 0.0 } else { covered as f64 / total_true as f64 };

    let size = if is_tree {
        let mut features = vec![false; family.p().div_ceil(4)];
        for b in 0..family.p() {
            if implicated[b] {
                features[b / 4] = true;
            }
        }
        features.iter().filter(|&&f| f).count() as f64
    } else {
        implicated.iter().filter(|&&f| f).count() as f64
    };

    Ok(Scored {
        fdp,
        power,
        size,
        precision: is_tree.then_some(precision),
        mean_group_size: (!rejected.is_empty())
            .then(|| member_total as f64 / rejected.len() as f64),
    })
}
