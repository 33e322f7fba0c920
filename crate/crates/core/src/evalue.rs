//! E-values and the e-BH step-up procedure.
//!
//! An e-value table stores one nonnegative value per group of a family plus
//! the count `n_total` it was built against. `n_total` is always stored
//! explicitly: inferring it from however many entries happen to be present
//! silently changes the target of error control.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::family::{FamilyError, GroupRef, HypothesisFamily};

/// Where an e-value came from. Only raw (externally supplied) entries may be
/// infinite; every construction in this crate yields finite values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Raw,
    Knockoff,
    Merged,
    PartialConjunction,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EValueError {
    InvalidAlpha { alpha: f64 },
    InvalidValue { index: usize, value: f64 },
    InfiniteRequiresRaw { index: usize },
    ShapeMismatch { resolution: usize, expected: usize, got: usize },
    ResolutionCountMismatch { expected: usize, got: usize },
    ZeroTotal,
    MeanOfEmpty,
    ConjunctionOrderOutOfRange { u: usize, len: usize },
    Family(FamilyError),
}

impl fmt::Display for EValueError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use EValueError::*;
        match self {
            InvalidAlpha { alpha } => write!(f, "alpha must lie in (0,1), got {alpha}"),
            InvalidValue { index, value } => {
                write!(f, "e-value {index} must be nonnegative and not NaN, got {value}")
            }
            InfiniteRequiresRaw { index } => {
                write!(f, "infinite e-value {index} only allowed with raw provenance")
            }
            ShapeMismatch { resolution, expected, got } => write!(
                f,
                "resolution {resolution}: expected {expected} e-values, got {got}"
            ),
            ResolutionCountMismatch { expected, got } => {
                write!(f, "expected values for {expected} resolutions, got {got}")
            }
            ZeroTotal => write!(f, "n_total must be positive"),
            MeanOfEmpty => write!(f, "cannot merge an empty list of e-values"),
            ConjunctionOrderOutOfRange { u, len } => {
                write!(f, "conjunction order {u} outside 1..={len}")
            }
            Family(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EValueError {}

impl From<FamilyError> for EValueError {
    fn from(e: FamilyError) -> Self {
        EValueError::Family(e)
    }
}

fn check_value(index: usize, v: f64) -> Result<(), EValueError> {
    if v.is_nan() || v < 0.0 {
        Err(EValueError::InvalidValue { index, value: v })
    } else {
        Ok(())
    }
}

/// E-values aligned with a family's resolutions and groups.
#[derive(Clone, Debug)]
pub struct EValueTable {
    values: Vec<Vec<f64>>,
    provenance: Vec<Vec<Provenance>>,
    n_total: usize,
}

impl EValueTable {
    pub fn new(
        family: &HypothesisFamily,
        values: Vec<Vec<f64>>,
        provenance: Provenance,
        n_total: usize,
    ) -> Result<Self, EValueError> {
        if n_total == 0 {
            return Err(EValueError::ZeroTotal);
        }
        if values.len() != family.n_resolutions() {
            return Err(EValueError::ResolutionCountMismatch {
                expected: family.n_resolutions(),
                got: values.len(),
            });
        }
        let mut prov = Vec::with_capacity(values.len());
        for (m, vals) in values.iter().enumerate() {
            let expected = family.partition(m).len();
            if vals.len() != expected {
                return Err(EValueError::ShapeMismatch { resolution: m, expected, got: vals.len() });
            }
            for (g, &v) in vals.iter().enumerate() {
                check_value(g, v)?;
                if v.is_infinite() && provenance != Provenance::Raw {
                    return Err(EValueError::InfiniteRequiresRaw { index: g });
                }
            }
            prov.push(vec![provenance; expected]);
        }
        Ok(EValueTable { values, provenance: prov, n_total })
    }

    /// Build from sparse entries; groups without an entry get e-value 0.
    pub fn from_sparse(
        family: &HypothesisFamily,
        entries: &[(GroupRef, f64)],
        provenance: Provenance,
        n_total: usize,
    ) -> Result<Self, EValueError> {
        let mut values: Vec<Vec<f64>> = family
            .partitions()
            .iter()
            .map(|q| vec![0.0; q.len()])
            .collect();
        for &(gref, v) in entries {
            family.check_group(gref)?;
            values[gref.resolution][gref.group] = v;
        }
        EValueTable::new(family, values, provenance, n_total)
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn value(&self, gref: GroupRef) -> f64 {
        self.values[gref.resolution][gref.group]
    }

    pub fn provenance(&self, gref: GroupRef) -> Provenance {
        self.provenance[gref.resolution][gref.group]
    }

    pub fn resolution_values(&self, m: usize) -> &[f64] {
        &self.values[m]
    }

    /// Values flattened in declared (resolution-major) order.
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }
}

/// Witness that a rejection set satisfies the self-consistency inequality
/// `e >= n_total / (alpha * R)` for every rejected group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyCertificate {
    pub n_rejected: usize,
    /// `n_total / (alpha * R)`; infinite when nothing is rejected.
    pub required_threshold: f64,
    /// Smallest rejected e-value; infinite when nothing is rejected.
    pub min_rejected_evalue: f64,
    pub consistent: bool,
}

/// Check self-consistency of `rejected` (indices into `evalues`) at `alpha`.
pub fn verify_self_consistent(
    evalues: &[f64],
    rejected: &[usize],
    alpha: f64,
    n_total: usize,
) -> Result<ConsistencyCertificate, EValueError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EValueError::InvalidAlpha { alpha });
    }
    if n_total == 0 {
        return Err(EValueError::ZeroTotal);
    }
    for (i, &v) in evalues.iter().enumerate() {
        check_value(i, v)?;
    }
    let r = rejected.len();
    if r == 0 {
        return Ok(ConsistencyCertificate {
            n_rejected: 0,
            required_threshold: f64::INFINITY,
            min_rejected_evalue: f64::INFINITY,
            consistent: true,
        });
    }
    let required = n_total as f64 / (alpha * r as f64);
    let mut min_e = f64::INFINITY;
    for &i in rejected {
        let e = evalues[i];
        if e < min_e {
            min_e = e;
        }
    }
    Ok(ConsistencyCertificate {
        n_rejected: r,
        required_threshold: required,
        min_rejected_evalue: min_e,
        consistent: min_e >= required,
    })
}

/// e-BH step-up over a flat list: find the largest k with
/// `e_(k) >= n_total / (alpha * k)` and reject everything at or above that
/// threshold, so boundary ties are all rejected together.
pub fn ebh_indices(
    evalues: &[f64],
    n_total: usize,
    alpha: f64,
) -> Result<Vec<usize>, EValueError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EValueError::InvalidAlpha { alpha });
    }
    if evalues.is_empty() {
        return Ok(Vec::new());
    }
    if n_total == 0 {
        return Err(EValueError::ZeroTotal);
    }
    for (i, &v) in evalues.iter().enumerate() {
        check_value(i, v)?;
    }
    let mut sorted: Vec<f64> = evalues.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let n = n_total as f64;
    let mut k_star = 0usize;
    for k in (1..=sorted.len()).rev() {
        if sorted[k - 1] >= n / (alpha * k as f64) {
            k_star = k;
            break;
        }
    }
    if k_star == 0 {
        return Ok(Vec::new());
    }
    let threshold = n / (alpha * k_star as f64);
    Ok((0..evalues.len()).filter(|&i| evalues[i] >= threshold).collect())
}

/// A set of rejected groups together with its consistency certificate and a
/// disjointness flag over the covered base hypotheses.
#[derive(Clone, Debug)]
pub struct RejectionSet {
    pub rejected: Vec<GroupRef>,
    pub alpha: f64,
    pub certificate: ConsistencyCertificate,
    pub disjoint: bool,
}

impl RejectionSet {
    pub fn from_flat(
        family: &HypothesisFamily,
        evalues_flat: &[f64],
        rejected_flat: &[usize],
        alpha: f64,
        n_total: usize,
    ) -> Result<Self, EValueError> {
        let certificate = verify_self_consistent(evalues_flat, rejected_flat, alpha, n_total)?;
        let mut rejected: Vec<GroupRef> =
            rejected_flat.iter().map(|&i| family.group_by_flat(i)).collect();
        rejected.sort_unstable();
        let mut used = vec![false; family.p()];
        let mut disjoint = true;
        'outer: for &gref in &rejected {
            for &j in family.members(gref) {
                if used[j] {
                    disjoint = false;
                    break 'outer;
                }
                used[j] = true;
            }
        }
        Ok(RejectionSet { rejected, alpha, certificate, disjoint })
    }

    pub fn len(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    /// Base hypotheses covered by at least one rejected group.
    pub fn implicated(&self, family: &HypothesisFamily) -> Vec<usize> {
        let mut mask = vec![false; family.p()];
        for &gref in &self.rejected {
            for &j in family.members(gref) {
                mask[j] = true;
            }
        }
        (0..family.p()).filter(|&j| mask[j]).collect()
    }
}

/// e-BH over a whole table at level `alpha`.
pub fn ebh_table(
    family: &HypothesisFamily,
    table: &EValueTable,
    alpha: f64,
) -> Result<RejectionSet, EValueError> {
    let flat = table.flat();
    let rejected = ebh_indices(&flat, table.n_total(), alpha)?;
    RejectionSet::from_flat(family, &flat, &rejected, alpha, table.n_total())
}

/// Arithmetic mean. Valid e-value merge for arbitrarily dependent inputs.
pub fn mean_merge(evalues: &[f64]) -> Result<f64, EValueError> {
    if evalues.is_empty() {
        return Err(EValueError::MeanOfEmpty);
    }
    let mut sum = 0.0;
    for (i, &v) in evalues.iter().enumerate() {
        check_value(i, v)?;
        sum += v;
    }
    Ok(sum / evalues.len() as f64)
}

/// Mean-merge base-level e-values within each group of resolution `m`.
pub fn mean_merge_groups(
    family: &HypothesisFamily,
    m: usize,
    base: &[f64],
) -> Result<Vec<f64>, EValueError> {
    if base.len() != family.p() {
        return Err(EValueError::ShapeMismatch {
            resolution: m,
            expected: family.p(),
            got: base.len(),
        });
    }
    family
        .partition(m)
        .groups()
        .iter()
        .map(|g| {
            let vals: Vec<f64> = g.iter().map(|&j| base[j]).collect();
            mean_merge(&vals)
        })
        .collect()
}

/// Partial-conjunction e-value of order `u` out of `L = evalues.len()`:
/// the mean of the `L - u + 1` smallest inputs. Nondecreasing in every input.
pub fn partial_conjunction_evalue(evalues: &[f64], u: usize) -> Result<f64, EValueError> {
    let l = evalues.len();
    if u == 0 || u > l {
        return Err(EValueError::ConjunctionOrderOutOfRange { u, len: l });
    }
    for (i, &v) in evalues.iter().enumerate() {
        check_value(i, v)?;
    }
    let mut sorted = evalues.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let keep = l - u + 1;
    let sum: f64 = sorted[..keep].iter().sum();
    Ok(sum / keep as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::PartitionSpec;

    fn singleton_family(p: usize) -> HypothesisFamily {
        let groups: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
        HypothesisFamily::new(p, vec![PartitionSpec::new("1", groups)]).unwrap()
    }

    #[test]
    fn ebh_single_large_value() {
        let rej = ebh_indices(&[8.0, 0.0, 0.0, 0.0], 4, 0.5).unwrap();
        assert_eq!(rej, vec![0]);
    }

    #[test]
    fn ebh_two_large_values() {
        let rej = ebh_indices(&[8.0, 8.0, 0.0, 0.0], 4, 0.5).unwrap();
        assert_eq!(rej, vec![0, 1]);
    }

    #[test]
    fn ebh_boundary_ties_all_rejected() {
        // Threshold at k*=2 is 4; both boundary values go.
        let rej = ebh_indices(&[4.0, 4.0], 4, 0.5).unwrap();
        assert_eq!(rej, vec![0, 1]);
    }

    #[test]
    fn ebh_empty_and_all_zero() {
        assert!(ebh_indices(&[], 4, 0.5).unwrap().is_empty());
        assert!(ebh_indices(&[0.0, 0.0], 2, 0.5).unwrap().is_empty());
    }

    #[test]
    fn ebh_handles_infinite_values() {
        let rej = ebh_indices(&[f64::INFINITY, 0.0, 0.0, 0.0], 4, 0.1).unwrap();
        assert_eq!(rej, vec![0]);
    }

    #[test]
    fn ebh_rejects_bad_alpha() {
        assert!(matches!(
            ebh_indices(&[1.0], 1, 0.0),
            Err(EValueError::InvalidAlpha { .. })
        ));
        assert!(matches!(
            ebh_indices(&[1.0], 1, 1.0),
            Err(EValueError::InvalidAlpha { .. })
        ));
    }

    #[test]
    fn self_consistency_counterexample() {
        // Two rejections need e >= 4/(0.4*2) = 5; the 4 fails.
        let cert = verify_self_consistent(&[8.0, 4.0, 0.0, 0.0], &[0, 1], 0.4, 4).unwrap();
        assert!(!cert.consistent);
        assert_eq!(cert.required_threshold, 5.0);
        assert_eq!(cert.min_rejected_evalue, 4.0);
    }

    #[test]
    fn self_consistency_of_every_ebh_output() {
        // Deterministic grid of instances.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for trial in 0..200 {
            let n = 1 + (next() % 12) as usize;
            let evalues: Vec<f64> = (0..n)
                .map(|_| match next() % 4 {
                    0 => 0.0,
                    1 => (next() % 8) as f64,
                    _ => (next() % 64) as f64 / 2.0,
                })
                .collect();
            let alpha = [0.1, 0.25, 0.5][trial % 3];
            let rej = ebh_indices(&evalues, n, alpha).unwrap();
            let cert = verify_self_consistent(&evalues, &rej, alpha, n).unwrap();
            assert!(cert.consistent, "e={evalues:?} alpha={alpha} rej={rej:?}");
        }
    }

    #[test]
    fn table_shape_and_sparse_default() {
        let f = singleton_family(3);
        let t = EValueTable::from_sparse(
            &f,
            &[(GroupRef { resolution: 0, group: 1 }, 5.0)],
            Provenance::Raw,
            3,
        )
        .unwrap();
        assert_eq!(t.flat(), vec![0.0, 5.0, 0.0]);
        let err = EValueTable::new(&f, vec![vec![1.0, 2.0]], Provenance::Raw, 3).unwrap_err();
        assert!(matches!(err, EValueError::ShapeMismatch { .. }));
    }

    #[test]
    fn infinite_needs_raw_provenance() {
        let f = singleton_family(2);
        let err = EValueTable::new(
            &f,
            vec![vec![f64::INFINITY, 0.0]],
            Provenance::Knockoff,
            2,
        )
        .unwrap_err();
        assert!(matches!(err, EValueError::InfiniteRequiresRaw { .. }));
        assert!(EValueTable::new(&f, vec![vec![f64::INFINITY, 0.0]], Provenance::Raw, 2).is_ok());
    }

    #[test]
    fn mean_merge_basics() {
        assert_eq!(mean_merge(&[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(mean_merge(&[f64::INFINITY, 1.0]).unwrap(), f64::INFINITY);
        assert!(matches!(mean_merge(&[]), Err(EValueError::MeanOfEmpty)));
    }

    #[test]
    fn partial_conjunction_examples() {
        // Order 2 of 3 keeps the two smallest.
        assert_eq!(partial_conjunction_evalue(&[6.0, 3.0, 0.0], 2).unwrap(), 1.5);
        // Order 1 is the plain mean.
        assert_eq!(partial_conjunction_evalue(&[2.0, 4.0], 1).unwrap(), 3.0);
        // Full conjunction is the minimum.
        assert_eq!(partial_conjunction_evalue(&[6.0, 3.0, 1.0], 3).unwrap(), 1.0);
        assert!(matches!(
            partial_conjunction_evalue(&[1.0], 2),
            Err(EValueError::ConjunctionOrderOutOfRange { .. })
        ));
    }

    #[test]
    fn ebh_table_maps_back_to_groups() {
        let f = singleton_family(4);
        let t = EValueTable::new(&f, vec![vec![8.0, 0.0, 0.0, 0.0]], Provenance::Raw, 4).unwrap();
        let r = ebh_table(&f, &t, 0.5).unwrap();
        assert_eq!(r.rejected, vec![GroupRef { resolution: 0, group: 0 }]);
        assert!(r.certificate.consistent);
        assert!(r.disjoint);
        assert_eq!(r.implicated(&f), vec![0]);
    }

    #[test]
    fn mean_merge_groups_respects_partition() {
        let f = HypothesisFamily::new(
            4,
            vec![PartitionSpec::new("blocks", vec![vec![0, 1], vec![2, 3]])],
        )
        .unwrap();
        let merged = mean_merge_groups(&f, 0, &[8.0, 8.0, 0.0, 0.0]).unwrap();
        assert_eq!(merged, vec![8.0, 0.0]);
    }
}
