//! Multilayer threshold filter: one e-value threshold per layer, raised
//! jointly until every layer's threshold times its rejection count clears
//! that layer's budget. A base hypothesis survives only if its group passes
//! at every layer, so the layers discipline each other.

use alloc::vec::Vec;

use super::{knockoff_evalues_single, knockoff_stopping_time, KelpError, KnockoffScores};
use crate::evalue::mean_merge_groups;
use crate::family::HypothesisFamily;

#[derive(Clone, Debug)]
pub struct MultilayerThresholds {
    /// One threshold per layer, each from that layer's candidate grid
    /// {n_m/(alpha_m k): k = 1..n_m} or infinite.
    pub thresholds: Vec<f64>,
    pub levels: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EfilterResult {
    pub thresholds: MultilayerThresholds,
    /// Base hypotheses whose group clears the threshold at every layer.
    pub selected_features: Vec<usize>,
    /// Per layer: indices of groups intersecting the selected base set.
    pub layer_rejections: Vec<Vec<usize>>,
}

struct LayerState<'a> {
    /// Group e-value seen by each base feature at this layer.
    feature_e: Vec<f64>,
    /// Ascending candidate thresholds n/(alpha k) for k = n..1, then inf.
    grid: Vec<f64>,
    target: f64,
    evalues: &'a [f64],
}

/// Joint thresholds over several partitions of the same features, given each
/// layer's group e-values and target level. Thresholds start at 1/alpha_m and
/// only ever move up their finite grids, so the fixed point is reached after
/// at most the total grid length in raises.
pub fn efilter(
    family: &HypothesisFamily,
    layer_evalues: &[Vec<f64>],
    levels: &[f64],
) -> Result<EfilterResult, KelpError> {
    let n_layers = family.n_resolutions();
    if layer_evalues.len() != n_layers {
        return Err(KelpError::ResolutionCountMismatch {
            expected: n_layers,
            got: layer_evalues.len(),
        });
    }
    if levels.len() != n_layers {
        return Err(KelpError::LevelCountMismatch { expected: n_layers, got: levels.len() });
    }
    for &a in levels {
        if !(a > 0.0 && a < 1.0) {
            return Err(KelpError::InvalidAlpha { alpha: a });
        }
    }
    let p = family.p();
    let mut layers = Vec::with_capacity(n_layers);
    for m in 0..n_layers {
        let part = family.partition(m);
        let ev = &layer_evalues[m];
        if ev.len() != part.len() {
            return Err(KelpError::ScoreCountMismatch {
                resolution: m,
                expected: part.len(),
                got: ev.len(),
            });
        }
        if let Some(idx) = ev.iter().position(|&v| v.is_nan() || v < 0.0) {
            return Err(KelpError::EValue(crate::evalue::EValueError::InvalidValue {
                index: idx,
                value: ev[idx],
            }));
        }
        let n_m = part.len() as f64;
        let mut grid: Vec<f64> = (1..=part.len()).rev().map(|k| n_m / (levels[m] * k as f64)).collect();
        grid.push(f64::INFINITY);
        let feature_e = (0..p).map(|j| ev[part.group_of(j)]).collect();
        layers.push(LayerState { feature_e, grid, target: n_m / levels[m], evalues: ev });
    }

    // ptr[m] indexes the current threshold within layer m's grid.
    let mut ptr = alloc::vec![0usize; n_layers];
    let selected = |ptr: &[usize], layers: &[LayerState]| -> Vec<usize> {
        (0..p)
            .filter(|&j| {
                layers
                    .iter()
                    .zip(ptr)
                    .all(|(layer, &q)| layer.feature_e[j] >= layer.grid[q])
            })
            .collect()
    };
    let count_groups = |m: usize, sel: &[usize]| -> usize {
        let part = family.partition(m);
        let mut seen = alloc::vec![false; part.len()];
        let mut count = 0;
        for &j in sel {
            let g = part.group_of(j);
            if !seen[g] {
                seen[g] = true;
                count += 1;
            }
        }
        count
    };

    let max_rounds: usize = layers.iter().map(|l| l.grid.len()).sum::<usize>() + 1;
    let mut rounds = 0;
    loop {
        let mut changed = false;
        for m in 0..n_layers {
            // Raise layer m's threshold to the first grid value that clears
            // the budget given the other layers' current thresholds.
            let start = ptr[m];
            for q in start..layers[m].grid.len() {
                ptr[m] = q;
                let sel = selected(&ptr, &layers);
                let r = count_groups(m, &sel).max(1) as f64;
                if layers[m].grid[q] * r >= layers[m].target {
                    break;
                }
            }
            if ptr[m] != start {
                changed = true;
            }
        }
        rounds += 1;
        if !changed {
            break;
        }
        assert!(rounds <= max_rounds, "threshold raises must terminate");
    }

    let selected_features = selected(&ptr, &layers);
    // Fixed-point certificate: every layer clears its budget at the final
    // thresholds. The infinite grid tail makes this always attainable.
    for m in 0..n_layers {
        let r = count_groups(m, &selected_features).max(1) as f64;
        assert!(
            layers[m].grid[ptr[m]] * r >= layers[m].target,
            "final thresholds violate the layer budget"
        );
    }

    let layer_rejections = (0..n_layers)
        .map(|m| {
            let part = family.partition(m);
            let mut seen = alloc::vec![false; part.len()];
            for &j in &selected_features {
                seen[part.group_of(j)] = true;
            }
            let sel: Vec<usize> = (0..part.len()).filter(|&g| seen[g]).collect();
            // Every rejected group's own e-value must clear the threshold:
            // intersecting the selected set already implies it for partitions.
            debug_assert!(sel.iter().all(|&g| layers[m].evalues[g] >= layers[m].grid[ptr[m]]));
            sel
        })
        .collect();

    let thresholds = layers
        .iter()
        .zip(&ptr)
        .map(|(layer, &q)| layer.grid[q])
        .collect();
    Ok(EfilterResult {
        thresholds: MultilayerThresholds { thresholds, levels: levels.to_vec() },
        selected_features,
        layer_rejections,
    })
}

/// Convenience wrapper for the merged-value mode: base (feature-level)
/// e-values are averaged within each layer's groups first.
pub fn efilter_from_base(
    family: &HypothesisFamily,
    base_evalues: &[f64],
    levels: &[f64],
) -> Result<EfilterResult, KelpError> {
    let mut layer_evalues = Vec::with_capacity(family.n_resolutions());
    for m in 0..family.n_resolutions() {
        layer_evalues.push(mean_merge_groups(family, m, base_evalues)?);
    }
    efilter(family, &layer_evalues, levels)
}

#[derive(Clone, Debug)]
pub struct EmkfResult {
    pub filter: EfilterResult,
    pub stopping_times: Vec<f64>,
}

/// Knockoff-score front end for the multilayer filter. Each layer gets its
/// whole group count as e-value budget; that is what makes the per-layer
/// control argument work, and it is why these e-values must not be mixed
/// into a shared-budget table.
pub fn run_emkf(
    family: &HypothesisFamily,
    scores: &KnockoffScores,
    levels: &[f64],
    gammas: &[f64],
) -> Result<EmkfResult, KelpError> {
    let n_layers = family.n_resolutions();
    if scores.n_resolutions() != n_layers {
        return Err(KelpError::ResolutionCountMismatch {
            expected: n_layers,
            got: scores.n_resolutions(),
        });
    }
    if gammas.len() != n_layers {
        return Err(KelpError::ResolutionCountMismatch { expected: n_layers, got: gammas.len() });
    }
    let mut layer_evalues = Vec::with_capacity(n_layers);
    let mut stopping_times = Vec::with_capacity(n_layers);
    for m in 0..n_layers {
        let w = scores.resolution(m);
        let c = family.partition(m).len() as f64;
        layer_evalues.push(knockoff_evalues_single(w, gammas[m], c)?);
        stopping_times.push(knockoff_stopping_time(w, gammas[m])?);
    }
    let filter = efilter(family, &layer_evalues, levels)?;
    Ok(EmkfResult { filter, stopping_times })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalue::ebh_indices;
    use crate::family::PartitionSpec;
    use crate::kelp::knockoff_filter;
    use alloc::vec;
    use alloc::vec::Vec;

    fn two_layer_family() -> HypothesisFamily {
        HypothesisFamily::new(
            4,
            vec![
                PartitionSpec::new("1", (0..4).map(|j| vec![j]).collect()),
                PartitionSpec::new("pairs", vec![vec![0, 1], vec![2, 3]]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn worked_two_layer_instance() {
        let family = two_layer_family();
        let res = efilter(
            &family,
            &[vec![8.0, 8.0, 0.0, 0.0], vec![8.0, 0.0]],
            &[0.5, 0.5],
        )
        .unwrap();
        assert_eq!(res.thresholds.thresholds, vec![4.0, 4.0]);
        assert_eq!(res.selected_features, vec![0, 1]);
        assert_eq!(res.layer_rejections, vec![vec![0, 1], vec![0]]);
    }

    #[test]
    fn single_layer_is_ebh() {
        let family = HypothesisFamily::new(
            4,
            vec![PartitionSpec::new("1", (0..4).map(|j| vec![j]).collect())],
        )
        .unwrap();
        for (e, alpha) in [
            (vec![8.0, 0.0, 0.0, 0.0], 0.5),
            (vec![8.0, 8.0, 0.0, 0.0], 0.5),
            (vec![2.0, 9.0, 3.0, 1.0], 0.3),
            (vec![0.0, 0.0, 0.0, 0.0], 0.2),
            (vec![4.0, 4.0, 1.0, 1.0], 0.5),
        ] {
            let res = efilter(&family, &[e.clone()], &[alpha]).unwrap();
            let want = ebh_indices(&e, 4, alpha).unwrap();
            assert_eq!(res.layer_rejections[0], want, "e={e:?} alpha={alpha}");
        }
    }

    #[test]
    fn all_zero_evalues_select_nothing() {
        let family = two_layer_family();
        let res = efilter(&family, &[vec![0.0; 4], vec![0.0; 2]], &[0.5, 0.5]).unwrap();
        // With nothing selected the raise stops at n_m/alpha_m, the largest
        // finite grid value; it already clears the budget with the count
        // floored at one.
        assert_eq!(res.thresholds.thresholds, vec![8.0, 4.0]);
        assert!(res.selected_features.is_empty());
        assert!(res.layer_rejections.iter().all(|r| r.is_empty()));
    }

    #[test]
    fn one_dead_layer_blocks_all_selections() {
        let family = two_layer_family();
        let scores = KnockoffScores::new(
            &family,
            vec![vec![5.0, 4.0, 3.0, 2.0], vec![-1.0, -2.0]],
        )
        .unwrap();
        let res = run_emkf(&family, &scores, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(res.stopping_times[1].is_infinite());
        assert!(res.filter.selected_features.is_empty());
    }

    #[test]
    fn single_layer_emkf_matches_knockoff_filter() {
        let mut state = 0xD1B54A32D192ED03u64;
        let mut next = move || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            state.wrapping_mul(0x2545F4914F6CDD1D)
        };
        for trial in 0..60 {
            let p = 2 + (next() % 12) as usize;
            let w: Vec<f64> = (0..p)
                .map(|_| {
                    let mag = 1.0 + (next() % 9) as f64;
                    if next() % 3 == 0 {
                        -mag
                    } else {
                        mag
                    }
                })
                .collect();
            let family = HypothesisFamily::new(
                p,
                vec![PartitionSpec::new("1", (0..p).map(|j| vec![j]).collect())],
            )
            .unwrap();
            let alpha = 0.5;
            let scores = KnockoffScores::new(&family, vec![w.clone()]).unwrap();
            let res = run_emkf(&family, &scores, &[alpha], &[alpha]).unwrap();
            let want = knockoff_filter(&w, alpha).unwrap();
            assert_eq!(res.filter.layer_rejections[0], want, "trial {trial} w={w:?}");
        }
    }

    #[test]
    fn merged_base_values_mode() {
        let family = two_layer_family();
        let res = efilter_from_base(&family, &[8.0, 8.0, 0.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_eq!(res.thresholds.thresholds, vec![4.0, 4.0]);
        assert_eq!(res.selected_features, vec![0, 1]);
    }

    #[test]
    fn shape_errors() {
        let family = two_layer_family();
        assert!(matches!(
            efilter(&family, &[vec![0.0; 4]], &[0.5, 0.5]),
            Err(KelpError::ResolutionCountMismatch { .. })
        ));
        assert!(matches!(
            efilter(&family, &[vec![0.0; 4], vec![0.0; 2]], &[0.5]),
            Err(KelpError::LevelCountMismatch { .. })
        ));
        assert!(matches!(
            efilter(&family, &[vec![0.0; 3], vec![0.0; 2]], &[0.5, 0.5]),
            Err(KelpError::ScoreCountMismatch { resolution: 0, .. })
        ));
    }
}
