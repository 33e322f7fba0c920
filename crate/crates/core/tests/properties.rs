//! Property tests for the order and monotonicity guarantees the procedures
//! rely on, plus a synthetic false-discovery-rate check for the step-up rule
//! under genuinely valid e-values.

use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use kelp_core::evalue::{
    ebh_indices, partial_conjunction_evalue, verify_self_consistent,
};
use kelp_core::family::{HypothesisFamily, PartitionSpec};
use kelp_core::kelp::{
    efilter, knockoff_evalues_single, knockoff_stopping_time,
};

fn evalue_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..30.0f64, 1..max_len)
}

fn score_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-9.0..9.0f64, 1..16).prop_map(|mut w| {
        // Exact zeros are not candidate thresholds; keep them out so the
        // scans see clean sign information.
        for v in &mut w {
            if *v == 0.0 {
                *v = 1.0;
            }
        }
        w
    })
}

proptest! {
    #[test]
    fn ebh_rejections_grow_when_an_evalue_grows(
        e in evalue_vec(12),
        idx in any::<prop::sample::Index>(),
        bump in 0.0..50.0f64,
    ) {
        let alpha = 0.3;
        let n = e.len();
        let before = ebh_indices(&e, n, alpha).unwrap();
        let mut bigger = e.clone();
        let i = idx.index(n);
        bigger[i] += bump;
        let after = ebh_indices(&bigger, n, alpha).unwrap();
        for j in before {
            prop_assert!(
                after.contains(&j),
                "rejection {j} lost after raising e[{i}]"
            );
        }
    }

    #[test]
    fn ebh_output_is_always_self_consistent(e in evalue_vec(12)) {
        let alpha = 0.25;
        let n = e.len();
        let rejected = ebh_indices(&e, n, alpha).unwrap();
        let cert = verify_self_consistent(&e, &rejected, alpha, n).unwrap();
        prop_assert!(cert.consistent);
    }

    #[test]
    fn conjunction_combiner_is_monotone(
        e in prop::collection::vec(0.0..20.0f64, 1..8),
        idx in any::<prop::sample::Index>(),
        bump in 0.0..20.0f64,
        u_seed in any::<prop::sample::Index>(),
    ) {
        let l = e.len();
        let u = 1 + u_seed.index(l);
        let base = partial_conjunction_evalue(&e, u).unwrap();
        let mut bigger = e.clone();
        bigger[idx.index(l)] += bump;
        let raised = partial_conjunction_evalue(&bigger, u).unwrap();
        prop_assert!(raised >= base);
    }

    #[test]
    fn conjunction_extremes_are_mean_and_min(e in prop::collection::vec(0.0..20.0f64, 1..8)) {
        let l = e.len();
        let full = partial_conjunction_evalue(&e, 1).unwrap();
        let mean = e.iter().sum::<f64>() / l as f64;
        prop_assert!((full - mean).abs() < 1e-12);
        let tight = partial_conjunction_evalue(&e, l).unwrap();
        let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(tight, min);
    }

    #[test]
    fn stopping_time_is_monotone_in_gamma(w in score_vec()) {
        let loose = knockoff_stopping_time(&w, 0.5).unwrap();
        let tight = knockoff_stopping_time(&w, 0.2).unwrap();
        // Tightening the level can only push the stopping time later.
        prop_assert!(tight >= loose);
    }

    #[test]
    fn knockoff_evalues_share_one_nonzero_value(w in score_vec()) {
        let c = w.len() as f64;
        let e = knockoff_evalues_single(&w, 0.4, c).unwrap();
        let t = knockoff_stopping_time(&w, 0.4).unwrap();
        let nonzero: Vec<f64> = e.iter().cloned().filter(|&v| v > 0.0).collect();
        if t.is_infinite() {
            prop_assert!(nonzero.is_empty());
        } else {
            for (i, &v) in e.iter().enumerate() {
                prop_assert_eq!(v > 0.0, w[i] >= t);
            }
            for pair in nonzero.windows(2) {
                prop_assert_eq!(pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn efilter_thresholds_live_on_their_grids(
        seed in any::<u64>(),
        p_half in 2usize..7,
    ) {
        let p = 2 * p_half;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let singles: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
        let pairs: Vec<Vec<usize>> = (0..p_half).map(|b| vec![2 * b, 2 * b + 1]).collect();
        let family = HypothesisFamily::new(
            p,
            vec![PartitionSpec::new("1", singles), PartitionSpec::new("2", pairs)],
        )
        .unwrap();
        let levels = [0.3, 0.4];
        let layer_e: Vec<Vec<f64>> = (0..2)
            .map(|m| {
                let len = family.partition(m).len();
                (0..len).map(|_| rng.random_range(0.0..40.0)).collect()
            })
            .collect();
        let res = efilter(&family, &layer_e, &levels).unwrap();

        for (m, &t_hat) in res.thresholds.thresholds.iter().enumerate() {
            let n_m = family.partition(m).len() as f64;
            let on_grid = t_hat.is_infinite()
                || (1..=family.partition(m).len())
                    .any(|k| t_hat == n_m / (levels[m] * k as f64));
            prop_assert!(on_grid, "layer {m} threshold {t_hat} off-grid");

            // Re-derive the layer's rejection count and recheck the budget.
            let part = family.partition(m);
            let mut hit = vec![false; part.len()];
            for &j in &res.selected_features {
                hit[part.group_of(j)] = true;
            }
            let r = hit.iter().filter(|&&h| h).count().max(1) as f64;
            prop_assert!(t_hat * r >= n_m / levels[m]);
        }

        // Selected features clear every layer's threshold.
        for &j in &res.selected_features {
            for m in 0..2 {
                let g = family.partition(m).group_of(j);
                prop_assert!(layer_e[m][g] >= res.thresholds.thresholds[m]);
            }
        }
    }
}

/// Null e-values here are genuinely valid: e = x with probability 1/x, else
/// zero, so the expectation is exactly one whatever x is. The step-up rule
/// must then keep the realized false discovery proportion near or below the
/// target on average.
#[test]
fn ebh_controls_fdr_on_synthetic_evalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_24);
    let n = 20;
    let n_null = 10;
    let alpha = 0.2;
    let reps = 4000;
    let mut fdp_sum = 0.0;
    for _ in 0..reps {
        let mut e = vec![0.0f64; n];
        for v in e.iter_mut().take(n_null) {
            let x = rng.random_range(2.0..80.0);
            if rng.random_range(0.0..1.0) < 1.0 / x {
                *v = x;
            }
        }
        for v in e.iter_mut().skip(n_null) {
            // Signals: large but not overwhelming, some below threshold.
            *v = rng.random_range(0.0..25.0);
        }
        let rejected = ebh_indices(&e, n, alpha).unwrap();
        if !rejected.is_empty() {
            let false_count = rejected.iter().filter(|&&i| i < n_null).count();
            fdp_sum += false_count as f64 / rejected.len() as f64;
        }
    }
    let fdr = fdp_sum / reps as f64;
    // Binomial-style slack: three standard errors of a worst-case Bernoulli.
    let slack = 3.0 * (0.25f64 / reps as f64).sqrt();
    assert!(
        fdr <= alpha + slack,
        "empirical FDR {fdr:.4} exceeds {alpha} + {slack:.4}"
    );
}

/// The full program inherits control from self-consistency. Same synthetic
/// nulls, two resolutions, oracle-checked feasibility aside.
#[test]
fn program_controls_fdr_on_synthetic_evalues() {
    use kelp_core::elp::{ElpProblem, SolverChoice};
    use kelp_core::evalue::{EValueTable, Provenance};

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let p = 12;
    let singles: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
    let pairs: Vec<Vec<usize>> = (0..p / 2).map(|b| vec![2 * b, 2 * b + 1]).collect();
    let family = HypothesisFamily::new(
        p,
        vec![PartitionSpec::new("1", singles), PartitionSpec::new("2", pairs)],
    )
    .unwrap();
    // Features 0..6 null, 6..12 signal. A pair is null iff both members are.
    let feature_null = |j: usize| j < 6;
    let alpha = 0.2;
    let reps = 2000;
    let mut fdp_sum = 0.0;
    for _ in 0..reps {
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; p], vec![0.0; p / 2]];
        for m in 0..2 {
            for g in 0..family.partition(m).len() {
                let null = family.partition(m).group(g).iter().all(|&j| feature_null(j));
                rows[m][g] = if null {
                    let x = rng.random_range(2.0..60.0);
                    if rng.random_range(0.0..1.0) < 1.0 / x {
                        x
                    } else {
                        0.0
                    }
                } else {
                    rng.random_range(0.0..30.0)
                };
            }
        }
        let table = EValueTable::new(&family, rows, Provenance::Raw, family.n_groups()).unwrap();
        let problem = ElpProblem::new(&family, &table, alpha).unwrap();
        let sol = problem.solve(SolverChoice::Auto).unwrap();
        let rej = &sol.rejection.rejected;
        if !rej.is_empty() {
            let false_count = rej
                .iter()
                .filter(|g| {
                    family
                        .members(**g)
                        .iter()
                        .all(|&j| feature_null(j))
                })
                .count();
            fdp_sum += false_count as f64 / rej.len() as f64;
        }
    }
    let fdr = fdp_sum / reps as f64;
    let slack = 3.0 * (0.25f64 / reps as f64).sqrt();
    assert!(
        fdr <= alpha + slack,
        "empirical FDR {fdr:.4} exceeds {alpha} + {slack:.4}"
    );
}
