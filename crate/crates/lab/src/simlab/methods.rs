//! Per-replicate method runners: score assembly, the roster dispatch, and
//! row emission. Row order is roster order, so output files are stable.

use super::generate::{generate, GeneratedData, STREAM_KNOCKOFF, STREAM_LASSO};
use super::metrics::{score, Scored, TruthView};
use super::{mix_seed, DesignSpec, MethodId, MetricsRow, ScenarioContext, SimError, TREE_LEAVES, TREE_NODES};
use crate::knockoffs::fixed_equi_knockoffs;
use crate::lasso::{lasso_cv, lasso_cv_statistics, w_statistics, LambdaRule, LassoOptions};
use kelp_core::elp::{outer_nodes, ElpProblem, SolverChoice};
use kelp_core::evalue::{ebh_indices, EValueTable, Provenance};
use kelp_core::family::{GroupRef, HypothesisFamily};
use kelp_core::kelp::{
    knockoff_evalues, knockoff_evalues_single, knockoff_filter, run_emkf,
    run_partial_conjunction_kelp, ConjunctionBudget, KelpConfig, KnockoffScores,
};
use ndarray::{concatenate, Axis};

fn lasso_opts(ctx: &ScenarioContext, seed: u64) -> LassoOptions {
    LassoOptions {
        folds: ctx.config.folds,
        grid_len: ctx.config.lasso_grid,
        lambda_min_ratio: 1e-2,
        seed,
        rule: LambdaRule::CrossValidated,
    }
}

/// Model-X score assembly for one outcome: a fresh knockoff draw and a fresh
/// penalized fit per resolution.
pub fn model_x_scores(
    ctx: &ScenarioContext,
    data: &GeneratedData,
    seed: u64,
    outcome: usize,
) -> Result<KnockoffScores, SimError> {
    let mut per_resolution = Vec::with_capacity(ctx.family.n_resolutions());
    for m in 0..ctx.family.n_resolutions() {
        let kseed = mix_seed(mix_seed(mix_seed(seed, STREAM_KNOCKOFF), outcome as u64), m as u64);
        let lseed = mix_seed(mix_seed(mix_seed(seed, STREAM_LASSO), outcome as u64), m as u64);
        let xt = ctx.samplers[m].sample(&data.x.view(), kseed)?;
        let w = lasso_cv_statistics(
            &data.x.view(),
            &xt.view(),
            &data.ys[outcome],
            ctx.family.partition(m).groups(),
            data.response,
            &lasso_opts(ctx, lseed),
        )?;
        per_resolution.push(w);
    }
    Ok(KnockoffScores::new(&ctx.family, per_resolution)?)
}

/// Fixed-design score assembly: the knockoff copy is a deterministic function
/// of X, and one penalized fit feeds every layer's statistics.
pub fn fixed_equi_scores(
    ctx: &ScenarioContext,
    data: &GeneratedData,
    seed: u64,
) -> Result<KnockoffScores, SimError> {
    let fk = fixed_equi_knockoffs(&data.x.view())?;
    let augmented = concatenate(Axis(1), &[data.x.view(), fk.xtilde.view()])
        .expect("x and xtilde row counts match");
    let lseed = mix_seed(mix_seed(seed, STREAM_LASSO), 0);
    let fit = lasso_cv(&augmented.view(), &data.ys[0], data.response, &lasso_opts(ctx, lseed))?;
    let per_resolution = (0..ctx.family.n_resolutions())
        .map(|m| w_statistics(&fit.beta, ctx.family.partition(m).groups()))
        .collect();
    Ok(KnockoffScores::new(&ctx.family, per_resolution)?)
}

fn row(
    ctx: &ScenarioContext,
    pt: usize,
    rep: usize,
    seed: u64,
    method: String,
    snr: f64,
    scored: Scored,
) -> MetricsRow {
    MetricsRow {
        n_over_p: ctx.points[pt].n_over_p,
        replicate: rep,
        method,
        fdp: scored.fdp,
        power: scored.power,
        size: scored.size,
        precision: scored.precision,
        mean_group_size: scored.mean_group_size,
        realized_snr: snr,
        seed,
    }
}

/// Classical filter per resolution at level alpha; returns grefs per
/// resolution plus the pooled flat candidate ids.
fn per_resolution_filter(
    family: &HypothesisFamily,
    scores: &KnockoffScores,
    alpha: f64,
) -> Result<(Vec<Vec<GroupRef>>, Vec<usize>), SimError> {
    let mut per_res = Vec::with_capacity(family.n_resolutions());
    let mut flat = Vec::new();
    for m in 0..family.n_resolutions() {
        let picked = knockoff_filter(scores.resolution(m), alpha)?;
        let grefs: Vec<GroupRef> =
            picked.iter().map(|&g| GroupRef { resolution: m, group: g }).collect();
        flat.extend(grefs.iter().map(|&gref| family.flat_index(gref)));
        per_res.push(grefs);
    }
    Ok((per_res, flat))
}

/// Partial-conjunction truth: a group is null when fewer than u outcomes
/// carry signal inside it; a feature is non-null when it sits in at least u
/// outcome supports.
fn score_pc(
    family: &HypothesisFamily,
    rejected: &[GroupRef],
    supports: &[Vec<usize>],
    u: usize,
) -> Scored {
    let p = family.p();
    let mut outcome_hits = vec![0usize; p];
    for support in supports {
        for &j in support {
            outcome_hits[j] += 1;
        }
    }
    let group_nonnull = |gref: GroupRef| {
        let members = family.members(gref);
        let hits = supports
            .iter()
            .filter(|support| support.iter().any(|j| members.contains(j)))
            .count();
        hits >= u
    };
    let mut false_rejections = 0usize;
    let mut implicated = vec![false; p];
    let mut member_total = 0usize;
    for &gref in rejected {
        if !group_nonnull(gref) {
            false_rejections += 1;
        }
        for &j in family.members(gref) {
            implicated[j] = true;
        }
        member_total += family.members(gref).len();
    }
    let total_true = outcome_hits.iter().filter(|&&h| h >= u).count();
    let covered = (0..p).filter(|&j| implicated[j] && outcome_hits[j] >= u).count();
    Scored {
        fdp: false_rejections as f64 / rejected.len().max(1) as f64,
        power: if total_true == 0 { 0.0 } else { covered as f64 / total_true as f64 },
        size: implicated.iter().filter(|&&f| f).count() as f64,
        precision: None,
        mean_group_size: (!rejected.is_empty())
            .then(|| member_total as f64 / rejected.len() as f64),
    }
}

pub fn run_replicate(
    ctx: &ScenarioContext,
    pt: usize,
    rep: usize,
    seed: u64,
) -> Result<Vec<MetricsRow>, SimError> {
    let n = ctx.points[pt].n;
    let data = generate(ctx, n, seed)?;
    if matches!(ctx.config.design, DesignSpec::OutcomeTree { .. }) {
        return run_tree_replicate(ctx, pt, rep, seed, &data);
    }

    let alpha = ctx.config.alpha;
    let family = &ctx.family;
    let config = KelpConfig::with_policy(family, alpha, ctx.config.gamma.to_policy())?;

    let scores = match &ctx.config.design {
        DesignSpec::FixedEquiMlkf { .. } => fixed_equi_scores(ctx, &data, seed)?,
        _ => model_x_scores(ctx, &data, seed, 0)?,
    };
    let view = TruthView::SingleOutcome { support: &data.supports[0] };
    let snr = data.realized_snr;

    let mut rows = Vec::new();
    for &method in &ctx.config.methods {
        match method {
            MethodId::Kelp => {
                let run =
                    kelp_core::kelp::run_kelp(family, &scores, &config, SolverChoice::Auto)?;
                let scored = score(family, &run.solution.rejection.rejected, &view)?;
                rows.push(row(ctx, pt, rep, seed, "kelp".into(), snr, scored));
            }
            MethodId::KnockoffPerResolution => {
                let (per_res, _) = per_resolution_filter(family, &scores, alpha)?;
                for (m, grefs) in per_res.iter().enumerate() {
                    let scored = score(family, grefs, &view)?;
                    let label = format!("knockoffs-{}", family.partition(m).id());
                    rows.push(row(ctx, pt, rep, seed, label, snr, scored));
                }
            }
            MethodId::KnockoffsOuter => {
                let (_, flat) = per_resolution_filter(family, &scores, alpha)?;
                let outer = outer_nodes(family, &flat);
                let grefs: Vec<GroupRef> =
                    outer.iter().map(|&id| family.group_by_flat(id)).collect();
                let scored = score(family, &grefs, &view)?;
                rows.push(row(ctx, pt, rep, seed, "knockoffs-outer".into(), snr, scored));
            }
            MethodId::EbhKnockoffsOuter => {
                let (_, flat) = per_resolution_filter(family, &scores, alpha)?;
                let outer = outer_nodes(family, &flat);
                let table = knockoff_evalues(family, &scores, &config)?;
                let evalues = table.flat();
                let subset: Vec<f64> = outer.iter().map(|&id| evalues[id]).collect();
                // e-BH over the filtered set against the full group count,
                // which is the amended level alpha * |S| / |family|.
                let picked = ebh_indices(&subset, family.n_groups(), alpha)?;
                let grefs: Vec<GroupRef> =
                    picked.iter().map(|&i| family.group_by_flat(outer[i])).collect();
                let scored = score(family, &grefs, &view)?;
                rows.push(row(ctx, pt, rep, seed, "ebh-knockoffs-outer".into(), snr, scored));
            }
            MethodId::Efilter | MethodId::Emkf => {
                let levels = vec![alpha; family.n_resolutions()];
                let gammas = ctx.config.gamma.to_policy().resolve(family, alpha);
                let result = run_emkf(family, &scores, &levels, &gammas)?;
                for (m, layer) in result.filter.layer_rejections.iter().enumerate() {
                    let grefs: Vec<GroupRef> =
                        layer.iter().map(|&g| GroupRef { resolution: m, group: g }).collect();
                    let scored = score(family, &grefs, &view)?;
                    let label =
                        format!("{}-{}", method.as_str(), family.partition(m).id());
                    rows.push(row(ctx, pt, rep, seed, label, snr, scored));
                }
            }
            MethodId::PcKelp => {
                let (outcomes, u) = match &ctx.config.design {
                    DesignSpec::Ar1Global { outcomes, conjunction_u, .. } => {
                        (*outcomes, *conjunction_u)
                    }
                    _ => (1, 1),
                };
                let per_outcome: Vec<KnockoffScores> = (0..outcomes)
                    .map(|ell| model_x_scores(ctx, &data, seed, ell))
                    .collect::<Result<_, _>>()?;
                let run = run_partial_conjunction_kelp(
                    family,
                    &per_outcome,
                    u,
                    &config,
                    SolverChoice::Auto,
                    ConjunctionBudget::Strict,
                )?;
                let scored = score_pc(family, &run.solution.rejection.rejected, &data.supports, u);
                rows.push(row(ctx, pt, rep, seed, "pc-kelp".into(), snr, scored));
            }
        }
    }
    Ok(rows)
}

/// Outcome node of a tree-family group.
fn tree_node_of(gref: GroupRef) -> usize {
    match gref.resolution {
        0 => gref.group % 4,
        1 => 4 + gref.group % 2,
        _ => 6,
    }
}

/// Tree replicates: one knockoff filter per outcome node over the p features,
/// each with budget p, assembled into the (leaf, feature)-pair family whose
/// group count is the summed budget.
fn run_tree_replicate(
    ctx: &ScenarioContext,
    pt: usize,
    rep: usize,
    seed: u64,
    data: &GeneratedData,
) -> Result<Vec<MetricsRow>, SimError> {
    let alpha = ctx.config.alpha;
    let family = &ctx.family;
    let p = ctx.config.p;
    let singleton_groups: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
    let gammas = ctx.config.gamma.to_policy().resolve(family, alpha);
    let level_of_node = |node: usize| if node < 4 { 0 } else if node < 6 { 1 } else { 2 };

    let mut node_w: Vec<Vec<f64>> = Vec::with_capacity(TREE_NODES);
    for node in 0..TREE_NODES {
        let kseed = mix_seed(mix_seed(mix_seed(seed, STREAM_KNOCKOFF), node as u64), 0);
        let lseed = mix_seed(mix_seed(mix_seed(seed, STREAM_LASSO), node as u64), 0);
        let xt = ctx.samplers[0].sample(&data.x.view(), kseed)?;
        let w = lasso_cv_statistics(
            &data.x.view(),
            &xt.view(),
            &data.ys[node],
            &singleton_groups,
            data.response,
            &lasso_opts(ctx, lseed),
        )?;
        node_w.push(w);
    }
    let node_e: Vec<Vec<f64>> = (0..TREE_NODES)
        .map(|node| {
            knockoff_evalues_single(&node_w[node], gammas[level_of_node(node)], p as f64)
        })
        .collect::<Result<_, _>>()?;

    let leaves: Vec<f64> = (0..TREE_LEAVES * p).map(|g| node_e[g % 4][g / 4]).collect();
    let internal: Vec<f64> = (0..2 * p).map(|g| node_e[4 + g % 2][g / 2]).collect();
    let root: Vec<f64> = (0..p).map(|j| node_e[6][j]).collect();
    let table = EValueTable::new(
        family,
        vec![leaves.clone(), internal, root],
        Provenance::Knockoff,
        family.n_groups(),
    )?;

    let view = TruthView::Tree { leaf_supports: &data.supports };
    let snr = data.realized_snr;
    let mut rows = Vec::new();
    for &method in &ctx.config.methods {
        match method {
            MethodId::Kelp => {
                let problem = ElpProblem::new(family, &table, alpha)?;
                let solution = problem.solve(SolverChoice::Auto)?;
                let scored = score(family, &solution.rejection.rejected, &view)?;
                rows.push(row(ctx, pt, rep, seed, "kelp".into(), snr, scored));
            }
            MethodId::KnockoffPerResolution => {
                // Pool the per-node classical filters of each tree level.
                for m in 0..family.n_resolutions() {
                    let mut grefs = Vec::new();
                    for g in 0..family.partition(m).len() {
                        let gref = GroupRef { resolution: m, group: g };
                        let node = tree_node_of(gref);
                        let feature = family.members(gref)[0] / 4;
                        let picked = knockoff_filter(&node_w[node], alpha)?;
                        if picked.contains(&feature) {
                            grefs.push(gref);
                        }
                    }
                    let scored = score(family, &grefs, &view)?;
                    let label = format!("knockoffs-{}", family.partition(m).id());
                    rows.push(row(ctx, pt, rep, seed, label, snr, scored));
                }
            }
            MethodId::KnockoffsOuter => {
                let mut flat = Vec::new();
                for m in 0..family.n_resolutions() {
                    for g in 0..family.partition(m).len() {
                        let gref = GroupRef { resolution: m, group: g };
                        let node = tree_node_of(gref);
                        let feature = family.members(gref)[0] / 4;
                        if knockoff_filter(&node_w[node], alpha)?.contains(&feature) {
                            flat.push(family.flat_index(gref));
                        }
                    }
                }
                let outer = outer_nodes(family, &flat);
                let grefs: Vec<GroupRef> =
                    outer.iter().map(|&id| family.group_by_flat(id)).collect();
                let scored = score(family, &grefs, &view)?;
                rows.push(row(ctx, pt, rep, seed, "knockoffs-outer".into(), snr, scored));
            }
            MethodId::EbhKnockoffsOuter => {
                // Leaf-layer e-BH: the four leaf filters' budgets sum to the
                // leaf group count, so this is plain e-BH at level alpha.
                let picked = ebh_indices(&leaves, TREE_LEAVES * p, alpha)?;
                let grefs: Vec<GroupRef> =
                    picked.iter().map(|&g| GroupRef { resolution: 0, group: g }).collect();
                let scored = score(family, &grefs, &view)?;
                rows.push(row(ctx, pt, rep, seed, "ebh-knockoffs-leaves".into(), snr, scored));
            }
            _ => unreachable!("validated at config load"),
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::{AmplitudeLaw, GammaSpec, ScenarioConfig};

    #[test]
    fn pc_scoring_counts_conjunction_nulls() {
        let family = HypothesisFamily::new(
            6,
            vec![kelp_core::family::PartitionSpec::new(
                "individual",
                (0..6).map(|j| vec![j]).collect(),
            )],
        )
        .unwrap();
        let supports = vec![vec![0, 1], vec![1, 2]];
        // u = 2: only feature 1 is non-null.
        let rejected = [
            GroupRef { resolution: 0, group: 1 },
            GroupRef { resolution: 0, group: 0 },
        ];
        let s = score_pc(&family, &rejected, &supports, 2);
        assert_eq!(s.fdp, 0.5);
        assert_eq!(s.power, 1.0);
        assert_eq!(s.size, 2.0);
        // u = 1: features 0, 1, 2 are non-null.
        let s1 = score_pc(&family, &rejected, &supports, 1);
        assert_eq!(s1.fdp, 0.0);
        assert!((s1.power - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_resolution_kelp_matches_classical_filter() {
        // With one resolution, budget |A|, and gamma = alpha, the selection
        // program reduces to the classical knockoff filter.
        let p = 12;
        let config = ScenarioConfig {
            design: DesignSpec::BlockAr1 { block: 3, rho: 0.4, resolutions: vec![1] },
            p,
            n_over_p: vec![8.0],
            sparsity: 0.25,
            amplitude: AmplitudeLaw::Gaussian { tau: 1.5, floor_frac: 0.1 },
            methods: vec![MethodId::Kelp, MethodId::KnockoffPerResolution],
            alpha: 0.25,
            gamma: GammaSpec::Fixed(0.25),
            replicates: 1,
            seed: 11,
            folds: 4,
            lasso_grid: 25,
        };
        let ctx = ScenarioContext::new(config).unwrap();
        for rep in 0..3 {
            let seed = crate::simlab::replicate_seed(ctx.config.seed, 0, rep);
            let rows = run_replicate(&ctx, 0, rep, seed).unwrap();
            assert_eq!(rows.len(), 2);
            assert_eq!(rows[0].method, "kelp");
            assert_eq!(rows[1].method, "knockoffs-individual");
            assert_eq!(rows[0].size, rows[1].size, "replicate {rep} diverged");
            assert_eq!(rows[0].fdp, rows[1].fdp);
            assert_eq!(rows[0].power, rows[1].power);
        }
    }

    #[test]
    fn replicate_rows_are_deterministic() {
        let config = ScenarioConfig {
            design: DesignSpec::BlockAr1 { block: 4, rho: 0.5, resolutions: vec![1, 4] },
            p: 16,
            n_over_p: vec![6.0],
            sparsity: 0.2,
            amplitude: AmplitudeLaw::Gaussian { tau: 1.0, floor_frac: 0.1 },
            methods: vec![
                MethodId::Kelp,
                MethodId::KnockoffPerResolution,
                MethodId::KnockoffsOuter,
                MethodId::EbhKnockoffsOuter,
                MethodId::Efilter,
            ],
            alpha: 0.2,
            gamma: GammaSpec::Moderate,
            replicates: 1,
            seed: 3,
            folds: 4,
            lasso_grid: 20,
        };
        let ctx = ScenarioContext::new(config).unwrap();
        let seed = crate::simlab::replicate_seed(3, 0, 0);
        let a = run_replicate(&ctx, 0, 0, seed).unwrap();
        let b = run_replicate(&ctx, 0, 0, seed).unwrap();
        assert_eq!(a.len(), b.len());
        // kelp + 2 per-resolution + outer + ebh-outer + 2 efilter layers.
        assert_eq!(a.len(), 7);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.method, rb.method);
            assert_eq!(ra.fdp, rb.fdp);
            assert_eq!(ra.power, rb.power);
            assert_eq!(ra.size, rb.size);
        }
    }

    #[test]
    fn tree_replicate_emits_all_roster_rows() {
        let config = ScenarioConfig {
            design: DesignSpec::OutcomeTree { rho: 0.3 },
            p: 20,
            n_over_p: vec![10.0],
            sparsity: 0.15,
            amplitude: AmplitudeLaw::GaussianShifted { mu: 1.0, tau: 0.5 },
            methods: vec![MethodId::Kelp, MethodId::EbhKnockoffsOuter],
            alpha: 0.2,
            gamma: GammaSpec::Moderate,
            replicates: 1,
            seed: 21,
            folds: 4,
            lasso_grid: 15,
        };
        let ctx = ScenarioContext::new(config).unwrap();
        assert_eq!(ctx.family.n_groups(), 7 * 20);
        let seed = crate::simlab::replicate_seed(21, 0, 0);
        let rows = run_replicate(&ctx, 0, 0, seed).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, "kelp");
        assert_eq!(rows[1].method, "ebh-knockoffs-leaves");
        for r in &rows {
            assert!(r.precision.is_some());
            assert!(r.fdp >= 0.0 && r.fdp <= 1.0);
        }
    }
}
