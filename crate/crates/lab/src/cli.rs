//! Command-line surface. Each subcommand binds a selection procedure to the
//! file formats; outputs are pure functions of (inputs, flags, seed), with no
//! timestamps or machine identifiers, so reruns are byte-identical.

use crate::files::{self, FilesError};
use crate::simlab::{self, GammaSpec, ScenarioConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kelp_core::elp::{focused_ebh, OuterNodeFilter, SolverChoice, DEFAULT_NODE_BUDGET};
use kelp_core::evalue::{ebh_indices, EValueTable, Provenance, RejectionSet};
use kelp_core::family::{GroupRef, HypothesisFamily};
use kelp_core::kelp::{
    efilter, knockoff_evalues_single, run_kelp, run_partial_conjunction_kelp, ConjunctionBudget,
    KelpConfig, KnockoffScores,
};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Debug)]
enum CliError {
    Files(FilesError),
    Invalid(String),
}

impl From<FilesError> for CliError {
    fn from(e: FilesError) -> Self {
        CliError::Files(e)
    }
}

impl CliError {
    fn invalid(e: impl std::fmt::Display) -> Self {
        CliError::Invalid(e.to_string())
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Files(e) => e.kind(),
            CliError::Invalid(_) => "validation",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Files(e) => e.to_string(),
            CliError::Invalid(m) => m.clone(),
        }
    }
}

fn parse_gamma(s: &str) -> Result<GammaSpec, String> {
    match s {
        "moderate" => Ok(GammaSpec::Moderate),
        "highdim" => Ok(GammaSpec::HighDim),
        "graded" => Ok(GammaSpec::Graded),
        _ => s
            .parse::<f64>()
            .map(GammaSpec::Fixed)
            .map_err(|_| format!("expected moderate|highdim|graded or a number, got `{s}`")),
    }
}

#[derive(Clone, Debug)]
enum CPolicy {
    Uniform,
    List(Vec<f64>),
}

fn parse_c_policy(s: &str) -> Result<CPolicy, String> {
    if s == "uniform" {
        return Ok(CPolicy::Uniform);
    }
    s.split(',')
        .map(|tok| tok.trim().parse::<f64>().map_err(|_| format!("bad budget entry `{tok}`")))
        .collect::<Result<Vec<f64>, _>>()
        .map(CPolicy::List)
}

/// Newtype so clap reads one comma-separated token, not repeated values.
#[derive(Clone, Debug)]
struct Levels(Vec<f64>);

fn parse_alpha_list(s: &str) -> Result<Levels, String> {
    s.split(',')
        .map(|tok| tok.trim().parse::<f64>().map_err(|_| format!("bad level `{tok}`")))
        .collect::<Result<Vec<f64>, String>>()
        .map(Levels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Auto,
    Exact,
    Dp,
    Bnb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WeightsArg {
    /// Honor the weights in the family document (inverse size where absent).
    File,
    /// Ignore document weights; every group weighs 1/|A|.
    InverseSize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BudgetArg {
    /// Budget scaled down so control holds at the nominal level.
    Strict,
    /// Full budget; control holds at an inflated, reported level.
    OptOut,
}

#[derive(Args, Debug)]
struct SelectionFlags {
    /// Target false discovery rate.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Stopping-level rule: moderate|highdim|graded or an explicit value.
    #[arg(long, default_value = "moderate", value_parser = parse_gamma)]
    gamma: GammaSpec,
    /// E-value budget per resolution: `uniform` or a comma list.
    #[arg(long, default_value = "uniform", value_parser = parse_c_policy)]
    c_policy: CPolicy,
    #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
    solver: SolverArg,
    /// Search budget for the branch-and-bound solver.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: u64,
    #[arg(long, value_enum, default_value_t = WeightsArg::File)]
    weights: WeightsArg,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

impl SelectionFlags {
    fn solver_choice(&self) -> SolverChoice {
        match self.solver {
            SolverArg::Auto => SolverChoice::Auto,
            SolverArg::Exact => SolverChoice::Exact,
            SolverArg::Dp => SolverChoice::IntervalDp,
            SolverArg::Bnb => SolverChoice::BranchBound { node_budget: self.node_budget },
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "kelp",
    version,
    about = "Multi-resolution e-value selection: knockoff-powered group discovery with FDR control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select groups across resolutions from knockoff W scores.
    Kelp {
        /// Family document (JSON).
        #[arg(long)]
        family: PathBuf,
        /// W-score CSV covering every group.
        #[arg(long)]
        scores: PathBuf,
        /// Holdout W-score CSV; picks gamma from {a, a/2, a/4, a/8} by
        /// maximizing holdout rejections, ties to the larger value.
        #[arg(long)]
        tune_on: Option<PathBuf>,
        #[command(flatten)]
        flags: SelectionFlags,
    },
    /// e-BH over every group of the family from raw e-values.
    Ebh {
        #[arg(long)]
        family: PathBuf,
        /// E-value CSV covering every group.
        #[arg(long)]
        evalues: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold scan with the outer-node focus filter.
    FocusedEbh {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        evalues: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = WeightsArg::File)]
        weights: WeightsArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multilayer e-value filter on raw per-layer e-values.
    Efilter {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        evalues: PathBuf,
        /// Per-layer levels: one value for all layers or a comma list.
        #[arg(long, default_value = "0.1", value_parser = parse_alpha_list)]
        alpha: Levels,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multilayer knockoff filter from W scores (per-layer budgets).
    Emkf {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// Per-layer levels: one value for all layers or a comma list.
        #[arg(long, default_value = "0.1", value_parser = parse_alpha_list)]
        alpha: Levels,
        /// Stopping level for every layer; defaults to each layer's level.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partial-conjunction selection across outcomes (one W file each).
    PcKelp {
        #[arg(long)]
        family: PathBuf,
        /// W-score CSV per outcome; repeat the flag.
        #[arg(long, required = true)]
        scores: Vec<PathBuf>,
        /// Conjunction order: reject when at least u outcomes carry signal.
        #[arg(long, default_value_t = 1)]
        u: usize,
        #[arg(long, value_enum, default_value_t = BudgetArg::Strict)]
        budget: BudgetArg,
        #[command(flatten)]
        flags: SelectionFlags,
    },
    /// Run a simulation sweep from a scenario document.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to KELP_THREADS, then 1.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check inputs: partition invariants, budget, e-value sign.
    Validate {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        evalues: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value = "uniform", value_parser = parse_c_policy)]
        c_policy: CPolicy,
    },
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            print!("{}", files::error_report(e.kind(), &e.message()));
            2
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Kelp { family, scores, tune_on, flags } => {
            cmd_kelp(&family, &scores, tune_on.as_deref(), &flags)
        }
        Command::Ebh { family, evalues, alpha, out } => cmd_ebh(&family, &evalues, alpha, &out),
        Command::FocusedEbh { family, evalues, alpha, weights, out } => {
            cmd_focused_ebh(&family, &evalues, alpha, weights, &out)
        }
        Command::Efilter { family, evalues, alpha, out } => {
            cmd_efilter(&family, &evalues, &alpha.0, &out)
        }
        Command::Emkf { family, scores, alpha, gamma, out } => {
            cmd_emkf(&family, &scores, &alpha.0, gamma, &out)
        }
        Command::PcKelp { family, scores, u, budget, flags } => {
            cmd_pc_kelp(&family, &scores, u, budget, &flags)
        }
        Command::Simulate { scenario, replicates, seed, threads, out } => {
            cmd_simulate(&scenario, replicates, seed, threads, &out)
        }
        Command::Validate { family, evalues, scores, c_policy } => {
            cmd_validate(&family, evalues.as_deref(), scores.as_deref(), &c_policy)
        }
    }
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| {
        CliError::Files(FilesError::Io { path: dir.display().to_string(), source })
    })
}

fn json_f64(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn resolve_c(policy: &CPolicy, family: &HypothesisFamily) -> Result<Vec<f64>, CliError> {
    match policy {
        CPolicy::Uniform => {
            let m = family.n_resolutions();
            Ok(vec![family.n_groups() as f64 / m as f64; m])
        }
        CPolicy::List(v) => {
            if v.len() != family.n_resolutions() {
                return Err(CliError::Invalid(format!(
                    "c-policy lists {} budgets for {} resolutions",
                    v.len(),
                    family.n_resolutions()
                )));
            }
            Ok(v.clone())
        }
    }
}

fn expand_levels(levels: &[f64], n_layers: usize) -> Result<Vec<f64>, CliError> {
    match levels.len() {
        1 => Ok(vec![levels[0]; n_layers]),
        n if n == n_layers => Ok(levels.to_vec()),
        n => Err(CliError::Invalid(format!("{n} levels given for {n_layers} layers"))),
    }
}

fn rejection_lines(
    family: &HypothesisFamily,
    rejected: &[GroupRef],
    evalue_of: &dyn Fn(GroupRef) -> f64,
) -> String {
    let mut sorted = rejected.to_vec();
    sorted.sort_by_key(|gref| (gref.resolution, gref.group));
    let mut out = String::new();
    for gref in sorted {
        let members = family
            .members(gref)
            .iter()
            .map(|&j| (j + 1).to_string())
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "  {} group {} {{{}}} e={} w={}\n",
            family.partition(gref.resolution).id(),
            gref.group + 1,
            members,
            evalue_of(gref),
            family.weight(gref),
        ));
    }
    out
}

fn write_selection_outputs(
    out: &Path,
    family: &HypothesisFamily,
    rejected: &[GroupRef],
    evalue_of: &dyn Fn(GroupRef) -> f64,
    certificate: &serde_json::Value,
    summary: &str,
) -> Result<(), CliError> {
    ensure_out(out)?;
    files::write_text(&out.join("rejections.csv"), &files::rejections_csv(family, rejected, evalue_of))?;
    files::write_json(&out.join("certificate.json"), certificate)?;
    files::write_text(&out.join("summary.txt"), summary)?;
    Ok(())
}

fn family_line(family: &HypothesisFamily) -> String {
    format!(
        "family: {} resolutions, {} groups over {} base hypotheses",
        family.n_resolutions(),
        family.n_groups(),
        family.p()
    )
}

fn tune_gamma(
    family: &HypothesisFamily,
    scores: &KnockoffScores,
    alpha: f64,
    c: &[f64],
    solver: SolverChoice,
) -> Result<(f64, Vec<(f64, usize)>), CliError> {
    let grid = [alpha, alpha / 2.0, alpha / 4.0, alpha / 8.0];
    let mut best = (grid[0], 0usize);
    let mut trace = Vec::with_capacity(grid.len());
    for &gamma in &grid {
        let config =
            KelpConfig::new(family, alpha, c.to_vec(), vec![gamma; family.n_resolutions()])
                .map_err(CliError::invalid)?;
        let run = run_kelp(family, scores, &config, solver).map_err(CliError::invalid)?;
        let count = run.solution.rejection.rejected.len();
        trace.push((gamma, count));
        // Descending grid, strict improvement: ties go to the larger gamma.
        if count > best.1 {
            best = (gamma, count);
        }
    }
    Ok((best.0, trace))
}

fn cmd_kelp(
    family_path: &Path,
    scores_path: &Path,
    tune_on: Option<&Path>,
    flags: &SelectionFlags,
) -> Result<i32, CliError> {
    let family = files::load_family_opts(family_path, flags.weights == WeightsArg::File)?;
    let w = files::load_scores(scores_path, &family, "w")?;
    let scores = KnockoffScores::new(&family, w).map_err(CliError::invalid)?;
    let c = resolve_c(&flags.c_policy, &family)?;
    let solver = flags.solver_choice();

    let mut tuned: Option<(f64, Vec<(f64, usize)>)> = None;
    let gamma = if let Some(holdout_path) = tune_on {
        let holdout_w = files::load_scores(holdout_path, &family, "w")?;
        let holdout = KnockoffScores::new(&family, holdout_w).map_err(CliError::invalid)?;
        let (g, trace) = tune_gamma(&family, &holdout, flags.alpha, &c, solver)?;
        tuned = Some((g, trace));
        vec![g; family.n_resolutions()]
    } else {
        flags.gamma.to_policy().resolve(&family, flags.alpha)
    };

    let config =
        KelpConfig::new(&family, flags.alpha, c, gamma).map_err(CliError::invalid)?;
    let run = run_kelp(&family, &scores, &config, solver).map_err(CliError::invalid)?;
    let rejection = &run.solution.rejection;
    let evalue_of = |gref: GroupRef| run.table.value(gref);

    let mut certificate = json!({
        "procedure": "kelp",
        "alpha": flags.alpha,
        "n_total": family.n_groups(),
        "c": config.c,
        "gamma": config.gamma,
        "stopping_times": run.stopping_times.iter().map(|&t| json_f64(t)).collect::<Vec<_>>(),
        "solver": run.solution.solver.as_str(),
        "optimal": run.solution.optimal,
        "objective": run.solution.objective,
        "threshold": json_f64(run.solution.threshold),
        "rejected": rejection.certificate.n_rejected,
        "required_threshold": json_f64(rejection.certificate.required_threshold),
        "min_rejected_evalue": json_f64(rejection.certificate.min_rejected_evalue),
        "self_consistent": rejection.certificate.consistent,
        "disjoint": rejection.disjoint,
    });
    if let Some((g, trace)) = &tuned {
        certificate["tuned_gamma"] = json!(g);
        certificate["tuning_trace"] = json!(trace
            .iter()
            .map(|(gamma, count)| json!({ "gamma": gamma, "rejections": count }))
            .collect::<Vec<_>>());
    }

    let stopping = (0..family.n_resolutions())
        .map(|m| format!("{} {}", family.partition(m).id(), run.stopping_times[m]))
        .collect::<Vec<_>>()
        .join(", ");
    let mut summary = format!(
        "KeLP selection at alpha {}\n{}\ngamma: {}\nbudget: {} (total {} of {})\nstopping times: {}\nrejected {} of {} groups; objective {}; solver {}{}\n",
        flags.alpha,
        family_line(&family),
        config.gamma.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", "),
        config.c.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "),
        config.budget_total(),
        family.n_groups(),
        stopping,
        rejection.rejected.len(),
        family.n_groups(),
        run.solution.objective,
        run.solution.solver.as_str(),
        if run.solution.optimal { "" } else { " (search truncated)" },
    );
    if let Some((g, _)) = &tuned {
        summary.push_str(&format!("tuned gamma: {g}\n"));
    }
    summary.push_str(&rejection_lines(&family, &rejection.rejected, &evalue_of));

    write_selection_outputs(&flags.out, &family, &rejection.rejected, &evalue_of, &certificate, &summary)?;
    println!(
        "kelp: rejected {} of {} groups; reports in {}",
        rejection.rejected.len(),
        family.n_groups(),
        flags.out.display()
    );
    Ok(0)
}

fn cmd_ebh(
    family_path: &Path,
    evalues_path: &Path,
    alpha: f64,
    out: &Path,
) -> Result<i32, CliError> {
    let family = files::load_family(family_path)?;
    let values = files::load_scores(evalues_path, &family, "evalue")?;
    let table = EValueTable::new(&family, values, Provenance::Raw, family.n_groups())
        .map_err(CliError::invalid)?;
    let flat = table.flat();
    let picked = ebh_indices(&flat, family.n_groups(), alpha).map_err(CliError::invalid)?;
    let rejection = RejectionSet::from_flat(&family, &flat, &picked, alpha, family.n_groups())
        .map_err(CliError::invalid)?;
    let evalue_of = |gref: GroupRef| table.value(gref);

    let certificate = json!({
        "procedure": "ebh",
        "alpha": alpha,
        "n_total": family.n_groups(),
        "rejected": rejection.certificate.n_rejected,
        "required_threshold": json_f64(rejection.certificate.required_threshold),
        "min_rejected_evalue": json_f64(rejection.certificate.min_rejected_evalue),
        "self_consistent": rejection.certificate.consistent,
        "disjoint": rejection.disjoint,
    });
    let summary = format!(
        "e-BH at alpha {}\n{}\nrejected {} of {} groups\n{}",
        alpha,
        family_line(&family),
        rejection.rejected.len(),
        family.n_groups(),
        rejection_lines(&family, &rejection.rejected, &evalue_of),
    );
    write_selection_outputs(out, &family, &rejection.rejected, &evalue_of, &certificate, &summary)?;
    println!(
        "ebh: rejected {} of {} groups; reports in {}",
        rejection.rejected.len(),
        family.n_groups(),
        out.display()
    );
    Ok(0)
}

fn cmd_focused_ebh(
    family_path: &Path,
    evalues_path: &Path,
    alpha: f64,
    weights: WeightsArg,
    out: &Path,
) -> Result<i32, CliError> {
    let family = files::load_family_opts(family_path, weights == WeightsArg::File)?;
    let values = files::load_scores(evalues_path, &family, "evalue")?;
    let table = EValueTable::new(&family, values, Provenance::Raw, family.n_groups())
        .map_err(CliError::invalid)?;
    let result =
        focused_ebh(&family, &table, alpha, &OuterNodeFilter).map_err(CliError::invalid)?;
    let rejection = &result.rejection;
    let evalue_of = |gref: GroupRef| table.value(gref);

    let certificate = json!({
        "procedure": "focused-ebh",
        "alpha": alpha,
        "n_total": family.n_groups(),
        "filter": "outer-nodes",
        "t_star": json_f64(result.t_star),
        "rejected": rejection.certificate.n_rejected,
        "required_threshold": json_f64(rejection.certificate.required_threshold),
        "min_rejected_evalue": json_f64(rejection.certificate.min_rejected_evalue),
        "self_consistent": rejection.certificate.consistent,
        "disjoint": rejection.disjoint,
    });
    let summary = format!(
        "Focused e-BH (outer-node filter) at alpha {}\n{}\nwinning threshold {}\nrejected {} of {} groups\n{}",
        alpha,
        family_line(&family),
        result.t_star,
        rejection.rejected.len(),
        family.n_groups(),
        rejection_lines(&family, &rejection.rejected, &evalue_of),
    );
    write_selection_outputs(out, &family, &rejection.rejected, &evalue_of, &certificate, &summary)?;
    println!(
        "focused-ebh: rejected {} of {} groups; reports in {}",
        rejection.rejected.len(),
        family.n_groups(),
        out.display()
    );
    Ok(0)
}

fn efilter_outputs(
    procedure: &str,
    family: &HypothesisFamily,
    layer_evalues: &[Vec<f64>],
    levels: &[f64],
    result: &kelp_core::kelp::EfilterResult,
    extra: serde_json::Value,
    out: &Path,
) -> Result<(), CliError> {
    let rejected: Vec<GroupRef> = result
        .layer_rejections
        .iter()
        .enumerate()
        .flat_map(|(m, groups)| {
            groups.iter().map(move |&g| GroupRef { resolution: m, group: g })
        })
        .collect();
    let evalue_of = |gref: GroupRef| layer_evalues[gref.resolution][gref.group];

    let mut certificate = json!({
        "procedure": procedure,
        "levels": levels,
        "thresholds": result.thresholds.thresholds.iter().map(|&t| json_f64(t)).collect::<Vec<_>>(),
        "selected_features": result.selected_features.iter().map(|&j| j + 1).collect::<Vec<_>>(),
        "layer_rejected": result.layer_rejections.iter().map(|r| r.len()).collect::<Vec<_>>(),
    });
    if let serde_json::Value::Object(extra) = extra {
        if let serde_json::Value::Object(cert) = &mut certificate {
            cert.extend(extra);
        }
    }

    let per_layer = (0..family.n_resolutions())
        .map(|m| {
            format!(
                "layer {}: level {}, threshold {}, rejected {}",
                family.partition(m).id(),
                levels[m],
                result.thresholds.thresholds[m],
                result.layer_rejections[m].len()
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let summary = format!(
        "{procedure} selection\n{}\n{}\nselected {} base features\n{}",
        family_line(family),
        per_layer,
        result.selected_features.len(),
        rejection_lines(family, &rejected, &evalue_of),
    );
    write_selection_outputs(out, family, &rejected, &evalue_of, &certificate, &summary)?;
    println!(
        "{procedure}: selected {} base features; reports in {}",
        result.selected_features.len(),
        out.display()
    );
    Ok(())
}

fn cmd_efilter(
    family_path: &Path,
    evalues_path: &Path,
    alpha: &[f64],
    out: &Path,
) -> Result<i32, CliError> {
    let family = files::load_family(family_path)?;
    let values = files::load_scores(evalues_path, &family, "evalue")?;
    let levels = expand_levels(alpha, family.n_resolutions())?;
    let result = efilter(&family, &values, &levels).map_err(CliError::invalid)?;
    efilter_outputs("efilter", &family, &values, &levels, &result, json!({}), out)?;
    Ok(0)
}

fn cmd_emkf(
    family_path: &Path,
    scores_path: &Path,
    alpha: &[f64],
    gamma: Option<f64>,
    out: &Path,
) -> Result<i32, CliError> {
    let family = files::load_family(family_path)?;
    let w = files::load_scores(scores_path, &family, "w")?;
    let scores = KnockoffScores::new(&family, w).map_err(CliError::invalid)?;
    let levels = expand_levels(alpha, family.n_resolutions())?;
    // The canonical stopping level for the multilayer filter is the layer's
    // own target level; an explicit --gamma overrides every layer.
    let gammas: Vec<f64> = match gamma {
        Some(g) => vec![g; family.n_resolutions()],
        None => levels.clone(),
    };
    let result =
        kelp_core::kelp::run_emkf(&family, &scores, &levels, &gammas).map_err(CliError::invalid)?;
    let layer_evalues: Vec<Vec<f64>> = (0..family.n_resolutions())
        .map(|m| {
            knockoff_evalues_single(
                scores.resolution(m),
                gammas[m],
                family.partition(m).len() as f64,
            )
            .map_err(CliError::invalid)
        })
        .collect::<Result<_, _>>()?;
    let extra = json!({
        "gamma": gammas,
        "stopping_times": result.stopping_times.iter().map(|&t| json_f64(t)).collect::<Vec<_>>(),
    });
    efilter_outputs("emkf", &family, &layer_evalues, &levels, &result.filter, extra, out)?;
    Ok(0)
}

fn cmd_pc_kelp(
    family_path: &Path,
    scores_paths: &[PathBuf],
    u: usize,
    budget: BudgetArg,
    flags: &SelectionFlags,
) -> Result<i32, CliError> {
    let family = files::load_family_opts(family_path, flags.weights == WeightsArg::File)?;
    let per_outcome: Vec<KnockoffScores> = scores_paths
        .iter()
        .map(|path| {
            let w = files::load_scores(path, &family, "w")?;
            KnockoffScores::new(&family, w).map_err(CliError::invalid)
        })
        .collect::<Result<_, _>>()?;
    let c = resolve_c(&flags.c_policy, &family)?;
    let gamma = flags.gamma.to_policy().resolve(&family, flags.alpha);
    let config = KelpConfig::new(&family, flags.alpha, c, gamma).map_err(CliError::invalid)?;
    let budget_mode = match budget {
        BudgetArg::Strict => ConjunctionBudget::Strict,
        BudgetArg::OptOut => ConjunctionBudget::OptOut,
    };
    let run = run_partial_conjunction_kelp(
        &family,
        &per_outcome,
        u,
        &config,
        flags.solver_choice(),
        budget_mode,
    )
    .map_err(CliError::invalid)?;
    let rejection = &run.solution.rejection;
    let evalue_of = |gref: GroupRef| run.table.value(gref);

    let certificate = json!({
        "procedure": "pc-kelp",
        "alpha": flags.alpha,
        "u": run.u,
        "n_outcomes": run.n_outcomes,
        "budget": match budget { BudgetArg::Strict => "strict", BudgetArg::OptOut => "opt-out" },
        "control_level": run.control_level,
        "n_total": family.n_groups(),
        "c": config.c,
        "gamma": config.gamma,
        "solver": run.solution.solver.as_str(),
        "optimal": run.solution.optimal,
        "objective": run.solution.objective,
        "rejected": rejection.certificate.n_rejected,
        "required_threshold": json_f64(rejection.certificate.required_threshold),
        "min_rejected_evalue": json_f64(rejection.certificate.min_rejected_evalue),
        "self_consistent": rejection.certificate.consistent,
        "disjoint": rejection.disjoint,
    });
    let summary = format!(
        "Partial-conjunction KeLP (u = {} of {} outcomes, {} budget)\nalpha {}; control holds at level {}\n{}\nrejected {} of {} groups\n{}",
        run.u,
        run.n_outcomes,
        match budget { BudgetArg::Strict => "strict", BudgetArg::OptOut => "opt-out" },
        flags.alpha,
        run.control_level,
        family_line(&family),
        rejection.rejected.len(),
        family.n_groups(),
        rejection_lines(&family, &rejection.rejected, &evalue_of),
    );
    write_selection_outputs(&flags.out, &family, &rejection.rejected, &evalue_of, &certificate, &summary)?;
    println!(
        "pc-kelp: rejected {} of {} groups; reports in {}",
        rejection.rejected.len(),
        family.n_groups(),
        flags.out.display()
    );
    Ok(0)
}

fn default_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("KELP_THREADS").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

fn cmd_simulate(
    scenario_path: &Path,
    replicates: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: &Path,
) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(scenario_path).map_err(|source| {
        CliError::Files(FilesError::Io { path: scenario_path.display().to_string(), source })
    })?;
    let mut config: ScenarioConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Files(FilesError::Format {
            path: scenario_path.display().to_string(),
            message: format!("scenario document: {e}"),
        })
    })?;
    if let Some(r) = replicates {
        config.replicates = r;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let output = simlab::replicate_sweep(&config, default_threads(threads))
        .map_err(CliError::invalid)?;

    ensure_out(out)?;
    files::write_text(&out.join("replicates.csv"), &files::replicates_csv(&output.rows))?;
    files::write_text(&out.join("summary.csv"), &files::summary_csv(&output.summary))?;
    files::write_text(&out.join("failures.csv"), &files::failures_csv(&output.failures))?;
    files::write_json(&out.join("meta.json"), &output.meta)?;

    println!("{:<28} {:>8} {:<14} {:>10} {:>10}", "method", "n/p", "metric", "mean", "se");
    for row in &output.summary {
        println!(
            "{:<28} {:>8} {:<14} {:>10.4} {:>10.4}",
            row.method, row.n_over_p, row.metric, row.mean, row.se
        );
    }
    if !output.failures.is_empty() {
        println!(
            "{} replicate runs failed ({:.1}%)",
            output.failures.len(),
            100.0 * output.failure_fraction
        );
    }
    if output.failure_fraction > 0.05 {
        println!("failure fraction exceeds 5%; outputs written but flagged");
        return Ok(3);
    }
    Ok(0)
}

fn cmd_validate(
    family_path: &Path,
    evalues: Option<&Path>,
    scores: Option<&Path>,
    c_policy: &CPolicy,
) -> Result<i32, CliError> {
    let mut failed = false;
    let mut report = |rule: &str, result: Result<String, String>| match result {
        Ok(msg) => println!("ok: {rule}: {msg}"),
        Err(msg) => {
            failed = true;
            println!("fail: {rule}: {msg}");
        }
    };

    let family = match files::load_family(family_path) {
        Ok(family) => {
            report(
                "partitions",
                Ok(format!(
                    "{} resolutions, {} groups over {} base hypotheses",
                    family.n_resolutions(),
                    family.n_groups(),
                    family.p()
                )),
            );
            Some(family)
        }
        Err(e) => {
            report("partitions", Err(e.to_string()));
            None
        }
    };

    if let Some(family) = &family {
        match resolve_c(c_policy, family) {
            Ok(c) => {
                let total: f64 = c.iter().sum();
                let cap = family.n_groups() as f64;
                if total <= cap + 1e-9 {
                    report("budget", Ok(format!("total {total} within the group count {cap}")));
                } else {
                    report(
                        "budget",
                        Err(format!(
                            "total {total} exceeds the family group count {cap}; the budget must not exceed the number of groups"
                        )),
                    );
                }
            }
            Err(e) => report("budget", Err(e.message())),
        }

        if let Some(path) = evalues {
            match files::load_scores(path, family, "evalue") {
                Ok(values) => {
                    let bad = values.iter().enumerate().find_map(|(m, column)| {
                        column.iter().enumerate().find_map(|(g, &v)| {
                            (v.is_nan() || v < 0.0).then_some((m, g, v))
                        })
                    });
                    match bad {
                        None => report("evalues", Ok("all nonnegative".to_string())),
                        Some((m, g, v)) => report(
                            "evalues",
                            Err(format!(
                                "({}, {}) has value {v}; e-values must be nonnegative",
                                family.partition(m).id(),
                                g + 1
                            )),
                        ),
                    }
                }
                Err(e) => report("evalues", Err(e.to_string())),
            }
        }

        if let Some(path) = scores {
            match files::load_scores(path, family, "w") {
                Ok(values) => {
                    let bad = values.iter().enumerate().find_map(|(m, column)| {
                        column.iter().enumerate().find_map(|(g, &v)| {
                            (!v.is_finite()).then_some((m, g, v))
                        })
                    });
                    match bad {
                        None => report("scores", Ok("all finite".to_string())),
                        Some((m, g, v)) => report(
                            "scores",
                            Err(format!(
                                "({}, {}) has value {v}; scores must be finite",
                                family.partition(m).id(),
                                g + 1
                            )),
                        ),
                    }
                }
                Err(e) => report("scores", Err(e.to_string())),
            }
        }
    }

    if failed {
        Ok(2)
    } else {
        println!("all checks passed");
        Ok(0)
    }
}
