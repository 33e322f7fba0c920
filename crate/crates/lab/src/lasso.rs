//! Lasso importance statistics for knockoff comparisons.
//!
//! Linear fits run coordinate descent with covariance updates on internally
//! standardized columns; binary responses go through iteratively reweighted
//! coordinate descent with an unpenalized intercept. The penalty is chosen by
//! K-fold cross-validation over a log-spaced grid (100 points from lambda_max
//! down to 0.001 lambda_max by default), with ties resolved toward the larger
//! lambda. Group statistics follow the sum-of-absolute-coefficients rule:
//! W_A = sum_{j in A} |beta_j| - sum_{j in A} |beta~_j|.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Response {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug)]
pub enum LambdaRule {
    CrossValidated,
    /// Skip cross-validation and fit at this fraction of the full-data
    /// lambda_max. Used where a data-independent penalty is wanted, e.g. the
    /// null sign-symmetry checks.
    FractionOfMax(f64),
    /// Skip cross-validation and fit at this absolute penalty.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct LassoOptions {
    pub folds: usize,
    pub grid_len: usize,
    pub lambda_min_ratio: f64,
    pub seed: u64,
    pub rule: LambdaRule,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            folds: 10,
            grid_len: 100,
            lambda_min_ratio: 1e-2,
            seed: 0,
            rule: LambdaRule::CrossValidated,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoFit {
    /// Coefficients on the original column scale.
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Mean cross-validated error at the chosen lambda; absent when the
    /// penalty was forced.
    pub cv_error: Option<f64>,
}

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("response is constant; nothing to fit")]
    ConstantResponse,
    #[error("binary response must be 0/1, found {value} at row {row}")]
    NonBinaryResponse { row: usize, value: f64 },
    #[error("design has {rows} rows but the response has {got}")]
    ShapeMismatch { rows: usize, got: usize },
    #[error("need at least 2 and at most n folds, got {folds} for n = {n}")]
    BadFoldCount { folds: usize, n: usize },
    #[error("empty design")]
    EmptyData,
}

const CD_TOL: f64 = 1e-5;
const MAX_SWEEPS: usize = 2_000;
const MAX_IRLS: usize = 30;
const WEIGHT_FLOOR: f64 = 1e-5;

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Column statistics of a row subset, used to standardize in place.
struct Standardized {
    xs: Array2<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    dead: Vec<bool>,
}

fn standardize_rows(x: &ArrayView2<f64>, rows: &[usize]) -> Standardized {
    let d = x.ncols();
    let n = rows.len();
    let mut xs = Array2::<f64>::zeros((n, d));
    for (r, &i) in rows.iter().enumerate() {
        xs.row_mut(r).assign(&x.row(i));
    }
    let mut mean = vec![0.0; d];
    let mut scale = vec![1.0; d];
    let mut dead = vec![false; d];
    for j in 0..d {
        let col = xs.column(j);
        let mu = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        mean[j] = mu;
        if var <= 1e-12 {
            dead[j] = true;
            scale[j] = 1.0;
        } else {
            scale[j] = var.sqrt();
        }
        let (mu, sd) = (mean[j], scale[j]);
        for v in xs.column_mut(j) {
            *v = (*v - mu) / sd;
        }
        if dead[j] {
            for v in xs.column_mut(j) {
                *v = 0.0;
            }
        }
    }
    Standardized { xs, mean, scale, dead }
}

/// Log-spaced grid from lambda_max down to ratio * lambda_max.
fn lambda_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len <= 1 {
        return vec![lambda_max];
    }
    (0..len)
        .map(|i| lambda_max * ratio.powf(i as f64 / (len - 1) as f64))
        .collect()
}

/// Coordinate descent with covariance updates at a single penalty.
/// `gram` is X'X/n of standardized columns, `b` is X'y/n, `q` tracks
/// gram . beta and is kept consistent across calls for warm starts.
fn cd_linear(
    gram: &Array2<f64>,
    b: &[f64],
    dead: &[bool],
    beta: &mut [f64],
    q: &mut [f64],
    lambda: f64,
) {
    let d = b.len();
    let mut sweeps = 0;
    loop {
        // Full sweep; collect the coordinates that stay active.
        let mut max_change = 0.0_f64;
        for j in 0..d {
            if dead[j] {
                continue;
            }
            let gjj = gram[[j, j]];
            let rho = b[j] - q[j] + gjj * beta[j];
            let new = soft_threshold(rho, lambda) / gjj;
            let delta = new - beta[j];
            if delta != 0.0 {
                beta[j] = new;
                for (k, g) in gram.column(j).iter().enumerate() {
                    q[k] += g * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        sweeps += 1;
        if max_change < CD_TOL || sweeps >= MAX_SWEEPS {
            return;
        }
        // Inner sweeps over the active set only.
        let active: Vec<usize> =
            (0..d).filter(|&j| beta[j] != 0.0 && !dead[j]).collect();
        loop {
            let mut inner_change = 0.0_f64;
            for &j in &active {
                let gjj = gram[[j, j]];
                let rho = b[j] - q[j] + gjj * beta[j];
                let new = soft_threshold(rho, lambda) / gjj;
                let delta = new - beta[j];
                if delta != 0.0 {
                    beta[j] = new;
                    for (k, g) in gram.column(j).iter().enumerate() {
                        q[k] += g * delta;
                    }
                    inner_change = inner_change.max(delta.abs());
                }
            }
            sweeps += 1;
            if inner_change < CD_TOL || sweeps >= MAX_SWEEPS {
                break;
            }
        }
    }
}

/// Per-lambda coefficient path on standardized data, warm-started down the
/// grid. Returns one coefficient vector (standardized scale) per grid entry.
fn linear_path(std: &Standardized, yc: &[f64], grid: &[f64]) -> Vec<Vec<f64>> {
    let n = std.xs.nrows();
    let d = std.xs.ncols();
    let gram = std.xs.t().dot(&std.xs) / n as f64;
    let mut b = vec![0.0; d];
    for j in 0..d {
        b[j] = std.xs.column(j).iter().zip(yc).map(|(x, y)| x * y).sum::<f64>() / n as f64;
    }
    let mut beta = vec![0.0; d];
    let mut q = vec![0.0; d];
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        cd_linear(&gram, &b, &std.dead, &mut beta, &mut q, lambda);
        out.push(beta.clone());
    }
    out
}

/// IRLS logistic lasso at a single penalty; `beta` and `b0` are warm-started.
fn cd_logistic(std: &Standardized, y: &[f64], beta: &mut [f64], b0: &mut f64, lambda: f64) {
    let n = std.xs.nrows();
    let d = std.xs.ncols();
    let mut eta = vec![0.0_f64; n];
    for i in 0..n {
        let mut v = *b0;
        for j in 0..d {
            if beta[j] != 0.0 {
                v += std.xs[[i, j]] * beta[j];
            }
        }
        eta[i] = v;
    }
    for _ in 0..MAX_IRLS {
        // Quadratic approximation at the current linear predictor.
        let mut w = vec![0.0_f64; n];
        let mut r = vec![0.0_f64; n];
        for i in 0..n {
            let p = 1.0 / (1.0 + (-eta[i]).exp());
            let wi = (p * (1.0 - p)).max(WEIGHT_FLOOR);
            w[i] = wi;
            // Working residual: z - eta with z = eta + (y - p)/w.
            r[i] = (y[i] - p) / wi;
        }
        let w_sum: f64 = w.iter().sum();
        let mut wx2 = vec![0.0_f64; d];
        for j in 0..d {
            if std.dead[j] {
                continue;
            }
            wx2[j] = std
                .xs
                .column(j)
                .iter()
                .zip(&w)
                .map(|(x, wi)| wi * x * x)
                .sum::<f64>()
                / n as f64;
        }
        let mut outer_change = 0.0_f64;
        let mut sweeps = 0;
        loop {
            let mut max_change = 0.0_f64;
            for j in 0..d {
                if std.dead[j] || wx2[j] <= 0.0 {
                    continue;
                }
                let col = std.xs.column(j);
                let mut num = 0.0;
                for i in 0..n {
                    num += w[i] * col[i] * r[i];
                }
                num = num / n as f64 + wx2[j] * beta[j];
                let new = soft_threshold(num, lambda) / wx2[j];
                let delta = new - beta[j];
                if delta != 0.0 {
                    beta[j] = new;
                    for i in 0..n {
                        r[i] -= col[i] * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            // Unpenalized intercept step.
            let shift = w.iter().zip(&r).map(|(wi, ri)| wi * ri).sum::<f64>() / w_sum;
            if shift != 0.0 {
                *b0 += shift;
                for ri in r.iter_mut() {
                    *ri -= shift;
                }
                max_change = max_change.max(shift.abs());
            }
            outer_change = outer_change.max(max_change);
            sweeps += 1;
            if max_change < CD_TOL || sweeps >= 100 {
                break;
            }
        }
        // eta = z - r, and z was eta + (y-p)/w at the top of the iteration.
        for i in 0..n {
            let p = 1.0 / (1.0 + (-eta[i]).exp());
            let wi = w[i];
            let z = eta[i] + (y[i] - p) / wi;
            eta[i] = z - r[i];
        }
        if outer_change < 1e-6 {
            break;
        }
    }
}

fn logistic_path(
    std: &Standardized,
    y: &[f64],
    grid: &[f64],
) -> Vec<(Vec<f64>, f64)> {
    let d = std.xs.ncols();
    let mut beta = vec![0.0; d];
    // Clamped so an all-one (or all-zero) training fold keeps a finite start.
    let base_rate = (y.iter().sum::<f64>() / y.len() as f64).clamp(1e-6, 1.0 - 1e-6);
    let mut b0 = (base_rate / (1.0 - base_rate)).ln();
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        cd_logistic(std, y, &mut beta, &mut b0, lambda);
        out.push((beta.clone(), b0));
    }
    out
}

fn check_response(y: &[f64], response: Response) -> Result<(), LassoError> {
    match response {
        Response::Continuous => {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            if y.iter().all(|v| (v - mean).abs() < 1e-12) {
                return Err(LassoError::ConstantResponse);
            }
        }
        Response::Binary => {
            for (i, &v) in y.iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(LassoError::NonBinaryResponse { row: i, value: v });
                }
            }
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            if ones == 0 || ones == y.len() {
                return Err(LassoError::ConstantResponse);
            }
        }
    }
    Ok(())
}

/// Full-data lambda_max: the smallest penalty shrinking every coefficient to
/// zero, from the gradient of the intercept-only model. For both families
/// that model predicts the response mean, so one expression serves.
fn lambda_max(std: &Standardized, y: &[f64]) -> f64 {
    let n = std.xs.nrows();
    let center = y.iter().sum::<f64>() / n as f64;
    let mut best = 0.0_f64;
    for j in 0..std.xs.ncols() {
        if std.dead[j] {
            continue;
        }
        let dot = std
            .xs
            .column(j)
            .iter()
            .zip(y)
            .map(|(x, yi)| x * (yi - center))
            .sum::<f64>()
            / n as f64;
        best = best.max(dot.abs());
    }
    best
}

fn shuffled_fold_of(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    fold_of
}

/// Fit the lasso with the penalty chosen per `opts.rule`.
pub fn lasso_cv(
    x: &ArrayView2<f64>,
    y: &[f64],
    response: Response,
    opts: &LassoOptions,
) -> Result<LassoFit, LassoError> {
    let (n, d) = x.dim();
    if n == 0 || d == 0 {
        return Err(LassoError::EmptyData);
    }
    if y.len() != n {
        return Err(LassoError::ShapeMismatch { rows: n, got: y.len() });
    }
    check_response(y, response)?;

    let all_rows: Vec<usize> = (0..n).collect();
    let full = standardize_rows(x, &all_rows);
    let lmax = lambda_max(&full, y);
    if lmax <= 0.0 {
        // The response is orthogonal to every column; the null model is the
        // lasso solution at any positive penalty.
        return Ok(finalize(&full, y, response, 1.0, None));
    }

    let (target_lambda, cv_error) = match opts.rule {
        LambdaRule::Fixed(lambda) => (lambda, None),
        LambdaRule::FractionOfMax(frac) => (frac * lmax, None),
        LambdaRule::CrossValidated => {
            if opts.folds < 2 || opts.folds > n {
                return Err(LassoError::BadFoldCount { folds: opts.folds, n });
            }
            let grid = lambda_grid(lmax, opts.grid_len, opts.lambda_min_ratio);
            let errors = cross_validate(x, y, response, &grid, opts.folds, opts.seed);
            // Strict improvement only, so ties go to the larger lambda
            // (the grid descends).
            let mut best = 0usize;
            for (i, &e) in errors.iter().enumerate() {
                if e < errors[best] {
                    best = i;
                }
            }
            (grid[best], Some(errors[best]))
        }
    };
    Ok(finalize(&full, y, response, target_lambda, cv_error))
}

fn cross_validate(
    x: &ArrayView2<f64>,
    y: &[f64],
    response: Response,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Vec<f64> {
    let n = x.nrows();
    let fold_of = shuffled_fold_of(n, folds, seed);
    let mut errors = vec![0.0_f64; grid.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let std = standardize_rows(x, &train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        match response {
            Response::Continuous => {
                let y_mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
                let yc: Vec<f64> = y_train.iter().map(|v| v - y_mean).collect();
                let path = linear_path(&std, &yc, grid);
                for (li, beta) in path.iter().enumerate() {
                    for &i in &test {
                        let mut pred = y_mean;
                        for (j, &bj) in beta.iter().enumerate() {
                            if bj != 0.0 {
                                pred += bj * (x[[i, j]] - std.mean[j]) / std.scale[j];
                            }
                        }
                        let gap = y[i] - pred;
                        errors[li] += gap * gap;
                    }
                }
            }
            Response::Binary => {
                let path = logistic_path(&std, &y_train, grid);
                for (li, (beta, b0)) in path.iter().enumerate() {
                    for &i in &test {
                        let mut eta = *b0;
                        for (j, &bj) in beta.iter().enumerate() {
                            if bj != 0.0 {
                                eta += bj * (x[[i, j]] - std.mean[j]) / std.scale[j];
                            }
                        }
                        let p = (1.0 / (1.0 + (-eta).exp())).clamp(1e-8, 1.0 - 1e-8);
                        errors[li] -=
                            2.0 * (y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln());
                    }
                }
            }
        }
    }
    for e in errors.iter_mut() {
        *e /= n as f64;
    }
    errors
}

/// Fit on the full data at the chosen penalty, warm-starting down the grid,
/// and de-standardize.
fn finalize(
    std: &Standardized,
    y: &[f64],
    response: Response,
    lambda: f64,
    cv_error: Option<f64>,
) -> LassoFit {
    let d = std.xs.ncols();
    // Warm-start path: descend from lambda_max to the target.
    let lmax = lambda_max(std, y).max(lambda);
    let mut grid: Vec<f64> = lambda_grid(lmax, 20, (lambda / lmax).max(1e-6))
        .into_iter()
        .filter(|&l| l > lambda)
        .collect();
    grid.push(lambda);
    let (beta_std, intercept_std) = match response {
        Response::Continuous => {
            let y_mean = y.iter().sum::<f64>() / y.len() as f64;
            let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
            let path = linear_path(std, &yc, &grid);
            (path.last().expect("grid nonempty").clone(), y_mean)
        }
        Response::Binary => {
            let path = logistic_path(std, y, &grid);
            let (beta, b0) = path.last().expect("grid nonempty").clone();
            (beta, b0)
        }
    };
    let mut beta = vec![0.0; d];
    let mut intercept = intercept_std;
    for j in 0..d {
        if std.dead[j] || beta_std[j] == 0.0 {
            continue;
        }
        beta[j] = beta_std[j] / std.scale[j];
        intercept -= beta[j] * std.mean[j];
    }
    LassoFit { beta, intercept, lambda, cv_error }
}

/// Group importance statistics from an augmented-fit coefficient vector laid
/// out as p originals followed by p knockoffs.
pub fn w_statistics(beta: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    let p = beta.len() / 2;
    groups
        .iter()
        .map(|members| {
            let orig: f64 = members.iter().map(|&j| beta[j].abs()).sum();
            let tilde: f64 = members.iter().map(|&j| beta[p + j].abs()).sum();
            orig - tilde
        })
        .collect()
}

/// Fit y on [X | X~] and aggregate signed group statistics.
pub fn lasso_cv_statistics(
    x: &ArrayView2<f64>,
    xtilde: &ArrayView2<f64>,
    y: &[f64],
    groups: &[Vec<usize>],
    response: Response,
    opts: &LassoOptions,
) -> Result<Vec<f64>, LassoError> {
    let augmented = concatenate(Axis(1), &[x.view(), xtilde.view()])
        .expect("x and xtilde row counts match");
    let fit = lasso_cv(&augmented.view(), y, response, opts)?;
    Ok(w_statistics(&fit.beta, groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knockoffs::GaussianDesign;
    use ndarray::Array2;

    #[test]
    fn huge_penalty_zeroes_every_statistic() {
        let design = GaussianDesign::identity(4);
        let x = design.sample(60, 1);
        let xt = design.sample(60, 2);
        let y: Vec<f64> = (0..60).map(|i| x[[i, 0]] * 2.0 + 0.1 * (i as f64).sin()).collect();
        let opts = LassoOptions { rule: LambdaRule::Fixed(1e6), ..LassoOptions::default() };
        let groups: Vec<Vec<usize>> = (0..4).map(|j| vec![j]).collect();
        let w =
            lasso_cv_statistics(&x.view(), &xt.view(), &y, &groups, Response::Continuous, &opts)
                .unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_column_matches_soft_threshold_closed_form() {
        let design = GaussianDesign::identity(1);
        let x = design.sample(200, 7);
        let y: Vec<f64> = (0..200).map(|i| 0.8 * x[[i, 0]] + ((i * 37 % 13) as f64 - 6.0) / 6.0).collect();
        let lambda = 0.15;
        let opts = LassoOptions { rule: LambdaRule::Fixed(lambda), ..LassoOptions::default() };
        let fit = lasso_cv(&x.view(), &y, Response::Continuous, &opts).unwrap();

        // Closed form on the standardized column: beta = S(x_s'y_c/n, lambda).
        let n = 200.0;
        let mu = x.column(0).sum() / n;
        let sd = (x.column(0).iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
        let y_mean = y.iter().sum::<f64>() / n;
        let dot = x
            .column(0)
            .iter()
            .zip(&y)
            .map(|(v, yi)| (v - mu) / sd * (yi - y_mean))
            .sum::<f64>()
            / n;
        let expected = soft_threshold(dot, lambda) / sd;
        assert!((fit.beta[0] - expected).abs() < 1e-6);
    }

    #[test]
    fn swapping_a_column_with_its_knockoff_flips_w() {
        let design = GaussianDesign::identity(4);
        let x = design.sample(80, 31);
        let xt = design.sample(80, 32);
        let y: Vec<f64> =
            (0..80).map(|i| 1.5 * x[[i, 1]] - 0.7 * x[[i, 3]] + 0.3 * x[[i, 0]]).collect();
        let opts = LassoOptions { folds: 5, grid_len: 40, seed: 9, ..LassoOptions::default() };
        let groups: Vec<Vec<usize>> = (0..4).map(|j| vec![j]).collect();
        let w_base =
            lasso_cv_statistics(&x.view(), &xt.view(), &y, &groups, Response::Continuous, &opts)
                .unwrap();

        let mut x_swapped = x.clone();
        let mut xt_swapped = xt.clone();
        x_swapped.column_mut(1).assign(&xt.column(1));
        xt_swapped.column_mut(1).assign(&x.column(1));
        let w_swapped = lasso_cv_statistics(
            &x_swapped.view(),
            &xt_swapped.view(),
            &y,
            &groups,
            Response::Continuous,
            &opts,
        )
        .unwrap();
        for j in 0..4 {
            let want = if j == 1 { -w_base[j] } else { w_base[j] };
            assert!(
                (w_swapped[j] - want).abs() < 1e-6,
                "W[{j}] = {} after swap, expected {want}",
                w_swapped[j]
            );
        }
    }

    #[test]
    fn logistic_fit_finds_a_strong_feature() {
        let design = GaussianDesign::identity(3);
        let x = design.sample(300, 77);
        let noise = design.sample(300, 78);
        let y: Vec<f64> = (0..300)
            .map(|i| if 2.5 * x[[i, 0]] + 0.3 * noise[[i, 0]] > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let opts = LassoOptions { folds: 5, grid_len: 30, seed: 3, ..LassoOptions::default() };
        let fit = lasso_cv(&x.view(), &y, Response::Binary, &opts).unwrap();
        assert!(fit.beta[0] > 0.2, "beta = {:?}", fit.beta);
        assert!(fit.beta[0].abs() > 5.0 * fit.beta[1].abs().max(fit.beta[2].abs()).max(1e-9));
    }

    #[test]
    fn degenerate_inputs_error() {
        let x = Array2::<f64>::zeros((10, 2));
        let y = vec![1.0; 10];
        assert!(matches!(
            lasso_cv(&x.view(), &y, Response::Continuous, &LassoOptions::default()),
            Err(LassoError::ConstantResponse)
        ));
        assert!(matches!(
            lasso_cv(&x.view(), &y, Response::Binary, &LassoOptions::default()),
            Err(LassoError::ConstantResponse)
        ));
        let y_bad: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            lasso_cv(&x.view(), &y_bad, Response::Binary, &LassoOptions::default()),
            Err(LassoError::NonBinaryResponse { .. })
        ));
        let live = GaussianDesign::identity(2).sample(10, 5);
        let y_ok: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let opts = LassoOptions { folds: 1, ..LassoOptions::default() };
        assert!(matches!(
            lasso_cv(&live.view(), &y_ok, Response::Binary, &opts),
            Err(LassoError::BadFoldCount { .. })
        ));
    }
}
