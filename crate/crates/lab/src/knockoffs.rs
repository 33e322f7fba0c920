//! Gaussian knockoff generation.
//!
//! Model-X knockoffs are sampled from the conditional Gaussian
//! N(X - X Sigma^-1 S, 2S - S Sigma^-1 S) for an S matrix chosen so the
//! joint covariance G = [[Sigma, Sigma-S], [Sigma-S, Sigma]] stays positive
//! semidefinite. S comes from the equicorrelated rule (s = min(1, 2 lambda_min)
//! on a unit-diagonal Sigma) or its group analogue (gamma times the
//! block-diagonal of Sigma). Fixed-design knockoffs reproduce the Gram
//! identities X'X = X~'X~ and X'X~ = X'X - diag(s) exactly.

use crate::linalg::{
    bisect_feasible, check_symmetric, cholesky, cholesky_jittered, is_positive_definite,
    orthonormal_complement, smallest_eigenvalue_spd, spd_solve_matrix, LinalgError,
};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KnockoffError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("covariance diagonal entry {col} is {value:.6}; standardize to unit diagonal first")]
    NotUnitDiagonal { col: usize, value: f64 },
    #[error("column {col} has norm {norm:.6}; normalize columns first")]
    ColumnNotNormalized { col: usize, norm: f64 },
    #[error("fixed-design knockoffs need n >= 2p, got n = {n}, p = {p}")]
    TooFewRows { n: usize, p: usize },
    #[error("recipe invalid: conditional knockoff covariance is not positive semidefinite")]
    RecipeInvalid(#[source] LinalgError),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A zero-mean Gaussian feature law with a cached triangular factor.
#[derive(Clone, Debug)]
pub struct GaussianDesign {
    sigma: Array2<f64>,
    chol: Array2<f64>,
}

impl GaussianDesign {
    pub fn new(sigma: Array2<f64>) -> Result<Self, KnockoffError> {
        check_symmetric(&sigma.view(), 1e-8)?;
        let chol = cholesky(&sigma.view(), 0.0)?;
        Ok(GaussianDesign { sigma, chol })
    }

    pub fn identity(p: usize) -> Self {
        GaussianDesign::new(Array2::eye(p)).expect("identity is positive definite")
    }

    /// AR(1) covariance across all of 1..p: Sigma_jk = rho^|j-k|.
    pub fn ar1(p: usize, rho: f64) -> Self {
        assert!(rho.abs() < 1.0, "AR(1) needs |rho| < 1");
        let sigma = Array2::from_shape_fn((p, p), |(j, k)| {
            rho.powi((j as i64 - k as i64).unsigned_abs() as i32)
        });
        GaussianDesign::new(sigma).expect("AR(1) with |rho| < 1 is positive definite")
    }

    /// Block-diagonal covariance with AR(1) structure inside consecutive
    /// blocks of the given size and zero across blocks.
    pub fn block_ar1(p: usize, block: usize, rho: f64) -> Self {
        assert!(block >= 1);
        assert!(rho.abs() < 1.0, "AR(1) needs |rho| < 1");
        let sigma = Array2::from_shape_fn((p, p), |(j, k)| {
            if j / block == k / block {
                rho.powi((j as i64 - k as i64).unsigned_abs() as i32)
            } else {
                0.0
            }
        });
        GaussianDesign::new(sigma).expect("block AR(1) with |rho| < 1 is positive definite")
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &Array2<f64> {
        &self.sigma
    }

    /// n i.i.d. rows from N(0, Sigma), reproducible from the seed.
    pub fn sample(&self, n: usize, seed: u64) -> Array2<f64> {
        let p = self.p();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = standard_normal_matrix(&mut rng, n, p);
        z.dot(&self.chol.t())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecipeKind {
    Equicorrelated,
    GroupEquicorrelated,
    FixedEqui,
}

impl RecipeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecipeKind::Equicorrelated => "equicorrelated",
            RecipeKind::GroupEquicorrelated => "group-equicorrelated",
            RecipeKind::FixedEqui => "fixed-equi",
        }
    }
}

/// The decorrelation matrix S defining the joint knockoff covariance.
#[derive(Clone, Debug)]
pub struct KnockoffRecipe {
    pub s: Array2<f64>,
    pub kind: RecipeKind,
    /// Scale parameter: the common s for equicorrelated recipes, gamma for
    /// group recipes.
    pub scale: f64,
}

impl KnockoffRecipe {
    /// Joint covariance [[Sigma, Sigma-S], [Sigma-S, Sigma]].
    pub fn joint_covariance(&self, design: &GaussianDesign) -> Array2<f64> {
        let p = design.p();
        let sigma = design.sigma();
        let mut g = Array2::<f64>::zeros((2 * p, 2 * p));
        for i in 0..p {
            for j in 0..p {
                let cross = sigma[[i, j]] - self.s[[i, j]];
                g[[i, j]] = sigma[[i, j]];
                g[[p + i, p + j]] = sigma[[i, j]];
                g[[i, p + j]] = cross;
                g[[p + i, j]] = cross;
            }
        }
        g
    }
}

/// Equicorrelated S = s I with s = min(1, 2 lambda_min(Sigma)). Requires a
/// unit diagonal so that s is on a common scale across coordinates.
pub fn equicorrelated_recipe(design: &GaussianDesign) -> Result<KnockoffRecipe, KnockoffError> {
    let sigma = design.sigma();
    for j in 0..design.p() {
        if (sigma[[j, j]] - 1.0).abs() > 1e-8 {
            return Err(KnockoffError::NotUnitDiagonal { col: j, value: sigma[[j, j]] });
        }
    }
    let lambda_min = smallest_eigenvalue_spd(&sigma.view());
    let s = (2.0 * lambda_min).min(1.0);
    Ok(KnockoffRecipe {
        s: Array2::eye(design.p()) * s,
        kind: RecipeKind::Equicorrelated,
        scale: s,
    })
}

/// Group analogue: S = gamma * blockdiag(Sigma_AA) over the partition's
/// groups, with gamma the largest value in [0, 1] keeping 2 Sigma - S
/// positive semidefinite (found by bisection with factorization probes).
pub fn group_equicorrelated_recipe(
    design: &GaussianDesign,
    groups: &[Vec<usize>],
) -> Result<KnockoffRecipe, KnockoffError> {
    let p = design.p();
    let sigma = design.sigma();
    let mut group_of = vec![usize::MAX; p];
    for (g, members) in groups.iter().enumerate() {
        for &j in members {
            group_of[j] = g;
        }
    }
    let block = Array2::from_shape_fn((p, p), |(j, k)| {
        if group_of[j] == group_of[k] { sigma[[j, k]] } else { 0.0 }
    });
    let probe = |gamma: f64| {
        let shifted = sigma * 2.0 - &block * gamma;
        is_positive_definite(&shifted.view())
    };
    let gamma = bisect_feasible(probe, 0.0, 2.0, 1e-10).min(1.0);
    Ok(KnockoffRecipe {
        s: block * gamma,
        kind: RecipeKind::GroupEquicorrelated,
        scale: gamma,
    })
}

/// Conditional sampler for model-X knockoffs, with the expensive solves done
/// once at construction so repeated replicates reuse them.
#[derive(Clone, Debug)]
pub struct KnockoffSampler {
    sigma_inv_s: Array2<f64>,
    cond_chol: Array2<f64>,
    /// Diagonal jitter the conditional factorization needed; at most the
    /// ladder ceiling, recorded for diagnostics.
    pub cond_jitter: f64,
    p: usize,
}

impl KnockoffSampler {
    pub fn new(design: &GaussianDesign, recipe: &KnockoffRecipe) -> Result<Self, KnockoffError> {
        let p = design.p();
        if recipe.s.nrows() != p {
            return Err(KnockoffError::DimensionMismatch { expected: p, got: recipe.s.nrows() });
        }
        let sigma_inv_s = spd_solve_matrix(&design.chol.view(), &recipe.s.view());
        let mut cond = &recipe.s * 2.0 - recipe.s.dot(&sigma_inv_s);
        // The product drifts off symmetric by rounding; the factorization
        // wants it exact.
        for i in 0..p {
            for j in (i + 1)..p {
                let avg = 0.5 * (cond[[i, j]] + cond[[j, i]]);
                cond[[i, j]] = avg;
                cond[[j, i]] = avg;
            }
        }
        let (cond_chol, cond_jitter) =
            cholesky_jittered(&cond.view()).map_err(KnockoffError::RecipeInvalid)?;
        Ok(KnockoffSampler { sigma_inv_s, cond_chol, cond_jitter, p })
    }

    /// X~ | X = X - X Sigma^-1 S + Z C' with C C' the conditional covariance.
    pub fn sample(&self, x: &ArrayView2<f64>, seed: u64) -> Result<Array2<f64>, KnockoffError> {
        if x.ncols() != self.p {
            return Err(KnockoffError::DimensionMismatch { expected: self.p, got: x.ncols() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = standard_normal_matrix(&mut rng, x.nrows(), self.p);
        let mean = x - &x.dot(&self.sigma_inv_s);
        Ok(mean + z.dot(&self.cond_chol.t()))
    }
}

/// One-shot convenience over `KnockoffSampler`.
pub fn sample_knockoffs(
    x: &ArrayView2<f64>,
    design: &GaussianDesign,
    recipe: &KnockoffRecipe,
    seed: u64,
) -> Result<Array2<f64>, KnockoffError> {
    KnockoffSampler::new(design, recipe)?.sample(x, seed)
}

/// Fixed-design knockoffs for a column-normalized X with n >= 2p.
#[derive(Clone, Debug)]
pub struct FixedEquiKnockoffs {
    pub xtilde: Array2<f64>,
    /// Common diagonal of the Gram decorrelation, s = min(1, 2 lambda_min(X'X)).
    pub s: f64,
}

/// Scale every column to unit Euclidean norm (in place). Callers of
/// `fixed_equi_knockoffs` are expected to run this first.
pub fn normalize_columns(x: &mut Array2<f64>) {
    for mut col in x.columns_mut() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
}

pub fn fixed_equi_knockoffs(x: &ArrayView2<f64>) -> Result<FixedEquiKnockoffs, KnockoffError> {
    let (n, p) = x.dim();
    if n < 2 * p {
        return Err(KnockoffError::TooFewRows { n, p });
    }
    for (j, col) in x.columns().into_iter().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(KnockoffError::ColumnNotNormalized { col: j, norm });
        }
    }
    let mut gram = x.t().dot(x);
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (gram[[i, j]] + gram[[j, i]]);
            gram[[i, j]] = avg;
            gram[[j, i]] = avg;
        }
    }
    let lambda_min = smallest_eigenvalue_spd(&gram.view());
    let s = (2.0 * lambda_min).min(1.0);

    // X~ = X (I - Gram^-1 S) + U C where U is an orthonormal complement of
    // col(X) and C' C = 2S - S Gram^-1 S. Both Gram identities then hold by
    // construction.
    let gram_chol = cholesky(&gram.view(), 0.0)?;
    let s_mat = Array2::eye(p) * s;
    let gram_inv_s = spd_solve_matrix(&gram_chol.view(), &s_mat.view());
    let mut cond = &s_mat * 2.0 - s_mat.dot(&gram_inv_s);
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (cond[[i, j]] + cond[[j, i]]);
            cond[[i, j]] = avg;
            cond[[j, i]] = avg;
        }
    }
    let (cond_chol, _) = cholesky_jittered(&cond.view()).map_err(KnockoffError::RecipeInvalid)?;
    let u = orthonormal_complement(x, p)?;
    // C must satisfy C'C = cond, so C is the transposed (upper) factor.
    let xtilde = x.dot(&(Array2::eye(p) - &gram_inv_s)) + u.dot(&cond_chol.t());
    Ok(FixedEquiKnockoffs { xtilde, s })
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        data.push(StandardNormal.sample(rng));
    }
    Array2::from_shape_vec((n, p), data).expect("shape matches allocation")
}
