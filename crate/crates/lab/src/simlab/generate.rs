//! Replicate data generation: feature draws, signal placement, amplitude
//! laws, and the outcome-tree construction.

use super::{mix_seed, AmplitudeLaw, DesignSpec, ScenarioContext, SimError, TREE_LEAVES};
use crate::knockoffs::normalize_columns;
use crate::lasso::Response;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// Stream tags under the replicate seed. Every random draw in a replicate
// descends from the replicate seed through one of these, so adding a method
// to the roster never shifts anyone else's randomness.
pub const STREAM_X: u64 = 1;
pub const STREAM_SIGNAL: u64 = 2;
pub const STREAM_NOISE: u64 = 3;
pub const STREAM_KNOCKOFF: u64 = 4;
pub const STREAM_LASSO: u64 = 5;

/// Expected case rate the tree leaf intercepts are calibrated to.
pub const TREE_CASE_RATE: f64 = 0.15;

pub struct GeneratedData {
    pub x: Array2<f64>,
    /// One response per outcome. Tree scenarios use node order: four leaves,
    /// two internal ORs, then the root OR.
    pub ys: Vec<Vec<f64>>,
    pub response: Response,
    /// Sorted nonzero-coefficient indices per outcome (tree: per leaf).
    pub supports: Vec<Vec<usize>>,
    /// Variance of the linear signal, averaged over outcomes.
    pub realized_snr: f64,
    /// Tree only: calibrated expected case rate per leaf.
    pub expected_case_rates: Vec<f64>,
}

impl AmplitudeLaw {
    fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> f64 {
        match *self {
            AmplitudeLaw::Gaussian { tau, floor_frac } => {
                let v: f64 = rng.sample::<f64, _>(StandardNormal);
                let v = v * tau;
                let floor = floor_frac * tau;
                if v.abs() < floor {
                    floor.copysign(v)
                } else {
                    v
                }
            }
            AmplitudeLaw::FixedOverSqrtN { a } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * a / (n as f64).sqrt()
            }
            AmplitudeLaw::GaussianShifted { mu, tau } => {
                let v: f64 = rng.sample::<f64, _>(StandardNormal);
                mu + v * tau
            }
        }
    }
}

fn draw_support(rng: &mut ChaCha8Rng, p: usize, k: usize) -> Vec<usize> {
    let mut s = rand::seq::index::sample(rng, p, k.min(p)).into_vec();
    s.sort_unstable();
    s
}

fn beta_from(support: &[usize], p: usize, law: &AmplitudeLaw, n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let mut beta = Array1::zeros(p);
    for &j in support {
        beta[j] = law.draw(rng, n);
    }
    beta
}

fn variance(v: &Array1<f64>) -> f64 {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn gaussian_response(signal: &Array1<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    signal.iter().map(|&s| s + rng.sample::<f64, _>(StandardNormal)).collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Intercept such that the average of sigmoid(delta + signal_i) hits the
/// target rate; the average is monotone increasing in delta, so bisection.
fn calibrate_intercept(signal: &Array1<f64>, target: f64) -> f64 {
    let rate = |delta: f64| signal.iter().map(|&s| sigmoid(delta + s)).sum::<f64>() / signal.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Sibling leaf support: half of `base` kept (floor of k/2), the rest drawn
/// from outside `base`, so sibling overlap is exactly floor(k/2) features.
fn sibling_support(rng: &mut ChaCha8Rng, base: &[usize], p: usize) -> Vec<usize> {
    let k = base.len();
    let keep = k / 2;
    let kept = rand::seq::index::sample(rng, k, keep).into_vec();
    let mut support: Vec<usize> = kept.iter().map(|&i| base[i]).collect();
    let in_base = {
        let mut mask = vec![false; p];
        for &j in base {
            mask[j] = true;
        }
        mask
    };
    let complement: Vec<usize> = (0..p).filter(|&j| !in_base[j]).collect();
    let fresh = rand::seq::index::sample(rng, complement.len(), (k - keep).min(complement.len()))
        .into_vec();
    support.extend(fresh.iter().map(|&i| complement[i]));
    support.sort_unstable();
    support
}

pub fn generate(ctx: &ScenarioContext, n: usize, seed: u64) -> Result<GeneratedData, SimError> {
    let p = ctx.config.p;
    let k = (ctx.config.sparsity * p as f64).round() as usize;
    let x_seed = mix_seed(seed, STREAM_X);

    match &ctx.config.design {
        DesignSpec::BlockAr1 { .. } | DesignSpec::Ar1Global { .. } => {
            let outcomes = match &ctx.config.design {
                DesignSpec::Ar1Global { outcomes, .. } => *outcomes,
                _ => 1,
            };
            let x = ctx.design.sample(n, x_seed);
            let mut ys = Vec::with_capacity(outcomes);
            let mut supports = Vec::with_capacity(outcomes);
            let mut snr = 0.0;
            for ell in 0..outcomes {
                let mut signal_rng = ChaCha8Rng::seed_from_u64(mix_seed(
                    mix_seed(seed, STREAM_SIGNAL),
                    ell as u64,
                ));
                let support = draw_support(&mut signal_rng, p, k);
                let beta = beta_from(&support, p, &ctx.config.amplitude, n, &mut signal_rng);
                let signal = x.dot(&beta);
                snr += variance(&signal) / outcomes as f64;
                let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(
                    mix_seed(seed, STREAM_NOISE),
                    ell as u64,
                ));
                ys.push(gaussian_response(&signal, &mut noise_rng));
                supports.push(support);
            }
            Ok(GeneratedData {
                x,
                ys,
                response: Response::Continuous,
                supports,
                realized_snr: snr,
                expected_case_rates: Vec::new(),
            })
        }
        DesignSpec::FixedEquiMlkf { group, signal_groups, .. } => {
            let mut x = ctx.design.sample(n, x_seed);
            normalize_columns(&mut x);
            let mut signal_rng =
                ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, STREAM_SIGNAL), 0));
            let n_groups = p.div_ceil(*group);
            let chosen = draw_support(&mut signal_rng, n_groups, *signal_groups);
            let candidates: Vec<usize> = chosen
                .iter()
                .flat_map(|&g| g * group..((g + 1) * group).min(p))
                .collect();
            let picked =
                rand::seq::index::sample(&mut signal_rng, candidates.len(), k.min(candidates.len()))
                    .into_vec();
            let mut support: Vec<usize> = picked.iter().map(|&i| candidates[i]).collect();
            support.sort_unstable();
            let beta = beta_from(&support, p, &ctx.config.amplitude, n, &mut signal_rng);
            let signal = x.dot(&beta);
            let snr = variance(&signal);
            let mut noise_rng =
                ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, STREAM_NOISE), 0));
            let y = gaussian_response(&signal, &mut noise_rng);
            Ok(GeneratedData {
                x,
                ys: vec![y],
                response: Response::Continuous,
                supports: vec![support],
                realized_snr: snr,
                expected_case_rates: Vec::new(),
            })
        }
        DesignSpec::OutcomeTree { .. } => {
            let x = ctx.design.sample(n, x_seed);
            let mut supports: Vec<Vec<usize>> = Vec::with_capacity(TREE_LEAVES);
            let mut leaf_ys: Vec<Vec<f64>> = Vec::with_capacity(TREE_LEAVES);
            let mut rates = Vec::with_capacity(TREE_LEAVES);
            let mut snr = 0.0;
            for leaf in 0..TREE_LEAVES {
                let mut signal_rng = ChaCha8Rng::seed_from_u64(mix_seed(
                    mix_seed(seed, STREAM_SIGNAL),
                    leaf as u64,
                ));
                let support = if leaf % 2 == 0 {
                    draw_support(&mut signal_rng, p, k)
                } else {
                    sibling_support(&mut signal_rng, &supports[leaf - 1], p)
                };
                let beta = beta_from(&support, p, &ctx.config.amplitude, n, &mut signal_rng);
                let signal = x.dot(&beta);
                snr += variance(&signal) / TREE_LEAVES as f64;
                let delta = calibrate_intercept(&signal, TREE_CASE_RATE);
                let probs: Vec<f64> = signal.iter().map(|&s| sigmoid(delta + s)).collect();
                rates.push(probs.iter().sum::<f64>() / probs.len() as f64);
                let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(
                    mix_seed(seed, STREAM_NOISE),
                    leaf as u64,
                ));
                let y: Vec<f64> = probs
                    .iter()
                    .map(|&pr| if noise_rng.random::<f64>() < pr { 1.0 } else { 0.0 })
                    .collect();
                supports.push(support);
                leaf_ys.push(y);
            }
            let or = |a: &[f64], b: &[f64]| -> Vec<f64> {
                a.iter().zip(b).map(|(&u, &v)| if u > 0.0 || v > 0.0 { 1.0 } else { 0.0 }).collect()
            };
            let int0 = or(&leaf_ys[0], &leaf_ys[1]);
            let int1 = or(&leaf_ys[2], &leaf_ys[3]);
            let root = or(&int0, &int1);
            let mut ys = leaf_ys;
            ys.push(int0);
            ys.push(int1);
            ys.push(root);
            Ok(GeneratedData {
                x,
                ys,
                response: Response::Binary,
                supports,
                realized_snr: snr,
                expected_case_rates: rates,
            })
        }
    }
}
