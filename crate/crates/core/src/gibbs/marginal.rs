//! Random-walk Metropolis on θ with the compliance labels summed out.
//!
//! Targets `P(θ) Π_i Σ_c [...]` directly, on the unconstrained scale
//! `(coefficients, ln sigma_x, ln sigma_y)`. The vector is split in three
//! blocks (compliance rows; intermediate model; outcome model). Each block
//! starts with an isotropic proposal; halfway through warmup the proposal
//! shape is replaced by the block's empirical warmup covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, PriorSpec, Theta};
use crate::rng::StreamRng;

use super::tuning::{Block, RwScale};

const SUBSTEPS: usize = 3;
const TARGET_ACCEPT: f64 = 0.3;

pub(crate) fn log_target(v: &[f64], p: usize, data: &Dataset, prior: &PriorSpec) -> Result<f64> {
    let theta = Theta::from_unconstrained(p, v);
    let mut lp = model::log_prior_unconstrained(&theta, prior);
    for (i, u) in data.units().iter().enumerate() {
        lp += model::unit_marginal_loglik(&theta, u).map_err(|e| match e {
            Error::InconsistentUnit { .. } => Error::InconsistentUnit { index: i },
            other => other,
        })?;
    }
    Ok(lp)
}

pub(crate) fn initial_blocks(p: usize, step_scale: f64) -> Vec<Block> {
    let g = 2 * model::gamma_len(p);
    let a = model::alpha_len(p) + 1;
    let b = model::beta_len(p) + 1;
    [(0, g), (g, a), (g + a, b)]
        .into_iter()
        .map(|(start, len)| Block {
            start,
            len,
            chol: DMatrix::identity(len, len),
            scale: RwScale::new(step_scale, TARGET_ACCEPT),
        })
        .collect()
}

pub(crate) fn update(
    theta: &mut Theta,
    data: &Dataset,
    prior: &PriorSpec,
    blocks: &mut [Block],
    rng: &mut StreamRng,
) -> Result<()> {
    let p = data.covariate_dim();
    let mut v = theta.to_unconstrained();
    let mut current = log_target(&v, p, data, prior)?;
    if !current.is_finite() {
        return Err(Error::NumericalOverflow {
            context: "marginal posterior at current state".into(),
        });
    }
    for _ in 0..SUBSTEPS {
        for block in blocks.iter_mut() {
            let eps = DVector::from_fn(block.len, |_, _| rng.sample::<f64, _>(StandardNormal));
            let step = &block.chol * eps * block.scale.scale();
            let mut cand_v = v.clone();
            for k in 0..block.len {
                cand_v[block.start + k] += step[k];
            }
            let cand = log_target(&cand_v, p, data, prior)?;
            if cand.is_nan() || cand == f64::INFINITY {
                return Err(Error::NumericalOverflow {
                    context: "marginal posterior at proposal".into(),
                });
            }
            let accept = rng.gen::<f64>().ln() < cand - current;
            block.scale.record(accept);
            if accept {
                v = cand_v;
                current = cand;
            }
        }
    }
    *theta = Theta::from_unconstrained(p, &v);
    Ok(())
}

/// Replace each block's proposal shape with the Cholesky factor of its
/// empirical covariance over `history`.
pub(crate) fn adapt_shape(blocks: &mut [Block], history: &[Vec<f64>]) {
    if history.len() < 10 {
        return;
    }
    let n = history.len() as f64;
    for block in blocks {
        let d = block.len;
        let mean: Vec<f64> = (0..d)
            .map(|k| history.iter().map(|h| h[block.start + k]).sum::<f64>() / n)
            .collect();
        let mut cov = DMatrix::zeros(d, d);
        for h in history {
            for a in 0..d {
                let da = h[block.start + a] - mean[a];
                for b in 0..d {
                    cov[(a, b)] += da * (h[block.start + b] - mean[b]);
                }
            }
        }
        cov /= n - 1.0;
        let ridge = 1e-8 + 1e-6 * cov.diagonal().max();
        for k in 0..d {
            cov[(k, k)] += ridge;
        }
        if let Some(ch) = cov.cholesky() {
            block.chol = ch.l();
            block.scale.set_scale(2.38 / (d as f64).sqrt());
        }
    }
}
