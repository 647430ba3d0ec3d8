//! θ | C, observed data.
//!
//! Regression coefficients and variances are semi-conjugate given the
//! compliance labels and get exact Gibbs draws. The multinomial-logit rows
//! have no conjugate form and are updated by random-walk Metropolis.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::domain::{ComplianceType, Dataset};
use crate::error::{Error, Result};
use crate::model::{self, PriorSpec, Theta};
use crate::rng::StreamRng;
use crate::stats::normal_logpdf;

use super::tuning::RwScale;

/// Metropolis proposals per gamma row per sweep.
const GAMMA_SUBSTEPS: usize = 2;

/// Draw `b ~ N(Λ⁻¹ Xᵀy/σ², Λ⁻¹)` with `Λ = XᵀX/σ² + I/τ²`.
pub(crate) fn draw_coefficients(
    xtx: &DMatrix<f64>,
    xty: &DVector<f64>,
    sigma2: f64,
    tau: f64,
    rng: &mut StreamRng,
) -> Result<DVector<f64>> {
    let d = xty.len();
    let precision = xtx / sigma2 + DMatrix::identity(d, d) / (tau * tau);
    let chol = precision.cholesky().ok_or_else(|| Error::NumericalOverflow {
        context: "coefficient posterior precision is not positive definite".into(),
    })?;
    let mean = chol.solve(&(xty / sigma2));
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let offset = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .expect("cholesky factor has positive diagonal");
    let draw = mean + offset;
    if draw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow {
            context: "coefficient draw".into(),
        });
    }
    Ok(draw)
}

/// Draw `σ² ~ IG(a0 + n/2, b0 + rss/2)`.
pub(crate) fn draw_variance(n: usize, rss: f64, prior: &PriorSpec, rng: &mut StreamRng) -> Result<f64> {
    let shape = prior.a0 + n as f64 / 2.0;
    let rate = prior.b0 + rss / 2.0;
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::NumericalOverflow {
            context: format!("variance posterior: {e}"),
        })?
        .sample(rng);
    let v = 1.0 / g;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::NumericalOverflow {
            context: "variance draw".into(),
        });
    }
    Ok(v)
}

struct Design {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    rows: Vec<(Vec<f64>, f64)>,
}

impl Design {
    fn new(d: usize, n: usize) -> Self {
        Design {
            xtx: DMatrix::zeros(d, d),
            xty: DVector::zeros(d),
            rows: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, row: Vec<f64>, target: f64) {
        let d = row.len();
        for a in 0..d {
            self.xty[a] += row[a] * target;
            for b in 0..=a {
                self.xtx[(a, b)] += row[a] * row[b];
            }
        }
        self.rows.push((row, target));
    }

    fn finish(&mut self) {
        let d = self.xty.len();
        for a in 0..d {
            for b in 0..a {
                self.xtx[(b, a)] = self.xtx[(a, b)];
            }
        }
    }

    fn rss(&self, coef: &DVector<f64>) -> f64 {
        self.rows
            .iter()
            .map(|(row, t)| {
                let fit: f64 = row.iter().zip(coef.iter()).map(|(x, b)| x * b).sum();
                (t - fit).powi(2)
            })
            .sum()
    }
}

/// Semi-conjugate update of `(alpha, sigma_x)` then `(beta, sigma_y)` using
/// the observed cells and current labels.
pub(crate) fn update_regressions(
    theta: &mut Theta,
    compliance: &[ComplianceType],
    data: &Dataset,
    prior: &PriorSpec,
    rng: &mut StreamRng,
) -> Result<()> {
    let p = data.covariate_dim();
    let n = data.len();
    let mut xd = Design::new(model::alpha_len(p), n);
    let mut yd = Design::new(model::beta_len(p), n);
    let mut buf = Vec::new();
    for (u, &c) in data.units().iter().zip(compliance) {
        model::intermediate_design(c, &u.x1, u.w1, &mut buf);
        xd.push(buf.clone(), u.x2);
        model::outcome_design(c, &u.x1, u.x2, u.w1, u.w2, &mut buf);
        yd.push(buf.clone(), u.y);
    }
    xd.finish();
    yd.finish();

    let alpha = draw_coefficients(&xd.xtx, &xd.xty, theta.sigma_x.powi(2), prior.tau, rng)?;
    theta.sigma_x = draw_variance(n, xd.rss(&alpha), prior, rng)?.sqrt();
    theta.alpha = alpha.iter().copied().collect();

    let beta = draw_coefficients(&yd.xtx, &yd.xty, theta.sigma_y.powi(2), prior.tau, rng)?;
    theta.sigma_y = draw_variance(n, yd.rss(&beta), prior, rng)?.sqrt();
    theta.beta = beta.iter().copied().collect();
    Ok(())
}

fn gamma_log_target(theta: &Theta, compliance: &[ComplianceType], data: &Dataset, prior: &PriorSpec) -> Result<f64> {
    let mut lp: f64 = theta
        .gamma_nt
        .iter()
        .chain(&theta.gamma_at)
        .map(|&g| normal_logpdf(g, 0.0, prior.tau))
        .sum();
    for (u, &c) in data.units().iter().zip(compliance) {
        lp += model::compliance_logprob(theta, &u.x1)?[c.index()];
    }
    Ok(lp)
}

/// Random-walk Metropolis on each gamma row given the labels.
pub(crate) fn update_gamma(
    theta: &mut Theta,
    compliance: &[ComplianceType],
    data: &Dataset,
    prior: &PriorSpec,
    scales: &mut [RwScale; 2],
    rng: &mut StreamRng,
) -> Result<()> {
    let mut current = gamma_log_target(theta, compliance, data, prior)?;
    for _ in 0..GAMMA_SUBSTEPS {
        for (row, scale) in scales.iter_mut().enumerate() {
            let mut proposal = theta.clone();
            let target = if row == 0 {
                &mut proposal.gamma_nt
            } else {
                &mut proposal.gamma_at
            };
            let s = scale.scale();
            for g in target.iter_mut() {
                *g += s * rng.sample::<f64, _>(StandardNormal);
            }
            let cand = gamma_log_target(&proposal, compliance, data, prior)?;
            if cand.is_nan() {
                return Err(Error::NumericalOverflow {
                    context: "compliance-model log target".into(),
                });
            }
            let accept = rng.gen::<f64>().ln() < cand - current;
            scale.record(accept);
            if accept {
                *theta = proposal;
                current = cand;
            }
        }
    }
    Ok(())
}
