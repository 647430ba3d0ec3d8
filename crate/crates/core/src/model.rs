//! Parametric likelihood and prior.
//!
//! * compliance: multinomial logit on `(1, x1)` with the complier as the
//!   zero-logit baseline;
//! * intermediate outcome: `x2 ~ N(alpha . (1, x1, w1, at, nt), sigma_x)`;
//! * final outcome: `y ~ N(beta . (1, x1, x2, w1, w2, w1*w2, at, nt), sigma_y)`.
//!
//! Assignment probabilities never appear: given the observed history they
//! factor out of every posterior this crate computes. Everything is in log
//! space; probabilities are only exponentiated when normalizing over types.

use serde::{Deserialize, Serialize};

use crate::domain::{ComplianceType, ObservedUnit};
use crate::error::{Error, Result};
use crate::stats::{inv_gamma_logpdf, log_sum_exp, normal_logpdf};

/// Model parameters. Coefficient layouts:
///
/// * `gamma_nt`, `gamma_at`: `[intercept, x1...]`
/// * `alpha`: `[intercept, x1..., w1, at, nt]`
/// * `beta`: `[intercept, x1..., x2, w1, w2, w1*w2, at, nt]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theta {
    pub gamma_nt: Vec<f64>,
    pub gamma_at: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma_x: f64,
    pub beta: Vec<f64>,
    pub sigma_y: f64,
}

pub const fn gamma_len(p: usize) -> usize {
    p + 1
}

pub const fn alpha_len(p: usize) -> usize {
    p + 4
}

pub const fn beta_len(p: usize) -> usize {
    p + 7
}

/// Length of [`Theta::to_unconstrained`].
pub const fn unconstrained_len(p: usize) -> usize {
    2 * gamma_len(p) + alpha_len(p) + beta_len(p) + 2
}

impl Theta {
    /// All coefficients zero, unit noise scales.
    pub fn zeros(p: usize) -> Self {
        Theta {
            gamma_nt: vec![0.0; gamma_len(p)],
            gamma_at: vec![0.0; gamma_len(p)],
            alpha: vec![0.0; alpha_len(p)],
            sigma_x: 1.0,
            beta: vec![0.0; beta_len(p)],
            sigma_y: 1.0,
        }
    }

    pub fn covariate_dim(&self) -> usize {
        self.gamma_nt.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.covariate_dim();
        let lens = [
            ("gamma_nt", self.gamma_nt.len(), gamma_len(p)),
            ("gamma_at", self.gamma_at.len(), gamma_len(p)),
            ("alpha", self.alpha.len(), alpha_len(p)),
            ("beta", self.beta.len(), beta_len(p)),
        ];
        for (name, got, want) in lens {
            if got != want || got == 0 {
                return Err(Error::config(name, format!("expected length {want}, got {got}")));
            }
        }
        if !(self.sigma_x > 0.0 && self.sigma_x.is_finite()) {
            return Err(Error::config("sigma_x", "must be positive and finite"));
        }
        if !(self.sigma_y > 0.0 && self.sigma_y.is_finite()) {
            return Err(Error::config("sigma_y", "must be positive and finite"));
        }
        let all_finite = self
            .gamma_nt
            .iter()
            .chain(&self.gamma_at)
            .chain(&self.alpha)
            .chain(&self.beta)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::config("theta", "coefficients must be finite"));
        }
        Ok(())
    }

    /// Flatten to `[gamma_nt, gamma_at, alpha, ln sigma_x, beta, ln sigma_y]`.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(unconstrained_len(self.covariate_dim()));
        v.extend_from_slice(&self.gamma_nt);
        v.extend_from_slice(&self.gamma_at);
        v.extend_from_slice(&self.alpha);
        v.push(self.sigma_x.ln());
        v.extend_from_slice(&self.beta);
        v.push(self.sigma_y.ln());
        v
    }

    pub fn from_unconstrained(p: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), unconstrained_len(p), "unconstrained vector length");
        let (gamma_nt, rest) = v.split_at(gamma_len(p));
        let (gamma_at, rest) = rest.split_at(gamma_len(p));
        let (alpha, rest) = rest.split_at(alpha_len(p));
        let (log_sx, rest) = rest.split_at(1);
        let (beta, log_sy) = rest.split_at(beta_len(p));
        Theta {
            gamma_nt: gamma_nt.to_vec(),
            gamma_at: gamma_at.to_vec(),
            alpha: alpha.to_vec(),
            sigma_x: log_sx[0].exp(),
            beta: beta.to_vec(),
            sigma_y: log_sy[0].exp(),
        }
    }

    /// Column names matching [`Theta::to_flat`], for draws tables.
    pub fn field_names(p: usize) -> Vec<String> {
        let mut names = Vec::new();
        names.extend((0..gamma_len(p)).map(|i| format!("gamma_nt_{i}")));
        names.extend((0..gamma_len(p)).map(|i| format!("gamma_at_{i}")));
        names.extend((0..alpha_len(p)).map(|i| format!("alpha_{i}")));
        names.push("sigma_x".into());
        names.extend((0..beta_len(p)).map(|i| format!("beta_{i}")));
        names.push("sigma_y".into());
        names
    }

    /// Same order as [`Theta::to_unconstrained`] with the scales untransformed.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.to_unconstrained();
        let p = self.covariate_dim();
        let sx = 2 * gamma_len(p) + alpha_len(p);
        v[sx] = self.sigma_x;
        v[sx + 1 + beta_len(p)] = self.sigma_y;
        v
    }

    pub fn check_dim(&self, x1: &[f64]) -> Result<()> {
        let p = self.covariate_dim();
        if x1.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: x1.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    /// Standard deviation of the zero-mean normal prior on every coefficient.
    pub tau: f64,
    /// Inverse-gamma shape for both variances.
    pub a0: f64,
    /// Inverse-gamma rate for both variances.
    pub b0: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            tau: 5.0,
            a0: 2.0,
            b0: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("prior.tau", self.tau), ("prior.a0", self.a0), ("prior.b0", self.b0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive and finite"));
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn affine(coef: &[f64], x1: &[f64]) -> f64 {
    coef[0] + dot(&coef[1..], x1)
}

/// Compliance logits `(nt, co, at)` with the complier fixed at zero.
pub fn compliance_logits(theta: &Theta, x1: &[f64]) -> [f64; 3] {
    [affine(&theta.gamma_nt, x1), 0.0, affine(&theta.gamma_at, x1)]
}

/// Log probabilities over `(nt, co, at)`.
pub fn compliance_logprob(theta: &Theta, x1: &[f64]) -> Result<[f64; 3]> {
    theta.check_dim(x1)?;
    let eta = compliance_logits(theta, x1);
    let lse = log_sum_exp(&eta);
    Ok(eta.map(|e| e - lse))
}

/// Probabilities over `(nt, co, at)`.
pub fn compliance_prob(theta: &Theta, x1: &[f64]) -> Result<[f64; 3]> {
    Ok(compliance_logprob(theta, x1)?.map(f64::exp))
}

/// 1 when type `c` assigned `z` receives `w`, else 0.
pub fn treatment_lik(c: ComplianceType, z: bool, w: bool) -> u8 {
    (crate::domain::realized_treatment(c, z) == w) as u8
}

fn type_flags(c: ComplianceType) -> (f64, f64) {
    (c.is_alwaystaker() as u8 as f64, c.is_nevertaker() as u8 as f64)
}

/// Design row of the intermediate model: `(1, x1, w1, at, nt)`.
pub fn intermediate_design(c: ComplianceType, x1: &[f64], w1: bool, out: &mut Vec<f64>) {
    let (at, nt) = type_flags(c);
    out.clear();
    out.push(1.0);
    out.extend_from_slice(x1);
    out.extend_from_slice(&[w1 as u8 as f64, at, nt]);
}

/// Design row of the outcome model: `(1, x1, x2, w1, w2, w1*w2, at, nt)`.
pub fn outcome_design(
    c: ComplianceType,
    x1: &[f64],
    x2: f64,
    w1: bool,
    w2: bool,
    out: &mut Vec<f64>,
) {
    let (at, nt) = type_flags(c);
    let (a, b) = (w1 as u8 as f64, w2 as u8 as f64);
    out.clear();
    out.push(1.0);
    out.extend_from_slice(x1);
    out.extend_from_slice(&[x2, a, b, a * b, at, nt]);
}

pub fn intermediate_mean(theta: &Theta, c: ComplianceType, x1: &[f64], w1: bool) -> f64 {
    let p = x1.len();
    let (at, nt) = type_flags(c);
    let a = &theta.alpha;
    affine(&a[..=p], x1) + a[p + 1] * (w1 as u8 as f64) + a[p + 2] * at + a[p + 3] * nt
}

pub fn outcome_mean(
    theta: &Theta,
    c: ComplianceType,
    x1: &[f64],
    x2: f64,
    w1: bool,
    w2: bool,
) -> f64 {
    let p = x1.len();
    let (at, nt) = type_flags(c);
    let (w1, w2) = (w1 as u8 as f64, w2 as u8 as f64);
    let b = &theta.beta;
    affine(&b[..=p], x1)
        + b[p + 1] * x2
        + b[p + 2] * w1
        + b[p + 3] * w2
        + b[p + 4] * w1 * w2
        + b[p + 5] * at
        + b[p + 6] * nt
}

/// `log N(x2 | intermediate mean, sigma_x)`. Assignment enters only through
/// the receipt `w1` and the type.
pub fn intermediate_loglik(theta: &Theta, c: ComplianceType, x1: &[f64], w1: bool, x2: f64) -> f64 {
    normal_logpdf(x2, intermediate_mean(theta, c, x1, w1), theta.sigma_x)
}

pub fn outcome_loglik(
    theta: &Theta,
    c: ComplianceType,
    x1: &[f64],
    x2: f64,
    w1: bool,
    w2: bool,
    y: f64,
) -> f64 {
    normal_logpdf(y, outcome_mean(theta, c, x1, x2, w1, w2), theta.sigma_y)
}

/// Log of the compliance, intermediate and outcome factors for one unit
/// under type `c`, excluding the treatment indicators.
pub fn complete_loglik(theta: &Theta, c: ComplianceType, unit: &ObservedUnit, logprob: &[f64; 3]) -> f64 {
    logprob[c.index()]
        + intermediate_loglik(theta, c, &unit.x1, unit.w1, unit.x2)
        + outcome_loglik(theta, c, &unit.x1, unit.x2, unit.w1, unit.w2, unit.y)
}

/// Per-type log weights for one unit; inconsistent types get `-inf` without
/// their likelihood factors being evaluated. `probe` sees every type whose
/// factors are evaluated.
pub fn type_log_weights_probed(
    theta: &Theta,
    unit: &ObservedUnit,
    probe: &mut dyn FnMut(ComplianceType),
) -> Result<[f64; 3]> {
    let logprob = compliance_logprob(theta, &unit.x1)?;
    let support = unit.consistent_types();
    let mut out = [f64::NEG_INFINITY; 3];
    for c in support.iter() {
        probe(c);
        out[c.index()] = complete_loglik(theta, c, unit, &logprob);
    }
    Ok(out)
}

pub fn type_log_weights(theta: &Theta, unit: &ObservedUnit) -> Result<[f64; 3]> {
    type_log_weights_probed(theta, unit, &mut |_| {})
}

/// Log of the unit's contribution with the compliance type summed out.
pub fn unit_marginal_loglik(theta: &Theta, unit: &ObservedUnit) -> Result<f64> {
    unit_marginal_loglik_probed(theta, unit, &mut |_| {})
}

pub fn unit_marginal_loglik_probed(
    theta: &Theta,
    unit: &ObservedUnit,
    probe: &mut dyn FnMut(ComplianceType),
) -> Result<f64> {
    if unit.consistent_types().is_empty() {
        return Err(Error::InconsistentUnit { index: 0 });
    }
    let w = type_log_weights_probed(theta, unit, probe)?;
    Ok(log_sum_exp(&w))
}

/// Value and gradient of [`unit_marginal_loglik`] in the
/// [`Theta::to_unconstrained`] parameterization (scales on the log axis).
pub fn unit_marginal_loglik_grad(theta: &Theta, unit: &ObservedUnit) -> Result<(f64, Vec<f64>)> {
    if unit.consistent_types().is_empty() {
        return Err(Error::InconsistentUnit { index: 0 });
    }
    let p = theta.covariate_dim();
    theta.check_dim(&unit.x1)?;
    let weights = type_log_weights(theta, unit)?;
    let total = log_sum_exp(&weights);
    let probs = compliance_prob(theta, &unit.x1)?;

    let g_len = gamma_len(p);
    let off_alpha = 2 * g_len;
    let off_sx = off_alpha + alpha_len(p);
    let off_beta = off_sx + 1;
    let off_sy = off_beta + beta_len(p);
    let mut grad = vec![0.0; unconstrained_len(p)];
    let mut row = Vec::with_capacity(beta_len(p));

    for c in unit.consistent_types().iter() {
        let r = (weights[c.index()] - total).exp();
        if r == 0.0 {
            continue;
        }
        // d log softmax_c / d gamma_k = (1[c = k] - pi_k) * (1, x1)
        let d_nt = (c.is_nevertaker() as u8 as f64) - probs[0];
        let d_at = (c.is_alwaystaker() as u8 as f64) - probs[2];
        grad[0] += r * d_nt;
        grad[g_len] += r * d_at;
        for (j, x) in unit.x1.iter().enumerate() {
            grad[1 + j] += r * d_nt * x;
            grad[g_len + 1 + j] += r * d_at * x;
        }

        let sx2 = theta.sigma_x * theta.sigma_x;
        let res_x = unit.x2 - intermediate_mean(theta, c, &unit.x1, unit.w1);
        intermediate_design(c, &unit.x1, unit.w1, &mut row);
        for (k, d) in row.iter().enumerate() {
            grad[off_alpha + k] += r * res_x / sx2 * d;
        }
        grad[off_sx] += r * (res_x * res_x / sx2 - 1.0);

        let sy2 = theta.sigma_y * theta.sigma_y;
        let res_y = unit.y - outcome_mean(theta, c, &unit.x1, unit.x2, unit.w1, unit.w2);
        outcome_design(c, &unit.x1, unit.x2, unit.w1, unit.w2, &mut row);
        for (k, d) in row.iter().enumerate() {
            grad[off_beta + k] += r * res_y / sy2 * d;
        }
        grad[off_sy] += r * (res_y * res_y / sy2 - 1.0);
    }
    Ok((total, grad))
}

/// Normal log density of every coefficient plus inverse-gamma log density of
/// both variances.
pub fn log_prior(theta: &Theta, prior: &PriorSpec) -> f64 {
    let coef: f64 = theta
        .gamma_nt
        .iter()
        .chain(&theta.gamma_at)
        .chain(&theta.alpha)
        .chain(&theta.beta)
        .map(|&b| normal_logpdf(b, 0.0, prior.tau))
        .sum();
    coef + inv_gamma_logpdf(theta.sigma_x.powi(2), prior.a0, prior.b0)
        + inv_gamma_logpdf(theta.sigma_y.powi(2), prior.a0, prior.b0)
}

/// Log prior density of the [`Theta::to_unconstrained`] vector: adds the
/// Jacobian `ln(2 sigma^2)` of each variance-to-log-scale map.
pub fn log_prior_unconstrained(theta: &Theta, prior: &PriorSpec) -> f64 {
    log_prior(theta, prior)
        + (2.0 * theta.sigma_x.powi(2)).ln()
        + (2.0 * theta.sigma_y.powi(2)).ln()
}
