//! Posterior summaries and the naive comparison estimators.
//!
//! The baselines (intention-to-treat, per-protocol, as-treated) are plain
//! differences in mean outcome between two groups. Their Wald intervals are
//! for display; none of them targets the complier effect when compliance is
//! related to outcomes.

use serde::{Deserialize, Serialize};

use crate::domain::{Contrast, Dataset, ObservedUnit};
use crate::error::{Error, Result};
use crate::gibbs::{AcceptanceRates, FitResult, ThetaUpdate};
use crate::stats::{mean, variance};
use crate::validate::diagnostics::{ess_chains, rhat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BayesLate,
    Itt,
    PerProtocol,
    AsTreated,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BayesLate => "bayes_late",
            Method::Itt => "itt",
            Method::PerProtocol => "per_protocol",
            Method::AsTreated => "as_treated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub point: f64,
    pub interval: Option<Interval>,
    pub n_used: usize,
}

/// Piecewise-linear quantile with knots at the midpoints `(k - 0.5) / n`
/// of the sorted sample (Hyndman-Fan type 5). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = n as f64 * q + 0.5;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean with the central 95% quantile interval.
pub fn summarize_posterior(draws: &[f64]) -> Result<EstimateReport> {
    if draws.len() < 2 {
        return Err(Error::TooFewDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    let s = sorted_copy(draws);
    Ok(EstimateReport {
        method: Method::BayesLate,
        point: mean(draws),
        interval: Some(Interval {
            lo: quantile_sorted(&s, 0.025),
            hi: quantile_sorted(&s, 0.975),
        }),
        n_used: draws.len(),
    })
}

fn arm_label(arm: (bool, bool)) -> String {
    format!("({},{})", arm.0 as u8, arm.1 as u8)
}

fn difference_in_means<'a>(
    method: Method,
    units: impl Iterator<Item = &'a ObservedUnit>,
    key: impl Fn(&ObservedUnit) -> (bool, bool),
    arms: Contrast,
) -> Result<EstimateReport> {
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for u in units {
        let k = key(u);
        if k == arms.treated {
            treated.push(u.y);
        } else if k == arms.control {
            control.push(u.y);
        }
    }
    for (arm, ys) in [(arms.treated, &treated), (arms.control, &control)] {
        if ys.is_empty() {
            return Err(Error::EmptyArm {
                arm: arm_label(arm),
            });
        }
    }
    let (n1, n0) = (treated.len() as f64, control.len() as f64);
    let point = mean(&treated) - mean(&control);
    let df = n1 + n0 - 2.0;
    let interval = (df > 0.0).then(|| {
        let ss = |ys: &[f64]| if ys.len() > 1 { variance(ys) * (ys.len() as f64 - 1.0) } else { 0.0 };
        let pooled = (ss(&treated) + ss(&control)) / df;
        let se = (pooled * (1.0 / n1 + 1.0 / n0)).sqrt();
        Interval {
            lo: point - 1.959_963_984_540_054 * se,
            hi: point + 1.959_963_984_540_054 * se,
        }
    });
    Ok(EstimateReport {
        method,
        point,
        interval,
        n_used: treated.len() + control.len(),
    })
}

/// Groups by assignment `(z1, z2)`.
pub fn itt_estimate(data: &Dataset, arms: Contrast) -> Result<EstimateReport> {
    difference_in_means(Method::Itt, data.units().iter(), |u| (u.z1, u.z2), arms)
}

/// Assignment groups restricted to units that took what they were assigned
/// in both periods.
pub fn per_protocol_estimate(data: &Dataset, arms: Contrast) -> Result<EstimateReport> {
    difference_in_means(
        Method::PerProtocol,
        data.units().iter().filter(|u| u.w1 == u.z1 && u.w2 == u.z2),
        |u| (u.z1, u.z2),
        arms,
    )
}

/// Groups by receipt `(w1, w2)`.
pub fn as_treated_estimate(data: &Dataset, arms: Contrast) -> Result<EstimateReport> {
    difference_in_means(Method::AsTreated, data.units().iter(), |u| (u.w1, u.w2), arms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

impl ParamSummary {
    pub fn from_chains(name: &str, chains: &[Vec<f64>]) -> Result<Self> {
        let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
        if pooled.len() < 2 {
            return Err(Error::TooFewDraws {
                needed: 2,
                got: pooled.len(),
            });
        }
        let s = sorted_copy(&pooled);
        Ok(ParamSummary {
            name: name.to_string(),
            mean: mean(&pooled),
            sd: variance(&pooled).sqrt(),
            q025: quantile_sorted(&s, 0.025),
            q50: quantile_sorted(&s, 0.5),
            q975: quantile_sorted(&s, 0.975),
            rhat: rhat(chains).ok(),
            ess: ess_chains(chains).ok(),
        })
    }

    /// Monte Carlo standard error of the mean, `sd / sqrt(ess)`.
    pub fn mcse(&self) -> Option<f64> {
        self.ess.map(|e| self.sd / e.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_draws: usize,
    pub theta_update: ThetaUpdate,
    pub seed: u64,
    pub missing_late_draws: usize,
    pub max_rhat: Option<f64>,
    pub min_ess: Option<f64>,
    pub acceptance: Vec<AcceptanceRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub contrast: Contrast,
    pub late: ParamSummary,
    pub theta: Vec<ParamSummary>,
    pub diagnostics: FitDiagnostics,
}

impl FitSummary {
    pub fn from_fit(fit: &FitResult) -> Result<Self> {
        let late = ParamSummary::from_chains("late", &fit.late_by_chain())?;
        let theta = fit
            .theta_names()
            .iter()
            .enumerate()
            .map(|(k, name)| ParamSummary::from_chains(name, &fit.theta_by_chain(k)))
            .collect::<Result<Vec<_>>>()?;
        let all = std::iter::once(&late).chain(&theta);
        let max_rhat = all.clone().filter_map(|s| s.rhat).reduce(f64::max);
        let min_ess = all.filter_map(|s| s.ess).reduce(f64::min);
        let cfg = &fit.config;
        Ok(FitSummary {
            contrast: cfg.contrast,
            late,
            theta,
            diagnostics: FitDiagnostics {
                n_chains: cfg.n_chains,
                n_warmup: cfg.n_warmup,
                n_draws: cfg.n_draws,
                theta_update: cfg.theta_update,
                seed: cfg.seed,
                missing_late_draws: fit.missing_late(),
                max_rhat,
                min_ess,
                acceptance: fit.chains.iter().map(|c| c.acceptance.clone()).collect(),
            },
        })
    }

    pub fn bayes_report(&self) -> EstimateReport {
        EstimateReport {
            method: Method::BayesLate,
            point: self.late.mean,
            interval: Some(Interval {
                lo: self.late.q025,
                hi: self.late.q975,
            }),
            n_used: 0,
        }
    }
}
