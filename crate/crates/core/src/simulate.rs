//! Data-generating process with full ground truth.
//!
//! Every unit owns a random substream keyed by `(seed, "unit", index)` and
//! draws a fixed number of variates in a fixed order, one noise term per
//! potential cell whether or not the cell is defined for its type. Flipping
//! an assignment therefore changes nothing for nevertakers and alwaystakers
//! (common random numbers), and output does not depend on thread schedule.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    realized_treatment, x2_cell_defined, y_cell_defined, ComplianceType, Contrast, Dataset,
    ObservedUnit, PotentialTable,
};
use crate::error::{Error, Result};
use crate::model::{self, Theta};
use crate::rng::substream;
use crate::stats::logistic;

/// How compliance types are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplianceSpec {
    /// Fixed simplex over `(nt, co, at)`.
    Constant([f64; 3]),
    /// Multinomial logit on `(1, x1)` with the complier as baseline.
    Logit {
        gamma_nt: Vec<f64>,
        gamma_at: Vec<f64>,
    },
}

/// How assignments are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssignmentSpec {
    /// `P(z1 = 1)`, `P(z2 = 1)`.
    Constant([f64; 2]),
    /// `P(z1 = 1) = logistic(z1 . (1, x1))` and
    /// `P(z2 = 1) = logistic(z2 . (1, x1, x2_obs))`.
    Logistic { z1: Vec<f64>, z2: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    pub compliance_probs: ComplianceSpec,
    pub assignment_probs: AssignmentSpec,
    /// `[intercept, x1..., w1, at, nt]`
    pub intermediate_coeffs: Vec<f64>,
    pub sigma_x: f64,
    /// `[intercept, x1..., x2, w1, w2, w1*w2, at, nt]`
    pub outcome_coeffs: Vec<f64>,
    pub sigma_y: f64,
    /// Also draw cells the unit's type leaves undefined (diagnostic mode).
    pub all_cells: bool,
    pub seed: u64,
}

fn check_prob(field: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::config(field, format!("probability {v} outside [0, 1]")));
    }
    Ok(())
}

fn check_len(field: &str, v: &[f64], want: usize) -> Result<()> {
    if v.len() != want {
        return Err(Error::config(field, format!("expected length {want}, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(field, "entries must be finite"));
    }
    Ok(())
}

impl DgpConfig {
    /// Default coefficients for `p` covariates with a unit treatment effect
    /// per period and confounded stratum intercepts.
    pub fn with_defaults(n: usize, p: usize, seed: u64) -> Self {
        let mut alpha = vec![0.0];
        alpha.extend(std::iter::repeat(0.5).take(p));
        alpha.extend([1.0, 0.5, -0.5]);
        let mut beta = vec![0.0];
        beta.extend(std::iter::repeat(0.5).take(p));
        beta.extend([0.5, 1.0, 1.0, 0.5, -1.0, 1.0]);
        DgpConfig {
            n,
            p,
            compliance_probs: ComplianceSpec::Constant([0.2, 0.6, 0.2]),
            assignment_probs: AssignmentSpec::Constant([0.5, 0.5]),
            intermediate_coeffs: alpha,
            sigma_x: 1.0,
            outcome_coeffs: beta,
            sigma_y: 1.0,
            all_cells: false,
            seed,
        }
    }

    /// A configuration that generates data from exactly the fitted model at
    /// parameter `theta`.
    pub fn from_theta(theta: &Theta, n: usize, assignment: AssignmentSpec, seed: u64) -> Self {
        DgpConfig {
            n,
            p: theta.covariate_dim(),
            compliance_probs: ComplianceSpec::Logit {
                gamma_nt: theta.gamma_nt.clone(),
                gamma_at: theta.gamma_at.clone(),
            },
            assignment_probs: assignment,
            intermediate_coeffs: theta.alpha.clone(),
            sigma_x: theta.sigma_x,
            outcome_coeffs: theta.beta.clone(),
            sigma_y: theta.sigma_y,
            all_cells: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be positive"));
        }
        let p = self.p;
        match &self.compliance_probs {
            ComplianceSpec::Constant(pr) => {
                for v in pr {
                    check_prob("compliance_probs", *v)?;
                }
                let s: f64 = pr.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::config("compliance_probs", format!("sums to {s}, not 1")));
                }
            }
            ComplianceSpec::Logit { gamma_nt, gamma_at } => {
                check_len("compliance_probs.gamma_nt", gamma_nt, model::gamma_len(p))?;
                check_len("compliance_probs.gamma_at", gamma_at, model::gamma_len(p))?;
            }
        }
        match &self.assignment_probs {
            AssignmentSpec::Constant(pr) => {
                check_prob("assignment_probs", pr[0])?;
                check_prob("assignment_probs", pr[1])?;
            }
            AssignmentSpec::Logistic { z1, z2 } => {
                check_len("assignment_probs.z1", z1, p + 1)?;
                check_len("assignment_probs.z2", z2, p + 2)?;
            }
        }
        check_len("intermediate_coeffs", &self.intermediate_coeffs, model::alpha_len(p))?;
        check_len("outcome_coeffs", &self.outcome_coeffs, model::beta_len(p))?;
        for (field, sd) in [
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
        ] {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::config(field, "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Outcome-model parameters in [`Theta`] form. Constant compliance
    /// probabilities leave the gamma rows at zero.
    pub fn theta(&self) -> Theta {
        let (gamma_nt, gamma_at) = match &self.compliance_probs {
            ComplianceSpec::Logit { gamma_nt, gamma_at } => (gamma_nt.clone(), gamma_at.clone()),
            ComplianceSpec::Constant(_) => (vec![0.0; self.p + 1], vec![0.0; self.p + 1]),
        };
        Theta {
            gamma_nt,
            gamma_at,
            alpha: self.intermediate_coeffs.clone(),
            sigma_x: self.sigma_x,
            beta: self.outcome_coeffs.clone(),
            sigma_y: self.sigma_y,
        }
    }

    fn compliance_probs_at(&self, theta: &Theta, x1: &[f64]) -> [f64; 3] {
        match &self.compliance_probs {
            ComplianceSpec::Constant(pr) => *pr,
            ComplianceSpec::Logit { .. } => {
                model::compliance_prob(theta, x1).expect("dimension checked by validate")
            }
        }
    }

    fn p_z1(&self, x1: &[f64]) -> f64 {
        match &self.assignment_probs {
            AssignmentSpec::Constant(pr) => pr[0],
            AssignmentSpec::Logistic { z1, .. } => {
                logistic(z1[0] + z1[1..].iter().zip(x1).map(|(a, b)| a * b).sum::<f64>())
            }
        }
    }

    fn p_z2(&self, x1: &[f64], x2_obs: f64) -> f64 {
        match &self.assignment_probs {
            AssignmentSpec::Constant(pr) => pr[1],
            AssignmentSpec::Logistic { z2, .. } => {
                let p = x1.len();
                let lin = z2[0] + z2[1..=p].iter().zip(x1).map(|(a, b)| a * b).sum::<f64>();
                logistic(lin + z2[p + 1] * x2_obs)
            }
        }
    }
}

/// Raw randomness of one unit, drawn before anything is realized.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDraws {
    pub x1: Vec<f64>,
    pub u_compliance: f64,
    pub u_z1: f64,
    pub u_z2: f64,
    /// Standardized noise for `x2(0)`, `x2(1)`.
    pub e_x2: [f64; 2],
    /// Standardized noise for `y(0,0)`, `y(0,1)`, `y(1,0)`, `y(1,1)`.
    pub e_y: [f64; 4],
}

impl UnitDraws {
    pub fn draw(cfg: &DgpConfig, index: usize) -> Self {
        let mut rng = substream(cfg.seed, "unit", index as u64);
        let x1 = (0..cfg.p).map(|_| rng.sample(StandardNormal)).collect();
        let u_compliance = rng.gen();
        let u_z1 = rng.gen();
        let u_z2 = rng.gen();
        let e_x2 = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let e_y = std::array::from_fn(|_| rng.sample(StandardNormal));
        UnitDraws {
            x1,
            u_compliance,
            u_z1,
            u_z2,
            e_x2,
            e_y,
        }
    }
}

fn pick_type(probs: &[f64; 3], u: f64) -> ComplianceType {
    let mut acc = 0.0;
    for c in ComplianceType::ALL {
        acc += probs[c.index()];
        if u < acc {
            return c;
        }
    }
    // u landed in floating-point slack above the last cumulative sum
    ComplianceType::ALL
        .into_iter()
        .rev()
        .find(|c| probs[c.index()] > 0.0)
        .unwrap_or(ComplianceType::Complier)
}

/// Turn a unit's raw draws into its observed record and potential table.
/// `assign` overrides the drawn assignments (counterfactual regeneration).
pub fn realize_unit(
    cfg: &DgpConfig,
    theta: &Theta,
    draws: &UnitDraws,
    assign: Option<(bool, bool)>,
) -> (ObservedUnit, PotentialTable) {
    let x1 = &draws.x1;
    let c = pick_type(&cfg.compliance_probs_at(theta, x1), draws.u_compliance);
    let mut table = if cfg.all_cells {
        PotentialTable::all_cells(c)
    } else {
        PotentialTable::new(c)
    };
    for w1 in [false, true] {
        if !(cfg.all_cells || x2_cell_defined(c, w1)) {
            continue;
        }
        let x2 = model::intermediate_mean(theta, c, x1, w1) + theta.sigma_x * draws.e_x2[w1 as usize];
        table.set_x2(w1, x2).expect("cell defined");
        for w2 in [false, true] {
            if !(cfg.all_cells || y_cell_defined(c, w1, w2)) {
                continue;
            }
            let e = draws.e_y[2 * w1 as usize + w2 as usize];
            let y = model::outcome_mean(theta, c, x1, x2, w1, w2) + theta.sigma_y * e;
            table.set_y(w1, w2, y).expect("cell defined");
        }
    }

    let z1 = assign.map_or_else(|| draws.u_z1 < cfg.p_z1(x1), |a| a.0);
    let w1 = realized_treatment(c, z1);
    let x2 = table.x2_of(w1).value().expect("realized x2 cell is defined");
    let z2 = assign.map_or_else(|| draws.u_z2 < cfg.p_z2(x1, x2), |a| a.1);
    let w2 = realized_treatment(c, z2);
    let y = table.y_of(w1, w2).value().expect("realized y cell is defined");
    let unit = ObservedUnit {
        x1: x1.clone(),
        z1,
        w1,
        x2,
        z2,
        w2,
        y,
    };
    (unit, table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub compliance: Vec<ComplianceType>,
    pub tables: Vec<PotentialTable>,
    /// Finite-sample LATE for `(1,1)` vs `(0,0)`; absent without compliers.
    pub true_late: Option<f64>,
    pub n_co: usize,
}

pub fn simulate_dataset(cfg: &DgpConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let theta = cfg.theta();
    let pairs: Vec<(ObservedUnit, PotentialTable)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| realize_unit(cfg, &theta, &UnitDraws::draw(cfg, i), None))
        .collect();
    let (units, tables): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let compliance: Vec<ComplianceType> = tables.iter().map(|t| t.compliance()).collect();
    let n_co = compliance
        .iter()
        .filter(|&&c| c == ComplianceType::Complier)
        .count();
    let mut truth = GroundTruth {
        compliance,
        tables,
        true_late: None,
        n_co,
    };
    truth.true_late = true_sample_late(&truth, Contrast::default()).ok();
    Ok((Dataset::new(cfg.p, units)?, truth))
}

/// Average contrast over the simulated compliers.
pub fn true_sample_late(gt: &GroundTruth, contrast: Contrast) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in gt.tables.iter().filter(|t| t.compliance() == ComplianceType::Complier) {
        sum += t.contrast(contrast)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoCompliers);
    }
    Ok(sum / n as f64)
}

/// Average contrast over every unit; needs tables from `all_cells` mode
/// unless the population is all compliers.
pub fn true_sample_sate(gt: &GroundTruth, contrast: Contrast) -> Result<f64> {
    if gt.tables.is_empty() {
        return Err(Error::NoCompliers);
    }
    let mut sum = 0.0;
    for t in &gt.tables {
        sum += t.contrast(contrast)?;
    }
    Ok(sum / gt.tables.len() as f64)
}
