//! Three-step posterior sampler.
//!
//! One sweep is
//!
//! 1. θ given the data ([`step_theta`]),
//! 2. every unit's compliance type given θ and its observed record
//!    ([`step_compliance`]),
//! 3. the complier cells that were never observed, given θ and the types
//!    ([`step_impute`]),
//!
//! after which the finite-sample complier contrast is read off the imputed
//! tables ([`late_draw`]).
//!
//! Step 1 comes in two kernels with the same stationary distribution.
//! [`ThetaUpdate::ConjugateGibbs`] conditions on the current labels (data
//! augmentation); [`ThetaUpdate::MarginalMh`] runs Metropolis on the
//! label-marginalized posterior and ignores the labels.

mod conjugate;
mod marginal;
mod tuning;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ComplianceType, Contrast, Dataset, ObservedUnit, PotentialTable};
use crate::error::{Error, Result};
use crate::model::{self, PriorSpec, Theta};
use crate::rng::{substream, StreamRng};
use crate::stats::log_sum_exp;

pub use tuning::{AcceptanceRates, RwScale, Tuning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaUpdate {
    #[default]
    ConjugateGibbs,
    MarginalMh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_draws: usize,
    pub theta_update: ThetaUpdate,
    /// Initial random-walk step for the Metropolis blocks of `marginal_mh`.
    pub mh_step_scale: f64,
    pub seed: u64,
    pub contrast: Contrast,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_draws: 2000,
            theta_update: ThetaUpdate::ConjugateGibbs,
            mh_step_scale: 0.1,
            seed: 0,
            contrast: Contrast::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::config("sampler.n_chains", "must be at least 1"));
        }
        if self.n_draws == 0 {
            return Err(Error::config("sampler.n_draws", "must be at least 1"));
        }
        if !(self.mh_step_scale > 0.0 && self.mh_step_scale.is_finite()) {
            return Err(Error::config("sampler.mh_step_scale", "must be positive"));
        }
        Ok(())
    }
}

/// Everything one chain carries between sweeps.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta: Theta,
    pub compliance: Vec<ComplianceType>,
    /// Observed cells copied from the data, missing defined cells imputed.
    pub imputed: Vec<PotentialTable>,
    pub iter: usize,
    pub rng: StreamRng,
    pub tuning: Tuning,
}

fn observed_table(c: ComplianceType, u: &ObservedUnit) -> PotentialTable {
    let mut t = PotentialTable::new(c);
    t.set_x2(u.w1, u.x2).expect("type consistent with receipts");
    t.set_y(u.w1, u.w2, u.y).expect("type consistent with receipts");
    t
}

fn sample_sd(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.len() < 2 {
        return 1.0;
    }
    let sd = crate::stats::variance(&v).sqrt();
    if sd > 0.0 && sd.is_finite() {
        sd
    } else {
        1.0
    }
}

fn check_data(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Schema("dataset has no units".into()));
    }
    if let Some(index) = data.first_inconsistent() {
        return Err(Error::InconsistentUnit { index });
    }
    Ok(())
}

impl ChainState {
    /// Labels drawn uniformly from each unit's consistent types; θ at the
    /// prior mean with noise scales set to the sample SDs of x2 and y.
    pub fn initial(data: &Dataset, cfg: &SamplerConfig, chain: usize) -> Result<Self> {
        check_data(data)?;
        let p = data.covariate_dim();
        let mut rng = substream(cfg.seed, "chain", chain as u64);
        let mut theta = Theta::zeros(p);
        theta.sigma_x = sample_sd(data.units().iter().map(|u| u.x2));
        theta.sigma_y = sample_sd(data.units().iter().map(|u| u.y));
        let compliance: Vec<ComplianceType> = data
            .units()
            .iter()
            .map(|u| {
                let support: Vec<_> = u.consistent_types().iter().collect();
                support[rng.gen_range(0..support.len())]
            })
            .collect();
        let imputed = data
            .units()
            .iter()
            .zip(&compliance)
            .map(|(u, &c)| observed_table(c, u))
            .collect();
        let tuning = match cfg.theta_update {
            ThetaUpdate::ConjugateGibbs => Tuning {
                gamma: Some([RwScale::new(0.2, 0.35), RwScale::new(0.2, 0.35)]),
                ..Tuning::default()
            },
            ThetaUpdate::MarginalMh => Tuning {
                blocks: marginal::initial_blocks(p, cfg.mh_step_scale),
                ..Tuning::default()
            },
        };
        let mut state = ChainState {
            theta,
            compliance,
            imputed,
            iter: 0,
            rng,
            tuning,
        };
        step_impute(&mut state, data);
        Ok(state)
    }

    pub fn n_compliers(&self) -> usize {
        self.compliance
            .iter()
            .filter(|&&c| c == ComplianceType::Complier)
            .count()
    }
}

/// Step 1: draw θ. Adapts proposal scales while `state.iter < cfg.n_warmup`.
pub fn step_theta(
    state: &mut ChainState,
    data: &Dataset,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<()> {
    let warmup = state.iter < cfg.n_warmup;
    state.tuning.set_adapting(warmup);
    match cfg.theta_update {
        ThetaUpdate::ConjugateGibbs => {
            let scales = state
                .tuning
                .gamma
                .get_or_insert_with(|| [RwScale::new(0.2, 0.35), RwScale::new(0.2, 0.35)]);
            conjugate::update_gamma(
                &mut state.theta,
                &state.compliance,
                data,
                prior,
                scales,
                &mut state.rng,
            )?;
            conjugate::update_regressions(
                &mut state.theta,
                &state.compliance,
                data,
                prior,
                &mut state.rng,
            )?;
        }
        ThetaUpdate::MarginalMh => {
            if state.tuning.blocks.is_empty() {
                state.tuning.blocks =
                    marginal::initial_blocks(data.covariate_dim(), cfg.mh_step_scale);
            }
            marginal::update(
                &mut state.theta,
                data,
                prior,
                &mut state.tuning.blocks,
                &mut state.rng,
            )?;
            if warmup {
                let (lo, mid) = (cfg.n_warmup / 4, cfg.n_warmup / 2);
                if (lo..mid).contains(&state.iter) {
                    state.tuning.history.push(state.theta.to_unconstrained());
                }
                if state.iter + 1 == mid {
                    let history = std::mem::take(&mut state.tuning.history);
                    marginal::adapt_shape(&mut state.tuning.blocks, &history);
                }
            }
        }
    }
    Ok(())
}

/// Normalized posterior over `(nt, co, at)` for one unit given θ.
/// Inconsistent types get exactly zero.
pub fn compliance_posterior(theta: &Theta, unit: &ObservedUnit) -> Result<[f64; 3]> {
    let w = model::type_log_weights(theta, unit)?;
    let total = log_sum_exp(&w);
    if total == f64::NEG_INFINITY {
        return Err(Error::InconsistentUnit { index: 0 });
    }
    if !total.is_finite() {
        return Err(Error::NumericalOverflow {
            context: "compliance posterior".into(),
        });
    }
    Ok(w.map(|x| (x - total).exp()))
}

/// Inverse CDF over the fixed order (nt, co, at), never landing on a
/// zero-probability type.
fn pick(probs: &[f64; 3], u: f64) -> ComplianceType {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for c in ComplianceType::ALL {
        let pr = probs[c.index()];
        if pr <= 0.0 {
            continue;
        }
        acc += pr;
        last = Some(c);
        if target < acc {
            return c;
        }
    }
    last.expect("at least one positive probability")
}

/// Step 2: redraw every unit's compliance type.
pub fn step_compliance(state: &mut ChainState, data: &Dataset) -> Result<()> {
    for (i, u) in data.units().iter().enumerate() {
        let probs = compliance_posterior(&state.theta, u).map_err(|e| match e {
            Error::InconsistentUnit { .. } => Error::InconsistentUnit { index: i },
            other => other,
        })?;
        let c = pick(&probs, state.rng.gen());
        if c != state.compliance[i] {
            state.compliance[i] = c;
            state.imputed[i] = observed_table(c, u);
        }
    }
    debug_assert!(data
        .units()
        .iter()
        .zip(&state.compliance)
        .all(|(u, c)| u.consistent_types().contains(*c)));
    Ok(())
}

/// Step 3: impute the unobserved complier cells. `x2` for the other
/// first-period receipt first, then the three unobserved `y` cells, each
/// using the `x2` cell that matches its first-period receipt.
pub fn step_impute(state: &mut ChainState, data: &Dataset) {
    let theta = &state.theta;
    for (i, u) in data.units().iter().enumerate() {
        if state.compliance[i] != ComplianceType::Complier {
            continue;
        }
        let c = ComplianceType::Complier;
        let table = &mut state.imputed[i];
        let w1m = !u.w1;
        let noise: f64 = state.rng.sample(StandardNormal);
        let x2m = model::intermediate_mean(theta, c, &u.x1, w1m) + theta.sigma_x * noise;
        table.set_x2(w1m, x2m).expect("complier cell");
        for w1 in [false, true] {
            let x2 = if w1 == u.w1 { u.x2 } else { x2m };
            for w2 in [false, true] {
                if (w1, w2) == (u.w1, u.w2) {
                    continue;
                }
                let noise: f64 = state.rng.sample(StandardNormal);
                let y = model::outcome_mean(theta, c, &u.x1, x2, w1, w2) + theta.sigma_y * noise;
                table.set_y(w1, w2, y).expect("complier cell");
            }
        }
    }
}

/// Finite-sample complier contrast of the current state.
pub fn late_draw(state: &ChainState, contrast: Contrast) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (t, c) in state.imputed.iter().zip(&state.compliance) {
        if *c == ComplianceType::Complier {
            sum += t.contrast(contrast)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoCompliersInDraw);
    }
    Ok(sum / n as f64)
}

/// One complete sweep: θ, labels, imputations.
pub fn sweep(
    state: &mut ChainState,
    data: &Dataset,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<()> {
    step_theta(state, data, prior, cfg)?;
    step_compliance(state, data)?;
    step_impute(state, data);
    state.iter += 1;
    Ok(())
}

/// Kept-sweep record.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawRecord {
    pub iter: usize,
    pub theta: Theta,
    pub n_co: usize,
    /// `None` when the sweep had no compliers.
    pub late: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub chain: usize,
    pub draws: Vec<DrawRecord>,
    /// Per unit, how many kept sweeps labeled it (nt, co, at).
    pub compliance_counts: Vec<[u64; 3]>,
    pub acceptance: AcceptanceRates,
}

/// Run warmup then `n_draws` kept sweeps from `state`. `observer` sees the
/// state after every kept sweep.
pub fn run_chain_from(
    mut state: ChainState,
    chain: usize,
    cfg: &SamplerConfig,
    data: &Dataset,
    prior: &PriorSpec,
    mut observer: impl FnMut(&ChainState),
) -> Result<ChainOutput> {
    cfg.validate()?;
    prior.validate()?;
    check_data(data)?;
    let total = cfg.n_warmup + cfg.n_draws;
    let mut draws = Vec::with_capacity(cfg.n_draws);
    let mut counts = vec![[0u64; 3]; data.len()];
    while state.iter < total {
        let iter = state.iter;
        sweep(&mut state, data, prior, cfg).map_err(|e| Error::AtIteration {
            iter,
            source: Box::new(e),
        })?;
        if iter < cfg.n_warmup {
            continue;
        }
        for (k, c) in state.compliance.iter().enumerate() {
            counts[k][c.index()] += 1;
        }
        let late = match late_draw(&state, cfg.contrast) {
            Ok(v) => Some(v),
            Err(Error::NoCompliersInDraw) => None,
            Err(e) => {
                return Err(Error::AtIteration {
                    iter,
                    source: Box::new(e),
                })
            }
        };
        draws.push(DrawRecord {
            iter,
            theta: state.theta.clone(),
            n_co: state.n_compliers(),
            late,
        });
        observer(&state);
    }
    Ok(ChainOutput {
        chain,
        draws,
        compliance_counts: counts,
        acceptance: state.tuning.acceptance(),
    })
}

pub fn run_chain(
    cfg: &SamplerConfig,
    data: &Dataset,
    prior: &PriorSpec,
    chain: usize,
) -> Result<ChainOutput> {
    let state = ChainState::initial(data, cfg, chain)?;
    run_chain_from(state, chain, cfg, data, prior, |_| {})
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub covariate_dim: usize,
    pub config: SamplerConfig,
    pub chains: Vec<ChainOutput>,
}

impl FitResult {
    /// Per-chain LATE draws with missing draws dropped.
    pub fn late_by_chain(&self) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.draws.iter().filter_map(|d| d.late).collect())
            .collect()
    }

    pub fn missing_late(&self) -> usize {
        self.chains
            .iter()
            .map(|c| c.draws.iter().filter(|d| d.late.is_none()).count())
            .sum()
    }

    /// Per-chain draws of flattened θ component `k` (see [`Theta::to_flat`]).
    pub fn theta_by_chain(&self, k: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.draws.iter().map(|d| d.theta.to_flat()[k]).collect())
            .collect()
    }

    pub fn theta_names(&self) -> Vec<String> {
        Theta::field_names(self.covariate_dim)
    }

    /// Posterior P(type) per unit pooled over chains.
    pub fn compliance_marginals(&self) -> Vec<[f64; 3]> {
        let n = self.chains.first().map_or(0, |c| c.compliance_counts.len());
        (0..n)
            .map(|i| {
                let mut tot = [0u64; 3];
                for ch in &self.chains {
                    for k in 0..3 {
                        tot[k] += ch.compliance_counts[i][k];
                    }
                }
                let s: u64 = tot.iter().sum();
                tot.map(|v| v as f64 / s as f64)
            })
            .collect()
    }
}

/// Run `cfg.n_chains` chains in parallel, each on its own substream.
pub fn fit(cfg: &SamplerConfig, data: &Dataset, prior: &PriorSpec) -> Result<FitResult> {
    cfg.validate()?;
    prior.validate()?;
    check_data(data)?;
    let chains = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(cfg, data, prior, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(FitResult {
        covariate_dim: data.covariate_dim(),
        config: cfg.clone(),
        chains,
    })
}

#[cfg(test)]
mod tests;
