//! Exact posteriors on tiny discrete instances, and convergence diagnostics.
//!
//! With θ restricted to a finite grid the joint posterior over
//! `(θ, C_1..C_N)` has `|grid| * 3^N` atoms and can be summed outright.
//! [`grid_gibbs`] runs the sampler's own compliance and imputation steps with
//! θ drawn exactly from the grid, so the two can be compared directly.

pub mod diagnostics;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ComplianceType, Contrast, Dataset, ObservedUnit, PotentialTable};
use crate::error::{Error, Result};
use crate::gibbs::{self, ChainState, SamplerConfig};
use crate::model::{self, Theta};
use crate::stats::{log_sum_exp, CompensatedSum};

pub use diagnostics::{ess, ess_chains, rhat};

pub const MAX_UNITS: usize = 8;
pub const DEFAULT_BUDGET: u128 = 1_000_000;

fn default_max_units() -> usize {
    MAX_UNITS
}

fn default_budget() -> u128 {
    DEFAULT_BUDGET
}

/// A finite prior over θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteSpec {
    pub theta_grid: Vec<Theta>,
    pub weights: Vec<f64>,
    #[serde(default = "default_max_units")]
    pub max_units: usize,
    /// Largest number of `(θ, C)` configurations to enumerate.
    #[serde(default = "default_budget")]
    pub budget: u128,
}

impl DiscreteSpec {
    pub fn new(theta_grid: Vec<Theta>, weights: Vec<f64>) -> Result<Self> {
        let spec = DiscreteSpec {
            theta_grid,
            weights,
            max_units: MAX_UNITS,
            budget: DEFAULT_BUDGET,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_grid.is_empty() {
            return Err(Error::config("theta_grid", "must not be empty"));
        }
        if self.weights.len() != self.theta_grid.len() {
            return Err(Error::config("weights", "one weight per grid point"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::config("weights", "must be finite and non-negative"));
        }
        let total: f64 = self.weights.iter().copied().collect::<CompensatedSum>().value();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config("weights", format!("sum to {total}, not 1")));
        }
        if self.max_units > MAX_UNITS {
            return Err(Error::config("max_units", format!("at most {MAX_UNITS}")));
        }
        let p = self.theta_grid[0].covariate_dim();
        for t in &self.theta_grid {
            t.validate()?;
            if t.covariate_dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: t.covariate_dim(),
                });
            }
        }
        Ok(())
    }
}

/// Exact posterior of a [`DiscreteSpec`] model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPosterior {
    pub theta_posterior: Vec<f64>,
    /// Per unit, posterior over `(nt, co, at)`.
    pub unit_marginals: Vec<[f64; 3]>,
    /// Log of the prior-weighted likelihood summed over every configuration.
    pub log_evidence: f64,
    /// Posterior mass of configurations with no compliers.
    pub prob_no_compliers: f64,
    /// LATE at imputation means, conditional on at least one complier.
    pub late_mean: Option<f64>,
    /// `(value, probability)` pairs of the same, sorted by value, conditional
    /// on at least one complier.
    pub late_atoms: Vec<(f64, f64)>,
}

/// Potential table of a unit with every unobserved defined cell at its
/// conditional mean given θ and type.
pub fn mean_table(theta: &Theta, c: ComplianceType, u: &ObservedUnit) -> Result<PotentialTable> {
    let mut t = PotentialTable::new(c);
    t.set_x2(u.w1, u.x2)?;
    t.set_y(u.w1, u.w2, u.y)?;
    for w1 in [false, true] {
        if w1 != u.w1 && crate::domain::x2_cell_defined(c, w1) {
            t.set_x2(w1, model::intermediate_mean(theta, c, &u.x1, w1))?;
        }
    }
    for w1 in [false, true] {
        let Some(x2) = t.x2_of(w1).value() else {
            continue;
        };
        for w2 in [false, true] {
            if (w1, w2) != (u.w1, u.w2) && crate::domain::y_cell_defined(c, w1, w2) {
                t.set_y(w1, w2, model::outcome_mean(theta, c, &u.x1, x2, w1, w2))?;
            }
        }
    }
    Ok(t)
}

/// Log of the five factors of one unit under type `c`: compliance
/// probability, two receipt indicators, intermediate and outcome densities.
fn unit_log_factor(theta: &Theta, c: ComplianceType, u: &ObservedUnit) -> Result<f64> {
    let logprob = model::compliance_logprob(theta, &u.x1)?;
    let ind = model::treatment_lik(c, u.z1, u.w1) * model::treatment_lik(c, u.z2, u.w2);
    if ind == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(logprob[c.index()]
        + model::intermediate_loglik(theta, c, &u.x1, u.w1, u.x2)
        + model::outcome_loglik(theta, c, &u.x1, u.x2, u.w1, u.w2, u.y))
}

struct GridPart {
    /// Log scale factor of every sum in this part.
    shift: f64,
    total: CompensatedSum,
    units: Vec<[CompensatedSum; 3]>,
    no_compliers: CompensatedSum,
    late_weighted: CompensatedSum,
    atoms: Vec<(f64, f64)>,
}

fn enumerate_grid_point(
    theta: &Theta,
    log_weight: f64,
    data: &Dataset,
    contrast: Contrast,
) -> Result<GridPart> {
    let n = data.len();
    let mut lw = Vec::with_capacity(n);
    let mut effect = Vec::with_capacity(n);
    for u in data.units() {
        let mut row = [f64::NEG_INFINITY; 3];
        for c in ComplianceType::ALL {
            row[c.index()] = unit_log_factor(theta, c, u)?;
        }
        lw.push(row);
        effect.push(if row[ComplianceType::Complier.index()].is_finite() {
            Some(mean_table(theta, ComplianceType::Complier, u)?.contrast(contrast)?)
        } else {
            None
        });
    }
    let configs = 3usize.pow(n as u32);
    let mut logs = Vec::with_capacity(configs);
    let mut labels = vec![0usize; n];
    for idx in 0..configs {
        let mut rest = idx;
        let mut l = log_weight;
        for (i, lab) in labels.iter_mut().enumerate() {
            *lab = rest % 3;
            rest /= 3;
            l += lw[i][*lab];
        }
        logs.push(l);
    }
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut part = GridPart {
        shift,
        total: CompensatedSum::default(),
        units: vec![[CompensatedSum::default(); 3]; n],
        no_compliers: CompensatedSum::default(),
        late_weighted: CompensatedSum::default(),
        atoms: Vec::new(),
    };
    if shift == f64::NEG_INFINITY {
        return Ok(part);
    }
    let co = ComplianceType::Complier.index();
    for (idx, l) in logs.iter().enumerate() {
        if *l == f64::NEG_INFINITY {
            continue;
        }
        let w = (l - shift).exp();
        part.total.add(w);
        let mut rest = idx;
        let mut sum = 0.0;
        let mut n_co = 0usize;
        for (i, slot) in part.units.iter_mut().enumerate() {
            let lab = rest % 3;
            rest /= 3;
            slot[lab].add(w);
            if lab == co {
                sum += effect[i].expect("complier type is consistent");
                n_co += 1;
            }
        }
        if n_co == 0 {
            part.no_compliers.add(w);
        } else {
            let v = sum / n_co as f64;
            part.late_weighted.add(w * v);
            part.atoms.push((v, w));
        }
    }
    Ok(part)
}

/// Sum the joint posterior over every `(θ, C)` configuration.
pub fn exact_posterior(data: &Dataset, spec: &DiscreteSpec) -> Result<ExactPosterior> {
    exact_posterior_with(data, spec, Contrast::default())
}

pub fn exact_posterior_with(
    data: &Dataset,
    spec: &DiscreteSpec,
    contrast: Contrast,
) -> Result<ExactPosterior> {
    spec.validate()?;
    let n = data.len();
    let configurations = 3u128
        .checked_pow(n as u32)
        .and_then(|c| c.checked_mul(spec.theta_grid.len() as u128))
        .unwrap_or(u128::MAX);
    if n > spec.max_units || configurations > spec.budget {
        return Err(Error::TooLarge {
            configurations,
            budget: spec.budget,
        });
    }
    if let Some(index) = data.first_inconsistent() {
        return Err(Error::InconsistentUnit { index });
    }
    let p = spec.theta_grid[0].covariate_dim();
    if data.covariate_dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: data.covariate_dim(),
        });
    }
    let parts = spec
        .theta_grid
        .par_iter()
        .zip(&spec.weights)
        .map(|(theta, w)| enumerate_grid_point(theta, w.ln(), data, contrast))
        .collect::<Result<Vec<_>>>()?;

    let shift = parts.iter().map(|p| p.shift).fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::NumericalOverflow {
            context: "every configuration has zero posterior weight".into(),
        });
    }
    let scale: Vec<f64> = parts.iter().map(|p| (p.shift - shift).exp()).collect();
    let combine = |f: &dyn Fn(&GridPart) -> f64| -> f64 {
        parts
            .iter()
            .zip(&scale)
            .map(|(p, s)| f(p) * s)
            .collect::<CompensatedSum>()
            .value()
    };
    let total = combine(&|p| p.total.value());
    let theta_posterior = parts
        .iter()
        .zip(&scale)
        .map(|(p, s)| p.total.value() * s / total)
        .collect();
    let unit_marginals = (0..n)
        .map(|i| {
            let mut m = [0.0; 3];
            for (k, slot) in m.iter_mut().enumerate() {
                *slot = combine(&|p| p.units[i][k].value()) / total;
            }
            m
        })
        .collect();
    let no_co = combine(&|p| p.no_compliers.value());
    let with_co = total - no_co;
    let late_mean = (with_co > 0.0).then(|| combine(&|p| p.late_weighted.value()) / with_co);
    let mut late_atoms: Vec<(f64, f64)> = parts
        .iter()
        .zip(&scale)
        .flat_map(|(p, s)| p.atoms.iter().map(move |(v, w)| (*v, w * s / with_co)))
        .collect();
    late_atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    late_atoms.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    Ok(ExactPosterior {
        theta_posterior,
        unit_marginals,
        log_evidence: shift + total.ln(),
        prob_no_compliers: no_co / total,
        late_mean,
        late_atoms,
    })
}

/// Frequencies from [`grid_gibbs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGibbsResult {
    pub sweeps: usize,
    pub theta_frequencies: Vec<f64>,
    pub unit_marginals: Vec<[f64; 3]>,
    pub late_mean: Option<f64>,
    pub no_complier_rate: f64,
}

/// The sampler with θ drawn from its exact conditional on the grid given
/// the current labels. Compliance, imputation and LATE use the production
/// steps unchanged.
pub fn grid_gibbs(
    data: &Dataset,
    spec: &DiscreteSpec,
    warmup: usize,
    sweeps: usize,
    seed: u64,
) -> Result<GridGibbsResult> {
    spec.validate()?;
    if sweeps == 0 {
        return Err(Error::config("sweeps", "must be at least 1"));
    }
    let cfg = SamplerConfig {
        n_chains: 1,
        n_warmup: warmup,
        n_draws: sweeps,
        seed,
        ..SamplerConfig::default()
    };
    let mut state = ChainState::initial(data, &cfg, 0)?;
    let log_w: Vec<f64> = spec.weights.iter().map(|w| w.ln()).collect();
    let logprobs: Vec<Vec<[f64; 3]>> = spec
        .theta_grid
        .iter()
        .map(|t| {
            data.units()
                .iter()
                .map(|u| model::compliance_logprob(t, &u.x1))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let n = data.len();
    let mut theta_counts = vec![0u64; spec.theta_grid.len()];
    let mut unit_counts = vec![[0u64; 3]; n];
    let mut late_sum = CompensatedSum::default();
    let mut late_n = 0u64;
    let mut cond = vec![0.0; spec.theta_grid.len()];
    for sweep in 0..warmup + sweeps {
        for (k, theta) in spec.theta_grid.iter().enumerate() {
            cond[k] = log_w[k]
                + data
                    .units()
                    .iter()
                    .zip(&state.compliance)
                    .enumerate()
                    .map(|(i, (u, &c))| model::complete_loglik(theta, c, u, &logprobs[k][i]))
                    .sum::<f64>();
        }
        let lse = log_sum_exp(&cond);
        let target: f64 = state.rng.gen();
        let mut acc = 0.0;
        let mut pick = cond.len() - 1;
        for (k, l) in cond.iter().enumerate() {
            acc += (l - lse).exp();
            if target < acc {
                pick = k;
                break;
            }
        }
        state.theta = spec.theta_grid[pick].clone();
        gibbs::step_compliance(&mut state, data)?;
        gibbs::step_impute(&mut state, data);
        state.iter += 1;
        if sweep < warmup {
            continue;
        }
        theta_counts[pick] += 1;
        for (i, c) in state.compliance.iter().enumerate() {
            unit_counts[i][c.index()] += 1;
        }
        match gibbs::late_draw(&state, cfg.contrast) {
            Ok(v) => {
                late_sum.add(v);
                late_n += 1;
            }
            Err(Error::NoCompliersInDraw) => {}
            Err(e) => return Err(e),
        }
    }
    let s = sweeps as f64;
    Ok(GridGibbsResult {
        sweeps,
        theta_frequencies: theta_counts.iter().map(|&c| c as f64 / s).collect(),
        unit_marginals: unit_counts
            .iter()
            .map(|row| row.map(|c| c as f64 / s))
            .collect(),
        late_mean: (late_n > 0).then(|| late_sum.value() / late_n as f64),
        no_complier_rate: (sweeps as u64 - late_n) as f64 / s,
    })
}

/// `0.5 * sum |a - b|`.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Outcome of one fixture-suite check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

const THREE_UNIT_CSV: &str = include_str!("../../fixtures/three_unit.csv");
const THETA_GRID_JSON: &str = include_str!("../../fixtures/theta_grid.json");
const GOLDEN_JSON: &str = include_str!("../../fixtures/three_unit_posterior.json");

/// The committed three-unit dataset.
pub fn fixture_dataset() -> Dataset {
    crate::io::read_dataset_csv(THREE_UNIT_CSV.as_bytes()).expect("committed fixture parses")
}

/// The committed four-point θ grid.
pub fn fixture_spec() -> DiscreteSpec {
    serde_json::from_str(THETA_GRID_JSON).expect("committed grid parses")
}

#[derive(Debug, Deserialize)]
struct Golden {
    theta_posterior: Vec<f64>,
    unit_marginals: Vec<[f64; 3]>,
    log_evidence: f64,
    prob_no_compliers: f64,
    late_mean: f64,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest per-unit total-variation distance between two sets of marginals.
pub fn max_unit_tv(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| total_variation(x, y))
        .fold(0.0, f64::max)
}

/// Run every fixture check. `sweeps` sets the grid-Gibbs run length.
pub fn run_fixture_suite(sweeps: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let data = fixture_dataset();
    let spec = fixture_spec();
    let exact = exact_posterior(&data, &spec)?;
    let mut out = Vec::new();

    let golden: Golden = serde_json::from_str(GOLDEN_JSON)?;
    let flat = |m: &[[f64; 3]]| m.iter().flatten().copied().collect::<Vec<f64>>();
    let diff = [
        max_abs_diff(&exact.theta_posterior, &golden.theta_posterior),
        max_abs_diff(&flat(&exact.unit_marginals), &flat(&golden.unit_marginals)),
        (exact.log_evidence - golden.log_evidence).abs() / golden.log_evidence.abs().max(1.0),
        (exact.prob_no_compliers - golden.prob_no_compliers).abs(),
        (exact.late_mean.unwrap_or(f64::NAN) - golden.late_mean).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    out.push(CheckResult::new(
        "exact posterior matches golden file",
        diff < 1e-9,
        format!("max difference {diff:.3e}"),
    ));

    let outside: f64 = data
        .units()
        .iter()
        .zip(&exact.unit_marginals)
        .flat_map(|(u, m)| {
            let support = u.consistent_types();
            ComplianceType::ALL
                .into_iter()
                .filter(move |c| !support.contains(*c))
                .map(move |c| m[c.index()])
        })
        .sum();
    out.push(CheckResult::new(
        "no mass outside consistent types",
        outside == 0.0,
        format!("mass {outside:e}"),
    ));

    let order: Vec<usize> = (0..data.len()).rev().collect();
    let permuted = exact_posterior(&data.permuted(&order), &spec)?;
    let rel = ((permuted.log_evidence - exact.log_evidence) / exact.log_evidence).abs();
    out.push(CheckResult::new(
        "evidence invariant to unit order",
        rel < 1e-12,
        format!("relative difference {rel:.3e}"),
    ));

    let sole = Dataset::new(
        data.covariate_dim(),
        vec![ObservedUnit {
            x1: vec![0.1],
            z1: false,
            w1: true,
            x2: 0.4,
            z2: true,
            w2: true,
            y: 1.0,
        }],
    )?;
    let sole_post = exact_posterior(&sole, &spec)?;
    let at = sole_post.unit_marginals[0][ComplianceType::Alwaystaker.index()];
    out.push(CheckResult::new(
        "sole consistent type has probability one",
        at == 1.0,
        format!("P(at) = {at}"),
    ));

    let flat_spec = DiscreteSpec::new(vec![spec.theta_grid[0].clone(); 3], vec![0.2, 0.3, 0.5])?;
    let flat_post = exact_posterior(&data, &flat_spec)?;
    let d = max_abs_diff(&flat_post.theta_posterior, &flat_spec.weights);
    out.push(CheckResult::new(
        "constant likelihood returns the prior",
        d < 1e-12,
        format!("max difference {d:.3e}"),
    ));

    let sampled = grid_gibbs(&data, &spec, 1000, sweeps, seed)?;
    let tv = max_unit_tv(&sampled.unit_marginals, &exact.unit_marginals);
    out.push(CheckResult::new(
        "grid sampler matches compliance marginals",
        tv < 0.02,
        format!("max TV {tv:.4} over {sweeps} sweeps"),
    ));
    let tv_theta = total_variation(&sampled.theta_frequencies, &exact.theta_posterior);
    out.push(CheckResult::new(
        "grid sampler matches theta posterior",
        tv_theta < 0.02,
        format!("TV {tv_theta:.4}"),
    ));
    let late_gap = match (sampled.late_mean, exact.late_mean) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::INFINITY,
    };
    out.push(CheckResult::new(
        "grid sampler matches LATE mean",
        late_gap < 0.05,
        format!("difference {late_gap:.4}"),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(z1: bool, w1: bool, z2: bool, w2: bool) -> ObservedUnit {
        ObservedUnit {
            x1: vec![0.2],
            z1,
            w1,
            x2: 0.5,
            z2,
            w2,
            y: 1.5,
        }
    }

    #[test]
    fn fixtures_load() {
        let spec = fixture_spec();
        assert_eq!(spec.theta_grid.len(), 4);
        assert_eq!(fixture_dataset().len(), 3);
    }

    #[test]
    fn sole_type_unit_certain_under_every_theta() {
        let spec = fixture_spec();
        for (u, c) in [
            (unit(true, false, false, false), ComplianceType::Nevertaker),
            (unit(false, true, true, true), ComplianceType::Alwaystaker),
            (unit(true, true, false, false), ComplianceType::Complier),
        ] {
            let data = Dataset::new(1, vec![u]).unwrap();
            for t in &spec.theta_grid {
                let single = DiscreteSpec::new(vec![t.clone()], vec![1.0]).unwrap();
                let post = exact_posterior(&data, &single).unwrap();
                assert_eq!(post.unit_marginals[0][c.index()], 1.0);
            }
        }
    }

    #[test]
    fn marginals_normalized_and_supported() {
        let data = fixture_dataset();
        let post = exact_posterior(&data, &fixture_spec()).unwrap();
        assert!((post.theta_posterior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (u, m) in data.units().iter().zip(&post.unit_marginals) {
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for c in ComplianceType::ALL {
                if !u.consistent_types().contains(c) {
                    assert_eq!(m[c.index()], 0.0);
                }
            }
        }
        let atoms: f64 = post.late_atoms.iter().map(|a| a.1).sum();
        assert!((atoms - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_unit_matches_closed_form() {
        // one unit: P(θ_k | data) ∝ w_k * exp(unit marginal loglik)
        let spec = fixture_spec();
        let u = unit(false, false, false, false);
        let data = Dataset::new(1, vec![u.clone()]).unwrap();
        let post = exact_posterior(&data, &spec).unwrap();
        let logs: Vec<f64> = spec
            .theta_grid
            .iter()
            .zip(&spec.weights)
            .map(|(t, w)| w.ln() + model::unit_marginal_loglik(t, &u).unwrap())
            .collect();
        let lse = log_sum_exp(&logs);
        for (k, l) in logs.iter().enumerate() {
            assert!((post.theta_posterior[k] - (l - lse).exp()).abs() < 1e-12);
        }
        assert!((post.log_evidence - lse).abs() < 1e-12);
    }

    #[test]
    fn evidence_permutation_invariant() {
        let spec = fixture_spec();
        let units: Vec<ObservedUnit> = (0..6)
            .map(|i| {
                let c = ComplianceType::ALL[i % 3];
                let (z1, z2) = (i % 2 == 0, i % 4 < 2);
                ObservedUnit {
                    x1: vec![i as f64 * 0.3 - 0.7],
                    z1,
                    w1: crate::domain::realized_treatment(c, z1),
                    x2: 0.1 * i as f64,
                    z2,
                    w2: crate::domain::realized_treatment(c, z2),
                    y: 1.0 - 0.2 * i as f64,
                }
            })
            .collect();
        let data = Dataset::new(1, units).unwrap();
        let base = exact_posterior(&data, &spec).unwrap();
        for order in [[5, 4, 3, 2, 1, 0], [2, 0, 4, 1, 5, 3]] {
            let other = exact_posterior(&data.permuted(&order), &spec).unwrap();
            let rel = ((other.log_evidence - base.log_evidence) / base.log_evidence).abs();
            assert!(rel < 1e-12, "{rel}");
        }
    }

    #[test]
    fn budget_enforced() {
        let mut spec = fixture_spec();
        let data = fixture_dataset();
        spec.budget = 3u128.pow(3) * 4 - 1;
        assert!(matches!(exact_posterior(&data, &spec), Err(Error::TooLarge { .. })));
        spec.budget = DEFAULT_BUDGET;
        spec.max_units = 2;
        assert!(matches!(exact_posterior(&data, &spec), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn spec_rejects_bad_weights() {
        let t = fixture_spec().theta_grid[0].clone();
        assert!(DiscreteSpec::new(vec![t.clone()], vec![0.9]).is_err());
        assert!(DiscreteSpec::new(vec![], vec![]).is_err());
        assert!(DiscreteSpec::new(vec![t.clone(), t], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn mean_table_fills_defined_cells() {
        let theta = fixture_spec().theta_grid[0].clone();
        let u = unit(false, false, false, false);
        let t = mean_table(&theta, ComplianceType::Complier, &u).unwrap();
        assert!(t.check_pattern().is_ok());
        let x21 = model::intermediate_mean(&theta, ComplianceType::Complier, &u.x1, true);
        assert_eq!(t.x2_of(true).value(), Some(x21));
        let y11 = model::outcome_mean(&theta, ComplianceType::Complier, &u.x1, x21, true, true);
        assert_eq!(t.y_of(true, true).value(), Some(y11));
        assert_eq!(t.y_of(false, false).value(), Some(u.y));
    }

    #[test]
    fn grid_gibbs_short_run_close() {
        let data = fixture_dataset();
        let spec = fixture_spec();
        let exact = exact_posterior(&data, &spec).unwrap();
        let sampled = grid_gibbs(&data, &spec, 500, 40_000, 11).unwrap();
        assert!(max_unit_tv(&sampled.unit_marginals, &exact.unit_marginals) < 0.03);
        assert!(total_variation(&sampled.theta_frequencies, &exact.theta_posterior) < 0.03);
    }
}
