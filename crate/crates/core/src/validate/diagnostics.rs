//! Split-R̂ and effective sample size.

use log::warn;

use crate::error::{Error, Result};
use crate::stats::mean;

/// Split-chain potential scale reduction. Chains are truncated to the
/// shortest one. Zero variance everywhere gives 1.0; zero within-chain but
/// nonzero between-chain variance gives infinity.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.len() < 2 || n < 4 {
        return Err(Error::TooFewDraws {
            needed: 4,
            got: n,
        });
    }
    let half = n / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[n - half..n]);
    }
    let len = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let within: f64 = halves
        .iter()
        .zip(&means)
        .map(|(h, m)| h.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (len - 1.0))
        .sum::<f64>()
        / halves.len() as f64;
    let grand = mean(&means);
    let between_over_n =
        means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (halves.len() as f64 - 1.0);
    if within <= 0.0 {
        if between_over_n <= 0.0 {
            warn!("R-hat on zero-variance chains reported as 1.0");
            return Ok(1.0);
        }
        return Ok(f64::INFINITY);
    }
    let var_plus = (len - 1.0) / len * within + between_over_n;
    Ok((var_plus / within).sqrt())
}

/// Effective sample size of one chain by Geyer's initial monotone sequence
/// estimator, capped at `1.5 n`. A constant sequence reports `n`.
pub fn ess(draws: &[f64]) -> Result<f64> {
    let n = draws.len();
    if n < 10 {
        return Err(Error::TooFewDraws { needed: 10, got: n });
    }
    let m = mean(draws);
    let centered: Vec<f64> = draws.iter().map(|x| x - m).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if c0 <= 0.0 {
        warn!("ESS of a constant sequence reported as n");
        return Ok(n as f64);
    }
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    let cap = 1.5 * n as f64;
    if tau <= 0.0 {
        return Ok(cap);
    }
    Ok((n as f64 / tau).min(cap))
}

/// Sum of per-chain effective sample sizes.
pub fn ess_chains(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.is_empty() {
        return Err(Error::TooFewDraws { needed: 10, got: 0 });
    }
    chains.iter().map(|c| ess(c)).sum()
}
