//! Warmup-only proposal tuning for the Metropolis steps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Log-scale Robbins-Monro adaptation toward a target acceptance rate.
/// Frozen outside warmup.
#[derive(Debug, Clone, PartialEq)]
pub struct RwScale {
    log_scale: f64,
    target: f64,
    adapting: bool,
    steps: u64,
    proposed: u64,
    accepted: u64,
}

impl RwScale {
    pub fn new(scale: f64, target: f64) -> Self {
        RwScale {
            log_scale: scale.ln(),
            target,
            adapting: false,
            steps: 0,
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn set_scale(&mut self, scale: f64) {
        self.log_scale = scale.ln();
        self.steps = 0;
    }

    pub fn set_adapting(&mut self, on: bool) {
        if self.adapting && !on {
            self.proposed = 0;
            self.accepted = 0;
        }
        self.adapting = on;
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        if self.adapting {
            self.steps += 1;
            let rate = 1.0 / (1.0 + self.steps as f64 / 10.0).powf(0.6);
            let a = if accepted { 1.0 } else { 0.0 };
            self.log_scale = (self.log_scale + rate * (a - self.target)).clamp(-12.0, 5.0);
        }
    }

    /// Acceptance rate since warmup ended (or since start while adapting).
    pub fn acceptance(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// One Metropolis block of the unconstrained parameter vector with a
/// correlated proposal `scale * L * eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub start: usize,
    pub len: usize,
    pub chol: DMatrix<f64>,
    pub scale: RwScale,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tuning {
    pub gamma: Option<[RwScale; 2]>,
    pub blocks: Vec<Block>,
    /// Warmup samples of the unconstrained vector for covariance estimation.
    pub history: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub gamma_nt: Option<f64>,
    pub gamma_at: Option<f64>,
    pub blocks: Vec<Option<f64>>,
}

impl Tuning {
    pub fn set_adapting(&mut self, on: bool) {
        if let Some(g) = self.gamma.as_mut() {
            g.iter_mut().for_each(|s| s.set_adapting(on));
        }
        for b in &mut self.blocks {
            b.scale.set_adapting(on);
        }
    }

    pub fn acceptance(&self) -> AcceptanceRates {
        AcceptanceRates {
            gamma_nt: self.gamma.as_ref().and_then(|g| g[0].acceptance()),
            gamma_at: self.gamma.as_ref().and_then(|g| g[1].acceptance()),
            blocks: self.blocks.iter().map(|b| b.scale.acceptance()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_grows_when_everything_accepts() {
        let mut s = RwScale::new(0.1, 0.3);
        s.set_adapting(true);
        for _ in 0..200 {
            s.record(true);
        }
        assert!(s.scale() > 1.0);
        s.set_adapting(false);
        let frozen = s.scale();
        s.record(false);
        assert_eq!(s.scale(), frozen);
        assert_eq!(s.acceptance(), Some(0.0));
    }
}
