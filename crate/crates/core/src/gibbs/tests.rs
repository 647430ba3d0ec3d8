use statrs::distribution::{ContinuousCDF, InverseGamma, Normal};

use super::*;
use crate::domain::Dataset;
use crate::simulate::{simulate_dataset, DgpConfig};

fn unit(z1: bool, w1: bool, z2: bool, w2: bool) -> ObservedUnit {
    ObservedUnit {
        x1: vec![0.3],
        z1,
        w1,
        x2: 0.7,
        z2,
        w2,
        y: -0.4,
    }
}

/// θ under which nevertakers and compliers with the same receipts have
/// identical likelihood factors.
fn symmetric_theta(g_nt: f64, g_at: f64) -> Theta {
    let mut t = Theta::zeros(1);
    t.gamma_nt[0] = g_nt;
    t.gamma_at[0] = g_at;
    t.alpha = vec![0.1, 0.2, 0.9, 0.0, 0.0];
    t.beta = vec![0.3, -0.1, 0.5, 1.0, 1.0, 0.5, 0.0, 0.0];
    t
}

fn state_for(data: &Dataset, theta: Theta, seed: u64) -> ChainState {
    let cfg = SamplerConfig {
        seed,
        ..SamplerConfig::default()
    };
    let mut s = ChainState::initial(data, &cfg, 0).unwrap();
    s.theta = theta;
    s
}

fn small_cfg(seed: u64, warmup: usize, draws: usize) -> SamplerConfig {
    SamplerConfig {
        n_chains: 1,
        n_warmup: warmup,
        n_draws: draws,
        seed,
        ..SamplerConfig::default()
    }
}

#[test]
fn forced_alwaystaker() {
    let theta = symmetric_theta(0.4, -0.2);
    let p = compliance_posterior(&theta, &unit(false, true, true, true)).unwrap();
    assert_eq!(p, [0.0, 0.0, 1.0]);
    let p = compliance_posterior(&theta, &unit(true, false, true, false)).unwrap();
    assert_eq!(p, [1.0, 0.0, 0.0]);
}

#[test]
fn symmetric_pair_splits_evenly() {
    let p = compliance_posterior(&symmetric_theta(0.0, 0.0), &unit(false, false, false, false)).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    assert_eq!(p[2], 0.0);
}

#[test]
fn prior_weights_carry_through() {
    // probabilities (0.2, 0.6, 0.2): logits ln(1/3) against the complier
    let g = (1.0f64 / 3.0).ln();
    let p = compliance_posterior(&symmetric_theta(g, g), &unit(false, false, false, false)).unwrap();
    assert!((p[0] - 0.25).abs() < 1e-12, "{p:?}");
    assert!((p[1] - 0.75).abs() < 1e-12);
    assert_eq!(p[2], 0.0);
}

#[test]
fn pick_skips_zero_mass() {
    assert_eq!(pick(&[0.0, 0.0, 1.0], 0.0), ComplianceType::Alwaystaker);
    assert_eq!(pick(&[0.5, 0.5, 0.0], 0.999_999), ComplianceType::Complier);
    assert_eq!(pick(&[0.5, 0.5, 0.0], 0.2), ComplianceType::Nevertaker);
}

#[test]
fn step_compliance_frequencies() {
    let g = (1.0f64 / 3.0).ln();
    let data = Dataset::new(1, vec![unit(false, false, false, false); 4000]).unwrap();
    let mut s = state_for(&data, symmetric_theta(g, g), 3);
    step_compliance(&mut s, &data).unwrap();
    let share = s.n_compliers() as f64 / 4000.0;
    // binomial SD about 0.007
    assert!((share - 0.75).abs() < 0.03, "{share}");
}

#[test]
fn impute_at_tiny_noise_hits_means() {
    let (data, _) = simulate_dataset(&DgpConfig::with_defaults(40, 1, 8)).unwrap();
    let mut theta = symmetric_theta(0.0, 0.0);
    theta.sigma_x = 1e-8;
    theta.sigma_y = 1e-8;
    let mut s = state_for(&data, theta.clone(), 1);
    step_impute(&mut s, &data);
    let co = ComplianceType::Complier;
    let mut checked = 0;
    for (u, (t, c)) in data.units().iter().zip(s.imputed.iter().zip(&s.compliance)) {
        if *c != co {
            continue;
        }
        checked += 1;
        let other = !u.w1;
        let x2m = model::intermediate_mean(&theta, co, &u.x1, other);
        assert!((t.x2_of(other).value().unwrap() - x2m).abs() < 1e-6);
        for w1 in [false, true] {
            let x2 = if w1 == u.w1 { u.x2 } else { x2m };
            for w2 in [false, true] {
                if (w1, w2) == (u.w1, u.w2) {
                    continue;
                }
                let m = model::outcome_mean(&theta, co, &u.x1, x2, w1, w2);
                assert!((t.y_of(w1, w2).value().unwrap() - m).abs() < 1e-6);
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn impute_identity_without_compliers() {
    let data = Dataset::new(
        1,
        vec![unit(true, false, false, false), unit(false, false, true, false)],
    )
    .unwrap();
    let mut s = state_for(&data, symmetric_theta(0.0, 0.0), 2);
    assert!(s.compliance.iter().all(|c| c.is_nevertaker()));
    let before = s.imputed.clone();
    let rng_before = s.rng.clone();
    step_impute(&mut s, &data);
    assert_eq!(s.imputed, before);
    assert_eq!(s.rng, rng_before);
}

#[test]
fn impute_redraws_complement_cells_only() {
    let u = unit(true, true, false, false);
    let data = Dataset::new(1, vec![u.clone()]).unwrap();
    let mut s = state_for(&data, symmetric_theta(0.0, 0.0), 4);
    assert_eq!(s.compliance[0], ComplianceType::Complier);
    let first = s.imputed[0].clone();
    step_impute(&mut s, &data);
    let second = &s.imputed[0];
    assert_eq!(second.x2_of(true).value(), Some(u.x2));
    assert_eq!(second.y_of(true, false).value(), Some(u.y));
    assert_ne!(second.x2_of(false), first.x2_of(false));
    for (w1, w2) in [(false, false), (false, true), (true, true)] {
        assert_ne!(second.y_of(w1, w2), first.y_of(w1, w2));
    }
}

#[test]
fn observed_cells_never_touched() {
    let (data, _) = simulate_dataset(&DgpConfig::with_defaults(80, 2, 13)).unwrap();
    let cfg = small_cfg(5, 20, 30);
    let state = ChainState::initial(&data, &cfg, 0).unwrap();
    let mut sweeps = 0;
    run_chain_from(state, 0, &cfg, &data, &PriorSpec::default(), |s| {
        sweeps += 1;
        for (u, (t, c)) in data.units().iter().zip(s.imputed.iter().zip(&s.compliance)) {
            assert!(u.consistent_types().contains(*c));
            assert_eq!(t.compliance(), *c);
            assert_eq!(t.x2_of(u.w1).value().unwrap().to_bits(), u.x2.to_bits());
            assert_eq!(t.y_of(u.w1, u.w2).value().unwrap().to_bits(), u.y.to_bits());
            assert!(t.check_pattern().is_ok());
        }
    })
    .unwrap();
    assert_eq!(sweeps, 30);
}

fn complier_state(diffs: &[f64]) -> ChainState {
    let data = Dataset::new(1, vec![unit(true, true, true, true); diffs.len()]).unwrap();
    let mut s = state_for(&data, symmetric_theta(0.0, 0.0), 0);
    for (i, d) in diffs.iter().enumerate() {
        s.compliance[i] = ComplianceType::Complier;
        let mut t = PotentialTable::new(ComplianceType::Complier);
        t.set_y(false, false, 1.0).unwrap();
        t.set_y(true, true, 1.0 + d).unwrap();
        s.imputed[i] = t;
    }
    s
}

#[test]
fn late_draw_examples() {
    assert_eq!(late_draw(&complier_state(&[2.0, 2.0, 2.0]), Contrast::default()).unwrap(), 2.0);
    assert_eq!(late_draw(&complier_state(&[0.0, 3.0, 3.0]), Contrast::default()).unwrap(), 2.0);
    let data = Dataset::new(1, vec![unit(true, false, true, false)]).unwrap();
    let s = state_for(&data, symmetric_theta(0.0, 0.0), 0);
    assert!(matches!(late_draw(&s, Contrast::default()), Err(Error::NoCompliersInDraw)));
}

#[test]
fn late_draw_other_contrast() {
    let mut s = complier_state(&[1.0]);
    s.imputed[0].set_y(true, false, 4.0).unwrap();
    let c = Contrast::new((true, false), (false, false));
    assert_eq!(late_draw(&s, c).unwrap(), 3.0);
}

fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn prior_recovered_without_likelihood() {
    let data = Dataset::new(1, vec![]).unwrap();
    let prior = PriorSpec::default();
    let cfg = small_cfg(21, 2000, 1);
    let mut state = ChainState {
        theta: Theta::zeros(1),
        compliance: vec![],
        imputed: vec![],
        iter: 0,
        rng: substream(21, "chain", 0),
        tuning: Tuning::default(),
    };
    let (mut b0, mut s2, mut g) = (vec![], vec![], vec![]);
    for k in 0..2000 + 5000 * 10 {
        step_theta(&mut state, &data, &prior, &cfg).unwrap();
        state.iter += 1;
        if k >= 2000 && k % 10 == 0 {
            b0.push(state.theta.beta[0]);
            s2.push(state.theta.sigma_y.powi(2));
            g.push(state.theta.gamma_nt[0]);
        }
    }
    assert_eq!(b0.len(), 5000);
    let normal = Normal::new(0.0, prior.tau).unwrap();
    let ig = InverseGamma::new(prior.a0, prior.b0).unwrap();
    let d_b = ks_statistic(&mut b0, |x| normal.cdf(x));
    let d_s = ks_statistic(&mut s2, |x| ig.cdf(x));
    let d_g = ks_statistic(&mut g, |x| normal.cdf(x));
    assert!(d_b < 0.05, "beta0 KS {d_b}");
    assert!(d_s < 0.05, "sigma_y^2 KS {d_s}");
    assert!(d_g < 0.05, "gamma KS {d_g}");
}

#[test]
fn flat_outcomes_contract_beta() {
    let units: Vec<ObservedUnit> = (0..200)
        .map(|i| ObservedUnit {
            x1: vec![(i as f64 * 0.37).sin()],
            z1: i % 2 == 0,
            w1: i % 2 == 0,
            x2: (i as f64 * 0.91).cos(),
            z2: i % 3 == 0,
            w2: i % 3 == 0,
            y: 2.0,
        })
        .collect();
    let data = Dataset::new(1, units).unwrap();
    let prior = PriorSpec {
        tau: 5.0,
        a0: 2.0,
        b0: 1e-4,
    };
    let out = run_chain(&small_cfg(2, 500, 5000), &data, &prior, 0).unwrap();
    let b0: Vec<f64> = out.draws.iter().map(|d| d.theta.beta[0]).collect();
    let sd = crate::stats::variance(&b0).sqrt();
    assert!(sd < prior.tau, "{sd}");
    assert!(sd < 0.5, "{sd}");
}

#[test]
fn identical_seeds_identical_draws() {
    let (data, _) = simulate_dataset(&DgpConfig::with_defaults(60, 1, 1)).unwrap();
    for update in [ThetaUpdate::ConjugateGibbs, ThetaUpdate::MarginalMh] {
        let cfg = SamplerConfig {
            theta_update: update,
            ..small_cfg(9, 50, 50)
        };
        let a = run_chain(&cfg, &data, &PriorSpec::default(), 0).unwrap();
        let b = run_chain(&cfg, &data, &PriorSpec::default(), 0).unwrap();
        assert_eq!(a.draws, b.draws);
        let c = run_chain(&cfg, &data, &PriorSpec::default(), 1).unwrap();
        assert_ne!(a.draws, c.draws);
    }
}

#[test]
fn zero_draws_rejected() {
    let (data, _) = simulate_dataset(&DgpConfig::with_defaults(10, 1, 1)).unwrap();
    let cfg = small_cfg(0, 10, 0);
    assert!(matches!(
        run_chain(&cfg, &data, &PriorSpec::default(), 0),
        Err(Error::InvalidConfig { .. })
    ));
    assert!(fit(&cfg, &data, &PriorSpec::default()).is_err());
}

#[test]
fn inconsistent_or_empty_data_rejected() {
    let cfg = small_cfg(0, 10, 10);
    let empty = Dataset::new(1, vec![]).unwrap();
    assert!(run_chain(&cfg, &empty, &PriorSpec::default(), 0).is_err());
}

#[test]
fn fit_runs_chains_on_own_streams() {
    let (data, _) = simulate_dataset(&DgpConfig::with_defaults(50, 1, 2)).unwrap();
    let cfg = SamplerConfig {
        n_chains: 3,
        ..small_cfg(4, 20, 20)
    };
    let f = fit(&cfg, &data, &PriorSpec::default()).unwrap();
    assert_eq!(f.chains.len(), 3);
    assert!(f.chains.iter().all(|c| c.draws.len() == 20));
    assert_ne!(f.chains[0].draws, f.chains[1].draws);
    let solo = run_chain(&cfg, &data, &PriorSpec::default(), 2).unwrap();
    assert_eq!(solo.draws, f.chains[2].draws);
    for m in f.compliance_marginals() {
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn permutation_equivariance_over_seeds() {
    let (data, _) = simulate_dataset(&DgpConfig::with_defaults(60, 1, 17)).unwrap();
    let order: Vec<usize> = (0..data.len()).map(|i| (i * 7 + 3) % data.len()).collect();
    let permuted = data.permuted(&order);
    let prior = PriorSpec::default();
    let mut a_late = vec![];
    let mut b_late = vec![];
    let mut a_marg = vec![[0.0; 3]; data.len()];
    let mut b_marg = vec![[0.0; 3]; data.len()];
    for seed in 0..20 {
        let cfg = small_cfg(seed, 200, 300);
        let fa = fit(&cfg, &data, &prior).unwrap();
        let fb = fit(&cfg, &permuted, &prior).unwrap();
        a_late.push(crate::stats::mean(&fa.late_by_chain()[0]));
        b_late.push(crate::stats::mean(&fb.late_by_chain()[0]));
        let (ma, mb) = (fa.compliance_marginals(), fb.compliance_marginals());
        for (j, &i) in order.iter().enumerate() {
            for k in 0..3 {
                a_marg[i][k] += ma[i][k] / 20.0;
                b_marg[i][k] += mb[j][k] / 20.0;
            }
        }
    }
    let se = ((crate::stats::variance(&a_late) + crate::stats::variance(&b_late)) / 20.0).sqrt();
    let gap = (crate::stats::mean(&a_late) - crate::stats::mean(&b_late)).abs();
    assert!(gap < 4.0 * se + 1e-9, "gap {gap} se {se}");
    let worst = a_marg
        .iter()
        .zip(&b_marg)
        .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max);
    assert!(worst < 0.1, "{worst}");
}
