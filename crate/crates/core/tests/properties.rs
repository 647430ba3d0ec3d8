use proptest::prelude::*;

use seqcomply::gibbs::{compliance_posterior, SamplerConfig};
use seqcomply::model::{self, PriorSpec, Theta};
use seqcomply::simulate::{realize_unit, UnitDraws};
use seqcomply::{
    consistent_types, realized_treatment, ComplianceType, Dataset, DgpConfig, ObservedUnit,
};

fn theta_strategy(p: usize) -> impl Strategy<Value = Theta> {
    let n = model::unconstrained_len(p);
    proptest::collection::vec(-2.0f64..2.0, n)
        .prop_map(move |v| Theta::from_unconstrained(p, &v))
}

fn unit_strategy(p: usize) -> impl Strategy<Value = ObservedUnit> {
    (
        proptest::collection::vec(-3.0f64..3.0, p),
        0usize..3,
        any::<(bool, bool)>(),
        -5.0f64..5.0,
        -5.0f64..5.0,
    )
        .prop_map(|(x1, c, (z1, z2), x2, y)| {
            let c = ComplianceType::ALL[c];
            ObservedUnit {
                x1,
                z1,
                w1: realized_treatment(c, z1),
                x2,
                z2,
                w2: realized_treatment(c, z2),
                y,
            }
        })
}

proptest! {
    #[test]
    fn generating_type_is_always_consistent(c in 0usize..3, z1: bool, z2: bool) {
        let c = ComplianceType::ALL[c];
        let set = consistent_types(z1, realized_treatment(c, z1), z2, realized_treatment(c, z2));
        prop_assert!(set.contains(c));
        prop_assert!(!set.is_empty() && set.len() <= 2);
    }

    #[test]
    fn compliance_probs_normalized(theta in theta_strategy(2), x in proptest::collection::vec(-4.0f64..4.0, 2)) {
        let p = model::compliance_prob(&theta, &x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn posterior_supported_on_consistent_types(theta in theta_strategy(1), u in unit_strategy(1)) {
        let post = compliance_posterior(&theta, &u).unwrap();
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let support = u.consistent_types();
        for c in ComplianceType::ALL {
            if !support.contains(c) {
                prop_assert_eq!(post[c.index()], 0.0);
            }
        }
    }

    #[test]
    fn marginal_is_log_sum_of_weights(theta in theta_strategy(1), u in unit_strategy(1)) {
        let w = model::type_log_weights(&theta, &u).unwrap();
        // keep exp() away from underflow so the direct sum is meaningful
        prop_assume!(w.iter().copied().fold(f64::NEG_INFINITY, f64::max) > -600.0);
        let direct: f64 = w.iter().map(|l| l.exp()).sum::<f64>().ln();
        let m = model::unit_marginal_loglik(&theta, &u).unwrap();
        prop_assert!((m - direct).abs() < 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn unconstrained_round_trip(v in proptest::collection::vec(-3.0f64..3.0, model::unconstrained_len(2))) {
        let t = Theta::from_unconstrained(2, &v);
        let back = t.to_unconstrained();
        for (a, b) in v.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exclusion_restriction_under_flipped_assignment(seed: u64, index in 0usize..1000, z1: bool, z2: bool) {
        let cfg = DgpConfig::with_defaults(1000, 2, seed);
        let theta = cfg.theta();
        let draws = UnitDraws::draw(&cfg, index);
        let (base, table) = realize_unit(&cfg, &theta, &draws, Some((false, false)));
        let (flipped, _) = realize_unit(&cfg, &theta, &draws, Some((z1, z2)));
        prop_assert!(table.check_pattern().is_ok());
        if table.compliance() != ComplianceType::Complier {
            prop_assert_eq!(base.x2.to_bits(), flipped.x2.to_bits());
            prop_assert_eq!(base.y.to_bits(), flipped.y.to_bits());
        } else {
            prop_assert_eq!((flipped.w1, flipped.w2), (z1, z2));
        }
    }

    #[test]
    fn prior_invariant_to_gamma_sign(theta in theta_strategy(1)) {
        let prior = PriorSpec::default();
        let mut neg = theta.clone();
        neg.gamma_nt.iter_mut().for_each(|g| *g = -*g);
        prop_assert!((model::log_prior(&theta, &prior) - model::log_prior(&neg, &prior)).abs() < 1e-9);
    }
}

#[test]
fn sampler_config_defaults() {
    let c = SamplerConfig::default();
    assert_eq!((c.n_chains, c.n_warmup, c.n_draws), (4, 1000, 2000));
    assert!(c.validate().is_ok());
}

#[test]
fn permuted_dataset_keeps_units() {
    let (data, _) = seqcomply::simulate_dataset(&DgpConfig::with_defaults(10, 1, 2)).unwrap();
    let order: Vec<usize> = (0..10).rev().collect();
    let p = data.permuted(&order);
    assert_eq!(p.units()[0], data.units()[9]);
    let back = Dataset::new(1, p.units().iter().rev().cloned().collect()).unwrap();
    assert_eq!(back, data);
}
