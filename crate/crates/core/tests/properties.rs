use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, InverseGamma, Normal};

use driftbayes::augmentation::AugmentedState;
use driftbayes::basis::{synthesize, BasisFamily};
use driftbayes::conjugate::{posterior, spectral_prior, GaussianPrior};
use driftbayes::gof::{ks_test, ljung_box};
use driftbayes::hierarchical::{run_chain, ChainConfig, HierPrior, SweepOrder, WeightRule, XiRule};
use driftbayes::likelihood::{occupation_fields, stats_from_occupation, sufficient_statistics, SufficientStats};
use driftbayes::path::{quadratic_variation, sample_brownian_bridge, simulate_path, ObservationSet};
use driftbayes::rng::{Domain, SeedStream};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulation_is_bit_reproducible(seed in any::<u64>(), c in -2.0f64..2.0, n in 1usize..3000) {
        let fam = BasisFamily::fourier();
        let drift = synthesize(&fam, &[c, 0.5]).unwrap();
        let a = simulate_path(&drift, 0.1, 3.0, n, &SeedStream::new(seed)).unwrap();
        let b = simulate_path(&drift, 0.1, 3.0, n, &SeedStream::new(seed)).unwrap();
        let bits = |p: &driftbayes::path::SamplePath| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn quadratic_variation_is_monotone_from_zero(seed in any::<u64>(), n in 1usize..2000) {
        let path = simulate_path(&|x: f64| -x, 0.0, 2.0, n, &SeedStream::new(seed)).unwrap();
        let qv = quadratic_variation(&path);
        prop_assert_eq!(qv[0], 0.0);
        prop_assert!(qv.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn bridge_endpoints_are_exact(a in -5.0f64..5.0, b in -5.0f64..5.0, dur in 0.01f64..10.0, n in 1usize..200, seed in any::<u64>()) {
        let mut rng = SeedStream::new(seed).rng(Domain::Bridge, 0);
        let br = sample_brownian_bridge(a, b, dur, n, &mut rng).unwrap();
        prop_assert_eq!(br.first().to_bits(), a.to_bits());
        prop_assert_eq!(br.last().to_bits(), b.to_bits());
    }

    #[test]
    fn local_time_is_reversal_invariant(seed in any::<u64>(), cells in 2usize..300) {
        let path = simulate_path(&|x: f64| (6.0 * x).sin(), 0.3, 5.0, 2000, &SeedStream::new(seed)).unwrap();
        let f = occupation_fields(&path, cells).unwrap();
        let r = occupation_fields(&path.time_reversed(), cells).unwrap();
        for (a, b) in f.local_time.iter().zip(&r.local_time) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        for (a, b) in f.winding.iter().zip(&r.winding) {
            prop_assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn precision_update_adds_sigma_exactly(seed in any::<u64>(), m in 1usize..8) {
        let mut rng = SeedStream::new(seed).rng(Domain::Experiment, 0);
        let a = DMatrix::from_fn(m, m, |_, _| rng.random::<f64>() - 0.5);
        let sigma = &a * a.transpose();
        let mu = nalgebra::DVector::from_fn(m, |_, _| rng.random::<f64>() - 0.5);
        let variances: Vec<f64> = (0..m).map(|_| 0.1 + rng.random::<f64>()).collect();
        let prior = GaussianPrior::diagonal(&variances).unwrap();
        let stats = SufficientStats::new(mu, sigma.clone(), 1.0).unwrap();
        let post = posterior(&stats, &prior).unwrap();
        // stored as the literal sum, so the identity holds bit for bit
        prop_assert_eq!(post.precision(), &(sigma + prior.precision()));
    }

    #[test]
    fn imputation_keeps_observations_pinned(seed in any::<u64>(), inner in 1usize..20, sweeps in 1usize..4) {
        let stream = SeedStream::new(seed);
        let ys: Vec<f64> = {
            let mut rng = stream.rng(Domain::Experiment, 0);
            (0..12).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect()
        };
        let obs = ObservationSet::new(0.3, ys).unwrap();
        let mut state = AugmentedState::from_bridges(&obs, inner, &stream, 0).unwrap();
        for it in 1..4 {
            state.update(&|x: f64| -2.0 * x.powi(3), sweeps, &stream, it, None).unwrap();
            prop_assert!(state.pinned());
        }
    }
}

#[test]
fn zero_drift_increments_are_iid_gaussian() {
    let std_normal = Normal::standard();
    let (mut normal_fail, mut indep_fail) = (0, 0);
    for s in 0..20 {
        let path = simulate_path(&|_: f64| 0.0, 0.0, 10.0, 4000, &SeedStream::new(s)).unwrap();
        let sd = path.dt().sqrt();
        let inc: Vec<f64> = path.values().windows(2).map(|w| (w[1] - w[0]) / sd).collect();
        normal_fail += (ks_test(&inc, |x| std_normal.cdf(x)).unwrap().p_value < 0.01) as usize;
        indep_fail += (ljung_box(&inc, 10).unwrap().p_value < 0.01) as usize;
    }
    assert!(normal_fail <= 2 && indep_fail <= 2, "{normal_fail} {indep_fail}");
}

#[test]
fn spectral_posterior_through_occupation_fields_matches_direct_route() {
    let fam = BasisFamily::fourier();
    let drift = synthesize(&fam, &[-1.0, 0.5]).unwrap();
    let path = simulate_path(&drift, 0.2, 0.1, 1_000_000, &SeedStream::new(77)).unwrap();
    let m = 8;
    let prior = spectral_prior(0.02, 0.0, 2, m).unwrap();
    let direct = posterior(&sufficient_statistics(&path, &fam, m).unwrap(), &prior).unwrap();
    let occ = stats_from_occupation(&occupation_fields(&path, 4096).unwrap(), &fam, m).unwrap();
    let via_occ = posterior(&occ, &prior).unwrap();
    for k in 0..m {
        let sd = direct.covariance()[(k, k)].sqrt();
        assert!(
            (direct.mean()[k] - via_occ.mean()[k]).abs() < 0.02 * sd,
            "coefficient {k}"
        );
    }
    let (dc, oc) = (direct.covariance(), via_occ.covariance());
    for k in 0..m {
        assert!((dc[(k, k)] - oc[(k, k)]).abs() < 0.02 * dc[(k, k)]);
    }
}

#[test]
fn sweep_order_does_not_change_the_no_data_stationary_law() {
    let (a, b) = (2.5, 1.5);
    let prior = HierPrior::new(
        BasisFamily::fourier(),
        3,
        &WeightRule::default(),
        &XiRule::default(),
        a,
        b,
    )
    .unwrap();
    let stats = SufficientStats::zeros(prior.m_max(), 0.0);
    let ig = InverseGamma::new(a, b).unwrap();
    let std_normal = Normal::standard();
    for (i, order) in [SweepOrder::ThetaFirst, SweepOrder::ScaleFirst].into_iter().enumerate() {
        let cfg = ChainConfig {
            n_iter: 201_000,
            burn_in: 1_000,
            thinning: 50,
            order,
        };
        let mut rng = SeedStream::new(40 + i as u64).rng(Domain::Chain, 0);
        let chain = run_chain(&stats, &prior, &cfg, &[], None, &mut rng).unwrap();
        let s2: Vec<f64> = chain.records.iter().map(|r| r.s2).collect();
        let z: Vec<f64> = chain
            .records
            .iter()
            .map(|r| r.theta[0] / (r.s2 * prior.xi2()[0]).sqrt())
            .collect();
        assert!(ks_test(&s2, |x| ig.cdf(x)).unwrap().p_value > 0.005, "{order:?}: s2");
        assert!(
            ks_test(&z, |x| std_normal.cdf(x)).unwrap().p_value > 0.005,
            "{order:?}: theta"
        );
    }
}
