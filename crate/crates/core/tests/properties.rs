use plsel_core::bandit::{BanditTrajectory, Exp3Config, Exp3Model};
use plsel_core::histogram::{waterfill, HistogramModel};
use plsel_core::hmm::{HmmModel, HmmSample};
use plsel_core::neuro::{NeuroModel, RateFunction, SpikeRaster, Variant};
use plsel_core::rng::{substream, Purpose};
use plsel_core::selection::penalty;
use plsel_core::{select_model, AssumptionConstants, Candidate, Family, NormId, PenaltySpec, Regime};
use proptest::prelude::*;

fn hmm_case() -> impl Strategy<Value = (usize, usize, u64, Vec<usize>)> {
    (1usize..=3, 2usize..=4, any::<u64>()).prop_flat_map(|(h, k, seed)| {
        (Just(h), Just(k), Just(seed), prop::collection::vec(0..k, 2..30))
    })
}

fn exp3_case() -> impl Strategy<Value = (usize, f64, Vec<(usize, f64)>)> {
    (2usize..=5, 0.2f64..2.0).prop_flat_map(|(arms, theta)| {
        (Just(arms), Just(theta), prop::collection::vec((0..arms, 0.0f64..1.0), 2..60))
    })
}

fn exp3_model(arms: usize) -> Exp3Model {
    Exp3Model::new(Exp3Config {
        arms,
        horizon_scale: 40_000.0,
        r_min: 0.2,
        r_max: 2.0,
        losses: vec![0.5; arms],
        epsilon: 0.5 / arms as f64,
    })
    .unwrap()
}

fn candidates(lls: &[f64], dims: &[usize]) -> Vec<Candidate> {
    let constants = AssumptionConstants::bounded(0.1, 10.0, 10.0, NormId::Sup).unwrap();
    lls.iter()
        .zip(dims)
        .enumerate()
        .map(|(id, (&ll, &dim))| Candidate {
            id,
            name: format!("m{id}"),
            dim,
            constants: constants.clone(),
            theta_hat: vec![],
            log_likelihood: ll,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_laws_are_normalized(w in prop::collection::vec(1e-3f64..1.0, 1..32)) {
        let m = HistogramModel::new(w.len(), 0.05).unwrap();
        let theta = waterfill(&w, 0.05);
        prop_assert!((m.law(&theta).total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hmm_laws_are_normalized_and_predictable((h, k, seed, obs) in hmm_case(), cut in 1usize..29) {
        let m = HmmModel::new(h, k, 1.0, 1.0, 100).unwrap();
        let theta = m.random_start(&mut substream(seed, 0, Purpose::Probe));
        let full = m.laws(&theta, &HmmSample::new(obs.clone(), k).unwrap()).unwrap();
        for law in &full {
            prop_assert!((law.total() - 1.0).abs() < 1e-12);
        }
        // laws up to `cut` ignore the observations after it
        let cut = cut.min(obs.len() - 1).max(2);
        let mut changed = obs[..cut].to_vec();
        changed.extend(obs[cut..].iter().map(|x| (x + 1) % k));
        let other = m.laws(&theta, &HmmSample::new(changed, k).unwrap()).unwrap();
        prop_assert_eq!(&full[..cut], &other[..cut]);
    }

    #[test]
    fn exp3_laws_are_normalized_and_predictable((arms, theta, steps) in exp3_case()) {
        let m = exp3_model(arms);
        let (a, l): (Vec<usize>, Vec<f64>) = steps.iter().copied().unzip();
        let full = m.laws(&[theta], &BanditTrajectory::new(arms, a.clone(), l.clone()).unwrap()).unwrap();
        for law in &full {
            prop_assert!((law.total() - 1.0).abs() < 1e-12);
        }
        let half = a.len() / 2 + 1;
        let prefix = m
            .laws(&[theta], &BanditTrajectory::new(arms, a[..half].to_vec(), l[..half].to_vec()).unwrap())
            .unwrap();
        prop_assert_eq!(&full[..half], &prefix[..]);
    }

    #[test]
    fn neuro_laws_are_normalized_and_pure(seed in any::<u64>(), lag in 1usize..=3, gl in any::<bool>()) {
        use rand::Rng;
        let mut rng = substream(seed, 0, Purpose::Probe);
        let variant = if gl { Variant::Gl } else { Variant::Hawkes };
        let m = NeuroModel::new(0, vec![0, 1], lag, variant, RateFunction::Sigmoid, 0.05).unwrap();
        let spikes = (0..2).map(|_| (0..=40 + lag).map(|_| rng.random_bool(0.3) as u8).collect()).collect();
        let raster = SpikeRaster::new(lag, 40, spikes).unwrap();
        let theta = m.random_feasible(&mut rng);
        let a = m.laws(&theta, &raster).unwrap();
        let b = m.laws(&theta, &raster).unwrap();
        for law in &a {
            prop_assert!((law.total() - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(a, b);
    }

    #[test]
    fn selection_is_pure_and_shift_invariant(
        lls in prop::collection::vec(-5000.0f64..0.0, 1..8),
        shift in -1000.0f64..1000.0,
        c in 1e-8f64..1e-2,
    ) {
        let dims: Vec<usize> = (1..=lls.len()).collect();
        let spec = PenaltySpec::new(Regime::Bounded, 0.5, c, 1000).unwrap();
        let fits = candidates(&lls, &dims);
        let first = select_model(&fits, &spec).unwrap();
        prop_assert_eq!(&first, &select_model(&fits, &spec).unwrap());
        let shifted: Vec<f64> = lls.iter().map(|l| l + shift).collect();
        let moved = select_model(&candidates(&shifted, &dims), &spec).unwrap();
        // a shift can only matter where criteria are within rounding of each other
        if !first.tie_break_applied && !moved.tie_break_applied {
            prop_assert_eq!(first.selected, moved.selected);
        }
    }

    #[test]
    fn penalty_is_homogeneous_in_c(c in 1e-10f64..1e2, s in 1e-3f64..1e3, dim in 1usize..100, n in 2usize..100_000) {
        let constants = AssumptionConstants::bounded(0.1, 10.0, 10.0, NormId::Sup).unwrap();
        let a = penalty(&constants, dim, &PenaltySpec::new(Regime::Bounded, 0.5, c, n).unwrap()).unwrap();
        let b = penalty(&constants, dim, &PenaltySpec::new(Regime::Bounded, 0.5, c * s, n).unwrap()).unwrap();
        prop_assert!((b - s * a).abs() <= 1e-12 * b.abs());
    }
}
