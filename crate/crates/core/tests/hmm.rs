use plsel_core::hmm::{hmm_em_fit, min_loss_single_state, sample_hmm, EmOptions, HmmModel, HmmSample};
use plsel_core::model::{estimate_lipschitz, partial_log_likelihood, Family};
use plsel_core::rng::seeded;
use rand::Rng;

/// Sum over all hidden paths `H_0..H_n` of the joint probability.
fn brute_force_likelihood(m: &HmmModel, theta: &[f64], obs: &[usize]) -> f64 {
    let (h, k) = (m.states(), m.alphabet());
    let (pi, q, nu) = m.split(theta);
    let n = obs.len();
    let paths = h.pow(n as u32 + 1);
    let mut total = 0.0;
    for code in 0..paths {
        let mut c = code;
        let mut path = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            path.push(c % h);
            c /= h;
        }
        let mut p = pi[path[0]];
        for t in 1..=n {
            p *= q[path[t - 1] * h + path[t]] * nu[path[t] * k + obs[t - 1]];
        }
        total += p;
    }
    total
}

#[test]
fn forward_recursion_matches_path_enumeration() {
    let mut rng = seeded(11);
    for &(h, k, n) in &[(1, 2, 6), (2, 3, 8), (3, 4, 7), (3, 2, 8)] {
        let m = HmmModel::new(h, k, 1.0, 1.0, n).unwrap();
        for _ in 0..3 {
            let theta = m.random_start(&mut rng);
            let obs: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let data = HmmSample::new(obs.clone(), k).unwrap();
            let ll = partial_log_likelihood(&m, &theta, &data).unwrap();
            let brute = brute_force_likelihood(&m, &theta, &obs);
            assert!(
                (ll.exp() - brute).abs() <= 1e-9 * brute,
                "h={h} k={k} n={n}: {} vs {brute}",
                ll.exp()
            );
        }
    }
}

#[test]
fn predictives_are_predictable() {
    let m = HmmModel::new(2, 3, 1.0, 1.0, 40).unwrap();
    let mut rng = seeded(3);
    let theta = m.random_start(&mut rng);
    let (data, _) = sample_hmm(&m, &theta, 40, &mut rng).unwrap();
    let base = m.laws(&theta, &data).unwrap();
    let mut perturbed = data.clone();
    for x in perturbed.observations[20..].iter_mut() {
        *x = (*x + 1) % 3;
    }
    let other = m.laws(&theta, &perturbed).unwrap();
    assert_eq!(base[..21], other[..21]);
}

#[test]
fn em_fit_dominates_the_truth() {
    let n = 5000;
    let m = HmmModel::new(2, 3, 1.0, 1.0, n).unwrap();
    let truth = m.assemble(&[0.5, 0.5], &[0.9, 0.1, 0.1, 0.9], &[0.8, 0.15, 0.05, 0.05, 0.15, 0.8]);
    let (data, _) = sample_hmm(&m, &truth, n, &mut seeded(21)).unwrap();
    let fit = hmm_em_fit(&m, &data, &EmOptions::default(), &[], &mut seeded(22)).unwrap();
    let at_truth = partial_log_likelihood(&m, &truth, &data).unwrap();
    assert!(fit.log_likelihood >= at_truth - 1e-6, "{} < {at_truth}", fit.log_likelihood);
}

#[test]
fn single_state_em_is_clipped_frequencies() {
    let n = 400;
    let m = HmmModel::new(1, 4, 1.0, 1.0, n).unwrap();
    let mut rng = seeded(4);
    // symbol 3 never occurs, so its entry sits at the floor
    let obs: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let data = HmmSample::new(obs.clone(), 4).unwrap();
    let fit = hmm_em_fit(&m, &data, &EmOptions::default(), &[], &mut seeded(5)).unwrap();
    let floor = m.emission_floor();
    let counts: Vec<f64> = (0..4).map(|x| obs.iter().filter(|&&o| o == x).count() as f64).collect();
    let expected: Vec<f64> = counts.iter().map(|c| c / n as f64 * (1.0 - floor)).collect();
    let (_, _, nu) = m.split(&fit.theta);
    for x in 0..3 {
        assert!((nu[x] - expected[x]).abs() < 1e-9, "{} vs {}", nu[x], expected[x]);
    }
    assert!((nu[3] - floor).abs() < 1e-12);
    // grid cross-check: no neighbouring feasible row does better
    let best = partial_log_likelihood(&m, &fit.theta, &data).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let mut alt = nu.to_vec();
            alt[i] += 1e-4;
            alt[j] -= 1e-4;
            let theta = m.assemble(&[1.0], &[1.0], &alt);
            assert!(partial_log_likelihood(&m, &theta, &data).unwrap() <= best);
        }
    }
}

#[test]
fn single_state_closed_form_minimizes_loss() {
    let n = 300;
    let truth_model = HmmModel::new(2, 3, 1.0, 1.0, n).unwrap();
    let truth = truth_model.assemble(&[0.5, 0.5], &[0.8, 0.2, 0.3, 0.7], &[0.6, 0.3, 0.1, 0.1, 0.3, 0.6]);
    let (data, _) = sample_hmm(&truth_model, &truth, n, &mut seeded(8)).unwrap();
    let laws = truth_model.laws(&truth, &data).unwrap();
    let m = HmmModel::new(1, 3, 1.0, 1.0, n).unwrap();
    let best = min_loss_single_state(&m, &laws).unwrap();
    let k = |theta: &[f64]| {
        let cand = m.laws(theta, &data).unwrap();
        plsel_core::loss::loss_from_laws(&laws, &cand, 10.0, false).unwrap().k_n
    };
    let k_best = k(&best);
    let (_, _, nu) = m.split(&best);
    for d in [[1e-3, -1e-3, 0.0], [0.0, 1e-3, -1e-3], [-1e-3, 0.0, 1e-3]] {
        let alt: Vec<f64> = nu.iter().zip(d).map(|(v, e)| v + e).collect();
        assert!(k(&m.assemble(&[1.0], &[1.0], &alt)) >= k_best);
    }
}

#[test]
fn sticky_chain_switch_rate_in_binomial_band() {
    let n = 20000;
    let m = HmmModel::new(2, 2, 1.0, 1.0, n).unwrap();
    let (lo, _) = m.transition_bounds();
    let q = [1.0 - lo, lo, lo, 1.0 - lo];
    let theta = m.assemble(&[0.5, 0.5], &q, &[0.5, 0.5, 0.5, 0.5]);
    let (_, hidden) = sample_hmm(&m, &theta, n, &mut seeded(31)).unwrap();
    let switches = hidden.windows(2).filter(|w| w[0] != w[1]).count() as f64;
    let trials = (n - 1) as f64;
    let sd = (trials * lo * (1.0 - lo)).sqrt();
    assert!((switches - trials * lo).abs() < 4.0 * sd, "{switches} vs {}", trials * lo);
}

#[test]
fn single_state_draws_are_iid_emissions() {
    let n = 20000;
    let m = HmmModel::new(1, 3, 1.0, 1.0, n).unwrap();
    let theta = m.assemble(&[1.0], &[1.0], &[0.2, 0.5, 0.3]);
    let (data, _) = sample_hmm(&m, &theta, n, &mut seeded(12)).unwrap();
    for (x, p) in [0.2, 0.5, 0.3].iter().enumerate() {
        let freq = data.observations.iter().filter(|&&o| o == x).count() as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((freq - n as f64 * p).abs() < 4.0 * sd);
    }
    let again = sample_hmm(&m, &theta, n, &mut seeded(12)).unwrap().0;
    assert_eq!(data, again);
}

#[test]
fn empirical_lipschitz_below_declared() {
    let n = 300;
    let m = HmmModel::new(2, 3, 1.0, 1.0, n).unwrap();
    let mut rng = seeded(41);
    let truth = m.random_start(&mut rng);
    let (data, _) = sample_hmm(&m, &truth, n, &mut rng).unwrap();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..40)
        .map(|_| (m.random_start(&mut rng), m.random_start(&mut rng)))
        .collect();
    let l = estimate_lipschitz(&m, &data, &pairs).unwrap();
    assert!(l <= m.constants().lipschitz, "{l} > {}", m.constants().lipschitz);
}
