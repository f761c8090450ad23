use netference::graph::{exposure, CovariateFrame};
use netference::propensity::{fit_neighborhood_ps, standardized_difference};
use netference::simgen::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn population(n: usize, scenario: u8, cfg: impl FnOnce(&mut NetworkConfig)) -> Population {
    let mut c = NetworkConfig { n, ..Default::default() };
    cfg(&mut c);
    let (net, cov) = gen_network(&c).unwrap();
    Population::new(net, cov, scenario, 3).unwrap()
}

#[test]
fn identical_seed_gives_identical_draws() {
    let cfg = NetworkConfig { n: 1000, clusters: 4, seed: 7, ..Default::default() };
    let (a, ca) = gen_network(&cfg).unwrap();
    let (b, cb) = gen_network(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    let pop = Population::new(a, ca, 4, 1).unwrap();
    let spec = ScenarioSpec::new(4, Interference::High, OutcomeKind::Model2);
    let d1 = simulate(&pop, &spec, 9, 2).unwrap();
    let d2 = simulate(&pop, &spec, 9, 2).unwrap();
    assert_eq!(d1.data, d2.data);
    assert_eq!(d1.assignment, d2.assignment);
    assert_eq!(d1.truth, d2.truth);
    let d3 = simulate(&pop, &spec, 9, 3).unwrap();
    assert_ne!(d1.data.y, d3.data.y);
}

#[test]
fn assigned_exposure_equals_mapping_of_z() {
    for scenario in 1..=4 {
        let pop = population(1000, scenario, |c| c.clusters = 4);
        let spec = ScenarioSpec::new(scenario, Interference::Low, OutcomeKind::Model1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let asg = assign_treatments(&pop, &spec, &mut rng).unwrap();
        let e = exposure(&pop.net, &asg.z, &spec.exposure).unwrap();
        assert_eq!(asg.exposure_values, e.values, "scenario {scenario}");
        assert_eq!(asg.trials, e.trials);
        assert!(asg.converged);
    }
}

#[test]
fn strong_grade_homophily_keeps_friends_close_in_grade() {
    let cfg = NetworkConfig { n: 5000, grade_weight: 3.0, ..Default::default() };
    let (_, cov) = gen_network(&cfg).unwrap();
    let g = cov.values("grade").unwrap();
    let fg = cov.values("friends.grade").unwrap();
    let gap = g.iter().zip(fg).map(|(a, b)| (a - b).abs()).sum::<f64>() / g.len() as f64;
    assert!(gap < 1.0, "mean |grade - friends.grade| = {gap}");
}

#[test]
fn no_homophily_leaves_friends_balanced() {
    let pop = population(5000, 1, |c| {
        c.grade_weight = 0.0;
        c.race_weight = 0.0;
    });
    let spec = ScenarioSpec::new(1, Interference::Low, OutcomeKind::Model1);
    let d = simulate(&pop, &spec, 1, 0).unwrap();
    let fr = d.data.column("friends.race").unwrap();
    let (t, c): (Vec<(f64, u8)>, Vec<(f64, u8)>) = fr.iter().copied().zip(d.data.z.iter().copied()).partition(|p| p.1 == 1);
    let sd = standardized_difference(&t.iter().map(|p| p.0).collect::<Vec<_>>(), &c.iter().map(|p| p.0).collect::<Vec<_>>())
        .unwrap();
    assert!(sd.abs() < 0.1, "friends.race std diff {sd}");
}

#[test]
fn minimum_covariates_give_logit_minus_six() {
    let (net, _) = gen_network(&NetworkConfig { n: 4000, clusters: 4, ..Default::default() }).unwrap();
    let n = net.num_nodes();
    let mut cov = CovariateFrame::new(n);
    cov.add_individual("race", vec![0.0; n]).unwrap();
    cov.add_individual("grade", vec![6.0; n]).unwrap();
    let cov = netference::graph::neighborhood_covariates(
        &net,
        &cov,
        &[
            ("race", netference::graph::Aggregator::Mean),
            ("grade", netference::graph::Aggregator::Mean),
            ("race", netference::graph::Aggregator::Degree),
        ],
    )
    .unwrap();
    let pop = Population::new(net, cov, 1, 2).unwrap();
    assert!(pop.eta.iter().all(|&e| e == -6.0));
    let p = pop.treated_share_reference();
    assert!((p - 0.0024726).abs() < 1e-6, "{p}");
    let spec = ScenarioSpec::new(1, Interference::Low, OutcomeKind::Model1);
    let mut treated = 0usize;
    for r in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        rng.set_stream(r);
        treated += assign_treatments(&pop, &spec, &mut rng).unwrap().z.iter().filter(|&&z| z == 1).count();
    }
    let share = treated as f64 / (10 * n) as f64;
    assert!((share - 0.0025).abs() < 4.0 * (0.0025f64 * 0.9975 / (10 * n) as f64).sqrt(), "{share}");
}

#[test]
fn scenario_one_is_conditionally_independent() {
    let pop = population(10000, 1, |_| {});
    let spec = ScenarioSpec::new(1, Interference::Low, OutcomeKind::Model1);
    let r = 20;
    let gammas: Vec<f64> = (0..r)
        .map(|k| {
            let d = simulate(&pop, &spec, 4, k).unwrap();
            fit_neighborhood_ps(&d.data, &names(&X_Z)).unwrap().gamma_z()
        })
        .collect();
    let mean = gammas.iter().sum::<f64>() / r as f64;
    let sd = (gammas.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (r - 1) as f64).sqrt();
    // Each fit's γ_z is compared with its own sampling spread. The mean over
    // fits carries a small misspecification offset from the linear grade term.
    assert!(mean.abs() <= 2.0 * sd, "mean γ_z {mean}, sd {sd}");
}

#[test]
fn scenario_four_stays_correlated_given_all_covariates() {
    let pop = population(5000, 4, |_| {});
    let spec = ScenarioSpec::new(4, Interference::Low, OutcomeKind::Model1);
    let d = simulate(&pop, &spec, 4, 0).unwrap();
    let rho = partial_correlation_zg(&d.data, &names(&X_Z)).unwrap().unwrap();
    assert!(rho > 0.1, "ρ = {rho}");
}

#[test]
fn scenario_three_treated_have_more_treated_friends() {
    let pop = population(5000, 3, |_| {});
    let spec = ScenarioSpec::new(3, Interference::Low, OutcomeKind::Model1);
    let d = simulate(&pop, &spec, 4, 0).unwrap();
    let mean_g = |z: u8| {
        let v: Vec<f64> = d.data.g.iter().zip(&d.data.z).filter(|p| *p.1 == z).map(|p| *p.0).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_g(1) > 1.5 * mean_g(0), "{} vs {}", mean_g(1), mean_g(0));
}

#[test]
fn outcome_noise_is_centered_on_mu() {
    let pop = population(2000, 2, |c| c.clusters = 4);
    let spec = ScenarioSpec::new(2, Interference::Medium, OutcomeKind::Model2);
    let d = simulate(&pop, &spec, 6, 0).unwrap();
    let mu = d.data.column("mu").unwrap();
    let resid: Vec<f64> = d.data.y.iter().zip(mu).map(|(y, m)| y - m).collect();
    let n = resid.len() as f64;
    let mean = resid.iter().sum::<f64>() / n;
    let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 4.0 / n.sqrt(), "{mean}");
    assert!((var - 1.0).abs() < 0.1, "{var}");
}

#[test]
fn model_two_mean_matches_enumeration() {
    // Population mean of μ at the realized (z, g) recomputed term by term.
    let pop = population(2000, 2, |c| c.clusters = 4);
    let spec = ScenarioSpec::new(2, Interference::High, OutcomeKind::Model2);
    let d = simulate(&pop, &spec, 6, 1).unwrap();
    let fg = pop.cov.values("friends.grade").unwrap();
    let fr = pop.cov.values("friends.race").unwrap();
    let mut acc = 0.0;
    for r in 0..d.data.len() {
        let i = d.data.node[r];
        let (z, g, m) = (d.data.z[r] as f64, d.data.g[r], d.data.trials[r]);
        let ind = pop.indicator[i] as u8 as f64;
        let k = (g * m as f64).round() as u64;
        let p = pop.pi_true[z as usize][i];
        let choose = (0..k).fold(1.0, |c, t| c * (m as u64 - t) as f64 / (t + 1) as f64);
        let lam = choose * p.powi(k as i32) * (1.0 - p).powi((m as u64 - k) as i32);
        acc += 15.0 + fg[i] + 7.0 * fr[i] - 10.0 * ind - 10.0 * z - 10.0 * g - 10.0 * lam + 5.0 * g * ind + 3.0 * z * g;
    }
    let oracle = acc / d.data.len() as f64;
    let mean_mu = d.data.column("mu").unwrap().iter().sum::<f64>() / d.data.len() as f64;
    assert!((oracle - mean_mu).abs() < 1e-9, "{oracle} vs {mean_mu}");
}

#[test]
fn full_scale_configuration_is_accepted() {
    let cfg = NetworkConfig::full_scale(1);
    assert_eq!((cfg.n, cfg.clusters), (16410, 29));
    let (net, _) = gen_network(&cfg).unwrap();
    assert_eq!(net.num_nodes(), 16410);
    assert_eq!(net.clusters().unwrap().iter().max(), Some(&28));
}
