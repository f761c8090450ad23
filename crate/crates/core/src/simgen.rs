//! Synthetic school-friendship networks and the four treatment-assignment
//! scenarios with their outcome models and true effects.
//!
//! Nodes live in clusters (schools). Ties form only within a cluster, with
//! log-odds `a + s_i + s_j - w_grade |grade_i - grade_j| + w_race 1[race_i =
//! race_j]`, where `s` is a per-node sociability effect and `a` is solved so
//! the expected mean degree equals the target.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::UnitData;
use crate::error::{config, input, Result};
use crate::estimators::{default_g_grid, EffectReport};
use crate::glm::{fit_binomial_logit, fit_dropping_dependent, fit_wls, sigmoid, DesignMatrix, GlmFit};
use crate::graph::{exposure, neighborhood_covariates, Aggregator, CovariateFrame, Exposure, ExposureKind, ExposureSpec, Network};
use crate::propensity::binomial_pmf;

/// Seeded assignments pooled to fit the true neighborhood law.
const LAW_DRAWS: u64 = 5;

/// Individual covariates.
pub const X_IND: [&str; 2] = ["race", "grade"];
/// Individual and neighborhood covariates.
pub const X_Z: [&str; 5] = ["race", "grade", "friends.race", "friends.grade", "degree"];

pub fn names(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n: usize,
    pub clusters: usize,
    pub grade_weight: f64,
    pub race_weight: f64,
    pub degree_target: f64,
    pub rank_k: usize,
    pub sociability_sd: f64,
    /// Probability of grade 6; grades 7 to 12 share the rest equally.
    pub p_grade6: f64,
    pub p_race: f64,
    /// Probability that a cluster's grades shift by -1 and by +1 (each).
    pub p_cluster_shift: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n: 5000,
            clusters: 9,
            grade_weight: 0.5,
            race_weight: 0.5,
            degree_target: 8.0,
            rank_k: 5,
            sociability_sd: 0.5,
            p_grade6: 0.02,
            p_race: 0.65,
            p_cluster_shift: 0.05,
            seed: 1,
        }
    }
}

impl NetworkConfig {
    /// Add Health scale: 16410 students in 29 schools.
    pub fn full_scale(seed: u64) -> Self {
        NetworkConfig { n: 16410, clusters: 29, seed, ..Default::default() }
    }
}

fn cluster_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|c| n / k + usize::from(c < n % k)).collect()
}

/// Generates the network with ranked friend lists and the covariate frame
/// `race, grade, friends.race, friends.grade, degree`.
pub fn gen_network(cfg: &NetworkConfig) -> Result<(Network, CovariateFrame)> {
    if cfg.n < 100 {
        return config(format!("n = {} is below the minimum of 100 nodes", cfg.n));
    }
    if cfg.clusters == 0 || cfg.clusters > cfg.n {
        return config("clusters must be between 1 and n");
    }
    if !(cfg.degree_target > 0.0) {
        return config("degree_target must be positive");
    }
    if cfg.rank_k == 0 {
        return config("rank_k must be positive");
    }
    for (name, p) in [("p_grade6", cfg.p_grade6), ("p_race", cfg.p_race), ("p_cluster_shift", cfg.p_cluster_shift)] {
        if !(0.0..=1.0).contains(&p) {
            return config(format!("{name} must lie in [0, 1]"));
        }
    }
    if cfg.p_cluster_shift > 0.5 {
        return config("p_cluster_shift must be at most 0.5");
    }
    if !(cfg.sociability_sd >= 0.0) {
        return config("sociability_sd must be nonnegative");
    }
    let sizes = cluster_sizes(cfg.n, cfg.clusters);
    let smallest = *sizes.iter().min().unwrap();
    if cfg.degree_target >= (smallest - 1) as f64 {
        return config(format!(
            "degree_target {} is infeasible for clusters of {} nodes",
            cfg.degree_target, smallest
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;
    let mut cluster = Vec::with_capacity(n);
    let mut grade = Vec::with_capacity(n);
    let mut race = Vec::with_capacity(n);
    let mut soc = Vec::with_capacity(n);
    let soc_dist = Normal::new(0.0, cfg.sociability_sd).map_err(|e| crate::Error::Config(e.to_string()))?;
    for (c, &size) in sizes.iter().enumerate() {
        let u: f64 = rng.random();
        let shift: i32 = if u < cfg.p_cluster_shift {
            -1
        } else if u < 2.0 * cfg.p_cluster_shift {
            1
        } else {
            0
        };
        for _ in 0..size {
            let base: i32 = if rng.random::<f64>() < cfg.p_grade6 { 6 } else { rng.random_range(7..=12) };
            cluster.push(c);
            grade.push((base + shift).clamp(6, 12) as f64);
            race.push(if rng.random::<f64>() < cfg.p_race { 1.0 } else { 0.0 });
            soc.push(soc_dist.sample(&mut rng));
        }
    }
    let starts: Vec<usize> = sizes.iter().scan(0, |acc, &s| {
        let start = *acc;
        *acc += s;
        Some(start)
    }).collect();
    let affinity = |i: usize, j: usize| {
        soc[i] + soc[j] - cfg.grade_weight * (grade[i] - grade[j]).abs()
            + if race[i] == race[j] { cfg.race_weight } else { 0.0 }
    };
    // Solve Σ_pairs σ(a + c_ij) = target · n / 2 by safeguarded Newton.
    let target_edges = cfg.degree_target * n as f64 / 2.0;
    let expected = |a: f64| -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for (&start, &size) in starts.iter().zip(&sizes) {
            for i in start..start + size {
                for j in i + 1..start + size {
                    let p = sigmoid(a + affinity(i, j));
                    f += p;
                    df += p * (1.0 - p);
                }
            }
        }
        (f, df)
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    let mut a = 0.0;
    for _ in 0..200 {
        let (f, df) = expected(a);
        let r = f - target_edges;
        if r.abs() < 1e-8 * target_edges {
            break;
        }
        if r > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        let newton = a - r / df;
        a = if df > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let mut edges = Vec::new();
    for (&start, &size) in starts.iter().zip(&sizes) {
        for i in start..start + size {
            for j in i + 1..start + size {
                if rng.random::<f64>() < sigmoid(a + affinity(i, j)) {
                    edges.push((i, j));
                }
            }
        }
    }
    let net = Network::from_edges(n, &edges, Some(cluster))?;
    let ranked: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut r = net.neighbors(i).to_vec();
            r.shuffle(&mut rng);
            r
        })
        .collect();
    let net = net.with_ranked_friends(ranked)?;
    let mut cov = CovariateFrame::new(n);
    cov.add_individual("race", race)?;
    cov.add_individual("grade", grade)?;
    let cov = neighborhood_covariates(
        &net,
        &cov,
        &[("race", Aggregator::Mean), ("grade", Aggregator::Mean), ("race", Aggregator::Degree)],
    )?;
    Ok((net, cov))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interference {
    Low,
    Medium,
    High,
}

impl Interference {
    pub const ALL: [Interference; 3] = [Interference::Low, Interference::Medium, Interference::High];

    pub fn name(self) -> &'static str {
        match self {
            Interference::Low => "low",
            Interference::Medium => "medium",
            Interference::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    /// Main-effect outcome: depends on covariates only through the
    /// propensity indicator and has no Z-by-G interaction.
    Model1,
    /// Spillover outcome with neighborhood covariates, the true neighborhood
    /// score and interactions.
    Model2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: u8,
    pub interference: Interference,
    pub outcome: OutcomeKind,
    pub exposure: ExposureSpec,
    pub max_iters: usize,
}

impl ScenarioSpec {
    /// Scenario with its natural exposure mapping: share treated among the
    /// five best friends, or the count of treated friends for scenario 3.
    pub fn new(scenario: u8, interference: Interference, outcome: OutcomeKind) -> Self {
        let exposure = if scenario == 3 { ExposureSpec::count_all() } else { ExposureSpec::top_k(5) };
        ScenarioSpec { scenario, interference, outcome, exposure, max_iters: 50 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.scenario) {
            return config(format!("scenario must be 1-4, got {}", self.scenario));
        }
        match (self.scenario, self.exposure.kind) {
            (3, ExposureKind::CountAll) => Ok(()),
            (3, _) => config("scenario 3 requires the count_all exposure"),
            (_, ExposureKind::ProportionTopK { .. }) => Ok(()),
            (s, _) => config(format!("scenario {s} requires a proportion_top_k exposure")),
        }
    }

    pub fn delta(&self) -> f64 {
        match (self.scenario == 3, self.interference) {
            (false, Interference::Low) => -5.0,
            (false, Interference::Medium) => -8.0,
            (false, Interference::High) => -10.0,
            (true, Interference::Low) => -0.3,
            (true, Interference::Medium) => -0.5,
            (true, Interference::High) => -0.8,
        }
    }

    /// Coefficients of `g·I` and `z·g` in the spillover outcome.
    fn interaction_coefs(&self) -> (f64, f64) {
        if self.scenario == 3 {
            (0.5, 0.3)
        } else {
            (5.0, 3.0)
        }
    }
}

/// Fixed network plus scenario-specific structural quantities.
#[derive(Debug, Clone)]
pub struct Population {
    pub net: Network,
    pub cov: CovariateFrame,
    pub scenario: u8,
    /// Linear predictor of the scenario's treatment logit without the peer
    /// term.
    pub eta: Vec<f64>,
    /// Per-node reference probability of treatment.
    pub p_ref: Vec<f64>,
    /// φ(1; X^ind): mean of `p_ref` over the node's (grade, race) cell.
    pub phi_ind: Vec<f64>,
    /// High-propensity indicator `phi_ind ≥ 0.7` used by both outcome
    /// models, so the outcome depends on individual covariates only.
    pub indicator: Vec<bool>,
    /// Success probability of the true neighborhood binomial law, per
    /// individual treatment `z`.
    pub pi_true: [Vec<f64>; 2],
    /// Coefficients of that law on `(1, z, X^g)`.
    pub lambda_law: GlmFit,
    exposure: ExposureSpec,
}

fn scenario_eta(scenario: u8, cov: &CovariateFrame, net: &Network) -> Result<Vec<f64>> {
    let race = cov.values("race")?;
    let grade = cov.values("grade")?;
    let n = net.num_nodes();
    Ok(match scenario {
        1 | 4 => (0..n).map(|i| if scenario == 1 { -18.0 } else { -20.0 } + 2.0 * grade[i] + 3.0 * race[i]).collect(),
        2 => {
            let fr = cov.values("friends.race")?;
            let fg = cov.values("friends.grade")?;
            (0..n).map(|i| -47.0 + 2.0 * grade[i] + 4.0 * race[i] + 3.0 * fg[i] + 5.0 * fr[i]).collect()
        }
        3 => (0..n).map(|i| -49.0 + 3.0 * grade[i] + 4.0 * race[i] + 4.0 * net.degree(i) as f64).collect(),
        s => return config(format!("scenario must be 1-4, got {s}")),
    })
}

/// Peer-influence assignment: starting from no treated friends, every node
/// takes treatment when `u_i < σ(η_i + 4 G_i)`, repeated until no node
/// changes. The update is monotone, so it terminates.
fn peer_assignment(net: &Network, eta: &[f64], u: &[f64], spec: &ExposureSpec, max_iters: usize) -> Result<(Vec<u8>, Exposure, usize, bool)> {
    let n = net.num_nodes();
    let mut z: Vec<u8> = (0..n).map(|i| (u[i] < sigmoid(eta[i])) as u8).collect();
    let mut e = exposure(net, &z, spec)?;
    for it in 1..=max_iters {
        let next: Vec<u8> = (0..n).map(|i| (u[i] < sigmoid(eta[i] + 4.0 * e.values[i])) as u8).collect();
        if next == z {
            return Ok((z, e, it, true));
        }
        z = next;
        e = exposure(net, &z, spec)?;
    }
    Ok((z, e, max_iters, false))
}

impl Population {
    /// Computes the structural quantities of `scenario` on a fixed network.
    /// Scenario 4 has no closed-form propensity; its reference probability
    /// averages σ(η_i + 4 G_i) over 20 seeded assignments.
    pub fn new(net: Network, cov: CovariateFrame, scenario: u8, calibration_seed: u64) -> Result<Self> {
        let spec = if scenario == 3 { ExposureSpec::count_all() } else { ExposureSpec::top_k(5) };
        let eta = scenario_eta(scenario, &cov, &net)?;
        let n = net.num_nodes();
        let p_ref: Vec<f64> = if scenario == 4 {
            let draws = 20;
            let mut acc = vec![0.0; n];
            for d in 0..draws {
                let mut rng = ChaCha8Rng::seed_from_u64(calibration_seed);
                rng.set_stream(d as u64);
                let u: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                let (_, e, _, _) = peer_assignment(&net, &eta, &u, &spec, 50)?;
                for i in 0..n {
                    acc[i] += sigmoid(eta[i] + 4.0 * e.values[i]) / draws as f64;
                }
            }
            acc
        } else {
            eta.iter().map(|&e| sigmoid(e)).collect()
        };
        let race = cov.values("race")?;
        let grade = cov.values("grade")?;
        let cell = |i: usize| (grade[i] as i64) * 2 + race[i] as i64;
        let mut sums: std::collections::BTreeMap<i64, (f64, usize)> = Default::default();
        for i in 0..n {
            let s = sums.entry(cell(i)).or_default();
            s.0 += p_ref[i];
            s.1 += 1;
        }
        let phi_ind: Vec<f64> = (0..n).map(|i| {
            let (s, c) = sums[&cell(i)];
            s / c as f64
        }).collect();
        let indicator = phi_ind.iter().map(|&p| p >= 0.7).collect();
        // The neighborhood law is a binomial logit on (1, z, X^g), fitted once
        // to pooled seeded assignments, so it is a fixed function of z and X^g.
        let mut rows_z = Vec::new();
        let mut rows_node = Vec::new();
        let mut succ = Vec::new();
        let mut trials = Vec::new();
        for d in 0..LAW_DRAWS {
            let mut rng = ChaCha8Rng::seed_from_u64(calibration_seed ^ 0x5eed_1a3b);
            rng.set_stream(d);
            let u: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let (z, e) = if scenario == 4 {
                let (z, e, _, _) = peer_assignment(&net, &eta, &u, &spec, 50)?;
                (z, e)
            } else {
                let z: Vec<u8> = (0..n).map(|i| (u[i] < p_ref[i]) as u8).collect();
                let e = exposure(&net, &z, &spec)?;
                (z, e)
            };
            for i in (0..n).filter(|&i| e.defined[i]) {
                rows_z.push(z[i] as f64);
                rows_node.push(i);
                succ.push(spec.kind.successes(e.values[i], e.trials[i]).expect("exposure levels are admissible"));
                trials.push(e.trials[i]);
            }
        }
        let mut cols = vec![("z".to_string(), rows_z)];
        for name in X_Z {
            let v = cov.values(name)?;
            cols.push((name.to_string(), rows_node.iter().map(|&i| v[i]).collect()));
        }
        let design = DesignMatrix::with_intercept(rows_node.len(), cols)?;
        let lambda_law = fit_dropping_dependent(&design, |d| fit_binomial_logit(d, &succ, &trials))?;
        let mut pi_true = [vec![0.0; n], vec![0.0; n]];
        let xg: Vec<&[f64]> = X_Z.iter().map(|c| cov.values(c)).collect::<Result<_>>()?;
        for i in 0..n {
            for z in 0..2 {
                let mut row: Vec<(&str, f64)> = vec![("z", z as f64)];
                row.extend(X_Z.iter().zip(&xg).map(|(c, v)| (*c, v[i])));
                pi_true[z][i] = sigmoid(lambda_law.eta_row(&row)?);
            }
        }
        Ok(Population { net, cov, scenario, eta, p_ref, phi_ind, indicator, pi_true, lambda_law, exposure: spec })
    }

    pub fn exposure_spec(&self) -> ExposureSpec {
        self.exposure
    }

    pub fn treated_share_reference(&self) -> f64 {
        self.p_ref.iter().sum::<f64>() / self.p_ref.len() as f64
    }

    /// True neighborhood score λ(g; z; x_i).
    pub fn true_lambda(&self, i: usize, g: f64, z: u8, trials: u32) -> f64 {
        match self.exposure.kind.successes(g, trials) {
            Some(k) => binomial_pmf(k, trials, self.pi_true[z as usize][i]),
            None => 0.0,
        }
    }

    /// Noise-free outcome μ_i(z, g).
    pub fn expected_outcome(&self, spec: &ScenarioSpec, i: usize, z: u8, g: f64, trials: u32) -> Result<f64> {
        let ind = if self.indicator[i] { 1.0 } else { 0.0 };
        let zf = z as f64;
        let delta = spec.delta();
        Ok(match spec.outcome {
            OutcomeKind::Model1 => 15.0 - 7.0 * ind + (-15.0 + 3.0 * ind) * zf + delta * g,
            OutcomeKind::Model2 => {
                let fg = self.cov.values("friends.grade")?[i];
                let fr = self.cov.values("friends.race")?[i];
                let (c_gi, c_zg) = spec.interaction_coefs();
                15.0 + fg + 7.0 * fr - 10.0 * ind - 10.0 * zf + delta * g - 10.0 * self.true_lambda(i, g, z, trials)
                    + c_gi * g * ind
                    + c_zg * zf * g
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub z: Vec<u8>,
    pub exposure_values: Vec<f64>,
    pub defined: Vec<bool>,
    pub trials: Vec<u32>,
    pub iterations: usize,
    pub converged: bool,
}

/// Draws individual treatments under the scenario and the implied exposure.
pub fn assign_treatments<R: Rng + ?Sized>(pop: &Population, spec: &ScenarioSpec, rng: &mut R) -> Result<Assignment> {
    spec.validate()?;
    if spec.scenario != pop.scenario {
        return input(format!("population prepared for scenario {}, spec asks for {}", pop.scenario, spec.scenario));
    }
    let n = pop.net.num_nodes();
    let u: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let (z, e, iterations, converged) = if spec.scenario == 4 {
        peer_assignment(&pop.net, &pop.eta, &u, &spec.exposure, spec.max_iters)?
    } else {
        let z: Vec<u8> = (0..n).map(|i| (u[i] < sigmoid(pop.eta[i])) as u8).collect();
        let e = exposure(&pop.net, &z, &spec.exposure)?;
        (z, e, 1, true)
    };
    if !converged {
        log::warn!("scenario 4 assignment did not converge in {} iterations", spec.max_iters);
    }
    Ok(Assignment { z, exposure_values: e.values, defined: e.defined, trials: e.trials, iterations, converged })
}

/// Outcomes `y = μ + N(0, 1)`; returns `(y, μ)` over all nodes.
pub fn gen_outcomes<R: Rng + ?Sized>(
    pop: &Population,
    spec: &ScenarioSpec,
    asg: &Assignment,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = pop.net.num_nodes();
    let mut y = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for i in 0..n {
        let m = pop.expected_outcome(spec, i, asg.z[i], asg.exposure_values[i], asg.trials[i])?;
        let e: f64 = StandardNormal.sample(rng);
        mu.push(m);
        y.push(m + e);
    }
    Ok((y, mu))
}

/// Analysis table of one draw, carrying the noise-free outcome as `mu` and
/// the propensity indicator as `indicator`.
pub fn unit_data(pop: &Population, spec: &ScenarioSpec, asg: &Assignment, y: &[f64], mu: &[f64]) -> Result<UnitData> {
    let mut data = UnitData::from_network(&pop.net, &pop.cov, &asg.z, y, &spec.exposure)?;
    let pick = |v: &[f64]| data.node.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let ind: Vec<f64> = pop.indicator.iter().map(|&b| b as u8 as f64).collect();
    let (m, ind) = (pick(mu), pick(&ind));
    data.add_column("mu", m)?;
    data.add_column("indicator", ind)?;
    Ok(data)
}

/// True effects on the draw's analysis units: μ(z, g) averages μ_i(z, g)
/// over units for whom g is attainable, and effects aggregate with the
/// same grid and exposure mass as the estimators.
pub fn true_effects(pop: &Population, spec: &ScenarioSpec, data: &UnitData) -> Result<EffectReport> {
    let grid = default_g_grid(data)?;
    let mut mu = [vec![None; grid.len()], vec![None; grid.len()]];
    for (k, &g) in grid.iter().enumerate() {
        for z in 0..2u8 {
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for r in 0..data.len() {
                if data.admissible(r, g) {
                    acc += pop.expected_outcome(spec, data.node[r], z, g, data.trials[r])?;
                    cnt += 1;
                }
            }
            if cnt > 0 {
                mu[z as usize][k] = Some(acc / cnt as f64);
            }
        }
    }
    let mass: Vec<f64> = grid
        .iter()
        .map(|&g| data.g.iter().filter(|&&v| (v - g).abs() <= 1e-9).count() as f64 / data.len() as f64)
        .collect();
    EffectReport::from_surface("truth", &grid, &mu, &mass, data.len(), Vec::new())
}

/// One simulated dataset.
#[derive(Debug, Clone)]
pub struct Draw {
    pub data: UnitData,
    /// Outcome of every node, including those without a defined exposure.
    pub y: Vec<f64>,
    pub assignment: Assignment,
    pub truth: EffectReport,
}

/// Treatment, outcome and truth for replicate `replicate` of `seed`.
pub fn simulate(pop: &Population, spec: &ScenarioSpec, seed: u64, replicate: u64) -> Result<Draw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    let asg = assign_treatments(pop, spec, &mut rng)?;
    let (y, mu) = gen_outcomes(pop, spec, &asg, &mut rng)?;
    let data = unit_data(pop, spec, &asg, &y, &mu)?;
    let truth = true_effects(pop, spec, &data)?;
    Ok(Draw { data, y, assignment: asg, truth })
}

/// ρ_{ZG|X} = (R²_{G|Z,X} − R²_{G|X}) / (1 − R²_{G|X}); `None` when
/// R²_{G|X} = 1.
pub fn partial_correlation_zg(data: &UnitData, x: &[String]) -> Result<Option<f64>> {
    let r2 = |with_z: bool| -> Result<f64> {
        let mut cols = Vec::new();
        if with_z {
            cols.push(("z".to_string(), data.z_f64()));
        }
        cols.extend(data.covariates(x)?);
        let d = DesignMatrix::with_intercept(data.len(), cols)?;
        let fit = fit_wls(&d, &data.g)?;
        let mean = data.g.iter().sum::<f64>() / data.len() as f64;
        let tss: f64 = data.g.iter().map(|g| (g - mean).powi(2)).sum();
        Ok(if tss > 0.0 { 1.0 - fit.rss.unwrap() / tss } else { 1.0 })
    };
    let base = r2(false)?;
    if base >= 1.0 - 1e-12 {
        return Ok(None);
    }
    Ok(Some((r2(true)? - base) / (1.0 - base)))
}
