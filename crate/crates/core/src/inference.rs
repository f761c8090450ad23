//! Bootstrap standard errors and Monte Carlo bias summaries.
//!
//! Replicate `r` draws from a ChaCha stream keyed by `(seed, r)`, so results
//! do not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::UnitData;
use crate::error::{config, Error, Result};
use crate::estimators::EstimatorSpec;
use crate::simgen::{simulate, Population, ScenarioSpec};

pub const DEFAULT_REPLICATES: usize = 1000;
/// Largest tolerated share of failed replicates.
pub const MAX_FAILED_SHARE: f64 = 0.2;
const Z_975: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Units resampled with replacement, carrying their exposure and
    /// neighborhood covariates as attributes.
    #[default]
    Unit,
    /// Clusters resampled with replacement, each with all of its units.
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub names: Vec<String>,
    pub point: Vec<f64>,
    /// One row per successful replicate; `None` where that replicate did not
    /// produce the quantity.
    pub replicates: Vec<Vec<Option<f64>>>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub b: usize,
    pub failed: usize,
    pub scheme: Scheme,
    pub seed: u64,
}

impl BootstrapResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// `(point, se, ci)` for `name`.
    pub fn get(&self, name: &str) -> Option<(f64, f64, (f64, f64))> {
        self.index(name).map(|k| (self.point[k], self.se[k], self.ci[k]))
    }
}

fn resample_rows(data: &UnitData, scheme: Scheme, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = data.len();
    match scheme {
        Scheme::Unit => Ok((0..n).map(|_| rng.random_range(0..n)).collect()),
        Scheme::Cluster => {
            let Some(cl) = &data.cluster else {
                return config("cluster bootstrap needs cluster ids");
            };
            let mut ids: Vec<usize> = cl.clone();
            ids.sort_unstable();
            ids.dedup();
            let mut members: std::collections::HashMap<usize, Vec<usize>> = Default::default();
            for (i, &c) in cl.iter().enumerate() {
                members.entry(c).or_default().push(i);
            }
            let mut rows = Vec::with_capacity(n);
            for _ in 0..ids.len() {
                let c = ids[rng.random_range(0..ids.len())];
                rows.extend_from_slice(&members[&c]);
            }
            Ok(rows)
        }
    }
}

fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Bootstrap of an arbitrary estimator returning named estimates.
pub fn bootstrap<F>(data: &UnitData, estimator: F, b: usize, scheme: Scheme, seed: u64) -> Result<BootstrapResult>
where
    F: Fn(&UnitData) -> Result<Vec<(String, f64)>> + Sync,
{
    if b < 2 {
        return config("bootstrap needs at least 2 replicates");
    }
    if scheme == Scheme::Cluster && data.cluster.is_none() {
        return config("cluster bootstrap needs cluster ids");
    }
    let point = estimator(data)?;
    let names: Vec<String> = point.iter().map(|(n, _)| n.clone()).collect();
    let outcomes: Vec<Option<Vec<Option<f64>>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let rows = resample_rows(data, scheme, &mut rng).ok()?;
            match estimator(&data.select_rows(&rows)) {
                Ok(est) => Some(
                    names
                        .iter()
                        .map(|n| est.iter().find(|(m, _)| m == n).map(|&(_, v)| v).filter(|v| v.is_finite()))
                        .collect(),
                ),
                Err(e) => {
                    log::debug!("bootstrap replicate {r} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    if failed as f64 > MAX_FAILED_SHARE * b as f64 {
        return Err(Error::Inference(format!("{failed} of {b} bootstrap replicates failed")));
    }
    if failed > 0 {
        log::warn!("{failed} of {b} bootstrap replicates failed and were dropped");
    }
    let replicates: Vec<Vec<Option<f64>>> = outcomes.into_iter().flatten().collect();
    let se: Vec<f64> = (0..names.len())
        .map(|k| sd(&replicates.iter().filter_map(|r| r[k]).collect::<Vec<_>>()))
        .collect();
    let point: Vec<f64> = point.iter().map(|&(_, v)| v).collect();
    let ci = point.iter().zip(&se).map(|(&p, &s)| (p - Z_975 * s, p + Z_975 * s)).collect();
    Ok(BootstrapResult { names, point, replicates, se, ci, b, failed, scheme, seed })
}

/// Bootstrap of a configured estimator, with the exposure grid pinned to
/// the original sample.
pub fn bootstrap_estimator(data: &UnitData, spec: &EstimatorSpec, b: usize, scheme: Scheme, seed: u64) -> Result<BootstrapResult> {
    let pinned = spec.pinned(data)?;
    bootstrap(data, |d| pinned.run(d), b, scheme, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub name: String,
    pub mean_estimate: f64,
    pub mean_truth: f64,
    pub mean_bias: f64,
    pub rmse: f64,
    /// Standard deviation of the per-replicate errors.
    pub sd: f64,
    /// Monte Carlo standard error of `mean_bias`.
    pub mc_se: f64,
    pub r: usize,
    pub failed: usize,
}

/// Summarizes replicate-level `(name, estimate, truth)` triples produced by
/// `f(replicate)` for `r` replicates.
pub fn monte_carlo<F>(r: usize, f: F) -> Result<Vec<McSummary>>
where
    F: Fn(u64) -> Result<Vec<(String, f64, f64)>> + Sync,
{
    if r == 0 {
        return config("Monte Carlo needs at least 1 replication");
    }
    let runs: Vec<Option<Vec<(String, f64, f64)>>> = (0..r as u64)
        .into_par_iter()
        .map(|k| match f(k) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("replication {k} failed: {e}");
                None
            }
        })
        .collect();
    let failed = runs.iter().filter(|o| o.is_none()).count();
    let ok: Vec<&Vec<(String, f64, f64)>> = runs.iter().flatten().collect();
    let Some(first) = ok.first() else {
        return Err(Error::Inference("every Monte Carlo replication failed".into()));
    };
    let mut out = Vec::new();
    for (name, _, _) in first.iter() {
        let triples: Vec<(f64, f64)> = ok
            .iter()
            .filter_map(|run| run.iter().find(|(n, _, _)| n == name).map(|&(_, e, t)| (e, t)))
            .collect();
        let m = triples.len() as f64;
        let errors: Vec<f64> = triples.iter().map(|(e, t)| e - t).collect();
        let mean_bias = errors.iter().sum::<f64>() / m;
        let s = sd(&errors);
        out.push(McSummary {
            name: name.clone(),
            mean_estimate: triples.iter().map(|p| p.0).sum::<f64>() / m,
            mean_truth: triples.iter().map(|p| p.1).sum::<f64>() / m,
            mean_bias,
            rmse: (errors.iter().map(|e| e * e).sum::<f64>() / m).sqrt(),
            sd: s,
            mc_se: s / m.sqrt(),
            r,
            failed: failed + ok.len() - triples.len(),
        });
    }
    Ok(out)
}

/// Regenerates treatments and outcomes `r` times on the fixed population
/// and compares `estimator` with each replicate's true effects for `tau`,
/// `Delta0`, `Delta1` and `TE` (only `tau` for the naive estimators).
pub fn monte_carlo_bias(pop: &Population, spec: &ScenarioSpec, estimator: &EstimatorSpec, r: usize, seed: u64) -> Result<Vec<McSummary>> {
    const OVERALL: [&str; 4] = ["tau", "Delta0", "Delta1", "TE"];
    monte_carlo(r, |k| {
        let draw = simulate(pop, spec, seed, k)?;
        let est = estimator.run(&draw.data)?;
        let truth = draw.truth.named();
        Ok(OVERALL
            .iter()
            .filter_map(|name| {
                let e = est.iter().find(|(n, _)| n == name)?.1;
                let t = truth.iter().find(|(n, _)| n == name)?.1;
                Some((name.to_string(), e, t))
            })
            .collect())
    })
}
