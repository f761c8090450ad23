//! Estimators of the dose-response surface μ(z, g) and of main and
//! spillover effects.

mod conditional;
mod gps;
mod naive;

pub use conditional::{estimate_conditional_main, estimate_conditional_spillover, ConditionalEstimate};
pub use gps::{
    default_g_grid, estimate_gps_only, estimate_subclass_gps, DoseResponseSurface, GMass, GpsConfig, OutcomeModel,
    SubclassCurve,
};
pub use naive::{estimate_naive, subclass_difference, NaiveVariant};

use serde::{Deserialize, Serialize};

use crate::data::UnitData;
use crate::error::{estimation, Result};

/// Point estimates derived from a dose-response surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub estimator: String,
    pub g_grid: Vec<f64>,
    /// Normalized mass P̂(G = g) over the grid levels used for aggregation.
    pub g_mass: Vec<f64>,
    pub tau_g: Vec<Option<f64>>,
    pub tau: f64,
    /// δ̂(g; 0) and δ̂(g; 1).
    pub delta_g: [Vec<Option<f64>>; 2],
    /// Δ̂(0) and Δ̂(1).
    pub delta: [f64; 2],
    pub total: f64,
    pub n: usize,
    pub warnings: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl EffectReport {
    /// Derives all effects from μ̂(z, g) on `g_grid` (index 0 must be g = 0)
    /// and raw masses per grid level. Levels where either μ̂ is missing get
    /// no mass.
    pub fn from_surface(
        estimator: &str,
        g_grid: &[f64],
        mu: &[Vec<Option<f64>>; 2],
        raw_mass: &[f64],
        n: usize,
        warnings: Vec<String>,
    ) -> Result<Self> {
        if g_grid.first() != Some(&0.0) {
            return estimation("exposure grid must start at g = 0");
        }
        let (Some(m00), Some(m10)) = (mu[0][0], mu[1][0]) else {
            return estimation("μ(z, 0) is not estimable: no units at g = 0 in some arm");
        };
        let usable: Vec<bool> = (0..g_grid.len()).map(|k| mu[0][k].is_some() && mu[1][k].is_some()).collect();
        let total_mass: f64 = (0..g_grid.len()).filter(|&k| usable[k]).map(|k| raw_mass[k]).sum();
        if total_mass <= 0.0 {
            return estimation("no exposure mass on estimable grid levels");
        }
        let g_mass: Vec<f64> =
            (0..g_grid.len()).map(|k| if usable[k] { raw_mass[k] / total_mass } else { 0.0 }).collect();
        let tau_g: Vec<Option<f64>> = (0..g_grid.len()).map(|k| Some(mu[1][k]? - mu[0][k]?)).collect();
        let delta_g = [
            mu[0].iter().map(|m| m.map(|v| v - m00)).collect::<Vec<_>>(),
            mu[1].iter().map(|m| m.map(|v| v - m10)).collect::<Vec<_>>(),
        ];
        let weighted = |f: &dyn Fn(usize) -> f64| -> f64 {
            (0..g_grid.len()).filter(|&k| usable[k]).map(|k| f(k) * g_mass[k]).sum()
        };
        let tau = weighted(&|k| tau_g[k].unwrap());
        let delta = [weighted(&|k| delta_g[0][k].unwrap()), weighted(&|k| delta_g[1][k].unwrap())];
        let total = weighted(&|k| mu[1][k].unwrap() - m00);
        Ok(EffectReport {
            estimator: estimator.to_string(),
            g_grid: g_grid.to_vec(),
            g_mass,
            tau_g,
            tau,
            delta_g,
            delta,
            total,
            n,
            warnings,
            seed: None,
        })
    }

    /// Flat named view used by resampling and replication code.
    pub fn named(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("tau".to_string(), self.tau),
            ("Delta0".to_string(), self.delta[0]),
            ("Delta1".to_string(), self.delta[1]),
            ("TE".to_string(), self.total),
        ];
        for (k, g) in self.g_grid.iter().enumerate() {
            if let Some(t) = self.tau_g[k] {
                out.push((format!("tau_g[{g}]"), t));
            }
            for z in 0..2 {
                if let Some(d) = self.delta_g[z][k] {
                    out.push((format!("delta_g{z}[{g}]"), d));
                }
            }
        }
        out
    }
}

/// An estimator together with its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum EstimatorSpec {
    SubclassGps(GpsConfig),
    Gps(GpsConfig),
    Naive(NaiveVariant),
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::SubclassGps(_) => "subclass_gps",
            EstimatorSpec::Gps(_) => "gps",
            EstimatorSpec::Naive(v) => v.name(),
        }
    }

    /// Fixes the exposure grid at the one implied by `data`, so that
    /// resampled estimates report the same levels.
    pub fn pinned(&self, data: &UnitData) -> Result<Self> {
        Ok(match self {
            EstimatorSpec::SubclassGps(c) | EstimatorSpec::Gps(c) if c.g_grid.is_none() => {
                let mut c = c.clone();
                c.g_grid = Some(default_g_grid(data)?);
                match self {
                    EstimatorSpec::SubclassGps(_) => EstimatorSpec::SubclassGps(c),
                    _ => EstimatorSpec::Gps(c),
                }
            }
            other => other.clone(),
        })
    }

    /// Named estimates: `tau` for the naive estimators, the full
    /// [`EffectReport::named`] list otherwise.
    pub fn run(&self, data: &UnitData) -> Result<Vec<(String, f64)>> {
        Ok(match self {
            EstimatorSpec::SubclassGps(c) => estimate_subclass_gps(data, c)?.1.named(),
            EstimatorSpec::Gps(c) => estimate_gps_only(data, c)?.1.named(),
            EstimatorSpec::Naive(v) => vec![("tau".to_string(), estimate_naive(data, v)?)],
        })
    }
}
