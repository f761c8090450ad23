use serde::{Deserialize, Serialize};

use super::EffectReport;
use crate::data::UnitData;
use crate::error::{config, Result};
use crate::glm::{fit_dropping_dependent, fit_wls, DesignMatrix, GlmFit};
use crate::graph::ExposureKind;
use crate::propensity::{fit_individual_ps, fit_neighborhood_ps, subclassify, NeighborhoodPS, LAMBDA_FLOOR, MIN_ARM_COUNT};

/// Outcome regression fitted within each subclass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeModel {
    /// `1, z, g, zg, λ̂, gλ̂`.
    #[default]
    Linear,
    /// Cubic polynomial in `g` and `λ̂` with their product and `z` terms.
    Cubic,
    /// `1, z, g, zg`: no score adjustment.
    NoGps,
    /// One mean per observed `(z, g)` cell.
    Saturated,
}

/// How P̂(G = g) is computed for aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GMass {
    /// Share of all units with G = g, renormalized over the grid.
    #[default]
    Population,
    /// Share of units with G = g among those for whom g is attainable.
    WithinAdmissible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsConfig {
    pub x_z: Vec<String>,
    pub x_g: Vec<String>,
    pub subclasses: usize,
    pub min_arm_count: usize,
    pub g_grid: Option<Vec<f64>>,
    pub outcome_model: OutcomeModel,
    pub g_mass: GMass,
}

impl GpsConfig {
    pub fn new(x_z: &[&str], x_g: &[&str]) -> Self {
        GpsConfig {
            x_z: x_z.iter().map(|s| s.to_string()).collect(),
            x_g: x_g.iter().map(|s| s.to_string()).collect(),
            subclasses: 5,
            min_arm_count: MIN_ARM_COUNT,
            g_grid: None,
            outcome_model: OutcomeModel::Linear,
            g_mass: GMass::Population,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassCurve {
    /// μ̂_j(0, g) and μ̂_j(1, g).
    pub mu: [Vec<Option<f64>>; 2],
    /// |B_j^g|.
    pub size: Vec<usize>,
    /// π_j^g; zero for omitted cells.
    pub weight: Vec<f64>,
    pub upper_boundary: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseSurface {
    pub g_grid: Vec<f64>,
    pub mu: [Vec<Option<f64>>; 2],
    pub subclasses: Vec<SubclassCurve>,
    /// Raw P̂(G = g) before renormalization over estimable levels.
    pub g_marginal: Vec<f64>,
    /// v_g: number of units for whom g is attainable.
    pub v_g: Vec<usize>,
}

/// Default exposure grid: every level for top-k proportions, 0 up to the
/// 95th percentile of observed G for counts, observed levels otherwise.
pub fn default_g_grid(data: &UnitData) -> Result<Vec<f64>> {
    match data.exposure {
        ExposureKind::ProportionTopK { k } => Ok((0..=k).map(|s| s as f64 / k as f64).collect()),
        ExposureKind::CountAll => {
            let mut g = data.g.clone();
            g.sort_by(f64::total_cmp);
            let idx = ((0.95 * g.len() as f64).ceil() as usize).clamp(1, g.len()) - 1;
            let top = g[idx].round() as usize;
            Ok((0..=top).map(|v| v as f64).collect())
        }
        ExposureKind::ProportionAll => {
            let mut g = data.g.clone();
            g.sort_by(f64::total_cmp);
            g.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            if g[0] != 0.0 {
                g.insert(0, 0.0);
            }
            Ok(g)
        }
        ExposureKind::WeightedSum => config("the binomial neighborhood score needs an integer-valued exposure"),
    }
}

fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

struct OutcomeFit {
    fit: GlmFit,
    model: OutcomeModel,
    cells: Vec<(u8, f64)>,
}

fn lam_floor(v: f64) -> f64 {
    v.max(LAMBDA_FLOOR)
}

fn regressors(model: OutcomeModel, z: f64, g: f64, lam: f64) -> Vec<(&'static str, f64)> {
    match model {
        OutcomeModel::Linear => vec![("z", z), ("g", g), ("zg", z * g), ("lambda", lam), ("g_lambda", g * lam)],
        OutcomeModel::Cubic => vec![
            ("z", z),
            ("g", g),
            ("g2", g * g),
            ("g3", g * g * g),
            ("lambda", lam),
            ("lambda2", lam * lam),
            ("lambda3", lam * lam * lam),
            ("g_lambda", g * lam),
            ("zg", z * g),
            ("z_lambda", z * lam),
        ],
        OutcomeModel::NoGps => vec![("z", z), ("g", g), ("zg", z * g)],
        OutcomeModel::Saturated => unreachable!("saturated model has no continuous regressors"),
    }
}

fn fit_outcome(sub: &UnitData, lam: &[f64], model: OutcomeModel) -> Result<OutcomeFit> {
    let n = sub.len();
    if model == OutcomeModel::Saturated {
        let mut cells: Vec<(u8, f64)> = sub.z.iter().zip(&sub.g).map(|(&z, &g)| (z, g)).collect();
        cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        cells.dedup_by(|a, b| a.0 == b.0 && same_level(a.1, b.1));
        let cols: Vec<(String, Vec<f64>)> = cells
            .iter()
            .skip(1)
            .map(|&(cz, cg)| {
                let v = (0..n).map(|i| (sub.z[i] == cz && same_level(sub.g[i], cg)) as u8 as f64).collect();
                (format!("cell_{cz}_{cg}"), v)
            })
            .collect();
        let x = DesignMatrix::with_intercept(n, cols)?;
        return Ok(OutcomeFit { fit: fit_wls(&x, &sub.y)?, model, cells });
    }
    let rows: Vec<Vec<(&str, f64)>> =
        (0..n).map(|i| regressors(model, sub.z[i] as f64, sub.g[i], lam[i])).collect();
    let cols: Vec<(String, Vec<f64>)> = rows[0]
        .iter()
        .enumerate()
        .map(|(k, (name, _))| (name.to_string(), rows.iter().map(|r| r[k].1).collect()))
        .collect();
    let x = DesignMatrix::with_intercept(n, cols)?;
    let fit = fit_dropping_dependent(&x, |d| fit_wls(d, &sub.y))?;
    Ok(OutcomeFit { fit, model, cells: Vec::new() })
}

impl OutcomeFit {
    fn predict(&self, z: u8, g: f64, lam: f64) -> Result<Option<f64>> {
        if self.model == OutcomeModel::Saturated {
            let Some(pos) = self.cells.iter().position(|&(cz, cg)| cz == z && same_level(cg, g)) else {
                return Ok(None);
            };
            let mut v = self.fit.coefficients[0];
            if pos > 0 {
                let (cz, cg) = self.cells[pos];
                v += self.fit.coef(&format!("cell_{cz}_{cg}")).unwrap_or(0.0);
            }
            return Ok(Some(v));
        }
        // dropped regressors are absent from the fit and contribute nothing
        Ok(Some(self.fit.eta_row(&regressors(self.model, z as f64, g, lam))?))
    }
}

/// The proposed estimator: subclassification on the individual score and,
/// within each subclass, outcome regression on the neighborhood score.
pub fn estimate_subclass_gps(data: &UnitData, cfg: &GpsConfig) -> Result<(DoseResponseSurface, EffectReport)> {
    let grid = match &cfg.g_grid {
        Some(g) => g.clone(),
        None => default_g_grid(data)?,
    };
    if grid.first() != Some(&0.0) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return config("g_grid must be increasing and start at 0");
    }
    data.successes()?;
    let mut warnings = Vec::new();
    let (assignment, boundaries) = if cfg.subclasses <= 1 {
        (vec![0; data.len()], vec![f64::INFINITY])
    } else {
        let ips = fit_individual_ps(data, &cfg.x_z)?;
        if ips.fit.separation {
            warnings.push("individual propensity model separated".to_string());
        }
        let part = subclassify(&ips.phi, &data.z, cfg.subclasses, cfg.min_arm_count)?;
        (part.assignment, part.boundaries)
    };
    let n_sub = assignment.iter().max().map_or(1, |m| m + 1);

    let admissible: Vec<Vec<bool>> =
        grid.iter().map(|&g| (0..data.len()).map(|i| data.admissible(i, g)).collect()).collect();
    let v_g: Vec<usize> = admissible.iter().map(|a| a.iter().filter(|&&b| b).count()).collect();

    let mut curves = Vec::with_capacity(n_sub);
    for j in 0..n_sub {
        let rows: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == j).collect();
        let sub = data.select_rows(&rows);
        let nps = if cfg.outcome_model == OutcomeModel::NoGps || cfg.outcome_model == OutcomeModel::Saturated {
            None
        } else {
            let nps = fit_neighborhood_ps(&sub, &cfg.x_g)?;
            if nps.fit.separation {
                warnings.push(format!("neighborhood propensity model separated in subclass {j}"));
            }
            Some(nps)
        };
        let lam_at = |nps: &Option<NeighborhoodPS>, g: f64, z: u8, i: usize| -> f64 {
            nps.as_ref().map_or(0.0, |p| lam_floor(p.lambda(g, z, i, sub.trials[i])))
        };
        let lam_obs: Vec<f64> = (0..sub.len()).map(|i| lam_at(&nps, sub.g[i], sub.z[i], i)).collect();
        let ofit = fit_outcome(&sub, &lam_obs, cfg.outcome_model)?;
        if !ofit.fit.dropped.is_empty() {
            warnings.push(format!("subclass {j}: dropped outcome regressors {}", ofit.fit.dropped.join(", ")));
        }
        let mut mu = [vec![None; grid.len()], vec![None; grid.len()]];
        let mut size = vec![0; grid.len()];
        for (k, &g) in grid.iter().enumerate() {
            let members: Vec<usize> = (0..sub.len()).filter(|&i| admissible[k][rows[i]]).collect();
            size[k] = members.len();
            if members.len() < 2 {
                continue;
            }
            for z in 0..2u8 {
                let mut acc = 0.0;
                let mut ok = true;
                for &i in &members {
                    match ofit.predict(z, g, lam_at(&nps, g, z, i))? {
                        Some(v) => acc += v,
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    mu[z as usize][k] = Some(acc / members.len() as f64);
                }
            }
        }
        curves.push(SubclassCurve { mu, size, weight: vec![0.0; grid.len()], upper_boundary: boundaries[j] });
    }

    let mut mu = [vec![None; grid.len()], vec![None; grid.len()]];
    for k in 0..grid.len() {
        let defined = |j: usize| curves[j].mu[0][k].is_some() && curves[j].mu[1][k].is_some();
        let contributing: Vec<usize> = (0..n_sub).filter(|&j| defined(j)).collect();
        let omitted = (0..n_sub).filter(|&j| curves[j].size[k] > 0 && !defined(j)).count();
        if omitted > 0 {
            warnings.push(format!("g = {}: {omitted} subclass cell(s) omitted", grid[k]));
        }
        let total: usize = contributing.iter().map(|&j| curves[j].size[k]).sum();
        if total == 0 {
            continue;
        }
        for z in 0..2 {
            let mut acc = 0.0;
            for &j in &contributing {
                let w = curves[j].size[k] as f64 / total as f64;
                curves[j].weight[k] = w;
                acc += curves[j].mu[z][k].unwrap() * w;
            }
            mu[z][k] = Some(acc);
        }
    }

    let counts: Vec<f64> =
        grid.iter().map(|&g| data.g.iter().filter(|&&v| same_level(v, g)).count() as f64).collect();
    let raw_mass: Vec<f64> = match cfg.g_mass {
        GMass::Population => counts.iter().map(|c| c / data.len() as f64).collect(),
        GMass::WithinAdmissible => {
            counts.iter().zip(&v_g).map(|(c, &v)| if v > 0 { c / v as f64 } else { 0.0 }).collect()
        }
    };
    let name = match (cfg.subclasses <= 1, cfg.outcome_model) {
        (true, OutcomeModel::NoGps) => "regression_zg",
        (true, _) => "gps",
        _ => "subclass_gps",
    };
    let report = EffectReport::from_surface(name, &grid, &mu, &raw_mass, data.len(), warnings)?;
    let surface = DoseResponseSurface { g_grid: grid, mu, subclasses: curves, g_marginal: raw_mass, v_g };
    Ok((surface, report))
}

/// Neighborhood-score adjustment without subclassification (one global
/// subclass).
pub fn estimate_gps_only(data: &UnitData, cfg: &GpsConfig) -> Result<(DoseResponseSurface, EffectReport)> {
    let mut one = cfg.clone();
    one.subclasses = 1;
    estimate_subclass_gps(data, &one)
}
