//! Nonparametric bias of interference-naive estimators, evaluated by exact
//! cell averaging on a fully observed population.
//!
//! Covariates with many distinct values are cut into equal-frequency bins.
//! Cells that cannot be evaluated are skipped and their covariate mass is
//! reported as uncovered instead of being imputed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::UnitData;
use crate::error::{input, Result};

/// Which individual-treatment arm supplies the outcome contrast in the
/// reduced (no interaction) bias formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    Treated,
    /// Average of the arms in which the contrast is observable.
    #[default]
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub x_star: Vec<String>,
    /// Unmeasured confounders, used only by the `unmeasured` formulas.
    pub u: Vec<String>,
    /// Outcome column; `"y"` for the observed outcome.
    pub outcome: String,
    /// Equal-frequency bins for columns with more than `max_levels` values.
    pub bins: usize,
    pub max_levels: usize,
    pub reference_g: f64,
    /// Reference level of `u`; the modal cell when `None`.
    pub reference_u: Option<Vec<f64>>,
    pub arm: Arm,
}

impl BiasSpec {
    pub fn new(x_star: &[&str]) -> Self {
        BiasSpec {
            x_star: x_star.iter().map(|s| s.to_string()).collect(),
            u: Vec::new(),
            outcome: "y".to_string(),
            bins: 10,
            max_levels: 20,
            reference_g: 0.0,
            reference_u: None,
            arm: Arm::Pooled,
        }
    }

    pub fn with_u(mut self, u: &[&str]) -> Self {
        self.u = u.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_outcome(mut self, col: &str) -> Self {
        self.outcome = col.to_string();
        self
    }

    pub fn with_bins(mut self, bins: usize) -> Self {
        self.bins = bins;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub value: f64,
    /// P(X* = x) mass of covariate cells skipped for lacking an arm.
    pub uncovered_mass: f64,
    /// Individual (x, g[, u]) terms skipped for an unobservable contrast.
    pub skipped_terms: usize,
    pub cells: usize,
}

/// Level codes of a column: distinct values as-is when there are at most
/// `max_levels` of them, equal-frequency bins otherwise. Ties never straddle
/// a bin boundary.
pub fn discretize(values: &[f64], bins: usize, max_levels: usize) -> Vec<i64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= max_levels.max(1) {
        return values.iter().map(|v| distinct.partition_point(|d| d < v) as i64).collect();
    }
    let n = values.len();
    let bins = bins.max(1);
    let mut cuts: Vec<f64> = (1..bins).map(|k| sorted[(k * n).div_ceil(bins) - 1]).collect();
    cuts.dedup();
    values.iter().map(|v| cuts.partition_point(|c| c < v) as i64).collect()
}

fn keys(data: &UnitData, cols: &[String], spec: &BiasSpec) -> Result<Vec<Vec<i64>>> {
    let coded: Vec<Vec<i64>> =
        cols.iter().map(|c| Ok(discretize(data.column(c)?, spec.bins, spec.max_levels))).collect::<Result<_>>()?;
    Ok((0..data.len()).map(|i| coded.iter().map(|c| c[i]).collect()).collect())
}

fn g_codes(g: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut levels = g.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    let codes = g.iter().map(|v| levels.iter().position(|l| (l - v).abs() <= 1e-9).unwrap()).collect();
    (levels, codes)
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: usize,
    sum: f64,
}

impl Acc {
    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Counts and outcome sums by (x, z, g, u).
struct Cells {
    n: usize,
    /// (x, z, g, u) -> acc
    full: BTreeMap<(Vec<i64>, u8, usize, Vec<i64>), Acc>,
    x: BTreeMap<Vec<i64>, [usize; 2]>,
    g_levels: Vec<f64>,
}

impl Cells {
    fn build(data: &UnitData, spec: &BiasSpec, with_u: bool) -> Result<Self> {
        if data.is_empty() {
            return input("empty population");
        }
        let y = data.column(&spec.outcome)?;
        let xk = keys(data, &spec.x_star, spec)?;
        let uk = if with_u { keys(data, &spec.u, spec)? } else { vec![Vec::new(); data.len()] };
        let (g_levels, gc) = g_codes(&data.g);
        let mut full: BTreeMap<_, Acc> = BTreeMap::new();
        let mut x: BTreeMap<Vec<i64>, [usize; 2]> = BTreeMap::new();
        for i in 0..data.len() {
            let a = full.entry((xk[i].clone(), data.z[i], gc[i], uk[i].clone())).or_default();
            a.n += 1;
            a.sum += y[i];
            x.entry(xk[i].clone()).or_default()[data.z[i] as usize] += 1;
        }
        Ok(Cells { n: data.len(), full, x, g_levels })
    }

    fn p_x(&self, x: &[i64]) -> f64 {
        let c = self.x[x];
        (c[0] + c[1]) as f64 / self.n as f64
    }

    /// Aggregate of (x, z, g, u) cells matching the given parts.
    fn acc(&self, x: &[i64], z: Option<u8>, g: Option<usize>, u: Option<&[i64]>) -> Acc {
        let mut out = Acc::default();
        for ((kx, kz, kg, ku), a) in self.full.range((x.to_vec(), 0, 0, Vec::new())..) {
            if kx.as_slice() != x {
                break;
            }
            if z.is_some_and(|z| z != *kz) || g.is_some_and(|g| g != *kg) || u.is_some_and(|u| u != ku.as_slice()) {
                continue;
            }
            out.n += a.n;
            out.sum += a.sum;
        }
        out
    }

    fn g_ref(&self, g: f64) -> Option<usize> {
        self.g_levels.iter().position(|l| (l - g).abs() <= 1e-9)
    }

    fn u_levels(&self, x: &[i64]) -> Vec<Vec<i64>> {
        let mut out: Vec<Vec<i64>> = self
            .full
            .range((x.to_vec(), 0, 0, Vec::new())..)
            .take_while(|((kx, ..), _)| kx.as_slice() == x)
            .map(|((.., ku), _)| ku.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Modal u across the population.
    fn modal_u(&self) -> Vec<i64> {
        let mut counts: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        for ((.., ku), a) in &self.full {
            *counts.entry(ku.clone()).or_default() += a.n;
        }
        counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(k, _)| k).unwrap_or_default()
    }
}

/// τ^obs: covariate-adjusted difference in arm means,
/// Σ_x (E[Y | Z=1, x] − E[Y | Z=0, x]) P(x).
pub fn tau_obs(data: &UnitData, spec: &BiasSpec) -> Result<BiasReport> {
    let cells = Cells::build(data, spec, false)?;
    let mut value = 0.0;
    let mut uncovered = 0.0;
    for x in cells.x.keys() {
        let (Some(m1), Some(m0)) = (cells.acc(x, Some(1), None, None).mean(), cells.acc(x, Some(0), None, None).mean())
        else {
            uncovered += cells.p_x(x);
            continue;
        };
        value += (m1 - m0) * cells.p_x(x);
    }
    Ok(BiasReport { value, uncovered_mass: uncovered, skipped_terms: 0, cells: cells.x.len() })
}

fn arms(arm: Arm) -> &'static [u8] {
    match arm {
        Arm::Control => &[0],
        Arm::Treated => &[1],
        Arm::Pooled => &[0, 1],
    }
}

/// Interference bias without a Z-by-G interaction:
/// Σ_x Σ_g (E[Y|z,g,x] − E[Y|z,g′,x]) (P(g|Z=1,x) − P(g|Z=0,x)) P(x).
pub fn bias_interference(data: &UnitData, spec: &BiasSpec) -> Result<BiasReport> {
    let cells = Cells::build(data, spec, false)?;
    let g_ref = cells.g_ref(spec.reference_g);
    let mut value = 0.0;
    let mut uncovered = 0.0;
    let mut skipped = 0;
    for x in cells.x.keys() {
        let nx = cells.x[x];
        if nx[0] == 0 || nx[1] == 0 {
            uncovered += cells.p_x(x);
            continue;
        }
        let px = cells.p_x(x);
        // reference per arm: g′ when observed, else the lowest observed level
        let refs: Vec<(u8, f64)> = arms(spec.arm)
            .iter()
            .filter_map(|&z| {
                let at = |g| cells.acc(x, Some(z), Some(g), None).mean();
                g_ref.and_then(at).or_else(|| (0..cells.g_levels.len()).find_map(at)).map(|m| (z, m))
            })
            .collect();
        for g in 0..cells.g_levels.len() {
            let d = cells.acc(x, Some(1), Some(g), None).n as f64 / nx[1] as f64
                - cells.acc(x, Some(0), Some(g), None).n as f64 / nx[0] as f64;
            if d == 0.0 {
                continue;
            }
            let contrasts: Vec<f64> = refs
                .iter()
                .filter_map(|&(z, r)| cells.acc(x, Some(z), Some(g), None).mean().map(|m| m - r))
                .collect();
            if contrasts.is_empty() {
                skipped += 1;
                continue;
            }
            value += contrasts.iter().sum::<f64>() / contrasts.len() as f64 * d * px;
        }
    }
    Ok(BiasReport { value, uncovered_mass: uncovered, skipped_terms: skipped, cells: cells.x.len() })
}

/// General two-arm interference bias (allows a Z-by-G interaction):
/// Σ_x Σ_g Σ_z ± (E[Y|z,g,x] − E[Y|z,g′,x]) (P(g|z,x) − P(g|x)) P(x).
pub fn bias_interference_general(data: &UnitData, spec: &BiasSpec) -> Result<BiasReport> {
    let cells = Cells::build(data, spec, false)?;
    let g_ref = cells.g_ref(spec.reference_g);
    let mut value = 0.0;
    let mut uncovered = 0.0;
    let mut skipped = 0;
    for x in cells.x.keys() {
        let nx = cells.x[x];
        if nx[0] == 0 || nx[1] == 0 {
            uncovered += cells.p_x(x);
            continue;
        }
        let px = cells.p_x(x);
        let ntot = (nx[0] + nx[1]) as f64;
        for z in 0..2u8 {
            let sign = if z == 1 { 1.0 } else { -1.0 };
            let at = |g| cells.acc(x, Some(z), Some(g), None).mean();
            let Some(r) = g_ref.and_then(at).or_else(|| (0..cells.g_levels.len()).find_map(at)) else {
                continue;
            };
            for g in 0..cells.g_levels.len() {
                let d = cells.acc(x, Some(z), Some(g), None).n as f64 / nx[z as usize] as f64
                    - cells.acc(x, None, Some(g), None).n as f64 / ntot;
                if d == 0.0 {
                    continue;
                }
                match at(g) {
                    Some(m) => value += sign * (m - r) * d * px,
                    None => skipped += 1,
                }
            }
        }
    }
    Ok(BiasReport { value, uncovered_mass: uncovered, skipped_terms: skipped, cells: cells.x.len() })
}

fn reference_u(cells: &Cells, data: &UnitData, spec: &BiasSpec) -> Result<Vec<i64>> {
    match &spec.reference_u {
        None => Ok(cells.modal_u()),
        Some(vals) => {
            if vals.len() != spec.u.len() {
                return input("reference_u length differs from u columns");
            }
            let mut out = Vec::new();
            for (c, v) in spec.u.iter().zip(vals) {
                let col = data.column(c)?;
                let codes = discretize(col, spec.bins, spec.max_levels);
                let Some(i) = col.iter().position(|x| x == v) else {
                    return input(format!("reference level {v} not observed in '{c}'"));
                };
                out.push(codes[i]);
            }
            Ok(out)
        }
    }
}

/// Combined interference and unmeasured-confounding bias:
/// Σ_x Σ_g Σ_u Σ_z ± (E[Y|z,g,u,x] − E[Y|z,g′,u′,x]) (P(u,g|z,x) − P(u,g|x)) P(x).
pub fn bias_unmeasured(data: &UnitData, spec: &BiasSpec) -> Result<BiasReport> {
    let cells = Cells::build(data, spec, true)?;
    let g_ref = cells.g_ref(spec.reference_g);
    let u_ref = reference_u(&cells, data, spec)?;
    let mut value = 0.0;
    let mut uncovered = 0.0;
    let mut skipped = 0;
    for x in cells.x.keys() {
        let nx = cells.x[x];
        if nx[0] == 0 || nx[1] == 0 {
            uncovered += cells.p_x(x);
            continue;
        }
        let px = cells.p_x(x);
        let ntot = (nx[0] + nx[1]) as f64;
        let us = cells.u_levels(x);
        for z in 0..2u8 {
            let sign = if z == 1 { 1.0 } else { -1.0 };
            let at = |g, u: &[i64]| cells.acc(x, Some(z), Some(g), Some(u)).mean();
            let r = g_ref.and_then(|g| at(g, &u_ref)).or_else(|| {
                us.iter().find_map(|u| (0..cells.g_levels.len()).find_map(|g| at(g, u)))
            });
            let Some(r) = r else { continue };
            for g in 0..cells.g_levels.len() {
                for u in &us {
                    let d = cells.acc(x, Some(z), Some(g), Some(u)).n as f64 / nx[z as usize] as f64
                        - cells.acc(x, None, Some(g), Some(u)).n as f64 / ntot;
                    if d == 0.0 {
                        continue;
                    }
                    match at(g, u) {
                        Some(m) => value += sign * (m - r) * d * px,
                        None => skipped += 1,
                    }
                }
            }
        }
    }
    Ok(BiasReport { value, uncovered_mass: uncovered, skipped_terms: skipped, cells: cells.x.len() })
}

/// Bias from unmeasured confounding alone:
/// Σ_x Σ_u (E[Y|z,u,x] − E[Y|z,u′,x]) (P(u|Z=1,x) − P(u|Z=0,x)) P(x).
pub fn bias_confounding(data: &UnitData, spec: &BiasSpec) -> Result<BiasReport> {
    let cells = Cells::build(data, spec, true)?;
    let u_ref = reference_u(&cells, data, spec)?;
    let mut value = 0.0;
    let mut uncovered = 0.0;
    let mut skipped = 0;
    for x in cells.x.keys() {
        let nx = cells.x[x];
        if nx[0] == 0 || nx[1] == 0 {
            uncovered += cells.p_x(x);
            continue;
        }
        let px = cells.p_x(x);
        let us = cells.u_levels(x);
        let refs: Vec<(u8, f64)> = arms(spec.arm)
            .iter()
            .filter_map(|&z| {
                let at = |u: &[i64]| cells.acc(x, Some(z), None, Some(u)).mean();
                at(&u_ref).or_else(|| us.iter().find_map(|u| at(u))).map(|m| (z, m))
            })
            .collect();
        for u in &us {
            let d = cells.acc(x, Some(1), None, Some(u)).n as f64 / nx[1] as f64
                - cells.acc(x, Some(0), None, Some(u)).n as f64 / nx[0] as f64;
            if d == 0.0 {
                continue;
            }
            let contrasts: Vec<f64> = refs
                .iter()
                .filter_map(|&(z, r)| cells.acc(x, Some(z), None, Some(u)).mean().map(|m| m - r))
                .collect();
            if contrasts.is_empty() {
                skipped += 1;
                continue;
            }
            value += contrasts.iter().sum::<f64>() / contrasts.len() as f64 * d * px;
        }
    }
    Ok(BiasReport { value, uncovered_mass: uncovered, skipped_terms: skipped, cells: cells.x.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ExposureKind;

    fn pop(y: Vec<f64>, z: Vec<u8>, g: Vec<f64>, x: Vec<f64>) -> UnitData {
        let n = y.len();
        UnitData::new(y, z, g, vec![2; n], ExposureKind::ProportionAll, vec![("x".into(), x)]).unwrap()
    }

    #[test]
    fn single_cell_difference() {
        let d = pop(vec![3.0, 3.0, 1.0, 1.0], vec![1, 1, 0, 0], vec![0.0; 4], vec![0.0; 4]);
        let r = tau_obs(&d, &BiasSpec::new(&["x"])).unwrap();
        assert_eq!(r.value, 2.0);
        assert_eq!(r.uncovered_mass, 0.0);
    }

    #[test]
    fn missing_arm_is_uncovered() {
        let d = pop(vec![3.0, 1.0, 5.0], vec![1, 0, 1], vec![0.0; 3], vec![0.0, 0.0, 1.0]);
        let r = tau_obs(&d, &BiasSpec::new(&["x"])).unwrap();
        assert!((r.uncovered_mass - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.value - 2.0 * 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn independent_g_gives_zero() {
        // same G distribution in both arms
        let g = vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0];
        let z = vec![1, 1, 1, 0, 0, 0];
        let y: Vec<f64> = g.iter().zip(&z).map(|(g, &z)| 2.0 * z as f64 - 3.0 * g).collect();
        let d = pop(y, z, g, vec![0.0; 6]);
        let r = bias_interference(&d, &BiasSpec::new(&["x"])).unwrap();
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn linear_spillover_bias() {
        // treated see G = 1, controls G = 0; the bias is δ (E[G|1] - E[G|0])
        let z = vec![1, 1, 0, 0, 1, 0];
        let g = vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let y: Vec<f64> = g.iter().zip(&z).map(|(g, &z)| 4.0 * z as f64 - 5.0 * g).collect();
        let d = pop(y, z, g, vec![0.0; 6]);
        let r = bias_interference(&d, &BiasSpec::new(&["x"])).unwrap();
        assert!((r.value - (-5.0) * (2.0 / 3.0 - 1.0 / 3.0)).abs() < 1e-12);
        let general = bias_interference_general(&d, &BiasSpec::new(&["x"])).unwrap();
        assert!((general.value - r.value).abs() < 1e-12);
        let obs = tau_obs(&d, &BiasSpec::new(&["x"])).unwrap();
        assert!((obs.value - 4.0 - r.value).abs() < 1e-12);
    }

    #[test]
    fn discretize_keeps_ties() {
        let v = vec![1.0, 1.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(discretize(&v, 3, 20), vec![0, 0, 0, 1, 2, 3]);
        assert_eq!(discretize(&v, 2, 2), vec![0, 0, 0, 1, 1, 1]);
    }
}
