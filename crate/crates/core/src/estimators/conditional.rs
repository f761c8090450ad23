use serde::{Deserialize, Serialize};

use super::naive::subclass_difference;
use crate::data::UnitData;
use crate::error::{estimation, Error, Result};
use crate::propensity::{fit_binary_ps, subclassify, MIN_ARM_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEstimate {
    pub g: f64,
    pub estimate: f64,
    pub n: usize,
    pub subclasses: usize,
    pub warnings: Vec<String>,
}

fn stratified(data: &UnitData, rows: &[usize], treat: &[bool], x: &[String], j: usize, g: f64) -> Result<ConditionalEstimate> {
    let sub = data.select_rows(rows);
    let t: Vec<f64> = treat.iter().map(|&b| b as u8 as f64).collect();
    let tz: Vec<u8> = treat.iter().map(|&b| b as u8).collect();
    let mut warnings = Vec::new();
    let part = match fit_binary_ps(sub.covariates(x)?, &t)
        .and_then(|ps| subclassify(&ps.phi, &tz, j, MIN_ARM_COUNT))
    {
        Ok(p) if p.num_subclasses() >= 2 || j == 1 => p,
        Ok(_) | Err(Error::Estimation(_)) | Err(Error::RankDeficient { .. }) => {
            warnings.push(format!("subpopulation at g = {g} too small for {j} subclasses; using one"));
            log::warn!("{}", warnings[0]);
            subclassify(&vec![0.0; rows.len()], &tz, 1, 0)?
        }
        Err(e) => return Err(e),
    };
    let estimate = subclass_difference(&sub.y, treat, &part)?;
    Ok(ConditionalEstimate { g, estimate, n: rows.len(), subclasses: part.num_subclasses(), warnings })
}

/// τ̂_g(g): subclassification on the conditional individual score within
/// the units exposed at level `g`.
pub fn estimate_conditional_main(data: &UnitData, g: f64, x: &[String], j: usize) -> Result<ConditionalEstimate> {
    let rows: Vec<usize> = (0..data.len()).filter(|&i| (data.g[i] - g).abs() <= 1e-9).collect();
    let treat: Vec<bool> = rows.iter().map(|&i| data.z[i] == 1).collect();
    if !treat.iter().any(|&t| t) {
        return estimation(format!("no treated units with G = {g}"));
    }
    if treat.iter().all(|&t| t) {
        return estimation(format!("no control units with G = {g}"));
    }
    stratified(data, &rows, &treat, x, j, g)
}

/// δ̂_0(g; 0): among control units, exposure `g` against exposure 0, with
/// subclassification on the conditional neighborhood score.
pub fn estimate_conditional_spillover(data: &UnitData, g: f64, x: &[String], j: usize) -> Result<ConditionalEstimate> {
    if g.abs() <= 1e-9 {
        return estimation("spillover contrast needs g different from 0");
    }
    let rows: Vec<usize> = (0..data.len())
        .filter(|&i| data.z[i] == 0 && (data.g[i].abs() <= 1e-9 || (data.g[i] - g).abs() <= 1e-9))
        .collect();
    let treat: Vec<bool> = rows.iter().map(|&i| (data.g[i] - g).abs() <= 1e-9).collect();
    if !treat.iter().any(|&t| t) {
        return estimation(format!("no control units with G = {g}"));
    }
    if treat.iter().all(|&t| t) {
        return estimation("no control units with G = 0");
    }
    stratified(data, &rows, &treat, x, j, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ExposureKind;

    #[test]
    fn constant_outcome_is_zero() {
        let n = 60;
        let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let g: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { 0.0 } else { 0.5 }).collect();
        let x: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64).collect();
        let d = UnitData::new(vec![4.0; n], z, g, vec![2; n], ExposureKind::ProportionAll, vec![("x".into(), x)])
            .unwrap();
        let cols = vec!["x".to_string()];
        assert_eq!(estimate_conditional_main(&d, 0.5, &cols, 2).unwrap().estimate, 0.0);
        assert_eq!(estimate_conditional_spillover(&d, 0.5, &cols, 2).unwrap().estimate, 0.0);
        assert!(estimate_conditional_spillover(&d, 1.0, &cols, 2).is_err());
    }
}
