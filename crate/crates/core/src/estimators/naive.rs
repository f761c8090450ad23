use serde::{Deserialize, Serialize};

use crate::data::UnitData;
use crate::error::{estimation, Result};
use crate::glm::{fit_wls, DesignMatrix};
use crate::propensity::{fit_individual_ps, subclassify, SubclassPartition, MIN_ARM_COUNT};

/// Estimators of the individual treatment effect that ignore interference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NaiveVariant {
    DiffMeans,
    Ols { columns: Vec<String> },
    SubclassPhi { columns: Vec<String>, subclasses: usize },
}

impl NaiveVariant {
    pub fn name(&self) -> &'static str {
        match self {
            NaiveVariant::DiffMeans => "diff_means",
            NaiveVariant::Ols { .. } => "ols",
            NaiveVariant::SubclassPhi { .. } => "subclass_phi",
        }
    }
}

fn arm_means(y: &[f64], treat: &[bool]) -> Result<(f64, f64)> {
    let (mut st, mut nt, mut sc, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for (v, &t) in y.iter().zip(treat) {
        if t {
            st += v;
            nt += 1;
        } else {
            sc += v;
            nc += 1;
        }
    }
    if nt == 0 || nc == 0 {
        return estimation(if nt == 0 { "treated arm is empty" } else { "control arm is empty" });
    }
    Ok((st / nt as f64, sc / nc as f64))
}

/// Subclass-size weighted difference in arm means, Σ_j (Ȳ_T,j − Ȳ_C,j)|B_j|/N.
pub fn subclass_difference(y: &[f64], treat: &[bool], part: &SubclassPartition) -> Result<f64> {
    let n = y.len() as f64;
    let mut total = 0.0;
    for j in 0..part.num_subclasses() {
        let rows = part.members(j);
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let ts: Vec<bool> = rows.iter().map(|&i| treat[i]).collect();
        let (mt, mc) = arm_means(&ys, &ts)?;
        total += (mt - mc) * rows.len() as f64 / n;
    }
    Ok(total)
}

pub fn estimate_naive(data: &UnitData, variant: &NaiveVariant) -> Result<f64> {
    let treat: Vec<bool> = data.z.iter().map(|&z| z == 1).collect();
    match variant {
        NaiveVariant::DiffMeans => {
            let (mt, mc) = arm_means(&data.y, &treat)?;
            Ok(mt - mc)
        }
        NaiveVariant::Ols { columns } => {
            arm_means(&data.y, &treat)?;
            let mut cols = vec![("z".to_string(), data.z_f64())];
            cols.extend(data.covariates(columns)?);
            let x = DesignMatrix::with_intercept(data.len(), cols)?;
            let fit = fit_wls(&x, &data.y)?;
            Ok(fit.coef("z").expect("z column present"))
        }
        NaiveVariant::SubclassPhi { columns, subclasses } => {
            let ps = fit_individual_ps(data, columns)?;
            let part = subclassify(&ps.phi, &data.z, *subclasses, MIN_ARM_COUNT)?;
            subclass_difference(&data.y, &treat, &part)
        }
    }
}
