//! Individual, neighborhood and joint propensity scores, subclassification
//! on the individual score and covariate balance diagnostics.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::data::UnitData;
use crate::error::{estimation, input, Result};
use crate::glm::{fit_bernoulli_logit, fit_binomial_logit, fit_dropping_dependent, DesignMatrix, GlmFit, INTERCEPT};
use crate::graph::ExposureKind;

pub const PHI_CLIP: f64 = 1e-6;
pub const LAMBDA_FLOOR: f64 = 1e-8;
pub const MIN_ARM_COUNT: usize = 5;

/// Binomial probability mass `C(m,k) p^k (1-p)^(m-k)`.
pub fn binomial_pmf(k: u32, m: u32, p: f64) -> f64 {
    if k > m {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == m { 1.0 } else { 0.0 };
    }
    let (k, m) = (k as u64, m as u64);
    (ln_binomial(m, k) + k as f64 * p.ln() + (m - k) as f64 * (-p).ln_1p()).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualPS {
    pub fit: GlmFit,
    pub columns: Vec<String>,
    /// Clipped φ(1; x) per row.
    pub phi: Vec<f64>,
}

impl IndividualPS {
    /// φ(z; x) for row `i`.
    pub fn phi_z(&self, z: u8, i: usize) -> f64 {
        if z == 1 {
            self.phi[i]
        } else {
            1.0 - self.phi[i]
        }
    }
}

/// Logit propensity of a binary `treat` on named covariates, clipped.
pub fn fit_binary_ps(columns: Vec<(String, Vec<f64>)>, treat: &[f64]) -> Result<IndividualPS> {
    let names: Vec<String> = columns.iter().map(|(n, _)| n.clone()).collect();
    let x = DesignMatrix::with_intercept(treat.len(), columns)?;
    let fit = fit_dropping_dependent(&x, |d| fit_bernoulli_logit(d, treat))?;
    if fit.separation {
        log::warn!("individual propensity model is separated; coefficients capped");
    }
    let phi = crate::glm::predict(&fit, &x)?
        .into_iter()
        .map(|p| p.clamp(PHI_CLIP, 1.0 - PHI_CLIP))
        .collect();
    Ok(IndividualPS { fit, columns: names, phi })
}

pub fn fit_individual_ps(data: &UnitData, x_z: &[String]) -> Result<IndividualPS> {
    fit_binary_ps(data.covariates(x_z)?, &data.z_f64())
}

/// Binomial model for the number of treated designated neighbors given the
/// own treatment and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodPS {
    pub fit: GlmFit,
    pub columns: Vec<String>,
    pub exposure: ExposureKind,
    /// Linear predictor per row with the `z` term removed.
    base_eta: Vec<f64>,
    gamma_z: f64,
}

impl NeighborhoodPS {
    /// Success probability π(z, x) for row `i`.
    pub fn pi(&self, z: u8, i: usize) -> f64 {
        crate::glm::sigmoid(self.base_eta[i] + self.gamma_z * z as f64)
    }

    pub fn gamma_z(&self) -> f64 {
        self.gamma_z
    }

    /// λ(g; z; x_i) with `trials` designated neighbors; 0 for unattainable g.
    pub fn lambda(&self, g: f64, z: u8, i: usize, trials: u32) -> f64 {
        match self.exposure.successes(g, trials) {
            Some(k) => binomial_pmf(k, trials, self.pi(z, i)),
            None => 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.base_eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_eta.is_empty()
    }
}

pub fn fit_neighborhood_ps(data: &UnitData, x_g: &[String]) -> Result<NeighborhoodPS> {
    let successes = data.successes()?;
    let mut cols = vec![("z".to_string(), data.z_f64())];
    cols.extend(data.covariates(x_g)?);
    let x = DesignMatrix::with_intercept(data.len(), cols)?;
    let fit = fit_dropping_dependent(&x, |d| fit_binomial_logit(d, &successes, &data.trials))?;
    if fit.separation {
        log::warn!("neighborhood propensity model is separated; coefficients capped");
    }
    let mut base_eta = vec![0.0; data.len()];
    let mut gamma_z = 0.0;
    for (name, &b) in fit.names.iter().zip(&fit.coefficients) {
        match name.as_str() {
            INTERCEPT => base_eta.iter_mut().for_each(|e| *e += b),
            "z" => gamma_z = b,
            col => {
                let v = data.column(col)?;
                base_eta.iter_mut().zip(v).for_each(|(e, x)| *e += b * x);
            }
        }
    }
    Ok(NeighborhoodPS { fit, columns: x_g.to_vec(), exposure: data.exposure, base_eta, gamma_z })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPS {
    pub individual: IndividualPS,
    pub neighborhood: NeighborhoodPS,
}

impl JointPS {
    /// ψ(z; g; x_i) = λ(g; z; x_i) φ(z; x_i).
    pub fn psi(&self, z: u8, g: f64, i: usize, trials: u32) -> f64 {
        self.neighborhood.lambda(g, z, i, trials) * self.individual.phi_z(z, i)
    }
}

pub fn joint_ps(data: &UnitData, x_z: &[String], x_g: &[String]) -> Result<JointPS> {
    Ok(JointPS { individual: fit_individual_ps(data, x_z)?, neighborhood: fit_neighborhood_ps(data, x_g)? })
}

/// All exposure values attainable with `trials` designated neighbors.
pub fn admissible_levels(kind: ExposureKind, trials: u32) -> Vec<f64> {
    (0..=trials).map(|k| kind.value(k, trials)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubclassMethod {
    #[default]
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassPartition {
    /// Upper score boundary of each subclass; the first subclass starts at
    /// the sample minimum.
    pub boundaries: Vec<f64>,
    /// Subclass index per row, 0-based.
    pub assignment: Vec<usize>,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

impl SubclassPartition {
    pub fn num_subclasses(&self) -> usize {
        self.boundaries.len()
    }

    pub fn members(&self, j: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == j).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.treated.iter().zip(&self.control).map(|(a, b)| a + b).collect()
    }
}

/// Quantile subclassification of `score`, merging adjacent subclasses until
/// every subclass has at least `min_arm_count` rows in each arm.
///
/// Units with tied scores always share a subclass. A single remaining
/// subclass is allowed; a sample missing one arm entirely is an error.
pub fn subclassify(score: &[f64], z: &[u8], j: usize, min_arm_count: usize) -> Result<SubclassPartition> {
    let n = score.len();
    if z.len() != n {
        return input("score and treatment lengths differ");
    }
    if j == 0 {
        return input("number of subclasses must be positive");
    }
    if n < 2 * j {
        return estimation(format!("{n} units are too few for {j} subclasses; use fewer subclasses"));
    }
    let n_treated = z.iter().filter(|&&v| v == 1).count();
    if n_treated == 0 || n_treated == n {
        return estimation("one treatment arm is empty; no subclass can contain both arms");
    }
    let mut sorted = score.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..j).map(|k| sorted[(k * n).div_ceil(j) - 1]).collect();
    cuts.push(sorted[n - 1]);
    cuts.dedup();

    let assign = |cuts: &[f64]| -> Vec<usize> {
        score.iter().map(|s| cuts.partition_point(|c| c < s).min(cuts.len() - 1)).collect()
    };
    let counts = |assignment: &[usize], k: usize| -> (Vec<usize>, Vec<usize>) {
        let mut t = vec![0; k];
        let mut c = vec![0; k];
        for (a, &zi) in assignment.iter().zip(z) {
            if zi == 1 {
                t[*a] += 1;
            } else {
                c[*a] += 1;
            }
        }
        (t, c)
    };
    // drop empty subclasses
    let a0 = assign(&cuts);
    let (t0, c0) = counts(&a0, cuts.len());
    cuts = cuts.iter().enumerate().filter(|&(k, _)| t0[k] + c0[k] > 0).map(|(_, &c)| c).collect();

    loop {
        let assignment = assign(&cuts);
        let (t, c) = counts(&assignment, cuts.len());
        let bad = (0..cuts.len()).find(|&k| t[k] < min_arm_count || c[k] < min_arm_count);
        match bad {
            Some(k) if cuts.len() > 1 => {
                let size = |k: usize| t[k] + c[k];
                let partner = if k == 0 {
                    1
                } else if k == cuts.len() - 1 || size(k - 1) <= size(k + 1) {
                    k - 1
                } else {
                    k + 1
                };
                // merging subclasses k and partner removes the lower one's cut
                cuts.remove(k.min(partner));
            }
            _ => {
                if bad.is_some() {
                    log::warn!("single subclass has fewer than {min_arm_count} units in one arm");
                }
                return Ok(SubclassPartition { boundaries: cuts, assignment, treated: t, control: c });
            }
        }
    }
}

/// Balance of one covariate between two groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub column: String,
    /// `None` for the pooled row.
    pub stratum: Option<usize>,
    pub n_treated: usize,
    pub n_control: usize,
    pub mean_treated: Option<f64>,
    pub mean_control: Option<f64>,
    pub std_diff: Option<f64>,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var)
}

/// `(mean_T - mean_C) / sqrt((s_T^2 + s_C^2) / 2)`; zero when both the
/// numerator and denominator vanish, `None` for an empty arm or a zero
/// denominator with distinct means.
pub fn standardized_difference(treated: &[f64], control: &[f64]) -> Option<f64> {
    if treated.is_empty() || control.is_empty() {
        return None;
    }
    let (mt, vt) = mean_var(treated);
    let (mc, vc) = mean_var(control);
    standardized_from(mt - mc, vt, vc)
}

fn standardized_from(diff: f64, vt: f64, vc: f64) -> Option<f64> {
    let den = ((vt + vc) / 2.0).sqrt();
    if den > 0.0 {
        Some(diff / den)
    } else if diff == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Per-stratum and pooled balance of `columns` between `arm` groups.
///
/// The pooled row of a stratified table averages within-stratum mean
/// differences with stratum-size weights (strata lacking an arm are
/// skipped) and scales by the unstratified arm variances.
pub fn balance_table(columns: &[(String, Vec<f64>)], arm: &[bool], strata: Option<&[usize]>) -> Vec<BalanceRow> {
    let mut out = Vec::new();
    let k = strata.map_or(0, |s| s.iter().max().map_or(0, |m| m + 1));
    for (name, values) in columns {
        let split = |rows: &mut dyn Iterator<Item = usize>| {
            let mut t = Vec::new();
            let mut c = Vec::new();
            for i in rows {
                if arm[i] {
                    t.push(values[i]);
                } else {
                    c.push(values[i]);
                }
            }
            (t, c)
        };
        let (t_all, c_all) = split(&mut (0..values.len()));
        let row = |stratum, t: &[f64], c: &[f64], sd| BalanceRow {
            column: name.clone(),
            stratum,
            n_treated: t.len(),
            n_control: c.len(),
            mean_treated: (!t.is_empty()).then(|| mean_var(t).0),
            mean_control: (!c.is_empty()).then(|| mean_var(c).0),
            std_diff: sd,
        };
        match strata {
            None => out.push(row(None, &t_all, &c_all, standardized_difference(&t_all, &c_all))),
            Some(s) => {
                let mut weighted = 0.0;
                let mut used = 0usize;
                for j in 0..k {
                    let (t, c) = split(&mut (0..values.len()).filter(|&i| s[i] == j));
                    let sd = standardized_difference(&t, &c);
                    if !t.is_empty() && !c.is_empty() {
                        weighted += (mean_var(&t).0 - mean_var(&c).0) * (t.len() + c.len()) as f64;
                        used += t.len() + c.len();
                    }
                    out.push(row(Some(j), &t, &c, sd));
                }
                let pooled = if used == 0 || t_all.is_empty() || c_all.is_empty() {
                    None
                } else {
                    standardized_from(weighted / used as f64, mean_var(&t_all).1, mean_var(&c_all).1)
                };
                out.push(row(None, &t_all, &c_all, pooled));
            }
        }
    }
    out
}

/// Largest |standardized difference| of one covariate across joint
/// treatment arms, without and with stratification on the joint score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBalance {
    pub column: String,
    pub unstratified_max: f64,
    pub stratified_max: f64,
}

fn quantile_strata(score: &[f64], q: usize) -> Vec<usize> {
    let n = score.len();
    let mut sorted = score.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..q).map(|k| sorted[(k * n).div_ceil(q) - 1]).collect();
    score.iter().map(|s| cuts.partition_point(|c| c < s)).collect()
}

/// Balance across every occupied joint treatment arm `(z, g)`, each arm
/// compared with all other units. Stratified balance uses `q × q` strata
/// from quantiles of φ̂(z) and of λ̂(g; z) evaluated at the arm's level.
pub fn joint_treatment_balance(
    data: &UnitData,
    jps: &JointPS,
    columns: &[String],
    q: usize,
    min_arm_size: usize,
) -> Result<Vec<JointBalance>> {
    let mut levels: Vec<(u8, f64)> = data.z.iter().zip(&data.g).map(|(&z, &g)| (z, g)).collect();
    levels.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    levels.dedup();
    let mut out = Vec::new();
    let cols = data.covariates(columns)?;
    let mut unstrat = vec![0.0f64; cols.len()];
    let mut strat = vec![0.0f64; cols.len()];
    for &(zl, gl) in &levels {
        let arm: Vec<bool> = (0..data.len()).map(|i| data.z[i] == zl && data.g[i] == gl).collect();
        let size = arm.iter().filter(|&&a| a).count();
        if size < min_arm_size || data.len() - size < min_arm_size {
            continue;
        }
        let phi: Vec<f64> = (0..data.len()).map(|i| jps.individual.phi_z(zl, i)).collect();
        let lam: Vec<f64> =
            (0..data.len()).map(|i| jps.neighborhood.lambda(gl, zl, i, data.trials[i])).collect();
        let sp = quantile_strata(&phi, q);
        let sl = quantile_strata(&lam, q);
        let strata: Vec<usize> = sp.iter().zip(&sl).map(|(a, b)| a * q + b).collect();
        let plain = balance_table(&cols, &arm, None);
        let layered = balance_table(&cols, &arm, Some(&strata));
        for (k, (name, _)) in cols.iter().enumerate() {
            let p = plain.iter().find(|r| &r.column == name).and_then(|r| r.std_diff);
            let s = layered.iter().find(|r| &r.column == name && r.stratum.is_none()).and_then(|r| r.std_diff);
            if let (Some(p), Some(s)) = (p, s) {
                unstrat[k] = unstrat[k].max(p.abs());
                strat[k] = strat[k].max(s.abs());
            }
        }
    }
    for (k, (name, _)) in cols.iter().enumerate() {
        out.push(JointBalance { column: name.clone(), unstratified_max: unstrat[k], stratified_max: strat[k] });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pmf_examples() {
        assert_abs_diff_eq!(binomial_pmf(1, 2, 0.5), 0.5, epsilon = 1e-15);
        let total: f64 = (0..=2).map(|k| binomial_pmf(k, 2, 0.5)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
        assert_eq!(binomial_pmf(0, 0, 0.3), 1.0);
        assert_eq!(binomial_pmf(3, 3, 1.0), 1.0);
    }

    #[test]
    fn uniform_quintiles() {
        let n = 1003;
        let score: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let z: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let p = subclassify(&score, &z, 5, MIN_ARM_COUNT).unwrap();
        assert_eq!(p.num_subclasses(), 5);
        for s in p.sizes() {
            assert!((s as f64 - n as f64 / 5.0).abs() <= 1.0, "size {s}");
        }
    }

    #[test]
    fn identical_scores_single_subclass() {
        let score = vec![0.3; 40];
        let z: Vec<u8> = (0..40).map(|i| (i % 3 == 0) as u8).collect();
        let p = subclassify(&score, &z, 5, MIN_ARM_COUNT).unwrap();
        assert_eq!(p.num_subclasses(), 1);
        assert!(p.assignment.iter().all(|&a| a == 0));
    }

    #[test]
    fn merges_thin_arms() {
        // the top fifth is all treated, so it must merge downward
        let n = 100;
        let score: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let z: Vec<u8> = (0..n).map(|i| (i >= 80 || i % 2 == 0) as u8).collect();
        let p = subclassify(&score, &z, 5, MIN_ARM_COUNT).unwrap();
        assert_eq!(p.num_subclasses(), 4);
        assert!(p.treated.iter().chain(&p.control).all(|&c| c >= MIN_ARM_COUNT));
        assert!(p.boundaries.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn missing_arm_is_error() {
        let score: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(subclassify(&score, &[1; 20], 2, MIN_ARM_COUNT).is_err());
        assert!(subclassify(&score[..3], &[0, 1, 0], 2, MIN_ARM_COUNT).is_err());
    }

    #[test]
    fn std_diff_conventions() {
        assert_eq!(standardized_difference(&[1.0, 2.0], &[1.0, 2.0]), Some(0.0));
        assert_eq!(standardized_difference(&[1.0, 1.0], &[1.0]), Some(0.0));
        assert_eq!(standardized_difference(&[2.0, 2.0], &[1.0]), None);
        assert_eq!(standardized_difference(&[], &[1.0]), None);
        // means 2 and 0, variances 2 and 2
        assert_abs_diff_eq!(standardized_difference(&[1.0, 3.0], &[-1.0, 1.0]).unwrap(), 2.0 / 2f64.sqrt());
    }

    #[test]
    fn stratified_table_reports_empty_arm_stratum() {
        let cols = vec![("x".to_string(), vec![1.0, 2.0, 3.0, 4.0, 5.0])];
        let arm = [true, false, true, true, true];
        let rows = balance_table(&cols, &arm, Some(&[0, 0, 1, 1, 1]));
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].std_diff, None);
        // pooled uses only stratum 0: difference -1
        assert!(rows[2].std_diff.unwrap() < 0.0);
    }
}
