//! Property bodies shared by the proptest targets and the acceptance run.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use netference::estimators::{estimate_subclass_gps, EffectReport, GpsConfig};
use netference::glm::{
    binomial_log_likelihood, binomial_score, fit_bernoulli_logit, fit_binomial_logit, fit_wls, sigmoid, DesignMatrix,
};
use netference::graph::ExposureKind;
use netference::propensity::{admissible_levels, joint_ps};
use netference::UnitData;
use proptest::prelude::*;

pub const IDENTITY_N: usize = 150;

/// Random analysis table with two covariates and a top-`k` exposure.
pub fn random_data(n: usize, k: u32, u: &[f64]) -> UnitData {
    let x1: Vec<f64> = (0..n).map(|i| u[i] * 2.0 - 1.0).collect();
    let x2: Vec<f64> = (0..n).map(|i| (u[n + i] < 0.4) as u8 as f64).collect();
    let z: Vec<u8> = (0..n).map(|i| (u[2 * n + i] < 0.3 + 0.3 * u[i]) as u8).collect();
    let trials: Vec<u32> = (0..n).map(|i| 1 + (u[3 * n + i] * k as f64) as u32 % k).collect();
    let g: Vec<f64> = (0..n)
        .map(|i| {
            let m = trials[i];
            let s = (0..m).filter(|t| u[(4 * n + i * 7 + *t as usize) % u.len()] < 0.5).count() as f64;
            s / m as f64
        })
        .collect();
    let y: Vec<f64> = (0..n).map(|i| 3.0 * x1[i] - 2.0 * z[i] as f64 + 4.0 * g[i] + u[5 * n + i]).collect();
    UnitData::new(y, z, g, trials, ExposureKind::ProportionTopK { k: k as usize }, vec![("x1".into(), x1), ("x2".into(), x2)])
        .unwrap()
}

pub fn identity_strategy() -> impl Strategy<Value = (Vec<f64>, u32, usize)> {
    (prop::collection::vec(0.0f64..1.0, 6 * IDENTITY_N), 2u32..4, 1usize..4)
}

fn check_report(r: &EffectReport) -> Result<(), TestCaseError> {
    for z in 0..2 {
        prop_assert_eq!(r.delta_g[z][0], Some(0.0));
    }
    prop_assert!((r.total - (r.tau + r.delta[0])).abs() < 1e-10);
    for z in 0..2 {
        let mut sum = 0.0;
        for k in 0..r.g_grid.len() {
            if let Some(d) = r.delta_g[z][k] {
                sum += d * r.g_mass[k];
            }
        }
        prop_assert_eq!(sum, r.delta[z]);
    }
    let mass: f64 = r.g_mass.iter().sum();
    prop_assert!((mass - 1.0).abs() < 1e-12);
    Ok(())
}

pub fn identity_case(u: &[f64], k: u32, j: usize) -> Result<(), TestCaseError> {
    let data = random_data(IDENTITY_N, k, u);
    let cols = vec!["x1".to_string(), "x2".to_string()];
    let jps = joint_ps(&data, &cols, &cols).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for i in 0..data.len() {
        let total: f64 = (0..2u8)
            .flat_map(|z| admissible_levels(data.exposure, data.trials[i]).into_iter().map(move |g| (z, g)))
            .map(|(z, g)| jps.psi(z, g, i, data.trials[i]))
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "unit {i}: {total}");
    }
    let mut cfg = GpsConfig::new(&["x1", "x2"], &["x1", "x2"]);
    cfg.subclasses = j;
    cfg.min_arm_count = 2;
    let (_, report) = estimate_subclass_gps(&data, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    check_report(&report)
}

/// Random design with an intercept and `p` continuous columns.
pub fn design(rows: &[Vec<f64>]) -> DesignMatrix {
    let p = rows[0].len();
    let cols: Vec<(String, Vec<f64>)> =
        (0..p).map(|j| (format!("x{j}"), rows.iter().map(|r| r[j]).collect())).collect();
    DesignMatrix::with_intercept(rows.len(), cols).unwrap()
}

pub fn rows_strategy(n: std::ops::Range<usize>, p: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, p), n)
}

pub type ScoreInput = (Vec<Vec<f64>>, Vec<f64>, Vec<u32>, Vec<f64>);

pub fn score_strategy() -> impl Strategy<Value = ScoreInput> {
    (
        rows_strategy(20..60, 2),
        prop::collection::vec(-1.5f64..1.5, 3),
        prop::collection::vec(1u32..6, 60),
        prop::collection::vec(0.0f64..1.0, 60),
    )
}

pub fn score_case((rows, beta, trial_seed, frac): ScoreInput) -> Result<(), TestCaseError> {
    let x = design(&rows);
    let n = x.nrows();
    let trials: Vec<f64> = trial_seed[..n].iter().map(|&t| t as f64).collect();
    let succ: Vec<f64> = (0..n).map(|i| (frac[i] * trials[i]).floor()).collect();
    let grad = binomial_score(&x, &succ, &trials, &beta);
    for j in 0..beta.len() {
        let h = 1e-6;
        let mut up = beta.clone();
        let mut dn = beta.clone();
        up[j] += h;
        dn[j] -= h;
        let fd = (binomial_log_likelihood(&x, &succ, &trials, &up) - binomial_log_likelihood(&x, &succ, &trials, &dn))
            / (2.0 * h);
        let scale = grad[j].abs().max(1.0);
        prop_assert!((fd - grad[j]).abs() / scale < 1e-5, "j={j} fd={fd} analytic={}", grad[j]);
    }
    Ok(())
}

pub type ExpansionInput = (Vec<Vec<f64>>, Vec<u32>, Vec<f64>);

pub fn expansion_strategy() -> impl Strategy<Value = ExpansionInput> {
    (rows_strategy(15..40, 2), prop::collection::vec(1u32..5, 40), prop::collection::vec(0.05f64..0.95, 40))
}

pub fn expansion_case((rows, trial_seed, frac): ExpansionInput) -> Result<(), TestCaseError> {
    let x = design(&rows);
    let n = x.nrows();
    let trials: Vec<u32> = trial_seed[..n].to_vec();
    let succ: Vec<u32> =
        (0..n).map(|i| (frac[i] * (trials[i] + 1) as f64).floor().min(trials[i] as f64) as u32).collect();
    // Each binomial row becomes `trials` Bernoulli rows.
    let mut exp_rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        for t in 0..trials[i] {
            exp_rows.push(rows[i].clone());
            y.push((t < succ[i]) as u8 as f64);
        }
    }
    let a = fit_binomial_logit(&x, &succ, &trials);
    let b = fit_bernoulli_logit(&design(&exp_rows), &y);
    match (a, b) {
        (Ok(a), Ok(b)) => {
            prop_assume!(!a.separation && !b.separation);
            for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
                prop_assert!((u - v).abs() < 1e-8, "{:?} vs {:?}", a.coefficients, b.coefficients);
            }
        }
        (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
    }
    Ok(())
}

pub type WlsInput = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

pub fn wls_strategy() -> impl Strategy<Value = WlsInput> {
    (rows_strategy(8..40, 3), prop::collection::vec(-5.0f64..5.0, 40), prop::collection::vec(0.1f64..3.0, 40))
}

pub fn wls_case((rows, resp, w): WlsInput) -> Result<(), TestCaseError> {
    let n = rows.len();
    let x = design(&rows).with_weights(w[..n].to_vec()).unwrap();
    let y = &resp[..n];
    let Ok(fit) = fit_wls(&x, y) else { return Ok(()) };
    let m = x.matrix();
    let wd = DMatrix::from_diagonal(&DVector::from_column_slice(&w[..n]));
    let xtwx = m.transpose() * &wd * m;
    prop_assume!(xtwx.clone().svd(false, false).singular_values.min() > 1e-6);
    let xtwy = m.transpose() * &wd * DVector::from_column_slice(y);
    let hand = xtwx.lu().solve(&xtwy).unwrap();
    for (j, b) in fit.coefficients.iter().enumerate() {
        prop_assert!((b - hand[j]).abs() < 1e-10 * hand[j].abs().max(1.0), "{b} vs {}", hand[j]);
    }
    // Weighted residuals are orthogonal to every column.
    let beta = DVector::from_column_slice(&fit.coefficients);
    let r = DVector::from_column_slice(y) - m * beta;
    let ortho = m.transpose() * &wd * r;
    for v in ortho.iter() {
        prop_assert!(v.abs() < 1e-8);
    }
    Ok(())
}

pub type LogitInput = (Vec<Vec<f64>>, Vec<f64>);

pub fn logit_strategy() -> impl Strategy<Value = LogitInput> {
    (rows_strategy(40..80, 2), prop::collection::vec(0.0f64..1.0, 80))
}

pub fn logit_case((rows, u): LogitInput) -> Result<(), TestCaseError> {
    let x = design(&rows);
    let n = x.nrows();
    let y: Vec<f64> =
        (0..n).map(|i| (u[i] < sigmoid(0.3 + rows[i][0] - 0.5 * rows[i][1])) as u8 as f64).collect();
    let Ok(fit) = fit_bernoulli_logit(&x, &y) else { return Ok(()) };
    prop_assume!(!fit.separation);
    prop_assert!(fit.converged);
    let ones = vec![1.0; n];
    let score = binomial_score(&x, &y, &ones, &fit.coefficients);
    for s in score {
        prop_assert!(s.abs() < 1e-6, "{s}");
    }
    // Log-likelihood never decreases along the iterations.
    for w in fit.trace.windows(2) {
        prop_assert!(w[1] >= w[0] - 1e-9);
    }
    Ok(())
}
