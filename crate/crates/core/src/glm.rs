//! Logistic (Bernoulli and binomial) regression by IRLS and weighted least
//! squares.
//!
//! The binomial log-likelihood omits the `log C(m, s)` constant, which makes
//! it equal to the Bernoulli log-likelihood of the row-expanded data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Name of the intercept column.
pub const INTERCEPT: &str = "(Intercept)";

/// Regressors with named columns and optional nonnegative row weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    x: DMatrix<f64>,
    weights: Option<Vec<f64>>,
}

impl DesignMatrix {
    /// Builds a matrix from named columns of equal length.
    pub fn from_columns<S: Into<String>>(columns: Vec<(S, Vec<f64>)>) -> Result<Self> {
        let columns: Vec<(String, Vec<f64>)> = columns.into_iter().map(|(n, v)| (n.into(), v)).collect();
        let nrows = columns.first().map_or(0, |c| c.1.len());
        let mut names = Vec::with_capacity(columns.len());
        for (name, values) in &columns {
            if values.len() != nrows {
                return input(format!("column '{name}' has {} rows, expected {nrows}", values.len()));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return input(format!("column '{name}' has non-finite entries"));
            }
            if names.contains(name) {
                return input(format!("duplicate design column '{name}'"));
            }
            names.push(name.clone());
        }
        let x = DMatrix::from_fn(nrows, columns.len(), |i, j| columns[j].1[i]);
        Ok(DesignMatrix { names, x, weights: None })
    }

    /// Same as [`DesignMatrix::from_columns`] with a leading intercept.
    pub fn with_intercept<S: Into<String>>(nrows: usize, columns: Vec<(S, Vec<f64>)>) -> Result<Self> {
        let mut all: Vec<(String, Vec<f64>)> = vec![(INTERCEPT.to_string(), vec![1.0; nrows])];
        all.extend(columns.into_iter().map(|(n, v)| (n.into(), v)));
        Self::from_columns(all)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.nrows() {
            return input("row weights do not match the number of rows");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return input("row weights must be finite and nonnegative");
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Copy without the named columns.
    pub fn without(&self, drop: &[String]) -> Self {
        let keep: Vec<usize> = (0..self.ncols()).filter(|&j| !drop.contains(&self.names[j])).collect();
        DesignMatrix {
            names: keep.iter().map(|&j| self.names[j].clone()).collect(),
            x: self.x.select_columns(keep.iter()),
            weights: self.weights.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BernoulliLogit,
    BinomialLogit,
    GaussianIdentity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub family: Family,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    /// Some coefficient hit the cap: the data are (quasi-)separated.
    pub separation: bool,
    pub iterations: usize,
    /// Log-likelihood for logit families, `-rss / 2` for least squares.
    pub log_likelihood: f64,
    /// Residual sum of squares (weighted) for least squares.
    pub rss: Option<f64>,
    pub max_abs_score: f64,
    /// Log-likelihood after every accepted iteration.
    pub trace: Vec<f64>,
    /// Columns removed before fitting because they were linearly dependent.
    pub dropped: Vec<String>,
}

impl GlmFit {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.coefficients[j])
    }

    /// Linear predictor for `x`, matching columns by name.
    pub fn linear_predictor(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        let mut idx = Vec::with_capacity(self.names.len());
        for name in &self.names {
            match x.column_index(name) {
                Some(j) => idx.push(j),
                None => return input(format!("design is missing fitted column '{name}'")),
            }
        }
        let mut eta = vec![0.0; x.nrows()];
        for (&j, &b) in idx.iter().zip(&self.coefficients) {
            for (i, e) in eta.iter_mut().enumerate() {
                *e += b * x.x[(i, j)];
            }
        }
        Ok(eta)
    }

    /// Linear predictor for a single row given as (name, value) pairs.
    pub fn eta_row(&self, row: &[(&str, f64)]) -> Result<f64> {
        let mut eta = 0.0;
        for (name, b) in self.names.iter().zip(&self.coefficients) {
            if name == INTERCEPT {
                eta += b;
                continue;
            }
            match row.iter().find(|(n, _)| n == name) {
                Some((_, v)) => eta += b * v,
                None => return input(format!("row is missing fitted column '{name}'")),
            }
        }
        Ok(eta)
    }

    pub fn inverse_link(&self, eta: f64) -> f64 {
        match self.family {
            Family::GaussianIdentity => eta,
            _ => sigmoid(eta),
        }
    }
}

/// Fitted means on `x`: probabilities for logit families, the linear
/// predictor for least squares.
pub fn predict(fit: &GlmFit, x: &DesignMatrix) -> Result<Vec<f64>> {
    Ok(fit.linear_predictor(x)?.into_iter().map(|e| fit.inverse_link(e)).collect())
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    pub score_tol: f64,
    pub rel_tol: f64,
    pub coef_cap: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions { max_iter: 100, score_tol: 1e-8, rel_tol: 1e-10, coef_cap: 30.0 }
    }
}

/// Bernoulli-logit log-likelihood of aggregated binomial data (without the
/// binomial coefficient), honoring row weights.
pub fn binomial_log_likelihood(x: &DesignMatrix, successes: &[f64], trials: &[f64], beta: &[f64]) -> f64 {
    let eta = &x.x * DVector::from_column_slice(beta);
    (0..x.nrows())
        .map(|i| x.weight(i) * (successes[i] * eta[i] - trials[i] * log1p_exp(eta[i])))
        .sum()
}

/// Gradient of [`binomial_log_likelihood`] in `beta`.
pub fn binomial_score(x: &DesignMatrix, successes: &[f64], trials: &[f64], beta: &[f64]) -> Vec<f64> {
    let eta = &x.x * DVector::from_column_slice(beta);
    let r = DVector::from_fn(x.nrows(), |i, _| x.weight(i) * (successes[i] - trials[i] * sigmoid(eta[i])));
    (x.x.transpose() * r).iter().copied().collect()
}

/// Names of columns that are linear combinations of earlier columns, among
/// rows with positive weight.
pub fn dependent_columns(x: &DesignMatrix, row_mask: Option<&[bool]>) -> Vec<String> {
    let rows: Vec<usize> = (0..x.nrows())
        .filter(|&i| x.weight(i) > 0.0 && row_mask.is_none_or(|m| m[i]))
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let mut v: Vec<f64> = rows.iter().map(|&i| x.weight(i).sqrt() * x.x[(i, j)]).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            dependent.push(x.names[j].clone());
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        // two passes of modified Gram-Schmidt for stability
        for _ in 0..2 {
            for q in &basis {
                let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
        }
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r < 1e-9 {
            dependent.push(x.names[j].clone());
        } else {
            v.iter_mut().for_each(|a| *a /= r);
            basis.push(v);
        }
    }
    dependent
}

fn check_rank(x: &DesignMatrix, mask: Option<&[bool]>) -> Result<()> {
    if x.ncols() == 0 {
        return input("design has no columns");
    }
    let dep = dependent_columns(x, mask);
    if dep.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient { columns: dep })
    }
}

/// Least-squares solution of `a b = y` through a thin QR factorization.
fn lstsq(a: DMatrix<f64>, y: DVector<f64>) -> Option<DVector<f64>> {
    let qr = a.qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
}

pub fn fit_bernoulli_logit(x: &DesignMatrix, y: &[f64]) -> Result<GlmFit> {
    if y.len() != x.nrows() {
        return input(format!("response has {} rows, design has {}", y.len(), x.nrows()));
    }
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return input(format!("binary response contains {v}"));
    }
    let trials = vec![1.0; y.len()];
    let mut fit = irls(x, y, &trials, &IrlsOptions::default())?;
    fit.family = Family::BernoulliLogit;
    Ok(fit)
}

pub fn fit_binomial_logit(x: &DesignMatrix, successes: &[u32], trials: &[u32]) -> Result<GlmFit> {
    fit_binomial_logit_with(x, successes, trials, &IrlsOptions::default())
}

pub fn fit_binomial_logit_with(
    x: &DesignMatrix,
    successes: &[u32],
    trials: &[u32],
    opts: &IrlsOptions,
) -> Result<GlmFit> {
    if successes.len() != x.nrows() || trials.len() != x.nrows() {
        return input("successes/trials length does not match the design");
    }
    if let Some(i) = (0..trials.len()).find(|&i| successes[i] > trials[i]) {
        return input(format!("row {i}: {} successes out of {} trials", successes[i], trials[i]));
    }
    let s: Vec<f64> = successes.iter().map(|&v| v as f64).collect();
    let m: Vec<f64> = trials.iter().map(|&v| v as f64).collect();
    irls(x, &s, &m, opts)
}

fn irls(x: &DesignMatrix, s: &[f64], m: &[f64], opts: &IrlsOptions) -> Result<GlmFit> {
    let mask: Vec<bool> = m.iter().map(|&t| t > 0.0).collect();
    if !mask.iter().any(|&b| b) {
        return input("no rows with positive trials");
    }
    check_rank(x, Some(&mask))?;
    let n = x.nrows();
    let p = x.ncols();
    let mut beta = vec![0.0; p];
    let mut ll = binomial_log_likelihood(x, s, m, &beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut capped = false;
    let mut score = binomial_score(x, s, m, &beta);
    while iterations < opts.max_iter {
        iterations += 1;
        // Newton step as a weighted least-squares problem.
        let eta = &x.x * DVector::from_column_slice(&beta);
        let mut a = DMatrix::zeros(n, p);
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            let pi = sigmoid(eta[i]);
            let w = x.weight(i) * m[i] * pi * (1.0 - pi);
            if w <= 0.0 {
                continue;
            }
            let sw = w.sqrt();
            for j in 0..p {
                a[(i, j)] = sw * x.x[(i, j)];
            }
            rhs[i] = x.weight(i) * (s[i] - m[i] * pi) / sw;
        }
        let Some(step) = lstsq(a, rhs) else { break };
        if step.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, d)| (b + t * d).clamp(-opts.coef_cap, opts.coef_cap))
                .collect();
            let cll = binomial_log_likelihood(x, s, m, &cand);
            if cll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((cand, cll.max(ll)));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cll)) = accepted else { break };
        let rel = beta
            .iter()
            .zip(&cand)
            .map(|(b, c)| (c - b).abs() / (b.abs() + 1.0))
            .fold(0.0, f64::max);
        beta = cand;
        ll = cll;
        trace.push(ll);
        capped = beta.iter().any(|b| b.abs() >= opts.coef_cap);
        score = binomial_score(x, s, m, &beta);
        let max_score = score.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if capped {
            if rel < opts.rel_tol {
                break;
            }
            continue;
        }
        if max_score < opts.score_tol && rel < opts.rel_tol {
            converged = true;
            break;
        }
    }
    let max_abs_score = score.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !converged && max_abs_score < opts.score_tol && !capped {
        converged = true;
    }
    if capped {
        log::debug!("logit fit hit the coefficient cap; data appear separated");
    }
    let all_bernoulli = m.iter().all(|&t| t == 1.0);
    Ok(GlmFit {
        family: if all_bernoulli { Family::BernoulliLogit } else { Family::BinomialLogit },
        names: x.names.clone(),
        coefficients: beta,
        converged: converged && !capped,
        separation: capped,
        iterations,
        log_likelihood: ll,
        rss: None,
        max_abs_score,
        trace,
        dropped: Vec::new(),
    })
}

pub fn fit_wls(x: &DesignMatrix, y: &[f64]) -> Result<GlmFit> {
    if y.len() != x.nrows() {
        return input(format!("response has {} rows, design has {}", y.len(), x.nrows()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return input("response has non-finite entries");
    }
    check_rank(x, None)?;
    let n = x.nrows();
    let p = x.ncols();
    let mut a = DMatrix::zeros(n, p);
    let mut b = DVector::zeros(n);
    for i in 0..n {
        let sw = x.weight(i).sqrt();
        for j in 0..p {
            a[(i, j)] = sw * x.x[(i, j)];
        }
        b[i] = sw * y[i];
    }
    let beta = lstsq(a, b).ok_or_else(|| Error::RankDeficient { columns: x.names.clone() })?;
    let fitted = &x.x * &beta;
    let mut rss = 0.0;
    let mut grad = vec![0.0; p];
    for i in 0..n {
        let r = y[i] - fitted[i];
        rss += x.weight(i) * r * r;
        for (j, g) in grad.iter_mut().enumerate() {
            *g += x.weight(i) * x.x[(i, j)] * r;
        }
    }
    Ok(GlmFit {
        family: Family::GaussianIdentity,
        names: x.names.clone(),
        coefficients: beta.iter().copied().collect(),
        converged: true,
        separation: false,
        iterations: 1,
        log_likelihood: -0.5 * rss,
        rss: Some(rss),
        max_abs_score: grad.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        trace: vec![-0.5 * rss],
        dropped: Vec::new(),
    })
}

/// Runs `fit` and, on a rank-deficient design, retries once without the
/// named dependent columns. The dropped names are recorded on the fit.
pub fn fit_dropping_dependent<F>(x: &DesignMatrix, fit: F) -> Result<GlmFit>
where
    F: Fn(&DesignMatrix) -> Result<GlmFit>,
{
    match fit(x) {
        Err(Error::RankDeficient { columns }) if columns.iter().all(|c| c != INTERCEPT) => {
            log::warn!("dropping dependent columns: {}", columns.join(", "));
            let reduced = x.without(&columns);
            let mut out = fit(&reduced)?;
            out.dropped = columns;
            Ok(out)
        }
        other => other,
    }
}
