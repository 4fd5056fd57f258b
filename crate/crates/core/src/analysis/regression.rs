//! Ordinary least squares with classical standard errors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("design matrix is rank deficient; offending columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("{rows} rows leave no residual degrees of freedom for {cols} predictors")]
    NoResidualDf { rows: usize, cols: usize },
    #[error("response length {response} does not match {rows} design rows")]
    Shape { rows: usize, response: usize },
}

/// A named design matrix and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub response: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

impl Term {
    /// Significance stars at 0.05 / 0.01 / 0.001.
    pub fn stars(&self) -> &'static str {
        match self.p_value {
            p if p < 0.001 => "***",
            p if p < 0.01 => "**",
            p if p < 0.05 => "*",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub terms: Vec<Term>,
    pub n_rows: usize,
    pub residual_df: usize,
    pub r_squared: f64,
    pub residual_std_error: f64,
    /// Reference distribution for p-values.
    pub p_value_distribution: String,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }
}

// Relative size of a QR pivot below which a column counts as dependent.
const RANK_TOL: f64 = 1e-9;

/// Solves the least-squares problem by Householder QR.
pub fn ols_regression(design: &Design) -> Result<RegressionResult, RegressionError> {
    let n = design.rows.len();
    let p = design.names.len();
    if design.response.len() != n {
        return Err(RegressionError::Shape { rows: n, response: design.response.len() });
    }
    if n <= p {
        return Err(RegressionError::NoResidualDf { rows: n, cols: p });
    }
    let x = DMatrix::from_fn(n, p, |i, j| design.rows[i][j]);
    let y = DVector::from_column_slice(&design.response);

    let qr = x.clone().qr();
    let r = qr.r();
    let col_norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    let bad: Vec<String> = (0..p)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * col_norms[j].max(f64::MIN_POSITIVE))
        .map(|j| design.names[j].clone())
        .collect();
    if !bad.is_empty() {
        return Err(RegressionError::RankDeficient(bad));
    }

    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .expect("nonsingular R after rank check");
    let fitted = &x * &beta;
    let residuals = &y - fitted;
    let rss = residuals.norm_squared();
    let df = n - p;
    let sigma2 = rss / df as f64;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .expect("nonsingular R after rank check");
    // (X'X)^-1 = R^-1 R^-T; only the diagonal is needed.
    let var_diag: Vec<f64> = (0..p).map(|j| r_inv.row(j).norm_squared() * sigma2).collect();

    let mean_y = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };

    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive df");
    let terms = (0..p)
        .map(|j| {
            let se = var_diag[j].sqrt();
            let t = beta[j] / se;
            let p_value = if t.is_finite() { 2.0 * dist.sf(t.abs()) } else { 0.0 };
            Term {
                name: design.names[j].clone(),
                coefficient: beta[j],
                std_error: se,
                t_statistic: t,
                p_value: p_value.min(1.0),
            }
        })
        .collect();

    Ok(RegressionResult {
        terms,
        n_rows: n,
        residual_df: df,
        r_squared,
        residual_std_error: sigma2.sqrt(),
        p_value_distribution: format!("student_t(df={df})"),
        residuals: residuals.iter().copied().collect(),
    })
}
