//! Variance-characterizing matrix H, operator norm, exact variance as a
//! quadratic form, and the finite-n quantities behind the consistency and
//! normality conditions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::designs::{Factor, FnFactor, MomentProvider};
use crate::error::{Error, Result};
use crate::model_spaces::NeighborhoodSummary;
use crate::numeric::{symmetric_eigen, SortedEigen};
use crate::orthogonalization::OrthoBasis;
use crate::variance::ElementaryTable;

/// H over the B_o directions of every unit, flattened unit by unit in B_o
/// order: row r stands for (index[r].0, index[r].1) = (unit i, basis l).
/// With alpha_{i,l} = E[y_i rho_{i,l}] / sqrt(n), Var(tau_hat) = alpha' H alpha / n.
#[derive(Debug, Clone)]
pub struct VarianceMatrix {
    pub h: DMatrix<f64>,
    pub index: Vec<(usize, usize)>,
    eigen: SortedEigen,
}

/// Assembles H from per-pair covariance functionals; `tables` covers the
/// kept pairs with i <= j, all others are zero blocks.
pub fn variance_matrix(orthos: &[OrthoBasis], tables: &[ElementaryTable]) -> VarianceMatrix {
    let mut offsets = Vec::with_capacity(orthos.len());
    let mut index = Vec::new();
    for (i, o) in orthos.iter().enumerate() {
        offsets.push(index.len());
        index.extend(o.b_o().iter().map(|&l| (i, l)));
    }
    let size = index.len();
    let mut h = DMatrix::zeros(size, size);
    for t in tables {
        let theta = t.variance_functional();
        let (oi, oj) = (&orthos[t.i], &orthos[t.j]);
        let (ai, aj) = (oi.coefficients(), oj.coefficients());
        for (x, &l) in oi.b_o().iter().enumerate() {
            for (y, &k) in oj.b_o().iter().enumerate() {
                let mut v = 0.0;
                for p in 0..=l {
                    let a = ai[(l, p)];
                    if a == 0.0 {
                        continue;
                    }
                    for q in 0..=k {
                        v += a * aj[(k, q)] * theta[p * t.dj + q];
                    }
                }
                let (r, c) = (offsets[t.i] + x, offsets[t.j] + y);
                h[(r, c)] = v;
                h[(c, r)] = v;
            }
        }
    }
    let eigen = symmetric_eigen(&h);
    VarianceMatrix { h, index, eigen }
}

impl VarianceMatrix {
    pub fn from_matrix(h: DMatrix<f64>) -> Self {
        let index = (0..h.nrows()).map(|r| (0, r)).collect();
        let eigen = symmetric_eigen(&h);
        VarianceMatrix { h, index, eigen }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigen.max()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigen.min()
    }

    pub fn top_eigenvector(&self) -> DVector<f64> {
        self.eigen.top_vector()
    }

    /// L with L L' equal to H with negative eigenvalues clipped to zero.
    pub fn psd_factor(&self) -> DMatrix<f64> {
        let mut l = self.eigen.vectors.clone();
        for (c, v) in self.eigen.values.iter().enumerate() {
            let s = v.max(0.0).sqrt();
            l.column_mut(c).scale_mut(s);
        }
        l
    }

    /// Flattens per-unit orthonormal coordinates (in B_o order) into the
    /// alpha vector, divided by sqrt(n).
    pub fn alpha(&self, coordinates: &[Vec<f64>]) -> Result<DVector<f64>> {
        let total: usize = coordinates.iter().map(Vec::len).sum();
        if total != self.index.len() {
            return Err(Error::LengthMismatch {
                expected: self.index.len(),
                found: total,
            });
        }
        let n = coordinates.len().max(1) as f64;
        Ok(DVector::from_iterator(
            total,
            coordinates.iter().flatten().map(|c| c / n.sqrt()),
        ))
    }
}

/// Var(tau_hat) = alpha' H alpha / n.
pub fn exact_variance_quadratic(matrix: &VarianceMatrix, coordinates: &[Vec<f64>]) -> Result<f64> {
    let alpha = matrix.alpha(coordinates)?;
    let n = coordinates.len().max(1) as f64;
    Ok((&matrix.h * &alpha).dot(&alpha) / n)
}

pub fn operator_norm(matrix: &VarianceMatrix) -> f64 {
    matrix.lambda_max().max(0.0).sqrt()
}

pub fn worst_case_rmse(opnorm: f64, c: f64, n: usize) -> f64 {
    c * opnorm / (n as f64).sqrt()
}

fn reciprocal(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// n^{-1/2} sqrt(davg) ||y||_{max,p} ||psi||_{max,q}, requiring 1/p + 1/q = 1/2.
pub fn consistency_bound(davg: f64, maxp_outcome: f64, maxq_representor: f64, n: usize, p: f64, q: f64) -> Result<f64> {
    if !(p > 0.0 && q > 0.0) || (reciprocal(p) + reciprocal(q) - 0.5).abs() > 1e-12 {
        return Err(Error::InvalidConjugatePair { p, q });
    }
    Ok(davg.sqrt() * maxp_outcome * maxq_representor / (n as f64).sqrt())
}

/// Exponents admissible for the variance-estimator conditions:
/// p >= 4, q >= 2 and 1/p + 1/(2q) = 1/4.
pub fn variance_condition_exponents(p: f64, q: f64) -> bool {
    p >= 4.0 && q >= 2.0 && (reciprocal(p) + 0.5 * reciprocal(q) - 0.25).abs() <= 1e-12
}

/// max_i (E|f_i(Z)|^p)^{1/p}; p = infinity is not supported.
pub fn max_p_norm(functions: &[&dyn Factor], p: f64, provider: &MomentProvider) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidConjugatePair { p, q: f64::NAN });
    }
    let mut best = 0.0f64;
    for f in functions {
        let g = FnFactor::new(f.support().to_vec(), |z: &[f64]| f.evaluate(z).abs().powf(p));
        let m = provider.moment(&[&g])?.value;
        best = best.max(m.max(0.0).powf(1.0 / p));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    pub opnorm: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub davg: f64,
    pub dmax: usize,
    pub savg: f64,
    /// dmax / n^{1/4}; the normality condition asks this to vanish.
    pub dmax_ratio: f64,
    /// savg / n^2; the variance-consistency condition asks this to vanish.
    pub savg_ratio: f64,
    pub p: f64,
    pub q: f64,
    pub max_p_outcome: Option<f64>,
    pub max_q_representor: f64,
    pub consistency_bound: Option<f64>,
    /// sqrt(n^{-1} sum_i E[y_i^2]) restricted to the orthonormal directions.
    pub outcome_scale: Option<f64>,
    pub worst_case_rmse: Option<f64>,
    pub exact_variance: Option<f64>,
    pub exact_rmse: Option<f64>,
    /// n Var(tau_hat) >= c for the configured c.
    pub nondegenerate: Option<bool>,
}

impl DiagnosticsReport {
    pub fn neighborhood_ratios(summary: &NeighborhoodSummary) -> (f64, f64) {
        let n = summary.len().max(1) as f64;
        (summary.dmax as f64 / n.powf(0.25), summary.savg / (n * n))
    }
}
