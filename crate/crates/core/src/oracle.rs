//! Brute-force reference by exhaustive enumeration of a finite design.
//!
//! Only pointwise evaluation is shared with the rest of the crate: every
//! expectation here is a probability-weighted sum over the support.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::{Assignment, Design, Factor};
use crate::error::{Error, Result};
use crate::functionals::EffectFunctional;
use crate::model_spaces::ModelSpace;
use crate::numeric::CompensatedSum;
use crate::orthogonalization::OrthoBasis;
use crate::riesz::RieszRepresentor;
use crate::variance::{normal_quantile, SecondOrderRepresentor, TermKind, VarianceBoundSpec};

/// Weighted support points.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub points: Vec<(Assignment, f64)>,
}

impl Enumeration {
    pub fn new(design: &Design, cap: usize) -> Result<Self> {
        Ok(Enumeration {
            points: design.enumerate_support(cap)?,
        })
    }

    /// sum_z P(z) f(z), compensated, in support order.
    pub fn expect<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .map(|(z, p)| p * f(z.coords()))
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn moment(&self, factors: &[&dyn Factor]) -> f64 {
        self.expect(|z| factors.iter().map(|f| f.evaluate(z)).product())
    }
}

/// Variance-bound machinery to be checked by enumeration.
#[derive(Debug, Clone, Copy)]
pub struct OracleVariance<'a> {
    pub orthos: &'a [OrthoBasis],
    pub spec: &'a VarianceBoundSpec,
    /// Aligned with `spec.classifications`.
    pub second_order: &'a [SecondOrderRepresentor],
}

#[derive(Debug, Clone, Copy)]
pub struct OracleInput<'a> {
    pub design: &'a Design,
    pub spaces: &'a [Arc<ModelSpace>],
    pub functionals: &'a [EffectFunctional],
    /// Outcome coefficients per unit.
    pub truth: &'a [Vec<f64>],
    pub representors: &'a [RieszRepresentor],
    pub variance: Option<OracleVariance<'a>>,
    pub alpha: f64,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub estimand: f64,
    pub mean_estimate: f64,
    pub variance: f64,
    pub bound: Option<f64>,
    pub mean_variance_estimate: Option<f64>,
    /// (tau_hat(z), P(z)) in support order.
    pub distribution: Vec<(f64, f64)>,
    pub coverage: Option<f64>,
    pub alpha: f64,
}

pub fn oracle_run(input: &OracleInput<'_>) -> Result<OracleResult> {
    let n = input.spaces.len();
    if input.truth.len() != n || input.functionals.len() != n || input.representors.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: input.truth.len().min(input.functionals.len()).min(input.representors.len()),
        });
    }
    let en = Enumeration::new(input.design, input.cap)?;
    let nf = n.max(1) as f64;

    let estimand = input
        .functionals
        .iter()
        .zip(input.spaces)
        .zip(input.truth)
        .map(|((f, s), c)| f.apply(s, c))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum::<f64>()
        / nf;

    // per support point: outcomes, tau_hat, and V_hat when available
    let per_point: Vec<(f64, Option<f64>)> = en
        .points
        .par_iter()
        .map(|(z, _)| {
            let zc = z.coords();
            let y: Vec<f64> = input
                .spaces
                .iter()
                .zip(input.truth)
                .map(|(s, c)| s.evaluate(c, zc))
                .collect::<Result<_>>()?;
            let tau_hat = input
                .representors
                .iter()
                .zip(&y)
                .map(|(r, yi)| r.evaluate(zc) * yi)
                .sum::<f64>()
                / nf;
            let vhat = input.variance.map(|v| {
                let s: f64 = v
                    .second_order
                    .iter()
                    .map(|r| {
                        let m = if r.i == r.j { 1.0 } else { 2.0 };
                        m * r.evaluate(zc) * y[r.i] * y[r.j]
                    })
                    .sum();
                s / (nf * nf)
            });
            Ok((tau_hat, vhat))
        })
        .collect::<Result<_>>()?;

    let distribution: Vec<(f64, f64)> = per_point
        .iter()
        .zip(&en.points)
        .map(|((t, _), (_, p))| (*t, *p))
        .collect();
    let mean_estimate = distribution.iter().map(|(t, p)| p * t).collect::<CompensatedSum>().value();
    let variance = distribution
        .iter()
        .map(|(t, p)| p * (t - mean_estimate) * (t - mean_estimate))
        .collect::<CompensatedSum>()
        .value();

    let (mut bound, mut mean_variance_estimate, mut coverage) = (None, None, None);
    if let Some(v) = input.variance {
        bound = Some(oracle_bound(&en, input, &v)?);
        mean_variance_estimate = Some(
            per_point
                .iter()
                .zip(&en.points)
                .map(|((_, vh), (_, p))| p * vh.unwrap_or(0.0))
                .collect::<CompensatedSum>()
                .value(),
        );
        let zq = normal_quantile(input.alpha)?;
        coverage = Some(
            per_point
                .iter()
                .zip(&en.points)
                .map(|((t, vh), (_, p))| {
                    let r = zq * vh.unwrap_or(0.0).max(0.0).sqrt();
                    if (t - estimand).abs() <= r {
                        *p
                    } else {
                        0.0
                    }
                })
                .collect::<CompensatedSum>()
                .value(),
        );
    }

    Ok(OracleResult {
        estimand,
        mean_estimate,
        variance,
        bound,
        mean_variance_estimate,
        distribution,
        coverage,
        alpha: input.alpha,
    })
}

/// n^{-2} sum over kept pairs of B_{i,j}(y_i (x) y_j), every term a direct
/// enumeration of its defining covariance or raw moment.
fn oracle_bound(en: &Enumeration, input: &OracleInput<'_>, v: &OracleVariance<'_>) -> Result<f64> {
    let n = input.spaces.len();
    // rho_{i,k}(z) y_i(z) for every unit, basis index and support point
    let ry: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let o = &v.orthos[i];
            let s = &input.spaces[i];
            (0..s.dimension())
                .map(|k| {
                    en.points
                        .iter()
                        .map(|(z, _)| {
                            let zc = z.coords();
                            Ok(o.evaluate(k, zc) * s.evaluate(&input.truth[i], zc)?)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let probs: Vec<f64> = en.points.iter().map(|(_, p)| *p).collect();
    let mean = |a: &[f64]| a.iter().zip(&probs).map(|(x, p)| p * x).collect::<CompensatedSum>().value();
    let cross = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .zip(&probs)
            .map(|((x, y), p)| p * x * y)
            .collect::<CompensatedSum>()
            .value()
    };
    let weight = |i: usize, k: usize| input.representors[i].weights()[k];

    let pair_values: Vec<f64> = (0..v.spec.classifications.len())
        .into_par_iter()
        .map(|idx| {
            let c = &v.spec.classifications[idx];
            let (i, j) = (c.i, c.j);
            let total: f64 = v
                .spec
                .terms(idx)
                .iter()
                .map(|term| {
                    let value = match term.kind {
                        TermKind::Elementary { k, l } => {
                            let (a, b) = (&ry[i][k], &ry[j][l]);
                            weight(i, k) * weight(j, l) * (cross(a, b) - mean(a) * mean(b))
                        }
                        TermKind::DiagonalRaw { k } => {
                            let a = &ry[i][k];
                            weight(i, k) * weight(i, k) * cross(a, a)
                        }
                    };
                    term.weight * value
                })
                .sum();
            if i == j {
                total
            } else {
                2.0 * total
            }
        })
        .collect();
    let nf = n.max(1) as f64;
    Ok(pair_values.iter().copied().collect::<CompensatedSum>().value() / (nf * nf))
}
