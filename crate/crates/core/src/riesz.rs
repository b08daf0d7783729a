//! First-order Riesz representors psi_i = sum_{k in B_o} theta(rho_k) rho_k,
//! stored in the original basis, and the Riesz point estimator.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::designs::Assignment;
use crate::error::{Error, Result};
use crate::functionals::EffectFunctional;
use crate::model_spaces::ModelSpace;
use crate::orthogonalization::OrthoBasis;
use crate::positivity::{positivity_from_values, PositivityReport};

#[derive(Debug, Clone)]
pub struct RieszRepresentor {
    unit: usize,
    space: Arc<ModelSpace>,
    beta: Vec<f64>,
    weights: Vec<f64>,
    positivity: PositivityReport,
}

/// Builds the representor; with `enforce` a positivity failure is an error,
/// otherwise the null directions are silently dropped.
pub fn build_representor(ortho: &OrthoBasis, functional: &EffectFunctional, enforce: bool) -> Result<RieszRepresentor> {
    let values = functional.basis_values(ortho.space())?;
    representor_from_values(ortho, &values, enforce)
}

/// As [`build_representor`], from theta(phi_s) values.
pub fn representor_from_values(ortho: &OrthoBasis, theta_values: &[f64], enforce: bool) -> Result<RieszRepresentor> {
    let positivity = positivity_from_values(ortho, theta_values)?;
    if enforce && !positivity.holds {
        return Err(Error::PositivityViolated(Box::new(positivity)));
    }
    let d = ortho.dimension();
    let a = ortho.coefficients();
    let mut weights = vec![0.0; d];
    let mut beta = vec![0.0; d];
    for &k in ortho.b_o() {
        let w: f64 = (0..=k).map(|s| a[(k, s)] * theta_values[s]).sum();
        weights[k] = w;
        if w == 0.0 {
            continue;
        }
        for s in 0..=k {
            beta[s] += w * a[(k, s)];
        }
    }
    Ok(RieszRepresentor {
        unit: ortho.space().unit(),
        space: ortho.space().clone(),
        beta,
        weights,
        positivity,
    })
}

impl RieszRepresentor {
    pub fn unit(&self) -> usize {
        self.unit
    }

    pub fn space(&self) -> &Arc<ModelSpace> {
        &self.space
    }

    /// Coefficients over the original basis.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// theta(rho_k) for k in B_o, zero elsewhere; indexed by basis position.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn positivity(&self) -> &PositivityReport {
        &self.positivity
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.space
            .basis()
            .iter()
            .zip(&self.beta)
            .filter(|(_, b)| **b != 0.0)
            .map(|(phi, b)| b * phi.evaluate(z))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// psi_i(Z) * Y_i
    pub terms: Vec<f64>,
    pub assignment: Assignment,
    pub outcomes: Vec<f64>,
}

pub fn point_estimate(reps: &[RieszRepresentor], assignment: &Assignment, outcomes: &[f64]) -> Result<Estimate> {
    if outcomes.len() != reps.len() {
        return Err(Error::LengthMismatch {
            expected: reps.len(),
            found: outcomes.len(),
        });
    }
    let z = assignment.coords();
    let terms: Vec<f64> = reps.iter().zip(outcomes).map(|(r, y)| r.evaluate(z) * y).collect();
    let value = if terms.is_empty() {
        0.0
    } else {
        terms.iter().sum::<f64>() / terms.len() as f64
    };
    Ok(Estimate {
        value,
        terms,
        assignment: assignment.clone(),
        outcomes: outcomes.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginEstimate {
    /// Y * rho_l(Z) for l in B_o, in B_o order.
    pub coefficients: Vec<f64>,
    pub effect: f64,
}

/// Plug-in view: estimate the orthonormal outcome coefficients, then apply
/// the functional to the estimated outcome.
pub fn plugin_outcome_estimate(
    ortho: &OrthoBasis,
    rep: &RieszRepresentor,
    assignment: &Assignment,
    outcome: f64,
) -> PluginEstimate {
    let z = assignment.coords();
    let coefficients: Vec<f64> = ortho.b_o().iter().map(|&k| outcome * ortho.evaluate(k, z)).collect();
    let effect = ortho
        .b_o()
        .iter()
        .zip(&coefficients)
        .map(|(&k, a)| a * rep.weights()[k])
        .sum();
    PluginEstimate { coefficients, effect }
}
