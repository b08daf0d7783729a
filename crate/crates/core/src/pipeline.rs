//! End-to-end construction: orthonormal bases, representors, pair-level
//! second-order work, bound assembly and second-order representors.

use std::sync::Arc;

use rayon::prelude::*;

use crate::designs::{Assignment, Design, MomentProvider, DEFAULT_ENUMERATION_CAP};
use crate::diagnostics::{
    consistency_bound, exact_variance_quadratic, max_p_norm, operator_norm, variance_matrix, worst_case_rmse,
    DiagnosticsReport, VarianceMatrix,
};
use crate::error::{Error, Result};
use crate::functionals::EffectFunctional;
use crate::model_spaces::{conservative_neighborhoods, dependency_neighborhoods, ModelSpace, NeighborhoodSummary, SpaceFunction};
use crate::orthogonalization::{gram_schmidt, OrthoBasis, PairMoments, TensorOrthoBasis, DEFAULT_TOL};
use crate::positivity::PositivityReport;
use crate::riesz::{point_estimate, representor_from_values, Estimate, RieszRepresentor};
use crate::variance::{
    apply_tensor, assemble_bound, build_second_order_representor, classify_elementary, confidence_interval,
    second_order_neighbor_skip, simple_tensor, variance_estimate, ConfidenceInterval, ElementaryTable,
    PairClassification, PairPlan, SecondOrderRepresentor, VarianceBoundSpec, VarianceEstimate,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub tol: f64,
    pub enforce_positivity: bool,
    pub with_variance: bool,
    /// Skip pairs with provably zero covariance functionals.
    pub skip_pairs: bool,
    pub enumeration_cap: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            tol: DEFAULT_TOL,
            enforce_positivity: true,
            with_variance: true,
            skip_pairs: true,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// Second-order objects for one kept pair (i <= j).
#[derive(Debug, Clone)]
pub struct PairWork {
    pub tortho: TensorOrthoBasis,
    pub table: ElementaryTable,
    pub bound: Vec<f64>,
}

#[derive(Debug)]
pub struct Pipeline {
    design: Arc<Design>,
    provider: MomentProvider,
    spaces: Vec<Arc<ModelSpace>>,
    functionals: Vec<EffectFunctional>,
    theta_values: Vec<Vec<f64>>,
    orthos: Vec<OrthoBasis>,
    reps: Vec<RieszRepresentor>,
    plan: PairPlan,
    pairs: Vec<PairWork>,
    bound: Option<VarianceBoundSpec>,
    second_order: Vec<SecondOrderRepresentor>,
}

impl Pipeline {
    /// One functional per unit.
    pub fn build(
        design: Arc<Design>,
        spaces: Vec<Arc<ModelSpace>>,
        functionals: Vec<EffectFunctional>,
        options: PipelineOptions,
    ) -> Result<Self> {
        if spaces.len() != functionals.len() {
            return Err(Error::LengthMismatch {
                expected: spaces.len(),
                found: functionals.len(),
            });
        }
        let provider = MomentProvider::exact(design.clone()).with_enumeration_cap(options.enumeration_cap);

        let first: Vec<(OrthoBasis, Vec<f64>, RieszRepresentor)> = spaces
            .par_iter()
            .zip(functionals.par_iter())
            .map(|(space, theta)| {
                let ortho = gram_schmidt(space.clone(), &provider, options.tol)?;
                let values = theta.basis_values(space)?;
                let rep = representor_from_values(&ortho, &values, options.enforce_positivity)?;
                Ok((ortho, values, rep))
            })
            .collect::<Result<_>>()?;
        let mut orthos = Vec::with_capacity(first.len());
        let mut theta_values = Vec::with_capacity(first.len());
        let mut reps = Vec::with_capacity(first.len());
        for (o, v, r) in first {
            orthos.push(o);
            theta_values.push(v);
            reps.push(r);
        }

        let plan = if options.skip_pairs {
            second_order_neighbor_skip(&spaces, &design)?
        } else {
            PairPlan::all(spaces.len())
        };

        let mut pipeline = Pipeline {
            design,
            provider,
            spaces,
            functionals,
            theta_values,
            orthos,
            reps,
            plan,
            pairs: Vec::new(),
            bound: None,
            second_order: Vec::new(),
        };
        if options.with_variance {
            pipeline.build_variance(options)?;
        }
        Ok(pipeline)
    }

    fn build_variance(&mut self, options: PipelineOptions) -> Result<()> {
        let upper = self.plan.upper_pairs();
        let staged: Vec<(TensorOrthoBasis, ElementaryTable, PairClassification)> = upper
            .par_iter()
            .map(|&(i, j)| {
                let pm = PairMoments::compute(i, &self.spaces[i], j, &self.spaces[j], &self.provider)?;
                let tortho = TensorOrthoBasis::from_moments(&pm, options.tol);
                let table = ElementaryTable::compute(&pm, &self.orthos[i], &self.reps[i], &self.orthos[j], &self.reps[j]);
                let pos = classify_elementary(&tortho, &table)?;
                Ok((tortho, table, PairClassification { i, j, pos }))
            })
            .collect::<Result<_>>()?;
        let dims: Vec<usize> = self.spaces.iter().map(|s| s.dimension()).collect();
        let mut classifications = Vec::with_capacity(staged.len());
        let mut work = Vec::with_capacity(staged.len());
        for (t, e, c) in staged {
            classifications.push(c);
            work.push((t, e));
        }
        let spec = assemble_bound(self.spaces.len(), &dims, classifications, self.plan.skipped_count());
        let built: Vec<(PairWork, SecondOrderRepresentor)> = work
            .into_par_iter()
            .enumerate()
            .map(|(idx, (tortho, table))| {
                let bound = spec.bound_table(idx, &table);
                let rep = build_second_order_representor(
                    &bound,
                    &tortho,
                    self.spaces[table.i].clone(),
                    self.spaces[table.j].clone(),
                    options.enforce_positivity,
                )?;
                Ok((PairWork { tortho, table, bound }, rep))
            })
            .collect::<Result<_>>()?;
        let (pairs, second_order) = built.into_iter().unzip();
        self.pairs = pairs;
        self.second_order = second_order;
        self.bound = Some(spec);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.spaces.len()
    }

    pub fn design(&self) -> &Arc<Design> {
        &self.design
    }

    pub fn provider(&self) -> &MomentProvider {
        &self.provider
    }

    pub fn spaces(&self) -> &[Arc<ModelSpace>] {
        &self.spaces
    }

    pub fn functionals(&self) -> &[EffectFunctional] {
        &self.functionals
    }

    pub fn theta_values(&self) -> &[Vec<f64>] {
        &self.theta_values
    }

    pub fn orthos(&self) -> &[OrthoBasis] {
        &self.orthos
    }

    pub fn representors(&self) -> &[RieszRepresentor] {
        &self.reps
    }

    pub fn positivity_reports(&self) -> Vec<&PositivityReport> {
        self.reps.iter().map(|r| r.positivity()).collect()
    }

    pub fn plan(&self) -> &PairPlan {
        &self.plan
    }

    pub fn pairs(&self) -> &[PairWork] {
        &self.pairs
    }

    pub fn bound_spec(&self) -> Option<&VarianceBoundSpec> {
        self.bound.as_ref()
    }

    pub fn second_order(&self) -> &[SecondOrderRepresentor] {
        &self.second_order
    }

    pub fn estimate(&self, assignment: &Assignment, outcomes: &[f64]) -> Result<Estimate> {
        point_estimate(&self.reps, assignment, outcomes)
    }

    pub fn variance_estimate(&self, assignment: &Assignment, outcomes: &[f64]) -> Result<VarianceEstimate> {
        let spec = self.bound.as_ref().ok_or(Error::VarianceUnavailable)?;
        variance_estimate(&self.second_order, assignment, outcomes, spec.skipped_pairs)
    }

    pub fn interval(&self, estimate: &Estimate, variance: &VarianceEstimate, alpha: f64) -> Result<ConfidenceInterval> {
        confidence_interval(estimate.value, variance.value, alpha)
    }

    fn check_truth(&self, truth: &[Vec<f64>]) -> Result<()> {
        if truth.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                found: truth.len(),
            });
        }
        for (t, s) in truth.iter().zip(&self.spaces) {
            if t.len() != s.dimension() {
                return Err(Error::LengthMismatch {
                    expected: s.dimension(),
                    found: t.len(),
                });
            }
        }
        Ok(())
    }

    /// n^{-1} sum_i theta_i(y_i)
    pub fn estimand(&self, truth: &[Vec<f64>]) -> Result<f64> {
        self.check_truth(truth)?;
        let total: f64 = self
            .theta_values
            .iter()
            .zip(truth)
            .map(|(v, c)| v.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        Ok(total / self.n().max(1) as f64)
    }

    /// Realized outcomes y_i(z) for coefficient vectors `truth`.
    pub fn outcomes(&self, truth: &[Vec<f64>], assignment: &Assignment) -> Result<Vec<f64>> {
        self.check_truth(truth)?;
        self.spaces
            .iter()
            .zip(truth)
            .map(|(s, c)| s.evaluate(c, assignment.coords()))
            .collect()
    }

    /// VB = n^{-2} sum_{i,j} B_{i,j}(y_i (x) y_j)
    pub fn bound_value(&self, truth: &[Vec<f64>]) -> Result<f64> {
        self.check_truth(truth)?;
        if self.bound.is_none() {
            return Err(Error::VarianceUnavailable);
        }
        let mut total = 0.0;
        for w in &self.pairs {
            let (i, j) = (w.table.i, w.table.j);
            let v = apply_tensor(&w.bound, &simple_tensor(&truth[i], &truth[j]))?;
            total += if i == j { v } else { 2.0 * v };
        }
        let n = self.n().max(1) as f64;
        Ok(total / (n * n))
    }

    pub fn variance_matrix(&self) -> Result<VarianceMatrix> {
        if self.bound.is_none() {
            return Err(Error::VarianceUnavailable);
        }
        let tables: Vec<ElementaryTable> = self.pairs.iter().map(|w| w.table.clone()).collect();
        Ok(variance_matrix(&self.orthos, &tables))
    }

    pub fn orthonormal_coordinates(&self, truth: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_truth(truth)?;
        self.orthos
            .iter()
            .zip(truth)
            .map(|(o, c)| o.orthonormal_coordinates(c))
            .collect()
    }

    /// Var(tau_hat) through the H quadratic form.
    pub fn exact_variance(&self, truth: &[Vec<f64>]) -> Result<f64> {
        let h = self.variance_matrix()?;
        exact_variance_quadratic(&h, &self.orthonormal_coordinates(truth)?)
    }

    pub fn neighborhoods(&self) -> Result<NeighborhoodSummary> {
        match dependency_neighborhoods(&self.spaces, &self.design) {
            Err(Error::DependenceUnknown) => Ok(conservative_neighborhoods(self.n())),
            other => other,
        }
    }

    /// Diagnostics at exponents (p, q); outcome-dependent entries need `truth`.
    pub fn diagnostics(&self, truth: Option<&[Vec<f64>]>, p: f64, q: f64, nondegeneracy: Option<f64>) -> Result<DiagnosticsReport> {
        let n = self.n();
        let h = self.variance_matrix()?;
        let opnorm = operator_norm(&h);
        let summary = self.neighborhoods()?;
        let (dmax_ratio, savg_ratio) = DiagnosticsReport::neighborhood_ratios(&summary);
        let psi: Vec<SpaceFunction> = self
            .reps
            .iter()
            .map(|r| SpaceFunction::new(r.space().clone(), r.beta().to_vec()))
            .collect::<Result<_>>()?;
        let psi_refs: Vec<&dyn crate::designs::Factor> = psi.iter().map(|f| f as _).collect();
        let max_q_representor = max_p_norm(&psi_refs, q, &self.provider)?;

        let mut report = DiagnosticsReport {
            n,
            opnorm,
            lambda_max: h.lambda_max(),
            lambda_min: h.lambda_min(),
            davg: summary.davg,
            dmax: summary.dmax,
            savg: summary.savg,
            dmax_ratio,
            savg_ratio,
            p,
            q,
            max_p_outcome: None,
            max_q_representor,
            consistency_bound: None,
            outcome_scale: None,
            worst_case_rmse: None,
            exact_variance: None,
            exact_rmse: None,
            nondegenerate: None,
        };
        if let Some(truth) = truth {
            let ys: Vec<SpaceFunction> = self
                .spaces
                .iter()
                .zip(truth)
                .map(|(s, c)| SpaceFunction::new(s.clone(), c.clone()))
                .collect::<Result<_>>()?;
            let y_refs: Vec<&dyn crate::designs::Factor> = ys.iter().map(|f| f as _).collect();
            let maxp = max_p_norm(&y_refs, p, &self.provider)?;
            let coords = self.orthonormal_coordinates(truth)?;
            let scale = (coords.iter().flatten().map(|c| c * c).sum::<f64>() / n.max(1) as f64).sqrt();
            let var = exact_variance_quadratic(&h, &coords)?;
            report.max_p_outcome = Some(maxp);
            report.consistency_bound = Some(consistency_bound(summary.davg, maxp, max_q_representor, n, p, q)?);
            report.outcome_scale = Some(scale);
            report.worst_case_rmse = Some(worst_case_rmse(opnorm, scale, n));
            report.exact_variance = Some(var);
            report.exact_rmse = Some(var.max(0.0).sqrt());
            report.nondegenerate = nondegeneracy.map(|c| n as f64 * var >= c);
        }
        Ok(report)
    }
}
