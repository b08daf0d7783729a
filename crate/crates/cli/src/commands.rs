//! Pipeline construction and the single-shot subcommands.

use riesz_core::diagnostics::DiagnosticsReport;
use riesz_core::oracle::{oracle_run, OracleInput, OracleResult, OracleVariance};
use riesz_core::positivity::{test_strong_positivity, StrongPositivity, Witness};
use riesz_core::{ConfidenceInterval, Pipeline, PipelineOptions};
use serde::{Deserialize, Serialize};

use crate::config::{Scenario, ScenarioConfig};
use crate::error::LabError;
use crate::observed::read_observed;

fn options(config: &ScenarioConfig, with_variance: bool, enforce: bool) -> PipelineOptions {
    PipelineOptions {
        tol: config.tol,
        enforce_positivity: enforce,
        with_variance,
        skip_pairs: config.skip_pairs,
        ..PipelineOptions::default()
    }
}

fn build_raw(config: &ScenarioConfig, scenario: &Scenario, with_variance: bool, enforce: bool) -> riesz_core::Result<Pipeline> {
    Pipeline::build(
        scenario.design.clone(),
        scenario.spaces.clone(),
        scenario.functionals.clone(),
        options(config, with_variance, enforce),
    )
}

/// Builds the pipeline; a positivity failure names the offending units.
pub fn build_pipeline(config: &ScenarioConfig, scenario: &Scenario, with_variance: bool) -> Result<Pipeline, LabError> {
    match build_raw(config, scenario, with_variance, config.enforce_positivity) {
        Err(riesz_core::Error::PositivityViolated(report)) => {
            let units = build_raw(config, scenario, false, false)
                .map(|pl| {
                    pl.positivity_reports()
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| !r.holds)
                        .map(|(i, _)| i)
                        .collect()
                })
                .unwrap_or_default();
            Err(LabError::Positivity { units, report })
        }
        other => Ok(other?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub scenario: String,
    pub n: usize,
    /// "observed" or "sampled"
    pub source: String,
    pub seed: Option<u64>,
    pub estimate: f64,
    pub variance_estimate: Option<f64>,
    pub interval: Option<ConfidenceInterval>,
    pub sum_q: Option<u64>,
    pub skipped_pairs: usize,
    pub assignment: Vec<f64>,
    pub outcomes: Vec<f64>,
}

/// Estimates from the observed-data file when configured, otherwise from an
/// assignment sampled with `config.seed` and outcomes generated by the truth.
pub fn run_estimate(config: &ScenarioConfig, with_variance: bool) -> Result<EstimateReport, LabError> {
    let scenario = config.build()?;
    let pipeline = build_pipeline(config, &scenario, with_variance)?;
    let (source, seed, z, y) = match &config.observed {
        Some(path) => {
            let obs = read_observed(path, config.n)?;
            if obs.assignment.dimension() != scenario.design.dimension() {
                return Err(LabError::Config(format!(
                    "observed assignment has {} coordinates, design has {}",
                    obs.assignment.dimension(),
                    scenario.design.dimension()
                )));
            }
            ("observed", None, obs.assignment, obs.outcomes)
        }
        None => {
            let truth = scenario
                .truth
                .as_ref()
                .ok_or_else(|| LabError::Config("estimate needs an observed file or truth coefficients".into()))?;
            let z = scenario.design.sample(config.seed);
            let y = pipeline.outcomes(truth, &z)?;
            ("sampled", Some(config.seed), z, y)
        }
    };
    let est = pipeline.estimate(&z, &y)?;
    let (mut variance_estimate, mut interval) = (None, None);
    if with_variance {
        let v = pipeline.variance_estimate(&z, &y)?;
        interval = Some(pipeline.interval(&est, &v, config.alpha)?);
        variance_estimate = Some(v.value);
    }
    let spec = pipeline.bound_spec();
    Ok(EstimateReport {
        scenario: config.name.clone(),
        n: config.n,
        source: source.to_string(),
        seed,
        estimate: est.value,
        variance_estimate,
        interval,
        sum_q: spec.map(|s| s.total_q()),
        skipped_pairs: spec.map_or(0, |s| s.skipped_pairs),
        assignment: z.into_inner(),
        outcomes: y,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitPositivity {
    pub unit: usize,
    pub holds: bool,
    pub witnesses: Vec<Witness>,
    pub tolerance: f64,
    pub strong: StrongPositivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityOutput {
    pub scenario: String,
    pub holds: bool,
    pub units: Vec<UnitPositivity>,
}

pub fn run_positivity(config: &ScenarioConfig) -> Result<PositivityOutput, LabError> {
    let scenario = config.build()?;
    let pipeline = build_raw(config, &scenario, false, false)?;
    let units = pipeline
        .positivity_reports()
        .iter()
        .zip(pipeline.spaces())
        .enumerate()
        .map(|(unit, (r, space))| {
            Ok(UnitPositivity {
                unit,
                holds: r.holds,
                witnesses: r.witnesses.clone(),
                tolerance: r.tolerance,
                strong: test_strong_positivity(space, pipeline.provider(), config.tol)?,
            })
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    Ok(PositivityOutput {
        scenario: config.name.clone(),
        holds: units.iter().all(|u| u.holds),
        units,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseOutput {
    pub scenario: String,
    #[serde(flatten)]
    pub report: DiagnosticsReport,
}

pub fn run_diagnose(config: &ScenarioConfig, p: f64, q: f64, nondegeneracy: Option<f64>) -> Result<DiagnoseOutput, LabError> {
    let scenario = config.build()?;
    let pipeline = build_pipeline(config, &scenario, true)?;
    let report = pipeline.diagnostics(scenario.truth.as_deref(), p, q, nondegeneracy)?;
    Ok(DiagnoseOutput {
        scenario: config.name.clone(),
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutput {
    pub scenario: String,
    pub support_size: usize,
    #[serde(flatten)]
    pub result: OracleResult,
}

pub fn oracle_for(config: &ScenarioConfig, scenario: &Scenario, pipeline: &Pipeline, truth: &[Vec<f64>]) -> Result<OracleResult, LabError> {
    let variance = pipeline.bound_spec().map(|spec| OracleVariance {
        orthos: pipeline.orthos(),
        spec,
        second_order: pipeline.second_order(),
    });
    Ok(oracle_run(&OracleInput {
        design: &scenario.design,
        spaces: &scenario.spaces,
        functionals: &scenario.functionals,
        truth,
        representors: pipeline.representors(),
        variance,
        alpha: config.alpha,
        cap: riesz_core::designs::DEFAULT_ENUMERATION_CAP,
    })?)
}

pub fn run_oracle(config: &ScenarioConfig, with_variance: bool) -> Result<OracleOutput, LabError> {
    let scenario = config.build()?;
    let truth = scenario
        .truth
        .clone()
        .ok_or_else(|| LabError::Config("oracle needs truth coefficients".into()))?;
    let pipeline = build_pipeline(config, &scenario, with_variance)?;
    let result = oracle_for(config, &scenario, &pipeline, &truth)?;
    Ok(OracleOutput {
        scenario: config.name.clone(),
        support_size: result.distribution.len(),
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DesignDecl, ScenarioConfig};
    use crate::scenarios::builtin;

    #[test]
    fn reference_oracle() {
        let out = run_oracle(&builtin("reference").unwrap(), true).unwrap();
        assert_eq!(out.support_size, 2);
        assert!((out.result.variance - 4.0).abs() < 1e-12);
        assert!((out.result.bound.unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_design_fails_with_units() {
        let mut cfg: ScenarioConfig = builtin("sutva-small").unwrap();
        cfg.design = DesignDecl::Bernoulli {
            p: Some(1.0),
            probabilities: None,
        };
        match run_estimate(&cfg, true) {
            Err(LabError::Positivity { units, report }) => {
                assert_eq!(units, (0..cfg.n).collect::<Vec<_>>());
                assert!(!report.witnesses.is_empty());
            }
            other => panic!("expected positivity failure, got {other:?}"),
        }
        let p = run_positivity(&cfg).unwrap();
        assert!(!p.holds);
        assert!(p.units.iter().all(|u| !u.strong.holds));
    }

    #[test]
    fn sampled_estimate_is_seeded() {
        let cfg = builtin("lim-cycle").unwrap();
        let a = run_estimate(&cfg, true).unwrap();
        assert_eq!(a, run_estimate(&cfg, true).unwrap());
        assert!(a.interval.unwrap().radius >= 0.0);
        assert_eq!(a.seed, Some(cfg.seed));
    }
}
