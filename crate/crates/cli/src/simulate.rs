//! Monte Carlo replication: one pipeline, R seeded assignments, ordered
//! aggregation by replicate index.

use std::time::Instant;

use rayon::prelude::*;
use riesz_core::numeric::CompensatedSum;
use riesz_core::Pipeline;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::LabError;

pub const SEED_SCHEME: &str = "seed_r = splitmix64(master + (r + 1) * 0x9E3779B97F4A7C15), r = 0..reps";
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replicate_seed(master: u64, r: usize) -> u64 {
    splitmix64(master.wrapping_add((r as u64).wrapping_add(1).wrapping_mul(GOLDEN)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub estimate: f64,
    pub variance_estimate: Option<f64>,
    pub covered: Option<bool>,
    pub clamped: bool,
}

pub fn replicate(
    pipeline: &Pipeline,
    truth: &[Vec<f64>],
    estimand: f64,
    alpha: f64,
    master: u64,
    index: usize,
) -> Result<ReplicateOutcome, LabError> {
    let seed = replicate_seed(master, index);
    let z = pipeline.design().sample(seed);
    let y = pipeline.outcomes(truth, &z)?;
    let est = pipeline.estimate(&z, &y)?;
    let (mut variance_estimate, mut covered, mut clamped) = (None, None, false);
    if pipeline.bound_spec().is_some() {
        let v = pipeline.variance_estimate(&z, &y)?;
        let ci = pipeline.interval(&est, &v, alpha)?;
        variance_estimate = Some(v.value);
        covered = Some(ci.contains(estimand));
        clamped = ci.clamped;
    }
    Ok(ReplicateOutcome {
        index,
        seed,
        estimate: est.value,
        variance_estimate,
        covered,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub scheme: String,
    pub count: usize,
    pub first: Option<u64>,
    pub last: Option<u64>,
}

impl SeedRecord {
    pub fn new(master: u64, count: usize) -> Self {
        SeedRecord {
            master,
            scheme: SEED_SCHEME.to_string(),
            count,
            first: (count > 0).then(|| replicate_seed(master, 0)),
            last: (count > 0).then(|| replicate_seed(master, count - 1)),
        }
    }
}

/// Aggregates over replicates; moments of V_hat are only present when the
/// variance machinery was built. Runtime is kept out of every emitted format
/// so that reports are byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub scenario: String,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub estimand: f64,
    pub mean_estimate: Option<f64>,
    pub bias: Option<f64>,
    /// sqrt(empirical variance / reps)
    pub bias_se: Option<f64>,
    pub empirical_variance: Option<f64>,
    pub rmse: Option<f64>,
    pub mean_variance_estimate: Option<f64>,
    pub variance_estimate_se: Option<f64>,
    /// Variance bound at the truth.
    pub variance_bound: Option<f64>,
    /// mean V_hat / empirical variance
    pub conservativeness_ratio: Option<f64>,
    /// Delta-method Monte Carlo error of the ratio.
    pub conservativeness_se: Option<f64>,
    pub coverage: Option<f64>,
    pub clamped: usize,
    pub sum_q: Option<u64>,
    pub skipped_pairs: usize,
    pub seeds: SeedRecord,
    pub config: ScenarioConfig,
    #[serde(skip)]
    pub runtime_secs: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>, count: usize) -> f64 {
    xs.collect::<CompensatedSum>().value() / count as f64
}

/// Replicates must be sorted by index; the result does not depend on the
/// order in which they were computed.
pub fn aggregate(
    config: &ScenarioConfig,
    pipeline: &Pipeline,
    truth: &[Vec<f64>],
    outcomes: &[ReplicateOutcome],
) -> Result<ReplicationReport, LabError> {
    let r = outcomes.len();
    debug_assert!(outcomes.iter().enumerate().all(|(k, o)| o.index == k));
    let estimand = pipeline.estimand(truth)?;
    let spec = pipeline.bound_spec();
    let mut report = ReplicationReport {
        scenario: config.name.clone(),
        n: pipeline.n(),
        reps: r,
        alpha: config.alpha,
        estimand,
        mean_estimate: None,
        bias: None,
        bias_se: None,
        empirical_variance: None,
        rmse: None,
        mean_variance_estimate: None,
        variance_estimate_se: None,
        variance_bound: spec.map(|_| pipeline.bound_value(truth)).transpose()?,
        conservativeness_ratio: None,
        conservativeness_se: None,
        coverage: None,
        clamped: outcomes.iter().filter(|o| o.clamped).count(),
        sum_q: spec.map(|s| s.total_q()),
        skipped_pairs: spec.map_or(0, |s| s.skipped_pairs),
        seeds: SeedRecord::new(config.seed, r),
        config: config.clone(),
        runtime_secs: None,
    };
    if r == 0 {
        return Ok(report);
    }
    let m = mean(outcomes.iter().map(|o| o.estimate), r);
    report.mean_estimate = Some(m);
    report.bias = Some(m - estimand);
    report.rmse = Some(mean(outcomes.iter().map(|o| (o.estimate - estimand).powi(2)), r).sqrt());
    let (var, m4) = if r > 1 {
        let v = outcomes.iter().map(|o| (o.estimate - m).powi(2)).collect::<CompensatedSum>().value() / (r - 1) as f64;
        (Some(v), Some(mean(outcomes.iter().map(|o| (o.estimate - m).powi(4)), r)))
    } else {
        (None, None)
    };
    report.empirical_variance = var;
    report.bias_se = var.map(|v| (v / r as f64).sqrt());

    let vhats: Option<Vec<f64>> = outcomes.iter().map(|o| o.variance_estimate).collect();
    if let Some(vh) = vhats {
        let mv = mean(vh.iter().copied(), r);
        report.mean_variance_estimate = Some(mv);
        let covered = outcomes.iter().filter(|o| o.covered == Some(true)).count();
        report.coverage = Some(covered as f64 / r as f64);
        if r > 1 {
            let sv = vh.iter().map(|x| (x - mv).powi(2)).collect::<CompensatedSum>().value() / (r - 1) as f64;
            let se_a = (sv / r as f64).sqrt();
            report.variance_estimate_se = Some(se_a);
            if let (Some(v), Some(m4)) = (var, m4) {
                if v > 0.0 {
                    let ratio = mv / v;
                    let se_b = ((m4 - v * v).max(0.0) / r as f64).sqrt();
                    report.conservativeness_ratio = Some(ratio);
                    let rel_a = if mv != 0.0 { se_a / mv } else { 0.0 };
                    report.conservativeness_se = Some(ratio.abs() * (rel_a.powi(2) + (se_b / v).powi(2)).sqrt());
                }
            }
        }
    }
    Ok(report)
}

/// Builds nothing; replays `config.reps` assignments through `pipeline`.
pub fn run_replicates(
    config: &ScenarioConfig,
    pipeline: &Pipeline,
    truth: &[Vec<f64>],
) -> Result<Vec<ReplicateOutcome>, LabError> {
    let estimand = pipeline.estimand(truth)?;
    (0..config.reps)
        .into_par_iter()
        .map(|k| replicate(pipeline, truth, estimand, config.alpha, config.seed, k))
        .collect()
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<(ReplicationReport, Vec<ReplicateOutcome>), LabError> {
    let start = Instant::now();
    let scenario = config.build()?;
    let truth = scenario
        .truth
        .clone()
        .ok_or_else(|| LabError::Config("simulation needs truth coefficients".into()))?;
    let pipeline = crate::commands::build_pipeline(config, &scenario, true)?;
    let outcomes = run_replicates(config, &pipeline, &truth)?;
    let mut report = aggregate(config, &pipeline, &truth, &outcomes)?;
    report.runtime_secs = Some(start.elapsed().as_secs_f64());
    Ok((report, outcomes))
}
