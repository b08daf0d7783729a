//! Report emission in json, csv or text.
//!
//! CSV column order for a replication report:
//! scenario, n, reps, alpha, estimand, mean_estimate, bias, bias_se,
//! empirical_variance, rmse, mean_variance_estimate, variance_estimate_se,
//! variance_bound, conservativeness_ratio, conservativeness_se, coverage,
//! clamped, sum_q, skipped_pairs, master_seed. Missing values are empty.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::commands::{DiagnoseOutput, EstimateReport, OracleOutput, PositivityOutput};
use crate::config::Format;
use crate::error::LabError;
use crate::simulate::{ReplicateOutcome, ReplicationReport};

pub trait Report: Serialize {
    /// Header and rows for CSV emission.
    fn table(&self) -> (Vec<&'static str>, Vec<Vec<String>>);
    fn text(&self) -> String;
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn opt_text<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| v.to_string())
}

pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String, LabError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render<R: Report>(report: &R, format: Format) -> Result<String, LabError> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(report)? + "\n",
        Format::Csv => {
            let (h, rows) = report.table();
            to_csv(&h, &rows)?
        }
        Format::Text => report.text(),
    })
}

/// Writes to `path`, or returns the rendered text for stdout when `path` is None.
pub fn emit_report<R: Report>(report: &R, format: Format, path: Option<&Path>) -> Result<String, LabError> {
    let out = render(report, format)?;
    if let Some(p) = path {
        std::fs::write(p, &out)?;
    }
    Ok(out)
}

pub fn replicates_csv(outcomes: &[ReplicateOutcome]) -> Result<String, LabError> {
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.index.to_string(),
                o.seed.to_string(),
                o.estimate.to_string(),
                opt(o.variance_estimate),
                opt(o.covered),
            ]
        })
        .collect();
    to_csv(&["replicate", "seed", "estimate", "variance_estimate", "covered"], &rows)
}

impl Report for ReplicationReport {
    fn table(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let header = vec![
            "scenario",
            "n",
            "reps",
            "alpha",
            "estimand",
            "mean_estimate",
            "bias",
            "bias_se",
            "empirical_variance",
            "rmse",
            "mean_variance_estimate",
            "variance_estimate_se",
            "variance_bound",
            "conservativeness_ratio",
            "conservativeness_se",
            "coverage",
            "clamped",
            "sum_q",
            "skipped_pairs",
            "master_seed",
        ];
        let row = vec![
            self.scenario.clone(),
            self.n.to_string(),
            self.reps.to_string(),
            self.alpha.to_string(),
            self.estimand.to_string(),
            opt(self.mean_estimate),
            opt(self.bias),
            opt(self.bias_se),
            opt(self.empirical_variance),
            opt(self.rmse),
            opt(self.mean_variance_estimate),
            opt(self.variance_estimate_se),
            opt(self.variance_bound),
            opt(self.conservativeness_ratio),
            opt(self.conservativeness_se),
            opt(self.coverage),
            self.clamped.to_string(),
            opt(self.sum_q),
            self.skipped_pairs.to_string(),
            self.seeds.master.to_string(),
        ];
        (header, vec![row])
    }

    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} (n = {}, reps = {}, alpha = {})", self.scenario, self.n, self.reps, self.alpha);
        let _ = writeln!(s, "estimand            {}", self.estimand);
        let _ = writeln!(s, "mean estimate       {}", opt_text(self.mean_estimate));
        let _ = writeln!(s, "bias                {} (se {})", opt_text(self.bias), opt_text(self.bias_se));
        let _ = writeln!(s, "empirical variance  {}", opt_text(self.empirical_variance));
        let _ = writeln!(s, "rmse                {}", opt_text(self.rmse));
        let _ = writeln!(s, "variance bound      {}", opt_text(self.variance_bound));
        let _ = writeln!(s, "mean V_hat          {} (se {})", opt_text(self.mean_variance_estimate), opt_text(self.variance_estimate_se));
        let _ = writeln!(
            s,
            "conservativeness    sum Q = {}, ratio mean V_hat / variance = {} (se {})",
            opt_text(self.sum_q),
            opt_text(self.conservativeness_ratio),
            opt_text(self.conservativeness_se)
        );
        let _ = writeln!(s, "coverage            {}", opt_text(self.coverage));
        let _ = writeln!(s, "clamped intervals   {}", self.clamped);
        let _ = writeln!(s, "skipped pairs       {}", self.skipped_pairs);
        let _ = writeln!(s, "seeds               master {}; {}", self.seeds.master, self.seeds.scheme);
        s
    }
}

impl Report for EstimateReport {
    fn table(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let ci = self.interval.as_ref();
        (
            vec![
                "scenario",
                "n",
                "source",
                "seed",
                "estimate",
                "variance_estimate",
                "lower",
                "upper",
                "clamped",
                "sum_q",
                "skipped_pairs",
            ],
            vec![vec![
                self.scenario.clone(),
                self.n.to_string(),
                self.source.clone(),
                opt(self.seed),
                self.estimate.to_string(),
                opt(self.variance_estimate),
                opt(ci.map(|c| c.lower)),
                opt(ci.map(|c| c.upper)),
                opt(ci.map(|c| c.clamped)),
                opt(self.sum_q),
                self.skipped_pairs.to_string(),
            ]],
        )
    }

    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} (n = {}, {} data)", self.scenario, self.n, self.source);
        let _ = writeln!(s, "estimate            {}", self.estimate);
        if let (Some(v), Some(ci)) = (self.variance_estimate, &self.interval) {
            let _ = writeln!(s, "variance estimate   {v}");
            let _ = writeln!(
                s,
                "{:.0}% interval        [{}, {}]{}",
                100.0 * (1.0 - ci.alpha),
                ci.lower,
                ci.upper,
                if ci.clamped { " (negative V_hat clamped)" } else { "" }
            );
            let _ = writeln!(s, "conservativeness    sum Q = {}", opt_text(self.sum_q));
            let _ = writeln!(s, "skipped pairs       {}", self.skipped_pairs);
        }
        s
    }
}

impl Report for PositivityOutput {
    fn table(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let rows = self
            .units
            .iter()
            .map(|u| {
                vec![
                    u.unit.to_string(),
                    u.holds.to_string(),
                    u.witnesses.len().to_string(),
                    u.strong.holds.to_string(),
                    u.strong.smallest_eigenvalue.to_string(),
                    u.strong.largest_eigenvalue.to_string(),
                ]
            })
            .collect();
        (
            vec!["unit", "holds", "witnesses", "strong", "lambda_min", "lambda_max"],
            rows,
        )
    }

    fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}: positivity {}", self.scenario, if self.holds { "holds" } else { "FAILS" });
        for u in &self.units {
            let _ = write!(
                s,
                "unit {}: {} (strong {}, lambda_min {})",
                u.unit,
                if u.holds { "ok" } else { "violated" },
                u.strong.holds,
                u.strong.smallest_eigenvalue
            );
            for w in &u.witnesses {
                let _ = write!(s, " [null direction {} value {}]", w.index, w.value);
            }
            s.push('\n');
        }
        s
    }
}

impl Report for DiagnoseOutput {
    fn table(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let r = &self.report;
        (
            vec![
                "scenario",
                "n",
                "opnorm",
                "lambda_max",
                "lambda_min",
                "davg",
                "dmax",
                "savg",
                "dmax_ratio",
                "savg_ratio",
                "p",
                "q",
                "max_p_outcome",
                "max_q_representor",
                "consistency_bound",
                "worst_case_rmse",
                "exact_variance",
                "exact_rmse",
            ],
            vec![vec![
                self.scenario.clone(),
                r.n.to_string(),
                r.opnorm.to_string(),
                r.lambda_max.to_string(),
                r.lambda_min.to_string(),
                r.davg.to_string(),
                r.dmax.to_string(),
                r.savg.to_string(),
                r.dmax_ratio.to_string(),
                r.savg_ratio.to_string(),
                r.p.to_string(),
                r.q.to_string(),
                opt(r.max_p_outcome),
                r.max_q_representor.to_string(),
                opt(r.consistency_bound),
                opt(r.worst_case_rmse),
                opt(r.exact_variance),
                opt(r.exact_rmse),
            ]],
        )
    }

    fn text(&self) -> String {
        let r = &self.report;
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} (n = {})", self.scenario, r.n);
        let _ = writeln!(s, "operator norm       {} (lambda_min {})", r.opnorm, r.lambda_min);
        let _ = writeln!(s, "neighborhoods       davg {} dmax {} savg {}", r.davg, r.dmax, r.savg);
        let _ = writeln!(s, "finite-n ratios     dmax/n^(1/4) {} savg/n^2 {}", r.dmax_ratio, r.savg_ratio);
        let _ = writeln!(s, "consistency bound   {} at (p, q) = ({}, {})", opt_text(r.consistency_bound), r.p, r.q);
        let _ = writeln!(s, "worst-case rmse     {}", opt_text(r.worst_case_rmse));
        let _ = writeln!(s, "exact rmse          {}", opt_text(r.exact_rmse));
        if let Some(nd) = r.nondegenerate {
            let _ = writeln!(s, "nondegenerate       {nd}");
        }
        s
    }
}

impl Report for OracleOutput {
    fn table(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let r = &self.result;
        (
            vec![
                "scenario",
                "support_size",
                "estimand",
                "mean_estimate",
                "variance",
                "bound",
                "mean_variance_estimate",
                "coverage",
                "alpha",
            ],
            vec![vec![
                self.scenario.clone(),
                self.support_size.to_string(),
                r.estimand.to_string(),
                r.mean_estimate.to_string(),
                r.variance.to_string(),
                opt(r.bound),
                opt(r.mean_variance_estimate),
                opt(r.coverage),
                r.alpha.to_string(),
            ]],
        )
    }

    fn text(&self) -> String {
        let r = &self.result;
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} ({} support points)", self.scenario, self.support_size);
        let _ = writeln!(s, "estimand            {}", r.estimand);
        let _ = writeln!(s, "E[estimate]         {}", r.mean_estimate);
        let _ = writeln!(s, "variance            {}", r.variance);
        let _ = writeln!(s, "variance bound      {}", opt_text(r.bound));
        let _ = writeln!(s, "E[V_hat]            {}", opt_text(r.mean_variance_estimate));
        let _ = writeln!(s, "exact coverage      {}", opt_text(r.coverage));
        s
    }
}
