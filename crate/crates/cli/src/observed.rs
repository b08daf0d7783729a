//! Observed-data CSV: header `unit,outcome`, one row per unit, then a single
//! row `assignment,z_0,z_1,...` holding the realized assignment.

use std::path::Path;

use riesz_core::Assignment;

use crate::error::LabError;

#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub outcomes: Vec<f64>,
    pub assignment: Assignment,
}

fn parse_f64(field: &str, line: u64) -> Result<f64, LabError> {
    field
        .trim()
        .parse()
        .map_err(|_| LabError::Config(format!("observed data line {line}: not a number: {field:?}")))
}

pub fn parse_observed<R: std::io::Read>(reader: R, n: usize) -> Result<Observed, LabError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(reader);
    let mut outcomes: Vec<Option<f64>> = vec![None; n];
    let mut assignment = None;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let first = record.get(0).unwrap_or("").trim();
        if first == "assignment" {
            if assignment.is_some() {
                return Err(LabError::Config("observed data has more than one assignment row".into()));
            }
            let z = record.iter().skip(1).map(|f| parse_f64(f, line)).collect::<Result<Vec<_>, _>>()?;
            assignment = Some(Assignment::new(z));
            continue;
        }
        if record.len() != 2 {
            return Err(LabError::Config(format!("observed data line {line}: expected unit,outcome")));
        }
        let unit: usize = first
            .parse()
            .map_err(|_| LabError::Config(format!("observed data line {line}: bad unit index {first:?}")))?;
        if unit >= n {
            return Err(LabError::Config(format!("observed data line {line}: unit {unit} out of range")));
        }
        if outcomes[unit].replace(parse_f64(&record[1], line)?).is_some() {
            return Err(LabError::Config(format!("observed data: unit {unit} appears twice")));
        }
    }
    let outcomes = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, y)| y.ok_or_else(|| LabError::Config(format!("observed data: no outcome for unit {i}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let assignment = assignment.ok_or_else(|| LabError::Config("observed data: missing assignment row".into()))?;
    Ok(Observed { outcomes, assignment })
}

pub fn read_observed(path: &Path, n: usize) -> Result<Observed, LabError> {
    let file = std::fs::File::open(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
    parse_observed(file, n)
}

pub fn write_observed<W: std::io::Write>(writer: W, observed: &Observed) -> Result<(), LabError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    w.write_record(["unit", "outcome"])?;
    for (i, y) in observed.outcomes.iter().enumerate() {
        w.write_record([i.to_string(), y.to_string()])?;
    }
    let mut row = vec!["assignment".to_string()];
    row.extend(observed.assignment.coords().iter().map(f64::to_string));
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}
