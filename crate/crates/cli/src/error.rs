use riesz_core::PositivityReport;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),

    #[error("positivity violated (units {units:?}): {} witnesses", report.witnesses.len())]
    Positivity {
        units: Vec<usize>,
        report: Box<PositivityReport>,
    },

    #[error(transparent)]
    Core(riesz_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<riesz_core::Error> for LabError {
    fn from(e: riesz_core::Error) -> Self {
        match e {
            riesz_core::Error::PositivityViolated(report) => LabError::Positivity {
                units: Vec::new(),
                report,
            },
            riesz_core::Error::InvalidDesign(m) | riesz_core::Error::InvalidSpace(m) => LabError::Config(m),
            riesz_core::Error::InvalidAlpha(a) => LabError::Config(format!("alpha must lie in (0, 1), got {a}")),
            other => LabError::Core(other),
        }
    }
}

impl LabError {
    /// 2 for positivity failures, 3 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Positivity { .. } => 2,
            LabError::Config(_) | LabError::Json(_) => 3,
            _ => 1,
        }
    }
}
