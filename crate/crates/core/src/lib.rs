//! Design-based estimation of averaged unit-level effect functionals with
//! Riesz representors, conservative variance estimates and an exhaustive
//! enumeration oracle.

pub mod designs;
pub mod diagnostics;
pub mod error;
pub mod functionals;
pub mod model_spaces;
pub mod numeric;
pub mod oracle;
pub mod orthogonalization;
pub mod pipeline;
pub mod positivity;
pub mod quadrature;
pub mod riesz;
pub mod variance;

pub use designs::{Assignment, CoordinateLaw, Design, DesignKind, Factor, FnFactor, MomentMode, MomentProvider};
pub use error::{Error, Result};
pub use functionals::{DesignPath, EffectFunctional, FunctionalKind};
pub use model_spaces::{BasisFunction, BasisKind, ExposureMapping, Graph, ModelSpace, NeighborhoodSummary, SpaceFunction};
pub use orthogonalization::{OrthoBasis, TensorOrthoBasis};
pub use pipeline::{Pipeline, PipelineOptions};
pub use positivity::PositivityReport;
pub use riesz::{Estimate, RieszRepresentor};
pub use variance::{ConfidenceInterval, VarianceEstimate};
