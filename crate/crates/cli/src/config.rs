//! Scenario configuration: one JSON document describing the whole experiment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riesz_core::{
    Assignment, CoordinateLaw, Design, DesignPath, EffectFunctional, ExposureMapping, Graph, ModelSpace,
};
use serde::{Deserialize, Serialize};

use crate::error::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignDecl {
    /// Common probability `p`, or one probability per coordinate.
    Bernoulli {
        #[serde(default)]
        p: Option<f64>,
        #[serde(default)]
        probabilities: Option<Vec<f64>>,
    },
    CompleteRandomization { treated: usize },
    Enumerated {
        support: Vec<SupportPoint>,
        #[serde(default)]
        independent_coordinates: bool,
    },
    Continuous { laws: Vec<CoordinateLaw> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportPoint {
    pub z: Vec<f64>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphDecl {
    Cycle,
    Adjacency { neighbors: Vec<Vec<usize>> },
}

/// Per-unit model space; `coord` defaults to the unit's own coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceDecl {
    Sutva,
    SutvaLinear,
    LinearInMeans,
    /// Four levels: own treatment crossed with any treated neighbor.
    Exposure,
    Polynomial {
        degree: u32,
        #[serde(default)]
        coord: Option<usize>,
    },
    Chebyshev {
        degree: u32,
        #[serde(default)]
        coord: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssignmentDecl {
    Named(NamedAssignment),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedAssignment {
    Ones,
    Zeros,
}

impl AssignmentDecl {
    fn resolve(&self, dimension: usize) -> Result<Assignment, LabError> {
        match self {
            AssignmentDecl::Named(NamedAssignment::Ones) => Ok(Assignment::ones(dimension)),
            AssignmentDecl::Named(NamedAssignment::Zeros) => Ok(Assignment::zeros(dimension)),
            AssignmentDecl::Explicit(v) if v.len() == dimension => Ok(Assignment::new(v.clone())),
            AssignmentDecl::Explicit(v) => Err(LabError::Config(format!(
                "assignment has {} coordinates, design has {dimension}",
                v.len()
            ))),
        }
    }
}

fn ones() -> AssignmentDecl {
    AssignmentDecl::Named(NamedAssignment::Ones)
}

fn zeros() -> AssignmentDecl {
    AssignmentDecl::Named(NamedAssignment::Zeros)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalDecl {
    Contrast {
        #[serde(default = "ones")]
        treated: AssignmentDecl,
        #[serde(default = "zeros")]
        control: AssignmentDecl,
    },
    Evaluation { at: AssignmentDecl },
    Coefficient { weights: Vec<f64> },
    /// Partial derivative at `at` along `coord` (default: own coordinate).
    PartialDerivative {
        at: AssignmentDecl,
        #[serde(default)]
        coord: Option<usize>,
        #[serde(default)]
        finite_differences: bool,
    },
    /// Derivative of the expected outcome along a common Bernoulli probability.
    DesignDerivative { at: f64 },
}

/// A template applied to every unit, or one entry per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUnit<T> {
    Units(Vec<T>),
    Template(T),
}

impl<T: Clone> PerUnit<T> {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<T>, LabError> {
        match self {
            PerUnit::Template(t) => Ok(vec![t.clone(); n]),
            PerUnit::Units(v) if v.len() == n => Ok(v.clone()),
            PerUnit::Units(v) => Err(LabError::Config(format!("{what}: {} entries for n = {n}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthDecl {
    Units(Vec<Vec<f64>>),
    Template(Vec<f64>),
    Random(RandomTruth),
}

/// Coefficients drawn uniformly from [low, high) with their own seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTruth {
    pub seed: u64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub design: DesignDecl,
    #[serde(default)]
    pub graph: Option<GraphDecl>,
    pub spaces: PerUnit<SpaceDecl>,
    pub functionals: PerUnit<FunctionalDecl>,
    #[serde(default)]
    pub truth: Option<TruthDecl>,
    /// Observed-data CSV, relative paths resolved against the config file.
    #[serde(default)]
    pub observed: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub format: Format,
    #[serde(default = "default_true")]
    pub enforce_positivity: bool,
    #[serde(default = "default_true")]
    pub skip_pairs: bool,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_tol() -> f64 {
    riesz_core::orthogonalization::DEFAULT_TOL
}

fn default_true() -> bool {
    true
}

/// Resolved scenario inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub design: Arc<Design>,
    pub spaces: Vec<Arc<ModelSpace>>,
    pub functionals: Vec<EffectFunctional>,
    pub truth: Option<Vec<Vec<f64>>>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(obs), Some(dir)) = (&cfg.observed, path.parent()) {
            if obs.is_relative() {
                cfg.observed = Some(dir.join(obs));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(LabError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(LabError::Config(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if let Some(GraphDecl::Adjacency { neighbors }) = &self.graph {
            if neighbors.len() != self.n {
                return Err(LabError::Config(format!("graph has {} units, n = {}", neighbors.len(), self.n)));
            }
        }
        self.spaces.expand(self.n, "spaces")?;
        self.functionals.expand(self.n, "functionals")?;
        if let Some(TruthDecl::Units(t)) = &self.truth {
            if t.len() != self.n {
                return Err(LabError::Config(format!("truth: {} entries for n = {}", t.len(), self.n)));
            }
        }
        Ok(())
    }

    pub fn build_design(&self) -> Result<Design, LabError> {
        let design = match &self.design {
            DesignDecl::Bernoulli { p: Some(p), probabilities: None } => Design::bernoulli_uniform(self.n, *p)?,
            DesignDecl::Bernoulli { p: None, probabilities: Some(ps) } => Design::bernoulli(ps.clone())?,
            DesignDecl::Bernoulli { .. } => {
                return Err(LabError::Config("bernoulli design needs exactly one of p, probabilities".into()))
            }
            DesignDecl::CompleteRandomization { treated } => Design::complete_randomization(self.n, *treated)?,
            DesignDecl::Enumerated {
                support,
                independent_coordinates,
            } => Design::enumerated(
                support.iter().map(|s| (Assignment::new(s.z.clone()), s.prob)).collect(),
                *independent_coordinates,
            )?,
            DesignDecl::Continuous { laws } => Design::independent_continuous(laws.clone())?,
        };
        Ok(design)
    }

    fn graph(&self) -> Result<Option<Graph>, LabError> {
        Ok(match &self.graph {
            None => None,
            Some(GraphDecl::Cycle) => Some(Graph::cycle(self.n)),
            Some(GraphDecl::Adjacency { neighbors }) => Some(Graph::from_adjacency(neighbors.clone())?),
        })
    }

    pub fn build(&self) -> Result<Scenario, LabError> {
        self.validate()?;
        let design = Arc::new(self.build_design()?);
        let dim = design.dimension();
        let graph = self.graph()?;
        let need_graph = || LabError::Config("this model space needs a graph".into());

        let spaces = self
            .spaces
            .expand(self.n, "spaces")?
            .iter()
            .enumerate()
            .map(|(i, decl)| {
                let space = match decl {
                    SpaceDecl::Sutva => ModelSpace::sutva(i),
                    SpaceDecl::SutvaLinear => ModelSpace::sutva_linear(i),
                    SpaceDecl::LinearInMeans => {
                        let g = graph.as_ref().ok_or_else(need_graph)?;
                        ModelSpace::linear_in_means(i, g.neighbors(i))?
                    }
                    SpaceDecl::Exposure => {
                        let g = graph.as_ref().ok_or_else(need_graph)?;
                        ModelSpace::exposure(i, ExposureMapping::own_and_any_neighbor(i, g.neighbors(i))?)?
                    }
                    SpaceDecl::Polynomial { degree, coord } => ModelSpace::polynomial(i, coord.unwrap_or(i), *degree),
                    SpaceDecl::Chebyshev { degree, coord } => ModelSpace::chebyshev(i, coord.unwrap_or(i), *degree),
                };
                if let Some(&c) = space.support().iter().find(|&&c| c >= dim) {
                    return Err(LabError::Config(format!("unit {i} reads coordinate {c}, design has {dim}")));
                }
                Ok(Arc::new(space))
            })
            .collect::<Result<Vec<_>, LabError>>()?;

        let functionals = self
            .functionals
            .expand(self.n, "functionals")?
            .iter()
            .enumerate()
            .map(|(i, decl)| {
                Ok(match decl {
                    FunctionalDecl::Contrast { treated, control } => {
                        EffectFunctional::contrast(treated.resolve(dim)?, control.resolve(dim)?)
                    }
                    FunctionalDecl::Evaluation { at } => EffectFunctional::evaluation(at.resolve(dim)?),
                    FunctionalDecl::Coefficient { weights } => {
                        if weights.len() != spaces[i].dimension() {
                            return Err(LabError::Config(format!(
                                "unit {i}: {} coefficient weights for dimension {}",
                                weights.len(),
                                spaces[i].dimension()
                            )));
                        }
                        EffectFunctional::coefficient(weights.clone())
                    }
                    FunctionalDecl::PartialDerivative {
                        at,
                        coord,
                        finite_differences,
                    } => {
                        let f = EffectFunctional::partial_derivative(at.resolve(dim)?, coord.unwrap_or(i))?;
                        if *finite_differences {
                            f.allowing_finite_differences()
                        } else {
                            f
                        }
                    }
                    FunctionalDecl::DesignDerivative { at } => {
                        EffectFunctional::design_derivative(DesignPath::BernoulliCommon { dimension: dim }, *at)
                    }
                })
            })
            .collect::<Result<Vec<_>, LabError>>()?;

        let truth = match &self.truth {
            None => None,
            Some(TruthDecl::Units(t)) => Some(t.clone()),
            Some(TruthDecl::Template(t)) => Some(vec![t.clone(); self.n]),
            Some(TruthDecl::Random(r)) => {
                if !(r.low < r.high) {
                    return Err(LabError::Config("random truth needs low < high".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
                Some(
                    spaces
                        .iter()
                        .map(|s| (0..s.dimension()).map(|_| rng.random_range(r.low..r.high)).collect())
                        .collect(),
                )
            }
        };
        if let Some(t) = &truth {
            for (i, (c, s)) in t.iter().zip(&spaces).enumerate() {
                if c.len() != s.dimension() {
                    return Err(LabError::Config(format!(
                        "truth for unit {i} has {} coefficients, space has {}",
                        c.len(),
                        s.dimension()
                    )));
                }
            }
        }

        Ok(Scenario {
            design,
            spaces,
            functionals,
            truth,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = r#"{
        "name": "reference",
        "n": 1,
        "design": {"type": "bernoulli", "p": 0.5},
        "spaces": {"type": "sutva"},
        "functionals": {"type": "contrast"},
        "truth": [1.0, 1.0]
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ScenarioConfig::from_json(REFERENCE).unwrap();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.format, Format::Json);
        assert!(cfg.enforce_positivity);
        let s = cfg.build().unwrap();
        assert_eq!(s.truth.unwrap(), vec![vec![1.0, 1.0]]);
        assert_eq!(s.spaces.len(), 1);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_counts() {
        let bad = REFERENCE.replace("\"n\": 1", "\"n\": 1, \"extra\": 3");
        assert!(ScenarioConfig::from_json(&bad).is_err());
        let mut cfg = ScenarioConfig::from_json(REFERENCE).unwrap();
        cfg.spaces = PerUnit::Units(vec![SpaceDecl::Sutva, SpaceDecl::Sutva]);
        assert!(cfg.validate().is_err());
        cfg.spaces = PerUnit::Template(SpaceDecl::LinearInMeans);
        assert!(cfg.build().is_err());
        let mut cfg = ScenarioConfig::from_json(REFERENCE).unwrap();
        cfg.truth = Some(TruthDecl::Template(vec![1.0]));
        assert!(cfg.build().is_err());
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig::from_json(REFERENCE).unwrap();
        let back = ScenarioConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn random_truth_is_seeded() {
        let mut cfg = ScenarioConfig::from_json(REFERENCE).unwrap();
        cfg.truth = Some(TruthDecl::Random(RandomTruth {
            seed: 4,
            low: -1.0,
            high: 1.0,
        }));
        assert_eq!(cfg.build().unwrap().truth, cfg.build().unwrap().truth);
    }
}
