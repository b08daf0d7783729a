//! Built-in scenarios, selectable by name on the command line.

use crate::config::{
    DesignDecl, FunctionalDecl, GraphDecl, PerUnit, RandomTruth, ScenarioConfig, SpaceDecl, TruthDecl,
};

pub const NAMES: &[&str] = &[
    "reference",
    "sutva-bernoulli",
    "sutva-small",
    "sutva-complete",
    "lim-cycle",
    "exposure-cycle",
    "chebyshev",
];

fn base(name: &str, n: usize, design: DesignDecl, spaces: SpaceDecl, functional: FunctionalDecl) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        n,
        design,
        graph: None,
        spaces: PerUnit::Template(spaces),
        functionals: PerUnit::Template(functional),
        truth: None,
        observed: None,
        seed: 20240601,
        reps: 1000,
        alpha: 0.05,
        tol: riesz_core::orthogonalization::DEFAULT_TOL,
        format: Default::default(),
        enforce_positivity: true,
        skip_pairs: true,
    }
}

fn bernoulli(p: f64) -> DesignDecl {
    DesignDecl::Bernoulli {
        p: Some(p),
        probabilities: None,
    }
}

fn contrast() -> FunctionalDecl {
    FunctionalDecl::Contrast {
        treated: crate::config::AssignmentDecl::Named(crate::config::NamedAssignment::Ones),
        control: crate::config::AssignmentDecl::Named(crate::config::NamedAssignment::Zeros),
    }
}

fn random(seed: u64) -> Option<TruthDecl> {
    Some(TruthDecl::Random(RandomTruth {
        seed,
        low: -2.0,
        high: 2.0,
    }))
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    let cfg = match name {
        "reference" => ScenarioConfig {
            truth: Some(TruthDecl::Template(vec![1.0, 1.0])),
            ..base(name, 1, bernoulli(0.5), SpaceDecl::Sutva, contrast())
        },
        "sutva-bernoulli" => ScenarioConfig {
            truth: random(1),
            reps: 10_000,
            ..base(name, 200, bernoulli(0.3), SpaceDecl::Sutva, contrast())
        },
        "sutva-small" => ScenarioConfig {
            truth: random(2),
            ..base(name, 6, bernoulli(0.3), SpaceDecl::Sutva, contrast())
        },
        "sutva-complete" => ScenarioConfig {
            truth: random(3),
            ..base(name, 8, DesignDecl::CompleteRandomization { treated: 4 }, SpaceDecl::Sutva, contrast())
        },
        // indirect effect: the coefficient on the treated-neighbor share
        "lim-cycle" => ScenarioConfig {
            graph: Some(GraphDecl::Cycle),
            truth: random(4),
            ..base(
                name,
                10,
                bernoulli(0.5),
                SpaceDecl::LinearInMeans,
                FunctionalDecl::Coefficient {
                    weights: vec![0.0, 0.0, 1.0],
                },
            )
        },
        "exposure-cycle" => ScenarioConfig {
            graph: Some(GraphDecl::Cycle),
            truth: random(5),
            ..base(name, 6, bernoulli(0.5), SpaceDecl::Exposure, contrast())
        },
        "chebyshev" => ScenarioConfig {
            truth: random(6),
            ..base(
                name,
                1,
                DesignDecl::Continuous {
                    laws: vec![riesz_core::CoordinateLaw::Semicircle],
                },
                SpaceDecl::Chebyshev { degree: 12, coord: None },
                FunctionalDecl::PartialDerivative {
                    at: crate::config::AssignmentDecl::Explicit(vec![0.0]),
                    coord: None,
                    finite_differences: false,
                },
            )
        },
        _ => return None,
    };
    Some(cfg)
}

/// Built-ins whose design support can be enumerated.
pub fn enumerable() -> Vec<ScenarioConfig> {
    NAMES
        .iter()
        .filter_map(|n| builtin(n))
        .filter(|c| !matches!(c.design, DesignDecl::Continuous { .. }) && c.n <= 10)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_validates_and_builds() {
        for name in NAMES {
            let cfg = builtin(name).unwrap();
            assert_eq!(&cfg.name, name);
            let s = cfg.build().unwrap();
            assert_eq!(s.spaces.len(), cfg.n);
            assert!(s.truth.is_some());
        }
        assert!(builtin("nope").is_none());
        assert_eq!(enumerable().len(), 5);
    }
}
