#![allow(dead_code)]

use std::sync::Arc;

use riesz_core::oracle::{oracle_run, OracleInput, OracleResult, OracleVariance};
use riesz_core::{Assignment, Design, EffectFunctional, ExposureMapping, Graph, ModelSpace, Pipeline, PipelineOptions};

pub struct Case {
    pub name: &'static str,
    pub design: Arc<Design>,
    pub spaces: Vec<Arc<ModelSpace>>,
    pub functionals: Vec<EffectFunctional>,
}

impl Case {
    pub fn pipeline(&self) -> Pipeline {
        Pipeline::build(
            self.design.clone(),
            self.spaces.clone(),
            self.functionals.clone(),
            PipelineOptions::default(),
        )
        .unwrap_or_else(|e| panic!("{}: {e}", self.name))
    }

    pub fn oracle(&self, pl: &Pipeline, truth: &[Vec<f64>]) -> OracleResult {
        oracle_run(&OracleInput {
            design: &self.design,
            spaces: &self.spaces,
            functionals: &self.functionals,
            truth,
            representors: pl.representors(),
            variance: pl.bound_spec().map(|spec| OracleVariance {
                orthos: pl.orthos(),
                spec,
                second_order: pl.second_order(),
            }),
            alpha: 0.05,
            cap: 16,
        })
        .unwrap()
    }
}

fn contrast_all(n: usize) -> Vec<EffectFunctional> {
    (0..n)
        .map(|_| EffectFunctional::contrast(Assignment::ones(n), Assignment::zeros(n)))
        .collect()
}

pub fn sutva(n: usize, p: f64) -> Case {
    Case {
        name: "sutva-bernoulli",
        design: Arc::new(Design::bernoulli_uniform(n, p).unwrap()),
        spaces: (0..n).map(|i| Arc::new(ModelSpace::sutva(i))).collect(),
        functionals: contrast_all(n),
    }
}

pub fn cases() -> Vec<Case> {
    let mut out = vec![sutva(1, 0.5), sutva(3, 0.3)];

    out.push(Case {
        name: "sutva-complete",
        design: Arc::new(Design::complete_randomization(5, 2).unwrap()),
        spaces: (0..5).map(|i| Arc::new(ModelSpace::sutva(i))).collect(),
        functionals: contrast_all(5),
    });

    out.push(Case {
        name: "linear-heterogeneous",
        design: Arc::new(Design::bernoulli(vec![0.2, 0.5, 0.7]).unwrap()),
        spaces: (0..3).map(|i| Arc::new(ModelSpace::sutva_linear(i))).collect(),
        functionals: contrast_all(3),
    });

    let g = Graph::cycle(5);
    out.push(Case {
        name: "lim-cycle-indirect",
        design: Arc::new(Design::bernoulli_uniform(5, 0.4).unwrap()),
        spaces: (0..5)
            .map(|i| Arc::new(ModelSpace::linear_in_means(i, g.neighbors(i)).unwrap()))
            .collect(),
        functionals: (0..5).map(|_| EffectFunctional::coefficient(vec![0.0, 0.0, 1.0])).collect(),
    });

    let g6 = Graph::cycle(6);
    out.push(Case {
        name: "lim-complete-total",
        design: Arc::new(Design::complete_randomization(6, 3).unwrap()),
        spaces: (0..6)
            .map(|i| Arc::new(ModelSpace::linear_in_means(i, g6.neighbors(i)).unwrap()))
            .collect(),
        functionals: contrast_all(6),
    });

    let g4 = Graph::cycle(4);
    out.push(Case {
        name: "exposure-cycle",
        design: Arc::new(Design::bernoulli_uniform(4, 0.5).unwrap()),
        spaces: (0..4)
            .map(|i| {
                let map = ExposureMapping::own_and_any_neighbor(i, g4.neighbors(i)).unwrap();
                Arc::new(ModelSpace::exposure(i, map).unwrap())
            })
            .collect(),
        functionals: (0..4)
            .map(|_| EffectFunctional::coefficient(vec![-1.0, 0.0, 0.0, 1.0]))
            .collect(),
    });

    // correlated coordinates: Z_1 copies Z_0 with probability 0.8
    let support = vec![
        (Assignment::new(vec![0.0, 0.0]), 0.4),
        (Assignment::new(vec![0.0, 1.0]), 0.1),
        (Assignment::new(vec![1.0, 0.0]), 0.1),
        (Assignment::new(vec![1.0, 1.0]), 0.4),
    ];
    out.push(Case {
        name: "correlated-enumerated",
        design: Arc::new(Design::enumerated(support, false).unwrap()),
        spaces: (0..2).map(|i| Arc::new(ModelSpace::sutva(i))).collect(),
        functionals: contrast_all(2),
    });
    out
}
