//! Experimental designs, assignment sampling and exact or Monte Carlo
//! moments of products of basis functions.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fnv1a, CompensatedSum};
use crate::quadrature;

/// Default cap on the number of binary coordinates enumerated jointly.
pub const DEFAULT_ENUMERATION_CAP: usize = 16;
/// Continuous coordinates integrated jointly by tensor-product quadrature.
pub const DEFAULT_QUADRATURE_DIMS: usize = 3;

/// A point in the intervention set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<f64>);

impl Assignment {
    pub fn new(coords: Vec<f64>) -> Self {
        Assignment(coords)
    }

    pub fn zeros(dimension: usize) -> Self {
        Assignment(vec![0.0; dimension])
    }

    pub fn ones(dimension: usize) -> Self {
        Assignment(vec![1.0; dimension])
    }

    /// All ones except coordinate `unit`, which is zero.
    pub fn ones_except(dimension: usize, unit: usize) -> Self {
        let mut c = vec![1.0; dimension];
        c[unit] = 0.0;
        Assignment(c)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0 || x == 1.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Assignment {
    fn from(v: Vec<f64>) -> Self {
        Assignment(v)
    }
}

/// Law of a single coordinate in an independent continuous design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CoordinateLaw {
    /// Wigner semicircle with radius 1, supported on [-1, 1].
    Semicircle,
    Uniform { low: f64, high: f64 },
}

impl CoordinateLaw {
    fn rule(&self) -> quadrature::Rule {
        match *self {
            CoordinateLaw::Semicircle => quadrature::semicircle(quadrature::NODES),
            CoordinateLaw::Uniform { low, high } => quadrature::uniform(low, high, quadrature::NODES),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CoordinateLaw::Semicircle => {
                // semicircle(R = 1) is 2B - 1 with B ~ Beta(3/2, 3/2)
                let beta = Beta::new(1.5, 1.5).expect("valid beta parameters");
                2.0 * beta.sample(rng) - 1.0
            }
            CoordinateLaw::Uniform { low, high } => rng.random_range(low..high),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DesignKind {
    Enumerated {
        support: Vec<(Assignment, f64)>,
        /// Declares that the coordinates are mutually independent under the law.
        independent_coordinates: bool,
    },
    Bernoulli {
        probabilities: Vec<f64>,
    },
    CompleteRandomization {
        treated: usize,
    },
    IndependentContinuous {
        laws: Vec<CoordinateLaw>,
    },
}

/// The known probability law of the assignment vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    dimension: usize,
    kind: DesignKind,
}

impl Design {
    pub fn bernoulli(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidDesign("bernoulli design needs at least one coordinate".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidDesign(format!("bernoulli probability {p} outside [0, 1]")));
        }
        Ok(Design {
            dimension: probabilities.len(),
            kind: DesignKind::Bernoulli { probabilities },
        })
    }

    pub fn bernoulli_uniform(dimension: usize, p: f64) -> Result<Self> {
        Self::bernoulli(vec![p; dimension])
    }

    pub fn complete_randomization(dimension: usize, treated: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidDesign("complete randomization needs n >= 1".into()));
        }
        if treated > dimension {
            return Err(Error::InvalidDesign(format!(
                "cannot treat {treated} of {dimension} units"
            )));
        }
        Ok(Design {
            dimension,
            kind: DesignKind::CompleteRandomization { treated },
        })
    }

    pub fn enumerated(support: Vec<(Assignment, f64)>, independent_coordinates: bool) -> Result<Self> {
        let Some(first) = support.first() else {
            return Err(Error::InvalidDesign("enumerated design has empty support".into()));
        };
        let dimension = first.0.dimension();
        if dimension == 0 {
            return Err(Error::InvalidDesign("assignments must have positive dimension".into()));
        }
        let mut total = CompensatedSum::new();
        for (z, p) in &support {
            if z.dimension() != dimension {
                return Err(Error::InvalidDesign("assignments differ in dimension".into()));
            }
            if !(*p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidDesign(format!("negative or non-finite probability {p}")));
            }
            total.add(*p);
        }
        if (total.value() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDesign(format!(
                "probabilities sum to {}, not 1",
                total.value()
            )));
        }
        Ok(Design {
            dimension,
            kind: DesignKind::Enumerated {
                support,
                independent_coordinates,
            },
        })
    }

    pub fn independent_continuous(laws: Vec<CoordinateLaw>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidDesign("continuous design needs at least one coordinate".into()));
        }
        for law in &laws {
            if let CoordinateLaw::Uniform { low, high } = law {
                if !(low < high) || !low.is_finite() || !high.is_finite() {
                    return Err(Error::InvalidDesign(format!("uniform({low}, {high}) is not a valid law")));
                }
            }
        }
        Ok(Design {
            dimension: laws.len(),
            kind: DesignKind::IndependentContinuous { laws },
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &DesignKind {
        &self.kind
    }

    pub fn is_binary(&self) -> bool {
        match &self.kind {
            DesignKind::Enumerated { support, .. } => support.iter().all(|(z, _)| z.is_binary()),
            DesignKind::Bernoulli { .. } | DesignKind::CompleteRandomization { .. } => true,
            DesignKind::IndependentContinuous { .. } => false,
        }
    }

    /// Whether coordinates are known to be mutually independent.
    pub fn has_independent_coordinates(&self) -> bool {
        match &self.kind {
            DesignKind::Enumerated {
                independent_coordinates,
                ..
            } => *independent_coordinates,
            DesignKind::Bernoulli { .. } | DesignKind::IndependentContinuous { .. } => true,
            DesignKind::CompleteRandomization { .. } => false,
        }
    }

    pub fn sample(&self, seed: u64) -> Assignment {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        match &self.kind {
            DesignKind::Enumerated { support, .. } => {
                let u: f64 = rng.random();
                let mut cumulative = 0.0;
                let mut last_positive = 0;
                for (idx, (_, p)) in support.iter().enumerate() {
                    if *p > 0.0 {
                        last_positive = idx;
                    }
                    cumulative += p;
                    if u < cumulative && *p > 0.0 {
                        return support[idx].0.clone();
                    }
                }
                support[last_positive].0.clone()
            }
            DesignKind::Bernoulli { probabilities } => Assignment(
                probabilities
                    .iter()
                    .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
                    .collect(),
            ),
            DesignKind::CompleteRandomization { treated } => {
                let mut coords = vec![0.0; self.dimension];
                for idx in rand::seq::index::sample(rng, self.dimension, *treated) {
                    coords[idx] = 1.0;
                }
                Assignment(coords)
            }
            DesignKind::IndependentContinuous { laws } => {
                Assignment(laws.iter().map(|law| law.sample(rng)).collect())
            }
        }
    }

    /// Full support with exact probabilities; zero-probability points are omitted.
    pub fn enumerate_support(&self, cap: usize) -> Result<Vec<(Assignment, f64)>> {
        match &self.kind {
            DesignKind::Enumerated { support, .. } => Ok(support.clone()),
            DesignKind::IndependentContinuous { .. } => Err(Error::UnsupportedDesign(
                "continuous designs have no finite support".into(),
            )),
            DesignKind::Bernoulli { .. } | DesignKind::CompleteRandomization { .. } => {
                if self.dimension > cap {
                    return Err(Error::DimensionTooLarge {
                        dimension: self.dimension,
                        cap,
                    });
                }
                let coords: Vec<usize> = (0..self.dimension).collect();
                Ok(self
                    .binary_joint(&coords)
                    .into_iter()
                    .map(|(z, p)| (Assignment(z), p))
                    .collect())
            }
        }
    }

    /// Exact joint law of the binary sub-vector `Z[coords]` for Bernoulli and
    /// complete randomization designs. Bit `t` of the enumeration mask maps to
    /// `coords[t]`.
    fn binary_joint(&self, coords: &[usize]) -> Vec<(Vec<f64>, f64)> {
        let u = coords.len();
        let mut out = Vec::new();
        for mask in 0u64..(1u64 << u) {
            let values: Vec<f64> = (0..u).map(|t| ((mask >> t) & 1) as f64).collect();
            let prob = match &self.kind {
                DesignKind::Bernoulli { probabilities } => coords
                    .iter()
                    .zip(&values)
                    .map(|(&c, &v)| if v == 1.0 { probabilities[c] } else { 1.0 - probabilities[c] })
                    .product(),
                DesignKind::CompleteRandomization { treated } => {
                    hypergeometric_pattern(self.dimension, *treated, u, mask.count_ones() as usize)
                }
                _ => unreachable!("binary_joint on non-binary design"),
            };
            if prob > 0.0 {
                out.push((values, prob));
            }
        }
        out
    }

    /// Probability-weighted points of the sub-vector `Z[coords]`.
    fn joint_points(&self, coords: &[usize], cap: usize, quadrature_dims: usize) -> Result<Vec<(Vec<f64>, f64)>> {
        match &self.kind {
            DesignKind::Bernoulli { .. } | DesignKind::CompleteRandomization { .. } => {
                if coords.len() > cap {
                    return Err(Error::NoExactRoute(format!(
                        "{} jointly dependent coordinates exceed the enumeration cap {cap}",
                        coords.len()
                    )));
                }
                Ok(self.binary_joint(coords))
            }
            DesignKind::IndependentContinuous { laws } => {
                if coords.len() > quadrature_dims {
                    return Err(Error::NoExactRoute(format!(
                        "{} jointly dependent continuous coordinates exceed the quadrature limit {quadrature_dims}",
                        coords.len()
                    )));
                }
                let rules: Vec<quadrature::Rule> = coords.iter().map(|&c| laws[c].rule()).collect();
                let mut points = vec![(Vec::with_capacity(coords.len()), 1.0)];
                for rule in &rules {
                    let mut next = Vec::with_capacity(points.len() * rule.nodes.len());
                    for (prefix, w) in &points {
                        for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
                            let mut p = prefix.clone();
                            p.push(*x);
                            next.push((p, w * wx));
                        }
                    }
                    points = next;
                }
                Ok(points)
            }
            DesignKind::Enumerated { .. } => unreachable!("enumerated designs sum over their support"),
        }
    }
}

/// P(Z[U] = s) under complete randomization, for a pattern `s` with `ones`
/// treated coordinates among `u`.
fn hypergeometric_pattern(n: usize, m: usize, u: usize, ones: usize) -> f64 {
    let zeros = u - ones;
    if ones > m || zeros > n - m {
        return 0.0;
    }
    let mut p = 1.0;
    for t in 0..ones {
        p *= (m - t) as f64;
    }
    for t in 0..zeros {
        p *= (n - m - t) as f64;
    }
    for t in 0..u {
        p /= (n - t) as f64;
    }
    p
}

/// Anything that can be evaluated at an assignment and declares which
/// coordinates it may depend on.
pub trait Factor: Send + Sync {
    fn evaluate(&self, coords: &[f64]) -> f64;
    fn support(&self) -> &[usize];
    /// Stable identity used for moment caching; `None` disables caching.
    fn identity(&self) -> Option<&Arc<str>> {
        None
    }
}

/// Ad-hoc factor from a closure.
pub struct FnFactor<F> {
    f: F,
    support: Vec<usize>,
}

impl<F> FnFactor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(support: Vec<usize>, f: F) -> Self {
        FnFactor { f, support }
    }
}

impl<F> Factor for FnFactor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn evaluate(&self, coords: &[f64]) -> f64 {
        (self.f)(coords)
    }

    fn support(&self) -> &[usize] {
        &self.support
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentValue {
    pub value: f64,
    /// Zero for exact providers.
    pub std_error: f64,
}

/// Sorted (identity, multiplicity) pairs.
type ProductKey = Vec<(Arc<str>, u32)>;

/// Serves E[prod f(Z)] under a design, memoizing results keyed by the
/// canonical product descriptor.
pub struct MomentProvider {
    design: Arc<Design>,
    mode: MomentMode,
    enumeration_cap: usize,
    quadrature_dims: usize,
    cache: RwLock<HashMap<ProductKey, MomentValue>>,
}

impl std::fmt::Debug for MomentProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MomentProvider")
            .field("mode", &self.mode)
            .field("enumeration_cap", &self.enumeration_cap)
            .field("cached", &self.cache.read().len())
            .finish()
    }
}

impl MomentProvider {
    pub fn exact(design: Arc<Design>) -> Self {
        Self::with_mode(design, MomentMode::Exact)
    }

    pub fn monte_carlo(design: Arc<Design>, samples: usize, seed: u64) -> Self {
        Self::with_mode(design, MomentMode::MonteCarlo { samples, seed })
    }

    pub fn with_mode(design: Arc<Design>, mode: MomentMode) -> Self {
        MomentProvider {
            design,
            mode,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            quadrature_dims: DEFAULT_QUADRATURE_DIMS,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_enumeration_cap(mut self, cap: usize) -> Self {
        self.enumeration_cap = cap;
        self
    }

    pub fn with_quadrature_dims(mut self, dims: usize) -> Self {
        self.quadrature_dims = dims;
        self
    }

    pub fn design(&self) -> &Arc<Design> {
        &self.design
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, MomentMode::Exact)
    }

    pub fn mode(&self) -> MomentMode {
        self.mode
    }

    pub fn cached_count(&self) -> usize {
        self.cache.read().len()
    }

    /// Exact moment; errors with `InexactMoments` on Monte Carlo providers.
    pub fn exact_moment(&self, factors: &[&dyn Factor]) -> Result<f64> {
        if !self.is_exact() {
            return Err(Error::InexactMoments);
        }
        Ok(self.moment(factors)?.value)
    }

    pub fn moment(&self, factors: &[&dyn Factor]) -> Result<MomentValue> {
        let key = canonical_key(factors);
        if let Some(k) = &key {
            if let Some(v) = self.cache.read().get(k) {
                return Ok(*v);
            }
        }
        let value = match self.mode {
            MomentMode::Exact => MomentValue {
                value: self.compute_exact(factors)?,
                std_error: 0.0,
            },
            MomentMode::MonteCarlo { samples, seed } => {
                let salt = key.as_ref().map(key_hash).unwrap_or(0);
                self.compute_monte_carlo(factors, samples, seed ^ salt)
            }
        };
        if let Some(k) = key {
            // insert-once: a concurrent writer may have won the race
            return Ok(*self.cache.write().entry(k).or_insert(value));
        }
        Ok(value)
    }

    fn compute_exact(&self, factors: &[&dyn Factor]) -> Result<f64> {
        let dim = self.design.dimension();
        for f in factors {
            if let Some(&c) = f.support().iter().find(|&&c| c >= dim) {
                return Err(Error::IndexOutOfRange { index: c, len: dim });
            }
        }
        if let DesignKind::Enumerated { support, .. } = self.design.kind() {
            let mut acc = CompensatedSum::new();
            for (z, p) in support {
                if *p > 0.0 {
                    acc.add(p * product(factors, z.coords()));
                }
            }
            return Ok(acc.value());
        }

        let mut scratch = vec![0.0; dim];
        let mut result = 1.0;
        let (constant, varying): (Vec<&dyn Factor>, Vec<&dyn Factor>) =
            factors.iter().partition(|f| f.support().is_empty());
        for f in constant {
            result *= f.evaluate(&scratch);
        }
        let groups = if self.design.has_independent_coordinates() {
            independent_groups(&varying)
        } else if varying.is_empty() {
            Vec::new()
        } else {
            vec![(0..varying.len()).collect()]
        };
        for group in groups {
            let mut coords: Vec<usize> = group.iter().flat_map(|&g| varying[g].support().iter().copied()).collect();
            coords.sort_unstable();
            coords.dedup();
            let points = self.design.joint_points(&coords, self.enumeration_cap, self.quadrature_dims)?;
            let mut acc = CompensatedSum::new();
            for (values, w) in &points {
                for (c, v) in coords.iter().zip(values) {
                    scratch[*c] = *v;
                }
                let mut prod = 1.0;
                for &g in &group {
                    prod *= varying[g].evaluate(&scratch);
                }
                acc.add(w * prod);
            }
            for c in &coords {
                scratch[*c] = 0.0;
            }
            result *= acc.value();
        }
        Ok(result)
    }

    fn compute_monte_carlo(&self, factors: &[&dyn Factor], samples: usize, seed: u64) -> MomentValue {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for s in 0..samples {
            let z = self.design.sample_with(&mut rng);
            let x = product(factors, z.coords());
            let delta = x - mean;
            mean += delta / (s + 1) as f64;
            m2 += delta * (x - mean);
        }
        let std_error = if samples > 1 {
            (m2 / (samples - 1) as f64 / samples as f64).sqrt()
        } else {
            f64::INFINITY
        };
        MomentValue { value: mean, std_error }
    }
}

fn product(factors: &[&dyn Factor], coords: &[f64]) -> f64 {
    factors.iter().map(|f| f.evaluate(coords)).product()
}

fn canonical_key(factors: &[&dyn Factor]) -> Option<ProductKey> {
    let mut ids: Vec<&Arc<str>> = Vec::with_capacity(factors.len());
    for f in factors {
        ids.push(f.identity()?);
    }
    ids.sort();
    let mut key: ProductKey = Vec::new();
    for id in ids {
        match key.last_mut() {
            Some((last, mult)) if last == id => *mult += 1,
            _ => key.push((id.clone(), 1)),
        }
    }
    Some(key)
}

fn key_hash(key: &ProductKey) -> u64 {
    let mut bytes = Vec::new();
    for (id, mult) in key {
        bytes.extend_from_slice(id.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&mult.to_le_bytes());
    }
    fnv1a(&bytes)
}

/// Groups factors whose supports overlap, transitively.
fn independent_groups(factors: &[&dyn Factor]) -> Vec<Vec<usize>> {
    let n = factors.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (i, f) in factors.iter().enumerate() {
        for &c in f.support() {
            if let Some(&j) = owner.get(&c) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            } else {
                owner.insert(c, i);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index_of_root: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let g = *index_of_root.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}
