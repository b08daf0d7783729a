//! Per-unit model spaces: ordered basis functions with coordinate-support
//! metadata, plus dependency neighborhoods derived from those supports.
//!
//! Basis indices are zero-based throughout the crate.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::designs::{Design, Factor};
use crate::error::{Error, Result};

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type DerivFn = dyn Fn(&[f64], usize) -> f64 + Send + Sync;

/// Lookup table from the binary pattern of `coords` to an exposure level.
/// Bit `t` of the pattern index is set when `z[coords[t]] >= 0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureMapping {
    coords: Vec<usize>,
    levels: Vec<u32>,
}

impl ExposureMapping {
    pub fn from_table(coords: Vec<usize>, levels: Vec<u32>) -> Result<Self> {
        if coords.len() > 20 {
            return Err(Error::InvalidSpace("exposure mapping over more than 20 coordinates".into()));
        }
        if levels.len() != 1usize << coords.len() {
            return Err(Error::LengthMismatch {
                expected: 1usize << coords.len(),
                found: levels.len(),
            });
        }
        Ok(ExposureMapping { coords, levels })
    }

    /// Four exposures: 0 = control with no treated neighbor, 1 = control with
    /// at least one treated neighbor, 2 = treated with none, 3 = treated with some.
    pub fn own_and_any_neighbor(unit: usize, neighbors: &[usize]) -> Result<Self> {
        let mut coords = vec![unit];
        coords.extend(neighbors.iter().copied().filter(|&j| j != unit));
        let levels = (0..1u32 << coords.len())
            .map(|mask| {
                let own = mask & 1;
                let any = u32::from(mask >> 1 != 0);
                2 * own + any
            })
            .collect();
        Self::from_table(coords, levels)
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn level_count(&self) -> u32 {
        self.levels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn exposure(&self, z: &[f64]) -> u32 {
        let mut idx = 0usize;
        for (t, &c) in self.coords.iter().enumerate() {
            if z[c] >= 0.5 {
                idx |= 1 << t;
            }
        }
        self.levels[idx]
    }
}

#[derive(Clone)]
pub struct CustomBasis {
    eval: Arc<EvalFn>,
    derivative: Option<Arc<DerivFn>>,
}

#[derive(Clone)]
pub enum BasisKind {
    Constant,
    /// 1{z_c = value}
    Indicator { coord: usize, value: f64 },
    /// z_c
    Coordinate { coord: usize },
    /// Mean of z over `coords`.
    NeighborShare { coords: Vec<usize> },
    /// z_c^degree
    Power { coord: usize, degree: u32 },
    /// Chebyshev polynomial of the second kind U_degree(z_c).
    ChebyshevU { coord: usize, degree: u32 },
    /// 1{e(z) = level}
    Exposure { mapping: Arc<ExposureMapping>, level: u32 },
    Scaled { factor: f64, inner: Box<BasisKind> },
    Custom(CustomBasis),
}

impl fmt::Debug for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKind::Constant => write!(f, "Constant"),
            BasisKind::Indicator { coord, value } => write!(f, "Indicator(z{coord} = {value})"),
            BasisKind::Coordinate { coord } => write!(f, "Coordinate(z{coord})"),
            BasisKind::NeighborShare { coords } => write!(f, "NeighborShare({coords:?})"),
            BasisKind::Power { coord, degree } => write!(f, "Power(z{coord}^{degree})"),
            BasisKind::ChebyshevU { coord, degree } => write!(f, "ChebyshevU{degree}(z{coord})"),
            BasisKind::Exposure { mapping, level } => write!(f, "Exposure({:?} = {level})", mapping.coords),
            BasisKind::Scaled { factor, inner } => write!(f, "{factor} * {inner:?}"),
            BasisKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// U_n(x) and U_n'(x) via the three-term recurrence.
pub fn chebyshev_u(n: u32, x: f64) -> (f64, f64) {
    let (mut u0, mut u1) = (1.0, 2.0 * x);
    let (mut d0, mut d1) = (0.0, 2.0);
    if n == 0 {
        return (u0, d0);
    }
    for _ in 1..n {
        let u2 = 2.0 * x * u1 - u0;
        let d2 = 2.0 * u1 + 2.0 * x * d1 - d0;
        u0 = u1;
        u1 = u2;
        d0 = d1;
        d1 = d2;
    }
    (u1, d1)
}

impl BasisKind {
    fn evaluate(&self, z: &[f64]) -> f64 {
        match self {
            BasisKind::Constant => 1.0,
            BasisKind::Indicator { coord, value } => f64::from(u8::from(z[*coord] == *value)),
            BasisKind::Coordinate { coord } => z[*coord],
            BasisKind::NeighborShare { coords } => {
                coords.iter().map(|&c| z[c]).sum::<f64>() / coords.len() as f64
            }
            BasisKind::Power { coord, degree } => z[*coord].powi(*degree as i32),
            BasisKind::ChebyshevU { coord, degree } => chebyshev_u(*degree, z[*coord]).0,
            BasisKind::Exposure { mapping, level } => f64::from(u8::from(mapping.exposure(z) == *level)),
            BasisKind::Scaled { factor, inner } => factor * inner.evaluate(z),
            BasisKind::Custom(c) => (c.eval)(z),
        }
    }

    /// Analytic partial derivative with respect to `coord`, when available.
    fn partial(&self, z: &[f64], coord: usize) -> Option<f64> {
        match self {
            BasisKind::Constant => Some(0.0),
            // step functions: not differentiable along their own coordinates
            BasisKind::Indicator { coord: c, .. } => (*c != coord).then_some(0.0),
            BasisKind::Exposure { mapping, .. } => (!mapping.coords.contains(&coord)).then_some(0.0),
            BasisKind::Coordinate { coord: c } => Some(f64::from(u8::from(*c == coord))),
            BasisKind::NeighborShare { coords } => {
                let hits = coords.iter().filter(|&&c| c == coord).count();
                Some(hits as f64 / coords.len() as f64)
            }
            BasisKind::Power { coord: c, degree } => Some(if *c != coord || *degree == 0 {
                0.0
            } else {
                f64::from(*degree) * z[*c].powi(*degree as i32 - 1)
            }),
            BasisKind::ChebyshevU { coord: c, degree } => {
                Some(if *c == coord { chebyshev_u(*degree, z[*c]).1 } else { 0.0 })
            }
            BasisKind::Scaled { factor, inner } => inner.partial(z, coord).map(|d| factor * d),
            BasisKind::Custom(c) => c.derivative.as_ref().map(|d| d(z, coord)),
        }
    }

    fn support(&self) -> Vec<usize> {
        let mut s = match self {
            BasisKind::Constant => Vec::new(),
            BasisKind::Indicator { coord, .. }
            | BasisKind::Coordinate { coord }
            | BasisKind::Power { coord, .. }
            | BasisKind::ChebyshevU { coord, .. } => vec![*coord],
            BasisKind::NeighborShare { coords } => coords.clone(),
            BasisKind::Exposure { mapping, .. } => mapping.coords.clone(),
            BasisKind::Scaled { inner, .. } => inner.support(),
            BasisKind::Custom(_) => unreachable!("custom supports are declared explicitly"),
        };
        s.sort_unstable();
        s.dedup();
        s
    }

    fn identity(&self) -> String {
        match self {
            BasisKind::Constant => "1".into(),
            BasisKind::Indicator { coord, value } => format!("1[z{coord}={value:?}]"),
            BasisKind::Coordinate { coord } => format!("z{coord}"),
            BasisKind::NeighborShare { coords } => {
                let parts: Vec<String> = coords.iter().map(|c| format!("z{c}")).collect();
                format!("share({})", parts.join(","))
            }
            BasisKind::Power { coord, degree } => format!("z{coord}^{degree}"),
            BasisKind::ChebyshevU { coord, degree } => format!("U{degree}(z{coord})"),
            BasisKind::Exposure { mapping, level } => {
                format!("exp{:?}{:?}=={level}", mapping.coords, mapping.levels)
            }
            BasisKind::Scaled { factor, inner } => format!("{factor:?}*({})", inner.identity()),
            BasisKind::Custom(_) => unreachable!("custom identities are declared explicitly"),
        }
    }
}

/// One basis function phi_{i,k}.
#[derive(Clone)]
pub struct BasisFunction {
    id: Arc<str>,
    kind: BasisKind,
    support: Vec<usize>,
}

impl fmt::Debug for BasisFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisFunction")
            .field("id", &self.id)
            .field("support", &self.support)
            .finish()
    }
}

impl BasisFunction {
    /// Built-in kinds get a content-derived identity, so identical functions
    /// on different units share cached moments.
    pub fn new(kind: BasisKind) -> Self {
        assert!(!matches!(kind, BasisKind::Custom(_)), "use BasisFunction::custom");
        let id: Arc<str> = kind.identity().into();
        let support = kind.support();
        BasisFunction { id, kind, support }
    }

    /// A user-supplied function. `id` must be unique among all distinct
    /// functions sharing a moment provider.
    pub fn custom<F>(id: impl Into<String>, mut support: Vec<usize>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        support.sort_unstable();
        support.dedup();
        BasisFunction {
            id: id.into().into(),
            kind: BasisKind::Custom(CustomBasis {
                eval: Arc::new(eval),
                derivative: None,
            }),
            support,
        }
    }

    pub fn with_derivative<D>(mut self, derivative: D) -> Self
    where
        D: Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    {
        if let BasisKind::Custom(c) = &mut self.kind {
            c.derivative = Some(Arc::new(derivative));
        }
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let id: Arc<str> = format!("{factor:?}*({})", self.id).into();
        BasisFunction {
            id,
            kind: BasisKind::Scaled {
                factor,
                inner: Box::new(self.kind.clone()),
            },
            support: self.support.clone(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.kind.evaluate(z)
    }

    pub fn partial_derivative(&self, z: &[f64], coord: usize) -> Option<f64> {
        if !self.support.contains(&coord) {
            return Some(0.0);
        }
        self.kind.partial(z, coord)
    }
}

impl Factor for BasisFunction {
    fn evaluate(&self, coords: &[f64]) -> f64 {
        self.kind.evaluate(coords)
    }

    fn support(&self) -> &[usize] {
        &self.support
    }

    fn identity(&self) -> Option<&Arc<str>> {
        Some(&self.id)
    }
}

/// Undirected graph as adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn from_adjacency(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        for (i, list) in neighbors.iter().enumerate() {
            if let Some(&j) = list.iter().find(|&&j| j >= n || j == i) {
                return Err(Error::InvalidSpace(format!("bad neighbor {j} of unit {i}")));
            }
        }
        Ok(Graph { neighbors })
    }

    /// Cycle on `n` units: i is adjacent to i-1 and i+1 (mod n).
    pub fn cycle(n: usize) -> Self {
        let neighbors = (0..n)
            .map(|i| {
                let mut v = vec![(i + n - 1) % n, (i + 1) % n];
                v.sort_unstable();
                v.dedup();
                v.retain(|&j| j != i);
                v
            })
            .collect();
        Graph { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }
}

/// M_i: the span of an ordered list of basis functions for unit `unit`.
#[derive(Debug, Clone)]
pub struct ModelSpace {
    unit: usize,
    basis: Vec<BasisFunction>,
    support: Vec<usize>,
}

impl ModelSpace {
    pub fn new(unit: usize, basis: Vec<BasisFunction>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::InvalidSpace(format!("unit {unit} has an empty basis")));
        }
        let mut seen = HashSet::new();
        for b in &basis {
            if !seen.insert(b.id.clone()) {
                return Err(Error::InvalidSpace(format!("duplicate basis identity {}", b.id)));
            }
        }
        let mut support: Vec<usize> = basis.iter().flat_map(|b| b.support.iter().copied()).collect();
        support.sort_unstable();
        support.dedup();
        Ok(ModelSpace { unit, basis, support })
    }

    /// {1{z_i = 1}, 1{z_i = 0}}
    pub fn sutva(unit: usize) -> Self {
        Self::new(
            unit,
            vec![
                BasisFunction::new(BasisKind::Indicator { coord: unit, value: 1.0 }),
                BasisFunction::new(BasisKind::Indicator { coord: unit, value: 0.0 }),
            ],
        )
        .expect("valid SUTVA space")
    }

    /// {1, z_i}
    pub fn sutva_linear(unit: usize) -> Self {
        Self::new(
            unit,
            vec![
                BasisFunction::new(BasisKind::Constant),
                BasisFunction::new(BasisKind::Coordinate { coord: unit }),
            ],
        )
        .expect("valid SUTVA space")
    }

    /// {1, z_i, |N_i|^{-1} sum_{j in N_i} z_j}
    pub fn linear_in_means(unit: usize, neighbors: &[usize]) -> Result<Self> {
        if neighbors.is_empty() {
            return Err(Error::InvalidSpace(format!("unit {unit} has no neighbors")));
        }
        let mut coords = neighbors.to_vec();
        coords.sort_unstable();
        Self::new(
            unit,
            vec![
                BasisFunction::new(BasisKind::Constant),
                BasisFunction::new(BasisKind::Coordinate { coord: unit }),
                BasisFunction::new(BasisKind::NeighborShare { coords }),
            ],
        )
    }

    /// One indicator per exposure level.
    pub fn exposure(unit: usize, mapping: ExposureMapping) -> Result<Self> {
        let mapping = Arc::new(mapping);
        let basis = (0..mapping.level_count())
            .map(|level| {
                BasisFunction::new(BasisKind::Exposure {
                    mapping: mapping.clone(),
                    level,
                })
            })
            .collect();
        Self::new(unit, basis)
    }

    /// {1, z_c, ..., z_c^degree}
    pub fn polynomial(unit: usize, coord: usize, degree: u32) -> Self {
        let basis = (0..=degree)
            .map(|k| match k {
                0 => BasisFunction::new(BasisKind::Constant),
                _ => BasisFunction::new(BasisKind::Power { coord, degree: k }),
            })
            .collect();
        Self::new(unit, basis).expect("valid polynomial space")
    }

    /// {U_0(z_c), ..., U_degree(z_c)}
    pub fn chebyshev(unit: usize, coord: usize, degree: u32) -> Self {
        let basis = (0..=degree)
            .map(|k| BasisFunction::new(BasisKind::ChebyshevU { coord, degree: k }))
            .collect();
        Self::new(unit, basis).expect("valid Chebyshev space")
    }

    pub fn unit(&self) -> usize {
        self.unit
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.basis
    }

    pub fn basis_function(&self, k: usize) -> Result<&BasisFunction> {
        self.basis.get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            len: self.basis.len(),
        })
    }

    /// Union of the basis supports.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn evaluate_basis(&self, k: usize, z: &[f64]) -> Result<f64> {
        Ok(self.basis_function(k)?.evaluate(z))
    }

    /// sum_k coefficients[k] * phi_k(z)
    pub fn evaluate(&self, coefficients: &[f64], z: &[f64]) -> Result<f64> {
        if coefficients.len() != self.basis.len() {
            return Err(Error::LengthMismatch {
                expected: self.basis.len(),
                found: coefficients.len(),
            });
        }
        Ok(coefficients
            .iter()
            .zip(&self.basis)
            .map(|(a, b)| a * b.evaluate(z))
            .sum())
    }
}

/// A concrete member sum_k c_k phi_k of a model space.
#[derive(Debug, Clone)]
pub struct SpaceFunction {
    space: Arc<ModelSpace>,
    coefficients: Vec<f64>,
}

impl SpaceFunction {
    pub fn new(space: Arc<ModelSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.dimension() {
            return Err(Error::LengthMismatch {
                expected: space.dimension(),
                found: coefficients.len(),
            });
        }
        Ok(SpaceFunction { space, coefficients })
    }

    pub fn space(&self) -> &Arc<ModelSpace> {
        &self.space
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

impl Factor for SpaceFunction {
    fn evaluate(&self, coords: &[f64]) -> f64 {
        self.space
            .basis()
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| c * b.evaluate(coords))
            .sum()
    }

    fn support(&self) -> &[usize] {
        self.space.support()
    }
}

/// Dependency neighborhoods D_i and summary sizes of the pairwise
/// neighborhoods S_{i,j}.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSummary {
    pub neighborhoods: Vec<Vec<usize>>,
    pub davg: f64,
    pub dmax: usize,
    pub savg: f64,
}

impl NeighborhoodSummary {
    fn from_neighborhoods(neighborhoods: Vec<Vec<usize>>) -> Self {
        let n = neighborhoods.len();
        let dmax = neighborhoods.iter().map(Vec::len).max().unwrap_or(0);
        let davg = neighborhoods.iter().map(Vec::len).sum::<usize>() as f64 / n.max(1) as f64;
        let mut summary = NeighborhoodSummary {
            neighborhoods,
            davg,
            dmax,
            savg: 0.0,
        };
        let mut total = 0u128;
        for i in 0..n {
            for j in 0..n {
                total += summary.pair_size(i, j) as u128;
            }
        }
        summary.savg = total as f64 / (n.max(1) * n.max(1)) as f64;
        summary
    }

    pub fn len(&self) -> usize {
        self.neighborhoods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighborhoods.is_empty()
    }

    /// |S_{i,j}|: ordered pairs (r, s) whose joint support meets that of (i, j).
    /// Equals n^2 - (n - |D_i u D_j|)^2 under the support-intersection rule.
    pub fn pair_size(&self, i: usize, j: usize) -> usize {
        let n = self.neighborhoods.len();
        let union = sorted_union_len(&self.neighborhoods[i], &self.neighborhoods[j]);
        n * n - (n - union) * (n - union)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighborhoods[i].binary_search(&j).is_ok()
    }
}

fn sorted_union_len(a: &[usize], b: &[usize]) -> usize {
    let (mut x, mut y, mut count) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                x += 1;
                y += 1;
            }
        }
        count += 1;
    }
    count + (a.len() - x) + (b.len() - y)
}

/// D_i = { j : supp(M_j) meets supp(M_i) }, valid when the design has
/// independent coordinates.
pub fn dependency_neighborhoods(spaces: &[Arc<ModelSpace>], design: &Design) -> Result<NeighborhoodSummary> {
    if !design.has_independent_coordinates() {
        return Err(Error::DependenceUnknown);
    }
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); design.dimension()];
    for (u, space) in spaces.iter().enumerate() {
        for &c in space.support() {
            if c >= owners.len() {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    len: owners.len(),
                });
            }
            owners[c].push(u);
        }
    }
    let neighborhoods = spaces
        .iter()
        .map(|space| {
            let mut d: Vec<usize> = space.support().iter().flat_map(|&c| owners[c].iter().copied()).collect();
            d.sort_unstable();
            d.dedup();
            d
        })
        .collect();
    Ok(NeighborhoodSummary::from_neighborhoods(neighborhoods))
}

/// Every unit depends on every other: the fallback when independence is unknown.
pub fn conservative_neighborhoods(n: usize) -> NeighborhoodSummary {
    NeighborhoodSummary::from_neighborhoods(vec![(0..n).collect(); n])
}
