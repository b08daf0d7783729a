//! Conservative variance estimation: elementary decomposition of the
//! covariance functionals, second-order positivity classification, bound
//! assembly, second-order representors, the variance estimator and Wald
//! intervals.
//!
//! Tensor functionals on a pair (i, j) are tables of their values on the
//! product basis phi_{i,p} (x) phi_{j,q}, flattened as p * dj + q.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::designs::{Assignment, Design, Factor, MomentProvider};
use crate::error::{Error, Result};
use crate::model_spaces::{dependency_neighborhoods, ModelSpace};
use crate::orthogonalization::{OrthoBasis, PairMoments, TensorOrthoBasis};
use crate::positivity::{test_second_order_positivity, PositivityReport};
use crate::riesz::RieszRepresentor;

/// Coefficients of u (x) v over the product basis.
pub fn simple_tensor(u: &[f64], v: &[f64]) -> Vec<f64> {
    u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect()
}

/// Applies a functional table to tensor coefficients.
pub fn apply_tensor(values: &[f64], coefficients: &[f64]) -> Result<f64> {
    if values.len() != coefficients.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            found: coefficients.len(),
        });
    }
    Ok(values.iter().zip(coefficients).map(|(a, b)| a * b).sum())
}

/// theta_{i,j}(u (x) v) = Cov(psi_i u, psi_j v), computed straight from
/// moment queries on the representor coefficients.
pub fn variance_functional_value(
    rep_i: &RieszRepresentor,
    rep_j: &RieszRepresentor,
    coefficients: &[f64],
    provider: &MomentProvider,
) -> Result<f64> {
    let (si, sj) = (rep_i.space(), rep_j.space());
    let (di, dj) = (si.dimension(), sj.dimension());
    if coefficients.len() != di * dj {
        return Err(Error::LengthMismatch {
            expected: di * dj,
            found: coefficients.len(),
        });
    }
    let pm = PairMoments::compute(rep_i.unit(), si, rep_j.unit(), sj, provider)?;
    let first = |rep: &RieszRepresentor, space: &ModelSpace| -> Result<Vec<f64>> {
        let basis = space.basis();
        (0..basis.len())
            .map(|p| {
                let mut acc = 0.0;
                for (s, b) in rep.beta().iter().enumerate() {
                    if *b != 0.0 {
                        acc += b * provider.exact_moment(&[&basis[s] as &dyn Factor, &basis[p]])?;
                    }
                }
                Ok(acc)
            })
            .collect()
    };
    let ei = first(rep_i, si)?;
    let ej = first(rep_j, sj)?;
    let (bi, bj) = (rep_i.beta(), rep_j.beta());
    let mut total = 0.0;
    for p in 0..di {
        for q in 0..dj {
            let c = coefficients[p * dj + q];
            if c == 0.0 {
                continue;
            }
            let mut cross = 0.0;
            for s in 0..di {
                for t in 0..dj {
                    cross += bi[s] * bj[t] * pm.get(s, t, p, q);
                }
            }
            total += c * (cross - ei[p] * ej[q]);
        }
    }
    Ok(total)
}

/// Values of every elementary functional V_{i,j,k,l} on the product basis,
/// plus the raw diagonal functionals D_{i,k} when i = j.
#[derive(Debug, Clone)]
pub struct ElementaryTable {
    pub i: usize,
    pub j: usize,
    pub di: usize,
    pub dj: usize,
    weights_i: Vec<f64>,
    weights_j: Vec<f64>,
    /// [k][l][p][q]
    values: Vec<f64>,
    /// [k][p][q]; diagonal pairs only
    raw: Option<Vec<f64>>,
}

impl ElementaryTable {
    pub fn compute(
        moments: &PairMoments,
        ortho_i: &OrthoBasis,
        rep_i: &RieszRepresentor,
        ortho_j: &OrthoBasis,
        rep_j: &RieszRepresentor,
    ) -> Self {
        let (di, dj) = (moments.di, moments.dj);
        let diagonal = moments.i == moments.j;
        let (ai, aj) = (ortho_i.coefficients(), ortho_j.coefficients());
        let (wi, wj) = (rep_i.weights(), rep_j.weights());
        let e1 = ai * ortho_i.gram();
        let e2 = aj * ortho_j.gram();
        let m = di * dj;
        let mut values = vec![0.0; di * dj * m];
        let mut raw = diagonal.then(|| vec![0.0; di * m]);
        // x[k][t][p][q] = sum_s A_i[k, s] M[s, t, p, q]
        let mut x = vec![0.0; dj * m];
        for k in 0..di {
            let need_raw = diagonal && wi[k] != 0.0;
            let need_v = wi[k] != 0.0 && wj.iter().any(|w| *w != 0.0);
            if !need_raw && !need_v {
                continue;
            }
            x.iter_mut().for_each(|v| *v = 0.0);
            for s in 0..=k {
                let a = ai[(k, s)];
                if a == 0.0 {
                    continue;
                }
                for t in 0..dj {
                    for p in 0..di {
                        for q in 0..dj {
                            x[(t * di + p) * dj + q] += a * moments.get(s, t, p, q);
                        }
                    }
                }
            }
            for l in 0..dj {
                let is_raw = diagonal && l == k;
                if wj[l] == 0.0 && !is_raw {
                    continue;
                }
                for p in 0..di {
                    for q in 0..dj {
                        let mut cross = 0.0;
                        for t in 0..=l {
                            cross += aj[(l, t)] * x[(t * di + p) * dj + q];
                        }
                        if is_raw {
                            if let Some(r) = raw.as_mut() {
                                r[k * m + p * dj + q] = cross;
                            }
                        }
                        let cov = cross - e1[(k, p)] * e2[(l, q)];
                        values[(k * dj + l) * m + p * dj + q] = wi[k] * wj[l] * cov;
                    }
                }
            }
        }
        ElementaryTable {
            i: moments.i,
            j: moments.j,
            di,
            dj,
            weights_i: wi.to_vec(),
            weights_j: wj.to_vec(),
            values,
            raw,
        }
    }

    /// V_{i,j,k,l} as a table over the product basis.
    pub fn functional(&self, k: usize, l: usize) -> &[f64] {
        let m = self.di * self.dj;
        let start = (k * self.dj + l) * m;
        &self.values[start..start + m]
    }

    /// D_{i,k} as a table; diagonal pairs only.
    pub fn raw(&self, k: usize) -> Option<&[f64]> {
        let m = self.di * self.dj;
        self.raw.as_ref().map(|r| &r[k * m..(k + 1) * m])
    }

    pub fn weight_i(&self, k: usize) -> f64 {
        self.weights_i[k]
    }

    pub fn weight_j(&self, l: usize) -> f64 {
        self.weights_j[l]
    }

    /// theta_{i,j} = sum_{k,l} V_{i,j,k,l}
    pub fn variance_functional(&self) -> Vec<f64> {
        let m = self.di * self.dj;
        let mut out = vec![0.0; m];
        for chunk in self.values.chunks(m) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        out
    }
}

/// Pos_{i,j}: index pairs (k, l) whose elementary functional is
/// second-order positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositivitySet {
    pub di: usize,
    pub dj: usize,
    members: Vec<bool>,
}

impl PositivitySet {
    pub fn full(di: usize, dj: usize) -> Self {
        PositivitySet {
            di,
            dj,
            members: vec![true; di * dj],
        }
    }

    pub fn contains(&self, k: usize, l: usize) -> bool {
        self.members[k * self.dj + l]
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self) -> Vec<(usize, usize)> {
        (0..self.di)
            .flat_map(|k| (0..self.dj).map(move |l| (k, l)))
            .filter(|&(k, l)| self.contains(k, l))
            .collect()
    }

    pub fn transposed(&self) -> Self {
        PositivitySet {
            di: self.dj,
            dj: self.di,
            members: (0..self.dj)
                .flat_map(|l| (0..self.di).map(move |k| (k, l)))
                .map(|(k, l)| self.contains(k, l))
                .collect(),
        }
    }
}

pub fn classify_elementary(tortho: &TensorOrthoBasis, table: &ElementaryTable) -> Result<PositivitySet> {
    let mut members = Vec::with_capacity(table.di * table.dj);
    for k in 0..table.di {
        for l in 0..table.dj {
            members.push(test_second_order_positivity(tortho, table.functional(k, l))?.holds);
        }
    }
    Ok(PositivitySet {
        di: table.di,
        dj: table.dj,
        members,
    })
}

/// Which ordered pairs (i, j) need second-order work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPlan {
    pub n: usize,
    /// Sorted partners of each unit; j in partners[i] iff (i, j) is kept.
    pub partners: Vec<Vec<usize>>,
    pub dependence_known: bool,
}

impl PairPlan {
    pub fn all(n: usize) -> Self {
        PairPlan {
            n,
            partners: vec![(0..n).collect(); n],
            dependence_known: false,
        }
    }

    /// Kept pairs with i <= j.
    pub fn upper_pairs(&self) -> Vec<(usize, usize)> {
        self.partners
            .iter()
            .enumerate()
            .flat_map(|(i, ps)| ps.iter().filter(move |&&j| j >= i).map(move |&j| (i, j)))
            .collect()
    }

    /// Ordered pairs that are skipped.
    pub fn skipped_count(&self) -> usize {
        self.n * self.n - self.partners.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_kept(&self, i: usize, j: usize) -> bool {
        self.partners[i].binary_search(&j).is_ok()
    }
}

/// Skips (i, j) when the supports are disjoint under a coordinate-independent
/// design, since theta_{i,j} is then identically zero. Designs without known
/// independence keep every pair.
pub fn second_order_neighbor_skip(spaces: &[Arc<ModelSpace>], design: &Design) -> Result<PairPlan> {
    match dependency_neighborhoods(spaces, design) {
        Ok(summary) => Ok(PairPlan {
            n: spaces.len(),
            partners: summary.neighborhoods,
            dependence_known: true,
        }),
        Err(Error::DependenceUnknown) => Ok(PairPlan::all(spaces.len())),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairClassification {
    pub i: usize,
    pub j: usize,
    pub pos: PositivitySet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TermKind {
    Elementary { k: usize, l: usize },
    /// theta(rho_{i,k})^2 * D_{i,k}
    DiagonalRaw { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub kind: TermKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBoundSpec {
    pub n: usize,
    pub dims: Vec<usize>,
    /// Kept pairs with i <= j, aligned with `classifications`.
    pub classifications: Vec<PairClassification>,
    /// Q_{i,k}
    pub q: Vec<Vec<u64>>,
    /// d_{i,k} = 1{(k, k) in Pos_{i,i}}
    pub diagonal_positive: Vec<Vec<bool>>,
    pub skipped_pairs: usize,
}

/// Q_{i,k} counts, over kept ordered pairs (i, j), the l with (k, l) outside
/// Pos_{i,j}; the (j, i) sets are transposes.
pub fn assemble_bound(n: usize, dims: &[usize], classifications: Vec<PairClassification>, skipped_pairs: usize) -> VarianceBoundSpec {
    let mut q: Vec<Vec<u64>> = dims.iter().map(|&d| vec![0; d]).collect();
    let mut diagonal_positive: Vec<Vec<bool>> = dims.iter().map(|&d| vec![true; d]).collect();
    for c in &classifications {
        for k in 0..c.pos.di {
            for l in 0..c.pos.dj {
                if c.pos.contains(k, l) {
                    continue;
                }
                q[c.i][k] += 1;
                if c.i != c.j {
                    q[c.j][l] += 1;
                }
            }
        }
        if c.i == c.j {
            for k in 0..c.pos.di {
                diagonal_positive[c.i][k] = c.pos.contains(k, k);
            }
        }
    }
    VarianceBoundSpec {
        n,
        dims: dims.to_vec(),
        classifications,
        q,
        diagonal_positive,
        skipped_pairs,
    }
}

impl VarianceBoundSpec {
    pub fn total_q(&self) -> u64 {
        self.q.iter().flatten().sum()
    }

    /// Terms of B_{i,j} for the classification at `index`.
    pub fn terms(&self, index: usize) -> Vec<BoundTerm> {
        let c = &self.classifications[index];
        let mut terms: Vec<BoundTerm> = c
            .pos
            .members()
            .into_iter()
            .map(|(k, l)| BoundTerm {
                kind: TermKind::Elementary { k, l },
                weight: 1.0,
            })
            .collect();
        if c.i == c.j {
            for k in 0..c.pos.di {
                let qk = self.q[c.i][k];
                if qk == 0 {
                    continue;
                }
                let kind = if self.diagonal_positive[c.i][k] {
                    TermKind::Elementary { k, l: k }
                } else {
                    TermKind::DiagonalRaw { k }
                };
                terms.push(BoundTerm { kind, weight: qk as f64 });
            }
        }
        terms
    }

    /// B_{i,j} as a table over the product basis.
    pub fn bound_table(&self, index: usize, table: &ElementaryTable) -> Vec<f64> {
        let m = table.di * table.dj;
        let mut out = vec![0.0; m];
        for term in self.terms(index) {
            let (src, scale) = match term.kind {
                TermKind::Elementary { k, l } => (table.functional(k, l), term.weight),
                TermKind::DiagonalRaw { k } => {
                    let w = table.weight_i(k);
                    (table.raw(k).expect("raw functional on a diagonal pair"), term.weight * w * w)
                }
            };
            for (o, v) in out.iter_mut().zip(src) {
                *o += scale * v;
            }
        }
        out
    }
}

/// psi^B_{i,j} = sum_{l,k} c[l * dj + k] phi_{i,l} phi_{j,k}.
#[derive(Debug, Clone)]
pub struct SecondOrderRepresentor {
    pub i: usize,
    pub j: usize,
    space_i: Arc<ModelSpace>,
    space_j: Arc<ModelSpace>,
    coefficients: Vec<f64>,
    positivity: PositivityReport,
}

pub fn build_second_order_representor(
    bound_values: &[f64],
    tortho: &TensorOrthoBasis,
    space_i: Arc<ModelSpace>,
    space_j: Arc<ModelSpace>,
    enforce: bool,
) -> Result<SecondOrderRepresentor> {
    let positivity = test_second_order_positivity(tortho, bound_values)?;
    if enforce && !positivity.holds {
        return Err(Error::PositivityViolated(Box::new(positivity)));
    }
    let a = tortho.coefficients();
    let m = bound_values.len();
    let mut coefficients = vec![0.0; m];
    for &r in tortho.b_o() {
        let b: f64 = (0..=r).map(|c| a[(r, c)] * bound_values[c]).sum();
        if b == 0.0 {
            continue;
        }
        for (c, out) in coefficients.iter_mut().enumerate().take(r + 1) {
            *out += b * a[(r, c)];
        }
    }
    Ok(SecondOrderRepresentor {
        i: tortho.i,
        j: tortho.j,
        space_i,
        space_j,
        coefficients,
        positivity,
    })
}

impl SecondOrderRepresentor {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn positivity(&self) -> &PositivityReport {
        &self.positivity
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        let dj = self.space_j.dimension();
        let vj: Vec<f64> = self.space_j.basis().iter().map(|f| f.evaluate(z)).collect();
        let mut total = 0.0;
        for (l, fi) in self.space_i.basis().iter().enumerate() {
            let row = &self.coefficients[l * dj..(l + 1) * dj];
            if row.iter().all(|c| *c == 0.0) {
                continue;
            }
            let u = fi.evaluate(z);
            total += u * row.iter().zip(&vj).map(|(c, v)| c * v).sum::<f64>();
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    /// psi^B_{i,j}(Z) Y_i Y_j
    pub value: f64,
    /// 2 for i < j, standing in for the mirrored (j, i) term.
    pub multiplicity: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub value: f64,
    pub terms: Vec<PairTerm>,
    pub skipped_pairs: usize,
}

/// n^{-2} sum over kept ordered pairs of psi^B_{i,j}(Z) Y_i Y_j, with each
/// representor covering (i, j) and (j, i).
pub fn variance_estimate(
    reps: &[SecondOrderRepresentor],
    assignment: &Assignment,
    outcomes: &[f64],
    skipped_pairs: usize,
) -> Result<VarianceEstimate> {
    let n = outcomes.len();
    if let Some(r) = reps.iter().find(|r| r.i.max(r.j) >= n) {
        return Err(Error::LengthMismatch {
            expected: r.i.max(r.j) + 1,
            found: n,
        });
    }
    let z = assignment.coords();
    let terms: Vec<PairTerm> = reps
        .iter()
        .map(|r| PairTerm {
            i: r.i,
            j: r.j,
            value: r.evaluate(z) * outcomes[r.i] * outcomes[r.j],
            multiplicity: if r.i == r.j { 1 } else { 2 },
        })
        .collect();
    let sum: f64 = terms.iter().map(|t| f64::from(t.multiplicity) * t.value).sum();
    let value = if n == 0 { 0.0 } else { sum / (n * n) as f64 };
    Ok(VarianceEstimate {
        value,
        terms,
        skipped_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub radius: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    /// Set when a negative variance estimate was clamped to zero.
    pub clamped: bool,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Standard normal quantile at 1 - alpha / 2.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - alpha / 2.0))
}

pub fn confidence_interval(center: f64, variance: f64, alpha: f64) -> Result<ConfidenceInterval> {
    let z = normal_quantile(alpha)?;
    let clamped = variance < 0.0;
    let radius = z * variance.max(0.0).sqrt();
    Ok(ConfidenceInterval {
        center,
        radius,
        lower: center - radius,
        upper: center + radius,
        alpha,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::EffectFunctional;
    use crate::orthogonalization::{gram_schmidt, DEFAULT_TOL};
    use crate::riesz::build_representor;

    struct Unit {
        space: Arc<ModelSpace>,
        ortho: OrthoBasis,
        rep: RieszRepresentor,
    }

    fn sutva_units(n: usize, p: f64) -> (MomentProvider, Vec<Unit>) {
        let provider = MomentProvider::exact(Arc::new(Design::bernoulli_uniform(n, p).unwrap()));
        let units = (0..n)
            .map(|i| {
                let space = Arc::new(ModelSpace::sutva(i));
                let ortho = gram_schmidt(space.clone(), &provider, DEFAULT_TOL).unwrap();
                let theta = EffectFunctional::contrast(Assignment::ones(n), Assignment::zeros(n));
                let rep = build_representor(&ortho, &theta, true).unwrap();
                Unit { space, ortho, rep }
            })
            .collect();
        (provider, units)
    }

    fn pair(provider: &MomentProvider, a: &Unit, b: &Unit) -> (TensorOrthoBasis, ElementaryTable) {
        let pm = PairMoments::compute(a.space.unit(), &a.space, b.space.unit(), &b.space, provider).unwrap();
        let t = TensorOrthoBasis::from_moments(&pm, DEFAULT_TOL);
        let e = ElementaryTable::compute(&pm, &a.ortho, &a.rep, &b.ortho, &b.rep);
        (t, e)
    }

    #[test]
    fn covariance_functional_values() {
        let (provider, units) = sutva_units(1, 0.5);
        let u = &units[0];
        let e12 = simple_tensor(&[1.0, 0.0], &[0.0, 1.0]);
        let v = variance_functional_value(&u.rep, &u.rep, &e12, &provider).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let yy = simple_tensor(&[1.0, 1.0], &[1.0, 1.0]);
        let v = variance_functional_value(&u.rep, &u.rep, &yy, &provider).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let (_, e) = pair(&provider, u, u);
        assert!((apply_tensor(&e.variance_functional(), &yy).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_units_have_zero_covariance() {
        let (provider, units) = sutva_units(2, 0.3);
        for coefs in [[1.0, 0.0, 0.0, 0.0], [0.3, -1.0, 2.0, 0.5]] {
            let v = variance_functional_value(&units[0].rep, &units[1].rep, &coefs, &provider).unwrap();
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn reference_classification_and_bound() {
        let (provider, units) = sutva_units(1, 0.5);
        let u = &units[0];
        let (t, e) = pair(&provider, u, u);
        let pos = classify_elementary(&t, &e).unwrap();
        assert_eq!(pos.members(), vec![(0, 0), (1, 1)]);
        // cross functionals take value 1 on the null tensor e1 (x) e2
        assert!((e.functional(0, 1)[1] - 1.0).abs() < 1e-12);
        let raw = e.raw(0).unwrap().to_vec();
        assert!(test_second_order_positivity(&t, &raw).unwrap().holds);

        let spec = assemble_bound(1, &[2], vec![PairClassification { i: 0, j: 0, pos }], 0);
        assert_eq!(spec.q, vec![vec![1, 1]]);
        assert_eq!(spec.diagonal_positive, vec![vec![true, true]]);
        let terms = spec.terms(0);
        let weight = |k| -> f64 {
            terms
                .iter()
                .filter(|t| t.kind == TermKind::Elementary { k, l: k })
                .map(|t| t.weight)
                .sum()
        };
        assert_eq!(weight(0), 2.0);
        assert_eq!(weight(1), 2.0);

        let b = spec.bound_table(0, &e);
        let y = simple_tensor(&[1.0, 0.0], &[1.0, 0.0]);
        assert!((apply_tensor(&b, &y).unwrap() - 2.0).abs() < 1e-12);

        let so = build_second_order_representor(&b, &t, u.space.clone(), u.space.clone(), true).unwrap();
        assert!((so.evaluate(&[1.0]) - 4.0).abs() < 1e-12);
        assert!((so.evaluate(&[0.0]) - 4.0).abs() < 1e-12);
        let ve = variance_estimate(&[so], &Assignment::ones(1), &[3.0], 0).unwrap();
        assert!((ve.value - 36.0).abs() < 1e-10);
    }

    #[test]
    fn zero_bound_gives_zero_representor() {
        let (provider, units) = sutva_units(1, 0.5);
        let (t, _) = pair(&provider, &units[0], &units[0]);
        let so = build_second_order_representor(&[0.0; 4], &t, units[0].space.clone(), units[0].space.clone(), true).unwrap();
        assert_eq!(so.evaluate(&[1.0]), 0.0);
    }

    #[test]
    fn disjoint_pair_fully_positive() {
        let (provider, units) = sutva_units(2, 0.5);
        let (t, e) = pair(&provider, &units[0], &units[1]);
        let pos = classify_elementary(&t, &e).unwrap();
        assert_eq!(pos.len(), 4);
        let so = build_second_order_representor(
            &e.variance_functional(),
            &t,
            units[0].space.clone(),
            units[1].space.clone(),
            true,
        )
        .unwrap();
        for z in [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] {
            assert!(so.evaluate(&z).abs() < 1e-12);
        }
    }

    #[test]
    fn skip_rules() {
        let spaces: Vec<Arc<ModelSpace>> = (0..3).map(|i| Arc::new(ModelSpace::sutva(i))).collect();
        let plan = second_order_neighbor_skip(&spaces, &Design::bernoulli_uniform(3, 0.5).unwrap()).unwrap();
        assert_eq!(plan.upper_pairs(), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(plan.skipped_count(), 6);
        let plan = second_order_neighbor_skip(&spaces, &Design::complete_randomization(3, 1).unwrap()).unwrap();
        assert_eq!(plan.skipped_count(), 0);
        assert!(!plan.dependence_known);

        let g = crate::model_spaces::Graph::cycle(10);
        let spaces: Vec<Arc<ModelSpace>> = (0..10)
            .map(|i| Arc::new(ModelSpace::linear_in_means(i, g.neighbors(i)).unwrap()))
            .collect();
        let plan = second_order_neighbor_skip(&spaces, &Design::bernoulli_uniform(10, 0.5).unwrap()).unwrap();
        for i in 0..10usize {
            for j in 0..10usize {
                let dist = (i as i64 - j as i64).rem_euclid(10).min((j as i64 - i as i64).rem_euclid(10));
                assert_eq!(plan.is_kept(i, j), dist <= 2);
            }
        }
    }

    #[test]
    fn all_positive_means_no_transfer() {
        let spec = assemble_bound(
            2,
            &[2, 2],
            vec![
                PairClassification { i: 0, j: 0, pos: PositivitySet::full(2, 2) },
                PairClassification { i: 0, j: 1, pos: PositivitySet::full(2, 2) },
                PairClassification { i: 1, j: 1, pos: PositivitySet::full(2, 2) },
            ],
            0,
        );
        assert_eq!(spec.total_q(), 0);
        assert_eq!(spec.terms(1).len(), 4);
    }

    #[test]
    fn asymmetric_q_counts() {
        let mut pos = PositivitySet::full(2, 3);
        pos.members[2] = false; // (0, 2)
        pos.members[5] = false; // (1, 2)
        let spec = assemble_bound(2, &[2, 3], vec![PairClassification { i: 0, j: 1, pos: pos.clone() }], 0);
        assert_eq!(spec.q[0], vec![1, 1]);
        assert_eq!(spec.q[1], vec![0, 0, 2]);
        assert_eq!(pos.transposed().transposed(), pos);
        assert!(!pos.transposed().contains(2, 1));
    }

    #[test]
    fn intervals() {
        let ci = confidence_interval(6.0, 36.0, 0.05).unwrap();
        assert!((ci.lower + 5.7598).abs() < 1e-4);
        assert!((ci.upper - 17.7598).abs() < 1e-4);
        let ci = confidence_interval(1.0, 0.0, 0.05).unwrap();
        assert_eq!((ci.lower, ci.upper, ci.clamped), (1.0, 1.0, false));
        let ci = confidence_interval(1.0, -0.1, 0.05).unwrap();
        assert_eq!(ci.radius, 0.0);
        assert!(ci.clamped);
        assert!(matches!(confidence_interval(0.0, 1.0, 1.0), Err(Error::InvalidAlpha(_))));
    }
}
