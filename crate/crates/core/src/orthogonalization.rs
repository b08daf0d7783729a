//! Modified Gram-Schmidt in coefficient space, first order over a model
//! space and second order over the product basis of a pair of spaces.
//!
//! Everything works from a Gram matrix of exact moments, so a function is a
//! coefficient vector `c` over the original basis and E[f g] = c' G d.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::designs::{Factor, MomentProvider};
use crate::error::{Error, Result};
use crate::model_spaces::ModelSpace;

pub const DEFAULT_TOL: f64 = 1e-10;

/// Result of Gram-Schmidt on a Gram matrix.
#[derive(Debug, Clone)]
pub struct GramSchmidt {
    /// Row t: coefficients of rho_t (t in B_o, unit norm) or of the raw
    /// residual eta_t (t in B_z). Lower-triangular.
    pub coefficients: DMatrix<f64>,
    pub b_o: Vec<usize>,
    pub b_z: Vec<usize>,
}

/// Orthonormalizes the basis in index order against the Gram matrix `gram`.
/// A residual is null when E[eta^2] <= tol * max(1, E[phi_t^2]).
pub fn gram_schmidt_from_gram(gram: &DMatrix<f64>, tol: f64) -> GramSchmidt {
    let d = gram.nrows();
    let mut coefficients = DMatrix::zeros(d, d);
    let mut b_o: Vec<usize> = Vec::new();
    let mut b_z = Vec::new();
    for t in 0..d {
        let mut v = DVector::zeros(d);
        v[t] = 1.0;
        for _pass in 0..2 {
            for &s in &b_o {
                let rho = coefficients.row(s).transpose();
                let c = (gram * &v).dot(&rho);
                v -= rho * c;
            }
        }
        let norm2 = (gram * &v).dot(&v);
        if norm2 > tol * gram[(t, t)].max(1.0) {
            coefficients.set_row(t, &(v / norm2.sqrt()).transpose());
            b_o.push(t);
        } else {
            coefficients.set_row(t, &v.transpose());
            b_z.push(t);
        }
    }
    GramSchmidt { coefficients, b_o, b_z }
}

fn gram_matrix(space: &ModelSpace, provider: &MomentProvider) -> Result<DMatrix<f64>> {
    if !provider.is_exact() {
        return Err(Error::InexactMoments);
    }
    let d = space.dimension();
    let basis = space.basis();
    let mut g = DMatrix::zeros(d, d);
    for k in 0..d {
        for l in 0..=k {
            let m = provider.exact_moment(&[&basis[k] as &dyn Factor, &basis[l]])?;
            g[(k, l)] = m;
            g[(l, k)] = m;
        }
    }
    Ok(g)
}

/// Orthonormal basis rho_k = sum_s A[k, s] phi_s of a model space.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    space: Arc<ModelSpace>,
    gram: DMatrix<f64>,
    a: DMatrix<f64>,
    b_o: Vec<usize>,
    b_z: Vec<usize>,
    tol: f64,
}

pub fn gram_schmidt(space: Arc<ModelSpace>, provider: &MomentProvider, tol: f64) -> Result<OrthoBasis> {
    let gram = gram_matrix(&space, provider)?;
    Ok(OrthoBasis::from_gram(space, gram, tol))
}

impl OrthoBasis {
    pub fn from_gram(space: Arc<ModelSpace>, gram: DMatrix<f64>, tol: f64) -> Self {
        let gs = gram_schmidt_from_gram(&gram, tol);
        OrthoBasis {
            space,
            gram,
            a: gs.coefficients,
            b_o: gs.b_o,
            b_z: gs.b_z,
            tol,
        }
    }

    pub fn space(&self) -> &Arc<ModelSpace> {
        &self.space
    }

    pub fn dimension(&self) -> usize {
        self.a.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b_o(&self) -> &[usize] {
        &self.b_o
    }

    pub fn b_z(&self) -> &[usize] {
        &self.b_z
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn is_orthonormal(&self, k: usize) -> bool {
        self.b_o.binary_search(&k).is_ok()
    }

    /// rho_k(z), or the raw null residual for k in B_z.
    pub fn evaluate(&self, k: usize, z: &[f64]) -> f64 {
        self.space
            .basis()
            .iter()
            .enumerate()
            .take(k + 1)
            .map(|(s, phi)| self.a[(k, s)] * phi.evaluate(z))
            .sum()
    }

    /// E[rho_k rho_l] from the Gram matrix.
    pub fn inner(&self, k: usize, l: usize) -> f64 {
        (self.a.row(k) * &self.gram * self.a.row(l).transpose())[(0, 0)]
    }

    /// E[y rho_k] for k in B_o, with y = sum_s c_s phi_s.
    pub fn orthonormal_coordinates(&self, outcome: &[f64]) -> Result<Vec<f64>> {
        if outcome.len() != self.dimension() {
            return Err(Error::LengthMismatch {
                expected: self.dimension(),
                found: outcome.len(),
            });
        }
        let gc = &self.gram * DVector::from_column_slice(outcome);
        Ok(self.b_o.iter().map(|&k| self.a.row(k).transpose().dot(&gc)).collect())
    }

    /// E[(phi_t - proj_{B_o} phi_t)^2]
    pub fn reconstruction_residual(&self, t: usize) -> f64 {
        projection_residual(&self.gram, &self.a, &self.b_o, t)
    }
}

fn projection_residual(gram: &DMatrix<f64>, a: &DMatrix<f64>, b_o: &[usize], t: usize) -> f64 {
    let d = gram.nrows();
    let mut r = DVector::zeros(d);
    r[t] = 1.0;
    let g_t = gram.column(t).into_owned();
    for &k in b_o {
        let rho = a.row(k).transpose();
        r -= &rho * rho.dot(&g_t);
    }
    (gram * &r).dot(&r)
}

/// Four-way moment table E[phi_{i,s} phi_{j,t} phi_{i,p} phi_{j,q}] for a
/// pair of units, stored flat in (s, t, p, q) order.
#[derive(Debug, Clone)]
pub struct PairMoments {
    pub i: usize,
    pub j: usize,
    pub di: usize,
    pub dj: usize,
    table: Vec<f64>,
}

impl PairMoments {
    pub fn compute(
        i: usize,
        space_i: &ModelSpace,
        j: usize,
        space_j: &ModelSpace,
        provider: &MomentProvider,
    ) -> Result<Self> {
        if !provider.is_exact() {
            return Err(Error::InexactMoments);
        }
        let (di, dj) = (space_i.dimension(), space_j.dimension());
        let (bi, bj) = (space_i.basis(), space_j.basis());
        let mut pm = PairMoments {
            i,
            j,
            di,
            dj,
            table: vec![0.0; di * dj * di * dj],
        };
        for s in 0..di {
            for p in s..di {
                for t in 0..dj {
                    for q in t..dj {
                        let m = provider.exact_moment(&[&bi[s] as &dyn Factor, &bj[t], &bi[p], &bj[q]])?;
                        for (a, b) in [(s, p), (p, s)] {
                            for (c, e) in [(t, q), (q, t)] {
                                let idx = pm.index(a, c, b, e);
                                pm.table[idx] = m;
                            }
                        }
                    }
                }
            }
        }
        Ok(pm)
    }

    #[inline]
    pub fn index(&self, s: usize, t: usize, p: usize, q: usize) -> usize {
        ((s * self.dj + t) * self.di + p) * self.dj + q
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize, p: usize, q: usize) -> f64 {
        self.table[self.index(s, t, p, q)]
    }

    /// Gram matrix of the product basis, r = l * dj + k.
    pub fn tensor_gram(&self) -> DMatrix<f64> {
        let m = self.di * self.dj;
        DMatrix::from_fn(m, m, |r, c| {
            self.get(r / self.dj, r % self.dj, c / self.dj, c % self.dj)
        })
    }

    /// Table with the roles of the two units swapped.
    pub fn transposed(&self) -> PairMoments {
        let mut out = PairMoments {
            i: self.j,
            j: self.i,
            di: self.dj,
            dj: self.di,
            table: vec![0.0; self.table.len()],
        };
        for s in 0..self.di {
            for t in 0..self.dj {
                for p in 0..self.di {
                    for q in 0..self.dj {
                        let idx = out.index(t, s, q, p);
                        out.table[idx] = self.get(s, t, p, q);
                    }
                }
            }
        }
        out
    }
}

/// Orthonormal basis sigma_r = sum A[r, (l, k)] phi_{i,l} phi_{j,k} of the
/// product space for a pair (i, j). Product index (l, k) flattens to l * dj + k.
#[derive(Debug, Clone)]
pub struct TensorOrthoBasis {
    pub i: usize,
    pub j: usize,
    pub di: usize,
    pub dj: usize,
    gram: DMatrix<f64>,
    a: DMatrix<f64>,
    b_o: Vec<usize>,
    b_z: Vec<usize>,
    tol: f64,
}

impl TensorOrthoBasis {
    pub fn from_moments(moments: &PairMoments, tol: f64) -> Self {
        let gram = moments.tensor_gram();
        let gs = gram_schmidt_from_gram(&gram, tol);
        TensorOrthoBasis {
            i: moments.i,
            j: moments.j,
            di: moments.di,
            dj: moments.dj,
            gram,
            a: gs.coefficients,
            b_o: gs.b_o,
            b_z: gs.b_z,
            tol,
        }
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b_o(&self) -> &[usize] {
        &self.b_o
    }

    pub fn b_z(&self) -> &[usize] {
        &self.b_z
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn inner(&self, r: usize, s: usize) -> f64 {
        (self.a.row(r) * &self.gram * self.a.row(s).transpose())[(0, 0)]
    }

    pub fn reconstruction_residual(&self, t: usize) -> f64 {
        projection_residual(&self.gram, &self.a, &self.b_o, t)
    }
}

pub fn second_order_gram_schmidt(
    i: usize,
    space_i: &ModelSpace,
    j: usize,
    space_j: &ModelSpace,
    provider: &MomentProvider,
    tol: f64,
) -> Result<TensorOrthoBasis> {
    let pm = PairMoments::compute(i, space_i, j, space_j, provider)?;
    Ok(TensorOrthoBasis::from_moments(&pm, tol))
}
