//! Smallest eigenpairs of the clamped biharmonic matrix.
//!
//! Block inverse iteration: each sweep applies `B⁻¹` to the current block
//! (one banded Cholesky factorization, independent solves per column), then
//! orthonormalizes and performs a Rayleigh–Ritz projection.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::banded::BandedSpd;
use crate::error::{LabError, Result};
use crate::grid::{BoundaryCondition, Field2D, Grid2D};
use crate::operators::inner;
use crate::parallel;
use crate::samplers;
use crate::variational::{h2_sq, nonlinear_I};

pub const EIGTOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 5000;

#[derive(Debug, Clone)]
pub struct EigenBasis {
    grid: Grid2D,
    lambdas: Vec<f64>,
    vectors: Vec<Field2D>,
    residuals: Vec<f64>,
}

impl EigenBasis {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `λ_i`, 1-based.
    pub fn lambda(&self, i: usize) -> f64 {
        self.lambdas[i - 1]
    }

    /// `e_i`, 1-based.
    pub fn vector(&self, i: usize) -> &Field2D {
        &self.vectors[i - 1]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn vectors(&self) -> &[Field2D] {
        &self.vectors
    }

    /// Relative residuals `‖B e_i − λ_i e_i‖₂ / λ_i`.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Largest `|⟨e_i, e_j⟩ − δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.vectors.iter().enumerate() {
            for (j, b) in self.vectors.iter().enumerate().skip(i) {
                let d = inner(a, b) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    pub fn from_parts(grid: Grid2D, lambdas: Vec<f64>, vectors: Vec<Field2D>) -> Result<Self> {
        if lambdas.len() != vectors.len() || vectors.iter().any(|v| v.grid() != &grid) {
            return Err(LabError::InvalidArgument("eigenbasis parts disagree".into()));
        }
        let b = BandedSpd::biharmonic(&grid, 1.0, 0.0);
        let residuals = lambdas
            .iter()
            .zip(&vectors)
            .map(|(&l, v)| relative_residual(&b, v.values(), l))
            .collect();
        Ok(Self { grid, lambdas, vectors, residuals })
    }
}

fn relative_residual(b: &BandedSpd, x: &[f64], lambda: f64) -> f64 {
    let bx = b.matvec(x);
    let num: f64 = bx.iter().zip(x).map(|(p, q)| (p - lambda * q).powi(2)).sum();
    let den: f64 = x.iter().map(|q| q * q).sum();
    (num / den).sqrt() / lambda
}

fn orthonormalize(x: DMatrix<f64>) -> DMatrix<f64> {
    x.qr().q()
}

/// The `m` smallest clamped eigenpairs.
pub fn dirichlet_eigenpairs(grid: &Grid2D, m: usize, eigtol: f64) -> Result<EigenBasis> {
    if grid.bc() != BoundaryCondition::Dirichlet {
        return Err(LabError::InvalidArgument("eigenpairs require a clamped grid".into()));
    }
    let dim = grid.len();
    if m == 0 || m > dim {
        return Err(LabError::InvalidArgument(format!("cannot compute {m} of {dim} eigenpairs")));
    }
    let b = BandedSpd::biharmonic(grid, 1.0, 0.0);
    if 4 * m >= dim || dim <= 400 {
        return dense_eigenpairs(grid, m, &b);
    }
    let chol = b.cholesky()?;
    let p = (2 * m + 2).min(dim);
    let mut r = samplers::rng(0x5eed);
    let mut q = orthonormalize(DMatrix::from_fn(dim, p, |_, _| {
        use rand::Rng;
        r.gen_range(-1.0..1.0)
    }));
    let mut worst = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let cols: Vec<Vec<f64>> = (0..p).map(|c| q.column(c).iter().copied().collect()).collect();
        let solved = chol.solve_many(&cols);
        let z = DMatrix::from_fn(dim, p, |i, c| solved[c][i]);
        let zq = orthonormalize(z);
        let bz: Vec<Vec<f64>> =
            parallel::map_indexed(p, |c| b.matvec(&zq.column(c).iter().copied().collect::<Vec<_>>()));
        let bzm = DMatrix::from_fn(dim, p, |i, c| bz[c][i]);
        let t = zq.transpose() * &bzm;
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
        let y = DMatrix::from_fn(p, p, |i, c| eig.eigenvectors[(i, order[c])]);
        let theta: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        q = &zq * y;
        let res: Vec<f64> = parallel::map_indexed(m, |c| {
            let x: Vec<f64> = q.column(c).iter().copied().collect();
            relative_residual(&b, &x, theta[c])
        });
        worst = res.iter().copied().fold(0.0, f64::max);
        if worst <= eigtol {
            let vecs: Vec<Vec<f64>> = (0..m).map(|c| q.column(c).iter().copied().collect()).collect();
            return finish(grid, theta[..m].to_vec(), vecs, res);
        }
    }
    Err(LabError::NonConvergence { what: "block inverse iteration", iterations: MAX_SWEEPS, residual: worst })
}

fn dense_eigenpairs(grid: &Grid2D, m: usize, b: &BandedSpd) -> Result<EigenBasis> {
    let dim = grid.len();
    let mat = DMatrix::from_fn(dim, dim, |i, j| b.get(i, j));
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
    let lambdas: Vec<f64> = order[..m].iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs: Vec<Vec<f64>> = order[..m]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let res = lambdas
        .iter()
        .zip(&vecs)
        .map(|(&l, v)| relative_residual(b, v, l))
        .collect();
    finish(grid, lambdas, vecs, res)
}

/// Scales to unit `L²_h` norm and applies the sign convention.
fn finish(grid: &Grid2D, lambdas: Vec<f64>, vecs: Vec<Vec<f64>>, residuals: Vec<f64>) -> Result<EigenBasis> {
    let (pi, pj) = grid.nearest(0.25, 0.25);
    let probe = grid.index(pi, pj);
    let h = grid.h();
    let mut vectors = Vec::with_capacity(vecs.len());
    for v in vecs {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt() * h;
        let sign = if v[probe] < 0.0 { -1.0 } else { 1.0 };
        let scaled = v.iter().map(|x| sign * x / norm).collect();
        vectors.push(Field2D::from_values(*grid, scaled)?);
    }
    if nonlinear_I(&vectors[0]) < 0.0 {
        vectors[0] = vectors[0].scaled(-1.0);
    }
    Ok(EigenBasis { grid: *grid, lambdas, vectors, residuals })
}

/// Full clamped spectrum by a dense solve, `n ≤ 16` only.
pub fn dense_basis(grid: &Grid2D) -> Result<EigenBasis> {
    if grid.n() > 16 {
        return Err(LabError::InvalidArgument("dense spectrum limited to n <= 16".into()));
    }
    let b = BandedSpd::biharmonic(grid, 1.0, 0.0);
    dense_eigenpairs(grid, grid.len(), &b)
}

/// `Σ_{i<k} ⟨v, e_i⟩ e_i`.
pub fn project_pk(v: &Field2D, basis: &EigenBasis, k: usize) -> Result<Field2D> {
    if k == 0 || k > basis.len() + 1 {
        return Err(LabError::InvalidArgument(format!(
            "projector index {k} outside 1..={}",
            basis.len() + 1
        )));
    }
    let mut out = Field2D::zeros(*v.grid());
    for e in &basis.vectors[..k - 1] {
        out.axpy(inner(v, e), e);
    }
    Ok(out)
}

/// `‖w‖² / ‖w‖₂²` for `w = v − P_k v`.
pub fn poincare_ratio(v: &Field2D, basis: &EigenBasis, k: usize) -> Result<f64> {
    let w = v - &project_pk(v, basis, k)?;
    let l2 = inner(&w, &w);
    if l2 <= 1e-28 * inner(v, v).max(f64::MIN_POSITIVE) || l2 == 0.0 {
        return Err(LabError::Degenerate("remainder after projection vanishes".into()));
    }
    Ok(h2_sq(&w) / l2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn clamped(n: usize) -> Grid2D {
        Grid2D::new(n, BoundaryCondition::Dirichlet).unwrap()
    }

    #[test]
    fn iterative_matches_dense() {
        let g = clamped(24);
        let it = dirichlet_eigenpairs(&g, 5, EIGTOL).unwrap();
        let b = BandedSpd::biharmonic(&g, 1.0, 0.0);
        let dense = dense_eigenpairs(&g, 5, &b).unwrap();
        for i in 1..=5 {
            assert!((it.lambda(i) / dense.lambda(i) - 1.0).abs() < 1e-10);
        }
        assert!(it.orthonormality_defect() < 1e-8);
        assert!(it.residuals().iter().all(|&r| r <= EIGTOL));
    }

    #[test]
    fn ordering_sign_and_bound() {
        let g = clamped(32);
        let basis = dirichlet_eigenpairs(&g, 6, EIGTOL).unwrap();
        assert!(basis.lambdas().windows(2).all(|w| w[0] <= w[1]));
        assert!(basis.lambda(1) >= 4.0 * PI.powi(4));
        assert!(nonlinear_I(basis.vector(1)) > 0.0);
        let (i, j) = g.nearest(0.25, 0.25);
        assert!(basis.vector(2).get(i, j) > 0.0);
    }

    #[test]
    fn projector_algebra() {
        let g = clamped(20);
        let basis = dirichlet_eigenpairs(&g, 5, EIGTOL).unwrap();
        let e1 = basis.vector(1);
        assert!((&project_pk(e1, &basis, 3).unwrap() - e1).max_abs() < 1e-8);
        assert!(project_pk(basis.vector(3), &basis, 3).unwrap().max_abs() < 1e-8);
        let v = samplers::random_nodal(g, &mut samplers::rng(2));
        let p = project_pk(&v, &basis, 4).unwrap();
        let pp = project_pk(&p, &basis, 4).unwrap();
        assert!((&pp - &p).max_abs() < 1e-8);
        assert!(project_pk(&v, &basis, 7).is_err());
    }

    #[test]
    fn poincare_equality_cases() {
        let g = clamped(20);
        let basis = dirichlet_eigenpairs(&g, 6, EIGTOL).unwrap();
        let r = poincare_ratio(basis.vector(3), &basis, 3).unwrap();
        assert!((r / basis.lambda(3) - 1.0).abs() < 1e-7);
        let mix = basis.vector(3) + basis.vector(4);
        let r = poincare_ratio(&mix, &basis, 3).unwrap();
        assert!(r >= basis.lambda(3) * (1.0 - 1e-7) && r <= basis.lambda(4) * (1.0 + 1e-7));
        assert!(poincare_ratio(basis.vector(1), &basis, 3).is_err());
    }

    #[test]
    fn rejects_hinged_grids() {
        let g = Grid2D::new(8, BoundaryCondition::Navier).unwrap();
        assert!(dirichlet_eigenpairs(&g, 1, EIGTOL).is_err());
    }
}
