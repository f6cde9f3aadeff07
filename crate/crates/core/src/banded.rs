//! Symmetric positive definite banded matrices with an in-place Cholesky
//! factorization. Used for the assembled biharmonic and its shifts.

use crate::error::{LabError, Result};
use crate::grid::{BoundaryCondition, Grid2D};
use crate::parallel;

/// Lower band storage: entry `(p, q)` with `0 <= p - q <= bw` lives at
/// `data[p * (bw + 1) + (p - q)]`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    dim: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(dim: usize, bw: usize) -> Self {
        Self { dim, bw, data: vec![0.0; dim * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Entry `(p, q)` of the symmetric matrix.
    pub fn get(&self, p: usize, q: usize) -> f64 {
        let (p, q) = if p >= q { (p, q) } else { (q, p) };
        if p - q > self.bw {
            0.0
        } else {
            self.data[p * (self.bw + 1) + (p - q)]
        }
    }

    /// Adds `v` to entry `(p, q)` (and its mirror).
    pub fn add(&mut self, p: usize, q: usize, v: f64) {
        let (p, q) = if p >= q { (p, q) } else { (q, p) };
        assert!(p - q <= self.bw, "entry outside band");
        self.data[p * (self.bw + 1) + (p - q)] += v;
    }

    /// `shift · I + scale · B` for the grid's biharmonic matrix `B`.
    pub fn biharmonic(grid: &Grid2D, scale: f64, shift: f64) -> Self {
        let n = grid.n();
        let h4 = grid.h().powi(4);
        let s = scale / h4;
        let edge = match grid.bc() {
            BoundaryCondition::Dirichlet => 1.0,
            BoundaryCondition::Navier => -1.0,
        };
        let mut m = Self::zeros(n * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let p = grid.index(i, j);
                let sides = [i == 0, i == n - 1, j == 0, j == n - 1]
                    .iter()
                    .filter(|&&b| b)
                    .count() as f64;
                m.add(p, p, shift + s * (20.0 + edge * sides));
                // lower-triangle neighbours only (q < p)
                let mut put = |di: isize, dj: isize, c: f64| {
                    let (a, b) = (i as isize + di, j as isize + dj);
                    if a >= 0 && b >= 0 && (a as usize) < n && (b as usize) < n {
                        m.add(p, grid.index(a as usize, b as usize), s * c);
                    }
                };
                put(-1, 0, -8.0);
                put(0, -1, -8.0);
                put(-2, 0, 1.0);
                put(0, -2, 1.0);
                put(-1, -1, 2.0);
                put(-1, 1, 2.0);
            }
        }
        m
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for p in 0..self.dim {
            let row = &self.data[p * (self.bw + 1)..(p + 1) * (self.bw + 1)];
            y[p] += row[0] * x[p];
            for d in 1..=self.bw.min(p) {
                let a = row[d];
                if a != 0.0 {
                    y[p] += a * x[p - d];
                    y[p - d] += a * x[p];
                }
            }
        }
        y
    }

    /// Cholesky factorization `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let (dim, bw) = (self.dim, self.bw);
        let w = bw + 1;
        let mut l = self.data.clone();
        for p in 0..dim {
            let lo = p.saturating_sub(bw);
            for q in lo..=p {
                // dot of rows p and q over columns in [max(lo_p, lo_q), q)
                let lo_q = q.saturating_sub(bw);
                let start = lo.max(lo_q);
                let mut sum = l[p * w + (p - q)];
                for k in start..q {
                    sum -= l[p * w + (p - k)] * l[q * w + (q - k)];
                }
                if q == p {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(LabError::LinearSolve(format!(
                            "matrix not positive definite at pivot {p} ({sum:e})"
                        )));
                    }
                    l[p * w] = sum.sqrt();
                } else {
                    l[p * w + (p - q)] = sum / l[q * w];
                }
            }
        }
        Ok(BandedCholesky { dim, bw, l })
    }
}

/// Banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    dim: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.dim);
        let w = self.bw + 1;
        for p in 0..self.dim {
            let lo = p.saturating_sub(self.bw);
            let mut s = b[p];
            for k in lo..p {
                s -= self.l[p * w + (p - k)] * b[k];
            }
            b[p] = s / self.l[p * w];
        }
        for p in (0..self.dim).rev() {
            b[p] /= self.l[p * w];
            let v = b[p];
            let lo = p.saturating_sub(self.bw);
            for k in lo..p {
                b[k] -= self.l[p * w + (p - k)] * v;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Independent solves for a block of right-hand sides.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        parallel::map_slice(rhs, |b| self.solve(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field2D;
    use crate::operators::{biharmonic, inner, laplacian_energy};

    fn sample(g: Grid2D) -> Field2D {
        Field2D::from_fn(g, |x, y| (3.0 * x + 1.7 * y).sin() + x * y * y - 0.3)
    }

    #[test]
    fn assembled_matrix_matches_operator() {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Navier] {
            let g = Grid2D::new(9, bc).unwrap();
            let u = sample(g);
            let op = biharmonic(&u);
            let m = BandedSpd::biharmonic(&g, 1.0, 0.0).matvec(u.values());
            let scale = op.max_abs();
            for (a, b) in op.values().iter().zip(&m) {
                assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn quadratic_form_is_laplacian_energy() {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Navier] {
            let g = Grid2D::new(11, bc).unwrap();
            let u = sample(g);
            let q = inner(&u, &biharmonic(&u));
            let e = laplacian_energy(&u);
            assert!((q - e).abs() <= 1e-11 * e, "{q} vs {e}");
        }
    }

    #[test]
    fn cholesky_solves_shifted_system() {
        let g = Grid2D::new(12, BoundaryCondition::Dirichlet).unwrap();
        let a = BandedSpd::biharmonic(&g, 1e-3, 1.0);
        let f = a.cholesky().unwrap();
        let x: Vec<f64> = (0..g.len()).map(|k| ((k * 37 % 11) as f64) - 5.0).collect();
        let b = a.matvec(&x);
        let y = f.solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-9);
        }
        let many = f.solve_many(&[b.clone(), b]);
        assert_eq!(many[0], many[1]);
    }

    #[test]
    fn rejects_indefinite() {
        let g = Grid2D::new(4, BoundaryCondition::Navier).unwrap();
        let a = BandedSpd::biharmonic(&g, -1.0, 0.0);
        assert!(a.cholesky().is_err());
    }
}
