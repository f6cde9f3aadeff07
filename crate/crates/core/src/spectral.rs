//! Double-sine representation for hinged (Navier) boundaries, where the
//! biharmonic is diagonal: `Δ² φ_kl = π⁴(k²+l²)² φ_kl` with
//! `φ_kl = 2 sin(kπx) sin(lπy)`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::grid::{parse_header, read_matrix, tag_value, write_matrix, BoundaryCondition, Field2D, Grid2D};

/// Navier biharmonic eigenvalue of mode `(k, l)`, both indices from 1.
pub fn spectrum(k: usize, l: usize) -> f64 {
    assert!(k >= 1 && l >= 1, "mode indices start at 1");
    let s = (k * k + l * l) as f64;
    PI.powi(4) * s * s
}

/// `K × K` coefficients; entry `(k, l)` (1-based) multiplies `φ_kl`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    modes: usize,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(modes: usize) -> Self {
        Self { modes, coeffs: vec![0.0; modes * modes] }
    }

    pub fn from_coeffs(modes: usize, coeffs: Vec<f64>) -> Result<Self> {
        if modes == 0 || coeffs.len() != modes * modes {
            return Err(LabError::InvalidArgument(format!(
                "expected {modes}x{modes} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self { modes, coeffs })
    }

    /// Single mode `a · φ_kl`.
    pub fn mode(modes: usize, k: usize, l: usize, a: f64) -> Result<Self> {
        if k == 0 || l == 0 || k > modes || l > modes {
            return Err(LabError::InvalidArgument(format!(
                "mode ({k},{l}) outside truncation {modes}"
            )));
        }
        let mut s = Self::zeros(modes);
        s.coeffs[(k - 1) * modes + (l - 1)] = a;
        Ok(s)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.coeffs[(k - 1) * self.modes + (l - 1)]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { modes: self.modes, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// `‖u‖₂²`, exact by orthonormality.
    pub fn l2_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `‖Δu‖₂²`, exact.
    pub fn h2_sq(&self) -> f64 {
        self.weighted_sq(|k, l| spectrum(k, l))
    }

    /// `‖Δ²u‖₂²`, exact.
    pub fn bilaplacian_sq(&self) -> f64 {
        self.weighted_sq(|k, l| spectrum(k, l).powi(2))
    }

    fn weighted_sq<F: Fn(usize, usize) -> f64>(&self, w: F) -> f64 {
        let mut s = 0.0;
        for k in 1..=self.modes {
            for l in 1..=self.modes {
                let c = self.get(k, l);
                s += w(k, l) * c * c;
            }
        }
        s
    }

    /// `‖a − b‖₂`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.modes, self.modes, &self.coeffs)
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let modes = m.nrows();
        let mut coeffs = Vec::with_capacity(modes * modes);
        for k in 0..modes {
            for l in 0..modes {
                coeffs.push(m[(k, l)]);
            }
        }
        Self { modes, coeffs }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# spectral K={}", self.modes)?;
        write_matrix(&mut w, &self.coeffs, self.modes)
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| LabError::InvalidArgument("empty spectral csv".into()))??;
        let tags = parse_header(&header, "spectral")?;
        let modes: usize = tag_value(&tags, "K")?;
        let coeffs = read_matrix(lines, modes, modes)?;
        Self::from_coeffs(modes, coeffs)
    }
}

/// `S[i][k] = sin((k+1)π x_i)` over interior nodes.
fn sine_matrix(grid: &Grid2D, modes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(grid.n(), modes, |i, k| ((k + 1) as f64 * PI * grid.coord(i)).sin())
}

fn check_resolution(grid: &Grid2D, modes: usize) -> Result<()> {
    if modes == 0 || modes > grid.n() {
        return Err(LabError::InvalidArgument(format!(
            "truncation K={modes} not resolved by n={} (aliasing)",
            grid.n()
        )));
    }
    Ok(())
}

/// Evaluates the sine sum at the interior nodes of `grid`.
pub fn to_physical(s: &SpectralField, grid: &Grid2D) -> Result<Field2D> {
    check_resolution(grid, s.modes)?;
    let sm = sine_matrix(grid, s.modes);
    let u = (&sm * s.as_matrix() * sm.transpose()) * 2.0;
    field_from_matrix(grid, &u)
}

/// Discrete sine coefficients `c = 2h² Sᵀ U S`.
pub fn from_physical(u: &Field2D, modes: usize) -> Result<SpectralField> {
    check_resolution(u.grid(), modes)?;
    let sm = sine_matrix(u.grid(), modes);
    let h = u.grid().h();
    let um = DMatrix::from_row_slice(u.n(), u.n(), u.values());
    let c = (sm.transpose() * um * &sm) * (2.0 * h * h);
    Ok(SpectralField::from_matrix(&c))
}

fn field_from_matrix(grid: &Grid2D, m: &DMatrix<f64>) -> Result<Field2D> {
    let n = grid.n();
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            v.push(m[(i, j)]);
        }
    }
    Field2D::from_values(grid.with_bc(BoundaryCondition::Navier), v)
}

/// Nodal values of `u` and its derivatives on all `(n+2)²` nodes,
/// boundary included.
#[derive(Debug, Clone)]
pub struct NodalDerivatives {
    pub u: DMatrix<f64>,
    pub ux: DMatrix<f64>,
    pub uy: DMatrix<f64>,
    pub uxx: DMatrix<f64>,
    pub uyy: DMatrix<f64>,
    pub uxy: DMatrix<f64>,
}

/// Cached sine/cosine tables for pseudo-spectral evaluation on a grid with
/// `n ≥ 2K` (quadratic nonlinearities are then unaliased in each factor).
#[derive(Debug, Clone)]
pub struct NavierBasis {
    modes: usize,
    grid: Grid2D,
    sin_full: DMatrix<f64>,
    cos_full: DMatrix<f64>,
    sin_int: DMatrix<f64>,
    wave: Vec<f64>,
}

impl NavierBasis {
    pub fn new(modes: usize, grid: Grid2D) -> Result<Self> {
        if modes == 0 || grid.n() < 2 * modes {
            return Err(LabError::InvalidArgument(format!(
                "nonlinear evaluation needs n >= 2K (n={}, K={modes})",
                grid.n()
            )));
        }
        let pts = grid.n() + 2;
        let x = |i: usize| i as f64 / (grid.n() + 1) as f64;
        let sin_full = DMatrix::from_fn(pts, modes, |i, k| {
            if i == 0 || i == pts - 1 {
                0.0
            } else {
                ((k + 1) as f64 * PI * x(i)).sin()
            }
        });
        let cos_full = DMatrix::from_fn(pts, modes, |i, k| ((k + 1) as f64 * PI * x(i)).cos());
        let sin_int = sine_matrix(&grid, modes);
        let wave = (1..=modes).map(|k| k as f64 * PI).collect();
        Ok(Self {
            modes,
            grid: grid.with_bc(BoundaryCondition::Navier),
            sin_full,
            cos_full,
            sin_int,
            wave,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn weighted(&self, c: &DMatrix<f64>, px: i32, py: i32, sign: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.modes, self.modes, |k, l| {
            sign * self.wave[k].powi(px) * self.wave[l].powi(py) * c[(k, l)]
        })
    }

    pub fn derivatives(&self, s: &SpectralField) -> NodalDerivatives {
        assert_eq!(s.modes, self.modes);
        let c = s.as_matrix() * 2.0;
        let (sn, cs) = (&self.sin_full, &self.cos_full);
        let ev = |a: &DMatrix<f64>, m: DMatrix<f64>, b: &DMatrix<f64>| a * m * b.transpose();
        NodalDerivatives {
            u: ev(sn, c.clone(), sn),
            ux: ev(cs, self.weighted(&c, 1, 0, 1.0), sn),
            uy: ev(sn, self.weighted(&c, 0, 1, 1.0), cs),
            uxx: ev(sn, self.weighted(&c, 2, 0, -1.0), sn),
            uyy: ev(sn, self.weighted(&c, 0, 2, -1.0), sn),
            uxy: ev(cs, self.weighted(&c, 1, 1, 1.0), cs),
        }
    }

    /// Trapezoid rule over all nodes.
    pub fn trapezoid(&self, w: &DMatrix<f64>) -> f64 {
        let pts = w.nrows();
        let h = self.grid.h();
        let wt = |i: usize| if i == 0 || i == pts - 1 { 0.5 } else { 1.0 };
        let mut s = 0.0;
        for i in 0..pts {
            let mut row = 0.0;
            for j in 0..pts {
                row += wt(j) * w[(i, j)];
            }
            s += wt(i) * row;
        }
        h * h * s
    }

    /// Projects interior nodal values onto the retained modes.
    pub fn project(&self, values: &DMatrix<f64>) -> SpectralField {
        let h = self.grid.h();
        let c = (self.sin_int.transpose() * values * &self.sin_int) * (2.0 * h * h);
        SpectralField::from_matrix(&c)
    }

    fn interior(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.grid.n();
        m.view((1, 1), (n, n)).into_owned()
    }

    /// Pseudo-spectral `det(D²u)` projected onto the retained modes.
    pub fn hessian_det(&self, s: &SpectralField) -> SpectralField {
        let d = self.derivatives(s);
        self.project(&self.interior(&det(&d)))
    }

    /// `(I(u), ∫|∇u|⁴, ∫Δu|∇u|², max|u|)` from a single evaluation.
    pub fn functionals(&self, s: &SpectralField) -> (f64, f64, f64, f64) {
        let d = self.derivatives(s);
        let i_int = self.trapezoid(&d.ux.component_mul(&d.uy).component_mul(&d.uxy));
        let g2 = d.ux.component_mul(&d.ux) + d.uy.component_mul(&d.uy);
        let w4 = self.trapezoid(&g2.component_mul(&g2));
        let lap = &d.uxx + &d.uyy;
        let cg = self.trapezoid(&lap.component_mul(&g2));
        let linf = d.u.amax();
        (i_int, w4, cg, linf)
    }

    pub fn to_field(&self, s: &SpectralField) -> Field2D {
        let u = &self.sin_int * (s.as_matrix() * 2.0) * self.sin_int.transpose();
        field_from_matrix(&self.grid, &u).expect("sized by construction")
    }

    pub fn from_field(&self, u: &Field2D) -> SpectralField {
        let m = DMatrix::from_row_slice(u.n(), u.n(), u.values());
        self.project(&m)
    }
}

fn det(d: &NodalDerivatives) -> DMatrix<f64> {
    d.uxx.component_mul(&d.uyy) - d.uxy.component_mul(&d.uxy)
}

/// Exact exponential update of `c' = −Λc + N` over `dt` with `N` frozen.
pub fn exponential_step(c: &SpectralField, forcing: &SpectralField, dt: f64) -> SpectralField {
    assert_eq!(c.modes, forcing.modes);
    let mut out = SpectralField::zeros(c.modes);
    for k in 1..=c.modes {
        for l in 1..=c.modes {
            let lam = spectrum(k, l);
            let decay = (-lam * dt).exp();
            let gain = -(-lam * dt).exp_m1() / lam;
            out.coeffs[(k - 1) * c.modes + (l - 1)] = decay * c.get(k, l) + gain * forcing.get(k, l);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{biharmonic, integrate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn navier(n: usize) -> Grid2D {
        Grid2D::new(n, BoundaryCondition::Navier).unwrap()
    }

    #[test]
    fn spectrum_values() {
        assert!((spectrum(1, 1) - 389.636).abs() < 1e-3);
        assert!((spectrum(1, 2) - 2435.23).abs() < 1e-2);
        assert_eq!(spectrum(2, 3), spectrum(3, 2));
        assert_eq!(spectrum(2, 3), 169.0 * PI.powi(4));
    }

    #[test]
    fn single_mode_roundtrip() {
        let g = navier(20);
        let s = SpectralField::mode(6, 1, 1, 1.0).unwrap();
        let u = to_physical(&s, &g).unwrap();
        let (i, j) = (3, 7);
        let expect = 2.0 * (PI * g.coord(i)).sin() * (PI * g.coord(j)).sin();
        assert!((u.get(i, j) - expect).abs() < 1e-14);
        let back = from_physical(&u, 6).unwrap();
        assert!((back.get(1, 1) - 1.0).abs() < 1e-12);
        for (idx, c) in back.coeffs().iter().enumerate() {
            if idx != 0 {
                assert!(c.abs() <= 1e-12);
            }
        }
        let z = from_physical(&Field2D::zeros(g), 6).unwrap();
        assert!(z.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn rejects_aliasing() {
        let g = navier(8);
        assert!(to_physical(&SpectralField::zeros(9), &g).is_err());
        assert!(from_physical(&Field2D::zeros(g), 9).is_err());
        assert!(NavierBasis::new(5, g).is_err());
    }

    fn random_coeffs(modes: usize, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = (0..modes * modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SpectralField::from_coeffs(modes, c).unwrap()
    }

    #[test]
    fn random_roundtrip_k16_n64() {
        let s = random_coeffs(16, 3);
        let back = from_physical(&to_physical(&s, &navier(64)).unwrap(), 16).unwrap();
        let err = s.coeffs().iter().zip(back.coeffs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn transform_matches_direct_summation() {
        let g = navier(9);
        let s = random_coeffs(4, 11);
        let u = to_physical(&s, &g).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let mut direct = 0.0;
                for k in 1..=4 {
                    for l in 1..=4 {
                        direct += s.get(k, l)
                            * 2.0
                            * (k as f64 * PI * g.coord(i)).sin()
                            * (l as f64 * PI * g.coord(j)).sin();
                    }
                }
                assert!((u.get(i, j) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parseval_on_band_limited_fields() {
        let g = navier(32);
        let s = random_coeffs(8, 5);
        let u = to_physical(&s, &g).unwrap();
        let lhs = integrate(&u.map(|v| v * v));
        assert!((lhs - s.l2_sq()).abs() <= 1e-12 * s.l2_sq());
    }

    #[test]
    fn finite_difference_biharmonic_is_near_diagonal() {
        let g = navier(64);
        let s = SpectralField::mode(4, 2, 1, 1.0).unwrap();
        let u = to_physical(&s, &g).unwrap();
        let b = biharmonic(&u);
        let err = (&b - &u.scaled(spectrum(2, 1))).max_abs() / b.max_abs();
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn exponential_step_is_exact_for_linear_modes() {
        let s = SpectralField::mode(3, 1, 1, 1.0).unwrap();
        let z = SpectralField::zeros(3);
        let mut c = s.clone();
        for _ in 0..10 {
            c = exponential_step(&c, &z, 1e-4);
        }
        let expect = (-spectrum(1, 1) * 1e-3).exp();
        assert!((c.get(1, 1) / s.get(1, 1) - expect).abs() < 1e-14);
    }

    #[test]
    fn pseudo_spectral_det_matches_finite_differences() {
        let basis = NavierBasis::new(4, navier(96)).unwrap();
        let mut s = SpectralField::mode(4, 1, 1, 0.3).unwrap();
        s.coeffs_mut()[5] = -0.2;
        let u = basis.to_field(&s);
        let fd = crate::operators::hessian_det(&u);
        let ps = basis.to_field(&basis.hessian_det(&s));
        let fd_proj = basis.to_field(&basis.from_field(&fd));
        let err = (&ps - &fd_proj).max_abs() / ps.max_abs();
        assert!(err < 2e-2, "{err}");
    }

    #[test]
    fn spectral_functionals_on_sine() {
        let basis = NavierBasis::new(2, navier(64)).unwrap();
        let s = SpectralField::mode(2, 1, 1, 0.5).unwrap();
        let (i, _, _, linf) = basis.functionals(&s);
        let exact = 4.0 * PI * PI / 9.0;
        assert!((i - exact).abs() < 10.0 * basis.grid().h().powi(2) * exact, "{i}");
        assert!((linf - 1.0).abs() < 1e-3);
        assert!((s.h2_sq() - PI.powi(4)).abs() < 1e-10);
    }

    #[test]
    fn csv_roundtrip() {
        let s = random_coeffs(5, 9);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(SpectralField::read_csv(&buf[..]).unwrap(), s);
    }
}
