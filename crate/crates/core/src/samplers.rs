//! Deterministic test-field generators compatible with clamped boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Field2D, Grid2D};

pub type LabRng = ChaCha8Rng;

pub fn rng(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `x²(1−x)²y²(1−y)²`.
pub fn clamped_bump(grid: Grid2D) -> Field2D {
    Field2D::from_fn(grid, |x, y| (x * (1.0 - x) * y * (1.0 - y)).powi(2))
}

/// `(1 − s²)⁶` on `|s| < 1`, zero outside.
pub fn bump_profile(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(6)
    }
}

/// One separable bump `a·φ((x−cx)/wx)·φ((y−cy)/wy)` with support inside the
/// open square.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub amplitude: f64,
    pub cx: f64,
    pub cy: f64,
    pub wx: f64,
    pub wy: f64,
}

impl Bump {
    pub fn random(rng: &mut LabRng) -> Self {
        let cx: f64 = rng.gen_range(0.25..0.75);
        let cy: f64 = rng.gen_range(0.25..0.75);
        let wx = rng.gen_range(0.15..0.85) * cx.min(1.0 - cx);
        let wy = rng.gen_range(0.15..0.85) * cy.min(1.0 - cy);
        let amplitude = rng.gen_range(-1.0..1.0);
        Self { amplitude, cx, cy, wx, wy }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.amplitude * bump_profile((x - self.cx) / self.wx) * bump_profile((y - self.cy) / self.wy)
    }
}

/// Sum of `1..=max_bumps` random bumps.
pub fn random_clamped(grid: Grid2D, rng: &mut LabRng, max_bumps: usize) -> Field2D {
    let count = rng.gen_range(1..=max_bumps.max(1));
    let bumps: Vec<Bump> = (0..count).map(|_| Bump::random(rng)).collect();
    Field2D::from_fn(grid, |x, y| bumps.iter().map(|b| b.eval(x, y)).sum())
}

/// Unstructured random nodal values in `[-1, 1)`.
pub fn random_nodal(grid: Grid2D, rng: &mut LabRng) -> Field2D {
    let v = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Field2D::from_values(grid, v).expect("sized by construction")
}
