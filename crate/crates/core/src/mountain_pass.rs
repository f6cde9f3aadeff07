//! Mountain-pass level `d = min_{I(v)=1} ‖v‖⁶/54` on a clamped grid, the
//! embedding lower bound and the stationary solution on the optimal ray.
//!
//! Both minimizations use gradients in the `H²` metric `⟨a, b⟩_B = h² aᵀBb`,
//! i.e. one biharmonic solve per step, which keeps iteration counts
//! independent of the mesh.

use serde::{Deserialize, Serialize};

use crate::banded::{BandedCholesky, BandedSpd};
use crate::error::{LabError, Result};
use crate::grid::{BoundaryCondition, Field2D, Grid2D};
use crate::operators::{biharmonic, gradient, hessian_det, inner};
use crate::parallel;
use crate::samplers;
use crate::variational::{h2_sq, nonlinear_I, norms, variational_det};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MpOptions {
    /// Stop when `‖g‖_B ‖v‖_B ≤ kkt_tol · ‖v‖²`.
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MpOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_iter: 100_000,
            armijo_c: 1e-4,
            backtrack: 0.5,
            initial_step: 0.25,
            restarts: 5,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MountainPassEstimate {
    pub d_min: f64,
    pub d_upper: f64,
    pub d_lower: f64,
    pub v_star: Field2D,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub seed: u64,
    /// `‖v‖²` after every accepted step.
    pub objective: Vec<f64>,
}

/// Biharmonic matrix of a grid with its factorization.
#[derive(Debug, Clone)]
pub struct H2Metric {
    grid: Grid2D,
    chol: BandedCholesky,
}

impl H2Metric {
    pub fn new(grid: &Grid2D) -> Result<Self> {
        let chol = BandedSpd::biharmonic(grid, 1.0, 0.0).cholesky()?;
        Ok(Self { grid: *grid, chol })
    }

    /// `B⁻¹ w`.
    pub fn solve(&self, w: &Field2D) -> Field2D {
        Field2D::from_values(self.grid, self.chol.solve(w.values())).expect("sized by construction")
    }

    /// `⟨a, b⟩_B` for `b = B⁻¹ g` given as the pair `(a, g)`: `⟨a, g⟩₂`.
    fn pair(a: &Field2D, g: &Field2D) -> f64 {
        inner(a, g)
    }
}

/// `‖v‖⁶ / (54 I(v)²)`, the peak of `s ↦ J(sv)`.
pub fn d_upper_from(v: &Field2D) -> Result<f64> {
    let i = nonlinear_I(v);
    if !(i > 0.0) {
        return Err(LabError::Degenerate(format!(
            "I(v) = {i:e} <= 0: the ray has no positive critical point"
        )));
    }
    Ok(h2_sq(v).powi(3) / (54.0 * i * i))
}

fn scale_into_b(v: &Field2D) -> Option<Field2D> {
    let i = nonlinear_I(v);
    if i > 0.0 && i.is_finite() {
        Some(v.scaled(i.cbrt().recip()))
    } else {
        None
    }
}

/// Scale-invariant objective `‖v‖² / I(v)^{2/3}` (`+∞` where `I ≤ 0`).
fn ratio_objective(v: &Field2D) -> f64 {
    let i = nonlinear_I(v);
    if i > 0.0 {
        h2_sq(v) / i.powf(2.0 / 3.0)
    } else {
        f64::INFINITY
    }
}

/// Projected gradient descent for `min ‖v‖²` on `I(v) = 1`.
pub fn minimize_over_b(grid: &Grid2D, init: &Field2D, opts: &MpOptions) -> Result<MountainPassEstimate> {
    let metric = H2Metric::new(&check_clamped(grid)?)?;
    let s = embedding_constant_with(&metric, opts)?;
    descend_on_b(&metric, init, opts, (8.0 / 27.0) * s)
}

fn check_clamped(grid: &Grid2D) -> Result<Grid2D> {
    if grid.bc() != BoundaryCondition::Dirichlet {
        return Err(LabError::InvalidArgument("mountain-pass level needs a clamped grid".into()));
    }
    Ok(*grid)
}

fn descend_on_b(metric: &H2Metric, init: &Field2D, opts: &MpOptions, d_lower: f64) -> Result<MountainPassEstimate> {
    let d_upper = d_upper_from(init)?;
    let mut v = scale_into_b(init).expect("I(init) > 0 checked above");
    let mut f = h2_sq(&v);
    let mut step = opts.initial_step;
    let mut objective = vec![f];
    let mut kkt = f64::INFINITY;
    for it in 0..opts.max_iter {
        let gv = variational_det(&v);
        let q = metric.solve(&gv);
        let qq = H2Metric::pair(&q, &gv);
        // g = 2v − (⟨2v, q⟩_B / ⟨q, q⟩_B) q with ⟨v, q⟩_B = 3I(v) = 3
        let mut g = v.scaled(2.0);
        g.axpy(-6.0 / qq, &q);
        let gg = h2_sq_b(&g, metric);
        kkt = gg.sqrt() * f.sqrt();
        if kkt <= opts.kkt_tol * f {
            return Ok(finish(v, f, d_upper, d_lower, kkt, it, opts.seed, objective));
        }
        let phi0 = f;
        let mut accepted = None;
        let mut trial = step;
        for _ in 0..60 {
            let mut w = v.clone();
            w.axpy(-trial, &g);
            let phi = ratio_objective(&w);
            if phi <= phi0 - opts.armijo_c * trial * gg {
                accepted = Some(w);
                break;
            }
            trial *= opts.backtrack;
        }
        let Some(w) = accepted else {
            return Err(LabError::Stalled {
                what: "line search on the constraint set",
                iterations: it,
                residual: kkt / f,
                best: Box::new(v),
            });
        };
        v = scale_into_b(&w).expect("Armijo step keeps I > 0");
        f = h2_sq(&v);
        objective.push(f);
        step = if trial == step { (step * 2.0).min(1e3) } else { trial };
    }
    Err(LabError::Stalled {
        what: "constrained descent",
        iterations: opts.max_iter,
        residual: kkt / f,
        best: Box::new(v),
    })
}

/// `‖g‖_B² = h² gᵀ B g`, evaluated through the operator.
fn h2_sq_b(g: &Field2D, _metric: &H2Metric) -> f64 {
    inner(g, &biharmonic(g))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    v: Field2D,
    f: f64,
    d_upper: f64,
    d_lower: f64,
    kkt: f64,
    iterations: usize,
    seed: u64,
    objective: Vec<f64>,
) -> MountainPassEstimate {
    MountainPassEstimate {
        d_min: f.powi(3) / 54.0,
        d_upper,
        d_lower,
        v_star: v,
        kkt_residual: kkt,
        iterations,
        seed,
        objective,
    }
}

/// `∇_{L²} ∫|∇v|⁴ = −4[δ_x(|∇v|² δ_x v) + δ_y(|∇v|² δ_y v)]`.
fn w14_gradient(v: &Field2D) -> Field2D {
    let (a, b) = gradient(v);
    let g2 = a.zip_with(&b, |x, y| x * x + y * y);
    let fa = g2.zip_with(&a, |p, q| p * q);
    let fb = g2.zip_with(&b, |p, q| p * q);
    let mut out = gradient(&fa).0;
    out.axpy(1.0, &gradient(&fb).1);
    out.scaled(-4.0)
}

/// `S = min (∫|Δv|²)² / ∫|∇v|⁴`; the level satisfies `d ≥ (8/27) S`.
pub fn embedding_constant(grid: &Grid2D, opts: &MpOptions) -> Result<f64> {
    let metric = H2Metric::new(&check_clamped(grid)?)?;
    embedding_constant_with(&metric, opts)
}

fn embedding_constant_with(metric: &H2Metric, opts: &MpOptions) -> Result<f64> {
    let grid = metric.grid;
    let mut v = normalize(&samplers::clamped_bump(grid));
    let ratio = |v: &Field2D| {
        let nb = norms(v);
        nb.h2.powi(4) / nb.w14_4
    };
    let mut r = ratio(&v);
    let mut step = opts.initial_step;
    for it in 0..opts.max_iter {
        let nb = norms(&v);
        let (f, w) = (nb.h2 * nb.h2, nb.w14_4);
        let dw = w14_gradient(&v);
        let qw = metric.solve(&dw);
        // ∇_B R = 4F v / W − F² B⁻¹∇W / W²
        let mut g = v.scaled(4.0 * f / w);
        g.axpy(-f * f / (w * w), &qw);
        let gg = inner(&g, &biharmonic(&g));
        if gg.sqrt() * f.sqrt() <= opts.kkt_tol * r {
            return Ok(r);
        }
        let mut trial = step;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = v.clone();
            cand.axpy(-trial, &g);
            let rc = ratio(&cand);
            if rc <= r - opts.armijo_c * trial * gg {
                accepted = Some((cand, rc));
                break;
            }
            trial *= opts.backtrack;
        }
        let Some((cand, rc)) = accepted else {
            return Err(LabError::Stalled {
                what: "embedding-constant descent",
                iterations: it,
                residual: gg.sqrt(),
                best: Box::new(v),
            });
        };
        v = normalize(&cand);
        r = rc;
        step = if trial == step { (step * 2.0).min(1e3) } else { trial };
    }
    Err(LabError::Stalled {
        what: "embedding-constant descent",
        iterations: opts.max_iter,
        residual: f64::NAN,
        best: Box::new(v),
    })
}

fn normalize(v: &Field2D) -> Field2D {
    v.scaled(h2_sq(v).sqrt().recip())
}

/// `u* = (‖v*‖²/3) v*` and its relative stationarity residual
/// `‖Δ²u* − det(D²u*)‖₂ / ‖Δ²u*‖₂` with the nodal determinant.
pub fn stationary_solution(est: &MountainPassEstimate) -> (Field2D, f64) {
    let u = est.v_star.scaled(h2_sq(&est.v_star) / 3.0);
    (u.clone(), stationarity_residual(&u))
}

pub fn stationarity_residual(u: &Field2D) -> f64 {
    let bu = biharmonic(u);
    let r = &bu - &hessian_det(u);
    (inner(&r, &r) / inner(&bu, &bu)).sqrt()
}

/// Restart summary: the best estimate and the spread of `d_min` values.
#[derive(Debug, Clone)]
pub struct MountainPassRun {
    pub best: MountainPassEstimate,
    pub restart_d: Vec<Option<f64>>,
    pub embedding: f64,
}

impl MountainPassRun {
    /// `(max − min) / min` over converged restarts.
    pub fn spread(&self) -> f64 {
        let ds: Vec<f64> = self.restart_d.iter().flatten().copied().collect();
        let lo = ds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / lo
    }
}

/// Random positive-`I` initial field for restart `k`.
pub fn restart_field(grid: Grid2D, seed: u64, k: usize) -> Field2D {
    let mut r = samplers::rng(seed.wrapping_mul(0x9e37_79b9).wrapping_add(k as u64));
    loop {
        let v = samplers::random_clamped(grid, &mut r, 3);
        let i = nonlinear_I(&v);
        if i > 0.0 {
            return v;
        }
        if i < 0.0 {
            return v.scaled(-1.0);
        }
    }
}

/// The signed clamped bump plus `opts.restarts` random restarts; keeps the
/// least `d_min`.
pub fn mountain_pass_level(grid: &Grid2D, opts: &MpOptions) -> Result<MountainPassRun> {
    let metric = H2Metric::new(&check_clamped(grid)?)?;
    let embedding = embedding_constant_with(&metric, opts)?;
    let d_lower = (8.0 / 27.0) * embedding;
    let inits: Vec<Field2D> = std::iter::once(samplers::clamped_bump(*grid))
        .chain((0..opts.restarts).map(|k| restart_field(*grid, opts.seed, k)))
        .collect();
    let runs = parallel::map_slice(&inits, |init| descend_on_b(&metric, init, opts, d_lower));
    let restart_d = runs.iter().map(|r| r.as_ref().ok().map(|e| e.d_min)).collect();
    let mut best: Option<MountainPassEstimate> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(e) => {
                if best.as_ref().map_or(true, |b| e.d_min < b.d_min) {
                    best = Some(e);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(mut b) => {
            b.d_upper = b.d_upper.min(d_upper_from(&inits[0])?);
            Ok(MountainPassRun { best: b, restart_d, embedding })
        }
        None => Err(first_err.expect("at least one run")),
    }
}
