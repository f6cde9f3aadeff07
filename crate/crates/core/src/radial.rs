//! Radial hinged problem `u_t = u_r u_rr / r − Δ_r²u` on the unit disk.
//!
//! Nodes `r_j = j/m`, `j = 0..=m`, with `u_m = 0`. The symmetry ghost
//! `u_{−1} = u_1` fixes the row at the origin, and `Δ_r u(1) = 0` is imposed
//! by squaring the Dirichlet radial Laplacian.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::evolution::{fit_pole, EvolutionOptions, FateKind, FateVerdict};
use crate::parallel::map_slice;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    values: Vec<f64>,
}

impl RadialField {
    pub fn zeros(m: usize) -> Self {
        Self { values: vec![0.0; m + 1] }
    }

    /// Samples `f` at the nodes; the boundary node is set to 0.
    pub fn from_fn<F: Fn(f64) -> f64>(m: usize, f: F) -> Result<Self> {
        if m < 4 {
            return Err(LabError::InvalidArgument(format!("radial node count m = {m} must be at least 4")));
        }
        let mut values: Vec<f64> = (0..=m).map(|j| f(j as f64 / m as f64)).collect();
        values[m] = 0.0;
        Ok(Self { values })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 5 {
            return Err(LabError::InvalidArgument("radial field needs at least 5 nodes".into()));
        }
        if *values.last().unwrap() != 0.0 {
            return Err(LabError::InvalidArgument("radial field must vanish at r = 1".into()));
        }
        Ok(Self { values })
    }

    /// `a · [2(1 − r²) + (1 − r²)²]`, which satisfies both boundary conditions.
    pub fn profile(m: usize, a: f64) -> Result<Self> {
        Self::from_fn(m, |r| {
            let s = 1.0 - r * r;
            a * (2.0 * s + s * s)
        })
    }

    pub fn m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn hr(&self) -> f64 {
        1.0 / self.m() as f64
    }

    pub fn r(&self, j: usize) -> f64 {
        j as f64 * self.hr()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { values: self.values.iter().map(|v| s * v).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialOperators {
    pub u_r: Vec<f64>,
    pub u_rr: Vec<f64>,
    pub lap_r: Vec<f64>,
}

/// Centered differences inside, symmetry limits at `r = 0` and second-order
/// one-sided formulas at `r = 1`.
pub fn radial_operators(u: &RadialField) -> RadialOperators {
    let v = &u.values;
    let m = u.m();
    let hr = u.hr();
    let mut u_r = vec![0.0; m + 1];
    let mut u_rr = vec![0.0; m + 1];
    let mut lap_r = vec![0.0; m + 1];
    u_rr[0] = 2.0 * (v[1] - v[0]) / (hr * hr);
    lap_r[0] = 2.0 * u_rr[0];
    for j in 1..m {
        u_r[j] = (v[j + 1] - v[j - 1]) / (2.0 * hr);
        u_rr[j] = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (hr * hr);
        lap_r[j] = u_rr[j] + u_r[j] / u.r(j);
    }
    u_r[m] = (3.0 * v[m] - 4.0 * v[m - 1] + v[m - 2]) / (2.0 * hr);
    u_rr[m] = (2.0 * v[m] - 5.0 * v[m - 1] + 4.0 * v[m - 2] - v[m - 3]) / (hr * hr);
    lap_r[m] = u_rr[m] + u_r[m];
    RadialOperators { u_r, u_rr, lap_r }
}

/// `u_r u_rr / r` at the interior nodes, `u_rr(0)²` at the origin.
pub fn radial_nonlinearity(u: &RadialField, ops: &RadialOperators) -> Vec<f64> {
    let m = u.m();
    (0..m)
        .map(|j| if j == 0 { ops.u_rr[0] * ops.u_rr[0] } else { ops.u_r[j] * ops.u_rr[j] / u.r(j) })
        .collect()
}

/// Radial Laplacian on the unknowns `u_0..u_{m−1}` with `u_m = 0`.
pub fn laplacian_matrix(m: usize) -> DMatrix<f64> {
    let hr = 1.0 / m as f64;
    let h2 = hr * hr;
    let mut l = DMatrix::zeros(m, m);
    l[(0, 0)] = -4.0 / h2;
    l[(0, 1)] = 4.0 / h2;
    for j in 1..m {
        let r = j as f64 * hr;
        l[(j, j - 1)] = 1.0 / h2 - 1.0 / (2.0 * r * hr);
        l[(j, j)] = -2.0 / h2;
        if j + 1 < m {
            l[(j, j + 1)] = 1.0 / h2 + 1.0 / (2.0 * r * hr);
        }
    }
    l
}

fn trapezoid(hr: f64, f: impl Fn(usize) -> f64, m: usize) -> f64 {
    let inner: f64 = (1..m).map(&f).sum();
    hr * (inner + 0.5 * (f(0) + f(m)))
}

fn phi_weight(r: f64) -> f64 {
    0.8 * r.powi(5) - 2.25 * r.powi(4) + 2.5 * r * r
}

/// `∫₀¹ (⅘r⁵ − 9⁄4 r⁴ + 5⁄2 r²) u_r dr`.
pub fn phi_functional(u: &RadialField) -> f64 {
    let ops = radial_operators(u);
    phi_from_ur(u, &ops.u_r)
}

fn phi_from_ur(u: &RadialField, u_r: &[f64]) -> f64 {
    trapezoid(u.hr(), |j| phi_weight(u.r(j)) * u_r[j], u.m())
}

/// `−∫₀¹ (4r⁴ − 9r³ + 5r) u dr`.
pub fn phi_byparts(u: &RadialField) -> f64 {
    -trapezoid(u.hr(), |j| {
        let r = u.r(j);
        (4.0 * r.powi(4) - 9.0 * r.powi(3) + 5.0 * r) * u.values[j]
    }, u.m())
}

/// `∫₀¹ (6r − 9) u_r² r dr − 36 ∫₀¹ u_r r dr`.
pub fn phi_rhs(u: &RadialField) -> f64 {
    let ops = radial_operators(u);
    rhs_from_ur(u, &ops.u_r)
}

fn rhs_from_ur(u: &RadialField, u_r: &[f64]) -> f64 {
    let hr = u.hr();
    let m = u.m();
    let quad = trapezoid(hr, |j| (6.0 * u.r(j) - 9.0) * u_r[j] * u_r[j] * u.r(j), m);
    let lin = trapezoid(hr, |j| u_r[j] * u.r(j), m);
    quad - 36.0 * lin
}

/// Area of the disk-quadrature cell around node `j`: `π hr²/4` at the origin,
/// `2π r_j hr` inside, half of that on the rim.
fn cell_area(j: usize, m: usize) -> f64 {
    let hr = 1.0 / m as f64;
    match j {
        0 => 0.25 * PI * hr * hr,
        j if j == m => PI * hr,
        j => 2.0 * PI * j as f64 * hr * hr,
    }
}

/// Disk norms `(‖u‖₂, ‖Δu‖₂)`; the origin cell keeps a concentrating peak
/// visible.
fn disk_norms(u: &RadialField, ops: &RadialOperators) -> (f64, f64) {
    let m = u.m();
    let l2: f64 = (0..=m).map(|j| cell_area(j, m) * u.values[j] * u.values[j]).sum();
    let h2: f64 = (0..m).map(|j| cell_area(j, m) * ops.lap_r[j] * ops.lap_r[j]).sum();
    (l2.sqrt(), h2.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialRow {
    pub t: f64,
    pub dt: f64,
    pub l2: f64,
    pub h2: f64,
    pub phi: f64,
    pub phi_byparts: f64,
    pub rhs: f64,
    pub linf: f64,
}

pub const RADIAL_CSV_HEADER: &str = "t,dt,l2,phi,phi_byparts,rhs";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RadialSeries {
    pub rows: Vec<RadialRow>,
    pub collapsed: bool,
    pub m: usize,
}

impl RadialSeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{RADIAL_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{:?},{:?},{:?},{:?},{:?},{:?}", r.t, r.dt, r.l2, r.phi, r.phi_byparts, r.rhs)?;
        }
        Ok(())
    }

    /// Largest `|Φ − Φ_by-parts|` over the stored states.
    pub fn closed_form_gap(&self) -> f64 {
        self.rows.iter().map(|r| (r.phi - r.phi_byparts).abs()).fold(0.0, f64::max)
    }

    /// `Φ` moves in one direction over the trailing `tail` fraction of rows.
    pub fn phi_eventually_monotone(&self, tail: f64) -> bool {
        let n = self.rows.len();
        let start = n - ((n as f64 * tail).ceil() as usize).min(n);
        let w = &self.rows[start..];
        w.windows(2).all(|p| p[1].phi <= p[0].phi) || w.windows(2).all(|p| p[1].phi >= p[0].phi)
    }
}

fn row(u: &RadialField, t: f64, dt: f64) -> RadialRow {
    let ops = radial_operators(u);
    let (l2, h2) = disk_norms(u, &ops);
    RadialRow {
        t,
        dt,
        l2,
        h2,
        phi: phi_from_ur(u, &ops.u_r),
        phi_byparts: phi_byparts(u),
        rhs: rhs_from_ur(u, &ops.u_r),
        linf: u.values.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
    }
}

/// Max over steps of `|ΔΦ/Δt − rhs| / (1 + |rhs|)` with `rhs` averaged over
/// the step ends.
pub fn phi_ode_residual(series: &RadialSeries) -> f64 {
    series
        .rows
        .windows(2)
        .filter(|w| w[1].t > w[0].t)
        .map(|w| {
            let rhs = 0.5 * (w[0].rhs + w[1].rhs);
            ((w[1].phi - w[0].phi) / (w[1].t - w[0].t) - rhs).abs() / (1.0 + rhs.abs())
        })
        .fold(0.0, f64::max)
}

struct RadialStepper {
    lap: DMatrix<f64>,
    bilap: DMatrix<f64>,
    cache: HashMap<u64, LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl RadialStepper {
    fn new(m: usize) -> Self {
        let lap = laplacian_matrix(m);
        let bilap = &lap * &lap;
        Self { lap, bilap, cache: HashMap::new() }
    }

    /// `(I + dt Δ_r²) u_new = u + dt · u_r u_rr / r`.
    fn step(&mut self, u: &RadialField, dt: f64) -> Result<RadialField> {
        let m = u.m();
        let ops = radial_operators(u);
        let nl = radial_nonlinearity(u, &ops);
        let rhs = DVector::from_iterator(m, (0..m).map(|j| u.values[j] + dt * nl[j]));
        if self.cache.len() >= 48 {
            self.cache.clear();
        }
        let bilap = &self.bilap;
        let lu = self.cache.entry(dt.to_bits()).or_insert_with(|| {
            let mut a = bilap * dt;
            for j in 0..m {
                a[(j, j)] += 1.0;
            }
            a.lu()
        });
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| LabError::LinearSolve(format!("radial system singular at dt = {dt:e}")))?;
        let mut values: Vec<f64> = sol.iter().copied().collect();
        values.push(0.0);
        Ok(RadialField { values })
    }

    fn lap_norm(&self, d: &[f64]) -> f64 {
        let m = self.lap.nrows();
        let v = DVector::from_column_slice(&d[..m]);
        let w = &self.lap * v;
        (0..m).map(|j| cell_area(j, m) * w[j] * w[j]).sum::<f64>().sqrt()
    }
}

/// Adaptive IMEX run. Without an energy law, a step is accepted when the
/// state stays finite and `‖Δ_r(u_new − u)‖ ≤ max_rel_change · ‖Δ_r u‖`.
pub fn simulate_radial(u0: &RadialField, opts: &EvolutionOptions) -> Result<(RadialSeries, FateVerdict)> {
    if !u0.is_finite() {
        return Err(LabError::InvalidArgument("radial initial data must be finite".into()));
    }
    let m = u0.m();
    let mut stepper = RadialStepper::new(m);
    let mut series = RadialSeries { rows: vec![row(u0, 0.0, 0.0)], collapsed: false, m };
    let h2_0 = series.rows[0].h2;
    if h2_0 == 0.0 {
        return Ok((series, FateVerdict {
            kind: FateKind::Decayed,
            t_star_estimate: None,
            trigger: "zero initial data".into(),
            exceeded: Vec::new(),
        }));
    }
    let mut u = u0.clone();
    let mut t = 0.0;
    let mut dt = opts.dt_init;
    let mut steps = 0usize;
    let verdict = |kind: FateKind, trigger: String| FateVerdict { kind, t_star_estimate: None, trigger, exceeded: Vec::new() };
    loop {
        if t >= opts.t_end * (1.0 - 1e-14) {
            return Ok((series, verdict(FateKind::Undecided, "horizon reached".into())));
        }
        if steps >= opts.max_steps {
            return Ok((series, verdict(FateKind::Undecided, "step budget exhausted".into())));
        }
        let step = dt.min(opts.t_end - t);
        if t + step == t {
            // below the time resolution at t
            series.collapsed = true;
            return Ok((series.clone(), radial_blowup(&series, opts)));
        }
        let cand = stepper.step(&u, step)?;
        let prev_h2 = series.rows.last().unwrap().h2;
        let diff: Vec<f64> = cand.values.iter().zip(&u.values).map(|(a, b)| a - b).collect();
        let change = stepper.lap_norm(&diff) / prev_h2.max(f64::MIN_POSITIVE);
        let ok = cand.is_finite() && (!opts.adaptive || change <= opts.max_rel_change);
        if !ok {
            if !opts.adaptive {
                return Err(LabError::NonConvergence {
                    what: "fixed-step radial integration (non-finite state)",
                    iterations: steps,
                    residual: f64::NAN,
                });
            }
            if dt <= opts.dt_min {
                series.collapsed = true;
                return Ok((series.clone(), radial_blowup(&series, opts)));
            }
            dt = (dt * opts.dt_shrink).max(opts.dt_min);
            continue;
        }
        t += step;
        steps += 1;
        u = cand;
        let r = row(&u, t, step);
        let h2 = r.h2;
        series.rows.push(r);
        if h2 <= opts.decay_floor * h2_0 {
            return Ok((series, verdict(FateKind::Decayed, format!("h2 <= {:e} * h2(0)", opts.decay_floor))));
        }
        if opts.adaptive && change < 0.5 * opts.max_rel_change {
            dt = (dt * opts.dt_grow).min(opts.dt_max);
        }
    }
}

fn radial_blowup(series: &RadialSeries, opts: &EvolutionOptions) -> FateVerdict {
    let first = &series.rows[0];
    let last = series.rows.last().unwrap();
    let grown = last.h2 >= opts.growth_factor * first.h2;
    let mut exceeded = Vec::new();
    if grown {
        exceeded.push("h2".to_string());
    }
    if first.l2 > 0.0 && last.l2 >= opts.growth_factor * first.l2 {
        exceeded.push("l2".to_string());
    }
    if grown && series.collapsed {
        let tail = &series.rows[series.rows.len().saturating_sub(opts.blowup_window.max(2))..];
        let pts: Vec<(f64, f64)> = tail.iter().map(|r| (r.t, 1.0 / r.h2)).collect();
        FateVerdict {
            kind: FateKind::BlowUp,
            t_star_estimate: fit_pole(&pts),
            trigger: format!("h2 grew by {:e} and dt collapsed to {:e}", last.h2 / first.h2, opts.dt_min),
            exceeded,
        }
    } else {
        FateVerdict {
            kind: FateKind::Undecided,
            t_star_estimate: None,
            trigger: "dt_min reached without the growth signature".into(),
            exceeded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub amplitude: f64,
    pub verdict: FateKind,
    pub t_star_estimate: Option<f64>,
    pub phi0: f64,
}

/// Runs the profile at each amplitude, in parallel.
pub fn amplitude_sweep(m: usize, amplitudes: &[f64], opts: &EvolutionOptions) -> Result<Vec<SweepPoint>> {
    map_slice(amplitudes, |&a| {
        let u0 = RadialField::profile(m, a)?;
        let (_, v) = simulate_radial(&u0, opts)?;
        Ok(SweepPoint { amplitude: a, verdict: v.kind, t_star_estimate: v.t_star_estimate, phi0: phi_functional(&u0) })
    })
    .into_iter()
    .collect()
}

/// Once some amplitude blows up, every larger tested amplitude does too.
pub fn onset_is_monotone(points: &[SweepPoint]) -> bool {
    let mut sorted: Vec<&SweepPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.amplitude.total_cmp(&b.amplitude));
    let mut seen = false;
    for p in sorted {
        let blow = p.verdict == FateKind::BlowUp;
        if seen && !blow {
            return false;
        }
        seen |= blow;
    }
    true
}

/// Bisection of the blow-up onset between a non-blowing `lo` and a blowing
/// `hi` amplitude.
pub fn bisect_threshold(m: usize, mut lo: f64, mut hi: f64, iters: usize, opts: &EvolutionOptions) -> Result<(f64, f64)> {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let (_, v) = simulate_radial(&RadialField::profile(m, mid)?, opts)?;
        if v.kind == FateKind::BlowUp {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}
