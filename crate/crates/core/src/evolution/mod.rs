//! Time integration of `u_t + Δ²u = N(u) + λ f` with adaptive steps, fate
//! detection and per-step diagnostics.
//!
//! Clamped grids use backward Euler for `Δ²` (one banded factorization per
//! distinct step size) with the nonlinearity explicit. Hinged problems are
//! advanced in the sine basis, where the linear part is integrated exactly.

mod diagnostics;
mod monitors;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use diagnostics::{csv_line, DiagRow, Diagnostics, CSV_HEADER, MAX_LAG};
pub use monitors::{
    a_priori_ratio, co_divergence, dissipation_residuals, monotonicity_monitor, nehari_crossings,
    short_time_growth, spearman, w14_coupling, DissipationResiduals, MonotonicityReport, W14Report,
};

use crate::banded::{BandedCholesky, BandedSpd};
use crate::error::{LabError, Result};
use crate::grid::{BoundaryCondition, Field2D, Grid2D};
use crate::operators::{biharmonic, hessian_det, inner};
use crate::spectral::{exponential_step, NavierBasis, SpectralField};
use crate::variational::{classify_parts, gradient_coupling, h2_sq, nonlinear_I, norms, variational_det, NEHARI_TOL};

/// Discretization of `det(D²u)` used by the clamped integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    /// Exact gradient of the discrete `I`; makes the scheme a discrete
    /// gradient flow of `J`.
    Variational,
    /// Nodal `u_xx u_yy − u_xy²`.
    Nodal,
    /// Linear verification mode.
    Off,
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::Variational => "variational",
            Nonlinearity::Nodal => "nodal",
            Nonlinearity::Off => "off",
        })
    }
}

impl FromStr for Nonlinearity {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "variational" => Ok(Nonlinearity::Variational),
            "nodal" => Ok(Nonlinearity::Nodal),
            "off" => Ok(Nonlinearity::Off),
            _ => Err(format!("unknown nonlinearity `{s}` (variational|nodal|off)")),
        }
    }
}

/// Source term specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceSpec {
    Zero,
    Constant(f64),
    /// `a · sin(kπx) sin(lπy)`.
    Mode { k: usize, l: usize, a: f64 },
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::Zero => f.write_str("zero"),
            SourceSpec::Constant(c) => write!(f, "constant {c:?}"),
            SourceSpec::Mode { k, l, a } => write!(f, "mode {k},{l},{a:?}"),
        }
    }
}

impl FromStr for SourceSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s == "zero" {
            return Ok(SourceSpec::Zero);
        }
        if let Some(rest) = s.strip_prefix("constant") {
            return rest
                .trim()
                .parse()
                .map(SourceSpec::Constant)
                .map_err(|_| format!("bad constant source `{s}`"));
        }
        if let Some(rest) = s.strip_prefix("mode") {
            let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
            if parts.len() == 3 {
                if let (Ok(k), Ok(l), Ok(a)) = (parts[0].parse(), parts[1].parse(), parts[2].parse()) {
                    if k >= 1 && l >= 1 {
                        return Ok(SourceSpec::Mode { k, l, a });
                    }
                }
            }
            return Err(format!("bad mode source `{s}` (expected `mode k,l,a`)"));
        }
        Err(format!("unknown source `{s}` (zero | constant c | mode k,l,a)"))
    }
}

/// Source generator `f(x, y, t)`.
pub type SourceFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

impl SourceSpec {
    pub fn generator(&self) -> Option<SourceFn> {
        match *self {
            SourceSpec::Zero => None,
            SourceSpec::Constant(c) => Some(Arc::new(move |_, _, _| c)),
            SourceSpec::Mode { k, l, a } => Some(Arc::new(move |x, y, _| {
                a * (k as f64 * PI * x).sin() * (l as f64 * PI * y).sin()
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOptions {
    pub t_end: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Energy slack is `tol_energy · max(1, |J|) · max(dt, dt_max)`.
    pub tol_energy: f64,
    pub growth_factor: f64,
    /// Relative to `h2(0)`.
    pub decay_floor: f64,
    /// Relative to `h2(0)`.
    pub stat_floor: f64,
    pub stat_window: usize,
    /// Largest accepted `‖Δ(u_new − u)‖₂ / max(‖Δu‖₂, ‖Δu_new‖₂)`.
    pub max_rel_change: f64,
    pub dt_grow: f64,
    pub dt_shrink: f64,
    /// Fixed-step mode when false.
    pub adaptive: bool,
    /// With a source, `dt ≤ cfl · h⁴`.
    pub cfl: f64,
    pub nonlinearity: Nonlinearity,
    pub nehari_tol: f64,
    /// Rows used to extrapolate the blow-up time.
    pub blowup_window: usize,
    pub max_steps: usize,
    pub checkpoint_every: usize,
}

impl EvolutionOptions {
    /// Defaults scaled to the horizon `t_end`.
    pub fn for_horizon(t_end: f64) -> Self {
        Self {
            t_end,
            dt_init: 1e-4 * t_end,
            dt_min: 1e-12 * t_end,
            dt_max: 1e-2 * t_end,
            tol_energy: 1e-10,
            growth_factor: 1e6,
            decay_floor: 1e-6,
            stat_floor: 1e-8,
            stat_window: 100,
            max_rel_change: 0.25,
            dt_grow: 1.25,
            dt_shrink: 0.5,
            adaptive: true,
            cfl: 1e3,
            nonlinearity: Nonlinearity::Variational,
            nehari_tol: NEHARI_TOL,
            blowup_window: 20,
            max_steps: 2_000_000,
            checkpoint_every: 0,
        }
    }
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self::for_horizon(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FateKind {
    Decayed,
    BlowUp,
    Stationary,
    Undecided,
}

impl fmt::Display for FateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FateVerdict {
    pub kind: FateKind,
    pub t_star_estimate: Option<f64>,
    pub trigger: String,
    /// Norms past their growth thresholds at the end of the run.
    pub exceeded: Vec<String>,
}

impl FateVerdict {
    fn new(kind: FateKind, trigger: impl Into<String>) -> Self {
        Self { kind, t_star_estimate: None, trigger: trigger.into(), exceeded: Vec::new() }
    }
}

/// Solution representation.
#[derive(Debug, Clone, PartialEq)]
pub enum StateField {
    Grid(Field2D),
    Spectral(SpectralField),
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub t: f64,
    pub dt: f64,
    pub u: StateField,
    pub lambda: f64,
    pub steps: u64,
    pub cum_grad: f64,
    /// Consecutive accepted steps below the stationary floor.
    pub quiet_run: u64,
    /// `(l2, h2, w14_4)` at `t = 0`.
    pub initial: [f64; 3],
    /// Most recent snapshots, newest last.
    pub history: Vec<StateField>,
}

impl EvolutionState {
    pub fn grid_field(&self) -> Option<&Field2D> {
        match &self.u {
            StateField::Grid(f) => Some(f),
            StateField::Spectral(_) => None,
        }
    }
}

const CACHE_LIMIT: usize = 48;

enum Backend {
    Clamped { grid: Grid2D, cache: HashMap<u64, BandedCholesky> },
    Hinged { basis: NavierBasis },
}

/// Stepper plus diagnostic evaluation for one grid and source.
pub struct Integrator {
    backend: Backend,
    lambda: f64,
    source: Option<SourceFn>,
    nonlinearity: Nonlinearity,
    nehari_tol: f64,
}

/// Row quantities for one state.
struct Measure {
    l2: f64,
    h2: f64,
    energy: f64,
    i: f64,
    w14_4: f64,
    coupling: f64,
    linf: f64,
    bilap_l2: f64,
}

impl Integrator {
    pub fn clamped(grid: Grid2D, lambda: f64, source: Option<SourceFn>, opts: &EvolutionOptions) -> Result<Self> {
        if grid.bc() != BoundaryCondition::Dirichlet {
            return Err(LabError::InvalidArgument("clamped integrator needs a Dirichlet grid".into()));
        }
        Ok(Self {
            backend: Backend::Clamped { grid, cache: HashMap::new() },
            lambda,
            source,
            nonlinearity: opts.nonlinearity,
            nehari_tol: opts.nehari_tol,
        })
    }

    pub fn hinged(basis: NavierBasis, lambda: f64, source: Option<SourceFn>, opts: &EvolutionOptions) -> Self {
        Self {
            backend: Backend::Hinged { basis },
            lambda,
            source,
            nonlinearity: opts.nonlinearity,
            nehari_tol: opts.nehari_tol,
        }
    }

    pub fn grid(&self) -> Grid2D {
        match &self.backend {
            Backend::Clamped { grid, .. } => *grid,
            Backend::Hinged { basis } => *basis.grid(),
        }
    }

    fn source_field(&self, t: f64) -> Option<Field2D> {
        let f = self.source.as_ref()?;
        if self.lambda == 0.0 {
            return None;
        }
        Some(Field2D::from_fn(self.grid(), |x, y| f(x, y, t)))
    }

    /// One step of size `dt` from `u` at time `t`.
    pub fn advance(&mut self, u: &StateField, t: f64, dt: f64) -> Result<StateField> {
        let src = self.source_field(t + 0.5 * dt);
        let lambda = self.lambda;
        let nonlinearity = self.nonlinearity;
        match (&mut self.backend, u) {
            (Backend::Clamped { grid, cache }, StateField::Grid(u)) => {
                let mut rhs = match nonlinearity {
                    Nonlinearity::Variational => variational_det(u),
                    Nonlinearity::Nodal => hessian_det(u),
                    Nonlinearity::Off => Field2D::zeros(*grid),
                };
                if let Some(f) = &src {
                    rhs.axpy(lambda, f);
                }
                let mut v = u.values().to_vec();
                for (a, b) in v.iter_mut().zip(rhs.values()) {
                    *a += dt * b;
                }
                let key = dt.to_bits();
                if !cache.contains_key(&key) {
                    if cache.len() >= CACHE_LIMIT {
                        cache.clear();
                    }
                    let m = BandedSpd::biharmonic(grid, dt, 1.0);
                    cache.insert(key, m.cholesky()?);
                }
                cache[&key].solve_in_place(&mut v);
                Ok(StateField::Grid(Field2D::from_values(*grid, v)?))
            }
            (Backend::Hinged { basis }, StateField::Spectral(c)) => {
                let mut forcing = match nonlinearity {
                    Nonlinearity::Off => SpectralField::zeros(c.modes()),
                    _ => basis.hessian_det(c),
                };
                if let Some(f) = &src {
                    let fh = basis.from_field(f);
                    for (a, b) in forcing.coeffs_mut().iter_mut().zip(fh.coeffs()) {
                        *a += lambda * b;
                    }
                }
                Ok(StateField::Spectral(exponential_step(c, &forcing, dt)))
            }
            _ => Err(LabError::InvalidArgument("state representation does not match the integrator".into())),
        }
    }

    fn measure(&self, u: &StateField) -> Measure {
        match (&self.backend, u) {
            (Backend::Clamped { .. }, StateField::Grid(u)) => {
                let nb = norms(u);
                let i = nonlinear_I(u);
                let bu = biharmonic(u);
                Measure {
                    l2: nb.l2,
                    h2: nb.h2,
                    energy: 0.5 * nb.h2 * nb.h2 - i,
                    i,
                    w14_4: nb.w14_4,
                    coupling: gradient_coupling(u),
                    linf: u.max_abs(),
                    bilap_l2: inner(&bu, &bu).sqrt(),
                }
            }
            (Backend::Hinged { basis }, StateField::Spectral(c)) => {
                let (i, w4, cg, linf) = basis.functionals(c);
                let h2 = c.h2_sq().sqrt();
                Measure {
                    l2: c.l2_sq().sqrt(),
                    h2,
                    energy: 0.5 * h2 * h2 - i,
                    i,
                    w14_4: w4,
                    coupling: cg,
                    linf,
                    bilap_l2: c.bilaplacian_sq().sqrt(),
                }
            }
            _ => unreachable!("representation checked on construction"),
        }
    }

    fn distance_sq(a: &StateField, b: &StateField) -> f64 {
        match (a, b) {
            (StateField::Grid(x), StateField::Grid(y)) => {
                let d = x - y;
                inner(&d, &d)
            }
            (StateField::Spectral(x), StateField::Spectral(y)) => x.distance(y).powi(2),
            _ => f64::NAN,
        }
    }

    fn h2_of_difference(a: &StateField, b: &StateField) -> f64 {
        match (a, b) {
            (StateField::Grid(x), StateField::Grid(y)) => h2_sq(&(x - y)).sqrt(),
            (StateField::Spectral(x), StateField::Spectral(y)) => {
                let d = SpectralField::from_coeffs(
                    x.modes(),
                    x.coeffs().iter().zip(y.coeffs()).map(|(p, q)| p - q).collect(),
                )
                .expect("same truncation");
                d.h2_sq().sqrt()
            }
            _ => f64::NAN,
        }
    }

    fn is_finite(u: &StateField) -> bool {
        match u {
            StateField::Grid(f) => f.is_finite(),
            StateField::Spectral(s) => s.is_finite(),
        }
    }

    fn row(&self, m: &Measure, t: f64, dt: f64, ut_l2: f64, cum_grad: f64, source_l2: f64, lags: Vec<f64>) -> DiagRow {
        DiagRow {
            t,
            dt,
            l2: m.l2,
            h2: m.h2,
            energy: m.energy,
            i: m.i,
            w14_4: m.w14_4,
            nehari: if m.h2 == 0.0 {
                classify_parts(0.0, 0.0, self.nehari_tol)
            } else {
                classify_parts(m.h2 * m.h2, m.i, self.nehari_tol)
            },
            ut_l2,
            cum_grad,
            linf: m.linf,
            bilap_l2: m.bilap_l2,
            source_l2,
            lag_dist_sq: lags,
        }
    }

    /// Fixed-size step on a full state (no acceptance logic).
    pub fn step_imex(&mut self, s: &EvolutionState) -> Result<EvolutionState> {
        let u = self.advance(&s.u, s.t, s.dt)?;
        let mut next = s.clone();
        next.t = s.t + s.dt;
        next.u = u;
        next.steps += 1;
        Ok(next)
    }
}

/// Outcome of one attempted step.
enum Attempt {
    Accepted,
    Rejected,
}

/// A run in progress: integrator, state, options and diagnostics.
pub struct Simulation {
    pub integrator: Integrator,
    pub state: EvolutionState,
    pub opts: EvolutionOptions,
    pub diag: Diagnostics,
    verdict: Option<FateVerdict>,
}

impl Simulation {
    pub fn new(integrator: Integrator, u0: StateField, opts: EvolutionOptions) -> Result<Self> {
        if !Integrator::is_finite(&u0) {
            return Err(LabError::InvalidArgument("initial field is not finite".into()));
        }
        if !(opts.t_end > 0.0) {
            return Err(LabError::InvalidArgument("horizon must be positive".into()));
        }
        let m = integrator.measure(&u0);
        let h = integrator.grid().h();
        let mut diag = Diagnostics::new(h);
        let src_l2 = integrator.source_field(0.0).map_or(0.0, |f| inner(&f, &f).sqrt());
        diag.rows.push(integrator.row(&m, 0.0, 0.0, 0.0, 0.0, src_l2, Vec::new()));
        let mut dt = opts.dt_init.clamp(opts.dt_min, opts.dt_max);
        if integrator.source.is_some() && integrator.lambda != 0.0 {
            dt = dt.min(cfl_cap(&opts, h));
        }
        let state = EvolutionState {
            t: 0.0,
            dt,
            u: u0.clone(),
            lambda: integrator.lambda,
            steps: 0,
            cum_grad: 0.0,
            quiet_run: 0,
            initial: [m.l2, m.h2, m.w14_4],
            history: vec![u0],
        };
        Ok(Self { integrator, state, opts, diag, verdict: None })
    }

    /// Rebuilds a run from a saved state and its diagnostics.
    pub fn resume(integrator: Integrator, state: EvolutionState, opts: EvolutionOptions, diag: Diagnostics) -> Self {
        Self { integrator, state, opts, diag, verdict: None }
    }

    pub fn verdict(&self) -> Option<&FateVerdict> {
        self.verdict.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.verdict.is_some()
    }

    fn energy_rule(&self) -> bool {
        self.opts.adaptive && (self.integrator.lambda == 0.0 || self.integrator.source.is_none())
    }

    fn attempt(&mut self) -> Result<Attempt> {
        let s = &self.state;
        let dt = s.dt.min(self.opts.t_end - s.t).max(self.opts.dt_min.min(self.opts.t_end - s.t));
        let cand = self.integrator.advance(&s.u, s.t, dt)?;
        let finite = Integrator::is_finite(&cand);
        if !finite {
            if !self.opts.adaptive {
                return Err(LabError::NonConvergence {
                    what: "fixed-step integration (non-finite state)",
                    iterations: s.steps as usize,
                    residual: f64::NAN,
                });
            }
            return Ok(Attempt::Rejected);
        }
        let m = self.integrator.measure(&cand);
        let prev = self.diag.last().expect("initial row").clone();
        if self.opts.adaptive {
            let change = rel_change(Integrator::h2_of_difference(&cand, &s.u), prev.h2, m.h2);
            if !m.h2.is_finite() || change > self.opts.max_rel_change {
                return Ok(Attempt::Rejected);
            }
            if self.energy_rule() {
                // the slack must dominate roundoff in J, which does not
                // shrink with dt
                let slack = self.opts.tol_energy * prev.energy.abs().max(1.0) * dt.max(self.opts.dt_max);
                if m.energy > prev.energy + slack {
                    return Ok(Attempt::Rejected);
                }
            }
        }
        let ut = Integrator::distance_sq(&cand, &s.u).sqrt() / dt;
        let cum = s.cum_grad + dt * m.coupling;
        let lags: Vec<f64> = s
            .history
            .iter()
            .rev()
            .map(|old| Integrator::distance_sq(&cand, old))
            .collect();
        let src = self
            .integrator
            .source_field(s.t + 0.5 * dt)
            .map_or(0.0, |f| inner(&f, &f).sqrt());
        let row = self.integrator.row(&m, s.t + dt, dt, ut, cum, src, lags);
        let change = rel_change(Integrator::h2_of_difference(&cand, &s.u), prev.h2, m.h2);
        let st = &mut self.state;
        st.t += dt;
        st.steps += 1;
        st.cum_grad = cum;
        st.history.push(cand.clone());
        if st.history.len() > MAX_LAG {
            st.history.remove(0);
        }
        st.u = cand;
        let floor = self.opts.stat_floor * st.initial[1];
        st.quiet_run = if ut <= floor { st.quiet_run + 1 } else { 0 };
        if self.opts.adaptive && change < 0.5 * self.opts.max_rel_change {
            st.dt = (st.dt * self.opts.dt_grow).min(self.opts.dt_max);
            if self.integrator.source.is_some() && self.integrator.lambda != 0.0 {
                st.dt = st.dt.min(cfl_cap(&self.opts, self.diag.h));
            }
        }
        self.diag.rows.push(row);
        Ok(Attempt::Accepted)
    }

    fn check_fate(&self) -> Option<FateVerdict> {
        let last = self.diag.last()?;
        let h2_0 = self.state.initial[1];
        let forced = self.integrator.lambda != 0.0 && self.integrator.source.is_some();
        let decayed = if h2_0 == 0.0 { !forced } else { last.h2 <= self.opts.decay_floor * h2_0 };
        if decayed {
            return Some(FateVerdict::new(FateKind::Decayed, format!(
                "h2 = {:e} <= {:e} * h2(0)",
                last.h2, self.opts.decay_floor
            )));
        }
        if self.state.quiet_run >= self.opts.stat_window as u64 {
            return Some(FateVerdict::new(FateKind::Stationary, format!(
                "ut_l2 below {:e} * h2(0) for {} steps",
                self.opts.stat_floor, self.opts.stat_window
            )));
        }
        None
    }

    /// Advances until a verdict or until `max_new` accepted steps.
    pub fn run_steps(&mut self, max_new: usize) -> Result<Option<FateVerdict>> {
        if let Some(v) = &self.verdict {
            return Ok(Some(v.clone()));
        }
        if let Some(v) = self.check_fate() {
            self.verdict = Some(v.clone());
            return Ok(Some(v));
        }
        let mut accepted = 0;
        while accepted < max_new {
            if self.state.t >= self.opts.t_end * (1.0 - 1e-14) {
                let mut v = FateVerdict::new(FateKind::Undecided, "horizon reached");
                v.exceeded = exceeded_norms(&self.diag, &self.state.initial, self.opts.growth_factor);
                self.verdict = Some(v.clone());
                return Ok(Some(v));
            }
            if self.state.steps as usize >= self.opts.max_steps {
                let v = FateVerdict::new(FateKind::Undecided, "step budget exhausted");
                self.verdict = Some(v.clone());
                return Ok(Some(v));
            }
            match self.attempt()? {
                Attempt::Accepted => {
                    accepted += 1;
                    if let Some(v) = self.check_fate() {
                        self.verdict = Some(v.clone());
                        return Ok(Some(v));
                    }
                }
                Attempt::Rejected => {
                    if self.state.dt <= self.opts.dt_min {
                        self.diag.collapsed = true;
                        let v = detect_blowup(&self.diag, &self.opts);
                        self.verdict = Some(v.clone());
                        return Ok(Some(v));
                    }
                    self.state.dt = (self.state.dt * self.opts.dt_shrink).max(self.opts.dt_min);
                }
            }
        }
        Ok(None)
    }

    /// Runs to completion.
    pub fn run(&mut self) -> Result<FateVerdict> {
        loop {
            if let Some(v) = self.run_steps(usize::MAX)? {
                return Ok(v);
            }
        }
    }
}

/// Relative change of a step; a step leaving rest is measured as 0.
fn rel_change(diff: f64, old: f64, new: f64) -> f64 {
    if old == 0.0 {
        0.0
    } else {
        diff / old.max(new)
    }
}

fn cfl_cap(opts: &EvolutionOptions, h: f64) -> f64 {
    (opts.cfl * h.powi(4)).max(opts.dt_min)
}

fn exceeded_norms(diag: &Diagnostics, initial: &[f64; 3], growth: f64) -> Vec<String> {
    let Some(last) = diag.last() else { return Vec::new() };
    let mut out = Vec::new();
    if initial[1] > 0.0 && last.h2 >= growth * initial[1] {
        out.push("h2".to_string());
    }
    if initial[0] > 0.0 && last.l2 >= growth * initial[0] {
        out.push("l2".to_string());
    }
    if initial[2] > 0.0 && last.w14_4.sqrt() >= growth * initial[2].sqrt() {
        out.push("w14".to_string());
    }
    out
}

/// Blow-up iff `h2` grew by `growth_factor` and the step size collapsed;
/// `t*` from a linear fit of `1/h2` against `t` over the last window.
pub fn detect_blowup(diag: &Diagnostics, opts: &EvolutionOptions) -> FateVerdict {
    let (Some(first), Some(last)) = (diag.first(), diag.last()) else {
        return FateVerdict::new(FateKind::Undecided, "empty diagnostics");
    };
    let initial = [first.l2, first.h2, first.w14_4];
    let grown = first.h2 > 0.0 && last.h2 >= opts.growth_factor * first.h2;
    let collapsed = diag.collapsed || (diag.len() > 1 && last.dt <= opts.dt_min * (1.0 + 1e-9));
    let mut v = if grown && collapsed {
        let mut v = FateVerdict::new(FateKind::BlowUp, format!(
            "h2 grew by {:e} (>= {:e}) and dt collapsed to {:e}",
            last.h2 / first.h2,
            opts.growth_factor,
            opts.dt_min
        ));
        v.t_star_estimate = extrapolate_pole(diag, opts.blowup_window);
        v
    } else if collapsed {
        FateVerdict::new(FateKind::Undecided, "dt_min reached without the growth signature")
    } else {
        FateVerdict::new(FateKind::Undecided, "no blow-up signature")
    };
    v.exceeded = exceeded_norms(diag, &initial, opts.growth_factor);
    v
}

/// Zero of the least-squares line through `(t, 1/h2)` on the last rows.
fn extrapolate_pole(diag: &Diagnostics, window: usize) -> Option<f64> {
    let rows = &diag.rows[diag.len().saturating_sub(window.max(2))..];
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, 1.0 / r.h2)).collect();
    fit_pole(&pts)
}

/// Zero of the least-squares line through `(t, 1/h2)` points; `None` unless
/// the line decreases.
pub(crate) fn fit_pole(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 || sxy >= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let t = mt - my / slope;
    t.is_finite().then_some(t)
}

/// Clamped run from a nodal field.
pub fn simulate(
    u0: &Field2D,
    lambda: f64,
    source: Option<SourceFn>,
    opts: &EvolutionOptions,
) -> Result<(Diagnostics, FateVerdict)> {
    let integrator = Integrator::clamped(*u0.grid(), lambda, source, opts)?;
    let mut sim = Simulation::new(integrator, StateField::Grid(u0.clone()), opts.clone())?;
    let v = sim.run()?;
    Ok((sim.diag, v))
}

/// Hinged run in the sine basis.
pub fn simulate_hinged(
    c0: &SpectralField,
    basis: NavierBasis,
    lambda: f64,
    source: Option<SourceFn>,
    opts: &EvolutionOptions,
) -> Result<(Diagnostics, FateVerdict)> {
    let integrator = Integrator::hinged(basis, lambda, source, opts);
    let mut sim = Simulation::new(integrator, StateField::Spectral(c0.clone()), opts.clone())?;
    let v = sim.run()?;
    Ok((sim.diag, v))
}
