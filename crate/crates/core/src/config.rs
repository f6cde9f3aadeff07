//! Line-oriented experiment configuration.
//!
//! ```text
//! experiment = nehari-dichotomy
//! # comment
//! grid.n = 48
//! [time]
//! T = 0.05
//! ```
//!
//! Keys are `section.name`; a `[section]` header prefixes the keys below it.
//! Unknown keys and malformed values are errors naming the line. Defaults
//! depend on the experiment and, for step sizes, on `time.T`.

use std::fmt;
use std::str::FromStr;

use crate::eigen::EIGTOL;
use crate::error::{LabError, Result};
use crate::evolution::{EvolutionOptions, Nonlinearity, SourceSpec};
use crate::grid::BoundaryCondition;
use crate::mountain_pass::MpOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    VerifyIdentities,
    MpLevel,
    Eigen,
    NehariDichotomy,
    Eq43Blowup,
    RadialSweep,
    LinearVerification,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::VerifyIdentities,
        Experiment::MpLevel,
        Experiment::Eigen,
        Experiment::NehariDichotomy,
        Experiment::Eq43Blowup,
        Experiment::RadialSweep,
        Experiment::LinearVerification,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::VerifyIdentities => "verify-identities",
            Experiment::MpLevel => "mp-level",
            Experiment::Eigen => "eigen",
            Experiment::NehariDichotomy => "nehari-dichotomy",
            Experiment::Eq43Blowup => "eq43-blowup",
            Experiment::RadialSweep => "radial-sweep",
            Experiment::LinearVerification => "linear-verification",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::ALL
            .iter()
            .find(|e| e.as_str() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
                format!("unknown experiment `{s}` (one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub output_dir: String,
    pub seed: u64,
    pub n: usize,
    pub bc: BoundaryCondition,
    /// Sine modes per direction on hinged grids.
    pub modes: usize,
    pub lambda: f64,
    pub source: SourceSpec,
    /// Carries `time.*` and the step-control constants.
    pub evolution: EvolutionOptions,
    pub mp: MpOptions,
    pub mp_coarse_n: usize,
    pub mp_samples: usize,
    pub eigen_tol: f64,
    pub eigen_count: usize,
    pub eigen_sizes: Vec<usize>,
    pub eigen_k: usize,
    pub eigen_samples: usize,
    pub identity_sizes: Vec<usize>,
    pub dichotomy_epsilon: f64,
    pub eq43_margin: f64,
    /// `I(e₁)` below this fraction of `λ₁^{3/2}` counts as vanishing.
    pub eq43_degenerate_tol: f64,
    pub eq43_mix: f64,
    pub radial_m: usize,
    pub radial_amplitudes: Vec<f64>,
    pub radial_bisect_iters: usize,
    pub radial_small: f64,
    pub radial_refine_dt: f64,
    pub radial_refine_t: f64,
    pub linear_c: f64,
    pub linear_dt: f64,
}

/// Every accepted key, in render order.
pub const KEYS: &[&str] = &[
    "experiment",
    "output_dir",
    "seed",
    "grid.n",
    "grid.bc",
    "grid.modes",
    "time.T",
    "time.dt_init",
    "time.dt_min",
    "time.dt_max",
    "physics.lambda",
    "physics.source",
    "evolution.tol_energy",
    "evolution.growth_factor",
    "evolution.decay_floor",
    "evolution.stat_floor",
    "evolution.stat_window",
    "evolution.max_rel_change",
    "evolution.dt_grow",
    "evolution.dt_shrink",
    "evolution.adaptive",
    "evolution.cfl",
    "evolution.nonlinearity",
    "evolution.nehari_tol",
    "evolution.blowup_window",
    "evolution.max_steps",
    "evolution.checkpoint_every",
    "mp.kkt_tol",
    "mp.max_iter",
    "mp.armijo_c",
    "mp.backtrack",
    "mp.initial_step",
    "mp.restarts",
    "mp.coarse_n",
    "mp.samples",
    "eigen.tol",
    "eigen.count",
    "eigen.sizes",
    "eigen.k",
    "eigen.samples",
    "identities.sizes",
    "dichotomy.epsilon",
    "eq43.margin",
    "eq43.degenerate_tol",
    "eq43.mix",
    "radial.m",
    "radial.amplitudes",
    "radial.bisect_iters",
    "radial.small",
    "radial.refine_dt",
    "radial.refine_t",
    "linear.c",
    "linear.dt",
];

impl ExperimentConfig {
    /// Defaults for `experiment` with horizon `t_end` (experiment default
    /// when `None`).
    pub fn defaults(experiment: Experiment, t_end: Option<f64>) -> Self {
        use Experiment::*;
        let default_t = match experiment {
            NehariDichotomy | Eq43Blowup => 0.05,
            LinearVerification => 2e-3,
            _ => 1.0,
        };
        let mut evolution = EvolutionOptions::for_horizon(t_end.unwrap_or(default_t));
        if experiment == RadialSweep {
            evolution.dt_min = 1e-16;
        }
        if experiment == LinearVerification {
            evolution.nonlinearity = Nonlinearity::Off;
        }
        let n = match experiment {
            MpLevel => 64,
            NehariDichotomy | Eq43Blowup => 48,
            _ => 32,
        };
        let (lambda, source) = match experiment {
            LinearVerification => (1e3, SourceSpec::Constant(1.0)),
            _ => (0.0, SourceSpec::Zero),
        };
        Self {
            experiment,
            output_dir: format!("runs/{}", experiment.as_str()),
            seed: 1,
            n,
            bc: BoundaryCondition::Dirichlet,
            modes: 8,
            lambda,
            source,
            evolution,
            mp: MpOptions::default(),
            mp_coarse_n: 32,
            mp_samples: 20,
            eigen_tol: EIGTOL,
            eigen_count: 8,
            eigen_sizes: vec![32, 64, 128],
            eigen_k: 4,
            eigen_samples: 100,
            identity_sizes: vec![32, 64, 128],
            dichotomy_epsilon: 0.1,
            eq43_margin: 1.2,
            eq43_degenerate_tol: 1e-6,
            eq43_mix: 0.5,
            radial_m: 128,
            radial_amplitudes: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            radial_bisect_iters: 8,
            radial_small: 1e-2,
            radial_refine_dt: 4e-4,
            radial_refine_t: 0.5,
            linear_c: 10.0,
            linear_dt: 1e-5,
        }
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let ev = &mut self.evolution;
        match key {
            "experiment" => self.experiment = v.parse()?,
            "output_dir" => {
                if v.is_empty() {
                    return Err("output_dir must not be empty".into());
                }
                self.output_dir = v.to_string();
            }
            "seed" => self.seed = parse_int(v)?,
            "grid.n" => self.n = parse_min(v, 4)?,
            "grid.bc" => self.bc = v.parse()?,
            "grid.modes" => self.modes = parse_min(v, 1)?,
            "time.T" => ev.t_end = parse_pos(v)?,
            "time.dt_init" => ev.dt_init = parse_pos(v)?,
            "time.dt_min" => ev.dt_min = parse_pos(v)?,
            "time.dt_max" => ev.dt_max = parse_pos(v)?,
            "physics.lambda" => self.lambda = parse_real(v)?,
            "physics.source" => self.source = v.parse()?,
            "evolution.tol_energy" => ev.tol_energy = parse_nonneg(v)?,
            "evolution.growth_factor" => ev.growth_factor = parse_above(v, 1.0)?,
            "evolution.decay_floor" => ev.decay_floor = parse_pos(v)?,
            "evolution.stat_floor" => ev.stat_floor = parse_nonneg(v)?,
            "evolution.stat_window" => ev.stat_window = parse_min(v, 1)?,
            "evolution.max_rel_change" => ev.max_rel_change = parse_pos(v)?,
            "evolution.dt_grow" => ev.dt_grow = parse_above(v, 1.0)?,
            "evolution.dt_shrink" => {
                let s = parse_pos(v)?;
                if s >= 1.0 {
                    return Err("must lie in (0, 1)".into());
                }
                ev.dt_shrink = s;
            }
            "evolution.adaptive" => ev.adaptive = parse_bool(v)?,
            "evolution.cfl" => ev.cfl = parse_pos(v)?,
            "evolution.nonlinearity" => ev.nonlinearity = v.parse()?,
            "evolution.nehari_tol" => ev.nehari_tol = parse_nonneg(v)?,
            "evolution.blowup_window" => ev.blowup_window = parse_min(v, 2)?,
            "evolution.max_steps" => ev.max_steps = parse_min(v, 1)?,
            "evolution.checkpoint_every" => ev.checkpoint_every = parse_int(v)?,
            "mp.kkt_tol" => self.mp.kkt_tol = parse_pos(v)?,
            "mp.max_iter" => self.mp.max_iter = parse_min(v, 1)?,
            "mp.armijo_c" => self.mp.armijo_c = parse_pos(v)?,
            "mp.backtrack" => self.mp.backtrack = parse_pos(v)?,
            "mp.initial_step" => self.mp.initial_step = parse_pos(v)?,
            "mp.restarts" => self.mp.restarts = parse_int(v)?,
            "mp.coarse_n" => self.mp_coarse_n = parse_min(v, 4)?,
            "mp.samples" => self.mp_samples = parse_int(v)?,
            "eigen.tol" => self.eigen_tol = parse_pos(v)?,
            "eigen.count" => self.eigen_count = parse_min(v, 1)?,
            "eigen.sizes" => self.eigen_sizes = parse_list(v, |s| parse_min(s, 4))?,
            "eigen.k" => self.eigen_k = parse_min(v, 1)?,
            "eigen.samples" => self.eigen_samples = parse_int(v)?,
            "identities.sizes" => self.identity_sizes = parse_list(v, |s| parse_min(s, 4))?,
            "dichotomy.epsilon" => {
                let e = parse_pos(v)?;
                if e >= 1.0 {
                    return Err("must lie in (0, 1)".into());
                }
                self.dichotomy_epsilon = e;
            }
            "eq43.margin" => self.eq43_margin = parse_above(v, 1.0)?,
            "eq43.degenerate_tol" => self.eq43_degenerate_tol = parse_nonneg(v)?,
            "eq43.mix" => self.eq43_mix = parse_real(v)?,
            "radial.m" => self.radial_m = parse_min(v, 4)?,
            "radial.amplitudes" => self.radial_amplitudes = parse_list(v, parse_pos)?,
            "radial.bisect_iters" => self.radial_bisect_iters = parse_int(v)?,
            "radial.small" => self.radial_small = parse_pos(v)?,
            "radial.refine_dt" => self.radial_refine_dt = parse_pos(v)?,
            "radial.refine_t" => self.radial_refine_t = parse_pos(v)?,
            "linear.c" => self.linear_c = parse_pos(v)?,
            "linear.dt" => self.linear_dt = parse_pos(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Textual value of a key, round-trip exact.
    pub fn get(&self, key: &str) -> Option<String> {
        let ev = &self.evolution;
        Some(match key {
            "experiment" => self.experiment.to_string(),
            "output_dir" => self.output_dir.clone(),
            "seed" => self.seed.to_string(),
            "grid.n" => self.n.to_string(),
            "grid.bc" => self.bc.to_string(),
            "grid.modes" => self.modes.to_string(),
            "time.T" => real(ev.t_end),
            "time.dt_init" => real(ev.dt_init),
            "time.dt_min" => real(ev.dt_min),
            "time.dt_max" => real(ev.dt_max),
            "physics.lambda" => real(self.lambda),
            "physics.source" => self.source.to_string(),
            "evolution.tol_energy" => real(ev.tol_energy),
            "evolution.growth_factor" => real(ev.growth_factor),
            "evolution.decay_floor" => real(ev.decay_floor),
            "evolution.stat_floor" => real(ev.stat_floor),
            "evolution.stat_window" => ev.stat_window.to_string(),
            "evolution.max_rel_change" => real(ev.max_rel_change),
            "evolution.dt_grow" => real(ev.dt_grow),
            "evolution.dt_shrink" => real(ev.dt_shrink),
            "evolution.adaptive" => ev.adaptive.to_string(),
            "evolution.cfl" => real(ev.cfl),
            "evolution.nonlinearity" => ev.nonlinearity.to_string(),
            "evolution.nehari_tol" => real(ev.nehari_tol),
            "evolution.blowup_window" => ev.blowup_window.to_string(),
            "evolution.max_steps" => ev.max_steps.to_string(),
            "evolution.checkpoint_every" => ev.checkpoint_every.to_string(),
            "mp.kkt_tol" => real(self.mp.kkt_tol),
            "mp.max_iter" => self.mp.max_iter.to_string(),
            "mp.armijo_c" => real(self.mp.armijo_c),
            "mp.backtrack" => real(self.mp.backtrack),
            "mp.initial_step" => real(self.mp.initial_step),
            "mp.restarts" => self.mp.restarts.to_string(),
            "mp.coarse_n" => self.mp_coarse_n.to_string(),
            "mp.samples" => self.mp_samples.to_string(),
            "eigen.tol" => real(self.eigen_tol),
            "eigen.count" => self.eigen_count.to_string(),
            "eigen.sizes" => join(&self.eigen_sizes, |v| v.to_string()),
            "eigen.k" => self.eigen_k.to_string(),
            "eigen.samples" => self.eigen_samples.to_string(),
            "identities.sizes" => join(&self.identity_sizes, |v| v.to_string()),
            "dichotomy.epsilon" => real(self.dichotomy_epsilon),
            "eq43.margin" => real(self.eq43_margin),
            "eq43.degenerate_tol" => real(self.eq43_degenerate_tol),
            "eq43.mix" => real(self.eq43_mix),
            "radial.m" => self.radial_m.to_string(),
            "radial.amplitudes" => join(&self.radial_amplitudes, |v| real(*v)),
            "radial.bisect_iters" => self.radial_bisect_iters.to_string(),
            "radial.small" => real(self.radial_small),
            "radial.refine_dt" => real(self.radial_refine_dt),
            "radial.refine_t" => real(self.radial_refine_t),
            "linear.c" => real(self.linear_c),
            "linear.dt" => real(self.linear_dt),
            _ => return None,
        })
    }

    /// Full effective configuration, one `key = value` per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("every listed key renders"));
            out.push('\n');
        }
        out
    }

    /// Mesh used by the two-dimensional suites.
    pub fn grid(&self) -> Result<crate::grid::Grid2D> {
        crate::grid::Grid2D::new(self.n, self.bc)
    }

    fn check(&self) -> std::result::Result<(), (String, String)> {
        let ev = &self.evolution;
        if !(ev.dt_min <= ev.dt_max) {
            return Err(("time.dt_min".into(), "must not exceed time.dt_max".into()));
        }
        if self.bc == BoundaryCondition::Navier && self.n < 2 * self.modes {
            return Err(("grid.modes".into(), format!("needs grid.n >= 2 * modes (n = {})", self.n)));
        }
        if self.eigen_k > self.eigen_count {
            return Err(("eigen.k".into(), "must not exceed eigen.count".into()));
        }
        if self.radial_amplitudes.is_empty() {
            return Err(("radial.amplitudes".into(), "needs at least one amplitude".into()));
        }
        Ok(())
    }
}

/// One `key = value` assignment and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// 1-based line, or 0 for command-line overrides.
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits `text` into assignments, expanding `[section]` headers.
pub fn assignments(text: &str) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    let mut section = String::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(config_err(line, body, "malformed section header"));
            }
            section = name.to_string();
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(config_err(line, body, "expected `key = value`"));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(config_err(line, body, "empty key"));
        }
        let key = if section.is_empty() || key.contains('.') { key.to_string() } else { format!("{section}.{key}") };
        out.push(Assignment { line, key, value: value.trim().to_string() });
    }
    Ok(out)
}

fn config_err(line: usize, key: &str, message: impl Into<String>) -> LabError {
    LabError::Config { line, key: key.to_string(), message: message.into() }
}

/// Parses a configuration file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    build(assignments(text)?)
}

/// Parses `text`, then applies `overrides` as if appended to it.
pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut a = assignments(text)?;
    a.extend(overrides.iter().map(|(k, v)| Assignment { line: 0, key: k.clone(), value: v.clone() }));
    build(a)
}

/// Resolves assignments: experiment first, then the horizon (which scales the
/// default step sizes), then everything else in order. Later assignments win.
pub fn build(assign: Vec<Assignment>) -> Result<ExperimentConfig> {
    for a in &assign {
        if !KEYS.contains(&a.key.as_str()) {
            return Err(config_err(a.line, &a.key, "unknown key"));
        }
    }
    let Some(exp) = assign.iter().rev().find(|a| a.key == "experiment") else {
        return Err(config_err(0, "experiment", "missing required key"));
    };
    let experiment: Experiment = exp.value.parse().map_err(|m: String| config_err(exp.line, "experiment", m))?;
    let t_end = match assign.iter().rev().find(|a| a.key == "time.T") {
        Some(a) => Some(parse_pos(&a.value).map_err(|m| config_err(a.line, &a.key, m))?),
        None => None,
    };
    let mut cfg = ExperimentConfig::defaults(experiment, t_end);
    for a in &assign {
        if a.key == "experiment" {
            continue;
        }
        cfg.set(&a.key, &a.value).map_err(|m| config_err(a.line, &a.key, m))?;
    }
    cfg.check().map_err(|(key, m)| {
        let line = assign.iter().rev().find(|a| a.key == key).map_or(0, |a| a.line);
        config_err(line, &key, m)
    })?;
    Ok(cfg)
}

fn real(v: f64) -> String {
    format!("{v:?}")
}

fn join<T>(v: &[T], f: impl Fn(&T) -> String) -> String {
    v.iter().map(f).collect::<Vec<_>>().join(",")
}

fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn parse_pos(s: &str) -> std::result::Result<f64, String> {
    let v = parse_real(s)?;
    if v <= 0.0 {
        return Err(format!("`{s}` must be positive"));
    }
    Ok(v)
}

fn parse_nonneg(s: &str) -> std::result::Result<f64, String> {
    let v = parse_real(s)?;
    if v < 0.0 {
        return Err(format!("`{s}` must be non-negative"));
    }
    Ok(v)
}

fn parse_above(s: &str, lo: f64) -> std::result::Result<f64, String> {
    let v = parse_real(s)?;
    if v <= lo {
        return Err(format!("`{s}` must exceed {lo}"));
    }
    Ok(v)
}

fn parse_int<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn parse_min(s: &str, lo: usize) -> std::result::Result<usize, String> {
    let v: usize = parse_int(s)?;
    if v < lo {
        return Err(format!("`{s}` must be at least {lo}"));
    }
    Ok(v)
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{s}` is not true/false")),
    }
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|p| f(p.trim())).collect()
}
