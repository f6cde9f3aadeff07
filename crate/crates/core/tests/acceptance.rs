//! Acceptance run: one PASS/FAIL line per criterion, INFO lines for context.

use std::path::Path;
use std::process::ExitCode;

use hessflow::checkpoint::Checkpoint;
use hessflow::config::{Experiment, ExperimentConfig};
use hessflow::evolution::{
    dissipation_residuals, simulate, Diagnostics, EvolutionOptions, Integrator, Simulation, SourceSpec, StateField,
};
use hessflow::experiments::{resume_simulation, run_experiment, RunSummary};
use hessflow::mountain_pass::{mountain_pass_level, stationary_solution, MpOptions};
use hessflow::samplers::{self, random_clamped};
use hessflow::variational::{energy_J, h2_sq, nehari_classify, NehariTag, NEHARI_TOL};
use hessflow::{BoundaryCondition, Grid2D, LabError};

/// Acceptable ratio of a first-order residual at `dt` to the one at `dt/2`.
const HALVING: (f64, f64) = (1.6, 2.4);
const R2_MAX: f64 = 1e-2;
/// `r3` slack relative to `max(1, J(0))`.
const R3_SLACK: f64 = 1e-9;
/// Relative roundoff allowed on row-to-row energy increases.
const ENERGY_ROUNDOFF: f64 = 1e-12;
const DECAY_FLOOR: f64 = 1e-6;
const DISSIPATION_N: usize = 64;
const DISSIPATION_T: f64 = 0.02;
const DISSIPATION_DT: f64 = 4e-6;
const IMPLICATION_N: usize = 32;
const IMPLICATION_SAMPLES: usize = 500;
const SEED: u64 = 20260101;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} criterion {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn error(&mut self, id: usize, name: &str, e: &LabError) {
        self.line(id, name, false, format!("error: {e}"));
    }
}

fn info(msg: String) {
    println!("INFO {msg}");
}

fn run(exp: Experiment, root: &Path, edit: impl FnOnce(&mut ExperimentConfig)) -> Result<RunSummary, LabError> {
    let mut cfg = ExperimentConfig::defaults(exp, None);
    cfg.output_dir = root.join(exp.as_str()).to_string_lossy().into_owned();
    edit(&mut cfg);
    run_experiment(&cfg)
}

fn checks_pass(s: &RunSummary, keys: &[&str]) -> (bool, Vec<String>) {
    let missing_or_failed: Vec<String> =
        keys.iter().filter(|k| !s.checks.get(**k).copied().unwrap_or(false)).map(|k| k.to_string()).collect();
    (missing_or_failed.is_empty(), missing_or_failed)
}

fn scalar(s: &RunSummary, k: &str) -> f64 {
    s.scalars.get(k).copied().unwrap_or(f64::NAN)
}

fn energy_monotone(d: &Diagnostics) -> bool {
    d.rows.windows(2).all(|w| w[1].energy <= w[0].energy + ENERGY_ROUNDOFF * w[0].energy.abs().max(1.0))
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("scratch directory");
    let root = root.path();
    let mut r = Report { failed: 0 };

    // 1
    match run(Experiment::VerifyIdentities, root, |_| {}) {
        Ok(s) => {
            let ratios: Vec<String> =
                s.scalars.iter().filter(|(k, _)| k.contains(".ratio.")).map(|(k, v)| format!("{k}={v:.3}")).collect();
            r.line(1, "identity refinement", s.passed, ratios.join(" "));
            info(format!("sine control identity16 at n=128: {:.4}", scalar(&s, "sine_identity16.n128")));
        }
        Err(e) => r.error(1, "identity refinement", &e),
    }

    // 2, 3: fixed-step decay runs below the level at n = 64
    let dissipation = (|| -> Result<_, LabError> {
        let g = Grid2D::new(DISSIPATION_N, BoundaryCondition::Dirichlet)?;
        let mp = mountain_pass_level(&g, &MpOptions::default())?;
        let (u_star, _) = stationary_solution(&mp.best);
        let u0 = u_star.scaled(0.9);
        let runs = [DISSIPATION_DT, 0.5 * DISSIPATION_DT].map(|dt| {
            let mut o = EvolutionOptions::for_horizon(DISSIPATION_T);
            o.adaptive = false;
            o.dt_init = dt;
            o.dt_min = dt;
            o.dt_max = dt;
            simulate(&u0, 0.0, None, &o).map(|(d, _)| d)
        });
        let [a, b] = runs;
        Ok((a?, b?, energy_J(&u0)))
    })();
    let mut blowup_suites = Vec::new();
    let dichotomy = run(Experiment::NehariDichotomy, root, |_| {});
    let eq43 = run(Experiment::Eq43Blowup, root, |_| {});
    match &dissipation {
        Ok((a, b, j0)) => {
            let (ra, rb) = (dissipation_residuals(a), dissipation_residuals(b));
            let mut monotone = energy_monotone(a) && energy_monotone(b);
            let mut suites = Vec::new();
            for (name, s, labels) in [("dichotomy", &dichotomy, &["decay", "blowup"][..]), ("eq43", &eq43, &["eq43"][..])] {
                if let Ok(s) = s {
                    for l in labels {
                        let ok = s.checks.get(&format!("{l}.energy_non_increasing")).copied().unwrap_or(false);
                        monotone &= ok;
                        suites.push(format!("{name}/{l}={ok}"));
                    }
                } else {
                    monotone = false;
                }
            }
            let ratio1 = ra.r1 / rb.r1;
            let ok2 = monotone && (HALVING.0..=HALVING.1).contains(&ratio1);
            r.line(2, "dissipation law", ok2, format!(
                "J monotone on all λ=0 runs: {monotone} ({}); r1 {:.3e} -> {:.3e}, ratio {ratio1:.3}",
                suites.join(" "), ra.r1, rb.r1
            ));
            let ratio2 = ra.r2 / rb.r2;
            let slack = R3_SLACK * j0.abs().max(1.0);
            let ok3 = ra.r2 <= R2_MAX && rb.r2 <= R2_MAX && (HALVING.0..=HALVING.1).contains(&ratio2)
                && ra.r3 <= slack && rb.r3 <= slack;
            r.line(3, "flux identity and lagged dissipation", ok3, format!(
                "r2 {:.3e} -> {:.3e}, ratio {ratio2:.3}; r3 {:.3e}, {:.3e} <= {slack:.3e}",
                ra.r2, rb.r2, ra.r3, rb.r3
            ));
            if let Ok(s) = &dichotomy {
                info(format!("adaptive decay run r2 = {:.3e} (step control, not a criterion)", scalar(s, "decay.r2")));
            }
        }
        Err(e) => {
            r.error(2, "dissipation law", e);
            r.error(3, "flux identity and lagged dissipation", e);
        }
    }

    // 4
    match run(Experiment::MpLevel, root, |_| {}) {
        Ok(s) => {
            let keys = [
                "coarse.bracket", "fine.bracket", "d_min_below_every_sampled_upper_bound", "refinement_stable",
                "coarse.J_u_star_equals_d_min", "fine.J_u_star_equals_d_min", "stationarity_decreases_with_h",
            ];
            let (ok, bad) = checks_pass(&s, &keys);
            r.line(4, "mountain-pass consistency", ok, format!(
                "d_lower {:.2} <= d_min {:.2} <= d_upper {:.2}; n=32 {:.2}, change {:.2}%; spread {:.1e}; stationarity {:.3e} -> {:.3e}{}",
                scalar(&s, "fine.d_lower"), scalar(&s, "fine.d_min"), scalar(&s, "fine.d_upper"),
                scalar(&s, "coarse.d_min"), 100.0 * scalar(&s, "relative_refinement_change"),
                scalar(&s, "fine.restart_spread"), scalar(&s, "coarse.stationarity"), scalar(&s, "fine.stationarity"),
                if bad.is_empty() { String::new() } else { format!("; failed {bad:?}") }
            ));
            info(format!(
                "stationarity residual <= 1e-2 at n=64: {}",
                s.flags.get("stationarity_below_1e-2_on_fine_grid").copied().unwrap_or(false)
            ));
        }
        Err(e) => r.error(4, "mountain-pass consistency", &e),
    }

    // 5
    let implications = (|| -> Result<_, LabError> {
        let g = Grid2D::new(IMPLICATION_N, BoundaryCondition::Dirichlet)?;
        let d = mountain_pass_level(&g, &MpOptions::default())?.best.d_min;
        let band = g.h() * g.h();
        let mut rng = samplers::rng(SEED);
        let (mut counts, mut violations) = ([0usize; 3], 0usize);
        for k in 0..IMPLICATION_SAMPLES {
            let w = random_clamped(g, &mut rng, 3);
            let rho = 10f64.powf(-2.0 + 3.0 * (k as f64 + 0.5) / IMPLICATION_SAMPLES as f64);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let v = w.scaled(sign * (rho * 6.0 * d / h2_sq(&w)).sqrt());
            let h = h2_sq(&v);
            let c = nehari_classify(&v, NEHARI_TOL).tag;
            if h > 0.0 && h < 6.0 * d * (1.0 - band) {
                counts[0] += 1;
                violations += (c != NehariTag::NPlus) as usize;
            }
            if c == NehariTag::NPlus && energy_J(&v) < d * (1.0 - band) {
                counts[1] += 1;
                violations += (h >= 6.0 * d * (1.0 + band)) as usize;
            }
            if c == NehariTag::NMinus {
                counts[2] += 1;
                violations += (h <= 6.0 * d * (1.0 - band)) as usize;
            }
        }
        Ok((counts, violations, d))
    })();
    match implications {
        Ok((c, v, d)) => r.line(5, "sampled Nehari implications", v == 0, format!(
            "{IMPLICATION_SAMPLES} fields at n={IMPLICATION_N}, d_min {d:.2}; premises met (i) {} (ii) {} (iii) {}; violations {v}",
            c[0], c[1], c[2]
        )),
        Err(e) => r.error(5, "sampled Nehari implications", &e),
    }

    // 6
    match &dichotomy {
        Ok(s) => {
            let keys = [
                "decay.verdict", "blowup.verdict", "blowup.t_star_estimated", "decay.no_direct_nehari_crossing",
                "blowup.no_direct_nehari_crossing",
            ];
            let (ok, bad) = checks_pass(s, &keys);
            let ratio = scalar(s, "decay.h2_final_over_initial");
            let ok = ok && ratio <= DECAY_FLOOR;
            r.line(6, "Nehari dichotomy", ok, format!(
                "0.9u*: {} (h2 ratio {ratio:.2e}); 1.1u*: {} t* {:.4e}{}",
                s.verdicts["decay"].kind, s.verdicts["blowup"].kind, scalar(s, "blowup.t_star"),
                if bad.is_empty() { String::new() } else { format!("; failed {bad:?}") }
            ));
            blowup_suites.push(("dichotomy", "blowup", s.clone()));
        }
        Err(e) => r.error(6, "Nehari dichotomy", e),
    }

    // 7
    match &eq43 {
        Ok(s) => {
            let (ok, bad) = checks_pass(s, &["initial_condition_holds", "eq43.verdict", "eq43.l2_increasing"]);
            r.line(7, "eigenfunction blow-up", ok, format!(
                "alpha {:.4}, lhs {:.6e} vs rhs {:.6e}; {} t* {:.4e}; J(u0) {:.1} vs d_min {:.1}: above level = {}{}",
                scalar(s, "alpha"), scalar(s, "condition.lhs"), scalar(s, "condition.rhs"), s.verdicts["eq43"].kind,
                scalar(s, "eq43.t_star"), scalar(s, "J0"), scalar(s, "d_min"), s.flags["above_mountain_pass"],
                if bad.is_empty() { String::new() } else { format!("; failed {bad:?}") }
            ));
            blowup_suites.push(("eq43", "eq43", s.clone()));
        }
        Err(e) => r.error(7, "eigenfunction blow-up", &e),
    }

    // 8
    if blowup_suites.len() == 2 {
        let mut ok = true;
        let mut parts = Vec::new();
        for (suite, label, s) in &blowup_suites {
            let w = s.checks.get(&format!("{label}.w14_coupling")).copied().unwrap_or(false);
            let c = s.checks.get(&format!("{label}.co_divergence")).copied().unwrap_or(false);
            ok &= w && c;
            parts.push(format!(
                "{suite}: W14 max ratio {:.3}, co-divergence {:.3}",
                scalar(s, &format!("{label}.w14_max_ratio")), scalar(s, &format!("{label}.co_divergence"))
            ));
        }
        r.line(8, "norm-chain monitors", ok, parts.join("; "));
    } else {
        r.line(8, "norm-chain monitors", false, "blow-up suites unavailable".into());
    }

    // 9
    match run(Experiment::LinearVerification, root, |_| {}) {
        Ok(s) => r.line(9, "linear verification", s.passed, format!(
            "Navier mode rel. error {:.1e}; Dirichlet error {:.3e} -> {:.3e} (ratio {:.3}); max a-priori ratio {:.3} <= 10",
            scalar(&s, "navier_mode.relative_error"), scalar(&s, "dirichlet.error_dt"),
            scalar(&s, "dirichlet.error_dt_half"), scalar(&s, "dirichlet.error_ratio"), scalar(&s, "a_priori_ratio.max")
        )),
        Err(e) => r.error(9, "linear verification", &e),
    }

    // 10
    match run(Experiment::Eigen, root, |_| {}) {
        Ok(s) => r.line(10, "eigen suite", s.passed, format!(
            "lambda1 {:.3} / {:.3} / {:.3} (n=32/64/128) >= {:.3}; orthonormality {:.1e}; Poincaré min {:.2} vs lambda4 {:.2}",
            scalar(&s, "lambda1.n32"), scalar(&s, "lambda1.n64"), scalar(&s, "lambda1.n128"),
            scalar(&s, "continuum_floor"), scalar(&s, "orthonormality_defect.n128"),
            scalar(&s, "poincare.min_ratio"), scalar(&s, "poincare.lambda_k")
        )),
        Err(e) => r.error(10, "eigen suite", &e),
    }

    // 11
    match run(Experiment::RadialSweep, root, |_| {}) {
        Ok(s) => {
            let keys = [
                "closed_form_phi", "closed_form_phi_byparts", "phi_ode_first_order", "onset_monotone",
                "blowup_bracket_found", "small_amplitude_decays",
            ];
            let (ok, bad) = checks_pass(&s, &keys);
            r.line(11, "radial suite", ok, format!(
                "Phi {:.6} / {:.6} vs -51/70; ODE residual ratio {:.3}; onset threshold in [{:.4}, {:.4}]{}",
                scalar(&s, "closed_form.phi"), scalar(&s, "closed_form.phi_byparts"),
                scalar(&s, "phi_ode_residual.ratio"), scalar(&s, "threshold.lo"), scalar(&s, "threshold.hi"),
                if bad.is_empty() { String::new() } else { format!("; failed {bad:?}") }
            ));
            info(format!(
                "Phi eventually monotone on blow-up runs: {}",
                s.checks.get("blowup_phi_eventually_monotone").copied().unwrap_or(false)
            ));
        }
        Err(e) => r.error(11, "radial suite", &e),
    }

    // 12
    let repro = (|| -> Result<_, LabError> {
        let dir = root.join("repro");
        let mut cfg = ExperimentConfig::defaults(Experiment::NehariDichotomy, None);
        cfg.output_dir = dir.join("run").to_string_lossy().into_owned();
        let a = run_experiment(&cfg)?;
        std::fs::rename(dir.join("run"), dir.join("first"))?;
        let b = run_experiment(&cfg)?;
        let same = a.scalars.len() == b.scalars.len()
            && a.scalars.iter().all(|(k, v)| b.scalars.get(k).map(|w| w.to_bits()) == Some(v.to_bits()))
            && a.files == b.files;

        let g = cfg.grid()?;
        let u0 = random_clamped(g, &mut samplers::rng(SEED), 3).scaled(60.0);
        let it = Integrator::clamped(g, 0.0, None, &cfg.evolution)?;
        let mut sim = Simulation::new(it, StateField::Grid(u0), cfg.evolution.clone())?;
        sim.run_steps(100)?;
        let path = dir.join("mid.ckpt");
        Checkpoint {
            config: cfg.render(),
            label: "mid".into(),
            source: SourceSpec::Zero,
            opts: sim.opts.clone(),
            state: sim.state.clone(),
            diag: sim.diag.clone(),
        }
        .save(&path)?;
        sim.run_steps(100)?;
        let mut resumed = resume_simulation(&Checkpoint::load(&path)?)?;
        resumed.run_steps(100)?;
        let rows = resumed.diag.rows == sim.diag.rows && resumed.state == sim.state;
        Ok((same, a.scalars.len(), rows, sim.diag.len()))
    })();
    match repro {
        Ok((same, n, rows, len)) => r.line(12, "reproducibility", same && rows, format!(
            "rerun: {n} scalars bitwise equal = {same}; resume after 100 steps: {len} rows identical = {rows}"
        )),
        Err(e) => r.error(12, "reproducibility", &e),
    }

    println!("{} of 12 criteria failed", r.failed);
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
