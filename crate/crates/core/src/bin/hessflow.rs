use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hessflow::checkpoint::{write_atomic, Checkpoint};
use hessflow::config::{assignments, parse_with_overrides, Experiment, ExperimentConfig};
use hessflow::experiments::{resume_simulation, run_experiment, RunSummary};
use hessflow::LabError;

#[derive(Parser)]
#[command(name = "hessflow", version, about = "Fourth-order Hessian-determinant flow laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment named in a config file.
    Run {
        config: PathBuf,
        /// `--key value` or `--key=value` overrides, applied after the file.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Discretization identities under refinement.
    VerifyIdentities(ExpArgs),
    /// Mountain-pass level and its bounds.
    MpLevel(ExpArgs),
    /// Clamped biharmonic eigenpairs.
    Eigen(ExpArgs),
    /// Decay below and blow-up above the stationary solution.
    NehariDichotomy(ExpArgs),
    /// Blow-up from a scaled first eigenfunction.
    #[command(name = "eq43-blowup")]
    Eq43Blowup(ExpArgs),
    /// Radial amplitude sweep on the disk.
    RadialSweep(ExpArgs),
    /// Linear problem against exact solutions.
    LinearVerification(ExpArgs),
    /// Continue a checkpointed evolution.
    Resume {
        checkpoint: PathBuf,
        /// Accepted steps to take (default: until a verdict).
        #[arg(long)]
        steps: Option<usize>,
        /// Directory for the continued CSV and checkpoint (default: next to the input).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print every config key with its default for an experiment.
    Keys { experiment: String },
}

#[derive(Args)]
struct ExpArgs {
    /// Config file; the experiment key may be omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &LabError) -> u8 {
    match e {
        LabError::Stage { source, .. } => exit_code(source),
        LabError::LinearSolve(_)
        | LabError::NonConvergence { .. }
        | LabError::Stalled { .. }
        | LabError::Degenerate(_) => 3,
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, LabError> {
    let (exp, args) = match cli.cmd {
        Cmd::Run { config, overrides } => {
            let text = fs::read_to_string(&config)?;
            let cfg = parse_with_overrides(&text, &parse_overrides(&overrides)?)?;
            return execute(&cfg);
        }
        Cmd::Resume { checkpoint, steps, output } => return resume(&checkpoint, steps, output),
        Cmd::Keys { experiment } => {
            let e: Experiment = experiment.parse().map_err(LabError::InvalidArgument)?;
            print!("{}", ExperimentConfig::defaults(e, None).render());
            return Ok(ExitCode::SUCCESS);
        }
        Cmd::VerifyIdentities(a) => (Experiment::VerifyIdentities, a),
        Cmd::MpLevel(a) => (Experiment::MpLevel, a),
        Cmd::Eigen(a) => (Experiment::Eigen, a),
        Cmd::NehariDichotomy(a) => (Experiment::NehariDichotomy, a),
        Cmd::Eq43Blowup(a) => (Experiment::Eq43Blowup, a),
        Cmd::RadialSweep(a) => (Experiment::RadialSweep, a),
        Cmd::LinearVerification(a) => (Experiment::LinearVerification, a),
    };
    let mut overrides = parse_overrides(&args.overrides)?;
    let mut file = args.config;
    if let Some(pos) = overrides.iter().position(|(k, _)| k == "config") {
        file = Some(PathBuf::from(overrides.remove(pos).1));
    }
    let text = match &file {
        Some(p) => fs::read_to_string(p)?,
        None => String::new(),
    };
    if let Some(a) = assignments(&text)?.iter().rev().find(|a| a.key == "experiment") {
        if a.value != exp.as_str() {
            return Err(LabError::Config {
                line: a.line,
                key: a.key.clone(),
                message: format!("file names `{}` but the subcommand is `{exp}`", a.value),
            });
        }
    }
    overrides.insert(0, ("experiment".into(), exp.as_str().into()));
    execute(&parse_with_overrides(&text, &overrides)?)
}

/// `--key value`, `--key=value` or `key=value` tokens.
fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>, LabError> {
    let bad = |t: &str| LabError::InvalidArgument(format!("cannot read override `{t}` (expected --key value)"));
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(t) = it.next() {
        let body = t.strip_prefix("--").unwrap_or(t);
        if let Some((k, v)) = body.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else if t.starts_with("--") {
            let v = it.next().ok_or_else(|| bad(t))?;
            out.push((body.to_string(), v.clone()));
        } else {
            return Err(bad(t));
        }
    }
    Ok(out)
}

fn execute(cfg: &ExperimentConfig) -> Result<ExitCode, LabError> {
    let summary = run_experiment(cfg)?;
    report(&summary, &cfg.output_dir);
    Ok(if summary.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn report(s: &RunSummary, dir: &str) {
    for (k, v) in &s.verdicts {
        let t = v.t_star_estimate.map_or(String::new(), |t| format!(" t*={t:e}"));
        println!("verdict {k}: {}{t}", v.kind);
    }
    for (k, ok) in &s.checks {
        println!("{} {k}", if *ok { "PASS" } else { "FAIL" });
    }
    for (k, v) in &s.flags {
        println!("flag {k} = {v}");
    }
    println!("summary: {}", Path::new(dir).join("summary.json").display());
}

fn resume(path: &Path, steps: Option<usize>, output: Option<PathBuf>) -> Result<ExitCode, LabError> {
    let ckpt = Checkpoint::load(path)?;
    let mut sim = resume_simulation(&ckpt)?;
    let verdict = match steps {
        Some(k) => sim.run_steps(k)?,
        None => Some(sim.run()?),
    };
    let dir = output.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&dir)?;
    let mut buf = Vec::new();
    sim.diag.write_csv(&mut buf)?;
    write_atomic(&dir.join(format!("{}.resumed.csv", ckpt.label)), &buf)?;
    Checkpoint { state: sim.state.clone(), diag: sim.diag.clone(), opts: sim.opts.clone(), ..ckpt.clone() }
        .save(&dir.join(format!("{}.resumed.ckpt", ckpt.label)))?;
    println!("{}: t = {:e}, {} steps", ckpt.label, sim.state.t, sim.state.steps);
    match verdict {
        Some(v) => println!("verdict: {} ({})", v.kind, v.trigger),
        None => println!("verdict: pending"),
    }
    Ok(ExitCode::SUCCESS)
}
