use hessflow::config::{parse_config, ExperimentConfig};
use hessflow::evolution::{simulate, EvolutionOptions};
use hessflow::experiments::{run_experiment, RunSummary};
use hessflow::mountain_pass::{mountain_pass_level, MpOptions};
use hessflow::radial::amplitude_sweep;
use hessflow::samplers::{self, random_clamped};
use hessflow::{BoundaryCondition, Grid2D};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn thread_count_does_not_change_results() {
    let g = Grid2D::new(16, BoundaryCondition::Dirichlet).unwrap();
    let work = || {
        let mp = mountain_pass_level(&g, &MpOptions::default()).unwrap();
        let u0 = random_clamped(g, &mut samplers::rng(5), 3).scaled(40.0);
        let (diag, _) = simulate(&u0, 0.0, None, &EvolutionOptions::for_horizon(1e-3)).unwrap();
        let sweep = amplitude_sweep(32, &[0.5, 4.0], &EvolutionOptions::for_horizon(0.02)).unwrap();
        (mp.best.d_min.to_bits(), bits(mp.best.v_star.values()), diag, sweep)
    };
    let one = in_pool(1, work);
    let four = in_pool(4, work);
    assert_eq!(one.0, four.0);
    assert_eq!(one.1, four.1);
    assert_eq!(one.2, four.2);
    assert_eq!(one.3, four.3);
}

fn run_in(dir: &std::path::Path, text: &str) -> (ExperimentConfig, RunSummary) {
    let mut cfg = parse_config(text).unwrap();
    cfg.output_dir = dir.to_string_lossy().into_owned();
    let s = run_experiment(&cfg).unwrap();
    (cfg, s)
}

fn assert_same(a: &RunSummary, b: &RunSummary) {
    assert_eq!(a.scalars.keys().collect::<Vec<_>>(), b.scalars.keys().collect::<Vec<_>>());
    for (k, v) in &a.scalars {
        assert_eq!(v.to_bits(), b.scalars[k].to_bits(), "{k}");
    }
    assert_eq!(a.verdicts, b.verdicts);
    assert_eq!(a.checks, b.checks);
    assert_eq!(a.files, b.files);
}

#[test]
fn reruns_reproduce_summaries() {
    let suites = [
        "experiment = verify-identities\nidentities.sizes = 16,32\n",
        "experiment = linear-verification\ngrid.n = 16\ngrid.modes = 6\ntime.T = 2e-4\nlinear.dt = 1e-5\n",
        "experiment = nehari-dichotomy\ngrid.n = 16\ntime.T = 0.05\n",
    ];
    for text in suites {
        // same output path for both runs, since the echoed config names it
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("run");
        let (_, s1) = run_in(&dir, text);
        let first = root.path().join("first");
        std::fs::rename(&dir, &first).unwrap();
        let (_, s2) = in_pool(2, || run_in(&dir, text));
        assert_same(&s1, &s2);
        let written = std::fs::read(first.join("summary.json")).unwrap();
        assert_eq!(written, std::fs::read(dir.join("summary.json")).unwrap());
        let parsed: RunSummary = serde_json::from_slice(&written).unwrap();
        assert_eq!(parsed.scalars, s1.scalars);
        for f in &s1.files {
            assert!(first.join(&f.path).exists(), "{}", f.path);
        }
    }
}
