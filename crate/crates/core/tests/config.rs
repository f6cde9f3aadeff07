use proptest::prelude::*;

use hessflow::config::{parse_config, parse_with_overrides, Experiment, ExperimentConfig, KEYS};
use hessflow::LabError;

fn config_error(text: &str) -> (usize, String) {
    match parse_config(text) {
        Err(LabError::Config { line, key, .. }) => (line, key),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn minimal_file_fills_defaults() {
    let cfg = parse_config("experiment = eigen\ngrid.n = 32\n").unwrap();
    let mut want = ExperimentConfig::defaults(Experiment::Eigen, None);
    want.n = 32;
    assert_eq!(cfg, want);
}

#[test]
fn errors_name_the_line_and_key() {
    assert_eq!(config_error("experiment = eigen\ngrid.n = -4\n"), (2, "grid.n".into()));
    assert_eq!(config_error("experiment = eigen\n\n# note\ngrid.colour = red\n"), (4, "grid.colour".into()));
    assert_eq!(config_error("grid.n = 16\n").1, "experiment");
    assert_eq!(config_error("experiment = nonsense\n"), (1, "experiment".into()));
    assert_eq!(config_error("experiment = eigen\ntime.T = 0\n"), (2, "time.T".into()));
}

#[test]
fn sections_prefix_keys() {
    let cfg = parse_config("experiment = mp-level\n[grid]\nn = 40\n[mp]\nrestarts = 2\n").unwrap();
    assert_eq!(cfg.n, 40);
    assert_eq!(cfg.mp.restarts, 2);
}

#[test]
fn overrides_win_over_the_file() {
    let cfg = parse_with_overrides("experiment = eigen\ngrid.n = 32\n", &[("grid.n".into(), "48".into())]).unwrap();
    assert_eq!(cfg.n, 48);
    let err = parse_with_overrides("experiment = eigen\n", &[("bogus".into(), "1".into())]).unwrap_err();
    assert!(matches!(err, LabError::Config { line: 0, .. }), "{err}");
}

#[test]
fn every_key_is_rendered_and_settable() {
    for &e in &Experiment::ALL {
        let cfg = ExperimentConfig::defaults(e, None);
        let text = cfg.render();
        assert_eq!(text.lines().count(), KEYS.len());
        for key in KEYS {
            let value = cfg.get(key).unwrap();
            let mut copy = cfg.clone();
            copy.set(key, &value).unwrap_or_else(|m| panic!("{key} = {value}: {m}"));
            assert_eq!(copy, cfg, "{key}");
        }
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}

fn experiment() -> impl Strategy<Value = Experiment> {
    proptest::sample::select(Experiment::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn render_parse_is_idempotent(
        e in experiment(),
        n in 4usize..200,
        t in 1e-6..10.0f64,
        lambda in -1e4..1e4f64,
        seed in any::<u64>(),
        eps in 0.001..0.9f64,
        c in -5.0..5.0f64,
    ) {
        let text = format!(
            "experiment = {e}\ngrid.n = {n}\ntime.T = {t:?}\nphysics.lambda = {lambda:?}\nseed = {seed}\n\
             dichotomy.epsilon = {eps:?}\nphysics.source = constant {c:?}\n"
        );
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(cfg.n, n);
        prop_assert_eq!(cfg.evolution.t_end.to_bits(), t.to_bits());
        let again = parse_config(&cfg.render()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.render(), cfg.render());
    }
}
