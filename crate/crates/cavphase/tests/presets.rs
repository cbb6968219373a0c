use std::f64::consts::PI;

use cavphase::config::{experiment_to_string, parse_experiment};
use cavphase::presets::{preset, PRESET_NAMES};

struct Row {
    name: &'static str,
    mu: f64,
    lambda: f64,
    epsilon: f64,
    alpha: f64,
    tau: f64,
    delta: f64,
    g1: &'static str,
    g2: &'static str,
    refine: usize,
    switch_at: Option<usize>,
    noise: f64,
}

const E16: f64 = 1.0 / (16.0 * PI);
const E8: f64 = 1.0 / (8.0 * PI);
const E4: f64 = 1.0 / (4.0 * PI);
const G2: &str = "(-1/2*x^2, y^2)";

#[rustfmt::skip]
fn table() -> Vec<Row> {
    let r = |name, mu, lambda, epsilon, alpha, tau, delta, g1, g2, refine, switch_at, noise| Row {
        name, mu, lambda, epsilon, alpha, tau, delta, g1, g2, refine, switch_at, noise,
    };
    vec![
        r("test1",  0.2, 1.0,  E16, 1e-2, 1e-3, 1e-2,   "(0, 1/10 - 3/10*y)", G2, 1000, None, 0.0),
        r("test2a", 1.0, 1.0,  E16, 1e-2, 1e-3, 1e-2,   "(2, 0)", G2, 1500, None, 0.0),
        r("test2b", 0.5, 1.0,  E16, 1e-2, 1e-3, 1e-2,   "(x, y)", "(-y, -x)", 1000, None, 0.0),
        r("test2c", 2.0, -0.2, E16, 1e-2, 1e-3, 1e-2,   "(5*x, 4*y)", "(-3*y, -3*x)", 2000, None, 0.0),
        r("test3a", 0.5, 1.0,  E8,  1e-2, 1e-3, 1e-2,   "(1/10, 0)", G2, 6000, None, 0.0),
        r("test3b", 0.5, 1.0,  E8,  5e-2, 1e-3, 1e-2,   "(1/10, 0)", G2, 6000, None, 0.0),
        r("test3c", 0.5, 1.0,  E16, 1e-2, 1e-3, 1e-2,   "(0, 2/5*x - 3/10*y)", G2, 3000, None, 0.0),
        r("test4a", 0.5, 1.0,  E16, 1e-2, 1e-3, 1e-2,   "(x, y)", "(-y, -x)", 5000, None, 0.0),
        r("test4b", 0.5, 1.0,  E4,  1e-2, 1e-3, 7.5e-2, "(x, y)", "(-y, -x)", 5000, Some(8000), 0.0),
        r("test5",  0.5, 1.0,  E16, 1e-2, 5e-4, 1e-2,   "(x, y)", "(-y, -x)", 5000, None, 0.0),
        r("test6a", 0.2, 1.0,  E16, 1e-2, 5e-4, 1e-2,   "(0, 1/10 - 3/10*y)", G2, 2000, None, 2.0),
        r("test6b", 0.2, 1.0,  E16, 5e-2, 5e-4, 1e-2,   "(0, 1/10 - 3/10*y)", G2, 2500, None, 5.0),
        r("test6c", 0.5, 1.0,  E16, 1e-2, 5e-4, 1e-2,   "(0, 2/5*x - 3/10*y)", G2, 3000, None, 2.0),
        r("test6d", 0.5, 1.0,  E16, 1e-2, 5e-4, 1e-2,   "(0, 2/5*x - 3/10*y)", G2, 10000, None, 5.0),
        r("test6e", 0.5, 1.0,  E4,  1e-2, 1e-3, 7.5e-2, "(x, y)", "(-y, -x)", 5000, Some(8000), 2.0),
        r("test6f", 0.5, 1.0,  E4,  1e-2, 5e-4, 7.5e-2, "(x, y)", "(-y, -x)", 8000, Some(10000), 5.0),
    ]
}

#[test]
fn presets_match_the_parameter_table() {
    for row in table() {
        let e = preset(row.name).unwrap();
        let c = &e.run;
        let ctx = row.name;
        assert_eq!((c.mu, c.lambda), (row.mu, row.lambda), "{ctx}");
        assert!((c.epsilon - row.epsilon).abs() < 1e-15, "{ctx}");
        assert_eq!((c.alpha_tilde, c.tau, c.delta, c.tol), (row.alpha, row.tau, row.delta, 1e-5), "{ctx}");
        assert_eq!(c.refine_period, row.refine, "{ctx}");
        assert_eq!(c.epsilon_schedule.map(|s| s.at_iteration), row.switch_at, "{ctx}");
        if let Some(s) = c.epsilon_schedule {
            assert_eq!(s.divisor, 4.0, "{ctx}");
            assert!((c.epsilon / s.divisor - E16).abs() < 1e-15, "{ctx}");
        }
        assert_eq!(e.noise.level, row.noise, "{ctx}");
        assert_eq!(e.loads.len(), 2, "{ctx}");
        assert_eq!((e.loads[0].id.as_str(), e.loads[1].id.as_str()), ("g1", "g2"), "{ctx}");
        assert_eq!((e.loads[0].expr.text.as_str(), e.loads[1].expr.text.as_str()), (row.g1, row.g2), "{ctx}");
        assert!(!c.backtracking, "{ctx}");
    }
    assert_eq!(table().len() + 2, PRESET_NAMES.len());
}

#[test]
fn every_preset_survives_its_config_text() {
    for name in PRESET_NAMES {
        let e = preset(name).unwrap();
        assert_eq!(parse_experiment(&experiment_to_string(&e)).unwrap(), e, "{name}");
    }
}
