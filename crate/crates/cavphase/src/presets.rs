//! Built-in experiments. Target geometries are defined once here and shared
//! between presets.

use std::f64::consts::PI;

use cavphase_core::inversion::{EpsilonSchedule, RunConfig};
use cavphase_core::mesh::{CavityShape, Side};
use cavphase_core::synth::NoiseSpec;

use crate::experiment::{Experiment, LoadSpec};

pub const PRESET_NAMES: [&str; 18] = [
    "test1", "test2a", "test2b", "test2c", "test3a", "test3b", "test3c", "test4a", "test4b", "test5", "test6a",
    "test6b", "test6c", "test6d", "test6e", "test6f", "disk-desk", "square-desk",
];

pub fn disk_target() -> CavityShape {
    CavityShape::Disk {
        center: [0.2, 0.1],
        radius: 0.35,
    }
}

pub fn square_target() -> CavityShape {
    CavityShape::AxisSquare {
        center: [-0.1, 0.1],
        half_side: 0.3,
    }
}

pub fn two_cavity_target() -> CavityShape {
    CavityShape::Union(vec![
        CavityShape::AxisSquare {
            center: [-0.35, 0.3],
            half_side: 0.2,
        },
        CavityShape::Disk {
            center: [0.35, -0.25],
            radius: 0.22,
        },
    ])
}

/// L-shaped hole.
pub fn nonconvex_target() -> CavityShape {
    CavityShape::Polygon(vec![
        [-0.4, -0.35],
        [0.4, -0.35],
        [0.4, -0.05],
        [0.0, -0.05],
        [0.0, 0.45],
        [-0.4, 0.45],
    ])
}

fn loads(pairs: &[(&str, &str)]) -> Vec<LoadSpec> {
    pairs
        .iter()
        .map(|(id, text)| LoadSpec::parse(id, text).expect("preset tractions parse"))
        .collect()
}

fn base(name: &str, mu: f64, lambda: f64, target: CavityShape, tractions: &[(&str, &str)]) -> Experiment {
    Experiment {
        name: name.to_string(),
        run: RunConfig {
            mu,
            lambda,
            ..RunConfig::default()
        },
        working: 32,
        generator: 64,
        dirichlet: vec![Side::Bottom],
        target,
        loads: loads(tractions),
        noise: NoiseSpec::new(0.0, 0).expect("zero noise"),
    }
}

const G2_QUAD: (&str, &str) = ("g2", "(-1/2*x^2, y^2)");
const G_XY: (&str, &str) = ("g1", "(x, y)");
const G_SWAP: (&str, &str) = ("g2", "(-y, -x)");

fn with_noise(mut e: Experiment, level: f64) -> Experiment {
    e.noise = NoiseSpec::new(level, 1).expect("valid level");
    e.run.noise_seed = 1;
    e
}

pub fn preset(name: &str) -> Option<Experiment> {
    let e = match name {
        "test1" => base("test1", 0.2, 1.0, disk_target(), &[("g1", "(0, 1/10 - 3/10*y)"), G2_QUAD]),
        "test2a" => {
            let mut e = base("test2a", 1.0, 1.0, disk_target(), &[("g1", "(2, 0)"), G2_QUAD]);
            e.run.refine_period = 1500;
            e
        }
        "test2b" => base("test2b", 0.5, 1.0, disk_target(), &[G_XY, G_SWAP]),
        "test2c" => {
            let mut e = base("test2c", 2.0, -0.2, disk_target(), &[("g1", "(5*x, 4*y)"), ("g2", "(-3*y, -3*x)")]);
            e.run.refine_period = 2000;
            e
        }
        "test3a" | "test3b" => {
            let mut e = base(name, 0.5, 1.0, square_target(), &[("g1", "(1/10, 0)"), G2_QUAD]);
            e.run.epsilon = 1.0 / (8.0 * PI);
            e.run.refine_period = 6000;
            if name == "test3b" {
                e.run.alpha_tilde = 5e-2;
            }
            e
        }
        "test3c" => {
            let mut e = base("test3c", 0.5, 1.0, square_target(), &[("g1", "(0, 2/5*x - 3/10*y)"), G2_QUAD]);
            e.run.refine_period = 3000;
            e
        }
        "test4a" => {
            let mut e = base("test4a", 0.5, 1.0, two_cavity_target(), &[G_XY, G_SWAP]);
            e.run.refine_period = 5000;
            e
        }
        "test4b" => {
            let mut e = base("test4b", 0.5, 1.0, two_cavity_target(), &[G_XY, G_SWAP]);
            e.run.epsilon = 1.0 / (4.0 * PI);
            e.run.epsilon_schedule = Some(EpsilonSchedule::new(8000));
            e.run.delta = 7.5e-2;
            e.run.refine_period = 5000;
            e
        }
        "test5" => {
            let mut e = base("test5", 0.5, 1.0, nonconvex_target(), &[G_XY, G_SWAP]);
            e.run.tau = 5e-4;
            e.run.refine_period = 5000;
            e
        }
        "test6a" | "test6b" => {
            let mut e = preset("test1")?;
            e.name = name.to_string();
            e.run.tau = 5e-4;
            if name == "test6a" {
                e.run.refine_period = 2000;
                with_noise(e, 2.0)
            } else {
                e.run.refine_period = 2500;
                e.run.alpha_tilde = 5e-2;
                with_noise(e, 5.0)
            }
        }
        "test6c" | "test6d" => {
            let mut e = preset("test3c")?;
            e.name = name.to_string();
            e.run.tau = 5e-4;
            if name == "test6c" {
                e.run.refine_period = 3000;
                with_noise(e, 2.0)
            } else {
                e.run.refine_period = 10000;
                with_noise(e, 5.0)
            }
        }
        "test6e" | "test6f" => {
            let mut e = preset("test4b")?;
            e.name = name.to_string();
            if name == "test6e" {
                e.run.refine_period = 5000;
                with_noise(e, 2.0)
            } else {
                e.run.tau = 5e-4;
                e.run.refine_period = 8000;
                e.run.epsilon_schedule = Some(EpsilonSchedule::new(10000));
                with_noise(e, 5.0)
            }
        }
        // Small, fast variants for smoke runs.
        "disk-desk" => {
            let mut e = preset("test1")?;
            e.name = name.to_string();
            e.working = 16;
            e.generator = 32;
            e.run.refine_period = 400;
            e.run.backtracking = true;
            e.run.max_iterations = 3000;
            e
        }
        "square-desk" => {
            let mut e = preset("test3c")?;
            e.name = name.to_string();
            e.working = 16;
            e.generator = 32;
            e.run.refine_period = 400;
            e.run.backtracking = true;
            e.run.max_iterations = 3000;
            e
        }
        _ => return None,
    };
    Some(e)
}

pub fn description(name: &str) -> &'static str {
    match name {
        "test1" => "circular cavity, mu=0.2 lambda=1",
        "test2a" => "circular cavity, mu=1 lambda=1, constant traction",
        "test2b" => "circular cavity, mu=0.5 lambda=1",
        "test2c" => "circular cavity, auxetic mu=2 lambda=-0.2",
        "test3a" => "square cavity, eps=1/(8 pi)",
        "test3b" => "square cavity, eps=1/(8 pi), alpha=5e-2",
        "test3c" => "square cavity, eps=1/(16 pi)",
        "test4a" => "square and disk, fixed eps",
        "test4b" => "square and disk, eps continuation at 8000",
        "test5" => "L-shaped cavity, tau=5e-4",
        "test6a" => "test1 with 2% noise",
        "test6b" => "test1 with 5% noise, alpha=5e-2",
        "test6c" => "test3c with 2% noise",
        "test6d" => "test3c with 5% noise",
        "test6e" => "test4b with 2% noise",
        "test6f" => "test4b with 5% noise, eps switch at 10000",
        "disk-desk" => "quick 16x16 disk run with backtracking",
        "square-desk" => "quick 16x16 square run with backtracking",
        _ => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves_and_validates() {
        for name in PRESET_NAMES {
            let e = preset(name).unwrap();
            assert_eq!(e.name, name);
            e.run.validate().unwrap();
            assert!(e.target.inside_square(e.run.d_band));
            assert!(e.generator >= 2 * e.working);
            assert!(!description(name).is_empty());
        }
        assert!(preset("test7").is_none());
    }
}
