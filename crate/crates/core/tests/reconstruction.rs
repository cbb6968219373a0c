use cavphase_core::elasticity::{traction, ForwardModel, LoadCase, Traction};
use cavphase_core::inversion::{
    reconstruct, EpsilonSchedule, IterationRecord, NoObserver, RunConfig, RunObserver, StopReason,
};
use cavphase_core::mesh::{build_square_mesh, BoundaryTrace, CavityShape, DirichletSpec, TriMesh};
use cavphase_core::phasefield::PhaseField;
use cavphase_core::sparse::SolverKind;
use cavphase_core::synth::{generate_measurements, GeneratorConfig};

fn tractions() -> Vec<(String, Traction)> {
    vec![
        ("g1".to_string(), traction(|p| [0.0, 0.1 - 0.3 * p[1]])),
        ("g2".to_string(), traction(|p| [-0.5 * p[0] * p[0], p[1] * p[1]])),
    ]
}

fn disk_loads(working: &TriMesh, config: &RunConfig, generator: usize) -> Vec<LoadCase> {
    let target = CavityShape::Disk {
        center: [0.2, 0.1],
        radius: 0.35,
    };
    let gen = GeneratorConfig::new(generator, DirichletSpec::bottom());
    generate_measurements(&target, &tractions(), &config.params().unwrap(), &gen, working).unwrap()
}

/// Records every iteration and checks feasibility of the field on the fly.
#[derive(Default)]
struct Checker {
    records: Vec<IterationRecord>,
    band_violations: usize,
    box_violations: usize,
}

impl RunObserver for Checker {
    fn on_iteration(&mut self, record: &IterationRecord, _mesh: &TriMesh, field: &PhaseField) {
        self.records.push(record.clone());
        for (v, f) in field.values().iter().zip(field.frozen()) {
            if *f && *v != 0.0 {
                self.band_violations += 1;
            }
            if !(0.0..=1.0).contains(v) {
                self.box_violations += 1;
            }
        }
    }
}

fn background_loads(working: &TriMesh, source: &TriMesh, config: &RunConfig) -> Vec<LoadCase> {
    let model = ForwardModel::new(source, config.params().unwrap(), SolverKind::Direct);
    let op = model.background_operator().unwrap();
    tractions()
        .into_iter()
        .map(|(id, g)| {
            let u = model.forward(&op, &g).unwrap();
            let trace = BoundaryTrace::from_field(source, u.values()).unwrap();
            LoadCase::from_trace(id, g, trace, working).unwrap()
        })
        .collect()
}

#[test]
fn no_cavity_data_gives_no_cavity() {
    let working = build_square_mesh(16, &DirichletSpec::bottom()).unwrap();
    let config = RunConfig::default();
    let loads = background_loads(&working, &working, &config);
    let history = reconstruct(&config, working, loads, &mut NoObserver).unwrap();
    assert_eq!(history.stop, StopReason::Converged);
    assert!(history.field.max() <= 0.1, "max v {}", history.field.max());
}

#[test]
fn no_cavity_data_from_finer_mesh_only_softens_corners() {
    // The coarse mesh is stiffer than the generator; the flow compensates
    // next to the corners where Σ_D meets Σ_N and nowhere else.
    let working = build_square_mesh(24, &DirichletSpec::bottom()).unwrap();
    let fine = build_square_mesh(48, &DirichletSpec::bottom()).unwrap();
    let config = RunConfig::default();
    let loads = background_loads(&working, &fine, &config);
    let history = reconstruct(&config, working, loads, &mut NoObserver).unwrap();
    assert_eq!(history.stop, StopReason::Converged);
    let away = history
        .mesh
        .vertices()
        .iter()
        .zip(history.field.values())
        .filter(|(p, _)| (p[0].abs() - 1.0).hypot(p[1] + 1.0) > 0.4)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    assert!(away <= 0.1, "max v away from the corners {away}");
}

#[test]
fn early_steps_decrease_the_objective() {
    let working = build_square_mesh(16, &DirichletSpec::bottom()).unwrap();
    let config = RunConfig {
        max_iterations: 200,
        ..RunConfig::default()
    };
    let loads = disk_loads(&working, &config, 32);
    let mut checker = Checker::default();
    let history = reconstruct(&config, working, loads, &mut checker).unwrap();
    assert_eq!(history.records.len(), 201);
    assert_eq!(checker.records, history.records);
    for w in history.records.windows(2) {
        assert!(w[1].objective <= w[0].objective + 1e-12, "{} -> {}", w[0].objective, w[1].objective);
    }
    for r in &history.records {
        assert!((r.misfit + r.gl_energy - r.objective).abs() <= 1e-12 * r.objective.abs().max(1.0));
    }
    assert_eq!(checker.band_violations, 0);
    assert_eq!(checker.box_violations, 0);
    assert_eq!(history.stop, StopReason::MaxIterations);
}

#[test]
fn refinement_keeps_misfit_and_feasibility() {
    let working = build_square_mesh(24, &DirichletSpec::bottom()).unwrap();
    let config = RunConfig {
        max_iterations: 450,
        refine_period: 150,
        ..RunConfig::default()
    };
    let loads = disk_loads(&working, &config, 48);
    let mut checker = Checker::default();
    let history = reconstruct(&config, working, loads, &mut checker).unwrap();
    assert_eq!(history.refinements.len(), 3);
    for e in &history.refinements {
        assert!(e.new_vertices > e.old_vertices);
    }
    // Later events see a sharp interface where the coarse forward solve is
    // far from resolved; only the first one is held to 5%.
    let e = &history.refinements[0];
    let change = (e.misfit_after - e.misfit_before).abs() / e.misfit_before;
    assert!(change <= 0.05, "misfit {} -> {}", e.misfit_before, e.misfit_after);
    assert_eq!(checker.band_violations, 0);
    assert_eq!(checker.box_violations, 0);
    assert!(history.mesh.validate().is_ok());
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let working = build_square_mesh(12, &DirichletSpec::bottom()).unwrap();
        let config = RunConfig {
            max_iterations: 120,
            refine_period: 60,
            ..RunConfig::default()
        };
        let loads = disk_loads(&working, &config, 24);
        reconstruct(&config, working, loads, &mut NoObserver).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.records, b.records);
    assert_eq!(a.field.values(), b.field.values());
    assert_eq!(a.mesh, b.mesh);
}

#[test]
fn epsilon_switch_is_recorded_once() {
    let working = build_square_mesh(10, &DirichletSpec::bottom()).unwrap();
    let config = RunConfig {
        epsilon: 1.0 / (4.0 * std::f64::consts::PI),
        epsilon_schedule: Some(EpsilonSchedule::new(30)),
        max_iterations: 60,
        ..RunConfig::default()
    };
    let loads = disk_loads(&working, &config, 20);
    let history = reconstruct(&config, working, loads, &mut NoObserver).unwrap();
    assert_eq!(history.epsilon_events.len(), 1);
    let small = 1.0 / (16.0 * std::f64::consts::PI);
    assert!((history.epsilon - small).abs() < 1e-15);
    for r in &history.records {
        let expect = if r.iteration > 30 { small } else { config.epsilon };
        assert!((r.epsilon - expect).abs() < 1e-15, "iteration {}", r.iteration);
    }
}

#[test]
fn stopping_appends_one_final_record() {
    let working = build_square_mesh(10, &DirichletSpec::bottom()).unwrap();
    let config = RunConfig {
        tol: 5e-3,
        ..RunConfig::default()
    };
    let loads = disk_loads(&working, &config, 20);
    let history = reconstruct(&config, working, loads, &mut NoObserver).unwrap();
    assert_eq!(history.stop, StopReason::Converged);
    let n = history.records.len();
    assert!(history.records[n - 1].step_norm.unwrap() <= config.tol);
    assert!(history.records[1..n - 1].iter().all(|r| r.step_norm.unwrap() > config.tol));
    assert_eq!(history.iterations(), n - 1);
}
