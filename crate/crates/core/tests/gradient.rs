use cavphase_core::elasticity::{traction, ForwardModel, LoadCase};
use cavphase_core::fem::{assemble_elastic_stiffness, ElasticityParams};
use cavphase_core::inversion::{objective, objective_gradient, RunConfig};
use cavphase_core::mesh::{build_square_mesh, CavityShape, DirichletSpec, TriMesh};
use cavphase_core::phasefield::frozen_band;
use cavphase_core::sparse::SolverKind;
use cavphase_core::synth::{generate_measurements, GeneratorConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loads(mesh: &TriMesh, config: &RunConfig) -> Vec<LoadCase> {
    let target = CavityShape::Disk {
        center: [0.2, 0.1],
        radius: 0.35,
    };
    let g = vec![
        ("g1".to_string(), traction(|p| [0.0, 0.1 - 0.3 * p[1]])),
        ("g2".to_string(), traction(|p| [-0.5 * p[0] * p[0], p[1] * p[1]])),
    ];
    let gen = GeneratorConfig::new(20, DirichletSpec::bottom());
    generate_measurements(&target, &g, &config.params().unwrap(), &gen, mesh).unwrap()
}

fn total(mesh: &TriMesh, v: &[f64], c: &RunConfig, loads: &[LoadCase]) -> f64 {
    let (m, gl) = objective(mesh, v, c, c.epsilon, loads).unwrap();
    m + gl
}

#[test]
fn adjoint_gradient_matches_central_differences() {
    let mesh = build_square_mesh(10, &DirichletSpec::bottom()).unwrap();
    let config = RunConfig::default();
    let loads = loads(&mesh, &config);
    let frozen = frozen_band(&mesh, config.d_band);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v: Vec<f64> = frozen
        .iter()
        .map(|&f| if f { 0.0 } else { rng.gen_range(0.1..0.9) })
        .collect();
    let grad = objective_gradient(&mesh, &v, &config, config.epsilon, &loads).unwrap();
    let h = 1e-5;
    for _ in 0..5 {
        let dir: Vec<f64> = frozen
            .iter()
            .map(|&f| if f { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let shifted = |s: f64| -> Vec<f64> { v.iter().zip(&dir).map(|(a, d)| a + s * d).collect() };
        let fd = (total(&mesh, &shifted(h), &config, &loads) - total(&mesh, &shifted(-h), &config, &loads))
            / (2.0 * h);
        let an: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let rel = (fd - an).abs() / an.abs().max(1e-14);
        assert!(rel <= 1e-5, "fd {fd} adjoint {an} rel {rel}");
    }
}

#[test]
fn adjoint_identity_against_random_tests() {
    let mesh = build_square_mesh(9, &DirichletSpec::bottom()).unwrap();
    let config = RunConfig::default();
    let loads = loads(&mesh, &config);
    let params = config.params().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let model = ForwardModel::new(&mesh, params, SolverKind::Direct);
    let eval = model.evaluate(&v, &loads[..1]).unwrap();
    let u = &eval.forward[0];
    let p = &eval.adjoint[0];
    let k = assemble_elastic_stiffness(&mesh, &v, &params);
    let dir = mesh.dirichlet_vertices();
    let mass = cavphase_core::fem::assemble_neumann_mass(&mesh);
    let resid: Vec<[f64; 2]> = u
        .values()
        .iter()
        .zip(&loads[0].measurement)
        .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
        .collect();
    let lhs_vec = cavphase_core::fem::apply_componentwise(&mass, &resid);
    let kp = k.mul_vec(&p.to_flat());
    for _ in 0..10 {
        let w: Vec<f64> = (0..2 * mesh.num_vertices())
            .map(|d| if dir[d / 2] { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let lhs: f64 = lhs_vec.iter().zip(&w).map(|(a, b)| a * b).sum();
        let rhs: f64 = kp.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn galerkin_residual_vanishes_on_test_space() {
    let mesh = build_square_mesh(12, &DirichletSpec::bottom()).unwrap();
    let params = ElasticityParams::new(0.5, 1.0, 1e-2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let model = ForwardModel::new(&mesh, params, SolverKind::Direct);
    let g = traction(|p| [p[0], p[1]]);
    let u = model.forward(&model.operator(&v).unwrap(), &g).unwrap();
    let k = assemble_elastic_stiffness(&mesh, &v, &params);
    let f = model.load_vector(&g);
    let ku = k.mul_vec(&u.to_flat());
    let dir = mesh.dirichlet_vertices();
    for _ in 0..20 {
        let w: Vec<f64> = (0..2 * mesh.num_vertices())
            .map(|d| if dir[d / 2] { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let r: f64 = ku.iter().zip(&f).zip(&w).map(|((a, b), c)| (a - b) * c).sum();
        let scale: f64 = f.iter().zip(&w).map(|(a, c)| (a * c).abs()).sum();
        assert!(r.abs() <= 1e-9 * scale, "residual {r} scale {scale}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stiffness_is_affine_in_phase_field(seed in any::<u64>(), t in -2.0f64..2.0) {
        let mesh = build_square_mesh(5, &DirichletSpec::bottom()).unwrap();
        let params = ElasticityParams::new(0.2, 1.0, 1e-2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = mesh.num_vertices();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let moved: Vec<f64> = v.iter().zip(&theta).map(|(a, b)| a + t * b).collect();
        let k0 = assemble_elastic_stiffness(&mesh, &vec![0.0; n], &params);
        let kv = assemble_elastic_stiffness(&mesh, &v, &params);
        let kt = assemble_elastic_stiffness(&mesh, &theta, &params);
        let km = assemble_elastic_stiffness(&mesh, &moved, &params);
        // K(v) = K0 + L(v) with L linear.
        for ((m, a), (b, z)) in km.values().iter().zip(kv.values()).zip(kt.values().iter().zip(k0.values())) {
            let expect = a + t * (b - z);
            prop_assert!((m - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }
}
