use cavphase_core::mesh::{
    build_square_mesh, carve_cavity, interpolate_boundary_trace, refine_by_indicator, CavityShape, DirichletSpec,
};
use proptest::prelude::*;

fn linear(p: [f64; 2]) -> f64 {
    0.3 - 1.7 * p[0] + 0.9 * p[1]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn refinement_keeps_conformity_area_and_linears(
        n in 2usize..7,
        weights in prop::collection::vec(0.0f64..1.0, 1..200),
        fraction in 0.05f64..1.0,
        rounds in 1usize..4,
    ) {
        let mut mesh = build_square_mesh(n, &DirichletSpec::bottom()).unwrap();
        let mut field: Vec<f64> = mesh.vertices().iter().map(|&p| linear(p)).collect();
        for r in 0..rounds {
            let ind: Vec<f64> = (0..mesh.num_triangles()).map(|t| weights[(t + r) % weights.len()]).collect();
            let (fine, transfer) = refine_by_indicator(&mesh, &ind, fraction).unwrap();
            prop_assert!(fine.validate().is_ok());
            prop_assert!(fine.num_triangles() >= mesh.num_triangles());
            prop_assert!(fine.max_diameter() <= mesh.max_diameter() + 1e-14);
            prop_assert!((fine.total_area() - 4.0).abs() <= 1e-12);
            field = transfer.apply_scalar(&field);
            for (p, f) in fine.vertices().iter().zip(&field) {
                prop_assert!((linear(*p) - f).abs() <= 1e-12);
            }
            mesh = fine;
        }
    }

    #[test]
    fn carved_disks_keep_mesh_valid(cx in -0.4f64..0.4, cy in -0.4f64..0.4, r in 0.15f64..0.4) {
        let mesh = build_square_mesh(24, &DirichletSpec::bottom()).unwrap();
        let shape = CavityShape::Disk { center: [cx, cy], radius: r };
        let carved = carve_cavity(&mesh, &shape, 0.05).unwrap();
        prop_assert!(carved.validate().is_ok());
        prop_assert_eq!(carved.cavity_wall_loops().len(), 1);
        let removed = 4.0 - carved.total_area();
        let exact = std::f64::consts::PI * r * r;
        prop_assert!((removed - exact).abs() <= 0.25 * exact);
    }

    #[test]
    fn boundary_trace_of_linear_field_is_exact(src in 2usize..20, dst in 2usize..20) {
        let a = build_square_mesh(src, &DirichletSpec::bottom()).unwrap();
        let b = build_square_mesh(dst, &DirichletSpec::bottom()).unwrap();
        let f = |p: [f64; 2]| [linear(p), 2.0 * p[0] - p[1]];
        let field: Vec<[f64; 2]> = a.vertices().iter().map(|&p| f(p)).collect();
        let out = interpolate_boundary_trace(&a, &field, &b).unwrap();
        let neumann = b.neumann_vertices();
        for (i, p) in b.vertices().iter().enumerate() {
            if neumann[i] {
                let e = f(*p);
                prop_assert!((out[i][0] - e[0]).abs() <= 1e-12 && (out[i][1] - e[1]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn quadratic_trace_error_is_second_order() {
    let q = |p: [f64; 2]| [p[0] * p[0], p[1] * p[1] - p[0] * p[1]];
    let coarse = build_square_mesh(7, &DirichletSpec::bottom()).unwrap();
    let nv = coarse.neumann_vertices();
    for n in [10usize, 20, 40] {
        let fine = build_square_mesh(n, &DirichletSpec::bottom()).unwrap();
        let field: Vec<[f64; 2]> = fine.vertices().iter().map(|&p| q(p)).collect();
        let out = interpolate_boundary_trace(&fine, &field, &coarse).unwrap();
        let err = coarse
            .vertices()
            .iter()
            .enumerate()
            .filter(|(i, _)| nv[*i])
            .map(|(i, p)| {
                let e = q(*p);
                (out[i][0] - e[0]).abs().max((out[i][1] - e[1]).abs())
            })
            .fold(0.0, f64::max);
        // Linear interpolation error along a side: h²/8 · max|u''| with |u''| ≤ 2.
        let h = 2.0 / n as f64;
        assert!(err <= h * h / 4.0 + 1e-14, "n {n} err {err}");
    }
}
