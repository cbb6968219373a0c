//! Manufactured solution `u = (x², xy)` with `v ≡ 0`: body force and
//! tractions are chosen so that `u` solves the elasticity system exactly.

use cavphase_core::fem::{
    assemble_body_force, assemble_elastic_stiffness, solve_spd, ElasticityParams, SparseSystem,
};
use cavphase_core::mesh::{build_square_mesh, DirichletSpec, Point, TriMesh};
use cavphase_core::sparse::SolverKind;
use cavphase_core::SolveError;

const MU: f64 = 0.2;
const LAMBDA: f64 = 1.0;

// u = (x², xy): ε = [[2x, y/2], [y/2, x]], tr ε = 3x.
fn exact(p: Point) -> [f64; 2] {
    [p[0] * p[0], p[0] * p[1]]
}

fn exact_grad(p: Point) -> [[f64; 2]; 2] {
    [[2.0 * p[0], 0.0], [p[1], p[0]]]
}

fn stress(p: Point) -> [[f64; 2]; 2] {
    let (x, y) = (p[0], p[1]);
    let tr = 3.0 * x;
    [
        [2.0 * MU * 2.0 * x + LAMBDA * tr, MU * y],
        [MU * y, 2.0 * MU * x + LAMBDA * tr],
    ]
}

fn body_force(_: Point) -> [f64; 2] {
    [-(5.0 * MU + 3.0 * LAMBDA), 0.0]
}

/// Degree-4 Dunavant rule (6 points) in barycentric coordinates.
pub fn quadrature() -> Vec<([f64; 3], f64)> {
    let (a1, w1) = (0.445948490915965, 0.223381589678011);
    let (a2, w2) = (0.091576213509771, 0.109951743655322);
    let mut q = Vec::new();
    for (a, w) in [(a1, w1), (a2, w2)] {
        let b = 1.0 - 2.0 * a;
        q.push(([b, a, a], w));
        q.push(([a, b, a], w));
        q.push(([a, a, b], w));
    }
    q
}

/// Traction load σn on the Neumann edges, exact for linear σ (Simpson).
fn neumann_load(mesh: &TriMesh) -> Vec<f64> {
    let mut f = vec![0.0; 2 * mesh.num_vertices()];
    for e in mesh.neumann_edges() {
        let [a, b] = e.vertices;
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        // Outward normal of the square side the edge lies on.
        let n = if mid[0] > 1.0 - 1e-12 {
            [1.0, 0.0]
        } else if mid[0] < -1.0 + 1e-12 {
            [-1.0, 0.0]
        } else if mid[1] > 1.0 - 1e-12 {
            [0.0, 1.0]
        } else {
            [0.0, -1.0]
        };
        let len = mesh.edge_length(e);
        let t = |p: Point| {
            let s = stress(p);
            [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
        };
        let (ta, tm, tb) = (t(pa), t(mid), t(pb));
        for c in 0..2 {
            f[2 * a + c] += len / 6.0 * (ta[c] + 2.0 * tm[c]);
            f[2 * b + c] += len / 6.0 * (tb[c] + 2.0 * tm[c]);
        }
    }
    f
}

/// Discrete solution on the `n × n` mesh with Dirichlet data on the bottom side.
pub fn solve(n: usize) -> Result<(TriMesh, Vec<[f64; 2]>), SolveError> {
    let mesh = build_square_mesh(n, &DirichletSpec::bottom()).expect("valid resolution");
    let params = ElasticityParams::new(MU, LAMBDA, 1e-2).expect("valid parameters");
    let k = assemble_elastic_stiffness(&mesh, &vec![0.0; mesh.num_vertices()], &params);
    let mut rhs = assemble_body_force(&mesh, &body_force);
    for (r, b) in rhs.iter_mut().zip(neumann_load(&mesh)) {
        *r += b;
    }
    let mut constrained = Vec::new();
    for (i, &d) in mesh.dirichlet_vertices().iter().enumerate() {
        if d {
            let u = exact(mesh.vertices()[i]);
            constrained.push((2 * i, u[0]));
            constrained.push((2 * i + 1, u[1]));
        }
    }
    let x = solve_spd(
        &SparseSystem {
            matrix: k,
            rhs,
            constrained,
        },
        SolverKind::Direct,
    )?;
    let u = x.chunks(2).map(|c| [c[0], c[1]]).collect();
    Ok((mesh, u))
}

/// `(L², H¹-seminorm)` errors, integrated exactly for the quadratic solution.
pub fn errors(mesh: &TriMesh, u: &[[f64; 2]]) -> (f64, f64) {
    let q = quadrature();
    let (mut l2, mut h1) = (0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[t];
        let p = mesh.corners(t);
        let g = mesh.hat_gradients(t);
        let mut grad_h = [[0.0; 2]; 2];
        for k in 0..3 {
            for c in 0..2 {
                for d in 0..2 {
                    grad_h[c][d] += u[tri[k]][c] * g[k][d];
                }
            }
        }
        let area = mesh.area(t);
        for (lam, w) in &q {
            let x = [
                lam[0] * p[0][0] + lam[1] * p[1][0] + lam[2] * p[2][0],
                lam[0] * p[0][1] + lam[1] * p[1][1] + lam[2] * p[2][1],
            ];
            let ue = exact(x);
            let ge = exact_grad(x);
            for c in 0..2 {
                let uh: f64 = (0..3).map(|k| lam[k] * u[tri[k]][c]).sum();
                l2 += w * area * (uh - ue[c]).powi(2);
                for d in 0..2 {
                    h1 += w * area * (grad_h[c][d] - ge[c][d]).powi(2);
                }
            }
        }
    }
    (l2.sqrt(), h1.sqrt())
}

/// Errors on each resolution and the observed orders between consecutive
/// levels.
pub struct Convergence {
    pub levels: Vec<usize>,
    pub errors: Vec<(f64, f64)>,
    pub orders: Vec<(f64, f64)>,
}

pub fn convergence(levels: &[usize]) -> Result<Convergence, SolveError> {
    let mut errs = Vec::with_capacity(levels.len());
    for &n in levels {
        let (mesh, u) = solve(n)?;
        errs.push(errors(&mesh, &u));
    }
    let orders = errs
        .windows(2)
        .zip(levels.windows(2))
        .map(|(e, l)| {
            let r = (l[1] as f64 / l[0] as f64).ln();
            ((e[0].0 / e[1].0).ln() / r, (e[0].1 / e[1].1).ln() / r)
        })
        .collect();
    Ok(Convergence {
        levels: levels.to_vec(),
        errors: errs,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_integrates_quartics() {
        // ∫ x⁴ over the reference triangle (0,0),(1,0),(0,1) is 1/30.
        let s: f64 = quadrature().iter().map(|(l, w)| w * 0.5 * l[1].powi(4)).sum();
        assert!((s - 1.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn interpolant_errors_scale_with_mesh_size() {
        let interp = |n| {
            let mesh = build_square_mesh(n, &DirichletSpec::bottom()).unwrap();
            let u: Vec<[f64; 2]> = mesh.vertices().iter().map(|&p| exact(p)).collect();
            errors(&mesh, &u)
        };
        let (a, b) = (interp(8), interp(16));
        assert!((a.0 / b.0 - 4.0).abs() < 0.2, "{a:?} {b:?}");
        assert!((a.1 / b.1 - 2.0).abs() < 0.1, "{a:?} {b:?}");
    }
}
