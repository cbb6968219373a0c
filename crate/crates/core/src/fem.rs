//! P1 finite elements: vector elasticity with the ersatz-material
//! coefficient, scalar mass/stiffness, boundary loads and constrained solves.
//!
//! Vector unknowns are interleaved: the two displacement components of
//! vertex `i` live at dofs `2i` and `2i + 1`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result, SolveError};
use crate::mesh::{Point, TriMesh};
use crate::sparse::{CsrMatrix, SolverKind, SpdSolver};

/// Lamé pair of the background material and the ersatz contrast `δ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticityParams {
    pub mu: f64,
    pub lambda: f64,
    pub delta: f64,
}

impl ElasticityParams {
    pub fn new(mu: f64, lambda: f64, delta: f64) -> Result<Self> {
        let p = Self { mu, lambda, delta };
        p.validate()?;
        Ok(p)
    }

    /// Strong convexity in 2D needs `μ > 0` and `λ + μ > 0`. `δ = 1` is
    /// accepted as the no-contrast limit.
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::InvalidConfig("shear modulus mu must be positive".into()));
        }
        if !(self.lambda + self.mu > 0.0) {
            return Err(Error::InvalidConfig("lambda + mu must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidConfig("ersatz contrast delta must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }

    /// Scalar factor of `C_δ(v) = (1 + (δ - 1) v) C_0`.
    pub fn ersatz_factor(&self, v: f64) -> f64 {
        1.0 + (self.delta - 1.0) * v
    }

    /// `C_0 E : F` for symmetric strains in Voigt form `[xx, yy, xy]`.
    pub fn c0_contract(&self, e: [f64; 3], f: [f64; 3]) -> f64 {
        2.0 * self.mu * (e[0] * f[0] + e[1] * f[1] + 2.0 * e[2] * f[2])
            + self.lambda * (e[0] + e[1]) * (f[0] + f[1])
    }
}

pub type Tensor2 = [[f64; 2]; 2];

/// Stress `C_δ(v) E` for a symmetric strain `E`.
pub fn elasticity_tensor_apply(params: &ElasticityParams, v: f64, strain: Tensor2) -> Tensor2 {
    let s = params.ersatz_factor(v);
    let tr = strain[0][0] + strain[1][1];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = s * 2.0 * params.mu * strain[i][j];
        }
        out[i][i] += s * params.lambda * tr;
    }
    out
}

/// Nodal displacement (or adjoint) field.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DisplacementField(pub Vec<[f64; 2]>);

impl DisplacementField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![[0.0; 2]; n])
    }

    pub fn from_flat(x: &[f64]) -> Self {
        Self(x.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|u| [u[0], u[1]]).collect()
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Element strain of a nodal vector field in Voigt form `[xx, yy, xy]`.
pub fn element_strain(mesh: &TriMesh, t: usize, u: &[[f64; 2]]) -> [f64; 3] {
    let g = mesh.hat_gradients(t);
    let tri = mesh.triangles()[t];
    let mut e = [0.0; 3];
    for k in 0..3 {
        let uk = u[tri[k]];
        e[0] += g[k][0] * uk[0];
        e[1] += g[k][1] * uk[1];
        e[2] += 0.5 * (g[k][1] * uk[0] + g[k][0] * uk[1]);
    }
    e
}

/// Unit-coefficient element stiffness `|T| B^T D B` (row-major 6x6).
fn element_stiffness(mesh: &TriMesh, t: usize, params: &ElasticityParams) -> [f64; 36] {
    let g = mesh.hat_gradients(t);
    let area = mesh.area(t);
    let mut b = [[0.0; 6]; 3];
    for k in 0..3 {
        b[0][2 * k] = g[k][0];
        b[1][2 * k + 1] = g[k][1];
        b[2][2 * k] = g[k][1];
        b[2][2 * k + 1] = g[k][0];
    }
    let (l, m) = (params.lambda, params.mu);
    let d = [[l + 2.0 * m, l, 0.0], [l, l + 2.0 * m, 0.0], [0.0, 0.0, m]];
    let mut db = [[0.0; 6]; 3];
    for r in 0..3 {
        for c in 0..6 {
            db[r][c] = (0..3).map(|k| d[r][k] * b[k][c]).sum();
        }
    }
    let mut k = [0.0; 36];
    for i in 0..6 {
        for j in 0..6 {
            k[i * 6 + j] = area * (0..3).map(|r| b[r][i] * db[r][j]).sum::<f64>();
        }
    }
    k
}

/// Precomputed element matrices and scatter positions for fast repeated
/// assembly of `Σ_T c_T K0_T` on a fixed mesh.
#[derive(Clone, Debug)]
pub struct ElasticAssembler {
    pattern: CsrMatrix,
    element: Vec<[f64; 36]>,
    positions: Vec<[usize; 36]>,
}

impl ElasticAssembler {
    pub fn new(mesh: &TriMesh, params: &ElasticityParams) -> Self {
        let n = 2 * mesh.num_vertices();
        let mut trip = Vec::with_capacity(36 * mesh.num_triangles());
        for tri in mesh.triangles() {
            let dofs = element_dofs(tri);
            for &r in &dofs {
                for &c in &dofs {
                    trip.push((r, c, 0.0));
                }
            }
        }
        let pattern = CsrMatrix::from_triplets(n, &mut trip);
        let mut element = Vec::with_capacity(mesh.num_triangles());
        let mut positions = Vec::with_capacity(mesh.num_triangles());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            element.push(element_stiffness(mesh, t, params));
            let dofs = element_dofs(tri);
            let mut pos = [0usize; 36];
            for i in 0..6 {
                for j in 0..6 {
                    pos[i * 6 + j] = pattern.position(dofs[i], dofs[j]).expect("pattern entry");
                }
            }
            positions.push(pos);
        }
        Self {
            pattern,
            element,
            positions,
        }
    }

    /// `Σ_T coeff[T] K0_T`; element order fixes the summation order.
    pub fn assemble(&self, coeff: &[f64]) -> CsrMatrix {
        assert_eq!(coeff.len(), self.element.len());
        let mut m = self.pattern.clone();
        let vals = m.values_mut();
        for ((ke, pos), &c) in self.element.iter().zip(&self.positions).zip(coeff) {
            for k in 0..36 {
                vals[pos[k]] += c * ke[k];
            }
        }
        m
    }

    pub fn element_matrix(&self, t: usize) -> &[f64; 36] {
        &self.element[t]
    }
}

fn element_dofs(tri: &[usize; 3]) -> [usize; 6] {
    [
        2 * tri[0],
        2 * tri[0] + 1,
        2 * tri[1],
        2 * tri[1] + 1,
        2 * tri[2],
        2 * tri[2] + 1,
    ]
}

/// Centroid value of a P1 field on every triangle.
pub fn centroid_values(mesh: &TriMesh, v: &[f64]) -> Vec<f64> {
    mesh.triangles()
        .iter()
        .map(|t| (v[t[0]] + v[t[1]] + v[t[2]]) / 3.0)
        .collect()
}

/// Per-triangle ersatz coefficients `1 + (δ - 1) v̄_T`.
pub fn ersatz_coefficients(mesh: &TriMesh, v: &[f64], params: &ElasticityParams) -> Vec<f64> {
    centroid_values(mesh, v)
        .into_iter()
        .map(|vb| params.ersatz_factor(vb))
        .collect()
}

/// P1 elasticity stiffness with the phase field entering through its
/// centroid value on each triangle.
pub fn assemble_elastic_stiffness(mesh: &TriMesh, v: &[f64], params: &ElasticityParams) -> CsrMatrix {
    ElasticAssembler::new(mesh, params).assemble(&ersatz_coefficients(mesh, v, params))
}

/// Consistent load of the P1 interpolant of `g` on the Neumann edges.
pub fn assemble_traction_load(mesh: &TriMesh, g: &dyn Fn(Point) -> [f64; 2]) -> Vec<f64> {
    let nodal: Vec<[f64; 2]> = mesh.vertices().iter().map(|&p| g(p)).collect();
    assemble_traction_load_nodal(mesh, &nodal)
}

/// Same as [`assemble_traction_load`] with the traction given by its nodal
/// values.
pub fn assemble_traction_load_nodal(mesh: &TriMesh, g: &[[f64; 2]]) -> Vec<f64> {
    let mut f = vec![0.0; 2 * mesh.num_vertices()];
    for e in mesh.neumann_edges() {
        let [a, b] = e.vertices;
        let len = mesh.edge_length(e);
        for c in 0..2 {
            f[2 * a + c] += len * (g[a][c] / 3.0 + g[b][c] / 6.0);
            f[2 * b + c] += len * (g[a][c] / 6.0 + g[b][c] / 3.0);
        }
    }
    f
}

/// Load of a body force, integrated with the three-edge-midpoint rule.
pub fn assemble_body_force(mesh: &TriMesh, f: &dyn Fn(Point) -> [f64; 2]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.corners(t);
        let w = mesh.area(t) / 3.0;
        for k in 0..3 {
            let m = crate::mesh::midpoint(p[(k + 1) % 3], p[(k + 2) % 3]);
            let fm = f(m);
            // Hat functions at the midpoint opposite vertex k: 0 at k, 1/2 elsewhere.
            for (j, &vj) in tri.iter().enumerate() {
                let phi = if j == k { 0.0 } else { 0.5 };
                out[2 * vj] += w * phi * fm[0];
                out[2 * vj + 1] += w * phi * fm[1];
            }
        }
    }
    out
}

/// Consistent P1 mass and Laplace stiffness matrices on a shared pattern.
pub fn assemble_scalar_mass_stiffness(mesh: &TriMesh) -> (CsrMatrix, CsrMatrix) {
    let n = mesh.num_vertices();
    let mut mt = Vec::with_capacity(9 * mesh.num_triangles());
    let mut kt = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.area(t);
        let g = mesh.hat_gradients(t);
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                mt.push((tri[i], tri[j], m));
                kt.push((tri[i], tri[j], area * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
            }
        }
    }
    (
        CsrMatrix::from_triplets(n, &mut mt),
        CsrMatrix::from_triplets(n, &mut kt),
    )
}

pub fn assemble_scalar_mass(mesh: &TriMesh) -> CsrMatrix {
    assemble_scalar_mass_stiffness(mesh).0
}

pub fn assemble_scalar_stiffness(mesh: &TriMesh) -> CsrMatrix {
    assemble_scalar_mass_stiffness(mesh).1
}

/// One-dimensional consistent mass matrix of the Neumann edges (scalar,
/// one row per vertex). Rows of vertices off Σ_N are empty.
pub fn assemble_neumann_mass(mesh: &TriMesh) -> CsrMatrix {
    let mut t = Vec::new();
    for e in mesh.neumann_edges() {
        let [a, b] = e.vertices;
        let len = mesh.edge_length(e);
        t.push((a, a, len / 3.0));
        t.push((b, b, len / 3.0));
        t.push((a, b, len / 6.0));
        t.push((b, a, len / 6.0));
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), &mut t)
}

/// Applies a scalar boundary mass matrix to each component of a vector
/// field, returning a flat dof vector.
pub fn apply_componentwise(m: &CsrMatrix, u: &[[f64; 2]]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * u.len()];
    for r in 0..m.dim() {
        let (cols, vals) = m.row(r);
        let (mut s0, mut s1) = (0.0, 0.0);
        for (&c, &v) in cols.iter().zip(vals) {
            s0 += v * u[c][0];
            s1 += v * u[c][1];
        }
        out[2 * r] = s0;
        out[2 * r + 1] = s1;
    }
    out
}

/// A linear system with some dofs prescribed.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// `(dof, value)` pairs; other dofs are unknown.
    pub constrained: Vec<(usize, f64)>,
}

/// Solves a [`SparseSystem`] by eliminating the constrained rows and
/// columns; prescribed dofs take their values exactly.
pub fn solve_spd(system: &SparseSystem, kind: SolverKind) -> Result<Vec<f64>, SolveError> {
    let n = system.matrix.dim();
    let mut fixed = vec![false; n];
    let mut x = vec![0.0; n];
    for &(d, v) in &system.constrained {
        fixed[d] = true;
        x[d] = v;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let reduced = system.matrix.principal_submatrix(&free);
    let rhs: Vec<f64> = free
        .iter()
        .map(|&r| {
            let (cols, vals) = system.matrix.row(r);
            let coupling: f64 = cols
                .iter()
                .zip(vals)
                .filter(|(c, _)| fixed[**c])
                .map(|(&c, &v)| v * x[c])
                .sum();
            system.rhs[r] - coupling
        })
        .collect();
    let y = SpdSolver::new(reduced, kind)?.solve(&rhs)?;
    for (&i, yi) in free.iter().zip(y) {
        x[i] = yi;
    }
    Ok(x)
}

/// Stiffness factorization restricted to the dofs off Σ_D, reused for every
/// homogeneous-Dirichlet solve (forward and adjoint) with the same matrix.
#[derive(Clone, Debug)]
pub struct ElasticOperator {
    full: CsrMatrix,
    free: Vec<usize>,
    solver: SpdSolver,
}

impl ElasticOperator {
    pub fn new(full: CsrMatrix, dirichlet_vertices: &[bool], kind: SolverKind) -> Result<Self, SolveError> {
        let free: Vec<usize> = (0..full.dim()).filter(|&d| !dirichlet_vertices[d / 2]).collect();
        let solver = SpdSolver::new(full.principal_submatrix(&free), kind)?;
        Ok(Self { full, free, solver })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.full
    }

    /// Solution vanishing on Σ_D for the full-length load `rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<DisplacementField, SolveError> {
        let b: Vec<f64> = self.free.iter().map(|&d| rhs[d]).collect();
        let y = self.solver.solve(&b)?;
        let mut x = vec![0.0; self.full.dim()];
        for (&d, yi) in self.free.iter().zip(y) {
            x[d] = yi;
        }
        Ok(DisplacementField::from_flat(&x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_square_mesh, DirichletSpec, Side};

    fn params() -> ElasticityParams {
        ElasticityParams::new(0.2, 1.0, 1e-2).unwrap()
    }

    #[test]
    fn tensor_limits() {
        let p = ElasticityParams::new(0.7, 0.3, 0.05).unwrap();
        let e = [[0.1, -0.2], [-0.2, 0.4]];
        let s0 = elasticity_tensor_apply(&p, 0.0, e);
        let expect = [
            [2.0 * 0.7 * 0.1 + 0.3 * 0.5, 2.0 * 0.7 * -0.2],
            [2.0 * 0.7 * -0.2, 2.0 * 0.7 * 0.4 + 0.3 * 0.5],
        ];
        let s1 = elasticity_tensor_apply(&p, 1.0, e);
        for i in 0..2 {
            for j in 0..2 {
                assert!((s0[i][j] - expect[i][j]).abs() < 1e-15);
                assert!((s1[i][j] - 0.05 * s0[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn auxetic_poisson_ratio() {
        let p = ElasticityParams::new(2.0, -0.2, 1e-2).unwrap();
        assert!((p.poisson_ratio() + 1.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_params() {
        assert!(ElasticityParams::new(0.0, 1.0, 0.1).is_err());
        assert!(ElasticityParams::new(1.0, -1.0, 0.1).is_err());
        assert!(ElasticityParams::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn rigid_motions_in_kernel() {
        let mesh = build_square_mesh(6, &DirichletSpec::bottom()).unwrap();
        let v: Vec<f64> = (0..mesh.num_vertices()).map(|i| (i % 5) as f64 / 4.0).collect();
        let k = assemble_elastic_stiffness(&mesh, &v, &params());
        let trans: Vec<f64> = mesh.vertices().iter().flat_map(|_| [1.0, 1.0]).collect();
        let rot: Vec<f64> = mesh.vertices().iter().flat_map(|p| [-p[1], p[0]]).collect();
        for u in [trans, rot] {
            let r = k.mul_vec(&u);
            assert!(r.iter().all(|x| x.abs() < 1e-10));
        }
        assert!(k.symmetry_error() < 1e-12);
    }

    #[test]
    fn stiffness_scales_with_delta() {
        let mesh = build_square_mesh(4, &DirichletSpec::bottom()).unwrap();
        let p = params();
        let n = mesh.num_vertices();
        let k0 = assemble_elastic_stiffness(&mesh, &vec![0.0; n], &p);
        let k1 = assemble_elastic_stiffness(&mesh, &vec![1.0; n], &p);
        for (a, b) in k0.values().iter().zip(k1.values()) {
            assert!((b - p.delta * a).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn traction_resultants() {
        let mesh = build_square_mesh(5, &DirichletSpec::bottom()).unwrap();
        let zero = assemble_traction_load(&mesh, &|_| [0.0, 0.0]);
        assert!(zero.iter().all(|&x| x == 0.0));
        // Constant traction (2, 0) on the right side, which has length 2.
        let only_right = build_square_mesh(5, &DirichletSpec::sides(&[Side::Bottom, Side::Left, Side::Top])).unwrap();
        let f = assemble_traction_load(&only_right, &|_| [2.0, 0.0]);
        let fx: f64 = f.iter().step_by(2).sum();
        assert!((fx - 4.0).abs() < 1e-12);
        // Linear traction on Σ_N = left, top, right.
        let g = |p: Point| [0.0, 0.1 - 0.3 * p[1]];
        let f = assemble_traction_load(&mesh, &g);
        let fy: f64 = f.iter().skip(1).step_by(2).sum();
        // ∫ over left and right sides of (0.1 - 0.3y) dy is 0.2 each; top is -0.2*2.
        assert!((fy - (0.2 + 0.2 - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn scalar_matrices() {
        let mesh = build_square_mesh(7, &DirichletSpec::bottom()).unwrap();
        let (m, k) = assemble_scalar_mass_stiffness(&mesh);
        let total: f64 = m.values().iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
        let ones = vec![1.0; mesh.num_vertices()];
        assert!(k.mul_vec(&ones).iter().all(|x| x.abs() < 1e-12));
        let x: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
        assert!((k.bilinear(&x, &x) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn patch_test_linear_displacement() {
        let mesh = build_square_mesh(6, &DirichletSpec::bottom()).unwrap();
        let exact = |p: Point| [0.1 + 0.3 * p[0] - 0.2 * p[1], -0.05 + 0.4 * p[0] + 0.25 * p[1]];
        let p = ElasticityParams::new(1.0, 1.0, 1.0).unwrap();
        let k = assemble_elastic_stiffness(&mesh, &vec![0.0; mesh.num_vertices()], &p);
        let dist = mesh.distance_to_outer_boundary();
        let mut constrained = Vec::new();
        for (i, &d) in dist.iter().enumerate() {
            if d < 1e-12 {
                let u = exact(mesh.vertices()[i]);
                constrained.push((2 * i, u[0]));
                constrained.push((2 * i + 1, u[1]));
            }
        }
        let sys = SparseSystem {
            matrix: k,
            rhs: vec![0.0; 2 * mesh.num_vertices()],
            constrained,
        };
        let x = solve_spd(&sys, SolverKind::Direct).unwrap();
        for (i, &p) in mesh.vertices().iter().enumerate() {
            let u = exact(p);
            assert!((x[2 * i] - u[0]).abs() < 1e-10);
            assert!((x[2 * i + 1] - u[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn all_neumann_elasticity_is_singular() {
        let mesh = build_square_mesh(4, &DirichletSpec::bottom()).unwrap();
        let k = assemble_elastic_stiffness(&mesh, &vec![0.0; mesh.num_vertices()], &params());
        let sys = SparseSystem {
            matrix: k,
            rhs: vec![1.0; 2 * mesh.num_vertices()],
            constrained: Vec::new(),
        };
        assert!(matches!(
            solve_spd(&sys, SolverKind::Direct),
            Err(SolveError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn neumann_mass_integrates_constants() {
        let mesh = build_square_mesh(4, &DirichletSpec::bottom()).unwrap();
        let mb = assemble_neumann_mass(&mesh);
        let ones = vec![1.0; mesh.num_vertices()];
        // Σ_N = left + top + right has length 6.
        assert!((mb.bilinear(&ones, &ones) - 6.0).abs() < 1e-12);
    }
}
