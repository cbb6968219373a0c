//! Forward, adjoint and true-cavity elasticity solves, and the boundary
//! misfit.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, MeshError, Result, SolveError};
use crate::fem::{
    apply_componentwise, assemble_neumann_mass, assemble_traction_load, ersatz_coefficients,
    DisplacementField, ElasticAssembler, ElasticOperator, ElasticityParams,
};
use crate::mesh::{BoundaryTrace, Point, TriMesh};
use crate::sparse::{CsrMatrix, SolverKind};

/// Neumann traction `g(x, y)`.
pub type Traction = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

pub fn traction(f: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Traction {
    Arc::new(f)
}

/// One boundary experiment: a traction on Σ_N and the measured boundary
/// displacement it produced.
#[derive(Clone)]
pub struct LoadCase {
    pub id: String,
    pub traction: Traction,
    /// Measured displacement per vertex of the working mesh. Only the values
    /// at Σ_N nodes are used.
    pub measurement: Vec<[f64; 2]>,
    /// Finer trace the measurement was sampled from, used to resample after
    /// mesh refinement.
    pub source: Option<BoundaryTrace>,
}

impl fmt::Debug for LoadCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LoadCase")
            .field("id", &self.id)
            .field("measurement_len", &self.measurement.len())
            .field("has_source", &self.source.is_some())
            .finish()
    }
}

impl LoadCase {
    /// Samples `trace` at the Σ_N nodes of `mesh` and keeps the trace for
    /// later resampling.
    pub fn from_trace(
        id: impl Into<String>,
        traction: Traction,
        trace: BoundaryTrace,
        mesh: &TriMesh,
    ) -> Result<Self, MeshError> {
        let measurement = trace.sample_on(mesh)?;
        Ok(Self {
            id: id.into(),
            traction,
            measurement,
            source: Some(trace),
        })
    }

    /// Moves the measurement from `old` to `new`, preferring the stored
    /// source trace over the working-mesh values.
    pub fn transfer(&self, old: &TriMesh, new: &TriMesh) -> Result<Self, MeshError> {
        let measurement = match &self.source {
            Some(trace) => trace.sample_on(new)?,
            None => BoundaryTrace::from_field(old, &self.measurement)?.sample_on(new)?,
        };
        Ok(Self {
            measurement,
            ..self.clone()
        })
    }

    pub fn check_finite(&self) -> bool {
        self.measurement.iter().all(|u| u[0].is_finite() && u[1].is_finite())
    }
}

/// `½ ‖a - b‖²_{L²(Σ_N)}` with exact edge quadrature of the P1 difference.
pub fn misfit(mesh: &TriMesh, a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for e in mesh.neumann_edges() {
        let [i, j] = e.vertices;
        let len = mesh.edge_length(e);
        for c in 0..2 {
            let di = a[i][c] - b[i][c];
            let dj = a[j][c] - b[j][c];
            s += len / 3.0 * (di * di + di * dj + dj * dj);
        }
    }
    0.5 * s
}

/// Computed trace and measurement of one load.
pub type TracePair<'a> = (&'a [[f64; 2]], &'a [[f64; 2]]);

/// Average of the per-load misfits.
pub fn misfit_multi(mesh: &TriMesh, pairs: &[TracePair<'_>]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|(a, b)| misfit(mesh, a, b)).sum::<f64>() / pairs.len() as f64
}

/// Mesh-bound data shared by every elasticity solve on one mesh.
#[derive(Clone, Debug)]
pub struct ForwardModel<'m> {
    mesh: &'m TriMesh,
    params: ElasticityParams,
    assembler: ElasticAssembler,
    neumann_mass: CsrMatrix,
    dirichlet: Vec<bool>,
    solver: SolverKind,
}

/// Forward and adjoint states of every load case at one phase field.
#[derive(Clone, Debug)]
pub struct StateEvaluation {
    /// Load-averaged misfit.
    pub misfit: f64,
    pub forward: Vec<DisplacementField>,
    pub adjoint: Vec<DisplacementField>,
}

impl<'m> ForwardModel<'m> {
    pub fn new(mesh: &'m TriMesh, params: ElasticityParams, solver: SolverKind) -> Self {
        Self {
            mesh,
            params,
            assembler: ElasticAssembler::new(mesh, &params),
            neumann_mass: assemble_neumann_mass(mesh),
            dirichlet: mesh.dirichlet_vertices(),
            solver,
        }
    }

    pub fn mesh(&self) -> &'m TriMesh {
        self.mesh
    }

    pub fn params(&self) -> &ElasticityParams {
        &self.params
    }

    pub fn dirichlet_vertices(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Factorized ersatz stiffness for the phase field `v`.
    pub fn operator(&self, v: &[f64]) -> Result<ElasticOperator, SolveError> {
        let k = self
            .assembler
            .assemble(&ersatz_coefficients(self.mesh, v, &self.params));
        ElasticOperator::new(k, &self.dirichlet, self.solver)
    }

    /// Stiffness of the pure background material on this mesh (no ersatz
    /// coefficient, cavity walls traction free).
    pub fn background_operator(&self) -> Result<ElasticOperator, SolveError> {
        let k = self.assembler.assemble(&vec![1.0; self.mesh.num_triangles()]);
        ElasticOperator::new(k, &self.dirichlet, self.solver)
    }

    pub fn load_vector(&self, g: &Traction) -> Vec<f64> {
        assemble_traction_load(self.mesh, &|p| g(p))
    }

    pub fn forward(&self, op: &ElasticOperator, g: &Traction) -> Result<DisplacementField, SolveError> {
        op.solve(&self.load_vector(g))
    }

    /// Adjoint state for the boundary residual `u - u_meas`.
    pub fn adjoint(
        &self,
        op: &ElasticOperator,
        u: &DisplacementField,
        measurement: &[[f64; 2]],
    ) -> Result<DisplacementField, SolveError> {
        let residual: Vec<[f64; 2]> = u
            .values()
            .iter()
            .zip(measurement)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
            .collect();
        op.solve(&apply_componentwise(&self.neumann_mass, &residual))
    }

    /// Forward solves of all loads and the averaged misfit (no adjoints).
    pub fn misfit_at(&self, v: &[f64], loads: &[LoadCase]) -> Result<f64> {
        if loads.is_empty() {
            return Err(Error::NoLoadCases);
        }
        let op = self.operator(v)?;
        let mut total = 0.0;
        for load in loads {
            let u = self.forward(&op, &load.traction)?;
            total += misfit(self.mesh, u.values(), &load.measurement);
        }
        Ok(total / loads.len() as f64)
    }

    /// One factorization, then forward and adjoint solves for every load.
    pub fn evaluate(&self, v: &[f64], loads: &[LoadCase]) -> Result<StateEvaluation> {
        if loads.is_empty() {
            return Err(Error::NoLoadCases);
        }
        let op = self.operator(v)?;
        let mut forward = Vec::with_capacity(loads.len());
        let mut adjoint = Vec::with_capacity(loads.len());
        let mut total = 0.0;
        for load in loads {
            let u = self.forward(&op, &load.traction)?;
            total += misfit(self.mesh, u.values(), &load.measurement);
            let p = self.adjoint(&op, &u, &load.measurement)?;
            forward.push(u);
            adjoint.push(p);
        }
        Ok(StateEvaluation {
            misfit: total / loads.len() as f64,
            forward,
            adjoint,
        })
    }
}

/// Displacement of the relaxed problem for phase field `v`.
pub fn solve_forward(
    mesh: &TriMesh,
    v: &[f64],
    params: &ElasticityParams,
    g: &Traction,
) -> Result<DisplacementField, SolveError> {
    let model = ForwardModel::new(mesh, *params, SolverKind::default());
    model.forward(&model.operator(v)?, g)
}

/// Displacement on a carved mesh with traction-free cavity walls.
pub fn solve_true_cavity(
    carved: &TriMesh,
    params: &ElasticityParams,
    g: &Traction,
) -> Result<DisplacementField, SolveError> {
    let model = ForwardModel::new(carved, *params, SolverKind::default());
    model.forward(&model.background_operator()?, g)
}

/// Adjoint state of the relaxed problem for the residual `u - measurement`.
pub fn solve_adjoint(
    mesh: &TriMesh,
    v: &[f64],
    params: &ElasticityParams,
    u: &DisplacementField,
    measurement: &[[f64; 2]],
) -> Result<DisplacementField, SolveError> {
    let model = ForwardModel::new(mesh, *params, SolverKind::default());
    model.adjoint(&model.operator(v)?, u, measurement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_square_mesh, carve_cavity, CavityShape, DirichletSpec};

    fn setup() -> (TriMesh, ElasticityParams) {
        (
            build_square_mesh(8, &DirichletSpec::bottom()).unwrap(),
            ElasticityParams::new(0.2, 1.0, 1e-2).unwrap(),
        )
    }

    fn g1() -> Traction {
        traction(|p| [0.0, 0.1 - 0.3 * p[1]])
    }

    fn g2() -> Traction {
        traction(|p| [-0.5 * p[0] * p[0], p[1] * p[1]])
    }

    #[test]
    fn zero_traction_gives_zero_state() {
        let (mesh, p) = setup();
        let v = vec![0.3; mesh.num_vertices()];
        let u = solve_forward(&mesh, &v, &p, &traction(|_| [0.0, 0.0])).unwrap();
        assert!(u.values().iter().all(|x| x[0] == 0.0 && x[1] == 0.0));
    }

    #[test]
    fn linear_in_traction() {
        let (mesh, p) = setup();
        let v: Vec<f64> = (0..mesh.num_vertices()).map(|i| (i % 3) as f64 / 3.0).collect();
        let u1 = solve_forward(&mesh, &v, &p, &g2()).unwrap();
        let u2 = solve_forward(&mesh, &v, &p, &traction(|q| {
            let g = [-0.5 * q[0] * q[0], q[1] * q[1]];
            [2.0 * g[0], 2.0 * g[1]]
        }))
        .unwrap();
        for (a, b) in u1.values().iter().zip(u2.values()) {
            for c in 0..2 {
                assert!((2.0 * a[c] - b[c]).abs() <= 1e-12 * (1.0 + b[c].abs()));
            }
        }
    }

    #[test]
    fn dirichlet_nodes_vanish() {
        let (mesh, p) = setup();
        let u = solve_forward(&mesh, &vec![0.0; mesh.num_vertices()], &p, &g1()).unwrap();
        for (i, &d) in mesh.dirichlet_vertices().iter().enumerate() {
            if d {
                assert!(u.values()[i][0].abs() <= 1e-12 && u.values()[i][1].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn true_cavity_without_cavity_matches_relaxed() {
        let (mesh, p) = setup();
        let a = solve_true_cavity(&mesh, &p, &g2()).unwrap();
        let b = solve_forward(&mesh, &vec![0.0; mesh.num_vertices()], &p, &g2()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x[0] - y[0]).abs() <= 1e-12 && (x[1] - y[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn cavity_changes_trace_and_walls_are_free() {
        let (_, p) = setup();
        let mesh = build_square_mesh(24, &DirichletSpec::bottom()).unwrap();
        let shape = CavityShape::Disk {
            center: [0.1, 0.2],
            radius: 0.35,
        };
        let carved = carve_cavity(&mesh, &shape, 0.1).unwrap();
        let uc = solve_true_cavity(&carved, &p, &g1()).unwrap();
        let full = solve_true_cavity(&mesh, &p, &g1()).unwrap();
        let sampled = crate::mesh::interpolate_boundary_trace(&mesh, full.values(), &carved).unwrap();
        assert!(misfit(&carved, uc.values(), &sampled) > 1e-8);

        // Residual K u - f vanishes at cavity-wall nodes.
        let model = ForwardModel::new(&carved, p, SolverKind::Direct);
        let op = model.background_operator().unwrap();
        let ku = op.matrix().mul_vec(&uc.to_flat());
        let f = model.load_vector(&g1());
        let walls = carved.cavity_wall_loops();
        for &vtx in walls.iter().flatten() {
            for c in 0..2 {
                assert!((ku[2 * vtx + c] - f[2 * vtx + c]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn work_equals_twice_energy() {
        let (mesh, p) = setup();
        let model = ForwardModel::new(&mesh, p, SolverKind::Direct);
        let op = model.operator(&vec![0.0; mesh.num_vertices()]).unwrap();
        let u = model.forward(&op, &g2()).unwrap().to_flat();
        let f = model.load_vector(&g2());
        let energy = 0.5 * op.matrix().bilinear(&u, &u);
        let work: f64 = 0.5 * u.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
        assert!((energy - work).abs() <= 1e-10 * work.abs());
    }

    #[test]
    fn adjoint_vanishes_for_exact_data() {
        let (mesh, p) = setup();
        let v = vec![0.0; mesh.num_vertices()];
        let u = solve_forward(&mesh, &v, &p, &g1()).unwrap();
        let pa = solve_adjoint(&mesh, &v, &p, &u, u.values()).unwrap();
        assert!(pa.values().iter().all(|x| x[0].abs() < 1e-15 && x[1].abs() < 1e-15));
    }

    #[test]
    fn misfit_examples() {
        let (mesh, _) = setup();
        let n = mesh.num_vertices();
        let a = vec![[0.0, 0.0]; n];
        assert_eq!(misfit(&mesh, &a, &a), 0.0);
        let b = vec![[1.0, 0.0]; n];
        // Σ_N has length 6.
        assert!((misfit(&mesh, &b, &a) - 3.0).abs() < 1e-12);
        let two = misfit_multi(&mesh, &[(&b, &a), (&a, &a)]);
        assert!((two - 1.5).abs() < 1e-12);
    }

    #[test]
    fn reciprocity() {
        let (mesh, p) = setup();
        let v: Vec<f64> = mesh.vertices().iter().map(|q| 0.5 * (1.0 + q[0] * q[1])).collect();
        let model = ForwardModel::new(&mesh, p, SolverKind::Direct);
        let op = model.operator(&v).unwrap();
        let (ga, gb) = (g1(), g2());
        let ua = model.forward(&op, &ga).unwrap().to_flat();
        let ub = model.forward(&op, &gb).unwrap().to_flat();
        let fa = model.load_vector(&ga);
        let fb = model.load_vector(&gb);
        let ab: f64 = fa.iter().zip(&ub).map(|(x, y)| x * y).sum();
        let ba: f64 = fb.iter().zip(&ua).map(|(x, y)| x * y).sum();
        assert!((ab - ba).abs() <= 1e-9 * ab.abs().max(ba.abs()));
    }

    #[test]
    fn transfer_prefers_source_trace() {
        let (mesh, p) = setup();
        let fine = build_square_mesh(32, &DirichletSpec::bottom()).unwrap();
        let u = solve_true_cavity(&fine, &p, &g2()).unwrap();
        let trace = BoundaryTrace::from_field(&fine, u.values()).unwrap();
        let lc = LoadCase::from_trace("g2", g2(), trace.clone(), &mesh).unwrap();
        let finer = build_square_mesh(16, &DirichletSpec::bottom()).unwrap();
        let moved = lc.transfer(&mesh, &finer).unwrap();
        assert_eq!(moved.measurement, trace.sample_on(&finer).unwrap());
    }
}
