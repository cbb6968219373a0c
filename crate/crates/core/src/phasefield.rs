//! Phase field, Ginzburg–Landau energy, objective gradient and the
//! per-step bilateral obstacle problem solved by a primal-dual active set
//! iteration.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{MeshError, PdasError};
use crate::fem::{element_strain, DisplacementField, ElasticityParams};
use crate::mesh::TriMesh;
use crate::sparse::{norm2, CsrMatrix, SolverKind, SpdSolver};

/// Nodal phase field on a mesh: 1 marks the cavity, 0 the material.
/// Vertices in the frozen band stay at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField {
    values: Vec<f64>,
    frozen: Vec<bool>,
}

/// Vertices within `width` of the outer boundary.
pub fn frozen_band(mesh: &TriMesh, width: f64) -> Vec<bool> {
    mesh.distance_to_outer_boundary()
        .into_iter()
        .map(|d| d <= width + 1e-12)
        .collect()
}

impl PhaseField {
    pub fn zeros(mesh: &TriMesh, band_width: f64) -> Self {
        Self {
            values: vec![0.0; mesh.num_vertices()],
            frozen: frozen_band(mesh, band_width),
        }
    }

    /// Clamps `values` into the admissible set.
    pub fn new(mut values: Vec<f64>, frozen: Vec<bool>) -> Result<Self, MeshError> {
        if values.len() != frozen.len() {
            return Err(MeshError::LengthMismatch {
                expected: frozen.len(),
                found: values.len(),
            });
        }
        project(&mut values, &frozen);
        Ok(Self { values, frozen })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn num_frozen(&self) -> usize {
        self.frozen.iter().filter(|&&f| f).count()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// True if `0 ≤ v ≤ 1` up to `tol` and `v = 0` exactly on the band.
    pub fn is_admissible(&self, tol: f64) -> bool {
        self.values
            .iter()
            .zip(&self.frozen)
            .all(|(&v, &f)| if f { v == 0.0 } else { v >= -tol && v <= 1.0 + tol })
    }
}

fn project(values: &mut [f64], frozen: &[bool]) {
    for (v, &f) in values.iter_mut().zip(frozen) {
        *v = if f { 0.0 } else { v.clamp(0.0, 1.0) };
    }
}

/// `α̃ ∫ ε|∇v|² + v(1-v)/ε`, exact for P1 fields.
pub fn ginzburg_landau_energy(mesh: &TriMesh, v: &[f64], alpha_tilde: f64, epsilon: f64) -> f64 {
    let mut grad = 0.0;
    let mut well = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.area(t);
        let g = mesh.hat_gradients(t);
        let mut gv = [0.0; 2];
        for k in 0..3 {
            gv[0] += v[tri[k]] * g[k][0];
            gv[1] += v[tri[k]] * g[k][1];
        }
        grad += area * (gv[0] * gv[0] + gv[1] * gv[1]);
        let mut s = 0.0;
        for k in 0..3 {
            let m = 0.5 * (v[tri[k]] + v[tri[(k + 1) % 3]]);
            s += m * (1.0 - m);
        }
        well += area / 3.0 * s;
    }
    alpha_tilde * (epsilon * grad + well / epsilon)
}

/// Nodal derivative of the Ginzburg–Landau energy,
/// `α̃ (2ε K v + M(1 - 2v)/ε)`.
pub fn ginzburg_landau_gradient(
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    v: &[f64],
    alpha_tilde: f64,
    epsilon: f64,
) -> Vec<f64> {
    let kv = stiffness.mul_vec(v);
    let w: Vec<f64> = v.iter().map(|x| 1.0 - 2.0 * x).collect();
    let mw = mass.mul_vec(&w);
    kv.iter()
        .zip(&mw)
        .map(|(a, b)| alpha_tilde * (2.0 * epsilon * a + b / epsilon))
        .collect()
}

/// Misfit part of the discrete derivative: for each vertex, the load average
/// of `∫ φ_i (1-δ) C0 ε(u):ε(p)`.
pub fn assemble_gradient_density(
    mesh: &TriMesh,
    params: &ElasticityParams,
    pairs: &[(&DisplacementField, &DisplacementField)],
) -> Vec<f64> {
    let mut g = vec![0.0; mesh.num_vertices()];
    if pairs.is_empty() {
        return g;
    }
    let scale = (1.0 - params.delta) / pairs.len() as f64;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let mut s = 0.0;
        for (u, p) in pairs {
            let eu = element_strain(mesh, t, u.values());
            let ep = element_strain(mesh, t, p.values());
            s += params.c0_contract(eu, ep);
        }
        let w = scale * s * mesh.area(t) / 3.0;
        for &i in tri {
            g[i] += w;
        }
    }
    g
}

/// Full discrete derivative of misfit + Ginzburg–Landau energy.
pub fn objective_derivative(
    gradient_density: &[f64],
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    v: &[f64],
    alpha_tilde: f64,
    epsilon: f64,
) -> Vec<f64> {
    let mut d = ginzburg_landau_gradient(mass, stiffness, v, alpha_tilde, epsilon);
    for (a, b) in d.iter_mut().zip(gradient_density) {
        *a += b;
    }
    d
}

/// `Σ_i d_i (ω_i - v_i)`: nonnegative for every admissible `ω` when `v`
/// satisfies the variational inequality with derivative `d`.
pub fn vi_slack(derivative: &[f64], v: &[f64], omega: &[f64]) -> f64 {
    derivative
        .iter()
        .zip(v.iter().zip(omega))
        .map(|(d, (a, w))| d * (w - a))
        .sum()
}

/// `∫ √(v(1-v)) dv` over [0,1] by tanh-sinh quadrature.
pub fn double_well_root_integral() -> f64 {
    tanh_sinh(&|x| libm::sqrt(x * (1.0 - x)), 0.0, 1.0)
}

/// Rescaling constant relating `α̃` to the perimeter weight: `(2∫√(v(1-v)))⁻¹`.
pub fn rescaling_constant() -> f64 {
    0.5 / double_well_root_integral()
}

fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let h = 1.0 / 64.0;
    let pi2 = core::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    let mut k: i64 = 0;
    loop {
        let t = k as f64 * h;
        let s = pi2 * libm::sinh(t);
        let c = libm::cosh(s);
        let w = pi2 * libm::cosh(t) / (c * c);
        let x = libm::tanh(s);
        // distance to the end points, computed without cancellation
        let d = 1.0 / (libm::exp(s) * c);
        if w < 1e-300 || d == 0.0 {
            break;
        }
        let lo = a + half * d;
        let hi = b - half * d;
        let term = if k == 0 {
            w * f(mid + half * x)
        } else {
            w * (f(lo) + f(hi))
        };
        sum += term;
        k += 1;
        if k > 10_000 {
            break;
        }
    }
    sum * h * half
}

/// Box-constrained quadratic program `min ½xᵀAx - bᵀx` over `[0,1]ⁿ`.
#[derive(Clone, Debug)]
pub struct ObstacleProblem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Full-mesh vertex index of each unknown.
    pub free: Vec<usize>,
    pub full_dim: usize,
}

impl ObstacleProblem {
    /// Problem where every unknown is free.
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Self {
        let n = matrix.dim();
        Self {
            matrix,
            rhs,
            free: (0..n).collect(),
            full_dim: n,
        }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// `Ax - b`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.matrix.mul_vec(x);
        for (ri, bi) in r.iter_mut().zip(&self.rhs) {
            *ri -= bi;
        }
        r
    }

    /// Natural residual `max |x - P(x - (Ax - b))|`, zero exactly at the
    /// minimizer.
    pub fn kkt_residual(&self, x: &[f64]) -> f64 {
        self.residual(x)
            .iter()
            .zip(x)
            .map(|(r, xi)| (xi - (xi - r).clamp(0.0, 1.0)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest violation of `λ⁻ x = 0` and `λ⁺ (1 - x) = 0`.
    pub fn complementarity_residual(&self, x: &[f64]) -> f64 {
        self.residual(x)
            .iter()
            .zip(x)
            .map(|(&r, &xi)| {
                let lower = r.max(0.0) * xi;
                let upper = (-r).max(0.0) * (1.0 - xi);
                lower.abs().max(upper.abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_dim];
        for (&i, &xi) in self.free.iter().zip(x) {
            full[i] = xi;
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }
}

/// `A = M/τ + 2α̃ε K` on the vertices outside the frozen band.
pub fn step_matrix(
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    free: &[usize],
    alpha_tilde: f64,
    epsilon: f64,
    tau: f64,
) -> CsrMatrix {
    mass.linear_combination(1.0 / tau, stiffness, 2.0 * alpha_tilde * epsilon)
        .principal_submatrix(free)
}

/// `b = M vⁿ/τ - G - (α̃/ε) M(1 - 2vⁿ)` on the free vertices.
pub fn step_rhs(
    mass: &CsrMatrix,
    v_n: &[f64],
    gradient_density: &[f64],
    free: &[usize],
    alpha_tilde: f64,
    epsilon: f64,
    tau: f64,
) -> Vec<f64> {
    let w: Vec<f64> = v_n
        .iter()
        .map(|x| x / tau - alpha_tilde / epsilon * (1.0 - 2.0 * x))
        .collect();
    let mw = mass.mul_vec(&w);
    free.iter().map(|&i| mw[i] - gradient_density[i]).collect()
}

/// Time-step obstacle problem of the semi-implicit gradient flow.
pub fn build_step_problem(
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    v_n: &PhaseField,
    gradient_density: &[f64],
    alpha_tilde: f64,
    epsilon: f64,
    tau: f64,
) -> ObstacleProblem {
    let free = free_indices(v_n.frozen());
    ObstacleProblem {
        matrix: step_matrix(mass, stiffness, &free, alpha_tilde, epsilon, tau),
        rhs: step_rhs(mass, v_n.values(), gradient_density, &free, alpha_tilde, epsilon, tau),
        full_dim: v_n.len(),
        free,
    }
}

fn free_indices(frozen: &[bool]) -> Vec<usize> {
    (0..frozen.len()).filter(|&i| !frozen[i]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activity {
    Inactive,
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdasOptions {
    pub max_iter: usize,
    /// Coupling constant of the active-set indicator.
    pub c: f64,
    pub solver: SolverKind,
    /// Switch to single exchanges when the number of set changes has not
    /// decreased for `stall_limit` iterations or a set repeats. Without it a
    /// repeat is reported as cycling.
    pub safeguard: bool,
    pub stall_limit: usize,
}

impl Default for PdasOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            c: 1.0,
            solver: SolverKind::default(),
            safeguard: true,
            stall_limit: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PdasState {
    pub sets: Vec<Activity>,
    /// `Ax - b`; zero on the inactive set.
    pub multiplier: Vec<f64>,
    pub iterations: usize,
}

impl PdasState {
    pub fn count(&self, a: Activity) -> usize {
        self.sets.iter().filter(|&&s| s == a).count()
    }

    /// `λ⁻ = Ax - b` on the lower-active set, zero elsewhere.
    pub fn lower_multiplier(&self) -> Vec<f64> {
        self.masked(Activity::Lower, 1.0)
    }

    /// `λ⁺ = b - Ax` on the upper-active set, zero elsewhere.
    pub fn upper_multiplier(&self) -> Vec<f64> {
        self.masked(Activity::Upper, -1.0)
    }

    fn masked(&self, a: Activity, sign: f64) -> Vec<f64> {
        self.sets
            .iter()
            .zip(&self.multiplier)
            .map(|(&s, &m)| if s == a { sign * m } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdasSolution {
    pub x: Vec<f64>,
    pub state: PdasState,
}

/// Reuses the inactive-block factorization while the active sets do not
/// change, which is the common case between consecutive time steps.
#[derive(Clone, Debug, Default)]
pub struct FactorCache {
    entry: Option<(Vec<Activity>, SpdSolver)>,
}

impl FactorCache {
    pub fn clear(&mut self) {
        self.entry = None;
    }
}

fn signature(sets: &[Activity]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &s in sets {
        h ^= s as u64 + 1;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Primal-dual active set iteration for the bilateral obstacle problem.
/// A warm start of the wrong length is ignored.
pub fn pdas_solve(
    problem: &ObstacleProblem,
    warm_start: Option<&PdasState>,
    options: &PdasOptions,
) -> Result<PdasSolution, PdasError> {
    pdas_solve_cached(problem, warm_start, options, &mut FactorCache::default())
}

pub fn pdas_solve_cached(
    problem: &ObstacleProblem,
    warm_start: Option<&PdasState>,
    options: &PdasOptions,
    cache: &mut FactorCache,
) -> Result<PdasSolution, PdasError> {
    let n = problem.dim();
    let mut sets = match warm_start {
        Some(w) if w.sets.len() == n => w.sets.clone(),
        _ => vec![Activity::Inactive; n],
    };
    let mut history: Vec<(u64, Vec<Activity>)> = Vec::new();
    let mut x = vec![0.0; n];
    let mut best = usize::MAX;
    let mut stalled = 0;
    for it in 1..=options.max_iter {
        solve_on_inactive(problem, &sets, options.solver, cache, &mut x)?;
        let mut r = problem.residual(&x);
        for (ri, s) in r.iter_mut().zip(&sets) {
            if *s == Activity::Inactive {
                *ri = 0.0;
            }
        }
        let next: Vec<Activity> = x
            .iter()
            .zip(&r)
            .map(|(&xi, &ri)| {
                let s = xi - ri / options.c;
                if s < 0.0 {
                    Activity::Lower
                } else if s > 1.0 {
                    Activity::Upper
                } else {
                    Activity::Inactive
                }
            })
            .collect();
        if next == sets {
            return Ok(PdasSolution {
                x,
                state: PdasState {
                    sets,
                    multiplier: r,
                    iterations: it,
                },
            });
        }
        let changed = next.iter().zip(&sets).filter(|(a, b)| a != b).count();
        let sig = signature(&next);
        let repeat = history.iter().position(|(h, s)| *h == sig && *s == next);
        if changed < best {
            best = changed;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if repeat.is_none() && stalled <= options.stall_limit {
            history.push((signature(&sets), core::mem::replace(&mut sets, next)));
            continue;
        }
        if !options.safeguard {
            if let Some(prev) = repeat {
                return Err(PdasError::Cycling {
                    iteration: it + 1,
                    previous: prev + 1,
                });
            }
            history.push((signature(&sets), core::mem::replace(&mut sets, next)));
            continue;
        }
        // Single exchange of the last index whose set changes.
        history.push((signature(&sets), sets.clone()));
        let i = (0..n).rev().find(|&i| next[i] != sets[i]).expect("sets differ");
        sets[i] = if sets[i] == Activity::Inactive {
            next[i]
        } else {
            Activity::Inactive
        };
    }
    Err(PdasError::MaxIterations {
        iterations: options.max_iter,
        residual: problem.kkt_residual(&x),
    })
}

fn solve_on_inactive(
    problem: &ObstacleProblem,
    sets: &[Activity],
    solver: SolverKind,
    cache: &mut FactorCache,
    x: &mut [f64],
) -> Result<(), PdasError> {
    for (xi, s) in x.iter_mut().zip(sets) {
        *xi = match s {
            Activity::Lower => 0.0,
            Activity::Upper => 1.0,
            Activity::Inactive => 0.0,
        };
    }
    let inactive: Vec<usize> = (0..sets.len()).filter(|&i| sets[i] == Activity::Inactive).collect();
    if inactive.is_empty() {
        return Ok(());
    }
    // b_I - A_IU 1
    let ax = problem.matrix.mul_vec(x);
    let rhs: Vec<f64> = inactive.iter().map(|&i| problem.rhs[i] - ax[i]).collect();
    let reuse = matches!(&cache.entry, Some((s, _)) if s.as_slice() == sets);
    if !reuse {
        let sub = problem.matrix.principal_submatrix(&inactive);
        cache.entry = Some((sets.to_vec(), SpdSolver::new(sub, solver)?));
    }
    let (_, factor) = cache.entry.as_ref().expect("cache filled above");
    let y = factor.solve(&rhs)?;
    for (&i, yi) in inactive.iter().zip(y) {
        x[i] = yi;
    }
    Ok(())
}

/// Result of one gradient-flow step.
#[derive(Clone, Debug)]
pub struct FlowStep {
    pub v: PhaseField,
    pub pdas: PdasState,
}

/// Semi-implicit gradient flow on one mesh. Keeps the step matrix, the
/// active sets of the last step and the matching factorization.
#[derive(Clone, Debug)]
pub struct GradientFlow {
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    frozen: Vec<bool>,
    free: Vec<usize>,
    alpha_tilde: f64,
    epsilon: f64,
    tau: f64,
    matrix: CsrMatrix,
    options: PdasOptions,
    warm: Option<PdasState>,
    cache: FactorCache,
}

impl GradientFlow {
    pub fn new(
        mass: CsrMatrix,
        stiffness: CsrMatrix,
        frozen: Vec<bool>,
        alpha_tilde: f64,
        epsilon: f64,
        tau: f64,
        options: PdasOptions,
    ) -> Self {
        let free = free_indices(&frozen);
        let matrix = step_matrix(&mass, &stiffness, &free, alpha_tilde, epsilon, tau);
        Self {
            mass,
            stiffness,
            frozen,
            free,
            alpha_tilde,
            epsilon,
            tau,
            matrix,
            options,
            warm: None,
            cache: FactorCache::default(),
        }
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_parameters(&mut self, epsilon: f64, tau: f64) {
        if epsilon == self.epsilon && tau == self.tau {
            return;
        }
        self.epsilon = epsilon;
        self.tau = tau;
        self.matrix = step_matrix(&self.mass, &self.stiffness, &self.free, self.alpha_tilde, epsilon, tau);
        self.cache.clear();
    }

    pub fn problem(&self, v_n: &PhaseField, gradient_density: &[f64]) -> ObstacleProblem {
        ObstacleProblem {
            matrix: self.matrix.clone(),
            rhs: self.rhs(v_n, gradient_density),
            free: self.free.clone(),
            full_dim: self.frozen.len(),
        }
    }

    fn rhs(&self, v_n: &PhaseField, gradient_density: &[f64]) -> Vec<f64> {
        step_rhs(
            &self.mass,
            v_n.values(),
            gradient_density,
            &self.free,
            self.alpha_tilde,
            self.epsilon,
            self.tau,
        )
    }

    /// Advances `v_n` by one step. The active sets of the accepted step seed
    /// the next one; call [`GradientFlow::commit`] to accept.
    pub fn step(&mut self, v_n: &PhaseField, gradient_density: &[f64]) -> Result<FlowStep, PdasError> {
        let problem = ObstacleProblem {
            matrix: core::mem::replace(&mut self.matrix, CsrMatrix::identity(0)),
            rhs: self.rhs(v_n, gradient_density),
            free: core::mem::take(&mut self.free),
            full_dim: self.frozen.len(),
        };
        let out = pdas_solve_cached(&problem, self.warm.as_ref(), &self.options, &mut self.cache);
        self.matrix = problem.matrix;
        self.free = problem.free;
        let sol = out?;
        let mut values = vec![0.0; self.frozen.len()];
        for (&i, &xi) in self.free.iter().zip(&sol.x) {
            values[i] = xi;
        }
        Ok(FlowStep {
            v: PhaseField {
                values,
                frozen: self.frozen.clone(),
            },
            pdas: sol.state,
        })
    }

    pub fn commit(&mut self, step: &FlowStep) {
        self.warm = Some(step.pdas.clone());
    }

    /// `‖a - b‖` in the discrete L² norm.
    pub fn l2_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        libm::sqrt(self.mass.bilinear(&d, &d).max(0.0))
    }
}

pub fn max_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d)
}
