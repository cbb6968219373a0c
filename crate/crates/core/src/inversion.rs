//! Reconstruction driver: gradient flow with periodic adaptive refinement,
//! optional ε-continuation, and the comparison with a known target.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::elasticity::{ForwardModel, LoadCase, StateEvaluation};
use crate::error::{Error, Result};
use crate::fem::{assemble_scalar_mass_stiffness, ElasticityParams};
use crate::mesh::{refine_by_indicator, CavityShape, Point, TriMesh};
use crate::phasefield::{
    assemble_gradient_density, frozen_band, ginzburg_landau_energy, max_distance, objective_derivative,
    Activity, GradientFlow, PdasOptions, PhaseField,
};
use crate::sparse::SolverKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StopNorm {
    #[default]
    L2,
    Max,
}

impl StopNorm {
    pub fn name(self) -> &'static str {
        match self {
            StopNorm::L2 => "l2",
            StopNorm::Max => "max",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "l2" | "L2" => Some(StopNorm::L2),
            "max" | "linf" => Some(StopNorm::Max),
            _ => None,
        }
    }
}

/// Divide ε by `divisor` before step `at_iteration`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub at_iteration: usize,
    pub divisor: f64,
}

impl EpsilonSchedule {
    pub fn new(at_iteration: usize) -> Self {
        Self {
            at_iteration,
            divisor: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub tol: f64,
    pub alpha_tilde: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub mu: f64,
    pub lambda: f64,
    /// Iterations between two refinements.
    pub refine_period: usize,
    pub refine_fraction: f64,
    /// No refinement once the mesh has this many vertices.
    pub max_vertices: usize,
    pub epsilon_schedule: Option<EpsilonSchedule>,
    pub d_band: f64,
    pub noise_seed: u64,
    pub max_iterations: usize,
    /// Halve τ (at most 5 times) for a step that increases the objective.
    pub backtracking: bool,
    pub stop_norm: StopNorm,
    pub pdas: PdasOptions,
    pub solver: SolverKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            alpha_tilde: 1e-2,
            tau: 1e-3,
            epsilon: 1.0 / (16.0 * core::f64::consts::PI),
            delta: 1e-2,
            mu: 0.2,
            lambda: 1.0,
            refine_period: 1000,
            refine_fraction: 0.5,
            max_vertices: 200_000,
            epsilon_schedule: None,
            d_band: 0.1,
            noise_seed: 0,
            max_iterations: 50_000,
            backtracking: false,
            stop_norm: StopNorm::L2,
            pdas: PdasOptions::default(),
            solver: SolverKind::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConfigWarning {
    /// τ is not smaller than δ.
    StepNotBelowContrast { tau: f64, delta: f64 },
}

impl core::fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ConfigWarning::StepNotBelowContrast { tau, delta } => {
                write!(f, "time step {tau} is not smaller than the contrast {delta}")
            }
        }
    }
}

fn invalid(msg: alloc::string::String) -> Error {
    Error::InvalidConfig(msg)
}

impl RunConfig {
    pub fn params(&self) -> Result<ElasticityParams> {
        ElasticityParams::new(self.mu, self.lambda, self.delta)
    }

    pub fn validate(&self) -> Result<Vec<ConfigWarning>> {
        let positive = [
            ("tol", self.tol),
            ("tau", self.tau),
            ("epsilon", self.epsilon),
            ("alpha_tilde", self.alpha_tilde),
        ];
        for (name, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                return Err(invalid(format!("{name} must be positive and finite, got {x}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        self.params()?;
        if self.refine_period == 0 {
            return Err(invalid("refine_period must be at least 1".into()));
        }
        if !(self.refine_fraction > 0.0 && self.refine_fraction <= 1.0) {
            return Err(invalid(format!(
                "refine_fraction must lie in (0, 1], got {}",
                self.refine_fraction
            )));
        }
        if !(self.d_band >= 0.0) {
            return Err(invalid(format!("d_band must be nonnegative, got {}", self.d_band)));
        }
        if let Some(s) = self.epsilon_schedule {
            if !(s.divisor > 0.0) || !(self.epsilon / s.divisor > 0.0) {
                return Err(invalid(format!("epsilon divisor {} is not usable", s.divisor)));
            }
        }
        if self.pdas.max_iter == 0 {
            return Err(invalid("PDAS max_iter must be at least 1".into()));
        }
        let mut warnings = Vec::new();
        if self.tau >= self.delta {
            warnings.push(ConfigWarning::StepNotBelowContrast {
                tau: self.tau,
                delta: self.delta,
            });
        }
        Ok(warnings)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Misfit plus Ginzburg–Landau energy.
    pub objective: f64,
    pub misfit: f64,
    pub gl_energy: f64,
    /// `‖vⁿ - vⁿ⁻¹‖` in the configured norm; `None` for the initial state.
    pub step_norm: Option<f64>,
    pub lower: usize,
    pub upper: usize,
    pub inactive: usize,
    pub pdas_iterations: usize,
    pub vertices: usize,
    pub epsilon: f64,
    pub tau: f64,
    pub backtracks: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementEvent {
    pub iteration: usize,
    pub old_vertices: usize,
    pub new_vertices: usize,
    pub misfit_before: f64,
    pub misfit_after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonEvent {
    pub iteration: usize,
    pub old_epsilon: f64,
    pub new_epsilon: f64,
    pub gl_before: f64,
    pub gl_after: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    Interrupted,
    Failed,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max-iterations",
            StopReason::Interrupted => "interrupted",
            StopReason::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
    pub refinements: Vec<RefinementEvent>,
    pub epsilon_events: Vec<EpsilonEvent>,
    pub mesh: TriMesh,
    pub field: PhaseField,
    /// Measurements on the final mesh.
    pub loads: Vec<LoadCase>,
    /// ε in force at the end of the run.
    pub epsilon: f64,
    pub stop: StopReason,
    /// Data of the step that produced `field`; `None` if the mesh changed
    /// after it.
    pub last_step: Option<LastStep>,
}

/// Inputs of the time step that produced the final field.
#[derive(Clone, Debug)]
pub struct LastStep {
    pub previous: PhaseField,
    pub gradient_density: Vec<f64>,
    pub tau: f64,
    pub epsilon: f64,
}

impl RunHistory {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// `Av - b` of the last time step at the final field, full length with
    /// zeros on the frozen band. The final field satisfies the step
    /// inequality `r·(ω - v) ≥ 0` for every admissible `ω`.
    pub fn step_residual(&self, alpha_tilde: f64) -> Option<Vec<f64>> {
        let last = self.last_step.as_ref()?;
        let (m, k) = assemble_scalar_mass_stiffness(&self.mesh);
        let flow = GradientFlow::new(
            m,
            k,
            self.field.frozen().to_vec(),
            alpha_tilde,
            last.epsilon,
            last.tau,
            PdasOptions::default(),
        );
        let problem = flow.problem(&last.previous, &last.gradient_density);
        let x = problem.restrict(self.field.values());
        Some(problem.expand(&problem.residual(&x)))
    }
}

/// Error of a run together with everything recorded before it.
#[derive(Clone, Debug)]
pub struct RunFailure {
    pub error: Error,
    pub history: RunHistory,
}

/// Hooks into a running reconstruction. The core has no clock; the
/// observer supplies one.
pub trait RunObserver {
    fn elapsed(&mut self) -> f64 {
        0.0
    }

    fn on_iteration(&mut self, _record: &IterationRecord, _mesh: &TriMesh, _field: &PhaseField) {}

    fn on_refinement(&mut self, _event: &RefinementEvent, _mesh: &TriMesh) {}

    fn should_stop(&mut self) -> bool {
        false
    }
}

pub struct NoObserver;

impl RunObserver for NoObserver {}

/// Per-triangle refinement indicator `|∇v|·area`.
pub fn gradient_indicator(mesh: &TriMesh, v: &[f64]) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|t| {
            let g = mesh.hat_gradients(t);
            let tri = mesh.triangles()[t];
            let mut gv = [0.0; 2];
            for k in 0..3 {
                gv[0] += v[tri[k]] * g[k][0];
                gv[1] += v[tri[k]] * g[k][1];
            }
            libm::hypot(gv[0], gv[1]) * mesh.area(t)
        })
        .collect()
}

/// Objective parts `(misfit, Ginzburg–Landau)` at `v`.
pub fn objective(
    mesh: &TriMesh,
    v: &[f64],
    config: &RunConfig,
    epsilon: f64,
    loads: &[LoadCase],
) -> Result<(f64, f64)> {
    let model = ForwardModel::new(mesh, config.params()?, config.solver);
    let misfit = model.misfit_at(v, loads)?;
    Ok((misfit, ginzburg_landau_energy(mesh, v, config.alpha_tilde, epsilon)))
}

/// Full nodal derivative of the objective at `v`.
pub fn objective_gradient(
    mesh: &TriMesh,
    v: &[f64],
    config: &RunConfig,
    epsilon: f64,
    loads: &[LoadCase],
) -> Result<Vec<f64>> {
    let params = config.params()?;
    let model = ForwardModel::new(mesh, params, config.solver);
    let eval = model.evaluate(v, loads)?;
    let g = density(mesh, &params, &eval);
    let (m, k) = assemble_scalar_mass_stiffness(mesh);
    Ok(objective_derivative(&g, &m, &k, v, config.alpha_tilde, epsilon))
}

fn density(mesh: &TriMesh, params: &ElasticityParams, eval: &StateEvaluation) -> Vec<f64> {
    let pairs: Vec<_> = eval.forward.iter().zip(&eval.adjoint).collect();
    assemble_gradient_density(mesh, params, &pairs)
}

/// ε after applying `schedule` at `iteration` (a switch at iteration `k`
/// affects steps `k, k+1, ...`).
pub fn epsilon_continuation(epsilon: f64, schedule: Option<&EpsilonSchedule>, iteration: usize) -> f64 {
    match schedule {
        Some(s) if iteration >= s.at_iteration => epsilon / s.divisor,
        _ => epsilon,
    }
}

struct Working {
    mesh: TriMesh,
    v: PhaseField,
    loads: Vec<LoadCase>,
    flow: GradientFlow,
    eval: StateEvaluation,
}

impl Working {
    fn new(mesh: TriMesh, v: PhaseField, loads: Vec<LoadCase>, config: &RunConfig, eps: f64, tau: f64) -> Result<Self> {
        let (m, k) = assemble_scalar_mass_stiffness(&mesh);
        let flow = GradientFlow::new(m, k, v.frozen().to_vec(), config.alpha_tilde, eps, tau, config.pdas);
        let eval = ForwardModel::new(&mesh, config.params()?, config.solver).evaluate(v.values(), &loads)?;
        Ok(Self {
            mesh,
            v,
            loads,
            flow,
            eval,
        })
    }

    fn model(&self, config: &RunConfig) -> Result<ForwardModel<'_>> {
        Ok(ForwardModel::new(&self.mesh, config.params()?, config.solver))
    }
}

/// Runs the reconstruction from `v = 0` on `mesh`. The measurements must
/// live on `mesh`.
#[allow(clippy::result_large_err)]
pub fn reconstruct(
    config: &RunConfig,
    mesh: TriMesh,
    loads: Vec<LoadCase>,
    observer: &mut dyn RunObserver,
) -> core::result::Result<RunHistory, RunFailure> {
    let fail_early = |error: Error, mesh: TriMesh, loads: Vec<LoadCase>| RunFailure {
        error,
        history: RunHistory {
            records: Vec::new(),
            refinements: Vec::new(),
            epsilon_events: Vec::new(),
            field: PhaseField::zeros(&mesh, config.d_band),
            mesh,
            loads,
            epsilon: config.epsilon,
            stop: StopReason::Failed,
            last_step: None,
        },
    };
    if let Err(e) = config.validate() {
        return Err(fail_early(e, mesh, loads));
    }
    if loads.is_empty() {
        return Err(fail_early(Error::NoLoadCases, mesh, loads));
    }
    if let Some(bad) = loads.iter().find(|l| l.measurement.len() != mesh.num_vertices() || !l.check_finite()) {
        let e = invalid(format!("measurement of load '{}' does not match the working mesh", bad.id));
        return Err(fail_early(e, mesh, loads));
    }
    let v = PhaseField::zeros(&mesh, config.d_band);
    let eps0 = epsilon_continuation(config.epsilon, config.epsilon_schedule.as_ref(), 0);
    let work = match Working::new(mesh.clone(), v, loads.clone(), config, eps0, config.tau) {
        Ok(w) => w,
        Err(e) => return Err(fail_early(e, mesh, loads)),
    };
    let mut driver = Driver {
        config,
        work,
        epsilon: eps0,
        last_step: None,
        records: Vec::new(),
        refinements: Vec::new(),
        epsilon_events: Vec::new(),
    };
    if eps0 != config.epsilon {
        let gl = |e| ginzburg_landau_energy(&driver.work.mesh, driver.work.v.values(), config.alpha_tilde, e);
        let ev = EpsilonEvent {
            iteration: 0,
            old_epsilon: config.epsilon,
            new_epsilon: eps0,
            gl_before: gl(config.epsilon),
            gl_after: gl(eps0),
        };
        driver.epsilon_events.push(ev);
    }
    let stop = driver.run(observer);
    let Driver {
        work,
        records,
        refinements,
        epsilon_events,
        epsilon,
        last_step,
        ..
    } = driver;
    let history = RunHistory {
        records,
        refinements,
        epsilon_events,
        mesh: work.mesh,
        field: work.v,
        loads: work.loads,
        epsilon,
        stop: match &stop {
            Ok(s) => *s,
            Err(_) => StopReason::Failed,
        },
        last_step,
    };
    match stop {
        Ok(_) => Ok(history),
        Err(error) => Err(RunFailure { error, history }),
    }
}

struct Driver<'c> {
    config: &'c RunConfig,
    work: Working,
    epsilon: f64,
    last_step: Option<LastStep>,
    records: Vec<IterationRecord>,
    refinements: Vec<RefinementEvent>,
    epsilon_events: Vec<EpsilonEvent>,
}

impl Driver<'_> {
    fn gl(&self, v: &[f64]) -> f64 {
        ginzburg_landau_energy(&self.work.mesh, v, self.config.alpha_tilde, self.epsilon)
    }

    fn push_record(
        &mut self,
        iteration: usize,
        step_norm: Option<f64>,
        sets: Option<(&[Activity], usize)>,
        tau: f64,
        backtracks: usize,
        observer: &mut dyn RunObserver,
    ) -> Result<()> {
        let misfit = self.work.eval.misfit;
        let gl_energy = self.gl(self.work.v.values());
        let objective = misfit + gl_energy;
        if !objective.is_finite() {
            return Err(Error::NonFiniteObjective { iteration });
        }
        let (mut lower, mut upper, mut inactive, mut pdas_iterations) = (0, 0, 0, 0);
        if let Some((s, it)) = sets {
            for a in s {
                match a {
                    Activity::Lower => lower += 1,
                    Activity::Upper => upper += 1,
                    Activity::Inactive => inactive += 1,
                }
            }
            pdas_iterations = it;
        }
        let record = IterationRecord {
            iteration,
            objective,
            misfit,
            gl_energy,
            step_norm,
            lower,
            upper,
            inactive,
            pdas_iterations,
            vertices: self.work.mesh.num_vertices(),
            epsilon: self.epsilon,
            tau,
            backtracks,
            wall_time: observer.elapsed(),
        };
        observer.on_iteration(&record, &self.work.mesh, &self.work.v);
        self.records.push(record);
        Ok(())
    }

    fn run(&mut self, observer: &mut dyn RunObserver) -> Result<StopReason> {
        let config = self.config;
        self.push_record(0, None, None, config.tau, 0, observer)?;
        let params = config.params()?;
        for n in 1..=config.max_iterations {
            if observer.should_stop() {
                return Ok(StopReason::Interrupted);
            }
            let eps = epsilon_continuation(config.epsilon, config.epsilon_schedule.as_ref(), n - 1);
            if eps != self.epsilon {
                let ev = EpsilonEvent {
                    iteration: n - 1,
                    old_epsilon: self.epsilon,
                    new_epsilon: eps,
                    gl_before: self.gl(self.work.v.values()),
                    gl_after: ginzburg_landau_energy(&self.work.mesh, self.work.v.values(), config.alpha_tilde, eps),
                };
                self.epsilon_events.push(ev);
                self.epsilon = eps;
            }

            let g = density(&self.work.mesh, &params, &self.work.eval);
            let j_old = self.work.eval.misfit + self.gl(self.work.v.values());
            let mut tau = config.tau;
            let mut backtracks = 0;
            let (step, eval) = loop {
                self.work.flow.set_parameters(self.epsilon, tau);
                let step = self.work.flow.step(&self.work.v, &g)?;
                let eval = self.work.model(config)?.evaluate(step.v.values(), &self.work.loads)?;
                let j_new = eval.misfit + self.gl(step.v.values());
                if config.backtracking && backtracks < 5 && j_new > j_old + 1e-12 {
                    tau *= 0.5;
                    backtracks += 1;
                    continue;
                }
                break (step, eval);
            };
            self.work.flow.commit(&step);
            let norm = match config.stop_norm {
                StopNorm::L2 => self.work.flow.l2_distance(step.v.values(), self.work.v.values()),
                StopNorm::Max => max_distance(step.v.values(), self.work.v.values()),
            };
            let previous = core::mem::replace(&mut self.work.v, step.v);
            self.last_step = Some(LastStep {
                previous,
                gradient_density: g,
                tau,
                epsilon: self.epsilon,
            });
            self.work.eval = eval;
            self.push_record(
                n,
                Some(norm),
                Some((&step.pdas.sets, step.pdas.iterations)),
                tau,
                backtracks,
                observer,
            )?;
            if norm <= config.tol {
                return Ok(StopReason::Converged);
            }
            if n % config.refine_period == 0 && self.work.mesh.num_vertices() < config.max_vertices {
                self.refine(n, observer)?;
            }
        }
        Ok(StopReason::MaxIterations)
    }

    fn refine(&mut self, iteration: usize, observer: &mut dyn RunObserver) -> Result<()> {
        let config = self.config;
        let indicator = gradient_indicator(&self.work.mesh, self.work.v.values());
        let (mesh, transfer) = refine_by_indicator(&self.work.mesh, &indicator, config.refine_fraction)?;
        if transfer.is_identity() {
            return Ok(());
        }
        let frozen = frozen_band(&mesh, config.d_band);
        let v = PhaseField::new(transfer.apply_scalar(self.work.v.values()), frozen)?;
        let mut loads = Vec::with_capacity(self.work.loads.len());
        for l in &self.work.loads {
            loads.push(l.transfer(&self.work.mesh, &mesh)?);
        }
        self.last_step = None;
        let old_vertices = self.work.mesh.num_vertices();
        let misfit_before = self.work.eval.misfit;
        self.work = Working::new(mesh, v, loads, config, self.epsilon, config.tau)?;
        let event = RefinementEvent {
            iteration,
            old_vertices,
            new_vertices: self.work.mesh.num_vertices(),
            misfit_before,
            misfit_after: self.work.eval.misfit,
        };
        observer.on_refinement(&event, &self.work.mesh);
        self.refinements.push(event);
        Ok(())
    }
}

/// Comparison of the thresholded phase field with a known cavity.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdMetrics {
    pub level: f64,
    pub area: f64,
    pub target_area: f64,
    pub centroid: Option<Point>,
    pub target_centroid: Point,
    pub centroid_distance: Option<f64>,
    pub jaccard: f64,
    pub empty: bool,
    pub components: usize,
}

/// Sub-triangles per element edge used to integrate the overlap.
const OVERLAP_SUBDIVISION: usize = 8;

fn overlap_area(mesh: &TriMesh, t: usize, shape: &CavityShape) -> f64 {
    let [a, b, c] = mesh.corners(t);
    let k = OVERLAP_SUBDIVISION;
    let kf = k as f64;
    let point = |i: f64, j: f64| -> Point {
        let (s, r) = (i / kf, j / kf);
        [
            a[0] + s * (b[0] - a[0]) + r * (c[0] - a[0]),
            a[1] + s * (b[1] - a[1]) + r * (c[1] - a[1]),
        ]
    };
    let mut inside = 0usize;
    for i in 0..k {
        for j in 0..k - i {
            let (fi, fj) = (i as f64, j as f64);
            if shape.contains(point(fi + 1.0 / 3.0, fj + 1.0 / 3.0)) {
                inside += 1;
            }
            if i + j + 1 < k && shape.contains(point(fi + 2.0 / 3.0, fj + 2.0 / 3.0)) {
                inside += 1;
            }
        }
    }
    mesh.area(t) * inside as f64 / (k * k) as f64
}

/// Triangles whose centroid value exceeds `level`.
pub fn threshold_region(mesh: &TriMesh, v: &[f64], level: f64) -> Vec<usize> {
    mesh.triangles()
        .iter()
        .enumerate()
        .filter(|(_, tri)| (v[tri[0]] + v[tri[1]] + v[tri[2]]) / 3.0 > level)
        .map(|(t, _)| t)
        .collect()
}

/// Edge-connected components of a set of triangles.
pub fn count_components(mesh: &TriMesh, region: &[usize]) -> usize {
    let mut owner: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (k, &t) in region.iter().enumerate() {
        let tri = mesh.triangles()[t];
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            owner.entry((a.min(b), a.max(b))).or_default().push(k);
        }
    }
    let mut parent: Vec<usize> = (0..region.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for tris in owner.values() {
        for w in tris.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a] = b;
            }
        }
    }
    (0..region.len()).filter(|&k| find(&mut parent, k) == k).count()
}

pub fn threshold_and_compare(mesh: &TriMesh, v: &[f64], level: f64, target: &CavityShape) -> Result<ThresholdMetrics> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("threshold level must lie in (0, 1), got {level}")));
    }
    let region = threshold_region(mesh, v, level);
    let target_area = target.area();
    let target_centroid = target.centroid();
    let mut area = 0.0;
    let mut moment = [0.0; 2];
    let mut inter = 0.0;
    for &t in &region {
        let a = mesh.area(t);
        let c = mesh.centroid(t);
        area += a;
        moment[0] += a * c[0];
        moment[1] += a * c[1];
        inter += overlap_area(mesh, t, target);
    }
    let empty = region.is_empty();
    let centroid = (!empty).then(|| [moment[0] / area, moment[1] / area]);
    let union = area + target_area - inter;
    Ok(ThresholdMetrics {
        level,
        area,
        target_area,
        centroid,
        target_centroid,
        centroid_distance: centroid.map(|c| libm::hypot(c[0] - target_centroid[0], c[1] - target_centroid[1])),
        jaccard: if union > 0.0 { inter / union } else { 0.0 },
        empty,
        components: count_components(mesh, &region),
    })
}

/// Nodal indicator of `shape` on `mesh`, zero in the frozen band.
pub fn nodal_indicator(mesh: &TriMesh, shape: &CavityShape, d_band: f64) -> PhaseField {
    let values = mesh
        .vertices()
        .iter()
        .map(|&p| if shape.contains(p) { 1.0 } else { 0.0 })
        .collect();
    PhaseField::new(values, frozen_band(mesh, d_band)).expect("lengths match")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_square_mesh, DirichletSpec};
    use alloc::vec;

    fn disk() -> CavityShape {
        CavityShape::Disk {
            center: [0.1, 0.2],
            radius: 0.4,
        }
    }

    #[test]
    fn default_config_is_valid() {
        let c = RunConfig::default();
        assert!(c.validate().unwrap().is_empty());
        let mut bad = c.clone();
        bad.delta = 1.0;
        assert!(bad.validate().is_err());
        let mut warn = c.clone();
        warn.tau = 0.05;
        assert_eq!(warn.validate().unwrap().len(), 1);
        let mut zero = c;
        zero.refine_period = 0;
        assert!(zero.validate().is_err());
    }

    #[test]
    fn continuation_examples() {
        let pi = core::f64::consts::PI;
        let s = EpsilonSchedule::new(8000);
        assert_eq!(epsilon_continuation(1.0 / (4.0 * pi), Some(&s), 7999), 1.0 / (4.0 * pi));
        let after = epsilon_continuation(1.0 / (4.0 * pi), Some(&s), 8000);
        assert!((after - 1.0 / (16.0 * pi)).abs() < 1e-17);
        assert_eq!(epsilon_continuation(0.3, None, 1_000_000), 0.3);
        let now = EpsilonSchedule::new(0);
        assert_eq!(epsilon_continuation(0.4, Some(&now), 0), 0.1);
    }

    #[test]
    fn indicator_projection_matches_target() {
        let m = build_square_mesh(64, &DirichletSpec::bottom()).unwrap();
        let v = nodal_indicator(&m, &disk(), 0.1);
        let r = threshold_and_compare(&m, v.values(), 0.5, &disk()).unwrap();
        assert!(r.jaccard >= 0.9, "{r:?}");
        assert_eq!(r.components, 1);
        assert!(r.centroid_distance.unwrap() < 0.02);
    }

    #[test]
    fn empty_region_is_flagged() {
        let m = build_square_mesh(8, &DirichletSpec::bottom()).unwrap();
        let r = threshold_and_compare(&m, &vec![0.0; m.num_vertices()], 0.5, &disk()).unwrap();
        assert!(r.empty);
        assert_eq!(r.jaccard, 0.0);
        assert_eq!(r.components, 0);
        assert!(r.centroid.is_none());
        assert!(threshold_and_compare(&m, &vec![0.0; m.num_vertices()], 1.0, &disk()).is_err());
    }

    #[test]
    fn two_disks_give_two_components() {
        let shape = CavityShape::Union(vec![
            CavityShape::Disk {
                center: [-0.4, 0.3],
                radius: 0.25,
            },
            CavityShape::AxisSquare {
                center: [0.4, -0.2],
                half_side: 0.2,
            },
        ]);
        let m = build_square_mesh(32, &DirichletSpec::bottom()).unwrap();
        let v = nodal_indicator(&m, &shape, 0.1);
        let r = threshold_and_compare(&m, v.values(), 0.5, &shape).unwrap();
        assert_eq!(r.components, 2);
    }

    #[test]
    fn overlap_of_fully_inside_triangle_is_its_area() {
        let m = build_square_mesh(4, &DirichletSpec::bottom()).unwrap();
        let big = CavityShape::AxisSquare {
            center: [0.0, 0.0],
            half_side: 5.0,
        };
        for t in 0..m.num_triangles() {
            assert!((overlap_area(&m, t, &big) - m.area(t)).abs() < 1e-15);
        }
    }
}
