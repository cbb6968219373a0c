//! Synthetic boundary measurements: true-cavity solves on a finer generator
//! mesh, trace transfer to the working mesh, and seeded Gaussian noise.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::elasticity::{ForwardModel, LoadCase, Traction};
use crate::error::{Error, Result};
use crate::fem::ElasticityParams;
use crate::mesh::{build_square_mesh, carve_cavity, BoundaryTrace, CavityShape, DirichletSpec, TriMesh};
use crate::sparse::SolverKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseScaling {
    /// Amplitude is a fraction of the largest displacement magnitude on Σ_N.
    #[default]
    RelativeToMax,
    /// Amplitude is a fraction of each value itself.
    Pointwise,
}

impl NoiseScaling {
    pub fn name(self) -> &'static str {
        match self {
            NoiseScaling::RelativeToMax => "relative-to-max",
            NoiseScaling::Pointwise => "pointwise",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "relative-to-max" | "max" => Some(NoiseScaling::RelativeToMax),
            "pointwise" => Some(NoiseScaling::Pointwise),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Percent.
    pub level: f64,
    pub seed: u64,
    pub scaling: NoiseScaling,
}

impl NoiseSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            level,
            seed,
            scaling: NoiseScaling::RelativeToMax,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0) || !self.level.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "noise level must be a finite nonnegative percentage, got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Adds `level% · s · η` to every component, `η ~ N(0, 1)`. `stream`
/// separates the draws of different load cases under one seed.
pub fn add_noise(values: &[[f64; 2]], spec: &NoiseSpec, stream: u64) -> Vec<[f64; 2]> {
    if spec.level == 0.0 {
        return values.to_vec();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let max = values
        .iter()
        .map(|u| libm::hypot(u[0], u[1]))
        .fold(0.0, f64::max);
    let amp = spec.level / 100.0;
    values
        .iter()
        .map(|u| {
            let mut out = *u;
            for c in out.iter_mut() {
                let eta: f64 = StandardNormal.sample(&mut rng);
                let s = match spec.scaling {
                    NoiseScaling::RelativeToMax => max,
                    NoiseScaling::Pointwise => c.abs(),
                };
                *c += amp * s * eta;
            }
            out
        })
        .collect()
}

/// Noisy copy of a boundary trace; the noise lives on the trace nodes.
pub fn add_trace_noise(trace: &BoundaryTrace, spec: &NoiseSpec, stream: u64) -> Result<BoundaryTrace> {
    let (points, values) = trace.nodes();
    Ok(BoundaryTrace::from_nodes(&points, &add_noise(&values, spec, stream))?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeneratorMode {
    /// Carve the cavity out of the generator mesh (traction-free walls).
    TrueCavity,
    /// Ersatz material with the given contrast on the uncarved generator
    /// mesh, using the nodal indicator of the cavity. For cross-checks.
    Ersatz { delta: f64 },
}

#[derive(Clone, Debug)]
pub struct GeneratorConfig {
    pub resolution: usize,
    pub dirichlet: DirichletSpec,
    /// Minimum distance between the cavity and the outer boundary.
    pub margin: f64,
    pub mode: GeneratorMode,
    pub solver: SolverKind,
}

impl GeneratorConfig {
    pub fn new(resolution: usize, dirichlet: DirichletSpec) -> Self {
        Self {
            resolution,
            dirichlet,
            margin: 0.05,
            mode: GeneratorMode::TrueCavity,
            solver: SolverKind::default(),
        }
    }
}

/// Generator mesh for `target` (carved in true-cavity mode).
pub fn generator_mesh(target: &CavityShape, generator: &GeneratorConfig) -> Result<TriMesh> {
    let base = build_square_mesh(generator.resolution, &generator.dirichlet)?;
    Ok(match generator.mode {
        GeneratorMode::TrueCavity => carve_cavity(&base, target, generator.margin)?,
        GeneratorMode::Ersatz { .. } => base,
    })
}

/// Σ_N traces of the cavity problem, one per traction.
pub fn generate_traces(
    target: &CavityShape,
    loads: &[(String, Traction)],
    params: &ElasticityParams,
    generator: &GeneratorConfig,
) -> Result<(TriMesh, Vec<BoundaryTrace>)> {
    if loads.is_empty() {
        return Err(Error::NoLoadCases);
    }
    let mesh = generator_mesh(target, generator)?;
    let traces = {
        let (model, op) = match generator.mode {
            GeneratorMode::TrueCavity => {
                let model = ForwardModel::new(&mesh, *params, generator.solver);
                let op = model.background_operator()?;
                (model, op)
            }
            GeneratorMode::Ersatz { delta } => {
                let p = ElasticityParams::new(params.mu, params.lambda, delta)?;
                let model = ForwardModel::new(&mesh, p, generator.solver);
                let v: Vec<f64> = mesh
                    .vertices()
                    .iter()
                    .map(|&x| if target.contains(x) { 1.0 } else { 0.0 })
                    .collect();
                let op = model.operator(&v)?;
                (model, op)
            }
        };
        let mut traces = Vec::with_capacity(loads.len());
        for (_, g) in loads {
            let u = model.forward(&op, g)?;
            traces.push(BoundaryTrace::from_field(&mesh, u.values())?);
        }
        traces
    };
    Ok((mesh, traces))
}

/// Synthetic load cases on `working`. The generator mesh must be strictly
/// finer than the working mesh.
pub fn generate_measurements(
    target: &CavityShape,
    loads: &[(String, Traction)],
    params: &ElasticityParams,
    generator: &GeneratorConfig,
    working: &TriMesh,
) -> Result<Vec<LoadCase>> {
    let h_gen = 2.0 / generator.resolution as f64;
    let h_work = working.max_diameter() / core::f64::consts::SQRT_2;
    if !(h_gen < h_work * (1.0 - 1e-9)) {
        return Err(Error::InvalidConfig(alloc::format!(
            "generator resolution {} is not finer than the working mesh",
            generator.resolution
        )));
    }
    let (_, traces) = generate_traces(target, loads, params, generator)?;
    let mut out = Vec::with_capacity(loads.len());
    for ((id, g), trace) in loads.iter().zip(traces) {
        out.push(LoadCase::from_trace(id.clone(), g.clone(), trace, working)?);
    }
    Ok(out)
}

/// Applies noise to the stored source trace of every load and resamples the
/// working-mesh measurement from it. Load `k` uses stream `k`.
pub fn apply_noise(loads: &[LoadCase], spec: &NoiseSpec, working: &TriMesh) -> Result<Vec<LoadCase>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(loads.len());
    for (k, load) in loads.iter().enumerate() {
        let trace = match &load.source {
            Some(t) => t.clone(),
            None => BoundaryTrace::from_field(working, &load.measurement)?,
        };
        let noisy = add_trace_noise(&trace, spec, k as u64)?;
        out.push(LoadCase::from_trace(load.id.clone(), load.traction.clone(), noisy, working)?);
    }
    Ok(out)
}
