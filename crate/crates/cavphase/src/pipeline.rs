//! Generate and reconstruct experiments, writing artifacts to disk.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cavphase_core::elasticity::LoadCase;
use cavphase_core::inversion::{
    reconstruct, threshold_and_compare, IterationRecord, RefinementEvent, RunHistory, RunObserver, ThresholdMetrics,
};
use cavphase_core::mesh::{build_square_mesh, BoundaryTrace, TriMesh};
use cavphase_core::phasefield::PhaseField;
use cavphase_core::synth::{add_trace_noise, generate_traces};

use crate::config::{config_hash, experiment_to_string};
use crate::experiment::{shape_to_string, Experiment};
use crate::expr::parse_traction_expression;
use crate::io::{csv_text, vtk_text, HistoryWriter, MeasurementFile};

#[derive(Debug)]
pub enum PipelineError {
    Io(io::Error),
    Core(cavphase_core::Error),
    Data(String),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Io(e) => write!(f, "i/o error: {e}"),
            PipelineError::Core(e) => write!(f, "{e}"),
            PipelineError::Data(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<io::Error> for PipelineError {
    fn from(e: io::Error) -> Self {
        PipelineError::Io(e)
    }
}

impl From<cavphase_core::Error> for PipelineError {
    fn from(e: cavphase_core::Error) -> Self {
        PipelineError::Core(e)
    }
}

impl From<cavphase_core::MeshError> for PipelineError {
    fn from(e: cavphase_core::MeshError) -> Self {
        PipelineError::Core(e.into())
    }
}

fn dirichlet_text(e: &Experiment) -> String {
    e.dirichlet.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")
}

/// Synthetic measurements of every load, noise included.
pub fn generate(e: &Experiment) -> Result<Vec<MeasurementFile>, PipelineError> {
    let hash = config_hash(e);
    let (_, traces) = generate_traces(&e.target, &e.tractions(), &e.run.params()?, &e.generator_config())?;
    let mut files = Vec::with_capacity(traces.len());
    for (k, (load, trace)) in e.loads.iter().zip(traces).enumerate() {
        let noisy = add_trace_noise(&trace, &e.noise, k as u64)?;
        let (points, values) = noisy.nodes();
        files.push(MeasurementFile {
            load_id: load.id.clone(),
            traction: load.expr.text.clone(),
            generator_resolution: e.generator,
            working_resolution: e.working,
            dirichlet: dirichlet_text(e),
            target: shape_to_string(&e.target),
            noise: e.noise,
            config_hash: hash.clone(),
            points,
            values,
        });
    }
    Ok(files)
}

pub fn measurement_path(dir: &Path, load_id: &str) -> PathBuf {
    dir.join(format!("measurement_{load_id}.txt"))
}

pub fn write_measurements(dir: &Path, files: &[MeasurementFile]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|f| {
            let p = measurement_path(dir, &f.load_id);
            f.write(&p).map(|_| p)
        })
        .collect()
}

/// Reads the measurement files of every load of `e` from `dir`.
pub fn read_measurements(dir: &Path, e: &Experiment) -> Result<Vec<MeasurementFile>, PipelineError> {
    e.loads
        .iter()
        .map(|l| {
            let f = MeasurementFile::read(&measurement_path(dir, &l.id))?;
            if f.dirichlet != dirichlet_text(e) {
                return Err(PipelineError::Data(format!(
                    "measurement '{}' was generated with Dirichlet part '{}', configured '{}'",
                    l.id,
                    f.dirichlet,
                    dirichlet_text(e)
                )));
            }
            Ok(f)
        })
        .collect()
}

/// Load cases on `mesh` from measurement files.
pub fn load_cases(files: &[MeasurementFile], mesh: &TriMesh) -> Result<Vec<LoadCase>, PipelineError> {
    files
        .iter()
        .map(|f| {
            let expr = parse_traction_expression(&f.traction)
                .map_err(|err| PipelineError::Data(format!("traction of '{}': {err}", f.load_id)))?;
            let trace = BoundaryTrace::from_nodes(&f.points, &f.values)?;
            Ok(LoadCase::from_trace(f.load_id.clone(), expr.to_traction(), trace, mesh)?)
        })
        .collect()
}

/// Writes history lines and snapshots as the run proceeds.
struct ArtifactObserver {
    start: Instant,
    out: PathBuf,
    hash: String,
    snapshot_every: usize,
    snapshot_at: Vec<usize>,
    history: HistoryWriter,
    error: Option<io::Error>,
    progress: bool,
}

impl ArtifactObserver {
    fn snapshot(&mut self, iteration: usize, mesh: &TriMesh, v: &[f64]) -> io::Result<()> {
        let dir = self.out.join("snapshots");
        fs::create_dir_all(&dir)?;
        let title = format!("cavphase iteration {iteration} config {}", self.hash);
        fs::write(dir.join(format!("iter_{iteration:06}.vtk")), vtk_text(mesh, v, &title))?;
        fs::write(dir.join(format!("iter_{iteration:06}.csv")), csv_text(mesh, v, &self.hash))
    }

    fn keep(&mut self, r: io::Result<()>) {
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
    }
}

impl RunObserver for ArtifactObserver {
    fn elapsed(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_iteration(&mut self, record: &IterationRecord, mesh: &TriMesh, field: &PhaseField) {
        let r = self.history.record(record);
        self.keep(r);
        let i = record.iteration;
        if (self.snapshot_every > 0 && i.is_multiple_of(self.snapshot_every)) || self.snapshot_at.contains(&i) {
            let r = self.snapshot(record.iteration, mesh, field.values());
            self.keep(r);
        }
        if self.progress && record.iteration.is_multiple_of(500) {
            eprintln!(
                "  iter {:>6}  J {:.6e}  step {:.3e}  vertices {}  {:.1}s",
                record.iteration,
                record.objective,
                record.step_norm.unwrap_or(f64::NAN),
                record.vertices,
                record.wall_time
            );
        }
    }

    fn on_refinement(&mut self, event: &RefinementEvent, _mesh: &TriMesh) {
        let r = self.history.refinement(event);
        self.keep(r);
    }

    fn should_stop(&mut self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReconstructOptions {
    /// Snapshot period in iterations; 0 disables periodic snapshots.
    pub snapshot_every: usize,
    /// Extra iterations to snapshot.
    pub snapshot_at: Vec<usize>,
    pub progress: bool,
}

#[derive(Debug)]
pub struct ReconstructOutcome {
    pub history: RunHistory,
    pub metrics: Option<ThresholdMetrics>,
    /// Error that ended the run early; partial artifacts are on disk.
    pub failure: Option<PipelineError>,
}

/// Runs the reconstruction of `e` with the given measurements and writes
/// `config.toml`, `history.jsonl`, snapshots and `summary.json` to `out`.
pub fn reconstruct_to_dir(
    e: &Experiment,
    files: &[MeasurementFile],
    out: &Path,
    options: &ReconstructOptions,
) -> Result<ReconstructOutcome, PipelineError> {
    fs::create_dir_all(out)?;
    let hash = config_hash(e);
    fs::write(out.join("config.toml"), format!("# config_hash = {hash}\n{}", experiment_to_string(e)))?;
    let mesh = build_square_mesh(e.working, &e.dirichlet_spec())?;
    let loads = load_cases(files, &mesh)?;
    let mut observer = ArtifactObserver {
        start: Instant::now(),
        out: out.to_path_buf(),
        hash: hash.clone(),
        snapshot_every: options.snapshot_every,
        snapshot_at: options.snapshot_at.clone(),
        history: HistoryWriter::create(&out.join("history.jsonl"), &hash)?,
        error: None,
        progress: options.progress,
    };
    let (history, mut failure) = match reconstruct(&e.run, mesh, loads, &mut observer) {
        Ok(h) => (h, None),
        Err(f) => (f.history, Some(PipelineError::Core(f.error))),
    };
    if let Some(err) = observer.error.take() {
        failure.get_or_insert(PipelineError::Io(err));
    }
    observer.history.flush()?;
    if history.last().is_some() {
        observer.snapshot(history.iterations(), &history.mesh, history.field.values())?;
        fs::write(
            out.join("final.vtk"),
            vtk_text(&history.mesh, history.field.values(), &format!("cavphase final config {hash}")),
        )?;
    }
    let metrics = threshold_and_compare(&history.mesh, history.field.values(), 0.5, &e.target).ok();
    let summary = serde_json::json!({
        "config_hash": hash,
        "name": e.name,
        "stop": history.stop.name(),
        "iterations": history.iterations(),
        "final_objective": history.last().map(|r| r.objective),
        "final_misfit": history.last().map(|r| r.misfit),
        "vertices": history.mesh.num_vertices(),
        "refinements": history.refinements.len(),
        "error": failure.as_ref().map(|f| f.to_string()),
        "metrics": metrics.as_ref().map(|m| serde_json::json!({
            "level": m.level,
            "area": m.area,
            "target_area": m.target_area,
            "centroid": m.centroid,
            "target_centroid": m.target_centroid,
            "centroid_distance": m.centroid_distance,
            "jaccard": m.jaccard,
            "components": m.components,
        })),
    });
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(io::Error::other)? + "\n",
    )?;
    Ok(ReconstructOutcome {
        history,
        metrics,
        failure,
    })
}
