//! On-disk formats: measurement tables, legacy VTK, CSV and JSON lines.
//! Every file names the config hash it was produced under.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use cavphase_core::inversion::{gradient_indicator, IterationRecord, RefinementEvent};
use cavphase_core::mesh::{Point, TriMesh};
use cavphase_core::synth::{NoiseScaling, NoiseSpec};

const MEASUREMENT_MAGIC: &str = "# cavphase measurement v1";

/// Boundary trace of one load case as written by `generate`: the Σ_N nodes
/// of the generator mesh with their (possibly noisy) displacements.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementFile {
    pub load_id: String,
    pub traction: String,
    pub generator_resolution: usize,
    pub working_resolution: usize,
    pub dirichlet: String,
    pub target: String,
    pub noise: NoiseSpec,
    pub config_hash: String,
    pub points: Vec<Point>,
    pub values: Vec<[f64; 2]>,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

impl MeasurementFile {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MEASUREMENT_MAGIC}");
        let header = [
            ("load_id", self.load_id.clone()),
            ("traction", self.traction.clone()),
            ("generator_resolution", self.generator_resolution.to_string()),
            ("working_resolution", self.working_resolution.to_string()),
            ("dirichlet", self.dirichlet.clone()),
            ("target", self.target.clone()),
            ("noise_level", format!("{:e}", self.noise.level)),
            ("noise_seed", self.noise.seed.to_string()),
            ("noise_scaling", self.noise.scaling.name().to_string()),
            ("config_hash", self.config_hash.clone()),
        ];
        for (k, v) in header {
            let _ = writeln!(s, "# {k} = {v}");
        }
        let _ = writeln!(s, "x y ux uy");
        for (p, u) in self.points.iter().zip(&self.values) {
            // `{:e}` prints the shortest text that reads back to the same bits.
            let _ = writeln!(s, "{:e} {:e} {:e} {:e}", p[0], p[1], u[0], u[1]);
        }
        s
    }

    pub fn parse(text: &str) -> io::Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MEASUREMENT_MAGIC) {
            return Err(bad("not a measurement file"));
        }
        let mut fields = std::collections::HashMap::new();
        let mut points = Vec::new();
        let mut values = Vec::new();
        let mut in_table = false;
        for (no, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if !in_table {
                if let Some(rest) = line.strip_prefix('#') {
                    let (k, v) = rest
                        .split_once('=')
                        .ok_or_else(|| bad(format!("line {}: malformed header", no + 2)))?;
                    fields.insert(k.trim().to_string(), v.trim().to_string());
                    continue;
                }
                if line == "x y ux uy" {
                    in_table = true;
                    continue;
                }
                return Err(bad(format!("line {}: expected header or column names", no + 2)));
            }
            let nums = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", no + 2)))?;
            if nums.len() != 4 {
                return Err(bad(format!("line {}: expected 4 columns", no + 2)));
            }
            points.push([nums[0], nums[1]]);
            values.push([nums[2], nums[3]]);
        }
        let mut get = |k: &str| fields.remove(k).ok_or_else(|| bad(format!("missing header '{k}'")));
        let num = |s: String, k: &str| s.parse().map_err(|_| bad(format!("bad value for '{k}'")));
        let load_id = get("load_id")?;
        let traction = get("traction")?;
        let generator_resolution = num(get("generator_resolution")?, "generator_resolution")?;
        let working_resolution = num(get("working_resolution")?, "working_resolution")?;
        let dirichlet = get("dirichlet")?;
        let target = get("target")?;
        let level: f64 = get("noise_level")?.parse().map_err(|_| bad("bad noise_level"))?;
        let seed: u64 = get("noise_seed")?.parse().map_err(|_| bad("bad noise_seed"))?;
        let scaling = NoiseScaling::from_name(&get("noise_scaling")?).ok_or_else(|| bad("bad noise_scaling"))?;
        let config_hash = get("config_hash")?;
        if points.len() < 2 {
            return Err(bad("measurement table has fewer than two nodes"));
        }
        Ok(Self {
            load_id,
            traction,
            generator_resolution,
            working_resolution,
            dirichlet,
            target,
            noise: NoiseSpec { level, seed, scaling },
            config_hash,
            points,
            values,
        })
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_text())
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        Self::parse(&fs::read_to_string(path)?).map_err(|e| bad(format!("{}: {e}", path.display())))
    }
}

/// Legacy VTK unstructured grid with the phase field as point data and the
/// refinement indicator as cell data.
pub fn vtk_text(mesh: &TriMesh, v: &[f64], title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.num_vertices());
    let _ = writeln!(s, "SCALARS v double 1\nLOOKUP_TABLE default");
    for x in v {
        let _ = writeln!(s, "{x:e}");
    }
    let _ = writeln!(s, "CELL_DATA {nt}");
    let _ = writeln!(s, "SCALARS gradient_indicator double 1\nLOOKUP_TABLE default");
    for x in gradient_indicator(mesh, v) {
        let _ = writeln!(s, "{x:e}");
    }
    s
}

/// Nodal table `x,y,v` preceded by a comment line with the config hash.
pub fn csv_text(mesh: &TriMesh, v: &[f64], hash: &str) -> String {
    let mut s = format!("# config_hash={hash}\nx,y,v\n");
    for (p, x) in mesh.vertices().iter().zip(v) {
        let _ = writeln!(s, "{:e},{:e},{:e}", p[0], p[1], x);
    }
    s
}

#[derive(Serialize)]
struct RecordLine<'a> {
    iteration: usize,
    objective: f64,
    misfit: f64,
    gl_energy: f64,
    step_norm: Option<f64>,
    lower: usize,
    upper: usize,
    inactive: usize,
    pdas_iterations: usize,
    vertices: usize,
    epsilon: f64,
    tau: f64,
    backtracks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    event: Option<&'a str>,
}

/// Streams the run history as JSON lines. The first line carries the
/// config hash; wall-clock times are left out so reruns are identical.
/// The state before the first step is tagged `"event": "initial"`.
pub struct HistoryWriter {
    out: BufWriter<fs::File>,
}

impl HistoryWriter {
    pub fn create(path: &Path, hash: &str) -> io::Result<Self> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{}", serde_json::json!({ "config_hash": hash }))?;
        Ok(Self { out })
    }

    pub fn record(&mut self, r: &IterationRecord) -> io::Result<()> {
        let line = RecordLine {
            iteration: r.iteration,
            objective: r.objective,
            misfit: r.misfit,
            gl_energy: r.gl_energy,
            step_norm: r.step_norm,
            lower: r.lower,
            upper: r.upper,
            inactive: r.inactive,
            pdas_iterations: r.pdas_iterations,
            vertices: r.vertices,
            epsilon: r.epsilon,
            tau: r.tau,
            backtracks: r.backtracks,
            event: (r.iteration == 0).then_some("initial"),
        };
        writeln!(self.out, "{}", serde_json::to_string(&line).map_err(io::Error::other)?)
    }

    pub fn refinement(&mut self, e: &RefinementEvent) -> io::Result<()> {
        let v = serde_json::json!({
            "event": "refinement",
            "iteration": e.iteration,
            "old_vertices": e.old_vertices,
            "new_vertices": e.new_vertices,
            "misfit_before": e.misfit_before,
            "misfit_after": e.misfit_after,
        });
        writeln!(self.out, "{v}")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cavphase_core::mesh::{build_square_mesh, DirichletSpec};

    #[test]
    fn measurement_round_trip_is_bit_exact() {
        let m = MeasurementFile {
            load_id: "g1".into(),
            traction: "(0, 1/10 - 3/10*y)".into(),
            generator_resolution: 64,
            working_resolution: 32,
            dirichlet: "bottom".into(),
            target: "disk 0.2 0.1 0.35".into(),
            noise: NoiseSpec::new(2.0, 7).unwrap(),
            config_hash: "0123456789abcdef".into(),
            points: vec![[-1.0, -1.0], [1.0 / 3.0, -1.0], [1.0, 0.1 + 0.2]],
            values: vec![[1e-300, -0.0], [std::f64::consts::PI, -2.5e-7], [f64::MIN_POSITIVE, 1.0]],
        };
        let back = MeasurementFile::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.values.iter().zip(&m.values) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    #[test]
    fn malformed_measurements_are_rejected() {
        assert!(MeasurementFile::parse("hello").is_err());
        let text = format!("{MEASUREMENT_MAGIC}\n# load_id = a\nx y ux uy\n0 0 0\n");
        assert!(MeasurementFile::parse(&text).is_err());
    }

    #[test]
    fn vtk_has_consistent_counts() {
        let mesh = build_square_mesh(3, &DirichletSpec::bottom()).unwrap();
        let v = vec![0.5; mesh.num_vertices()];
        let text = vtk_text(&mesh, &v, "snapshot config abc");
        assert!(text.contains(&format!("POINTS {} double", mesh.num_vertices())));
        assert!(text.contains(&format!("CELLS {} {}", mesh.num_triangles(), 4 * mesh.num_triangles())));
        let lines = text.lines().count();
        assert_eq!(lines, 2 + 2 + 1 + mesh.num_vertices() + 1 + 2 * mesh.num_triangles() + 2 + 2 + mesh.num_vertices() + 3 + mesh.num_triangles());
        let csv = csv_text(&mesh, &v, "abc");
        assert_eq!(csv.lines().count(), 2 + mesh.num_vertices());
    }
}
