//! A complete experiment: run parameters, meshes, target geometry and loads.

use std::fmt;

use cavphase_core::elasticity::Traction;
use cavphase_core::inversion::RunConfig;
use cavphase_core::mesh::{CavityShape, DirichletSpec, Side};
use cavphase_core::synth::{GeneratorConfig, NoiseSpec};

use crate::expr::{parse_traction_expression, ParseError, TractionExpr};

#[derive(Clone, Debug, PartialEq)]
pub struct LoadSpec {
    pub id: String,
    pub expr: TractionExpr,
}

impl LoadSpec {
    pub fn parse(id: &str, text: &str) -> Result<Self, ParseError> {
        Ok(Self {
            id: id.to_string(),
            expr: parse_traction_expression(text)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub run: RunConfig,
    /// Cells per side of the working mesh.
    pub working: usize,
    /// Cells per side of the synthetic-data mesh.
    pub generator: usize,
    pub dirichlet: Vec<Side>,
    pub target: CavityShape,
    pub loads: Vec<LoadSpec>,
    pub noise: NoiseSpec,
}

impl Experiment {
    pub fn dirichlet_spec(&self) -> DirichletSpec {
        DirichletSpec::sides(&self.dirichlet)
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let mut g = GeneratorConfig::new(self.generator, self.dirichlet_spec());
        g.solver = self.run.solver;
        g
    }

    pub fn tractions(&self) -> Vec<(String, Traction)> {
        self.loads.iter().map(|l| (l.id.clone(), l.expr.to_traction())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeError(pub String);

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bad shape: {}", self.0)
    }
}

impl std::error::Error for ShapeError {}

/// Text form: `disk cx cy r`, `square cx cy half_side`, `polygon x1 y1 x2 y2 ...`;
/// several shapes are joined with `;`.
pub fn shape_to_string(shape: &CavityShape) -> String {
    match shape {
        CavityShape::Disk { center, radius } => format!("disk {} {} {}", center[0], center[1], radius),
        CavityShape::AxisSquare { center, half_side } => {
            format!("square {} {} {}", center[0], center[1], half_side)
        }
        CavityShape::Polygon(vs) => {
            let mut s = String::from("polygon");
            for v in vs {
                s.push_str(&format!(" {} {}", v[0], v[1]));
            }
            s
        }
        CavityShape::Union(parts) => parts.iter().map(shape_to_string).collect::<Vec<_>>().join("; "),
    }
}

pub fn parse_shape(text: &str) -> Result<CavityShape, ShapeError> {
    let parts: Vec<&str> = text.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
    if parts.is_empty() {
        return Err(ShapeError("empty shape".into()));
    }
    let mut shapes = parts.into_iter().map(parse_one).collect::<Result<Vec<_>, _>>()?;
    Ok(if shapes.len() == 1 {
        shapes.remove(0)
    } else {
        CavityShape::Union(shapes)
    })
}

fn parse_one(text: &str) -> Result<CavityShape, ShapeError> {
    let mut words = text.split_whitespace();
    let kind = words.next().unwrap_or_default();
    let nums = words
        .map(|w| w.parse::<f64>().map_err(|_| ShapeError(format!("'{w}' is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    match (kind, nums.len()) {
        ("disk", 3) => Ok(CavityShape::Disk {
            center: [nums[0], nums[1]],
            radius: nums[2],
        }),
        ("square", 3) => Ok(CavityShape::AxisSquare {
            center: [nums[0], nums[1]],
            half_side: nums[2],
        }),
        ("polygon", n) if n >= 6 && n % 2 == 0 => Ok(CavityShape::Polygon(nums.chunks(2).map(|c| [c[0], c[1]]).collect())),
        _ => Err(ShapeError(format!("cannot read '{text}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_round_trip() {
        let s = CavityShape::Union(vec![
            CavityShape::AxisSquare {
                center: [-0.35, 0.3],
                half_side: 0.2,
            },
            CavityShape::Disk {
                center: [0.35, -0.2],
                radius: 1.0 / 3.0,
            },
            CavityShape::Polygon(vec![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]]),
        ]);
        assert_eq!(parse_shape(&shape_to_string(&s)).unwrap(), s);
        assert!(parse_shape("disk 1 2").is_err());
        assert!(parse_shape("blob 1 2 3").is_err());
        assert!(parse_shape("polygon 0 0 1 1 1").is_err());
    }
}
