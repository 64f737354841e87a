//! Body description files.
//!
//! ```json
//! {"type": "cube", "dim": 2, "side": 1.0}
//! {"type": "vpolytope", "dim": 2, "vertices": [[0,0],[1,0],[0,1]]}
//! {"affine": {"matrix": [[2,0],[0,0.5]], "shift": [0,0], "base": {"type": "ball", "dim": 2}}}
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ConvexBody;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyKind {
    Cube,
    Ball,
    Simplex,
    Vpolytope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveSpec {
    #[serde(rename = "type")]
    pub kind: BodyKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub matrix: Vec<Vec<f64>>,
    pub shift: Vec<f64>,
    pub base: Box<BodySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineWrapper {
    pub affine: AffineSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BodySpec {
    Affine(AffineWrapper),
    Primitive(PrimitiveSpec),
}

impl BodySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid body description: {e}")))
    }

    pub fn build(&self) -> Result<ConvexBody> {
        match self {
            BodySpec::Primitive(p) => {
                let extra = |name: &str, present: bool| {
                    if present {
                        Err(Error::Config(format!(
                            "field '{name}' is not valid for {:?}",
                            p.kind
                        )))
                    } else {
                        Ok(())
                    }
                };
                match p.kind {
                    BodyKind::Cube => {
                        extra("radius", p.radius.is_some())?;
                        extra("vertices", p.vertices.is_some())?;
                        ConvexBody::cube(p.dim, p.side.unwrap_or(1.0))
                    }
                    BodyKind::Ball => {
                        extra("side", p.side.is_some())?;
                        extra("vertices", p.vertices.is_some())?;
                        ConvexBody::ball(p.dim, p.radius.unwrap_or(1.0))
                    }
                    BodyKind::Simplex => {
                        extra("side", p.side.is_some())?;
                        extra("radius", p.radius.is_some())?;
                        extra("vertices", p.vertices.is_some())?;
                        ConvexBody::regular_simplex(p.dim)
                    }
                    BodyKind::Vpolytope => {
                        extra("side", p.side.is_some())?;
                        extra("radius", p.radius.is_some())?;
                        let verts = p
                            .vertices
                            .clone()
                            .ok_or_else(|| Error::Config("vpolytope needs 'vertices'".into()))?;
                        if verts.iter().any(|v| v.len() != p.dim) {
                            return Err(Error::Config(format!(
                                "vertices must have dimension {}",
                                p.dim
                            )));
                        }
                        ConvexBody::polytope(verts)
                    }
                }
            }
            BodySpec::Affine(w) => {
                let a = &w.affine;
                let base = a.base.build()?;
                let n = base.dim();
                if a.matrix.len() != n || a.matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("affine matrix must be {n}x{n}")));
                }
                let m = DMatrix::from_fn(n, n, |i, j| a.matrix[i][j]);
                base.affine(m, a.shift.clone())
            }
        }
    }

    pub fn from_body(body: &ConvexBody) -> Self {
        match body {
            ConvexBody::Cube { dim, side } => BodySpec::Primitive(PrimitiveSpec {
                kind: BodyKind::Cube,
                dim: *dim,
                side: Some(*side),
                radius: None,
                vertices: None,
            }),
            ConvexBody::Ball { dim, radius } => BodySpec::Primitive(PrimitiveSpec {
                kind: BodyKind::Ball,
                dim: *dim,
                side: None,
                radius: Some(*radius),
                vertices: None,
            }),
            ConvexBody::Simplex(p) => BodySpec::Primitive(PrimitiveSpec {
                kind: BodyKind::Simplex,
                dim: p.dim(),
                side: None,
                radius: None,
                vertices: None,
            }),
            ConvexBody::Polytope(p) => BodySpec::Primitive(PrimitiveSpec {
                kind: BodyKind::Vpolytope,
                dim: p.dim(),
                side: None,
                radius: None,
                vertices: Some(p.vertices().to_vec()),
            }),
            ConvexBody::Affine(a) => {
                let n = a.matrix.nrows();
                BodySpec::Affine(AffineWrapper {
                    affine: AffineSpec {
                        matrix: (0..n)
                            .map(|i| (0..n).map(|j| a.matrix[(i, j)]).collect())
                            .collect(),
                        shift: a.shift.clone(),
                        base: Box::new(BodySpec::from_body(&a.base)),
                    },
                })
            }
        }
    }
}

impl ConvexBody {
    pub fn from_json(text: &str) -> Result<Self> {
        BodySpec::from_json(text)?.build()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&BodySpec::from_body(self))?)
    }
}
