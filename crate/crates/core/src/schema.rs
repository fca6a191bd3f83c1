//! JSON model description.
//!
//! ```json
//! {
//!   "dimension": 1,
//!   "period": [1.0],
//!   "drift": { "shape": "vector", "terms": [] },
//!   "diffusion": { "shape": "matrix", "terms": [
//!       { "m": [0], "cos": [[2.0]] },
//!       { "m": [1], "sin": [[1.0]] } ] },
//!   "jumps": [
//!     { "intensity": { "shape": "scalar", "terms": [ { "m": [0], "cos": 1.0 } ] },
//!       "sizes": { "kind": "uniformBall", "params": { "radius": 2.5 } },
//!       "symmetric": true } ]
//! }
//! ```
//!
//! Coefficients are a number for scalar fields, an array for vector fields and a
//! nested (symmetric) array for matrix fields; a missing `cos` or `sin` is zero.
//! Size laws are `{"kind": "atoms", "params": {"atoms": [{"weight": w, "y": [..]}]}}`
//! or `{"kind": "uniformBall", "params": {"radius": r}}`. Unknown keys are rejected.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field::{packed_index, Period, PeriodicField, Shape, Term};
use crate::model::{Atom, JumpFamily, Model, SizeDistribution, SizeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dimension: usize,
    pub period: Vec<f64>,
    #[serde(default)]
    pub drift: Option<FieldSpec>,
    pub diffusion: FieldSpec,
    #[serde(default)]
    pub jumps: Vec<JumpSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub shape: String,
    #[serde(default)]
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub m: Vec<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub intensity: FieldSpec,
    pub sizes: SizesSpec,
    #[serde(default)]
    pub symmetric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "camelCase", deny_unknown_fields)]
pub enum SizesSpec {
    Atoms { atoms: Vec<AtomSpec> },
    UniformBall { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub weight: f64,
    pub y: Vec<f64>,
}

/// Parse a model description (not yet validated).
pub fn parse_model(json: &str) -> Result<Model> {
    let spec: ModelSpec = serde_json::from_str(json).map_err(|e| Error::Parse(format!("model: {e}")))?;
    spec.to_model()
}

impl ModelSpec {
    pub fn to_model(&self) -> Result<Model> {
        let period = Period::new(self.period.clone())?;
        if period.dim() != self.dimension {
            return Err(Error::Parse(format!(
                "period: {} components for dimension {}",
                period.dim(),
                self.dimension
            )));
        }
        let d = self.dimension;
        let drift = self
            .drift
            .as_ref()
            .map(|f| f.to_field(&period, Shape::Vector(d), "drift"))
            .transpose()?;
        let diffusion = self.diffusion.to_field(&period, Shape::Matrix(d), "diffusion")?;
        let jumps = self
            .jumps
            .iter()
            .enumerate()
            .map(|(k, j)| {
                let intensity = j.intensity.to_field(&period, Shape::Scalar, &format!("jumps[{k}].intensity"))?;
                let kind = match &j.sizes {
                    SizesSpec::Atoms { atoms } => SizeKind::Atoms(
                        atoms.iter().map(|a| Atom { weight: a.weight, y: a.y.clone() }).collect(),
                    ),
                    SizesSpec::UniformBall { radius } => SizeKind::UniformBall { radius: *radius },
                };
                Ok(JumpFamily { intensity, sizes: SizeDistribution { kind, symmetric: j.symmetric } })
            })
            .collect::<Result<Vec<_>>>()?;
        Model::new(period, drift, diffusion, jumps)
    }

    pub fn from_model(model: &Model) -> Self {
        Self {
            dimension: model.dim(),
            period: model.period().as_slice().to_vec(),
            drift: Some(FieldSpec::from_field(model.drift())),
            diffusion: FieldSpec::from_field(model.diffusion()),
            jumps: model
                .jumps()
                .iter()
                .map(|f| JumpSpec {
                    intensity: FieldSpec::from_field(&f.intensity),
                    sizes: match &f.sizes.kind {
                        SizeKind::Atoms(a) => SizesSpec::Atoms {
                            atoms: a.iter().map(|a| AtomSpec { weight: a.weight, y: a.y.clone() }).collect(),
                        },
                        SizeKind::UniformBall { radius } => SizesSpec::UniformBall { radius: *radius },
                    },
                    symmetric: f.sizes.symmetric,
                })
                .collect(),
        }
    }
}

impl FieldSpec {
    fn to_field(&self, period: &Period, want: Shape, path: &str) -> Result<PeriodicField> {
        let d = period.dim();
        let shape = match self.shape.as_str() {
            "scalar" => Shape::Scalar,
            "vector" => Shape::Vector(d),
            "matrix" => Shape::Matrix(d),
            other => return Err(Error::Parse(format!("{path}.shape: unknown shape {other:?}"))),
        };
        if shape != want {
            return Err(Error::Parse(format!("{path}.shape: expected {}, found {}", want.name(), shape.name())));
        }
        let terms = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let at = |part: &str| format!("{path}.terms[{i}].{part}");
                if t.m.len() != d {
                    return Err(Error::Parse(format!("{}: expected {d} frequencies, found {}", at("m"), t.m.len())));
                }
                Ok(Term {
                    freq: t.m.clone(),
                    cos: coeffs(t.cos.as_ref(), shape, &at("cos"))?,
                    sin: coeffs(t.sin.as_ref(), shape, &at("sin"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PeriodicField::new(shape, period.clone(), terms).map_err(|e| Error::Parse(format!("{path}: {e}")))
    }

    fn from_field(f: &PeriodicField) -> Self {
        let shape = f.shape();
        let to_value = |packed: &[f64]| -> Value {
            match shape {
                Shape::Scalar => Value::from(packed[0]),
                Shape::Vector(_) => Value::from(packed.to_vec()),
                Shape::Matrix(d) => Value::from(
                    (0..d)
                        .map(|i| (0..d).map(|j| packed[packed_index(d, i, j)]).collect::<Vec<f64>>())
                        .collect::<Vec<_>>(),
                ),
            }
        };
        Self {
            shape: match shape {
                Shape::Scalar => "scalar",
                Shape::Vector(_) => "vector",
                Shape::Matrix(_) => "matrix",
            }
            .into(),
            terms: f
                .terms()
                .iter()
                .map(|t| TermSpec {
                    m: t.freq.clone(),
                    cos: t.cos.iter().any(|v| *v != 0.0).then(|| to_value(&t.cos)),
                    sin: t.sin.iter().any(|v| *v != 0.0).then(|| to_value(&t.sin)),
                })
                .collect(),
        }
    }
}

fn coeffs(v: Option<&Value>, shape: Shape, path: &str) -> Result<Vec<f64>> {
    let n = shape.packed_len();
    let Some(v) = v else { return Ok(vec![0.0; n]) };
    let bad = |what: &str| Error::Parse(format!("{path}: {what}"));
    let num = |x: &Value| x.as_f64().ok_or_else(|| bad("expected a number"));
    match shape {
        Shape::Scalar => Ok(vec![num(v)?]),
        Shape::Vector(d) => {
            let arr = v.as_array().ok_or_else(|| bad("expected an array"))?;
            if arr.len() != d {
                return Err(bad(&format!("expected {d} entries, found {}", arr.len())));
            }
            arr.iter().map(num).collect()
        }
        Shape::Matrix(d) => {
            let rows = v.as_array().ok_or_else(|| bad("expected a nested array"))?;
            if rows.len() != d {
                return Err(bad(&format!("expected {d} rows, found {}", rows.len())));
            }
            let mut full = DMatrix::zeros(d, d);
            for (i, r) in rows.iter().enumerate() {
                let r = r.as_array().ok_or_else(|| bad("expected a nested array"))?;
                if r.len() != d {
                    return Err(bad(&format!("row {i}: expected {d} entries, found {}", r.len())));
                }
                for (j, x) in r.iter().enumerate() {
                    full[(i, j)] = num(x)?;
                }
            }
            let mut packed = vec![0.0; n];
            for i in 0..d {
                for j in i..d {
                    if full[(i, j)] != full[(j, i)] {
                        return Err(bad(&format!("matrix not symmetric at ({i},{j})")));
                    }
                    packed[packed_index(d, i, j)] = full[(i, j)];
                }
            }
            Ok(packed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HARMONIC: &str = r#"{
        "dimension": 1, "period": [1.0],
        "diffusion": {"shape": "matrix", "terms": [{"m": [0], "cos": [[2.0]]}, {"m": [1], "sin": [[1.0]]}]}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let m = parse_model(HARMONIC).unwrap();
        assert!((m.diffusion().eval_matrix(&[0.25]).unwrap()[(0, 0)] - 3.0).abs() < 1e-15);
        let spec = ModelSpec::from_model(&m);
        assert_eq!(spec.to_model().unwrap(), m);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = HARMONIC.replace("\"dimension\"", "\"colour\": 1, \"dimension\"");
        assert!(matches!(parse_model(&bad), Err(Error::Parse(_))));
        let bad = HARMONIC.replace("\"m\": [0], \"cos\"", "\"m\": [0], \"tan\": 1, \"cos\"");
        assert!(parse_model(&bad).is_err());
    }

    #[test]
    fn reports_field_paths() {
        let bad = HARMONIC.replace("[[2.0]]", "[2.0]");
        let msg = parse_model(&bad).unwrap_err().to_string();
        assert!(msg.contains("diffusion.terms[0].cos"), "{msg}");
    }

    #[test]
    fn parses_jump_families() {
        let json = r#"{
            "dimension": 2, "period": [1.0, 1.0],
            "diffusion": {"shape": "matrix", "terms": [{"m": [0, 0], "cos": [[1.0, 0.0], [0.0, 1.0]]}]},
            "jumps": [
              {"intensity": {"shape": "scalar", "terms": [{"m": [0, 0], "cos": 1.0}]},
               "sizes": {"kind": "atoms", "params": {"atoms": [{"weight": 0.5, "y": [1.0, 0.0]}, {"weight": 0.5, "y": [-1.0, 0.0]}]}},
               "symmetric": true},
              {"intensity": {"shape": "scalar", "terms": [{"m": [0, 0], "cos": 2.0}]},
               "sizes": {"kind": "uniformBall", "params": {"radius": 0.5}}}
            ]
        }"#;
        let m = parse_model(json).unwrap();
        assert_eq!(m.jumps().len(), 2);
        assert!(m.jumps()[0].sizes.is_symmetric());
        let back = ModelSpec::from_model(&m).to_model().unwrap();
        assert_eq!(back, m);
    }
}
