//! JSON configuration schema. Every document carries `schema_version`;
//! matrices are row-major arrays of decimals and activations are named by
//! string.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedsim::{ClientSpec, FedAvgConfig, FixedPointOptions, RateMode};
use crate::field::{FieldDef, ScalarFn};
use crate::glm::{glm_gradient, iterated_glm, iterated_glm_gd, Activation, GlmSpec};
use crate::linalg::{matrix_from_rows, Vector};
use crate::poly::{PolyField, RationalPoly};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Constant {
        value: Vec<f64>,
    },
    Linear {
        matrix: Vec<Vec<f64>>,
    },
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    Identity {
        dim: usize,
    },
    Rotation2d {
        j: u32,
    },
    /// One expression in `t` per coordinate.
    Coordwise {
        components: Vec<String>,
    },
    /// Components in `x0, x1, ...`, exact rational coefficients.
    Poly {
        components: Vec<String>,
    },
    /// Gradient of a polynomial potential in `dim` variables.
    PolyGradient {
        potential: String,
        dim: usize,
    },
    GlmGradient {
        activation: String,
        directions: Vec<Vec<f64>>,
    },
    GlmIterated {
        activation: String,
        directions: Vec<Vec<f64>>,
        k: u32,
    },
    GlmGdIterated {
        activation: String,
        directions: Vec<Vec<f64>>,
        gamma: f64,
        k: u32,
    },
    GdMap {
        inner: Box<FieldConfig>,
        gamma: f64,
    },
    Iterate {
        inner: Box<FieldConfig>,
        k: u32,
    },
    Sum {
        terms: Vec<WeightedField>,
    },
    Scale {
        factor: f64,
        field: Box<FieldConfig>,
    },
    Compose {
        outer: Box<FieldConfig>,
        inner: Box<FieldConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedField {
    #[serde(default = "one")]
    pub weight: f64,
    pub field: FieldConfig,
}

fn one() -> f64 {
    1.0
}

fn vector(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn glm_spec(activation: &str, directions: &[Vec<f64>]) -> Result<GlmSpec> {
    let act = Activation::from_name(activation)?;
    GlmSpec::new(directions.iter().map(|d| vector(d)).collect(), act)
}

impl FieldConfig {
    pub fn build(&self) -> Result<FieldDef> {
        Ok(match self {
            Self::Constant { value } => FieldDef::constant(vector(value))?,
            Self::Linear { matrix } => FieldDef::linear(matrix_from_rows(matrix)?)?,
            Self::Affine { matrix, offset } => FieldDef::affine(matrix_from_rows(matrix)?, vector(offset))?,
            Self::Identity { dim } => FieldDef::identity(*dim),
            Self::Rotation2d { j } => FieldDef::rotation2d(*j)?,
            Self::Coordwise { components } => FieldDef::coordwise(
                components
                    .iter()
                    .map(|s| ScalarFn::from_expr(s))
                    .collect::<Result<Vec<_>>>()?,
            )?,
            Self::Poly { components } => {
                let n = components.len();
                let comps = components
                    .iter()
                    .map(|s| RationalPoly::parse(s, n))
                    .collect::<Result<Vec<_>>>()?;
                FieldDef::poly(PolyField::new(comps)?)?
            }
            Self::PolyGradient { potential, dim } => {
                let f = RationalPoly::parse(potential, *dim)?;
                let vars: Vec<usize> = (0..*dim).collect();
                FieldDef::poly(PolyField::gradient(&f, &vars)?)?
            }
            Self::GlmGradient { activation, directions } => glm_gradient(&glm_spec(activation, directions)?),
            Self::GlmIterated { activation, directions, k } => iterated_glm(&glm_spec(activation, directions)?, *k)?,
            Self::GlmGdIterated {
                activation,
                directions,
                gamma,
                k,
            } => iterated_glm_gd(&glm_spec(activation, directions)?, *gamma, *k)?,
            Self::GdMap { inner, gamma } => FieldDef::gd_map(inner.build()?, *gamma)?,
            Self::Iterate { inner, k } => FieldDef::iterate(inner.build()?, *k)?,
            Self::Sum { terms } => FieldDef::sum(
                terms
                    .iter()
                    .map(|t| Ok((t.weight, t.field.build()?)))
                    .collect::<Result<Vec<_>>>()?,
            )?,
            Self::Scale { factor, field } => FieldDef::scale(*factor, field.build()?)?,
            Self::Compose { outer, inner } => FieldDef::compose(outer.build()?, inner.build()?)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDocument {
    pub schema_version: u32,
    pub field: FieldConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlmDocument {
    pub schema_version: u32,
    pub activation: String,
    pub directions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl GlmDocument {
    pub fn spec(&self) -> Result<GlmSpec> {
        glm_spec(&self.activation, &self.directions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientConfig {
    /// `½(x − b)ᵀ A (x − b)`.
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Glm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        activation: String,
        directions: Vec<Vec<f64>>,
    },
    Custom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        gradient: FieldConfig,
    },
}

impl ClientConfig {
    pub fn build(&self, index: usize) -> Result<ClientSpec> {
        let name = |l: &Option<String>| l.clone().unwrap_or_else(|| format!("client{index}"));
        match self {
            Self::Quadratic { label, a, b } => ClientSpec::quadratic(name(label), matrix_from_rows(a)?, vector(b)),
            Self::Glm {
                label,
                activation,
                directions,
            } => Ok(ClientSpec::glm(name(label), glm_spec(activation, directions)?)),
            Self::Custom { label, gradient } => Ok(ClientSpec::custom(name(label), gradient.build()?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Simulate,
    StronglyConvex,
    Convex,
}

impl RunMode {
    pub fn rate_mode(self) -> Option<RateMode> {
        match self {
            Self::Simulate => None,
            Self::StronglyConvex => Some(RateMode::StronglyConvex),
            Self::Convex => Some(RateMode::Convex),
        }
    }
}

fn simulate() -> RunMode {
    RunMode::Simulate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub clients: Vec<ClientConfig>,
    pub gamma: f64,
    pub eta: f64,
    pub k: u32,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "simulate")]
    pub mode: RunMode,
    /// Strong-convexity constant for the rate check; required in
    /// `strongly_convex` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Smoothness constant; derived from the clients when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl ExperimentConfig {
    pub fn clients(&self) -> Result<Vec<ClientSpec>> {
        self.clients.iter().enumerate().map(|(i, c)| c.build(i)).collect()
    }

    pub fn fedavg(&self) -> Result<FedAvgConfig> {
        let cfg = FedAvgConfig {
            clients: self.clients()?,
            gamma: self.gamma,
            eta: self.eta,
            k: self.k,
            rounds: self.rounds,
            x0: vector(&self.x0),
            seed: self.seed,
            fixed_point: FixedPointOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_version(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported schema_version {found} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

/// Parses JSON; syntax and schema errors report line and column.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))
}

pub fn parse_field_document(text: &str) -> Result<FieldDocument> {
    let doc: FieldDocument = parse_json(text)?;
    check_version(doc.schema_version)?;
    Ok(doc)
}

pub fn parse_glm_document(text: &str) -> Result<GlmDocument> {
    let doc: GlmDocument = parse_json(text)?;
    check_version(doc.schema_version)?;
    Ok(doc)
}

pub fn parse_experiment(text: &str) -> Result<ExperimentConfig> {
    let doc: ExperimentConfig = parse_json(text)?;
    check_version(doc.schema_version)?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip() {
        let text = r#"{"schema_version": 1, "field": {"type": "iterate", "k": 2,
            "inner": {"type": "linear", "matrix": [[1, 2], [1, -1]]}}}"#;
        let doc = parse_field_document(text).unwrap();
        let f = doc.field.build().unwrap();
        let y = f.eval(&vector(&[1.0, 0.0])).unwrap();
        assert_eq!(y, vector(&[3.0, 0.0]));
        let again: FieldDocument = parse_json(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn errors_carry_position() {
        let err = parse_field_document("{\n  \"schema_version\": 1,\n  \"field\": {\"type\": \"linear\", }\n}").unwrap_err();
        let Error::Config(msg) = err else { panic!() };
        assert!(msg.starts_with("line 3 column"), "{msg}");
        assert!(parse_field_document(r#"{"schema_version": 2, "field": {"type": "identity", "dim": 1}}"#).is_err());
        assert!(parse_field_document(r#"{"schema_version": 1, "field": {"type": "wobble"}}"#).is_err());
    }

    #[test]
    fn unknown_activation_rejected() {
        let doc = parse_glm_document(r#"{"schema_version": 1, "activation": "tanh(", "directions": [[1, 0]]}"#).unwrap();
        assert!(matches!(doc.spec(), Err(Error::Parse(_))));
    }

    #[test]
    fn all_variants_build() {
        let text = r#"{"schema_version": 1, "field": {"type": "sum", "terms": [
            {"field": {"type": "compose",
                "outer": {"type": "gd_map", "gamma": 0.1, "inner": {"type": "poly_gradient", "potential": "x0^2*x1", "dim": 2}},
                "inner": {"type": "coordwise", "components": ["sin(t)", "t^2"]}}},
            {"weight": 0.5, "field": {"type": "scale", "factor": 2, "field": {"type": "rotation2d", "j": 4}}},
            {"field": {"type": "affine", "matrix": [[1, 0], [0, 1]], "offset": [1, 1]}},
            {"field": {"type": "constant", "value": [0, 1]}},
            {"field": {"type": "poly", "components": ["x1", "x0"]}},
            {"field": {"type": "glm_gradient", "activation": "exp", "directions": [[1, 0], [1, 1]]}},
            {"field": {"type": "glm_iterated", "activation": "quadratic", "directions": [[1, 0]], "k": 2}},
            {"field": {"type": "glm_gd_iterated", "activation": "logistic-loss", "directions": [[0, 1]], "gamma": 0.5, "k": 3}},
            {"field": {"type": "identity", "dim": 2}}
        ]}}"#;
        let f = parse_field_document(text).unwrap().field.build().unwrap();
        assert_eq!(f.dim(), 2);
        assert!(f.eval(&vector(&[0.3, -0.2])).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn experiment_defaults() {
        let text = r#"{"schema_version": 1, "gamma": 0.5, "eta": 1, "k": 2, "T": 5, "x0": [1, 0],
            "clients": [{"type": "quadratic", "a": [[1, 0], [0, 1]], "b": [1, 0]},
                        {"type": "glm", "label": "g", "activation": "logistic-label:0.3", "directions": [[1, 0]]}]}"#;
        let e = parse_experiment(text).unwrap();
        assert_eq!(e.mode, RunMode::Simulate);
        assert_eq!(e.seed, 0);
        let cfg = e.fedavg().unwrap();
        assert_eq!(cfg.clients[0].label, "client0");
        assert_eq!(cfg.clients[1].label, "g");
        let bad = text.replace("\"x0\": [1, 0]", "\"x0\": [1]");
        assert!(parse_experiment(&bad).unwrap().fedavg().is_err());
    }
}
