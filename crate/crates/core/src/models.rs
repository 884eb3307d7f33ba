//! Potential models: named fundamental equations `S(x)` in a radiant chart.
//!
//! The potential of the Hessian metric is always `Φ = -S`. Model files carry
//! the entropy; the sign flip happens here and nowhere else.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Ast, ExprError, Scope};
use crate::jet::Jet;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("in {field}: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },
    #[error("unknown builtin model '{0}'")]
    UnknownBuiltin(String),
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("parameter {name} = {value} must be positive")]
    InvalidParameter { name: String, value: f64 },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub name: String,
    pub coordinates: Vec<String>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    pub entropy: String,
    #[serde(default)]
    pub domain: Vec<String>,
}

/// Marker for the chart convention: model coordinates are a radiant chart,
/// so the radiant field has components `ρ^i = x^i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RadiantChart;

/// A validated fundamental equation.
#[derive(Debug, Clone)]
pub struct PotentialModel {
    name: String,
    coordinates: Vec<String>,
    parameters: BTreeMap<String, f64>,
    entropy_src: String,
    entropy: Ast,
    domain_src: Vec<String>,
    domain: Vec<Ast>,
}

impl PotentialModel {
    pub fn new(doc: ModelDocument) -> Result<Self, ModelError> {
        if doc.coordinates.is_empty() {
            return Err(ModelError::Invalid("no coordinates".into()));
        }
        if doc.coordinates.len() > crate::jet::MAX_DIM {
            return Err(ModelError::Invalid(format!(
                "{} coordinates exceed the maximum of {}",
                doc.coordinates.len(),
                crate::jet::MAX_DIM
            )));
        }
        for (i, c) in doc.coordinates.iter().enumerate() {
            if doc.coordinates[..i].contains(c) {
                return Err(ModelError::Invalid(format!("duplicate coordinate '{c}'")));
            }
            if doc.parameters.contains_key(c) {
                return Err(ModelError::Invalid(format!(
                    "'{c}' is both a coordinate and a parameter"
                )));
            }
            if !is_identifier(c) {
                return Err(ModelError::Invalid(format!("'{c}' is not an identifier")));
            }
        }
        for (p, v) in &doc.parameters {
            if !is_identifier(p) {
                return Err(ModelError::Invalid(format!("'{p}' is not an identifier")));
            }
            if !v.is_finite() {
                return Err(ModelError::Invalid(format!("parameter {p} is not finite")));
            }
        }
        let params: Vec<String> = doc.parameters.keys().cloned().collect();
        let compile = |field: String, src: &str| -> Result<Ast, ModelError> {
            let ast = expr::parse(src).map_err(|e| ModelError::Expr {
                field: field.clone(),
                source: e.into(),
            })?;
            expr::validate(&ast, &doc.coordinates, &params)
                .map_err(|source| ModelError::Expr { field, source })?;
            Ok(ast)
        };
        let entropy = compile("entropy".into(), &doc.entropy)?;
        let domain = doc
            .domain
            .iter()
            .enumerate()
            .map(|(i, src)| compile(format!("domain[{i}]"), src))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PotentialModel {
            name: doc.name,
            coordinates: doc.coordinates,
            parameters: doc.parameters,
            entropy_src: doc.entropy,
            entropy,
            domain_src: doc.domain,
            domain,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coordinates(&self) -> &[String] {
        &self.coordinates
    }

    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    pub fn parameters(&self) -> &BTreeMap<String, f64> {
        &self.parameters
    }

    pub fn entropy_expr(&self) -> &Ast {
        &self.entropy
    }

    pub fn entropy_source(&self) -> &str {
        &self.entropy_src
    }

    pub fn chart(&self) -> RadiantChart {
        RadiantChart
    }

    pub fn scope(&self) -> Scope<'_> {
        Scope::new(&self.coordinates, &self.parameters)
    }

    pub fn document(&self) -> ModelDocument {
        ModelDocument {
            name: self.name.clone(),
            coordinates: self.coordinates.clone(),
            parameters: self.parameters.clone(),
            entropy: self.entropy_src.clone(),
            domain: self.domain_src.clone(),
        }
    }

    /// Copy of the model with `term` (an expression in the same scope)
    /// added to the entropy.
    pub fn with_entropy_term(&self, name: &str, term: &str) -> Result<Self, ModelError> {
        let mut doc = self.document();
        doc.name = name.to_string();
        doc.entropy = format!("({}) + ({})", self.entropy_src, term);
        PotentialModel::new(doc)
    }

    /// True iff every domain constraint is strictly positive at `point`.
    pub fn domain_check<T: Real>(&self, point: &[T]) -> bool {
        if point.len() != self.dim() || point.iter().any(|x| !x.is_finite()) {
            return false;
        }
        let scope = self.scope();
        self.domain
            .iter()
            .all(|c| matches!(expr::eval_scalar(c, point, &scope), Ok(v) if v > T::zero()))
    }

    pub fn entropy<T: Real>(&self, point: &[T]) -> Result<T, ExprError> {
        expr::eval_scalar(&self.entropy, point, &self.scope())
    }

    /// Jet of the potential `Φ = -S`.
    pub fn potential_jet<T: Real>(&self, point: &[T], order: usize) -> Result<Jet<T>, ExprError> {
        Ok(expr::eval_jet(&self.entropy, point, &self.scope(), order)?.neg())
    }

    /// Jet of `Φ` with the coordinates supplied as jets (for pullbacks).
    pub fn potential_jet_with_inputs<T: Real>(
        &self,
        inputs: &[Jet<T>],
    ) -> Result<Jet<T>, ExprError> {
        Ok(expr::eval_with_inputs(&self.entropy, inputs, &self.scope())?.neg())
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn load_model(document: &str) -> Result<PotentialModel, ModelError> {
    let doc: ModelDocument =
        serde_json::from_str(document).map_err(|e| ModelError::Schema(e.to_string()))?;
    PotentialModel::new(doc)
}

pub fn load_model_file(path: &Path) -> Result<PotentialModel, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_model(&text)
}

/// The shipped models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    IdealGas,
    Paramagnet,
    KerrNewmanRadiant,
    KerrNewmanNaive,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [
        Builtin::IdealGas,
        Builtin::Paramagnet,
        Builtin::KerrNewmanRadiant,
        Builtin::KerrNewmanNaive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::IdealGas => "ideal_gas",
            Builtin::Paramagnet => "paramagnet",
            Builtin::KerrNewmanRadiant => "kerr_newman_radiant",
            Builtin::KerrNewmanNaive => "kerr_newman_naive",
        }
    }

    pub fn from_name(name: &str) -> Result<Builtin, ModelError> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| ModelError::UnknownBuiltin(name.to_string()))
    }

    /// Whether the potential is extensive up to a constant in its chart.
    pub fn is_extensive(self) -> bool {
        !matches!(self, Builtin::KerrNewmanNaive)
    }

    fn document(self) -> ModelDocument {
        let strs = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let params = |v: &[(&str, f64)]| {
            v.iter()
                .map(|(k, x)| (k.to_string(), *x))
                .collect::<BTreeMap<_, _>>()
        };
        match self {
            Builtin::IdealGas => ModelDocument {
                name: self.name().into(),
                coordinates: strs(&["U", "V", "N"]),
                parameters: params(&[("R", 1.0), ("c", 1.5), ("K", 1.0), ("S0", 0.0)]),
                entropy: "N*R*ln(K*V*U^c*N^(-(c+1)))+S0".into(),
                domain: strs(&["U", "V", "N"]),
            },
            // inverse of U = N R T0 exp(S/(N R) + I^2/(N^2 I0^2))
            Builtin::Paramagnet => ModelDocument {
                name: self.name().into(),
                coordinates: strs(&["U", "I", "N"]),
                parameters: params(&[("R", 1.0), ("T0", 1.0), ("I0", 1.0)]),
                entropy: "N*R*(ln(U/(N*R*T0)) - I^2/(N^2*I0^2))".into(),
                domain: strs(&["U", "N"]),
            },
            // chart (u, q, j) = (M^2, Q^2, J)
            Builtin::KerrNewmanRadiant => ModelDocument {
                name: self.name().into(),
                coordinates: strs(&["u", "q", "j"]),
                parameters: BTreeMap::new(),
                entropy: "(1/4)*(u + sqrt(u^2 - q*u - j^2) - q/2)".into(),
                domain: strs(&["u", "u^2 - q*u - j^2"]),
            },
            Builtin::KerrNewmanNaive => ModelDocument {
                name: self.name().into(),
                coordinates: strs(&["M", "Q", "J"]),
                parameters: BTreeMap::new(),
                entropy: "(1/4)*(M^2 + M^2*sqrt(1 - Q^2/M^2 - J^2/M^4) - Q^2/2)".into(),
                domain: strs(&["M", "1 - Q^2/M^2 - J^2/M^4"]),
            },
        }
    }

    fn positive_parameters(self) -> &'static [&'static str] {
        match self {
            Builtin::IdealGas => &["R", "c", "K"],
            Builtin::Paramagnet => &["R", "T0", "I0"],
            Builtin::KerrNewmanRadiant | Builtin::KerrNewmanNaive => &[],
        }
    }
}

/// A shipped model with the given parameter overrides.
pub fn builtin(name: &str, overrides: &[(&str, f64)]) -> Result<PotentialModel, ModelError> {
    let which = Builtin::from_name(name)?;
    let mut doc = which.document();
    for &(k, v) in overrides {
        match doc.parameters.get_mut(k) {
            Some(slot) => *slot = v,
            None => return Err(ModelError::UnknownParameter(k.to_string())),
        }
    }
    for &p in which.positive_parameters() {
        let v = doc.parameters[p];
        if !(v > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: p.to_string(),
                value: v,
            });
        }
    }
    PotentialModel::new(doc)
}
