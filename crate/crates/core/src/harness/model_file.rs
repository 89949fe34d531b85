//! JSON model files.
//!
//! ```json
//! {
//!   "num_types": 1,
//!   "gamma": [1],
//!   "law": { "kind": "ordered", "types": [
//!     { "entries": [ { "word": [], "prob": "2/3" }, { "word": [1, 1], "prob": "1/3" } ] }
//!   ] }
//! }
//! ```
//!
//! Types are numbered from 1. `gamma` is either a weight vector (one row of
//! Γ) or a matrix. Probabilities are `"p/q"` or decimal strings, both read
//! exactly; bare JSON numbers are accepted as floats.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::de::{self, Deserializer, Visitor};
use num_traits::ToPrimitive;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::exact::parse_rational;
use crate::pgf::{OffspringModel, OrderedWord, Polynomial, Prob, Projection, Term};
use crate::tilting::ConditionSpec;

struct ProbValue(Prob);

impl<'de> Deserialize<'de> for ProbValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = ProbValue;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a probability as \"p/q\", a decimal string or a number")
            }
            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<ProbValue, E> {
                parse_rational(s)
                    .map(|q| ProbValue(Prob::Exact(q)))
                    .map_err(|_| E::custom(format!("not a probability: {s:?}")))
            }
            fn visit_f64<E: de::Error>(self, x: f64) -> std::result::Result<ProbValue, E> {
                Ok(ProbValue(Prob::Float(x)))
            }
            fn visit_u64<E: de::Error>(self, x: u64) -> std::result::Result<ProbValue, E> {
                Ok(ProbValue(Prob::Exact(BigRational::from_integer(BigInt::from(x)))))
            }
            fn visit_i64<E: de::Error>(self, x: i64) -> std::result::Result<ProbValue, E> {
                Ok(ProbValue(Prob::Exact(BigRational::from_integer(BigInt::from(x)))))
            }
        }
        d.deserialize_any(V)
    }
}

/// Type label numbered from 1.
struct TypeLabel(usize);

impl<'de> Deserialize<'de> for TypeLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = u64::deserialize(d)?;
        if n == 0 {
            return Err(de::Error::custom("type labels start at 1"));
        }
        Ok(TypeLabel(n as usize - 1))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GammaSpec {
    Vector(Vec<i64>),
    Matrix(Vec<Vec<i64>>),
}

/// An entry of an ordered (`word`) or projection (`counts`) law.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    #[serde(default)]
    word: Option<Vec<TypeLabel>>,
    #[serde(default)]
    counts: Option<Vec<u32>>,
    prob: ProbValue,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeLaw {
    entries: Vec<Entry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TermSpec {
    exponents: Vec<u32>,
    coeff: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolySpec {
    terms: Vec<TermSpec>,
}

#[derive(Deserialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
enum LawKind {
    Ordered,
    Projection,
    ExpPoly,
}

// A plain struct rather than a tagged enum: serde then reads it in one
// pass and value errors keep their line and column.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LawSpec {
    kind: LawKind,
    #[serde(default)]
    types: Option<Vec<TypeLaw>>,
    #[serde(default)]
    polynomials: Option<Vec<PolySpec>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    #[serde(default)]
    name: Option<String>,
    num_types: usize,
    gamma: GammaSpec,
    law: LawSpec,
}

/// A model together with its conditioning.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub name: Option<String>,
    pub model: OffspringModel,
    pub condition: ConditionSpec,
}

fn parse_error(path: &str, e: &serde_json::Error) -> Error {
    // serde_json appends " at line L column C"; keep the message bare
    let msg = e.to_string();
    let message = match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    };
    Error::Parse {
        path: path.to_string(),
        message,
        line: e.line(),
        column: e.column(),
    }
}

impl ModelFile {
    pub fn parse(path: &str, text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| parse_error(path, &e))?;
        let k = spec.num_types;
        let law = spec.law;
        let field = |what: &str| Error::InvalidModel(format!("law of kind {what} needs its own entry fields only"));
        let model = match (law.kind, law.types, law.polynomials) {
            (LawKind::Ordered, Some(types), None) => OffspringModel::from_ordered(
                k,
                types
                    .into_iter()
                    .map(|t| {
                        t.entries
                            .into_iter()
                            .map(|e| match (e.word, e.counts) {
                                (Some(w), None) => Ok((OrderedWord::new(w.into_iter().map(|l| l.0).collect()), e.prob.0)),
                                _ => Err(field("ordered (word)")),
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
            )?,
            (LawKind::Projection, Some(types), None) => OffspringModel::from_projection(
                k,
                types
                    .into_iter()
                    .map(|t| {
                        t.entries
                            .into_iter()
                            .map(|e| match (e.word, e.counts) {
                                (None, Some(c)) => Ok((c, e.prob.0)),
                                _ => Err(field("projection (counts)")),
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
            )?,
            (LawKind::ExpPoly, None, Some(polynomials)) => OffspringModel::exp_poly(
                k,
                polynomials
                    .into_iter()
                    .map(|p| {
                        Polynomial::new(
                            p.terms
                                .into_iter()
                                .map(|t| Term { exponents: t.exponents, coeff: t.coeff })
                                .collect(),
                        )
                    })
                    .collect(),
            )?,
            (LawKind::ExpPoly, _, _) => return Err(field("exp_poly (polynomials)")),
            _ => return Err(Error::InvalidModel("finite laws need \"types\" and no \"polynomials\"".into())),
        };
        let rows = match spec.gamma {
            GammaSpec::Vector(v) => vec![v],
            GammaSpec::Matrix(m) => m,
        };
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidCondition(format!("every row of gamma needs {k} entries")));
        }
        let condition = ConditionSpec::from_integer_rows(&rows)?;
        Ok(ModelFile { name: spec.name, model, condition })
    }

    pub fn load(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidModel(format!("cannot read {path}: {e}")))?;
        Self::parse(path, &text)
    }

    /// Serializes back to the file format; probabilities as `p/q` strings when
    /// exact, bare numbers otherwise, so a float law reloads as a float law.
    pub fn to_json(&self) -> String {
        let k = self.model.num_types();
        let prob = |p: &Prob| match p {
            Prob::Exact(q) => serde_json::Value::String(q.to_string()),
            Prob::Float(x) => serde_json::json!(x),
        };
        let law = match (self.model.ordered_law(), self.model.projection()) {
            (Some(o), _) => serde_json::json!({
                "kind": "ordered",
                "types": (0..k).map(|i| serde_json::json!({
                    "entries": o.law(i).iter().map(|(w, p)| serde_json::json!({
                        "word": w.letters().iter().map(|l| l + 1).collect::<Vec<_>>(),
                        "prob": prob(p),
                    })).collect::<Vec<_>>()
                })).collect::<Vec<_>>()
            }),
            (None, Projection::Finite(p)) => serde_json::json!({
                "kind": "projection",
                "types": p.iter().map(|law| serde_json::json!({
                    "entries": law.iter().map(|(c, q)| serde_json::json!({
                        "counts": c, "prob": prob(q),
                    })).collect::<Vec<_>>()
                })).collect::<Vec<_>>()
            }),
            (None, Projection::ExpPoly(f)) => serde_json::json!({
                "kind": "exp_poly",
                "polynomials": f.iter().map(|p| serde_json::json!({
                    "terms": p.terms.iter().map(|t| serde_json::json!({
                        "exponents": t.exponents, "coeff": t.coeff,
                    })).collect::<Vec<_>>()
                })).collect::<Vec<_>>()
            }),
        };
        let gamma: Vec<Vec<i64>> = self
            .condition
            .gamma_matrix()
            .iter()
            .map(|r| r.iter().map(|v| v.to_integer().to_i64().unwrap_or(0)).collect())
            .collect();
        let mut doc = serde_json::Map::new();
        if let Some(n) = &self.name {
            doc.insert("name".into(), n.clone().into());
        }
        doc.insert("num_types".into(), k.into());
        doc.insert(
            "gamma".into(),
            if gamma.len() == 1 { serde_json::json!(gamma[0]) } else { serde_json::json!(gamma) },
        );
        doc.insert("law".into(), law);
        serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("plain data")
    }
}

/// Condition row entries as strings, for reports.
pub fn condition_rows(condition: &ConditionSpec) -> Vec<Vec<String>> {
    condition
        .gamma_matrix()
        .iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect()
}
